//! Differentiable coverage proxy and its subgradient descent.
//!
//! The proxy replaces the hard count of covered tasks with
//!
//! ```text
//! Σ_i ReLU( Σ_k softmax(w_i)_k · ‖θ_k − θ_i‖∞ − ε )
//! ```
//!
//! where `w_i` are per-task assignment logits over the K centers. Whenever a
//! full cover exists its zero set coincides with the hard optimum, so the
//! descent reports the hard criterion ([`coverage_stats`]) on its final
//! centers, never the soft value alone.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cover::{coverage_stats, gea, gia_with, Algorithm, CoverSolution, GiaConfig};
use crate::error::{Error, Result};
use crate::task_space::{TaskParams, TaskSet};

/// Decision variables of the proxy: K×d centers and n×K logits.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxState {
    pub centers: Array2<f64>,
    pub logits: Array2<f64>,
    pub objective: f64,
}

impl RelaxState {
    /// Builds a state and evaluates its objective.
    pub fn new(
        centers: Array2<f64>,
        logits: Array2<f64>,
        tasks: &TaskSet,
        epsilon: f64,
        temperature: f64,
    ) -> Result<Self> {
        let mut s = RelaxState {
            centers,
            logits,
            objective: 0.0,
        };
        s.check_shapes(tasks)?;
        s.objective = relax_objective_t(&s, tasks, epsilon, temperature)?;
        Ok(s)
    }

    pub fn k(&self) -> usize {
        self.centers.nrows()
    }

    /// Row-wise softmax of the logits.
    pub fn weights(&self, temperature: f64) -> Array2<f64> {
        let mut out = self.logits.clone();
        for mut row in out.axis_iter_mut(Axis(0)) {
            let w = softmax(row.view(), temperature);
            row.assign(&w);
        }
        out
    }

    pub fn center_params(&self) -> Vec<TaskParams> {
        self.centers
            .axis_iter(Axis(0))
            .map(|r| TaskParams::new(r.to_vec()).expect("finite centers"))
            .collect()
    }

    fn check_shapes(&self, tasks: &TaskSet) -> Result<()> {
        if self.centers.ncols() != tasks.dim() {
            return Err(Error::DimensionMismatch {
                expected: tasks.dim(),
                found: self.centers.ncols(),
            });
        }
        if self.logits.nrows() != tasks.len() || self.logits.ncols() != self.k() {
            return Err(Error::Validation(format!(
                "logits must be {}x{}, got {}x{}",
                tasks.len(),
                self.k(),
                self.logits.nrows(),
                self.logits.ncols()
            )));
        }
        Ok(())
    }
}

fn softmax(row: ArrayView1<'_, f64>, temperature: f64) -> Array1<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e = row.mapv(|v| ((v - max) / temperature).exp());
    let z = e.sum();
    e / z
}

/// ℓ∞ distance and the coordinate attaining it (lowest index on ties).
fn linf_argmax(center: ArrayView1<'_, f64>, point: &[f64]) -> (f64, usize) {
    let mut best = (0.0, 0);
    for (s, (c, x)) in center.iter().zip(point).enumerate() {
        let a = (c - x).abs();
        if a > best.0 {
            best = (a, s);
        }
    }
    best
}

/// Evaluates the proxy with the standard (temperature 1) softmax.
pub fn relax_objective(state: &RelaxState, tasks: &TaskSet, epsilon: f64) -> Result<f64> {
    relax_objective_t(state, tasks, epsilon, 1.0)
}

pub fn relax_objective_t(
    state: &RelaxState,
    tasks: &TaskSet,
    epsilon: f64,
    temperature: f64,
) -> Result<f64> {
    state.check_shapes(tasks)?;
    let mut total = 0.0;
    for (i, w) in state.logits.axis_iter(Axis(0)).enumerate() {
        let sigma = softmax(w, temperature);
        let soft: f64 = state
            .centers
            .axis_iter(Axis(0))
            .zip(sigma.iter())
            .map(|(c, s)| s * linf_argmax(c, tasks.point(i)).0)
            .sum();
        total += (soft - epsilon).max(0.0);
    }
    Ok(total)
}

/// Subgradient of the proxy with respect to centers and logits.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxGradient {
    pub centers: Array2<f64>,
    pub logits: Array2<f64>,
}

pub fn relax_gradient(state: &RelaxState, tasks: &TaskSet, epsilon: f64) -> Result<RelaxGradient> {
    relax_gradient_t(state, tasks, epsilon, 1.0)
}

/// The chosen subgradient: the ℓ∞ term moves only its max-magnitude coordinate
/// (lowest index on ties, zero when the distance is zero) and a hinge at
/// exactly zero contributes nothing.
pub fn relax_gradient_t(
    state: &RelaxState,
    tasks: &TaskSet,
    epsilon: f64,
    temperature: f64,
) -> Result<RelaxGradient> {
    state.check_shapes(tasks)?;
    let k = state.k();
    let mut g_centers = Array2::zeros(state.centers.raw_dim());
    let mut g_logits = Array2::zeros(state.logits.raw_dim());
    let mut dist = vec![(0.0, 0usize); k];
    for (i, w) in state.logits.axis_iter(Axis(0)).enumerate() {
        let point = tasks.point(i);
        let sigma = softmax(w, temperature);
        for (slot, c) in dist.iter_mut().zip(state.centers.axis_iter(Axis(0))) {
            *slot = linf_argmax(c, point);
        }
        let soft: f64 = dist.iter().zip(sigma.iter()).map(|(d, s)| s * d.0).sum();
        if soft - epsilon <= 0.0 {
            continue;
        }
        for (kk, &(d, s_star)) in dist.iter().enumerate() {
            if d > 0.0 {
                let sign = (state.centers[[kk, s_star]] - point[s_star]).signum();
                g_centers[[kk, s_star]] += sigma[kk] * sign;
            }
            g_logits[[i, kk]] += sigma[kk] * (d - soft) / temperature;
        }
    }
    Ok(RelaxGradient {
        centers: g_centers,
        logits: g_logits,
    })
}

/// Where the descent starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    Gea,
    Gia,
    /// Uniform in the data bounding box, zero logits.
    Random,
    Explicit(Vec<TaskParams>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// `None` picks 0.05 × the ℓ∞ diameter of the task set. Centers move by
    /// this times the mean-over-tasks subgradient.
    pub step_size: Option<f64>,
    pub max_iters: usize,
    /// Stop once the objective changes by less than this.
    pub tolerance: f64,
    pub seed: u64,
    pub init: Init,
    pub temperature: f64,
    /// Backtracking line search that only accepts decreasing steps.
    pub line_search: bool,
    /// Logit given to each task's initially assigned center (others get 0).
    pub init_logit: f64,
    /// Record a trace row every this many iterations (0 disables the trace).
    pub trace_every: usize,
    pub gia: GiaConfig,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            step_size: None,
            max_iters: 2000,
            tolerance: 1e-10,
            seed: 0,
            init: Init::Gea,
            temperature: 1.0,
            line_search: false,
            init_logit: 5.0,
            trace_every: 1,
            gia: GiaConfig::default(),
        }
    }
}

impl OptimizerConfig {
    fn validate(&self) -> Result<()> {
        if let Some(s) = self.step_size {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Precondition(format!("step_size must be > 0, got {s}")));
            }
        }
        if self.max_iters == 0 {
            return Err(Error::Precondition("max_iters must be >= 1".into()));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::Precondition("temperature must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub soft_objective: f64,
    pub hard_covered_count: usize,
}

/// Result of [`optimize_cover`].
#[derive(Debug, Clone)]
pub struct GradOutcome {
    /// Hard coverage of the final centers.
    pub solution: CoverSolution,
    pub state: RelaxState,
    pub soft_objective: f64,
    pub iterations: usize,
    /// Number of 50-iteration windows without progress on a positive objective.
    pub stalled_windows: usize,
    pub step_size: f64,
    pub trace: Vec<TraceRow>,
    pub warnings: Vec<String>,
}

const STALL_WINDOW: usize = 50;

/// ℓ∞ diameter of the task set (widest per-dimension extent).
pub fn linf_diameter(tasks: &TaskSet) -> f64 {
    (0..tasks.dim())
        .map(|s| {
            let (lo, hi) = tasks.tasks().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| {
                let x = t.as_slice()[s];
                (lo.min(x), hi.max(x))
            });
            hi - lo
        })
        .fold(0.0, f64::max)
}

/// Subgradient descent on the proxy. Returns the hard cover of the final
/// centers alongside the soft objective.
pub fn optimize_cover(
    tasks: &TaskSet,
    epsilon: f64,
    k: usize,
    cfg: &OptimizerConfig,
) -> Result<GradOutcome> {
    cfg.validate()?;
    if k == 0 {
        return Err(Error::Precondition("K must be >= 1".into()));
    }
    if tasks.is_empty() {
        return Err(Error::Precondition("task set is empty".into()));
    }
    let diameter = linf_diameter(tasks);
    let step = cfg
        .step_size
        .unwrap_or(if diameter > 0.0 { 0.05 * diameter } else { 0.05 });
    // logits move in dimensionless units
    let logit_step = if diameter > 0.0 { step / diameter } else { step };
    // center subgradients sum over tasks; descend on the mean instead
    let center_step = step / tasks.len() as f64;

    let mut warnings = Vec::new();
    let mut state = initial_state(tasks, epsilon, k, cfg, &mut warnings)?;
    let t = cfg.temperature;

    let mut trace = Vec::new();
    let record = |trace: &mut Vec<TraceRow>, it: usize, s: &RelaxState| -> Result<()> {
        let hard = coverage_stats(tasks, &s.center_params(), epsilon)?;
        trace.push(TraceRow {
            iteration: it,
            soft_objective: s.objective,
            hard_covered_count: hard.covered_count,
        });
        Ok(())
    };
    if cfg.trace_every > 0 {
        record(&mut trace, 0, &state)?;
    }

    let mut iterations = 0;
    let mut stalled_windows = 0;
    let mut window_start = state.objective;
    // non-finite, or a millionfold growth over the start, counts as divergence
    let blowup = 1e6 * state.objective.max(tasks.len() as f64 * epsilon);
    for it in 1..=cfg.max_iters {
        if state.objective == 0.0 {
            break;
        }
        let g = relax_gradient_t(&state, tasks, epsilon, t)?;
        let candidate = if cfg.line_search {
            let mut eta = 1.0;
            let mut accepted = None;
            for _ in 0..40 {
                let c = take_step(&state, &g, eta * center_step, eta * logit_step, tasks, epsilon, t)?;
                if c.objective < state.objective {
                    accepted = Some(c);
                    break;
                }
                eta *= 0.5;
            }
            match accepted {
                Some(c) => c,
                None => break,
            }
        } else {
            take_step(&state, &g, center_step, logit_step, tasks, epsilon, t)?
        };
        if !candidate.objective.is_finite() || candidate.objective > blowup {
            return Err(Error::Divergence {
                iteration: it,
                objective: candidate.objective,
            });
        }
        let change = (state.objective - candidate.objective).abs();
        state = candidate;
        iterations = it;
        if cfg.trace_every > 0 && it % cfg.trace_every == 0 {
            record(&mut trace, it, &state)?;
        }
        if it % STALL_WINDOW == 0 {
            if state.objective > 0.0 && state.objective >= window_start {
                stalled_windows += 1;
            }
            window_start = state.objective;
        }
        if change < cfg.tolerance {
            break;
        }
    }
    if cfg.trace_every > 0 && trace.last().map(|r| r.iteration) != Some(iterations) {
        record(&mut trace, iterations, &state)?;
    }

    let solution = coverage_stats(tasks, &state.center_params(), epsilon)?.with_algorithm(Algorithm::Grad);
    Ok(GradOutcome {
        soft_objective: state.objective,
        solution,
        state,
        iterations,
        stalled_windows,
        step_size: step,
        trace,
        warnings,
    })
}

fn take_step(
    state: &RelaxState,
    g: &RelaxGradient,
    step: f64,
    logit_step: f64,
    tasks: &TaskSet,
    epsilon: f64,
    temperature: f64,
) -> Result<RelaxState> {
    let centers = &state.centers - &(&g.centers * step);
    let logits = &state.logits - &(&g.logits * logit_step);
    if centers.iter().chain(logits.iter()).any(|v| !v.is_finite()) {
        return Ok(RelaxState {
            centers: state.centers.clone(),
            logits: state.logits.clone(),
            objective: f64::INFINITY,
        });
    }
    RelaxState::new(centers, logits, tasks, epsilon, temperature)
}

fn initial_state(
    tasks: &TaskSet,
    epsilon: f64,
    k: usize,
    cfg: &OptimizerConfig,
    warnings: &mut Vec<String>,
) -> Result<RelaxState> {
    let n = tasks.len();
    let d = tasks.dim();
    let centers: Vec<TaskParams> = match &cfg.init {
        Init::Gea => gea(tasks, epsilon, k)?.centers,
        Init::Gia => match gia_with(tasks, epsilon, k, &cfg.gia) {
            Ok(sol) => sol.centers,
            Err(e @ Error::Capacity { .. }) => {
                warnings.push(format!("gia initialization failed ({e}); falling back to gea"));
                gea(tasks, epsilon, k)?.centers
            }
            Err(e) => return Err(e),
        },
        Init::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let (lo, hi) = bounding_box(tasks);
            let centers = Array2::from_shape_fn((k, d), |(_, s)| {
                if hi[s] > lo[s] {
                    rng.random_range(lo[s]..hi[s])
                } else {
                    lo[s]
                }
            });
            return RelaxState::new(centers, Array2::zeros((n, k)), tasks, epsilon, cfg.temperature);
        }
        Init::Explicit(c) => {
            if c.is_empty() || c.len() > k {
                return Err(Error::Precondition(format!(
                    "explicit init needs 1..={k} centers, got {}",
                    c.len()
                )));
            }
            c.clone()
        }
    };
    let kk = centers.len();
    let mut m = Array2::zeros((kk, d));
    for (r, c) in centers.iter().enumerate() {
        if c.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: c.dim(),
            });
        }
        m.row_mut(r).assign(&ArrayView1::from(c.as_slice()));
    }
    // each task leans toward its covering (else nearest) center
    let hard = coverage_stats(tasks, &centers, epsilon)?;
    let mut logits = Array2::zeros((n, kk));
    for i in 0..n {
        let k_star = hard.assignment[i].unwrap_or_else(|| {
            (0..kk)
                .min_by(|&a, &b| {
                    let da = linf_argmax(m.row(a), tasks.point(i)).0;
                    let db = linf_argmax(m.row(b), tasks.point(i)).0;
                    da.total_cmp(&db)
                })
                .expect("at least one center")
        });
        logits[[i, k_star]] = cfg.init_logit;
    }
    RelaxState::new(m, logits, tasks, epsilon, cfg.temperature)
}

fn bounding_box(tasks: &TaskSet) -> (Vec<f64>, Vec<f64>) {
    let d = tasks.dim();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for t in tasks.tasks() {
        for (s, &x) in t.as_slice().iter().enumerate() {
            lo[s] = lo[s].min(x);
            hi[s] = hi[s].max(x);
        }
    }
    (lo, hi)
}

/// Writes the trace as `iteration,soft_objective,hard_covered_count`.
pub fn write_trace_csv(trace: &[TraceRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    writeln!(out, "iteration,soft_objective,hard_covered_count").expect("vec write");
    for r in trace {
        writeln!(out, "{},{:?},{}", r.iteration, r.soft_objective, r.hard_covered_count)
            .expect("vec write");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
