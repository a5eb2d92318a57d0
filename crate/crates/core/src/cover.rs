//! ℓ∞ parameter covers: greedy elimination (centers restricted to the task
//! set), greedy intersection (unrestricted centers built from per-dimension
//! interval lists) and exhaustive oracles for small instances.
//!
//! A group of tasks can share one center iff, on every dimension, some `f64`
//! center `c` has `|c − lo| ≤ ε` and `|hi − c| ≤ ε` for the group's extreme
//! coordinates ([`interval_center`]). In exact arithmetic that is
//! `hi − lo ≤ 2ε`; in floating point the two can disagree by an ulp, so the
//! intersection search, the oracles and the emitted centers all use this one
//! predicate. [`coverage_stats`] re-checks `‖θ − c‖∞ ≤ ε` against the emitted
//! centers.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::task_space::{linf, TaskParams, TaskSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Gea,
    Gia,
    Grad,
    Oracle,
    Kmeans,
    /// Centers supplied by the caller.
    Explicit,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Algorithm::Gea => "gea",
            Algorithm::Gia => "gia",
            Algorithm::Grad => "grad",
            Algorithm::Oracle => "oracle",
            Algorithm::Kmeans => "kmeans",
            Algorithm::Explicit => "explicit",
        };
        f.write_str(s)
    }
}

/// Representatives plus the hard (≤ ε) assignment of every task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverSolution {
    pub epsilon: f64,
    pub algorithm: Algorithm,
    pub centers: Vec<TaskParams>,
    /// Index of the covering center per task; `None` when uncovered.
    pub assignment: Vec<Option<usize>>,
    pub covered_count: usize,
    /// δ̂ = 1 − covered/n.
    pub miss_rate: f64,
}

impl CoverSolution {
    pub fn k(&self) -> usize {
        self.centers.len()
    }

    /// Task indices assigned to center `k`.
    pub fn members(&self, k: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter_map(|(i, a)| (*a == Some(k)).then_some(i))
            .collect()
    }

    pub(crate) fn with_algorithm(mut self, algorithm: Algorithm) -> Self {
        self.algorithm = algorithm;
        self
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon.is_finite() && epsilon >= 0.0 {
        Ok(())
    } else {
        Err(Error::Precondition(format!(
            "epsilon must be finite and non-negative, got {epsilon}"
        )))
    }
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        Err(Error::Precondition("K must be >= 1".into()))
    } else {
        Ok(())
    }
}

/// Assigns each task to its nearest covering center (ties → lowest index).
pub fn coverage_stats(
    tasks: &TaskSet,
    centers: &[TaskParams],
    epsilon: f64,
) -> Result<CoverSolution> {
    check_epsilon(epsilon)?;
    for c in centers {
        if !tasks.is_empty() && c.dim() != tasks.dim() {
            return Err(Error::DimensionMismatch {
                expected: tasks.dim(),
                found: c.dim(),
            });
        }
    }
    let assignment: Vec<Option<usize>> = tasks
        .tasks()
        .iter()
        .map(|t| {
            let mut best: Option<(usize, f64)> = None;
            for (k, c) in centers.iter().enumerate() {
                let dist = linf(t.as_slice(), c.as_slice());
                if dist <= epsilon && best.is_none_or(|(_, bd)| dist < bd) {
                    best = Some((k, dist));
                }
            }
            best.map(|(k, _)| k)
        })
        .collect();
    let covered_count = assignment.iter().filter(|a| a.is_some()).count();
    let n = tasks.len();
    let miss_rate = if n == 0 {
        0.0
    } else {
        1.0 - covered_count as f64 / n as f64
    };
    Ok(CoverSolution {
        epsilon,
        algorithm: Algorithm::Explicit,
        centers: centers.to_vec(),
        assignment,
        covered_count,
        miss_rate,
    })
}

/// One greedy round: the emitted center and the previously-uncovered tasks it
/// claimed.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedyRound {
    pub center: TaskParams,
    pub members: Vec<usize>,
}

/// Greedy elimination: each round adds the task point covering the most
/// still-uncovered tasks.
pub fn gea(tasks: &TaskSet, epsilon: f64, k: usize) -> Result<CoverSolution> {
    let rounds = gea_rounds(tasks, epsilon, k)?;
    let centers: Vec<TaskParams> = rounds.into_iter().map(|r| r.center).collect();
    Ok(coverage_stats(tasks, &centers, epsilon)?.with_algorithm(Algorithm::Gea))
}

pub fn gea_rounds(tasks: &TaskSet, epsilon: f64, k: usize) -> Result<Vec<GreedyRound>> {
    check_epsilon(epsilon)?;
    check_k(k)?;
    let n = tasks.len();
    let neighbors: Vec<BitSet> = (0..n)
        .map(|i| {
            let mut b = BitSet::new(n);
            for j in 0..n {
                if linf(tasks.point(i), tasks.point(j)) <= epsilon {
                    b.insert(j);
                }
            }
            b
        })
        .collect();
    let mut uncovered = BitSet::full(n);
    let mut rounds = Vec::new();
    for _ in 0..k {
        if uncovered.is_empty() {
            break;
        }
        let mut best: Option<(usize, usize)> = None;
        for (i, nb) in neighbors.iter().enumerate() {
            let gain = nb.intersection_count(&uncovered);
            if best.is_none_or(|(_, g)| gain > g) {
                best = Some((i, gain));
            }
        }
        let Some((i, gain)) = best else { break };
        if gain == 0 {
            break;
        }
        let claimed = neighbors[i].intersection(&uncovered);
        uncovered.difference_with(&claimed);
        rounds.push(GreedyRound {
            center: tasks.tasks()[i].clone(),
            members: claimed.iter().collect(),
        });
    }
    Ok(rounds)
}

/// Maximal interval lists of one dimension.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DimensionLists {
    pub dim: usize,
    /// Each list holds task indices ordered by ascending coordinate; the
    /// coordinates of a list always share one center within ε.
    pub lists: Vec<Vec<usize>>,
}

/// Builds the interval lists for one dimension over the whole task set.
pub fn build_dimension_lists(tasks: &TaskSet, epsilon: f64, dim: usize) -> Result<DimensionLists> {
    check_epsilon(epsilon)?;
    if dim >= tasks.dim() {
        return Err(Error::Precondition(format!(
            "dimension {dim} out of range for d = {}",
            tasks.dim()
        )));
    }
    let all: Vec<usize> = (0..tasks.len()).collect();
    Ok(DimensionLists {
        dim,
        lists: interval_lists(tasks, &all, epsilon, dim),
    })
}

/// A center within ε of both `lo` and `hi` under `f64` subtraction, if one
/// exists. Prefers the midpoint; otherwise returns the largest center that is
/// within ε of `lo`.
pub fn interval_center(lo: f64, hi: f64, epsilon: f64) -> Option<f64> {
    let ok = |c: f64| (c - lo).abs() <= epsilon && (hi - c).abs() <= epsilon;
    let mid = lo + (hi - lo) / 2.0;
    if ok(mid) {
        return Some(mid);
    }
    // c − lo is monotone in c, so the largest c passing the lower test is the
    // best candidate for the upper one
    let mut c = lo + epsilon;
    for _ in 0..8 {
        if c - lo > epsilon {
            c = c.next_down();
        } else if (c.next_up() - lo) <= epsilon {
            c = c.next_up();
        } else {
            break;
        }
    }
    ok(c).then_some(c)
}

fn fits(lo: f64, hi: f64, epsilon: f64) -> bool {
    interval_center(lo, hi, epsilon).is_some()
}

/// Sorted scan: every point `x_e` (last of its run of equal values) closes the
/// window of all earlier points that share a center with it (roughly
/// `[x_e − 2ε, x_e]`). A window that is a subset of its
/// successor (same start) is merged into it, so only maximal windows survive.
fn interval_lists(tasks: &TaskSet, subset: &[usize], epsilon: f64, dim: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = subset.to_vec();
    let coord = |i: usize| tasks.point(i)[dim];
    order.sort_by(|&a, &b| coord(a).total_cmp(&coord(b)).then(a.cmp(&b)));

    let mut windows: Vec<(usize, usize)> = Vec::new();
    let mut start = 0;
    for end in 0..order.len() {
        if end + 1 < order.len() && coord(order[end + 1]) == coord(order[end]) {
            continue;
        }
        let x_end = coord(order[end]);
        while !fits(coord(order[start]), x_end, epsilon) {
            start += 1;
        }
        match windows.last_mut() {
            Some(last) if last.0 == start => last.1 = end,
            _ => windows.push((start, end)),
        }
    }
    windows
        .into_iter()
        .map(|(s, e)| order[s..=e].to_vec())
        .collect()
}

/// Knobs for the cross-dimension list search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GiaConfig {
    /// Maximum number of search nodes per round before giving up.
    pub node_budget: u64,
}

impl Default for GiaConfig {
    fn default() -> Self {
        GiaConfig {
            node_budget: 5_000_000,
        }
    }
}

const GIA_HINT: &str = "use the gradient-based cover (grad) for high-dimensional task sets";

/// Greedy intersection with the default node budget.
pub fn gia(tasks: &TaskSet, epsilon: f64, k: usize) -> Result<CoverSolution> {
    gia_with(tasks, epsilon, k, &GiaConfig::default())
}

pub fn gia_with(tasks: &TaskSet, epsilon: f64, k: usize, cfg: &GiaConfig) -> Result<CoverSolution> {
    let rounds = gia_rounds(tasks, epsilon, k, cfg)?;
    let centers: Vec<TaskParams> = rounds.into_iter().map(|r| r.center).collect();
    Ok(coverage_stats(tasks, &centers, epsilon)?.with_algorithm(Algorithm::Gia))
}

/// Runs the greedy intersection rounds. Each round solves Max-1-Cover exactly
/// over the still-uncovered tasks.
pub fn gia_rounds(
    tasks: &TaskSet,
    epsilon: f64,
    k: usize,
    cfg: &GiaConfig,
) -> Result<Vec<GreedyRound>> {
    check_epsilon(epsilon)?;
    check_k(k)?;
    let n = tasks.len();
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut rounds = Vec::new();
    for _ in 0..k {
        if remaining.is_empty() {
            break;
        }
        let lists: Vec<Vec<BitSet>> = (0..tasks.dim())
            .map(|s| {
                interval_lists(tasks, &remaining, epsilon, s)
                    .into_iter()
                    .map(|l| BitSet::from_indices(n, &l))
                    .collect()
            })
            .collect();
        let mut search = ListSearch {
            lists: &lists,
            best: BitSet::new(n),
            best_count: 0,
            nodes: 0,
            budget: cfg.node_budget,
        };
        let root = BitSet::from_indices(n, &remaining);
        search.descend(0, &root)?;
        let covered: Vec<usize> = search.best.iter().collect();
        if covered.is_empty() {
            break;
        }
        let center = bounding_box_midpoint(tasks, &covered, epsilon);
        remaining.retain(|i| !search.best.contains(*i));
        rounds.push(GreedyRound {
            center,
            members: covered,
        });
    }
    Ok(rounds)
}

/// Depth-first choice of one list per dimension maximizing the intersection.
struct ListSearch<'a> {
    lists: &'a [Vec<BitSet>],
    best: BitSet,
    best_count: usize,
    nodes: u64,
    budget: u64,
}

impl ListSearch<'_> {
    fn descend(&mut self, depth: usize, running: &BitSet) -> Result<()> {
        if depth == self.lists.len() {
            let c = running.count();
            if c > self.best_count {
                self.best_count = c;
                self.best = running.clone();
            }
            return Ok(());
        }
        for list in &self.lists[depth] {
            self.nodes += 1;
            if self.nodes > self.budget {
                return Err(Error::Capacity {
                    what: "greedy intersection list search",
                    budget: self.budget,
                    hint: GIA_HINT,
                });
            }
            let inter = running.intersection(list);
            let c = inter.count();
            // disjoint lists and branches that cannot beat the incumbent
            if c == 0 || c <= self.best_count {
                continue;
            }
            self.descend(depth + 1, &inter)?;
        }
        Ok(())
    }
}

/// Per-dimension center of the members' bounding box: the midpoint, or the
/// nearby value from [`interval_center`] when rounding pushes the midpoint
/// just over ε from an extreme.
pub fn bounding_box_midpoint(tasks: &TaskSet, members: &[usize], epsilon: f64) -> TaskParams {
    let d = tasks.dim();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for &i in members {
        for (s, &x) in tasks.point(i).iter().enumerate() {
            lo[s] = lo[s].min(x);
            hi[s] = hi[s].max(x);
        }
    }
    let mid = lo
        .iter()
        .zip(&hi)
        .map(|(&a, &b)| interval_center(a, b, epsilon).unwrap_or(a + (b - a) / 2.0))
        .collect();
    TaskParams::new(mid).expect("midpoint of finite coordinates")
}

/// Budget for the exhaustive oracles, in enumerated candidates.
pub const DEFAULT_ORACLE_BUDGET: u64 = 10_000_000;

/// An exact single-center optimum.
#[derive(Debug, Clone, PartialEq)]
pub struct OneCover {
    pub center: TaskParams,
    pub covered: Vec<usize>,
}

/// Exhaustive Max-1-Cover. Candidate boxes have their lower face on a data
/// coordinate in every dimension; any coverable group fits such a box.
pub fn max_1_cover_oracle(tasks: &TaskSet, epsilon: f64) -> Result<OneCover> {
    max_1_cover_oracle_with(tasks, epsilon, DEFAULT_ORACLE_BUDGET)
}

pub fn max_1_cover_oracle_with(tasks: &TaskSet, epsilon: f64, budget: u64) -> Result<OneCover> {
    check_epsilon(epsilon)?;
    if tasks.is_empty() {
        return Err(Error::Precondition("oracle needs at least one task".into()));
    }
    let mut best: Option<BitSet> = None;
    let mut best_count = 0;
    for_each_candidate_box(tasks, epsilon, budget, |set| {
        let c = set.count();
        if c > best_count {
            best_count = c;
            best = Some(set.clone());
        }
    })?;
    let covered: Vec<usize> = best.expect("non-empty task set").iter().collect();
    Ok(OneCover {
        center: bounding_box_midpoint(tasks, &covered, epsilon),
        covered,
    })
}

/// Enumerates the member set of every lower-face candidate box, in
/// lexicographic order of the per-dimension candidate indices.
fn for_each_candidate_box(
    tasks: &TaskSet,
    epsilon: f64,
    budget: u64,
    mut visit: impl FnMut(&BitSet),
) -> Result<()> {
    let n = tasks.len();
    let d = tasks.dim();
    // slabs[s][c]: tasks whose s-th coordinate x has lo_c <= x and fits with lo_c
    let slabs: Vec<Vec<BitSet>> = (0..d)
        .map(|s| {
            let mut lows: Vec<f64> = (0..n).map(|i| tasks.point(i)[s]).collect();
            lows.sort_by(f64::total_cmp);
            lows.dedup();
            lows.iter()
                .map(|&lo| {
                    let mut b = BitSet::new(n);
                    for i in 0..n {
                        let x = tasks.point(i)[s];
                        if x >= lo && fits(lo, x, epsilon) {
                            b.insert(i);
                        }
                    }
                    b
                })
                .collect()
        })
        .collect();
    let total = slabs
        .iter()
        .try_fold(1u64, |acc, s| acc.checked_mul(s.len() as u64))
        .unwrap_or(u64::MAX);
    if total > budget {
        return Err(Error::Capacity {
            what: "exhaustive cover oracle",
            budget,
            hint: "the oracle is meant for n <= 30, d <= 3",
        });
    }
    fn walk(slabs: &[Vec<BitSet>], depth: usize, running: &BitSet, visit: &mut dyn FnMut(&BitSet)) {
        if depth == slabs.len() {
            visit(running);
            return;
        }
        for slab in &slabs[depth] {
            walk(slabs, depth + 1, &running.intersection(slab), visit);
        }
    }
    walk(&slabs, 0, &BitSet::full(n), &mut visit);
    Ok(())
}

/// Exact optimum of the K-center ℓ∞ cover on a finite task set.
#[derive(Debug, Clone, PartialEq)]
pub struct KCoverOptimum {
    /// δ* = 1 − covered/n.
    pub miss_rate: f64,
    pub covered_count: usize,
    pub centers: Vec<TaskParams>,
}

pub fn max_k_cover_oracle(tasks: &TaskSet, epsilon: f64, k: usize) -> Result<KCoverOptimum> {
    max_k_cover_oracle_with(tasks, epsilon, k, DEFAULT_ORACLE_BUDGET)
}

/// Enumerates the maximal single-center groups, then searches all K-subsets
/// of them for the largest union.
pub fn max_k_cover_oracle_with(
    tasks: &TaskSet,
    epsilon: f64,
    k: usize,
    budget: u64,
) -> Result<KCoverOptimum> {
    check_epsilon(epsilon)?;
    check_k(k)?;
    let n = tasks.len();
    if n == 0 {
        return Err(Error::Precondition("oracle needs at least one task".into()));
    }
    let mut distinct: HashSet<BitSet> = HashSet::new();
    for_each_candidate_box(tasks, epsilon, budget, |set| {
        if !set.is_empty() {
            distinct.insert(set.clone());
        }
    })?;
    let mut groups: Vec<BitSet> = distinct.into_iter().collect();
    groups.sort_by(|a, b| b.count().cmp(&a.count()).then_with(|| a.words.cmp(&b.words)));
    let maximal: Vec<BitSet> = groups
        .iter()
        .enumerate()
        .filter(|(i, g)| {
            !groups
                .iter()
                .enumerate()
                .any(|(j, h)| j != *i && g.is_subset(h) && (g.count() < h.count() || j < *i))
        })
        .map(|(_, g)| g.clone())
        .collect();

    let mut search = SubsetSearch {
        groups: &maximal,
        k,
        best: Vec::new(),
        best_count: 0,
        nodes: 0,
        budget,
    };
    let mut chosen = Vec::new();
    search.descend(0, &mut chosen, &BitSet::new(n))?;

    let centers = search
        .best
        .iter()
        .map(|&g| {
            let members: Vec<usize> = maximal[g].iter().collect();
            bounding_box_midpoint(tasks, &members, epsilon)
        })
        .collect();
    Ok(KCoverOptimum {
        miss_rate: 1.0 - search.best_count as f64 / n as f64,
        covered_count: search.best_count,
        centers,
    })
}

struct SubsetSearch<'a> {
    groups: &'a [BitSet],
    k: usize,
    best: Vec<usize>,
    best_count: usize,
    nodes: u64,
    budget: u64,
}

impl SubsetSearch<'_> {
    fn descend(&mut self, from: usize, chosen: &mut Vec<usize>, union: &BitSet) -> Result<()> {
        let c = union.count();
        if c > self.best_count {
            self.best_count = c;
            self.best = chosen.clone();
        }
        if chosen.len() == self.k || c == union.len() {
            return Ok(());
        }
        let slots = self.k - chosen.len();
        for g in from..self.groups.len() {
            // groups are sorted by size, so this bounds every later branch too
            if c + slots * self.groups[g].count() <= self.best_count {
                break;
            }
            self.nodes += 1;
            if self.nodes > self.budget {
                return Err(Error::Capacity {
                    what: "exhaustive K-cover oracle",
                    budget: self.budget,
                    hint: "the oracle is meant for tiny instances",
                });
            }
            chosen.push(g);
            self.descend(g + 1, chosen, &union.union(&self.groups[g]))?;
            chosen.pop();
        }
        Ok(())
    }
}

/// Fixed-capacity bit set over task indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub(crate) struct BitSet {
    words: Vec<u64>,
    len: usize,
}

impl BitSet {
    pub(crate) fn new(len: usize) -> Self {
        BitSet {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub(crate) fn full(len: usize) -> Self {
        let mut b = BitSet::new(len);
        for i in 0..len {
            b.insert(i);
        }
        b
    }

    pub(crate) fn from_indices(len: usize, idx: &[usize]) -> Self {
        let mut b = BitSet::new(len);
        for &i in idx {
            b.insert(i);
        }
        b
    }

    pub(crate) fn len(&self) -> usize {
        self.len
    }

    pub(crate) fn insert(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub(crate) fn contains(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub(crate) fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub(crate) fn intersection(&self, other: &BitSet) -> BitSet {
        BitSet {
            words: self.words.iter().zip(&other.words).map(|(a, b)| a & b).collect(),
            len: self.len,
        }
    }

    pub(crate) fn union(&self, other: &BitSet) -> BitSet {
        BitSet {
            words: self.words.iter().zip(&other.words).map(|(a, b)| a | b).collect(),
            len: self.len,
        }
    }

    pub(crate) fn intersection_count(&self, other: &BitSet) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    pub(crate) fn difference_with(&mut self, other: &BitSet) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= !b;
        }
    }

    pub(crate) fn is_subset(&self, other: &BitSet) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    pub(crate) fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(|&i| self.contains(i))
    }
}
