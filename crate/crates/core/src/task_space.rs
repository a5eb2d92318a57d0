//! Task parameter vectors, mixture sampling and task-file ingestion.
//!
//! Sampling uses `ChaCha8Rng` seeded with `seed_from_u64`, and Gaussian draws
//! use the ziggurat sampler behind `rand_distr::Normal`. Both are fully
//! specified algorithms, so a `(GmmSpec, n, seed)` triple yields bitwise
//! identical task sets on every platform.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A task parameter vector θ ∈ R^d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TaskParams(Vec<f64>);

impl TaskParams {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.is_empty() {
            return Err(Error::Validation("task vector must have d >= 1".into()));
        }
        if let Some(i) = theta.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "task vector has non-finite entry {} at coordinate {i}",
                theta[i]
            )));
        }
        Ok(TaskParams(theta))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for TaskParams {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        TaskParams::new(v)
    }
}

impl From<TaskParams> for Vec<f64> {
    fn from(t: TaskParams) -> Self {
        t.0
    }
}

impl AsRef<[f64]> for TaskParams {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// ℓ∞ distance between two parameter vectors.
pub fn linf_distance(a: &TaskParams, b: &TaskParams) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(linf(a.as_slice(), b.as_slice()))
}

/// Unchecked ℓ∞ kernel; callers guarantee equal lengths.
#[inline]
pub(crate) fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs()))
}

/// An ordered, fixed-dimension collection of tasks with unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSet {
    ids: Vec<String>,
    tasks: Vec<TaskParams>,
    dim: usize,
}

impl TaskSet {
    pub fn new(ids: Vec<String>, tasks: Vec<TaskParams>) -> Result<Self> {
        if ids.len() != tasks.len() {
            return Err(Error::Validation(format!(
                "{} ids for {} tasks",
                ids.len(),
                tasks.len()
            )));
        }
        let dim = tasks.first().map(TaskParams::dim).unwrap_or(0);
        for (i, t) in tasks.iter().enumerate() {
            if t.dim() != dim {
                return Err(Error::Validation(format!(
                    "task {i} ({}) has dimension {}, expected {dim}",
                    ids[i],
                    t.dim()
                )));
            }
        }
        let mut seen = HashSet::with_capacity(ids.len());
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::Validation(format!("duplicate task id {id:?}")));
            }
        }
        Ok(TaskSet { ids, tasks, dim })
    }

    /// Builds a task set from raw rows, synthesizing ids `0..n`.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let ids = (0..rows.len()).map(|i| i.to_string()).collect();
        let tasks = rows
            .into_iter()
            .map(TaskParams::new)
            .collect::<Result<Vec<_>>>()?;
        TaskSet::new(ids, tasks)
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// Dimension d; zero only for an empty set.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn tasks(&self) -> &[TaskParams] {
        &self.tasks
    }

    pub fn point(&self, i: usize) -> &[f64] {
        self.tasks[i].as_slice()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &TaskParams)> {
        self.ids.iter().map(String::as_str).zip(&self.tasks)
    }

    /// Per-dimension z-scoring. Dimensions with zero spread are only centered.
    pub fn standardized(&self) -> TaskSet {
        let n = self.len().max(1) as f64;
        let mut mean = vec![0.0; self.dim];
        for t in &self.tasks {
            for (m, v) in mean.iter_mut().zip(t.as_slice()) {
                *m += v / n;
            }
        }
        let mut sd = vec![0.0; self.dim];
        for t in &self.tasks {
            for ((s, m), v) in sd.iter_mut().zip(&mean).zip(t.as_slice()) {
                *s += (v - m) * (v - m) / n;
            }
        }
        let sd: Vec<f64> = sd.into_iter().map(f64::sqrt).collect();
        let tasks = self
            .tasks
            .iter()
            .map(|t| {
                let v = t
                    .as_slice()
                    .iter()
                    .zip(&mean)
                    .zip(&sd)
                    .map(|((v, m), s)| if *s > 0.0 { (v - m) / s } else { v - m })
                    .collect();
                TaskParams(v)
            })
            .collect();
        TaskSet {
            ids: self.ids.clone(),
            tasks,
            dim: self.dim,
        }
    }

    /// Writes the set in the given format.
    pub fn save(&self, path: impl AsRef<Path>, format: TaskFormat) -> Result<()> {
        let path = path.as_ref();
        let bytes = match format {
            TaskFormat::Csv => self.to_csv_bytes()?,
            TaskFormat::Json => {
                let records: Vec<JsonTaskOut<'_>> = self
                    .iter()
                    .map(|(id, t)| JsonTaskOut {
                        id,
                        theta: t.as_slice(),
                    })
                    .collect();
                let mut s = serde_json::to_vec_pretty(&records)?;
                s.push(b'\n');
                s
            }
        };
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    /// CSV rendering: header `id,x0,…`, LF endings, shortest round-trip floats.
    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let mut header = vec!["id".to_string()];
        header.extend((0..self.dim).map(|j| format!("x{j}")));
        w.write_record(&header).map_err(csv_err)?;
        for (id, t) in self.iter() {
            let mut row = Vec::with_capacity(self.dim + 1);
            row.push(id.to_string());
            row.extend(t.as_slice().iter().map(|v| format!("{v:?}")));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.into_inner()
            .map_err(|e| Error::Validation(format!("csv buffer: {e}")))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Validation(format!("csv write: {e}"))
}

#[derive(Serialize)]
struct JsonTaskOut<'a> {
    id: &'a str,
    theta: &'a [f64],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskFormat {
    Csv,
    Json,
}

impl TaskFormat {
    /// Guesses the format from a file extension (`.json` → JSON, else CSV).
    pub fn from_path(path: &Path) -> TaskFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => TaskFormat::Json,
            _ => TaskFormat::Csv,
        }
    }
}

/// Loads a task set, preserving row order.
pub fn load_task_set(path: impl AsRef<Path>, format: TaskFormat) -> Result<TaskSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match format {
        TaskFormat::Csv => parse_task_csv(&text),
        TaskFormat::Json => parse_task_json(&text),
    }
}

pub fn parse_task_csv(text: &str) -> Result<TaskSet> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::parse("header", e.to_string()))?
        .clone();
    if header.is_empty() || (header.len() == 1 && header[0].trim().is_empty()) {
        return Err(Error::parse("header", "empty file"));
    }
    let has_id = header.get(0).map(|h| h.trim() == "id").unwrap_or(false);
    let width = header.len();
    let d = width - usize::from(has_id);
    if d == 0 {
        return Err(Error::parse("header", "no coordinate columns"));
    }

    let mut ids = Vec::new();
    let mut tasks = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let loc = || format!("row {}", row + 1);
        let record = record.map_err(|e| Error::parse(loc(), e.to_string()))?;
        if record.len() != width {
            return Err(Error::parse(
                loc(),
                format!("expected {width} fields, found {}", record.len()),
            ));
        }
        let mut fields = record.iter();
        let id = if has_id {
            fields.next().unwrap_or_default().trim().to_string()
        } else {
            row.to_string()
        };
        let theta = fields
            .enumerate()
            .map(|(j, f)| parse_coordinate(f.trim()).map_err(|m| Error::parse(loc(), format!("column x{j}: {m}"))))
            .collect::<Result<Vec<f64>>>()?;
        ids.push(id);
        tasks.push(TaskParams(theta));
    }
    if tasks.is_empty() {
        return Err(Error::parse("row 1", "file has no task rows"));
    }
    TaskSet::new(ids, tasks)
}

/// Decimal-point only; rejects `inf`/`nan` and locale forms like `1,5`.
fn parse_coordinate(field: &str) -> std::result::Result<f64, String> {
    let ok = !field.is_empty()
        && field
            .bytes()
            .all(|b| b.is_ascii_digit() || matches!(b, b'.' | b'-' | b'+' | b'e' | b'E'));
    if !ok {
        return Err(format!("non-numeric entry {field:?}"));
    }
    let v: f64 = field
        .parse()
        .map_err(|_| format!("non-numeric entry {field:?}"))?;
    if !v.is_finite() {
        return Err(format!("non-finite entry {field:?}"));
    }
    Ok(v)
}

pub fn parse_task_json(text: &str) -> Result<TaskSet> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::parse("document", e.to_string()))?;
    let records = value
        .as_array()
        .ok_or_else(|| Error::parse("document", "expected an array of task records"))?;
    if records.is_empty() {
        return Err(Error::parse("record 0", "file has no task records"));
    }
    let mut ids = Vec::with_capacity(records.len());
    let mut tasks = Vec::with_capacity(records.len());
    let mut dim = None;
    for (i, rec) in records.iter().enumerate() {
        let loc = || format!("record {i}");
        let id = match rec.get("id") {
            Some(serde_json::Value::String(s)) => s.clone(),
            Some(other) => return Err(Error::parse(loc(), format!("id must be a string, got {other}"))),
            None => i.to_string(),
        };
        let theta = rec
            .get("theta")
            .and_then(|t| t.as_array())
            .ok_or_else(|| Error::parse(loc(), "missing theta array"))?;
        let theta = theta
            .iter()
            .enumerate()
            .map(|(j, v)| {
                v.as_f64()
                    .ok_or_else(|| Error::parse(loc(), format!("theta[{j}] is not a number: {v}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        match dim {
            None => dim = Some(theta.len()),
            Some(d) if d != theta.len() => {
                return Err(Error::parse(
                    loc(),
                    format!("theta has length {}, expected {d}", theta.len()),
                ))
            }
            _ => {}
        }
        ids.push(id);
        tasks.push(TaskParams::new(theta).map_err(|e| Error::parse(loc(), e.to_string()))?);
    }
    TaskSet::new(ids, tasks)
}

/// One diagonal Gaussian of a mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub stddev: Vec<f64>,
}

/// Diagonal-covariance Gaussian mixture over task parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmSpec {
    pub components: Vec<GmmComponent>,
}

impl GmmSpec {
    pub fn validate(&self) -> Result<usize> {
        let first = self
            .components
            .first()
            .ok_or_else(|| Error::Validation("components: mixture has no components".into()))?;
        let d = first.mean.len();
        if d == 0 {
            return Err(Error::Validation("components[0].mean: empty mean".into()));
        }
        let mut total = 0.0;
        for (c, comp) in self.components.iter().enumerate() {
            if !(comp.weight >= 0.0 && comp.weight.is_finite()) {
                return Err(Error::Validation(format!(
                    "components[{c}].weight: must be a finite probability, got {}",
                    comp.weight
                )));
            }
            total += comp.weight;
            if comp.mean.len() != d || comp.stddev.len() != d {
                return Err(Error::Validation(format!(
                    "components[{c}]: mean/stddev must both have length {d}"
                )));
            }
            if comp.mean.iter().any(|m| !m.is_finite()) {
                return Err(Error::Validation(format!(
                    "components[{c}].mean: non-finite entry"
                )));
            }
            if let Some(s) = comp.stddev.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
                return Err(Error::Validation(format!(
                    "components[{c}].stddev: must be positive, got {s}"
                )));
            }
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!(
                "components[].weight: weights sum to {total}, expected 1"
            )));
        }
        Ok(d)
    }

    pub fn dim(&self) -> usize {
        self.components.first().map(|c| c.mean.len()).unwrap_or(0)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: GmmSpec = serde_json::from_str(&text)?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Draws `n` i.i.d. tasks: component by weight, then independent per-dimension
/// Gaussians. Ids are `t0 … t{n-1}`.
pub fn sample_tasks(gmm: &GmmSpec, n: usize, seed: u64) -> Result<TaskSet> {
    if n == 0 {
        return Err(Error::Precondition("n must be >= 1".into()));
    }
    let rows = sample_rows(gmm, n, seed)?;
    let ids = (0..n).map(|i| format!("t{i}")).collect();
    TaskSet::new(ids, rows.into_iter().map(TaskParams).collect())
}

/// Raw sampler behind [`sample_tasks`], also used for large Monte Carlo draws.
pub fn sample_rows(gmm: &GmmSpec, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    gmm.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chooser = WeightedIndex::new(gmm.components.iter().map(|c| c.weight))
        .map_err(|e| Error::Validation(format!("components[].weight: {e}")))?;
    let normals: Vec<Vec<Normal<f64>>> = gmm
        .components
        .iter()
        .map(|c| {
            c.mean
                .iter()
                .zip(&c.stddev)
                .map(|(&m, &s)| Normal::new(m, s).expect("validated stddev"))
                .collect()
        })
        .collect();
    Ok((0..n)
        .map(|_| {
            let c = chooser.sample(&mut rng);
            normals[c].iter().map(|g| g.sample(&mut rng)).collect()
        })
        .collect())
}

/// Number of i.i.d. samples sufficient for the greedy-cover generalization
/// guarantee: `ceil(9 ln(5/α) / (2β²))`.
pub fn required_sample_size(alpha: f64, beta: f64) -> Result<u64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Precondition(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::Precondition(format!(
            "beta must lie in (0, 1), got {beta}"
        )));
    }
    Ok((9.0 * (5.0 / alpha).ln() / (2.0 * beta * beta)).ceil() as u64)
}
