//! Task summaries and test-time head weighting.
//!
//! Each learned task is summarized by K-means centroids of the normalized
//! stable features of its training samples. At inference the distance from
//! a test input to the nearest centroid of each task is turned into a
//! softmin weighting over heads.

use std::io::Write;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ContinualModel;

/// Default number of centroids per task.
pub const DEFAULT_K: usize = 128;
/// Default softmin temperature.
pub const DEFAULT_TAU: f64 = 16.0;
/// Lloyd iteration cap.
pub const MAX_ITERATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub task_index: usize,
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
}

impl TaskSummary {
    pub fn dim(&self) -> usize {
        self.centroids.first().map(Vec::len).unwrap_or(0)
    }

    /// Number of stored reals.
    pub fn stored_values(&self) -> usize {
        self.centroids.iter().map(Vec::len).sum()
    }
}

/// Output of a K-means run, including the objective after every iteration.
#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub centroids: Array2<f64>,
    pub assignments: Vec<usize>,
    /// Within-cluster sum of squared distances, one entry per iteration.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

// k-means++ seeding: first centre uniform, the rest with probability
// proportional to squared distance to the nearest chosen centre.
fn seed_centroids(points: ArrayView2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = points.nrows();
    let mut chosen = vec![rng.gen_range(0..n)];
    let mut best: Vec<f64> = (0..n)
        .map(|i| sq_dist(points.row(i), points.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let total: f64 = best.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in best.iter().enumerate() {
                if w > 0.0 && target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            if best[pick] == 0.0 {
                // rounding pushed us past the last positive weight
                pick = best.iter().rposition(|&w| w > 0.0).expect("total > 0");
            }
            pick
        } else {
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.gen_range(0..free.len())]
        };
        chosen.push(next);
        for (i, b) in best.iter_mut().enumerate() {
            *b = b.min(sq_dist(points.row(i), points.row(next)));
        }
    }
    points.select(Axis(0), &chosen)
}

fn assign(points: ArrayView2<f64>, centroids: &Array2<f64>) -> (Vec<usize>, f64) {
    let mut total = 0.0;
    let labels = points
        .axis_iter(Axis(0))
        .map(|p| {
            let mut best = (0, f64::INFINITY);
            for (j, c) in centroids.axis_iter(Axis(0)).enumerate() {
                let d = sq_dist(p, c);
                if d < best.1 {
                    best = (j, d);
                }
            }
            total += best.1;
            best.0
        })
        .collect();
    (labels, total)
}

/// Lloyd's algorithm with k-means++ seeding. `k` is clamped to the number
/// of points. Empty clusters keep their previous centroid.
pub fn kmeans(points: ArrayView2<f64>, k: usize, seed: u64) -> Result<KMeansFit> {
    let n = points.nrows();
    if n == 0 {
        return Err(Error::invalid("cannot cluster an empty feature set"));
    }
    if k == 0 {
        return Err(Error::invalid("k must be positive"));
    }
    let k = k.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_centroids(points, k, &mut rng);
    let (mut labels, obj) = assign(points, &centroids);
    let mut trace = vec![obj];
    let mut converged = false;
    for _ in 0..MAX_ITERATIONS {
        let mut sums = Array2::<f64>::zeros(centroids.dim());
        let mut counts = vec![0usize; k];
        for (p, &l) in points.axis_iter(Axis(0)).zip(&labels) {
            let mut row = sums.row_mut(l);
            row += &p;
            counts[l] += 1;
        }
        for (j, &c) in counts.iter().enumerate() {
            if c > 0 {
                let mean = &sums.row(j) / c as f64;
                centroids.row_mut(j).assign(&mean);
            }
        }
        let (next, obj) = assign(points, &centroids);
        trace.push(obj);
        let stable = next == labels;
        labels = next;
        if stable {
            converged = true;
            break;
        }
    }
    Ok(KMeansFit {
        centroids,
        assignments: labels,
        objective_trace: trace,
        converged,
    })
}

/// Summarizes a task by the K-means centroids of its stable features.
pub fn kmeans_summarize(
    features: ArrayView2<f64>,
    k: usize,
    seed: u64,
    task_index: usize,
) -> Result<TaskSummary> {
    let fit = kmeans(features, k, seed)?;
    let centroids: Vec<Vec<f64>> = fit
        .centroids
        .axis_iter(Axis(0))
        .map(|r| r.to_vec())
        .collect();
    Ok(TaskSummary {
        task_index,
        k: centroids.len(),
        centroids,
    })
}

/// Smallest Euclidean distance from `e` to any centroid of the summary.
pub fn min_distance(summary: &TaskSummary, e: &[f64]) -> Result<f64> {
    if summary.dim() != e.len() {
        return Err(Error::DimensionMismatch {
            expected: summary.dim(),
            actual: e.len(),
        });
    }
    let best = summary
        .centroids
        .iter()
        .map(|c| c.iter().zip(e).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    Ok(best.sqrt())
}

/// Softmin weights `exp(-τ d_t) / Σ_k exp(-τ d_k)`.
///
/// Distances are shifted by their minimum before exponentiation, which leaves
/// the weights unchanged and avoids underflow at large `τ`. An infinite `τ`
/// gives the one-hot vector at the first minimum.
pub fn adaptive_weights(distances: &[f64], tau: f64) -> Vec<f64> {
    assert!(!distances.is_empty(), "need at least one distance");
    let min = distances.iter().copied().fold(f64::INFINITY, f64::min);
    if tau.is_infinite() {
        return one_hot(distances.len(), argmin(distances));
    }
    let raw: Vec<f64> = distances.iter().map(|d| (-tau * (d - min)).exp()).collect();
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / z).collect()
}

fn one_hot(n: usize, at: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[at] = 1.0;
    v
}

/// Index of the smallest value; ties go to the lowest index.
pub fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightingMode {
    /// Softmin over nearest-centroid distances.
    Adaptive,
    /// Equal weight on every head.
    Uniform,
    /// Only the head of the nearest task.
    Hard,
    /// The head of the task the input is known to come from.
    Oracle,
    /// The most recently added head.
    Latest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightingConfig {
    pub tau: f64,
    pub mode: WeightingMode,
}

impl Default for WeightingConfig {
    fn default() -> Self {
        WeightingConfig {
            tau: DEFAULT_TAU,
            mode: WeightingMode::Adaptive,
        }
    }
}

impl WeightingConfig {
    pub fn new(mode: WeightingMode, tau: f64) -> Result<Self> {
        if !(tau >= 0.0) {
            return Err(Error::invalid(format!(
                "tau must be non-negative, got {tau}"
            )));
        }
        Ok(WeightingConfig { tau, mode })
    }

    pub fn mode(mode: WeightingMode) -> Self {
        WeightingConfig {
            tau: DEFAULT_TAU,
            mode,
        }
    }
}

/// Per-head weights for one input, given its head count and (for the
/// distance-based modes) its nearest-centroid distances.
pub fn head_weights(
    heads: usize,
    distances: Option<&[f64]>,
    config: &WeightingConfig,
    oracle_task: Option<usize>,
) -> Result<Vec<f64>> {
    if heads == 0 {
        return Err(Error::invalid("model has no heads"));
    }
    if heads == 1 {
        return Ok(vec![1.0]);
    }
    let need = |d: Option<&[f64]>| -> Result<Vec<f64>> {
        let d = d.ok_or_else(|| Error::invalid("task summaries are required for this mode"))?;
        if d.len() != heads {
            return Err(Error::invalid(format!(
                "{} summaries for {heads} heads",
                d.len()
            )));
        }
        Ok(d.to_vec())
    };
    Ok(match config.mode {
        WeightingMode::Adaptive => adaptive_weights(&need(distances)?, config.tau),
        WeightingMode::Hard => one_hot(heads, argmin(&need(distances)?)),
        WeightingMode::Uniform => vec![1.0 / heads as f64; heads],
        WeightingMode::Latest => one_hot(heads, heads - 1),
        WeightingMode::Oracle => {
            let t =
                oracle_task.ok_or_else(|| Error::invalid("oracle mode needs the task index"))?;
            if t >= heads {
                return Err(Error::TaskOutOfRange {
                    index: t,
                    learned: heads,
                });
            }
            one_hot(heads, t)
        }
    })
}

fn needs_distances(mode: WeightingMode) -> bool {
    matches!(mode, WeightingMode::Adaptive | WeightingMode::Hard)
}

/// Nearest-centroid distance of every row to every task summary, shape
/// `(rows, tasks)`.
pub fn distance_matrix(model: &ContinualModel, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    let stable = model.stable_features_batch(x)?;
    let summaries = model.summaries();
    let mut out = Array2::zeros((x.nrows(), summaries.len()));
    for (i, row) in stable.axis_iter(Axis(0)).enumerate() {
        let row = row.as_slice().expect("row-major");
        for (t, s) in summaries.iter().enumerate() {
            out[[i, t]] = min_distance(s, row)?;
        }
    }
    Ok(out)
}

/// Fused quality predictions for a batch of inputs.
pub fn predict_batch(
    model: &ContinualModel,
    x: ArrayView2<f64>,
    config: &WeightingConfig,
    oracle_task: Option<usize>,
) -> Result<Vec<f64>> {
    let heads = model.learned_tasks();
    if heads == 0 {
        return Err(Error::invalid("model has no heads"));
    }
    let scores = model.forward(x)?.scores;
    let distances = if heads > 1 && needs_distances(config.mode) {
        Some(distance_matrix(model, x)?)
    } else {
        None
    };
    (0..x.nrows())
        .map(|i| {
            let d = distances.as_ref().map(|m| m.row(i).to_vec());
            let w = head_weights(heads, d.as_deref(), config, oracle_task)?;
            Ok(w.iter().zip(scores.row(i)).map(|(a, s)| a * s).sum())
        })
        .collect()
}

/// Fused quality prediction `Σ_t a_t · h_t(embed(x))` for one input.
pub fn predict_quality(
    model: &ContinualModel,
    x: &[f64],
    config: &WeightingConfig,
    oracle_task: Option<usize>,
) -> Result<f64> {
    let view = ArrayView2::from_shape((1, x.len()), x).expect("row");
    Ok(predict_batch(model, view, config, oracle_task)?[0])
}

/// Writes summaries as a `task_index,centroid_index,c0,...` table.
pub fn write_summary_table<W: Write>(mut out: W, summaries: &[TaskSummary]) -> std::io::Result<()> {
    let dim = summaries.first().map(TaskSummary::dim).unwrap_or(0);
    write!(out, "task_index,centroid_index")?;
    for j in 0..dim {
        write!(out, ",c{j}")?;
    }
    writeln!(out)?;
    for s in summaries {
        for (j, c) in s.centroids.iter().enumerate() {
            write!(out, "{},{}", s.task_index, j)?;
            for v in c {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}
