//! Synthetic task sequences with a shared latent quality scale and
//! controlled subpopulation shift.
//!
//! Every task draws features from its own Gaussian mixture, displaced by a
//! task-specific offset, and scores them through one shared latent function
//! `g`. Each task then reports MOS on its own strictly increasing rescaling
//! of `g`, plus Gaussian opinion noise.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{write_feature_table, QualitySample, TaskDataset};
use crate::error::{Error, Result};

/// A strictly increasing map from latent quality to a task's MOS scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum QualityMap {
    Identity,
    Affine { a: f64, b: f64 },
    Logistic { scale: f64 },
    CubeRoot,
}

impl QualityMap {
    pub fn apply(&self, g: f64) -> f64 {
        match *self {
            QualityMap::Identity => g,
            QualityMap::Affine { a, b } => a * g + b,
            QualityMap::Logistic { scale } => 1.0 / (1.0 + (-g / scale).exp()),
            QualityMap::CubeRoot => g.cbrt(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            QualityMap::Affine { a, .. } if !(a > 0.0) => Err(Error::invalid(format!(
                "affine slope must be positive, got {a}"
            ))),
            QualityMap::Logistic { scale } if !(scale > 0.0) => Err(Error::invalid(format!(
                "logistic scale must be positive, got {scale}"
            ))),
            _ => Ok(()),
        }
    }
}

/// Opinion noise: an absolute standard deviation, or a fraction of the
/// task's noiseless MOS range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseLevel {
    Absolute(f64),
    RelativeToRange(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub n_train: usize,
    pub n_test: usize,
    pub n_clusters: usize,
    /// Per-coordinate standard deviation of samples around their cluster centre.
    pub cluster_spread: f64,
    /// Distance of each cluster centre from the task offset.
    pub center_radius: f64,
    pub feature_dim: usize,
    pub quality_map: QualityMap,
    pub noise: NoiseLevel,
    pub shift_offset: Vec<f64>,
    /// Part of this task drawn from subpopulations bordering an earlier task.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revisit: Option<Revisit>,
}

/// Draws `fraction` of a task's samples from clusters placed exactly at the
/// minimum allowed separation from each cluster of task `source` (0-based,
/// earlier in the sequence). Test images from these clusters are hard to
/// attribute to a single task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Revisit {
    pub source: usize,
    pub fraction: f64,
}

/// Cluster centres of distinct tasks must be at least this many spreads apart.
pub const MIN_SEPARATION: f64 = 4.0;

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        self.quality_map.validate()?;
        if self.n_train == 0 || self.n_test == 0 || self.n_clusters == 0 || self.feature_dim == 0 {
            return Err(Error::invalid(format!(
                "task {}: sizes must be positive",
                self.name
            )));
        }
        if !(self.cluster_spread > 0.0) || !(self.center_radius >= 0.0) {
            return Err(Error::invalid(format!(
                "task {}: invalid spread or radius",
                self.name
            )));
        }
        if self.shift_offset.len() != self.feature_dim {
            return Err(Error::DimensionMismatch {
                expected: self.feature_dim,
                actual: self.shift_offset.len(),
            });
        }
        let level = match self.noise {
            NoiseLevel::Absolute(v) | NoiseLevel::RelativeToRange(v) => v,
        };
        if !(level >= 0.0) {
            return Err(Error::invalid(format!(
                "task {}: noise must be non-negative",
                self.name
            )));
        }
        if let Some(r) = self.revisit {
            if !(0.0..=1.0).contains(&r.fraction) {
                return Err(Error::invalid(format!(
                    "task {}: revisit fraction outside [0, 1]",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

/// The shared latent quality function: a fixed random two-layer rectifier
/// network `g(x) = v · relu(W x + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentModel {
    pub input_dim: usize,
    pub hidden: usize,
    pub seed: u64,
    weights: Vec<f64>,
    biases: Vec<f64>,
    output: Vec<f64>,
}

impl LatentModel {
    pub fn new(input_dim: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize, std: f64| -> Vec<f64> {
            (0..n)
                .map(|_| std * rng.sample::<f64, _>(StandardNormal))
                .collect()
        };
        let weights = draw(hidden * input_dim, 1.0);
        let biases = draw(hidden, 1.0);
        let output = draw(hidden, (1.0 / hidden as f64).sqrt());
        LatentModel {
            input_dim,
            hidden,
            seed,
            weights,
            biases,
            output,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.input_dim);
        (0..self.hidden)
            .map(|h| {
                let row = &self.weights[h * self.input_dim..(h + 1) * self.input_dim];
                let z = self.biases[h] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
                self.output[h] * z.max(0.0)
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentSpec {
    pub hidden: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSpec {
    pub tasks: Vec<TaskSpec>,
    pub latent: LatentSpec,
    pub seed: u64,
}

fn cluster_centers(spec: &TaskSpec, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..spec.n_clusters)
        .map(|_| {
            let dir = random_unit(spec.feature_dim, rng);
            spec.shift_offset
                .iter()
                .zip(dir)
                .map(|(o, u)| o + spec.center_radius * u)
                .collect()
        })
        .collect()
}

fn random_unit(d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn task_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generates one task from explicit cluster centres. With probability
/// `revisit_fraction` a sample comes from `revisit` instead of `centers`.
fn generate_with_centers(
    spec: &TaskSpec,
    centers: &[Vec<f64>],
    revisit: &[Vec<f64>],
    revisit_fraction: f64,
    latent: &LatentModel,
    rng: &mut ChaCha8Rng,
    id_prefix: &str,
) -> Result<TaskDataset> {
    spec.validate()?;
    if latent.input_dim != spec.feature_dim {
        return Err(Error::DimensionMismatch {
            expected: spec.feature_dim,
            actual: latent.input_dim,
        });
    }
    let total = spec.n_train + spec.n_test;
    let spread = Normal::new(0.0, spec.cluster_spread).expect("validated spread");
    let mut features = Vec::with_capacity(total);
    for _ in 0..total {
        let pool = if !revisit.is_empty() && rng.gen::<f64>() < revisit_fraction {
            revisit
        } else {
            centers
        };
        let c = &pool[rng.gen_range(0..pool.len())];
        features.push(
            c.iter()
                .map(|m| m + spread.sample(rng))
                .collect::<Vec<f64>>(),
        );
    }
    let clean: Vec<f64> = features
        .iter()
        .map(|x| spec.quality_map.apply(latent.eval(x)))
        .collect();
    let sigma = match spec.noise {
        NoiseLevel::Absolute(s) => s,
        NoiseLevel::RelativeToRange(frac) => {
            let lo = clean.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = clean.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            frac * (hi - lo)
        }
    };
    let mut samples = Vec::with_capacity(total);
    for (i, (x, q)) in features.into_iter().zip(clean).enumerate() {
        let noise = if sigma > 0.0 {
            sigma * rng.sample::<f64, _>(StandardNormal)
        } else {
            0.0
        };
        let split = if i < spec.n_train { "tr" } else { "te" };
        samples.push(QualitySample::new(
            format!("{id_prefix}-{split}{i}"),
            x,
            q + noise,
            sigma,
        )?);
    }
    let test = samples.split_off(spec.n_train);
    TaskDataset::new(spec.name.clone(), samples, test)
}

/// Generates a single task: mixture features, latent scores, mapped MOS.
/// Revisits need the rest of the sequence and are rejected here.
pub fn generate_task(spec: &TaskSpec, latent: &LatentModel, seed: u64) -> Result<TaskDataset> {
    spec.validate()?;
    if spec.revisit.is_some() {
        return Err(Error::invalid(format!(
            "task {} revisits another task; generate the whole sequence",
            spec.name
        )));
    }
    let mut rng = task_rng(seed, 0);
    let centers = cluster_centers(spec, &mut rng);
    generate_with_centers(
        spec,
        &centers,
        &[],
        0.0,
        latent,
        &mut rng,
        &format!("{}-{seed}", spec.name),
    )
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

const CENTER_ATTEMPTS: usize = 64;

/// Generates every task of a sequence with a shared latent function, drawing
/// cluster centres until every cross-task pair of centres is at least
/// `MIN_SEPARATION · cluster_spread` apart.
pub fn generate_sequence(spec: &SequenceSpec) -> Result<Vec<TaskDataset>> {
    if spec.tasks.len() < 2 {
        return Err(Error::invalid("a sequence needs at least two tasks"));
    }
    let dim = spec.tasks[0].feature_dim;
    for (i, t) in spec.tasks.iter().enumerate() {
        t.validate()?;
        if t.feature_dim != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: t.feature_dim,
            });
        }
        if let Some(r) = t.revisit {
            if r.source >= i {
                return Err(Error::invalid(format!(
                    "task {} can only revisit an earlier task, not {}",
                    t.name, r.source
                )));
            }
        }
    }
    let latent = LatentModel::new(dim, spec.latent.hidden, spec.latent.seed);
    let mut rngs: Vec<ChaCha8Rng> = (0..spec.tasks.len())
        .map(|i| task_rng(spec.seed, i as u64 + 1))
        .collect();

    // Every centre placed so far, tagged with its task's spread.
    let mut placed: Vec<(f64, Vec<f64>)> = Vec::new();
    let fits = |c: &[f64], spread: f64, placed: &[(f64, Vec<f64>)]| {
        placed
            .iter()
            .all(|(s, p)| distance(c, p) >= MIN_SEPARATION * spread.max(*s))
    };
    let unsatisfiable = |task: &TaskSpec| {
        Error::Unsatisfiable(format!(
            "task {} cannot be placed {MIN_SEPARATION}x its spread away from earlier tasks in {dim} dimensions",
            task.name
        ))
    };

    let mut own: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut extra: Vec<Vec<Vec<f64>>> = Vec::new();
    for (i, task) in spec.tasks.iter().enumerate() {
        let cand = (0..CENTER_ATTEMPTS)
            .map(|_| cluster_centers(task, &mut rngs[i]))
            .find(|cand| cand.iter().all(|c| fits(c, task.cluster_spread, &placed)))
            .ok_or_else(|| unsatisfiable(task))?;
        let mut revisit = Vec::new();
        if let Some(r) = task.revisit {
            let gap = MIN_SEPARATION * task.cluster_spread.max(spec.tasks[r.source].cluster_spread);
            // nudged outward so rounding cannot land inside the minimum
            let gap = gap * (1.0 + 1e-9);
            for src in &own[r.source] {
                let c = (0..CENTER_ATTEMPTS)
                    .map(|_| {
                        let u = random_unit(dim, &mut rngs[i]);
                        src.iter()
                            .zip(u)
                            .map(|(s, v)| s + gap * v)
                            .collect::<Vec<f64>>()
                    })
                    .find(|c| fits(c, task.cluster_spread, &placed))
                    .ok_or_else(|| unsatisfiable(task))?;
                revisit.push(c);
            }
        }
        placed.extend(
            cand.iter()
                .chain(&revisit)
                .map(|c| (task.cluster_spread, c.clone())),
        );
        own.push(cand);
        extra.push(revisit);
    }

    spec.tasks
        .iter()
        .enumerate()
        .zip(rngs.iter_mut())
        .map(|((i, task), rng)| {
            let fraction = task.revisit.map_or(0.0, |r| r.fraction);
            let prefix = format!("{}-{}", task.name, spec.seed);
            generate_with_centers(task, &own[i], &extra[i], fraction, &latent, rng, &prefix)
        })
        .collect()
}

/// Offsets of norm `radius` along mutually orthogonal random directions.
pub fn orthogonal_offsets(
    count: usize,
    dim: usize,
    radius: f64,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if count > dim {
        return Err(Error::Unsatisfiable(format!(
            "{count} orthogonal offsets do not fit in {dim} dimensions"
        )));
    }
    let mut rng = task_rng(seed, u64::MAX);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v = random_unit(dim, &mut rng);
        for b in &basis {
            let proj: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            basis.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    Ok(basis
        .into_iter()
        .map(|b| b.into_iter().map(|x| x * radius).collect())
        .collect())
}

/// Knobs of the default benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkShape {
    pub tasks: usize,
    pub feature_dim: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub n_clusters: usize,
    pub cluster_spread: f64,
    pub center_radius: f64,
    pub offset_radius: f64,
    /// Fraction of the last task's samples drawn from subpopulations next
    /// to the first task's clusters.
    #[serde(default)]
    pub last_task_revisit: f64,
    pub relative_noise: f64,
    pub latent_hidden: usize,
}

impl Default for BenchmarkShape {
    fn default() -> Self {
        BenchmarkShape {
            tasks: 4,
            feature_dim: 32,
            n_train: 600,
            n_test: 150,
            n_clusters: 4,
            cluster_spread: 0.08,
            center_radius: 0.35,
            offset_radius: 1.0,
            last_task_revisit: 0.3,
            relative_noise: 0.05,
            latent_hidden: 32,
        }
    }
}

/// Quality maps cycle through identity, affine, logistic and cube root.
pub fn default_quality_map(task: usize) -> QualityMap {
    match task % 4 {
        0 => QualityMap::Identity,
        1 => QualityMap::Affine { a: 3.0, b: -1.0 },
        2 => QualityMap::Logistic { scale: 0.5 },
        _ => QualityMap::CubeRoot,
    }
}

impl SequenceSpec {
    /// The default benchmark for a given seed.
    pub fn benchmark(seed: u64) -> Result<Self> {
        Self::with_shape(&BenchmarkShape::default(), seed)
    }

    pub fn with_shape(shape: &BenchmarkShape, seed: u64) -> Result<Self> {
        let offsets =
            orthogonal_offsets(shape.tasks, shape.feature_dim, shape.offset_radius, seed)?;
        let last = shape.tasks.saturating_sub(1);
        let tasks = offsets
            .into_iter()
            .enumerate()
            .map(|(i, shift_offset)| TaskSpec {
                name: format!("task{}", i + 1),
                n_train: shape.n_train,
                n_test: shape.n_test,
                n_clusters: shape.n_clusters,
                cluster_spread: shape.cluster_spread,
                center_radius: shape.center_radius,
                feature_dim: shape.feature_dim,
                quality_map: default_quality_map(i),
                noise: NoiseLevel::RelativeToRange(shape.relative_noise),
                shift_offset,
                revisit: (i == last && i > 0 && shape.last_task_revisit > 0.0).then_some(Revisit {
                    source: 0,
                    fraction: shape.last_task_revisit,
                }),
            })
            .collect();
        Ok(SequenceSpec {
            tasks,
            latent: LatentSpec {
                hidden: shape.latent_hidden,
                seed: seed ^ 0x5eed_1a7e,
            },
            seed,
        })
    }
}

/// `items` reordered by `order`, which must be a permutation of its indices.
/// Used to train the same generated tasks in a different sequence.
pub fn reorder<T: Clone>(items: &[T], order: &[usize]) -> Result<Vec<T>> {
    let mut seen = vec![false; items.len()];
    if order.len() != items.len()
        || order
            .iter()
            .any(|&i| i >= seen.len() || std::mem::replace(&mut seen[i], true))
    {
        return Err(Error::invalid("task order must be a permutation"));
    }
    Ok(order.iter().map(|&i| items[i].clone()).collect())
}

/// Record of a generated sequence: the full spec plus emitted file names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: SequenceSpec,
    pub tasks: Vec<ManifestTask>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestTask {
    pub name: String,
    pub dim: usize,
    pub train_file: PathBuf,
    pub test_file: PathBuf,
}

/// Writes every task as train/test feature tables plus `manifest.json`.
pub fn write_sequence(dir: &Path, spec: &SequenceSpec, tasks: &[TaskDataset]) -> Result<Manifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(tasks.len());
    for (i, task) in tasks.iter().enumerate() {
        let stem = format!("{:02}_{}", i + 1, task.name);
        let train_file = PathBuf::from(format!("{stem}_train.csv"));
        let test_file = PathBuf::from(format!("{stem}_test.csv"));
        for (file, split) in [(&train_file, &task.train), (&test_file, &task.test)] {
            let mut buf = Vec::new();
            write_feature_table(&mut buf, split)?;
            crate::io::write_atomic(&dir.join(file), &buf)?;
        }
        entries.push(ManifestTask {
            name: task.name.clone(),
            dim: task.dim,
            train_file,
            test_file,
        });
    }
    let manifest = Manifest {
        spec: spec.clone(),
        tasks: entries,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    crate::io::write_atomic(&dir.join("manifest.json"), text.as_bytes())?;
    Ok(manifest)
}

/// Loads the datasets listed in a manifest directory.
pub fn read_sequence(dir: &Path) -> Result<(Manifest, Vec<TaskDataset>)> {
    let path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    let tasks = manifest
        .tasks
        .iter()
        .map(|t| {
            let train = crate::dataset::read_feature_file(&dir.join(&t.train_file))?;
            let test = crate::dataset::read_feature_file(&dir.join(&t.test_file))?;
            TaskDataset::new(t.name.clone(), train, test)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, tasks))
}
