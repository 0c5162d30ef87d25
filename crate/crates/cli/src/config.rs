//! The run configuration document.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use contiqa::dataset::TaskDataset;
use contiqa::synthbench::{
    generate_sequence, read_sequence, reorder, BenchmarkShape, SequenceSpec,
};
use contiqa::thurstone::PairConfig;
use contiqa::trainer::{Method, SequenceConfig, TrainConfig};
use contiqa::TrunkConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Where the task stream comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// The synthetic benchmark, regenerated for every replicate seed.
    Benchmark(BenchmarkShape),
    /// An explicit synthetic sequence; the same data for every seed.
    Spec(SequenceSpec),
    /// A directory written by `gen`, resolved against the config file.
    Generated(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrunkSection {
    pub layer_widths: Vec<usize>,
    pub frozen_prefix_layers: usize,
    pub normalize: bool,
}

impl Default for TrunkSection {
    fn default() -> Self {
        let t = TrunkConfig::new(1);
        TrunkSection {
            layer_widths: t.layer_widths,
            frozen_prefix_layers: t.frozen_prefix_layers,
            normalize: t.normalize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSource,
    /// Training order as a permutation of task indices; identity if absent.
    pub order: Option<Vec<usize>>,
    pub trunk: TrunkSection,
    pub pairs_per_task: usize,
    /// Schedule and regularization. `method` and `seed` are set per cell.
    pub train: TrainConfig,
    pub tau: f64,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: DataSource::Benchmark(BenchmarkShape::default()),
            order: None,
            trunk: TrunkSection::default(),
            pairs_per_task: PairConfig::default().pairs_per_task,
            train: TrainConfig::synthetic(Method::LwfAw, 0),
            tau: contiqa::summarizer::DEFAULT_TAU,
            methods: vec![Method::Sl, Method::MhCl, Method::LwfAw],
            seeds: vec![0],
        }
    }
}

impl RunConfig {
    /// Reads a config; relative dataset directories are resolved against
    /// the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut config =
            Self::parse(&text).with_context(|| format!("parsing {}", path.display()))?;
        if let DataSource::Generated(dir) = &mut config.data {
            if dir.is_relative() {
                *dir = path.parent().unwrap_or(Path::new(".")).join(&*dir);
            }
        }
        config.validate()?;
        Ok(config)
    }

    /// Parses a document in which any field may be omitted; omitted fields,
    /// at any depth, take their default values.
    pub fn parse(text: &str) -> Result<Self> {
        let user: Value = serde_json::from_str(text)?;
        if !user.is_object() {
            bail!("config must be a JSON object");
        }
        let mut merged = serde_json::to_value(RunConfig::default())?;
        if let (Some(old), Some(new)) = (merged.get("data"), user.get("data")) {
            if variant(old) != variant(new) {
                merged["data"] = Value::Null;
            }
        }
        merge(&mut merged, user);
        Ok(serde_json::from_value(merged)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            bail!("no methods configured");
        }
        if self.seeds.is_empty() {
            bail!("no seeds configured");
        }
        if self.tau.is_nan() || self.tau < 0.0 {
            bail!("tau must be non-negative, got {}", self.tau);
        }
        Ok(())
    }

    /// The synthetic sequence for a seed, if the data is synthetic.
    pub fn sequence_spec(&self, seed: u64) -> Result<Option<SequenceSpec>> {
        Ok(match &self.data {
            DataSource::Benchmark(shape) => Some(SequenceSpec::with_shape(shape, seed)?),
            DataSource::Spec(spec) => Some(spec.clone()),
            DataSource::Generated(_) => None,
        })
    }

    /// Tasks for one replicate, in training order.
    pub fn tasks(&self, seed: u64) -> Result<Vec<TaskDataset>> {
        let tasks = match (&self.data, self.sequence_spec(seed)?) {
            (_, Some(spec)) => generate_sequence(&spec)?,
            (DataSource::Generated(dir), None) => {
                read_sequence(dir)
                    .with_context(|| format!("loading datasets from {}", dir.display()))?
                    .1
            }
            _ => unreachable!("non-synthetic data is always a directory"),
        };
        if let Some(t) = tasks.iter().find(|t| t.dim != tasks[0].dim) {
            bail!(
                "task {} has dimension {}, expected {}",
                t.name,
                t.dim,
                tasks[0].dim
            );
        }
        Ok(match &self.order {
            Some(order) => reorder(&tasks, order)?,
            None => tasks,
        })
    }

    /// Library configuration for one replicate.
    pub fn sequence_config(&self, input_dim: usize, seed: u64) -> SequenceConfig {
        let mut trunk = TrunkConfig::new(input_dim);
        trunk.layer_widths = self.trunk.layer_widths.clone();
        trunk.frozen_prefix_layers = self.trunk.frozen_prefix_layers;
        trunk.normalize = self.trunk.normalize;
        trunk.seed = seed;
        SequenceConfig {
            trunk,
            pairs: PairConfig {
                pairs_per_task: self.pairs_per_task,
                seed,
            },
            train: TrainConfig {
                method: self.methods[0],
                seed,
                ..self.train.clone()
            },
            tau: self.tau,
        }
    }
}

fn variant(v: &Value) -> Option<&String> {
    v.as_object().and_then(|o| o.keys().next())
}

fn merge(base: &mut Value, user: Value) {
    match (base, user) {
        (Value::Object(b), Value::Object(u)) => {
            for (k, v) in u {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
