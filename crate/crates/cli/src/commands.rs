//! Subcommand implementations. Each returns the files it wrote so callers
//! and tests can check the output contract.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use contiqa::io::write_atomic;
use contiqa::metrics::MetricsRecord;
use contiqa::synthbench::{generate_sequence, write_sequence};
use contiqa::trainer::{run_methods, write_run_log, Method, Regime};
use contiqa::ContinualModel;

use crate::config::RunConfig;
use crate::plot::{psr_plot, Series};

pub const METRICS_DIR: &str = "metrics";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const LOG_DIR: &str = "logs";

/// Writes the synthetic datasets and manifest for `seed` into `out`.
pub fn gen(config: &RunConfig, seed: u64, out: &Path) -> Result<Vec<PathBuf>> {
    let spec = config
        .sequence_spec(seed)?
        .context("gen needs synthetic data (a benchmark shape or sequence spec)")?;
    let tasks = generate_sequence(&spec)?;
    let manifest = write_sequence(out, &spec, &tasks)?;
    let mut files: Vec<PathBuf> = manifest
        .tasks
        .iter()
        .flat_map(|t| [out.join(&t.train_file), out.join(&t.test_file)])
        .collect();
    files.push(out.join("manifest.json"));
    log::info!("wrote {} tasks to {}", tasks.len(), out.display());
    Ok(files)
}

/// File stem of a metrics document.
pub fn metrics_stem(method: Method, seed: u64) -> String {
    format!("{}_seed{seed}", method.name())
}

fn regime_label(regime: Regime) -> String {
    match regime {
        Regime::Separate => "separate".into(),
        Regime::Joint => "joint".into(),
        Regime::SingleHead => "single-head".into(),
        Regime::MultiHead(r) => format!(
            "multi-head-{}",
            serde_json::to_value(r).unwrap().as_str().unwrap()
        ),
    }
}

/// Trains and evaluates every (method, seed) cell. Writes per cell a metrics
/// document and SRCC table, and per (regime, seed) one checkpoint per task
/// and a run log.
pub fn run(config: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let mut files = Vec::new();
    let resolved = out.join("config.json");
    write_atomic(
        &resolved,
        format!("{}\n", serde_json::to_string_pretty(config)?).as_bytes(),
    )?;
    files.push(resolved);
    for &seed in &config.seeds {
        let tasks = config.tasks(seed)?;
        let seq = config.sequence_config(tasks[0].dim, seed);
        log::info!(
            "seed {seed}: {} tasks, methods {:?}",
            tasks.len(),
            config.methods
        );
        let runs = run_methods(&tasks, &seq, &config.methods)?;
        let mut saved = Vec::new();
        for r in &runs {
            let stem = metrics_stem(r.method, seed);
            let dir = out.join(METRICS_DIR);
            let json = dir.join(format!("{stem}.json"));
            write_atomic(&json, r.metrics.to_json()?.as_bytes())?;
            let table = dir.join(format!("{stem}.srcc.tsv"));
            write_atomic(&table, r.metrics.srcc_matrix.to_table().as_bytes())?;
            files.extend([json, table]);

            let label = regime_label(r.method.regime());
            if saved.contains(&label) {
                continue;
            }
            for (t, model) in r.snapshots.iter().enumerate() {
                let path = out
                    .join(CHECKPOINT_DIR)
                    .join(format!("{label}_seed{seed}_task{}.json", t + 1));
                model.save(&path)?;
                files.push(path);
            }
            let mut log = Vec::new();
            write_run_log(&mut log, &r.log)?;
            let path = out.join(LOG_DIR).join(format!("{label}_seed{seed}.jsonl"));
            write_atomic(&path, &log)?;
            files.push(path);
            saved.push(label);
        }
    }
    Ok(files)
}

/// One metrics document found by `report`.
#[derive(Debug, Clone)]
pub struct Cell {
    pub method: String,
    pub seed: u64,
    pub metrics: MetricsRecord,
}

/// Reads every `<method>_seed<n>.json` in `dir` or in its `metrics` subdirectory.
pub fn read_cells(dir: &Path) -> Result<Vec<Cell>> {
    let sub = dir.join(METRICS_DIR);
    let dir = if sub.is_dir() { sub } else { dir.to_path_buf() };
    let mut cells = Vec::new();
    let entries = std::fs::read_dir(&dir).with_context(|| format!("reading {}", dir.display()))?;
    for entry in entries {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let Some(stem) = name.strip_suffix(".json") else {
            continue;
        };
        let Some((method, seed)) = stem.rsplit_once("_seed") else {
            continue;
        };
        let Ok(seed) = seed.parse() else { continue };
        let text = std::fs::read_to_string(&path)?;
        let metrics = MetricsRecord::from_json(&text)
            .with_context(|| format!("parsing {}", path.display()))?;
        cells.push(Cell {
            method: method.to_string(),
            seed,
            metrics,
        });
    }
    if cells.is_empty() {
        bail!("no metrics documents in {}", dir.display());
    }
    cells.sort_by(|a, b| (&a.method, a.seed).cmp(&(&b.method, b.seed)));
    Ok(cells)
}

/// Mean, minimum and maximum.
fn stats(values: &[f64]) -> (f64, f64, f64) {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (mean, min, max)
}

/// Per-method rows: seeds, MPSR and weighted SRCC as (mean, min, max), and
/// the mean PSR curve.
pub struct Summary {
    pub method: String,
    pub seeds: usize,
    pub mpsr: (f64, f64, f64),
    pub weighted_srcc: (f64, f64, f64),
    pub mean_psr: Vec<f64>,
}

pub fn summarize(cells: &[Cell]) -> Vec<Summary> {
    let mut groups: BTreeMap<&str, Vec<&Cell>> = BTreeMap::new();
    for c in cells {
        groups.entry(&c.method).or_default().push(c);
    }
    let mut rows: Vec<Summary> = groups
        .into_iter()
        .map(|(method, cs)| {
            let mpsr: Vec<f64> = cs.iter().map(|c| c.metrics.mpsr).collect();
            let wsrcc: Vec<f64> = cs.iter().map(|c| c.metrics.weighted_srcc).collect();
            let len = cs.iter().map(|c| c.metrics.psr.len()).min().unwrap_or(0);
            let mean_psr = (0..len)
                .map(|t| cs.iter().map(|c| c.metrics.psr[t]).sum::<f64>() / cs.len() as f64)
                .collect();
            Summary {
                method: method.to_string(),
                seeds: cs.len(),
                mpsr: stats(&mpsr),
                weighted_srcc: stats(&wsrcc),
                mean_psr,
            }
        })
        .collect();
    // Known methods in their canonical order, anything else after.
    let rank = |m: &str| {
        Method::ALL
            .iter()
            .position(|k| k.name() == m)
            .unwrap_or(usize::MAX)
    };
    rows.sort_by_key(|r| rank(&r.method));
    rows
}

pub fn format_table(rows: &[Summary]) -> String {
    let mut s = String::new();
    writeln!(
        s,
        "{:<10} {:>5}  {:>8} {:>8}  {:>8} {:>8}",
        "method", "seeds", "MPSR", "range", "wSRCC", "range"
    )
    .unwrap();
    for r in rows {
        writeln!(
            s,
            "{:<10} {:>5}  {:>8.4} {:>8.4}  {:>8.4} {:>8.4}",
            r.method,
            r.seeds,
            r.mpsr.0,
            r.mpsr.2 - r.mpsr.1,
            r.weighted_srcc.0,
            r.weighted_srcc.2 - r.weighted_srcc.1
        )
        .unwrap();
    }
    s
}

/// Writes `report.txt` and `psr.svg` into `out` and returns the table.
pub fn report(dir: &Path, out: &Path) -> Result<(String, Vec<PathBuf>)> {
    let rows = summarize(&read_cells(dir)?);
    let table = format_table(&rows);
    let series: Vec<Series> = rows
        .iter()
        .map(|r| Series {
            label: r.method.clone(),
            values: r.mean_psr.clone(),
        })
        .collect();
    let txt = out.join("report.txt");
    let svg = out.join("psr.svg");
    write_atomic(&txt, table.as_bytes())?;
    write_atomic(&svg, psr_plot(&series).as_bytes())?;
    Ok((table, vec![txt, svg]))
}

/// Human-readable description of a checkpoint.
pub fn inspect(path: &Path) -> Result<String> {
    let model = ContinualModel::load(path)?;
    let c = model.config();
    let mut s = String::new();
    writeln!(s, "checkpoint {}", path.display())?;
    writeln!(
        s,
        "trunk: input {} -> {:?}, frozen prefix {} layer(s), normalize {}",
        c.input_dim, c.layer_widths, c.frozen_prefix_layers, c.normalize
    )?;
    writeln!(
        s,
        "parameters: {} trunk ({} plastic), {} per head",
        model.trunk_param_count(),
        model.plastic_len(),
        model.output_dim()
    )?;
    if let Some(imp) = model.importance() {
        let mean = imp.beta.iter().sum::<f64>() / imp.beta.len().max(1) as f64;
        writeln!(s, "importance: {:?}, mean beta {mean:.4e}", imp.method)?;
    }
    writeln!(
        s,
        "{:<5} {:>10} {:>9} {:>5}",
        "task", "head norm", "centroids", "dim"
    )?;
    for (t, head) in model.heads().iter().enumerate() {
        let norm = head.iter().map(|w| w * w).sum::<f64>().sqrt();
        let (k, d) = model
            .summaries()
            .get(t)
            .map_or((0, 0), |sm| (sm.centroids.len(), sm.dim()));
        writeln!(s, "{:<5} {norm:>10.4} {k:>9} {d:>5}", t + 1)?;
    }
    Ok(s)
}
