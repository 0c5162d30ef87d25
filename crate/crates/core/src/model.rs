//! The multi-head predictor.
//!
//! A dense rectifier trunk maps an input feature vector to a representation
//! which is projected onto the unit hypersphere; each learned task owns a
//! bias-free linear head on that embedding. The first `frozen_prefix_layers`
//! trunk layers form the stable extractor and never change after
//! initialization.
//!
//! All trunk parameters live in one flat buffer (per layer: row-major
//! weights, then biases) so optimizers and importance penalties can treat
//! the plastic part as a single slice.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::ImportanceState;
use crate::summarizer::TaskSummary;
use crate::thurstone::std_normal_cdf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Rectifier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrunkConfig {
    pub input_dim: usize,
    pub layer_widths: Vec<usize>,
    pub frozen_prefix_layers: usize,
    #[serde(default)]
    pub activation: Activation,
    /// Project the trunk output onto the unit sphere before the heads.
    #[serde(default = "default_true")]
    pub normalize: bool,
    pub seed: u64,
}

fn default_true() -> bool {
    true
}

impl TrunkConfig {
    pub fn new(input_dim: usize) -> Self {
        TrunkConfig {
            input_dim,
            layer_widths: vec![256, 128],
            frozen_prefix_layers: 0,
            activation: Activation::Rectifier,
            normalize: true,
            seed: 0,
        }
    }

    /// Embedding dimension D (the input dimension for an empty trunk).
    pub fn output_dim(&self) -> usize {
        self.layer_widths.last().copied().unwrap_or(self.input_dim)
    }

    /// Dimension of the stable (frozen prefix) features.
    pub fn stable_dim(&self) -> usize {
        if self.frozen_prefix_layers == 0 {
            self.input_dim
        } else {
            self.layer_widths[self.frozen_prefix_layers - 1]
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::invalid("input_dim must be positive"));
        }
        if self.layer_widths.contains(&0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        if self.frozen_prefix_layers > self.layer_widths.len() {
            return Err(Error::invalid(format!(
                "frozen_prefix_layers ({}) exceeds layer count ({})",
                self.frozen_prefix_layers,
                self.layer_widths.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct LayerShape {
    input: usize,
    output: usize,
    offset: usize,
}

impl LayerShape {
    fn weight_len(&self) -> usize {
        self.input * self.output
    }
    fn len(&self) -> usize {
        self.weight_len() + self.output
    }
}

/// A unit-norm representation, or the zero vector when the pre-image was zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub values: Vec<f64>,
    pub degenerate: bool,
}

/// Projects `v` onto the unit sphere; the zero vector maps to itself.
pub fn normalize(v: ArrayView1<f64>) -> Embedding {
    let norm = v.dot(&v).sqrt();
    if norm > 0.0 {
        Embedding {
            values: v.iter().map(|x| x / norm).collect(),
            degenerate: false,
        }
    } else {
        Embedding {
            values: vec![0.0; v.len()],
            degenerate: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinualModel {
    config: TrunkConfig,
    layout: Vec<LayerShape>,
    params: Vec<f64>,
    frozen_len: usize,
    heads: Vec<Vec<f64>>,
    summaries: Vec<TaskSummary>,
    #[serde(default)]
    importance: Option<ImportanceState>,
}

/// Gradients with respect to every trainable parameter. `trunk` covers the
/// plastic trunk slice only; frozen parameters have no gradient entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub trunk: Vec<f64>,
    pub heads: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros(model: &ContinualModel) -> Self {
        Gradients {
            trunk: vec![0.0; model.plastic_len()],
            heads: vec![vec![0.0; model.output_dim()]; model.heads.len()],
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.trunk.iter_mut().zip(&other.trunk) {
            *a += b;
        }
        for (ha, hb) in self.heads.iter_mut().zip(&other.heads) {
            for (a, b) in ha.iter_mut().zip(hb) {
                *a += b;
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        self.trunk.iter_mut().for_each(|g| *g *= c);
        self.heads.iter_mut().flatten().for_each(|g| *g *= c);
    }

    pub fn norm(&self) -> f64 {
        self.trunk
            .iter()
            .chain(self.heads.iter().flatten())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }
}

/// Cached activations of a batched forward pass, reused by `backward`.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// `acts[0]` is the input batch, `acts[l + 1]` the output of layer `l`.
    acts: Vec<Array2<f64>>,
    norms: Array1<f64>,
    /// Row-wise embeddings (normalized trunk outputs).
    pub embeddings: Array2<f64>,
    /// Scores of every head for every row, shape `(n, heads)`.
    pub scores: Array2<f64>,
}

impl ForwardPass {
    pub fn len(&self) -> usize {
        self.embeddings.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn degenerate(&self, row: usize) -> bool {
        self.norms[row] == 0.0
    }
}

fn he_normal(rng: &mut ChaCha8Rng, fan_in: usize, n: usize) -> Vec<f64> {
    let dist = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
    (0..n).map(|_| dist.sample(rng)).collect()
}

impl ContinualModel {
    /// Creates a trunk with He-initialized weights and zero biases, no heads.
    pub fn new(config: TrunkConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut layout = Vec::with_capacity(config.layer_widths.len());
        let mut params = Vec::new();
        let mut input = config.input_dim;
        for &output in &config.layer_widths {
            let shape = LayerShape {
                input,
                output,
                offset: params.len(),
            };
            params.extend(he_normal(&mut rng, input, shape.weight_len()));
            params.extend(std::iter::repeat_n(0.0, output));
            layout.push(shape);
            input = output;
        }
        let frozen_len = layout
            .get(config.frozen_prefix_layers)
            .map(|l| l.offset)
            .unwrap_or(params.len());
        Ok(ContinualModel {
            config,
            layout,
            params,
            frozen_len,
            heads: Vec::new(),
            summaries: Vec::new(),
            importance: None,
        })
    }

    pub fn config(&self) -> &TrunkConfig {
        &self.config
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.config.output_dim()
    }

    pub fn learned_tasks(&self) -> usize {
        self.heads.len()
    }

    pub fn trunk_param_count(&self) -> usize {
        self.params.len()
    }

    pub fn plastic_len(&self) -> usize {
        self.params.len() - self.frozen_len
    }

    /// Frozen prefix parameters.
    pub fn frozen_params(&self) -> &[f64] {
        &self.params[..self.frozen_len]
    }

    pub fn plastic_params(&self) -> &[f64] {
        &self.params[self.frozen_len..]
    }

    pub fn plastic_params_mut(&mut self) -> &mut [f64] {
        &mut self.params[self.frozen_len..]
    }

    /// Plastic trunk and heads, borrowed together for an optimizer step.
    pub fn trainable_mut(&mut self) -> (&mut [f64], &mut [Vec<f64>]) {
        (&mut self.params[self.frozen_len..], &mut self.heads)
    }

    pub fn heads(&self) -> &[Vec<f64>] {
        &self.heads
    }

    pub fn head_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.heads[t]
    }

    pub fn summaries(&self) -> &[TaskSummary] {
        &self.summaries
    }

    pub fn importance(&self) -> Option<&ImportanceState> {
        self.importance.as_ref()
    }

    pub fn set_importance(&mut self, state: Option<ImportanceState>) {
        self.importance = state;
    }

    /// Appends a new He-initialized head and returns its index.
    pub fn add_head(&mut self) -> usize {
        let t = self.heads.len();
        let mut rng = ChaCha8Rng::seed_from_u64(
            self.config
                .seed
                .wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(t as u64 + 1)),
        );
        let d = self.output_dim();
        self.heads.push(he_normal(&mut rng, d, d));
        t
    }

    /// Appends the summary for the most recent head, or replaces the summary
    /// of a single-head model that keeps re-learning its only head.
    pub fn set_summary(&mut self, t: usize, summary: TaskSummary) -> Result<()> {
        if t >= self.heads.len() {
            return Err(Error::TaskOutOfRange {
                index: t,
                learned: self.heads.len(),
            });
        }
        if t < self.summaries.len() {
            self.summaries[t] = summary;
        } else if t == self.summaries.len() {
            self.summaries.push(summary);
        } else {
            return Err(Error::invalid("summaries must be added in head order"));
        }
        Ok(())
    }

    fn layer_weights(&self, l: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let s = self.layout[l];
        let w = &self.params[s.offset..s.offset + s.weight_len()];
        let b = &self.params[s.offset + s.weight_len()..s.offset + s.len()];
        (
            ArrayView2::from_shape((s.output, s.input), w).expect("layout"),
            ArrayView1::from(b),
        )
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.config.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.input_dim,
                actual: cols,
            });
        }
        Ok(())
    }

    // Pushes the outputs of layers `0..upto`; `acts` must start with the input.
    fn apply_layers(&self, upto: usize, acts: &mut Vec<Array2<f64>>) {
        for l in 0..upto {
            let (w, b) = self.layer_weights(l);
            let mut z = acts.last().expect("input present").dot(&w.t());
            z += &b;
            z.mapv_inplace(|v| v.max(0.0));
            acts.push(z);
        }
    }

    /// Batched forward pass through trunk, normalization and every head.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<ForwardPass> {
        self.check_input(x.ncols())?;
        let mut acts = vec![x.to_owned()];
        self.apply_layers(self.layout.len(), &mut acts);
        let out = acts.last().expect("input present");
        let mut norms = Array1::zeros(out.nrows());
        let mut embeddings = out.clone();
        for (i, mut row) in embeddings.axis_iter_mut(Axis(0)).enumerate() {
            let n = row.dot(&row).sqrt();
            norms[i] = n;
            if self.config.normalize {
                if n > 0.0 {
                    row /= n;
                } else {
                    row.fill(0.0);
                }
            }
        }
        let scores = if self.heads.is_empty() {
            Array2::zeros((out.nrows(), 0))
        } else {
            embeddings.dot(&self.head_matrix().t())
        };
        Ok(ForwardPass {
            acts,
            norms,
            embeddings,
            scores,
        })
    }

    fn head_matrix(&self) -> Array2<f64> {
        let d = self.output_dim();
        let flat: Vec<f64> = self.heads.iter().flatten().copied().collect();
        Array2::from_shape_vec((self.heads.len(), d), flat).expect("head dims")
    }

    /// Reverse-mode gradients given `seeds[i, t] = ∂L/∂score(row i, head t)`.
    ///
    /// `trunk` selects whether to backpropagate into the plastic trunk; when
    /// false the returned trunk gradient is all zeros.
    pub fn backward(&self, pass: &ForwardPass, seeds: ArrayView2<f64>, trunk: bool) -> Gradients {
        let t = self.heads.len();
        assert_eq!(
            seeds.dim(),
            (pass.len(), t),
            "seed shape must be (rows, heads)"
        );
        let mut grads = Gradients::zeros(self);
        let head_grad = seeds.t().dot(&pass.embeddings);
        for (h, row) in grads.heads.iter_mut().zip(head_grad.axis_iter(Axis(0))) {
            h.copy_from_slice(row.as_slice().expect("contiguous"));
        }
        if !trunk || self.plastic_len() == 0 {
            return grads;
        }

        // ∂L/∂e, then through the normalization: (I - e eᵀ) g / ‖u‖.
        let mut delta = seeds.dot(&self.head_matrix());
        if self.config.normalize {
            for (i, mut row) in delta.axis_iter_mut(Axis(0)).enumerate() {
                let n = pass.norms[i];
                if n == 0.0 {
                    row.fill(0.0);
                    continue;
                }
                let e = pass.embeddings.row(i);
                let proj = e.dot(&row);
                row.zip_mut_with(&e, |g, &ev| *g = (*g - proj * ev) / n);
            }
        }

        let first_plastic = self.config.frozen_prefix_layers;
        for l in (first_plastic..self.layout.len()).rev() {
            let out = &pass.acts[l + 1];
            delta.zip_mut_with(out, |g, &a| {
                if a <= 0.0 {
                    *g = 0.0
                }
            });
            let shape = self.layout[l];
            let input = &pass.acts[l];
            let dw = delta.t().dot(input);
            let db = delta.sum_axis(Axis(0));
            let base = shape.offset - self.frozen_len;
            grads.trunk[base..base + shape.weight_len()]
                .copy_from_slice(dw.as_slice().expect("standard layout"));
            grads.trunk[base + shape.weight_len()..base + shape.len()]
                .copy_from_slice(db.as_slice().expect("standard layout"));
            if l > first_plastic {
                let (w, _) = self.layer_weights(l);
                delta = delta.dot(&w);
            }
        }
        grads
    }

    /// Trunk output followed by normalization, for a single input.
    pub fn embed(&self, x: &[f64]) -> Result<Embedding> {
        let pass = self.forward(ArrayView2::from_shape((1, x.len()), x).expect("row"))?;
        Ok(Embedding {
            values: pass.embeddings.row(0).to_vec(),
            degenerate: pass.degenerate(0),
        })
    }

    /// Normalized output of the frozen prefix (the identity when empty).
    pub fn stable_features(&self, x: &[f64]) -> Result<Embedding> {
        let batch =
            self.stable_features_batch(ArrayView2::from_shape((1, x.len()), x).expect("row"))?;
        let row = batch.row(0);
        Ok(Embedding {
            degenerate: row.iter().all(|v| *v == 0.0),
            values: row.to_vec(),
        })
    }

    /// Row-wise normalized stable features of a batch.
    pub fn stable_features_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(x.ncols())?;
        let mut acts = vec![x.to_owned()];
        self.apply_layers(self.config.frozen_prefix_layers, &mut acts);
        let mut out = acts.pop().expect("input present");
        for mut row in out.axis_iter_mut(Axis(0)) {
            let n = row.dot(&row).sqrt();
            if n > 0.0 {
                row /= n;
            }
        }
        Ok(out)
    }

    fn check_task(&self, t: usize) -> Result<()> {
        if t >= self.heads.len() {
            return Err(Error::TaskOutOfRange {
                index: t,
                learned: self.heads.len(),
            });
        }
        Ok(())
    }

    /// Inner product of head `t` (0-based) with an embedding.
    pub fn head_score(&self, t: usize, e: &Embedding) -> Result<f64> {
        self.check_task(t)?;
        if e.values.len() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.output_dim(),
                actual: e.values.len(),
            });
        }
        Ok(self.heads[t]
            .iter()
            .zip(&e.values)
            .map(|(a, b)| a * b)
            .sum())
    }

    /// Head-`t` probability that `x` is of higher quality than `y`.
    pub fn predicted_preference(&self, t: usize, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_task(t)?;
        let sx = self.head_score(t, &self.embed(x)?)?;
        let sy = self.head_score(t, &self.embed(y)?)?;
        Ok(preference_from_scores(sx, sy))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        crate::io::write_atomic(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: ContinualModel = serde_json::from_str(&text)?;
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        let fresh = ContinualModel::new(self.config.clone())?;
        if fresh.layout != self.layout || fresh.params.len() != self.params.len() {
            return Err(Error::invalid(
                "checkpoint parameters do not match its trunk config",
            ));
        }
        if fresh.frozen_len != self.frozen_len {
            return Err(Error::invalid(
                "checkpoint frozen prefix does not match its config",
            ));
        }
        if self.heads.iter().any(|h| h.len() != self.output_dim()) {
            return Err(Error::invalid("checkpoint head has wrong dimension"));
        }
        if self.summaries.len() > self.heads.len() {
            return Err(Error::invalid("checkpoint has more summaries than heads"));
        }
        Ok(())
    }
}

/// Thurstone Case V preference from two unit-variance quality scores.
#[inline]
pub fn preference_from_scores(sx: f64, sy: f64) -> f64 {
    std_normal_cdf((sx - sy) / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn small(seed: u64, widths: Vec<usize>, frozen: usize) -> ContinualModel {
        ContinualModel::new(TrunkConfig {
            input_dim: 4,
            layer_widths: widths,
            frozen_prefix_layers: frozen,
            activation: Activation::Rectifier,
            normalize: true,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn init_is_deterministic() {
        let mut cfg = TrunkConfig::new(32);
        cfg.seed = 7;
        let a = ContinualModel::new(cfg.clone()).unwrap();
        let b = ContinualModel::new(cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.learned_tasks(), 0);
        assert!(a.summaries().is_empty());
        assert_eq!(a.trunk_param_count(), 32 * 256 + 256 + 256 * 128 + 128);
    }

    #[test]
    fn per_task_growth_is_small() {
        let mut m = ContinualModel::new(TrunkConfig::new(32)).unwrap();
        m.add_head();
        let d = m.output_dim();
        assert_eq!(m.heads()[0].len(), d);
        assert!((d as f64) <= 0.01 * m.trunk_param_count() as f64);
    }

    #[test]
    fn invalid_frozen_prefix() {
        let mut cfg = TrunkConfig::new(4);
        cfg.frozen_prefix_layers = 3;
        assert!(ContinualModel::new(cfg).is_err());
    }

    #[test]
    fn stable_features_identity_prefix() {
        let mut cfg = TrunkConfig::new(2);
        cfg.layer_widths = vec![8];
        let m = ContinualModel::new(cfg).unwrap();
        let e = m.stable_features(&[3.0, 4.0]).unwrap();
        assert_eq!(e.values, vec![0.6, 0.8]);
        assert!(!e.degenerate);
        let z = m.stable_features(&[0.0, 0.0]).unwrap();
        assert_eq!(z.values, vec![0.0, 0.0]);
        assert!(z.degenerate);
    }

    #[test]
    fn identity_trunk_embed() {
        let mut cfg = TrunkConfig::new(2);
        cfg.layer_widths = vec![];
        let m = ContinualModel::new(cfg).unwrap();
        let e = m.embed(&[1.0, 0.0]).unwrap();
        assert_eq!(e.values, vec![1.0, 0.0]);
        let e = m.embed(&[0.0, 0.0]).unwrap();
        assert!(e.degenerate);
    }

    #[test]
    fn normalization_is_scale_invariant() {
        let v = array![0.3, -1.2, 2.5];
        let base = normalize(v.view());
        for c in [0.5, 2.0, 10.0] {
            let scaled = normalize((&v * c).view());
            for (a, b) in base.values.iter().zip(&scaled.values) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn embed_has_unit_norm() {
        let m = small(3, vec![8, 6], 0);
        for i in 0..50 {
            let x: Vec<f64> = (0..4).map(|j| ((i * 7 + j * 3) as f64).sin()).collect();
            let e = m.embed(&x).unwrap();
            if !e.degenerate {
                let n: f64 = e.values.iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!((n - 1.0).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn head_score_examples() {
        let mut cfg = TrunkConfig::new(3);
        cfg.layer_widths = vec![];
        let mut m = ContinualModel::new(cfg).unwrap();
        m.add_head();
        m.head_mut(0).copy_from_slice(&[1.0, 0.0, 0.0]);
        let e = Embedding {
            values: vec![1.0, 0.0, 0.0],
            degenerate: false,
        };
        assert_eq!(m.head_score(0, &e).unwrap(), 1.0);
        let e = Embedding {
            values: vec![0.0, 0.6, 0.8],
            degenerate: false,
        };
        assert_eq!(m.head_score(0, &e).unwrap(), 0.0);
        assert!(matches!(
            m.head_score(1, &e),
            Err(Error::TaskOutOfRange { .. })
        ));
    }

    #[test]
    fn head_score_matches_summation_oracle() {
        let mut m = small(5, vec![8, 6], 0);
        m.add_head();
        m.add_head();
        for i in 0..20 {
            let x: Vec<f64> = (0..4).map(|j| ((i * 5 + j) as f64 * 0.7).cos()).collect();
            let e = m.embed(&x).unwrap();
            for t in 0..2 {
                let mut oracle = 0.0;
                for k in 0..e.values.len() {
                    oracle += m.heads()[t][k] * e.values[k];
                }
                assert!((m.head_score(t, &e).unwrap() - oracle).abs() < 1e-12);
                let bound: f64 = m.heads()[t].iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!(oracle.abs() <= bound + 1e-12);
            }
        }
    }

    #[test]
    fn predicted_preference_properties() {
        let mut m = small(9, vec![8, 6], 0);
        m.add_head();
        let x = [0.2, -0.4, 1.0, 0.5];
        let y = [1.0, 0.3, -0.2, 0.1];
        assert_eq!(m.predicted_preference(0, &x, &x).unwrap(), 0.5);
        let a = m.predicted_preference(0, &x, &y).unwrap();
        let b = m.predicted_preference(0, &y, &x).unwrap();
        assert!((a + b - 1.0).abs() < 1e-12);
        assert!((preference_from_scores(1.0, 0.0) - 0.760250).abs() < 1e-6);
        assert!((preference_from_scores(0.0, 1.0) - 0.239750).abs() < 1e-6);
    }

    #[test]
    fn zero_seeds_give_zero_gradients() {
        let mut m = small(1, vec![8, 6], 1);
        m.add_head();
        m.add_head();
        let x = Array2::from_shape_fn((5, 4), |(i, j)| ((i + 2 * j) as f64).sin());
        let pass = m.forward(x.view()).unwrap();
        let g = m.backward(&pass, Array2::zeros((5, 2)).view(), true);
        assert_eq!(g.norm(), 0.0);
        assert_eq!(g.trunk.len(), m.plastic_len());
        assert!(m.plastic_len() < m.trunk_param_count());
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let mut m = small(4, vec![8, 6], 1);
        m.add_head();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        m.save(&path).unwrap();
        let back = ContinualModel::load(&path).unwrap();
        assert_eq!(back, m);
    }
}
