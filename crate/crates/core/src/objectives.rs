//! Training objectives: the fidelity loss on pairwise preferences, the
//! pseudo-label regularizer that anchors old heads, and quadratic penalties
//! with EWC / SI / MAS importance estimates.

use std::collections::HashMap;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dataset::QualitySample;
use crate::error::{Error, Result};
use crate::model::{preference_from_scores, ContinualModel, Gradients};
use crate::thurstone::{clamp_prob, std_normal_pdf, RankedPair, PROB_EPS};

/// SI damping term added to the squared total displacement.
pub const SI_DAMPING: f64 = 1e-3;

/// Fidelity loss `1 - √(p·p̂) - √((1-p)(1-p̂))` between two Bernoulli laws.
pub fn fidelity_loss(p: f64, p_hat: f64) -> f64 {
    let v = 1.0 - (p * p_hat).sqrt() - ((1.0 - p) * (1.0 - p_hat)).sqrt();
    v.clamp(0.0, 1.0)
}

/// `∂ fidelity_loss / ∂ p̂` on the open interval.
pub fn fidelity_grad(p: f64, p_hat: f64) -> f64 {
    -0.5 * (p / p_hat).sqrt() + 0.5 * ((1.0 - p) / (1.0 - p_hat)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Regularizer {
    #[default]
    None,
    Lwf,
    Ewc,
    Si,
    Mas,
}

impl Regularizer {
    pub fn is_quadratic(self) -> bool {
        matches!(self, Regularizer::Ewc | Regularizer::Si | Regularizer::Mas)
    }

    /// Trade-off weight used when none is configured.
    pub fn default_lambda(self) -> f64 {
        match self {
            Regularizer::None => 0.0,
            Regularizer::Lwf => 1.0,
            Regularizer::Ewc => 10_000.0,
            Regularizer::Si => 100.0,
            Regularizer::Mas => 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub lambda: f64,
    pub regularizer: Regularizer,
}

impl LossConfig {
    pub fn new(regularizer: Regularizer, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) {
            return Err(Error::invalid(format!(
                "lambda must be non-negative, got {lambda}"
            )));
        }
        Ok(LossConfig {
            lambda,
            regularizer,
        })
    }

    pub fn plain() -> Self {
        LossConfig {
            lambda: 0.0,
            regularizer: Regularizer::None,
        }
    }
}

/// Predictions of old head `task_index` on the current task's pairs,
/// recorded before training on the task starts. `labels[i]` belongs to
/// pair `i` of the task's pair list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabelSet {
    pub task_index: usize,
    pub labels: Vec<f64>,
}

/// Per-sample scores of every head, indexed like `samples`.
pub fn score_samples(model: &ContinualModel, samples: &[QualitySample]) -> Result<Array2<f64>> {
    let x = feature_matrix(samples, 0..samples.len());
    Ok(model.forward(x.view())?.scores)
}

pub fn feature_matrix<I>(samples: &[QualitySample], rows: I) -> Array2<f64>
where
    I: IntoIterator<Item = usize>,
    I::IntoIter: ExactSizeIterator,
{
    let rows = rows.into_iter();
    let n = rows.len();
    let d = samples.first().map(QualitySample::dim).unwrap_or(0);
    let mut x = Array2::zeros((n, d));
    for (r, i) in rows.enumerate() {
        x.row_mut(r)
            .as_slice_mut()
            .expect("row-major")
            .copy_from_slice(&samples[i].features);
    }
    x
}

/// Records every old head's preference for every pair of the new task.
pub fn lwf_pseudo_labels(
    model: &ContinualModel,
    samples: &[QualitySample],
    pairs: &[RankedPair],
    old_tasks: usize,
) -> Result<Vec<PseudoLabelSet>> {
    if old_tasks == 0 {
        return Ok(Vec::new());
    }
    if old_tasks > model.learned_tasks() {
        return Err(Error::TaskOutOfRange {
            index: old_tasks - 1,
            learned: model.learned_tasks(),
        });
    }
    let scores = score_samples(model, samples)?;
    Ok((0..old_tasks)
        .map(|k| PseudoLabelSet {
            task_index: k,
            labels: pairs
                .iter()
                .map(|p| {
                    clamp_prob(preference_from_scores(
                        scores[[p.first, k]],
                        scores[[p.second, k]],
                    ))
                })
                .collect(),
        })
        .collect())
}

/// Sum over old heads of the fidelity loss between recorded and current
/// predictions for pair number `pair_index`.
pub fn lwf_regularizer(
    model: &ContinualModel,
    samples: &[QualitySample],
    pair_index: usize,
    pair: &RankedPair,
    pseudo: &[PseudoLabelSet],
) -> Result<f64> {
    let x = feature_matrix(samples, [pair.first, pair.second]);
    let scores = model.forward(x.view())?.scores;
    let mut total = 0.0;
    for set in pseudo {
        let label = *set
            .labels
            .get(pair_index)
            .ok_or(Error::MissingPseudoLabel {
                pair: pair_index,
                head: set.task_index,
            })?;
        let k = set.task_index;
        let p_hat = clamp_prob(preference_from_scores(scores[[0, k]], scores[[1, k]]));
        total += fidelity_loss(label, p_hat);
    }
    Ok(total)
}

/// Per-parameter importance and anchor for quadratic regularizers. Vectors
/// cover the plastic trunk slice of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceState {
    pub method: Regularizer,
    pub beta: Vec<f64>,
    pub anchor: Vec<f64>,
    /// SI running path integral `Σ -g·Δφ` for the task in progress.
    pub accumulators: Vec<f64>,
    /// SI parameter values at the start of the task in progress.
    pub task_start: Vec<f64>,
}

impl ImportanceState {
    pub fn new(method: Regularizer, model: &ContinualModel) -> Result<Self> {
        if !method.is_quadratic() {
            return Err(Error::invalid(format!(
                "{method:?} is not a quadratic regularizer"
            )));
        }
        let n = model.plastic_len();
        Ok(ImportanceState {
            method,
            beta: vec![0.0; n],
            anchor: model.plastic_params().to_vec(),
            accumulators: vec![0.0; n],
            task_start: model.plastic_params().to_vec(),
        })
    }

    fn check(&self, model: &ContinualModel) -> Result<()> {
        let n = model.plastic_len();
        for len in [self.beta.len(), self.anchor.len(), self.accumulators.len()] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: len,
                });
            }
        }
        Ok(())
    }

    /// Starts SI bookkeeping for a new task.
    pub fn begin_task(&mut self, model: &ContinualModel) -> Result<()> {
        self.check(model)?;
        self.accumulators.iter_mut().for_each(|a| *a = 0.0);
        self.task_start = model.plastic_params().to_vec();
        Ok(())
    }

    /// SI path-integral update for one optimizer step, given the data-loss
    /// gradient and the parameter change that step produced.
    pub fn record_step(&mut self, grad: &[f64], delta: &[f64]) {
        for ((acc, g), d) in self.accumulators.iter_mut().zip(grad).zip(delta) {
            *acc -= g * d;
        }
    }

    /// Adds task importances to `beta` and re-anchors at the current values.
    pub fn consolidate(&mut self, task_beta: &[f64], model: &ContinualModel) -> Result<()> {
        self.check(model)?;
        if task_beta.len() != self.beta.len() {
            return Err(Error::DimensionMismatch {
                expected: self.beta.len(),
                actual: task_beta.len(),
            });
        }
        for (b, t) in self.beta.iter_mut().zip(task_beta) {
            *b += t;
        }
        self.anchor = model.plastic_params().to_vec();
        Ok(())
    }
}

/// `Σ β_i (φ_i - φ'_i)²` over the plastic trunk.
pub fn quadratic_penalty(model: &ContinualModel, state: &ImportanceState) -> Result<f64> {
    state.check(model)?;
    Ok(model
        .plastic_params()
        .iter()
        .zip(&state.anchor)
        .zip(&state.beta)
        .map(|((p, a), b)| b * (p - a) * (p - a))
        .sum())
}

fn quadratic_penalty_grad(model: &ContinualModel, state: &ImportanceState, scale: f64) -> Vec<f64> {
    model
        .plastic_params()
        .iter()
        .zip(&state.anchor)
        .zip(&state.beta)
        .map(|((p, a), b)| scale * 2.0 * b * (p - a))
        .collect()
}

/// EWC: mean squared per-pair gradient of the new-task loss (diagonal Fisher).
pub fn ewc_importance(
    model: &ContinualModel,
    head: usize,
    samples: &[QualitySample],
    pairs: &[RankedPair],
) -> Result<Vec<f64>> {
    let mut beta = vec![0.0; model.plastic_len()];
    if pairs.is_empty() || beta.is_empty() {
        return Ok(beta);
    }
    let t = model.learned_tasks();
    for pair in pairs {
        let x = feature_matrix(samples, [pair.first, pair.second]);
        let pass = model.forward(x.view())?;
        let (_, gx) = pair_new_loss(pair.p, pass.scores[[0, head]], pass.scores[[1, head]]);
        let mut seeds = Array2::zeros((2, t));
        seeds[[0, head]] = gx;
        seeds[[1, head]] = -gx;
        let g = model.backward(&pass, seeds.view(), true);
        for (b, gi) in beta.iter_mut().zip(&g.trunk) {
            *b += gi * gi;
        }
    }
    let n = pairs.len() as f64;
    beta.iter_mut().for_each(|b| *b /= n);
    Ok(beta)
}

/// MAS: mean absolute gradient of `½ score²` of the given head per sample.
pub fn mas_importance(
    model: &ContinualModel,
    head: usize,
    samples: &[QualitySample],
) -> Result<Vec<f64>> {
    let mut beta = vec![0.0; model.plastic_len()];
    if samples.is_empty() || beta.is_empty() {
        return Ok(beta);
    }
    let t = model.learned_tasks();
    for i in 0..samples.len() {
        let x = feature_matrix(samples, [i]);
        let pass = model.forward(x.view())?;
        let mut seeds = Array2::zeros((1, t));
        seeds[[0, head]] = pass.scores[[0, head]];
        let g = model.backward(&pass, seeds.view(), true);
        for (b, gi) in beta.iter_mut().zip(&g.trunk) {
            *b += gi.abs();
        }
    }
    let n = samples.len() as f64;
    beta.iter_mut().for_each(|b| *b /= n);
    Ok(beta)
}

/// SI: positive part of the accumulated path integral divided by the
/// squared total displacement plus damping.
pub fn si_importance(model: &ContinualModel, state: &ImportanceState) -> Result<Vec<f64>> {
    state.check(model)?;
    Ok(state
        .accumulators
        .iter()
        .zip(model.plastic_params())
        .zip(&state.task_start)
        .map(|((w, now), start)| {
            let d = now - start;
            w.max(0.0) / (d * d + SI_DAMPING)
        })
        .collect())
}

/// Importance estimate of `method` for the task whose head is `head`.
pub fn estimate_importance(
    method: Regularizer,
    model: &ContinualModel,
    head: usize,
    samples: &[QualitySample],
    pairs: &[RankedPair],
    state: Option<&ImportanceState>,
) -> Result<Vec<f64>> {
    match method {
        Regularizer::Ewc => ewc_importance(model, head, samples, pairs),
        Regularizer::Mas => mas_importance(model, head, samples),
        Regularizer::Si => {
            let state = state.ok_or_else(|| Error::invalid("SI needs its running state"))?;
            si_importance(model, state)
        }
        other => Err(Error::invalid(format!(
            "{other:?} has no importance estimate"
        ))),
    }
}

/// Loss and `∂loss/∂s_x` for one pair under the new-task fidelity loss;
/// `∂loss/∂s_y` is the negation.
fn pair_new_loss(p: f64, sx: f64, sy: f64) -> (f64, f64) {
    pair_fidelity(clamp_prob(p), sx, sy)
}

fn pair_fidelity(p: f64, sx: f64, sy: f64) -> (f64, f64) {
    let z = (sx - sy) / std::f64::consts::SQRT_2;
    let raw = crate::thurstone::std_normal_cdf(z);
    let p_hat = clamp_prob(raw);
    let loss = fidelity_loss(p, p_hat);
    let clamped = !(PROB_EPS..=1.0 - PROB_EPS).contains(&raw);
    let grad = if clamped {
        0.0
    } else {
        fidelity_grad(p, p_hat) * std_normal_pdf(z) / std::f64::consts::SQRT_2
    };
    (loss, grad)
}

/// What the mini-batch objective needs besides the model and the data.
#[derive(Debug, Clone, Copy)]
pub struct Objective<'a> {
    /// Head trained on the current task.
    pub head: usize,
    pub config: LossConfig,
    /// Old-head pseudo labels (LwF only).
    pub pseudo_labels: &'a [PseudoLabelSet],
    /// Importance state (quadratic regularizers only).
    pub importance: Option<&'a ImportanceState>,
}

impl<'a> Objective<'a> {
    pub fn plain(head: usize) -> Self {
        Objective {
            head,
            config: LossConfig::plain(),
            pseudo_labels: &[],
            importance: None,
        }
    }

    fn validate(&self, model: &ContinualModel) -> Result<()> {
        if self.head >= model.learned_tasks() {
            return Err(Error::TaskOutOfRange {
                index: self.head,
                learned: model.learned_tasks(),
            });
        }
        match self.config.regularizer {
            Regularizer::Lwf => {
                if self.pseudo_labels.iter().any(|s| s.task_index >= self.head) {
                    return Err(Error::invalid("pseudo labels must belong to old heads"));
                }
            }
            r if r.is_quadratic() => match self.importance {
                Some(state) if state.method == r => state.check(model)?,
                Some(state) => {
                    return Err(Error::invalid(format!(
                        "loss configured for {r:?} but importance state is {:?}",
                        state.method
                    )))
                }
                None => {
                    return Err(Error::invalid(format!(
                        "{r:?} requires an importance state"
                    )))
                }
            },
            _ => {}
        }
        Ok(())
    }
}

/// Result of evaluating the mini-batch objective with gradients.
#[derive(Debug, Clone)]
pub struct ObjectiveEval {
    pub loss: f64,
    /// Mean new-task fidelity loss alone.
    pub new_loss: f64,
    /// Gradients of the pair terms (`ℓ_new + λ ℓ_old`, averaged).
    pub data: Gradients,
    /// Gradient of `λ·penalty` on the plastic trunk (empty if none).
    pub penalty: Vec<f64>,
}

impl ObjectiveEval {
    /// Total gradient: data terms plus penalty.
    pub fn total(&self) -> Gradients {
        let mut g = self.data.clone();
        for (a, b) in g.trunk.iter_mut().zip(&self.penalty) {
            *a += b;
        }
        g
    }
}

/// Mini-batch objective value: mean of `ℓ_new + λ·ℓ_old` over the batch,
/// plus `λ·Σβ(φ-φ')²` for quadratic regularizers.
pub fn minibatch_loss(
    model: &ContinualModel,
    samples: &[QualitySample],
    pairs: &[RankedPair],
    batch: &[usize],
    objective: &Objective<'_>,
) -> Result<f64> {
    Ok(evaluate(model, samples, pairs, batch, objective, None)?.loss)
}

/// Objective value and gradients. `train_trunk` controls whether trunk
/// gradients are computed (they are zero otherwise).
pub fn minibatch_loss_and_grad(
    model: &ContinualModel,
    samples: &[QualitySample],
    pairs: &[RankedPair],
    batch: &[usize],
    objective: &Objective<'_>,
    train_trunk: bool,
) -> Result<ObjectiveEval> {
    evaluate(model, samples, pairs, batch, objective, Some(train_trunk))
}

fn evaluate(
    model: &ContinualModel,
    samples: &[QualitySample],
    pairs: &[RankedPair],
    batch: &[usize],
    objective: &Objective<'_>,
    grad: Option<bool>,
) -> Result<ObjectiveEval> {
    if batch.is_empty() {
        return Err(Error::invalid("mini-batch must be nonempty"));
    }
    objective.validate(model)?;
    let lambda = objective.config.lambda;
    let use_lwf = objective.config.regularizer == Regularizer::Lwf;

    // Each sample is forwarded once even if it appears in several pairs.
    let mut row_of: HashMap<usize, usize> = HashMap::new();
    let mut rows = Vec::new();
    for &b in batch {
        let pair = pairs
            .get(b)
            .ok_or_else(|| Error::invalid(format!("pair {b} out of range")))?;
        for idx in [pair.first, pair.second] {
            row_of.entry(idx).or_insert_with(|| {
                rows.push(idx);
                rows.len() - 1
            });
        }
    }
    let x = feature_matrix(samples, rows.iter().copied());
    let pass = model.forward(x.view())?;
    let scores: ArrayView2<f64> = pass.scores.view();

    let t = model.learned_tasks();
    let inv = 1.0 / batch.len() as f64;
    let mut seeds = Array2::<f64>::zeros((rows.len(), t));
    let mut new_total = 0.0;
    let mut old_total = 0.0;
    for &b in batch {
        let pair = &pairs[b];
        let (rx, ry) = (row_of[&pair.first], row_of[&pair.second]);
        let h = objective.head;
        let (loss, g) = pair_new_loss(pair.p, scores[[rx, h]], scores[[ry, h]]);
        new_total += loss;
        seeds[[rx, h]] += g * inv;
        seeds[[ry, h]] -= g * inv;
        if use_lwf {
            for set in objective.pseudo_labels {
                let label = *set.labels.get(b).ok_or(Error::MissingPseudoLabel {
                    pair: b,
                    head: set.task_index,
                })?;
                let k = set.task_index;
                let (loss, g) = pair_fidelity(label, scores[[rx, k]], scores[[ry, k]]);
                old_total += loss;
                seeds[[rx, k]] += lambda * g * inv;
                seeds[[ry, k]] -= lambda * g * inv;
            }
        }
    }

    let mut loss = (new_total + lambda * old_total) * inv;
    let mut penalty = Vec::new();
    if let (Some(state), true) = (
        objective.importance,
        objective.config.regularizer.is_quadratic(),
    ) {
        loss += lambda * quadratic_penalty(model, state)?;
        if grad == Some(true) {
            penalty = quadratic_penalty_grad(model, state, lambda);
        }
    }
    let data = match grad {
        Some(train_trunk) => model.backward(&pass, seeds.view(), train_trunk),
        None => Gradients {
            trunk: Vec::new(),
            heads: Vec::new(),
        },
    };
    Ok(ObjectiveEval {
        loss,
        new_loss: new_total * inv,
        data,
        penalty,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TrunkConfig;

    #[test]
    fn fidelity_examples() {
        assert!(fidelity_loss(0.7, 0.7).abs() < 1e-15);
        assert_eq!(fidelity_loss(1.0, 0.0), 1.0);
        // 1 - sqrt(0.45) - sqrt(0.05)
        let oracle = 1.0 - 0.45f64.sqrt() - 0.05f64.sqrt();
        assert!((oracle - 0.105573).abs() < 1e-6);
        assert!((fidelity_loss(0.5, 0.9) - oracle).abs() < 1e-15);
    }

    #[test]
    fn fidelity_grid_bounds_and_symmetry() {
        for i in 0..=100 {
            for j in 0..=100 {
                let p = clamp_prob(i as f64 / 100.0);
                let q = clamp_prob(j as f64 / 100.0);
                let l = fidelity_loss(p, q);
                assert!((0.0..=1.0).contains(&l));
                assert!((l - fidelity_loss(1.0 - p, 1.0 - q)).abs() < 1e-12);
                if i == j {
                    assert!(l < 1e-15);
                } else {
                    assert!(l > 0.0);
                }
            }
        }
    }

    #[test]
    fn fidelity_gradient_sign() {
        for i in 1..100 {
            for j in 1..100 {
                if i == j {
                    continue;
                }
                let (p, q) = (i as f64 / 100.0, j as f64 / 100.0);
                let h = 1e-6;
                let fd = (fidelity_loss(p, q + h) - fidelity_loss(p, q - h)) / (2.0 * h);
                assert_eq!(fd.signum(), (q - p).signum(), "p={p} q={q}");
                assert_eq!(fidelity_grad(p, q).signum(), (q - p).signum());
                assert!((fd - fidelity_grad(p, q)).abs() < 1e-5 * (1.0 + fd.abs()));
            }
        }
    }

    fn toy(heads: usize) -> (ContinualModel, Vec<QualitySample>, Vec<RankedPair>) {
        let mut cfg = TrunkConfig::new(3);
        cfg.layer_widths = vec![5, 4];
        cfg.seed = 21;
        let mut m = ContinualModel::new(cfg).unwrap();
        for _ in 0..heads {
            m.add_head();
        }
        let samples: Vec<_> = (0..6)
            .map(|i| {
                let f = (0..3)
                    .map(|j| ((i * 3 + j) as f64 * 0.9).sin() + 0.3)
                    .collect();
                QualitySample::new(format!("s{i}"), f, i as f64, 0.7).unwrap()
            })
            .collect();
        let pairs = vec![
            RankedPair {
                first: 0,
                second: 1,
                p: 0.3,
            },
            RankedPair {
                first: 2,
                second: 5,
                p: 0.9,
            },
            RankedPair {
                first: 4,
                second: 1,
                p: 0.6,
            },
        ];
        (m, samples, pairs)
    }

    #[test]
    fn pseudo_label_cardinality() {
        let (m, s, p) = toy(3);
        assert!(lwf_pseudo_labels(&m, &s, &p, 0).unwrap().is_empty());
        let sets = lwf_pseudo_labels(&m, &s, &p, 2).unwrap();
        assert_eq!(sets.len(), 2);
        assert!(sets.iter().all(|s| s.labels.len() == 3));
        for (i, pair) in p.iter().enumerate() {
            for set in &sets {
                let live = m
                    .predicted_preference(
                        set.task_index,
                        &s[pair.first].features,
                        &s[pair.second].features,
                    )
                    .unwrap();
                assert!((set.labels[i] - clamp_prob(live)).abs() < 1e-12);
            }
            assert!(lwf_regularizer(&m, &s, i, pair, &sets).unwrap() < 1e-9);
        }
    }

    #[test]
    fn lwf_regularizer_two_heads() {
        // Identity trunk, 1-d embedding: scores are ±head weight.
        let mut cfg = TrunkConfig::new(1);
        cfg.layer_widths = vec![];
        let mut m = ContinualModel::new(cfg).unwrap();
        m.add_head();
        m.add_head();
        m.add_head();
        let z = std::f64::consts::SQRT_2 * inverse_cdf(0.9) / 2.0;
        m.head_mut(0).copy_from_slice(&[z]);
        m.head_mut(1).copy_from_slice(&[0.0]);
        let samples = vec![
            QualitySample::new("a", vec![1.0], 1.0, 1.0).unwrap(),
            QualitySample::new("b", vec![-1.0], 0.0, 1.0).unwrap(),
        ];
        let pair = RankedPair {
            first: 0,
            second: 1,
            p: 0.5,
        };
        let sets = vec![
            PseudoLabelSet {
                task_index: 0,
                labels: vec![0.5],
            },
            PseudoLabelSet {
                task_index: 1,
                labels: vec![0.5],
            },
        ];
        let v = lwf_regularizer(&m, &samples, 0, &pair, &sets).unwrap();
        assert!((v - 0.105573).abs() < 1e-6, "{v}");
        let missing = vec![PseudoLabelSet {
            task_index: 0,
            labels: vec![],
        }];
        assert!(matches!(
            lwf_regularizer(&m, &samples, 0, &pair, &missing),
            Err(Error::MissingPseudoLabel { .. })
        ));
    }

    fn inverse_cdf(p: f64) -> f64 {
        let (mut lo, mut hi) = (-10.0, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if crate::thurstone::std_normal_cdf(mid) < p {
                lo = mid
            } else {
                hi = mid
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn quadratic_penalty_examples() {
        let mut cfg = TrunkConfig::new(1);
        cfg.layer_widths = vec![1];
        let mut m = ContinualModel::new(cfg).unwrap();
        let mut state = ImportanceState::new(Regularizer::Ewc, &m).unwrap();
        assert_eq!(quadratic_penalty(&m, &state).unwrap(), 0.0);
        state.beta = vec![1.0, 1.0];
        let anchor = state.anchor.clone();
        m.plastic_params_mut()[0] = anchor[0] + 0.1;
        m.plastic_params_mut()[1] = anchor[1] - 0.2;
        assert!((quadratic_penalty(&m, &state).unwrap() - 0.05).abs() < 1e-12);
        state.beta.push(1.0);
        assert!(quadratic_penalty(&m, &state).is_err());
    }

    #[test]
    fn zero_lambda_ignores_regularizer() {
        let (m, s, p) = toy(3);
        let labels = lwf_pseudo_labels(&m, &s, &p, 2).unwrap();
        let base = minibatch_loss(&m, &s, &p, &[0, 1, 2], &Objective::plain(2)).unwrap();
        let lwf = Objective {
            head: 2,
            config: LossConfig::new(Regularizer::Lwf, 0.0).unwrap(),
            pseudo_labels: &labels,
            importance: None,
        };
        assert_eq!(minibatch_loss(&m, &s, &p, &[0, 1, 2], &lwf).unwrap(), base);
        let mut state = ImportanceState::new(Regularizer::Ewc, &m).unwrap();
        state.beta.iter_mut().for_each(|b| *b = 3.0);
        let ewc = Objective {
            head: 2,
            config: LossConfig::new(Regularizer::Ewc, 0.0).unwrap(),
            pseudo_labels: &[],
            importance: Some(&state),
        };
        assert_eq!(minibatch_loss(&m, &s, &p, &[0, 1, 2], &ewc).unwrap(), base);
    }

    #[test]
    fn mismatched_state_rejected() {
        let (m, s, p) = toy(2);
        let state = ImportanceState::new(Regularizer::Si, &m).unwrap();
        let obj = Objective {
            head: 1,
            config: LossConfig::new(Regularizer::Ewc, 1.0).unwrap(),
            pseudo_labels: &[],
            importance: Some(&state),
        };
        assert!(minibatch_loss(&m, &s, &p, &[0], &obj).is_err());
        let obj = Objective {
            importance: None,
            ..obj
        };
        assert!(minibatch_loss(&m, &s, &p, &[0], &obj).is_err());
        assert!(minibatch_loss(&m, &s, &p, &[], &Objective::plain(0)).is_err());
        assert!(LossConfig::new(Regularizer::Lwf, -1.0).is_err());
    }

    #[test]
    fn si_importance_formula() {
        let mut cfg = TrunkConfig::new(1);
        cfg.layer_widths = vec![1];
        let mut m = ContinualModel::new(cfg).unwrap();
        let mut state = ImportanceState::new(Regularizer::Si, &m).unwrap();
        state.begin_task(&m).unwrap();
        // two steps moving param 0 by +0.1 each against gradient -1
        state.record_step(&[-1.0, 0.0], &[0.1, 0.0]);
        m.plastic_params_mut()[0] += 0.1;
        state.record_step(&[-1.0, 0.0], &[0.1, 0.0]);
        m.plastic_params_mut()[0] += 0.1;
        let beta = si_importance(&m, &state).unwrap();
        assert!((beta[0] - 0.2 / (0.04 + SI_DAMPING)).abs() < 1e-12);
        assert_eq!(beta[1], 0.0);
        // negative path contributions are clipped
        state.begin_task(&m).unwrap();
        state.record_step(&[1.0, 0.0], &[0.1, 0.0]);
        assert_eq!(si_importance(&m, &state).unwrap()[0], 0.0);
    }
}
