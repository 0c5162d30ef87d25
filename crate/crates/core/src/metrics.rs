//! Rank correlation and plasticity–stability bookkeeping over a task stream.

use std::fmt::Write as _;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::dataset::{QualitySample, TaskDataset};
use crate::error::{Error, Result};
use crate::model::ContinualModel;
use crate::objectives::feature_matrix;
use crate::summarizer::{predict_batch, WeightingConfig, WeightingMode};

/// Old-task SRCCs below this are clamped before dividing in the PSR.
pub const PSR_DENOMINATOR_FLOOR: f64 = 0.05;

/// Fractional ranks (1-based; ties get the mean of their positions).
pub fn fractional_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman correlation plus a flag set when either input is constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub value: f64,
    pub degenerate: bool,
}

/// Spearman rank correlation as the Pearson correlation of fractional ranks.
/// Returns 0 (flagged degenerate) when either argument is constant.
pub fn srcc_checked(predictions: &[f64], targets: &[f64]) -> Result<Correlation> {
    if predictions.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: targets.len(),
            actual: predictions.len(),
        });
    }
    if predictions.len() < 2 {
        return Err(Error::invalid("SRCC needs at least two observations"));
    }
    let (a, b) = (fractional_ranks(predictions), fractional_ranks(targets));
    let n = a.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(&b) {
        let (dx, dy) = (x - mean, y - mean);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(Correlation {
            value: 0.0,
            degenerate: true,
        });
    }
    Ok(Correlation {
        value: (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0),
        degenerate: false,
    })
}

pub fn srcc(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    Ok(srcc_checked(predictions, targets)?.value)
}

/// Lower-triangular matrix; `values[t][k]` (0-based, `k <= t`) is the SRCC
/// on task `k` right after learning task `t`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SrccMatrix {
    pub values: Vec<Vec<f64>>,
}

impl SrccMatrix {
    pub fn new() -> Self {
        SrccMatrix::default()
    }

    pub fn tasks(&self) -> usize {
        self.values.len()
    }

    /// Appends row `t`, which must have `t + 1` entries.
    pub fn push_row(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.values.len() + 1 {
            return Err(Error::invalid(format!(
                "row {} needs {} entries, got {}",
                self.values.len(),
                self.values.len() + 1,
                row.len()
            )));
        }
        if row.iter().any(|v| !(-1.0..=1.0).contains(v)) {
            return Err(Error::invalid("SRCC entries must lie in [-1, 1]"));
        }
        self.values.push(row);
        Ok(())
    }

    pub fn get(&self, t: usize, k: usize) -> Option<f64> {
        self.values.get(t).and_then(|r| r.get(k)).copied()
    }

    /// SRCC of task `k` right after it was learned.
    pub fn diagonal(&self, k: usize) -> Option<f64> {
        self.get(k, k)
    }

    pub fn final_row(&self) -> &[f64] {
        self.values.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Lower-triangular text table: header `after_task,1,...,T`, then one
    /// row per task with empty cells above the diagonal.
    pub fn to_table(&self) -> String {
        let t = self.tasks();
        let mut out = String::from("after_task");
        for k in 1..=t {
            let _ = write!(out, ",{k}");
        }
        out.push('\n');
        for (i, row) in self.values.iter().enumerate() {
            let _ = write!(out, "{}", i + 1);
            for k in 0..t {
                match row.get(k) {
                    Some(v) => {
                        let _ = write!(out, ",{v}");
                    }
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn from_table(text: &str) -> Result<Self> {
        let mut m = SrccMatrix::new();
        for (line_no, line) in text.lines().enumerate().skip(1) {
            let row: Vec<f64> = line
                .split(',')
                .skip(1)
                .filter(|c| !c.is_empty())
                .map(|c| {
                    c.parse::<f64>().map_err(|_| Error::Parse {
                        line: line_no + 1,
                        message: format!("bad SRCC value {c:?}"),
                    })
                })
                .collect::<Result<_>>()?;
            m.push_row(row).map_err(|e| Error::Parse {
                line: line_no + 1,
                message: e.to_string(),
            })?;
        }
        Ok(m)
    }
}

/// A PSR value and whether any denominator had to be clamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Psr {
    pub value: f64,
    pub clamped: bool,
}

/// Plasticity–stability ratio after task `t` (0-based).
///
/// `PSR_0 = SRCC_00`; otherwise the mean retention ratio
/// `SRCC_tk / SRCC_kk` over old tasks times the new-task SRCC. Ratios above
/// one are kept.
pub fn psr(matrix: &SrccMatrix, t: usize) -> Result<Psr> {
    let row = matrix
        .values
        .get(t)
        .ok_or_else(|| Error::invalid(format!("SRCC matrix has no row {t}")))?;
    let current = row[t];
    if t == 0 {
        return Ok(Psr {
            value: current,
            clamped: false,
        });
    }
    let mut clamped = false;
    let mut sum = 0.0;
    for (k, &retained) in row.iter().enumerate().take(t) {
        let mut denom = matrix.diagonal(k).expect("lower triangular");
        if denom < PSR_DENOMINATOR_FLOOR {
            denom = PSR_DENOMINATOR_FLOOR;
            clamped = true;
        }
        sum += retained / denom;
    }
    Ok(Psr {
        value: sum / t as f64 * current,
        clamped,
    })
}

/// Mean of the PSR values.
pub fn mpsr(psr_values: &[f64]) -> Result<f64> {
    if psr_values.is_empty() {
        return Err(Error::invalid("MPSR of an empty sequence"));
    }
    Ok(psr_values.iter().sum::<f64>() / psr_values.len() as f64)
}

/// SRCC averaged with weights proportional to test-set sizes.
pub fn weighted_srcc(per_task: &[f64], sizes: &[usize]) -> Result<f64> {
    if per_task.len() != sizes.len() {
        return Err(Error::DimensionMismatch {
            expected: sizes.len(),
            actual: per_task.len(),
        });
    }
    if per_task.is_empty() || sizes.contains(&0) {
        return Err(Error::invalid(
            "weighted SRCC needs positive test-set sizes",
        ));
    }
    let total: usize = sizes.iter().sum();
    Ok(per_task
        .iter()
        .zip(sizes)
        .map(|(s, &n)| s * n as f64)
        .sum::<f64>()
        / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub srcc_matrix: SrccMatrix,
    pub psr: Vec<f64>,
    pub mpsr: f64,
    pub weighted_srcc: f64,
    pub test_set_sizes: Vec<usize>,
    #[serde(default)]
    pub flags: Vec<String>,
}

impl MetricsRecord {
    /// Derives PSR, MPSR and weighted SRCC from a filled matrix.
    pub fn from_matrix(
        srcc_matrix: SrccMatrix,
        test_set_sizes: Vec<usize>,
        mut flags: Vec<String>,
    ) -> Result<Self> {
        let t = srcc_matrix.tasks();
        if t == 0 {
            return Err(Error::invalid("empty SRCC matrix"));
        }
        let mut psr_values = Vec::with_capacity(t);
        for i in 0..t {
            let p = psr(&srcc_matrix, i)?;
            if p.clamped {
                flags.push(format!(
                    "psr_{}: denominator clamped to {PSR_DENOMINATOR_FLOOR}",
                    i + 1
                ));
            }
            psr_values.push(p.value);
        }
        let weighted = weighted_srcc(srcc_matrix.final_row(), &test_set_sizes)?;
        Ok(MetricsRecord {
            mpsr: mpsr(&psr_values)?,
            psr: psr_values,
            weighted_srcc: weighted,
            test_set_sizes,
            srcc_matrix,
            flags,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// SRCC of fused predictions against MOS on one test split.
pub fn evaluate_split(
    model: &ContinualModel,
    samples: &[QualitySample],
    weighting: &WeightingConfig,
    oracle_task: Option<usize>,
) -> Result<Correlation> {
    let x = feature_matrix(samples, 0..samples.len());
    let pred = predict_batch(model, ArrayView2::from(&x), weighting, oracle_task)?;
    let mos: Vec<f64> = samples.iter().map(|s| s.mos).collect();
    srcc_checked(&pred, &mos)
}

/// Evaluates a model on test splits `0..=t`, returning the row of the SRCC
/// matrix plus any degeneracy flags.
pub fn evaluate_row(
    model: &ContinualModel,
    test_sets: &[&[QualitySample]],
    weighting: &WeightingConfig,
) -> Result<(Vec<f64>, Vec<String>)> {
    let mut row = Vec::with_capacity(test_sets.len());
    let mut flags = Vec::new();
    for (k, split) in test_sets.iter().enumerate() {
        let oracle = (weighting.mode == WeightingMode::Oracle).then_some(k);
        let c = evaluate_split(model, split, weighting, oracle)?;
        if c.degenerate {
            flags.push(format!(
                "srcc_{}_{}: constant predictions",
                test_sets.len(),
                k + 1
            ));
        }
        row.push(c.value);
    }
    Ok((row, flags))
}

/// Fills the SRCC matrix from per-task snapshots: snapshot `t` is the model
/// right after learning task `t`.
pub fn evaluate_stream(
    snapshots: &[ContinualModel],
    tasks: &[TaskDataset],
    weighting: &WeightingConfig,
) -> Result<MetricsRecord> {
    if snapshots.is_empty() || snapshots.len() != tasks.len() {
        return Err(Error::invalid(format!(
            "{} snapshots for {} tasks",
            snapshots.len(),
            tasks.len()
        )));
    }
    if let Some(t) = tasks.iter().find(|t| t.test.len() < 2) {
        return Err(Error::invalid(format!(
            "task {} has no usable test split",
            t.name
        )));
    }
    let mut matrix = SrccMatrix::new();
    let mut flags = Vec::new();
    for (t, model) in snapshots.iter().enumerate() {
        let splits: Vec<&[QualitySample]> = tasks[..=t].iter().map(|d| d.test.as_slice()).collect();
        let (row, f) = evaluate_row(model, &splits, weighting)?;
        matrix.push_row(row)?;
        flags.extend(f);
    }
    let sizes = tasks.iter().map(|t| t.test.len()).collect();
    MetricsRecord::from_matrix(matrix, sizes, flags)
}

#[cfg(test)]
mod tests {
    use super::*;
    use itertools_free::permutations;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    mod itertools_free {
        pub fn permutations(n: usize) -> Vec<Vec<usize>> {
            if n == 0 {
                return vec![vec![]];
            }
            let mut out = Vec::new();
            for p in permutations(n - 1) {
                for i in 0..=p.len() {
                    let mut q = p.clone();
                    q.insert(i, n - 1);
                    out.push(q);
                }
            }
            out
        }
    }

    fn classical(a: &[f64], b: &[f64]) -> f64 {
        let (ra, rb) = (fractional_ranks(a), fractional_ranks(b));
        let n = a.len() as f64;
        let d2: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - y) * (x - y)).sum();
        1.0 - 6.0 * d2 / (n * (n * n - 1.0))
    }

    #[test]
    fn srcc_examples() {
        assert_eq!(srcc(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(), 1.0);
        assert_eq!(srcc(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert!((srcc(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]).unwrap() + 0.5).abs() < 1e-12);
        assert!(srcc(&[1.0], &[1.0]).is_err());
        assert!(srcc(&[1.0, 2.0], &[1.0]).is_err());
        let c = srcc_checked(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(
            c,
            Correlation {
                value: 0.0,
                degenerate: true
            }
        );
    }

    #[test]
    fn ties_get_average_ranks() {
        assert_eq!(
            fractional_ranks(&[3.0, 1.0, 3.0, 2.0]),
            vec![3.5, 1.0, 3.5, 2.0]
        );
    }

    #[test]
    fn srcc_matches_classical_formula_on_permutations() {
        for n in 2..=6 {
            let base: Vec<f64> = (0..n).map(|i| i as f64).collect();
            for p in permutations(n) {
                let other: Vec<f64> = p.iter().map(|&i| i as f64).collect();
                assert!((srcc(&base, &other).unwrap() - classical(&base, &other)).abs() < 1e-12);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let a: Vec<f64> = (0..8).map(|_| rng.gen()).collect();
            let b: Vec<f64> = (0..8).map(|_| rng.gen()).collect();
            assert!((srcc(&a, &b).unwrap() - classical(&a, &b)).abs() < 1e-12);
        }
    }

    #[test]
    fn srcc_invariant_under_monotone_transforms() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let a: Vec<f64> = (0..30).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
            let b: Vec<f64> = (0..30).map(|_| rng.gen()).collect();
            let base = srcc(&a, &b).unwrap();
            for f in [
                f64::exp as fn(f64) -> f64,
                |x: f64| x * x * x,
                |x: f64| 3.0 * x - 7.0,
            ] {
                let t: Vec<f64> = a.iter().map(|&x| f(x)).collect();
                assert!((srcc(&t, &b).unwrap() - base).abs() < 1e-12);
            }
        }
    }

    fn matrix(rows: &[&[f64]]) -> SrccMatrix {
        let mut m = SrccMatrix::new();
        for r in rows {
            m.push_row(r.to_vec()).unwrap();
        }
        m
    }

    #[test]
    fn psr_examples() {
        let m = matrix(&[&[0.9]]);
        assert_eq!(psr(&m, 0).unwrap().value, 0.9);
        let m = matrix(&[&[0.9], &[0.8, 0.85]]);
        let v = psr(&m, 1).unwrap().value;
        assert!((v - 0.8 / 0.9 * 0.85).abs() < 1e-15);
        assert!((v - 0.755556).abs() < 1e-6);
        let m = matrix(&[&[0.6], &[0.6, 0.5], &[0.6, 0.5, 0.7]]);
        assert!((psr(&m, 2).unwrap().value - 0.7).abs() < 1e-15);
    }

    #[test]
    fn psr_credits_improvement_and_clamps() {
        let lo = matrix(&[&[0.8], &[0.7, 0.9]]);
        let hi = matrix(&[&[0.8], &[0.85, 0.9]]);
        assert!(psr(&hi, 1).unwrap().value > psr(&lo, 1).unwrap().value);
        assert!(psr(&hi, 1).unwrap().value > 0.9);
        let bad = matrix(&[&[0.01], &[0.2, 0.9]]);
        let p = psr(&bad, 1).unwrap();
        assert!(p.clamped);
        assert!((p.value - 0.2 / PSR_DENOMINATOR_FLOOR * 0.9).abs() < 1e-12);
    }

    #[test]
    fn mpsr_and_weighted() {
        assert_eq!(mpsr(&[0.8]).unwrap(), 0.8);
        assert!((mpsr(&[0.9, 0.7556]).unwrap() - 0.8278).abs() < 1e-12);
        assert!((mpsr(&[0.3; 5]).unwrap() - 0.3).abs() < 1e-15);
        assert!(mpsr(&[]).is_err());
        assert!((weighted_srcc(&[0.4, 0.8], &[1, 3]).unwrap() - 0.7).abs() < 1e-15);
        assert!((weighted_srcc(&[0.4, 0.8], &[5, 5]).unwrap() - 0.6).abs() < 1e-15);
        assert!(weighted_srcc(&[0.4], &[1, 2]).is_err());
        let s = [0.91, 0.72, 0.8, 0.66, 0.85, 0.77];
        let n = [779, 866, 586, 1162, 10073, 10125];
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..6 {
            num += s[i] * n[i] as f64;
            den += n[i] as f64;
        }
        assert!((weighted_srcc(&s, &n).unwrap() - num / den).abs() < 1e-12);
    }

    #[test]
    fn matrix_rejects_bad_rows() {
        let mut m = SrccMatrix::new();
        assert!(m.push_row(vec![0.5, 0.5]).is_err());
        assert!(m.push_row(vec![1.5]).is_err());
    }

    #[test]
    fn record_and_table_round_trip() {
        let m = matrix(&[&[0.9], &[0.8, 0.85], &[0.7, 0.75, 0.8]]);
        let table = m.to_table();
        assert_eq!(table.lines().next().unwrap(), "after_task,1,2,3");
        assert_eq!(table.lines().nth(1).unwrap(), "1,0.9,,");
        assert_eq!(SrccMatrix::from_table(&table).unwrap(), m);
        let rec = MetricsRecord::from_matrix(m, vec![10, 20, 30], vec![]).unwrap();
        assert_eq!(rec.mpsr, mpsr(&rec.psr).unwrap());
        assert_eq!(rec.psr[0], 0.9);
        let back = MetricsRecord::from_json(&rec.to_json().unwrap()).unwrap();
        assert_eq!(back, rec);
    }
}
