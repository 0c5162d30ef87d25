//! Thurstone Case V preference probabilities and training-pair construction.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::TaskDataset;
use crate::error::{Error, Result};

/// Lower clamp applied to every probability that enters a square root.
pub const PROB_EPS: f64 = 1e-6;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Clamps a probability into `[PROB_EPS, 1 - PROB_EPS]`.
#[inline]
pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Standard normal density.
#[inline]
pub fn std_normal_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Standard normal cumulative distribution function.
///
/// The lower tail is computed with Marsaglia's Taylor series on `[-8, 0]`
/// and an asymptotic expansion of Mills' ratio beyond it; the upper tail is
/// obtained by reflection so that `Φ(z) + Φ(-z) == 1` up to rounding.
pub fn std_normal_cdf(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    let lower = lower_tail(-z.abs());
    if z <= 0.0 {
        lower
    } else {
        1.0 - lower
    }
}

// Φ(x) for x <= 0.
fn lower_tail(x: f64) -> f64 {
    debug_assert!(x <= 0.0);
    if x < -38.0 {
        return 0.0;
    }
    if x < -8.0 {
        // Φ(x) ~ φ(x)/|x| · (1 - 1/x² + 3/x⁴ - 15/x⁶ + 105/x⁸)
        let x2 = x * x;
        let series =
            1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2) + 105.0 / (x2 * x2 * x2 * x2);
        return std_normal_pdf(x) / -x * series;
    }
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut k = 1.0;
    loop {
        term *= x2 / (2.0 * k + 1.0);
        let next = sum + term;
        if next == sum {
            break;
        }
        sum = next;
        k += 1.0;
    }
    (0.5 + sum * std_normal_pdf(x)).max(0.0)
}

/// Probability that stimulus x is preferred over y when their qualities are
/// independent Gaussians `N(mu_x, sigma_x²)` and `N(mu_y, sigma_y²)`.
///
/// When both variances are zero the preference is a step function of the
/// mean difference (1, 0.5 or 0).
pub fn thurstone_probability(mu_x: f64, sigma_x: f64, mu_y: f64, sigma_y: f64) -> f64 {
    let var = sigma_x * sigma_x + sigma_y * sigma_y;
    let diff = mu_x - mu_y;
    if var == 0.0 {
        return match diff.partial_cmp(&0.0) {
            Some(std::cmp::Ordering::Greater) => 1.0,
            Some(std::cmp::Ordering::Less) => 0.0,
            _ => 0.5,
        };
    }
    std_normal_cdf(diff / var.sqrt())
}

/// A training pair: indices into a train split and the ground-truth
/// probability that `first` is of higher quality than `second`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedPair {
    pub first: usize,
    pub second: usize,
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairConfig {
    pub pairs_per_task: usize,
    pub seed: u64,
}

impl Default for PairConfig {
    fn default() -> Self {
        PairConfig {
            pairs_per_task: 3000,
            seed: 0,
        }
    }
}

/// Number of unordered pairs among `n` items.
pub fn pair_count(n: usize) -> u64 {
    let n = n as u64;
    n * n.saturating_sub(1) / 2
}

// Maps a linear index in [0, C(n,2)) to the unordered pair (i, j), i < j,
// enumerated row by row.
fn decode_pair(mut m: u64, n: usize) -> (usize, usize) {
    let mut i = 0usize;
    loop {
        let row = (n - 1 - i) as u64;
        if m < row {
            return (i, i + 1 + m as usize);
        }
        m -= row;
        i += 1;
    }
}

/// Samples `pairs_per_task` distinct unordered pairs from the train split,
/// uniformly without replacement, and labels each with its Thurstone
/// probability. Orientation of each pair is a fair coin flip.
pub fn build_pairs(dataset: &TaskDataset, config: &PairConfig) -> Result<Vec<RankedPair>> {
    let n = dataset.train.len();
    if n < 2 {
        return Err(Error::invalid(
            "need at least two training samples to form pairs",
        ));
    }
    let available = pair_count(n);
    if config.pairs_per_task as u64 > available {
        return Err(Error::TooManyPairs {
            requested: config.pairs_per_task as u64,
            available,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let picks = sample_linear(&mut rng, available, config.pairs_per_task);
    let pairs = picks
        .into_iter()
        .map(|m| {
            let (i, j) = decode_pair(m, n);
            let (a, b) = if rng.gen::<bool>() { (i, j) } else { (j, i) };
            let (x, y) = (&dataset.train[a], &dataset.train[b]);
            RankedPair {
                first: a,
                second: b,
                p: thurstone_probability(x.mos, x.std, y.mos, y.std),
            }
        })
        .collect();
    Ok(pairs)
}

fn sample_linear(rng: &mut ChaCha8Rng, total: u64, amount: usize) -> Vec<u64> {
    if total <= usize::MAX as u64 {
        index::sample(rng, total as usize, amount)
            .into_iter()
            .map(|i| i as u64)
            .collect()
    } else {
        let mut seen = std::collections::HashSet::with_capacity(amount);
        let mut out = Vec::with_capacity(amount);
        while out.len() < amount {
            let m = rng.gen_range(0..total);
            if seen.insert(m) {
                out.push(m);
            }
        }
        out
    }
}
