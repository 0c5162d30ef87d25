//! Independent oracles shared by integration tests. Nothing here calls into
//! the library's numerics.

#![allow(dead_code)]

use contiqa::dataset::QualitySample;
use contiqa::objectives::feature_matrix;
use contiqa::thurstone::RankedPair;
use contiqa::{ContinualModel, TrunkConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `Φ(z)` as `½ + ∫₀ᶻ φ(t) dt` by composite Simpson with `n` intervals.
pub fn normal_cdf_simpson(z: f64, n: usize) -> f64 {
    let pdf = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let n = n + n % 2;
    let h = z / n as f64;
    let mut s = pdf(0.0) + pdf(z);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * pdf(i as f64 * h);
    }
    0.5 + s * h / 3.0
}

/// `1 - 6 Σd² / (n(n²-1))`, valid when neither input has ties.
pub fn spearman_classical(a: &[f64], b: &[f64]) -> f64 {
    let ra = ordinal_ranks(a);
    let rb = ordinal_ranks(b);
    let n = a.len() as f64;
    let d2: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - y) * (x - y)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

fn ordinal_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].partial_cmp(&v[j]).unwrap());
    let mut r = vec![0.0; v.len()];
    for (rank, i) in idx.into_iter().enumerate() {
        r[i] = rank as f64 + 1.0;
    }
    r
}

pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for at in 0..=p.len() {
            let mut q = p.clone();
            q.insert(at, n - 1);
            out.push(q);
        }
    }
    out
}

/// A small random model with `heads` heads plus samples and pairs to train on.
pub struct Toy {
    pub model: ContinualModel,
    pub samples: Vec<QualitySample>,
    pub pairs: Vec<RankedPair>,
}

pub fn random_toy(seed: u64, heads: usize) -> Toy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input = rng.gen_range(2..=5);
    let depth = rng.gen_range(1..=2);
    let mut cfg = TrunkConfig::new(input);
    cfg.layer_widths = (0..depth).map(|_| rng.gen_range(3..=6)).collect();
    cfg.frozen_prefix_layers = if depth == 2 { rng.gen_range(0..=1) } else { 0 };
    cfg.seed = seed;
    let mut model = ContinualModel::new(cfg).unwrap();
    for _ in 0..heads {
        model.add_head();
    }
    // Heads start at zero; give them a random direction so every term has
    // a non-trivial gradient.
    for t in 0..heads {
        for w in model.head_mut(t) {
            *w = rng.gen_range(-1.5..1.5);
        }
    }
    let n = rng.gen_range(6..=10);
    // A zero trunk output maps to the zero embedding, where the score is not
    // differentiable; redraw inputs until every sample avoids it.
    let samples = (0..1000)
        .find_map(|_| {
            let samples: Vec<_> = (0..n)
                .map(|i| {
                    let f = (0..input).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    QualitySample::new(format!("s{i}"), f, rng.gen_range(0.0..10.0), 1.0).unwrap()
                })
                .collect();
            let x = feature_matrix(&samples, 0..n);
            let pass = model.forward(x.view()).unwrap();
            (0..n).all(|i| !pass.degenerate(i)).then_some(samples)
        })
        .expect("model maps every input to zero");
    let pairs = (0..rng.gen_range(4..=8))
        .map(|_| {
            let first = rng.gen_range(0..n);
            let second = (first + rng.gen_range(1..n)) % n;
            RankedPair {
                first,
                second,
                p: rng.gen_range(0.05..0.95),
            }
        })
        .collect();
    Toy {
        model,
        samples,
        pairs,
    }
}

/// Central differences of `f` over every trainable parameter, in the layout
/// of `Gradients`: plastic trunk first, then heads in order.
pub fn central_differences<F>(model: &ContinualModel, step: f64, f: F) -> (Vec<f64>, Vec<Vec<f64>>)
where
    F: Fn(&ContinualModel) -> f64,
{
    let mut m = model.clone();
    let mut trunk = Vec::with_capacity(m.plastic_len());
    for i in 0..m.plastic_len() {
        let orig = m.plastic_params()[i];
        m.plastic_params_mut()[i] = orig + step;
        let up = f(&m);
        m.plastic_params_mut()[i] = orig - step;
        let down = f(&m);
        m.plastic_params_mut()[i] = orig;
        trunk.push((up - down) / (2.0 * step));
    }
    let mut heads = Vec::new();
    for t in 0..m.learned_tasks() {
        let mut g = Vec::new();
        for i in 0..m.output_dim() {
            let orig = m.heads()[t][i];
            m.head_mut(t)[i] = orig + step;
            let up = f(&m);
            m.head_mut(t)[i] = orig - step;
            let down = f(&m);
            m.head_mut(t)[i] = orig;
            g.push((up - down) / (2.0 * step));
        }
        heads.push(g);
    }
    (trunk, heads)
}

/// `‖a - b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}
