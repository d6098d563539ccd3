#![allow(dead_code)]

use digmm::featmap::FeatureVector;
use digmm::{Dataset64, Matrix64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random nonnegative feature vectors of length `m`, a few of them tiny so
/// the Gram matrix is badly conditioned.
pub fn random_features(n: usize, m: usize, seed: u64) -> Vec<FeatureVector<f64>> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let scale = if r.random_bool(0.2) { 1e-3 } else { 1.0 };
            FeatureVector::new((0..m).map(|_| scale * r.random::<f64>()).collect())
        })
        .collect()
}

pub fn gram(features: &[FeatureVector<f64>]) -> Matrix64 {
    let n = features.len();
    let mut g = Matrix64::zeros(n, n);
    for i in 0..n {
        for k in 0..n {
            g[(i, k)] = features[i]
                .values()
                .iter()
                .zip(features[k].values())
                .map(|(a, b)| a * b)
                .sum();
        }
    }
    g
}

fn mat_vec(g: &Matrix64, a: &[f64]) -> Vec<f64> {
    (0..a.len())
        .map(|i| g.row(i).iter().zip(a).map(|(x, y)| x * y).sum())
        .collect()
}

/// Euclidean projection onto `{0 ≤ a ≤ c, Σa = 1}` by bisection on the shift.
fn project(y: &[f64], c: f64) -> Vec<f64> {
    let total = |lam: f64| y.iter().map(|v| (v - lam).clamp(0.0, c)).sum::<f64>();
    let mut lo = y.iter().cloned().fold(f64::INFINITY, f64::min) - c - 1.0;
    let mut hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    for _ in 0..120 {
        let mid = 0.5 * (lo + hi);
        if total(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lam = 0.5 * (lo + hi);
    y.iter().map(|v| (v - lam).clamp(0.0, c)).collect()
}

/// Maximal-violating-pair measure computed directly from the gradient.
pub fn pair_violation(g: &Matrix64, a: &[f64], c: f64) -> f64 {
    let grad = mat_vec(g, a);
    let up = (0..a.len())
        .filter(|&i| a[i] < c)
        .map(|i| grad[i])
        .fold(f64::INFINITY, f64::min);
    let down = (0..a.len())
        .filter(|&i| a[i] > 0.0)
        .map(|i| grad[i])
        .fold(f64::NEG_INFINITY, f64::max);
    (down - up).max(0.0)
}

/// Largest eigenvalue of a PSD matrix by power iteration.
fn spectral_radius(g: &Matrix64) -> f64 {
    let n = g.rows();
    let mut v = vec![1.0; n];
    let mut lam = 0.0;
    for _ in 0..500 {
        let w = mat_vec(g, &v);
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lam = norm / v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v = w.into_iter().map(|x| x / norm).collect();
    }
    lam
}

/// Accelerated projected gradient (with momentum restarts) on `min ½aᵀGa`
/// over the capped simplex, run until the pair violation drops below
/// `target`. Returns `(alphas, ½aᵀGa, violation)`.
pub fn projected_gradient_dual(g: &Matrix64, nu: f64, target: f64) -> (Vec<f64>, f64, f64) {
    let n = g.rows();
    let c = 1.0 / (nu * n as f64);
    let step = 1.0 / (1.01 * spectral_radius(g)).max(1e-300);
    let mut a = project(&vec![1.0 / n as f64; n], c);
    let mut y = a.clone();
    let mut t = 1.0f64;
    let mut best = (a.clone(), pair_violation(g, &a, c));
    for _ in 0..200_000 {
        if best.1 < target {
            break;
        }
        let grad = mat_vec(g, &y);
        let next = project(
            &y.iter()
                .zip(&grad)
                .map(|(x, d)| x - step * d)
                .collect::<Vec<_>>(),
            c,
        );
        let restart = y
            .iter()
            .zip(&next)
            .zip(&a)
            .map(|((yi, ni), ai)| (yi - ni) * (ni - ai))
            .sum::<f64>()
            > 0.0;
        let t_next = if restart {
            1.0
        } else {
            0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt())
        };
        let beta = if restart { 0.0 } else { (t - 1.0) / t_next };
        y = next
            .iter()
            .zip(&a)
            .map(|(ni, ai)| ni + beta * (ni - ai))
            .collect();
        a = next;
        t = t_next;
        let viol = pair_violation(g, &a, c);
        if viol < best.1 {
            best = (a.clone(), viol);
        }
    }
    let (a, viol) = best;
    let obj = 0.5
        * a.iter()
            .zip(mat_vec(g, &a))
            .map(|(x, y)| x * y)
            .sum::<f64>();
    (a, obj, viol)
}

/// `n` points from `clusters` well-separated unit-ish Gaussians in 2-D.
pub fn clustered_data(n: usize, clusters: usize, seed: u64) -> Dataset64 {
    use rand_distr::{Distribution, StandardNormal};
    let mut r = rng(seed);
    let centers: Vec<(f64, f64, f64)> = (0..clusters)
        .map(|_| {
            (
                r.random_range(-10.0..10.0),
                r.random_range(-10.0..10.0),
                r.random_range(0.3..2.0),
            )
        })
        .collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let (cx, cy, s) = centers[i % clusters];
            let zx: f64 = StandardNormal.sample(&mut r);
            let zy: f64 = StandardNormal.sample(&mut r);
            vec![cx + s * zx, cy + s * zy]
        })
        .collect();
    Dataset64::from_rows(&rows).unwrap()
}
