//! One-class SVM over an explicit finite-dimensional feature map.
//!
//! The primal is
//!
//! ```text
//! min_{w, ρ}  ½‖w‖² + 1/(νn) Σ_i max(ρ − ⟨w, p(x_i)⟩, 0) − ρ
//! ```
//!
//! and is solved through its dual
//!
//! ```text
//! min_α  ½ αᵀGα   s.t.  0 ≤ α_i ≤ 1/(νn),  Σ_i α_i = 1
//! ```
//!
//! with SMO-style pairwise updates. At the optimum `w = Σ_i α_i p(x_i)` and the
//! primal value equals minus the dual value.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featmap::{gram_matrix, FeatureVector};
use crate::float::Float;
use crate::linalg::Matrix;

pub const DEFAULT_TOL: f64 = 1e-6;

/// `10 · n · max(100, n)` pair updates.
pub fn default_max_passes(n: usize) -> usize {
    10 * n * n.max(100)
}

#[derive(Debug, Clone)]
pub struct OcsvmProblem<F> {
    gram: Matrix<F>,
    nu: F,
    features: Option<Vec<FeatureVector<F>>>,
}

impl<F: Float> OcsvmProblem<F> {
    /// Problem over a precomputed Gram matrix. The solution will carry an
    /// empty `weight_vector`, since the features are unknown.
    pub fn from_gram(gram: Matrix<F>, nu: F) -> Result<Self> {
        let n = gram.rows();
        if !gram.is_square() {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: gram.cols(),
            });
        }
        if n == 0 {
            return Err(Error::InvalidParameter(
                "problem needs at least one sample".into(),
            ));
        }
        if !gram.all_finite() {
            return Err(Error::InvalidParameter(
                "gram matrix has non-finite entries".into(),
            ));
        }
        let scale = gram.max_abs().max(F::one());
        if gram.max_asymmetry() > F::tol(1e-10) * scale {
            return Err(Error::NonSymmetric {
                asymmetry: gram.max_asymmetry().widen(),
            });
        }
        if !(nu > F::zero() && nu <= F::one()) {
            return Err(Error::InvalidParameter(format!(
                "nu must lie in (0, 1], got {nu}"
            )));
        }
        let nu_n = nu.widen() * n as f64;
        if nu_n < 1.0 - 1e-12 {
            return Err(Error::Infeasible { nu_n });
        }
        Ok(Self {
            gram,
            nu,
            features: None,
        })
    }

    pub fn from_features(features: Vec<FeatureVector<F>>, nu: F) -> Result<Self> {
        let gram = gram_matrix(&features)?;
        let mut p = Self::from_gram(gram, nu)?;
        p.features = Some(features);
        Ok(p)
    }

    pub fn n(&self) -> usize {
        self.gram.rows()
    }

    pub fn nu(&self) -> F {
        self.nu
    }

    pub fn gram(&self) -> &Matrix<F> {
        &self.gram
    }

    pub fn features(&self) -> Option<&[FeatureVector<F>]> {
        self.features.as_deref()
    }

    /// Box bound `1/(νn)`.
    pub fn upper_bound(&self) -> F {
        upper_bound(self.nu, self.n())
    }

    fn gradient(&self, alphas: &[F]) -> Vec<F> {
        let n = self.n();
        (0..n)
            .map(|i| {
                let row = self.gram.row(i);
                let mut acc = 0.0f64;
                for k in 0..n {
                    if alphas[k] != F::zero() {
                        acc += row[k].widen() * alphas[k].widen();
                    }
                }
                F::lit(acc)
            })
            .collect()
    }
}

pub fn upper_bound<F: Float>(nu: F, n: usize) -> F {
    F::one() / (nu * F::lit(n as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Converged,
    /// Update budget exhausted with the KKT violation still above `tol`; the
    /// solution is the last feasible iterate.
    NoConvergence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcsvmSolution<F> {
    pub alphas: Vec<F>,
    pub rho: F,
    /// `w* = Σ α_i p(x_i)`; empty when the problem was built from a Gram
    /// matrix alone.
    pub weight_vector: Vec<F>,
    /// Indices with `α_i > 0`.
    pub support_idx: Vec<usize>,
    /// Indices with `0 < α_i < 1/(νn)`.
    pub margin_idx: Vec<usize>,
    /// Primal objective at `(w*, ρ*)`.
    pub objective_value: F,
    pub status: SolverStatus,
    pub iterations: usize,
    pub kkt_violation: F,
}

impl<F: Float> OcsvmSolution<F> {
    pub fn converged(&self) -> bool {
        self.status == SolverStatus::Converged
    }

    /// `⟨w*, p⟩ − ρ*`.
    pub fn decision(&self, features: &FeatureVector<F>) -> F {
        features.dot(&self.weight_vector) - self.rho
    }
}

/// Support and margin index sets implied by `alphas` and the box bound.
pub fn partition_indices<F: Float>(alphas: &[F], upper: F) -> (Vec<usize>, Vec<usize>) {
    let support = (0..alphas.len())
        .filter(|&i| alphas[i] > F::zero())
        .collect();
    let margin = (0..alphas.len())
        .filter(|&i| alphas[i] > F::zero() && alphas[i] < upper)
        .collect();
    (support, margin)
}

/// `½ αᵀGα`.
pub fn dual_objective<F: Float>(problem: &OcsvmProblem<F>, alphas: &[F]) -> F {
    let g = problem.gradient(alphas);
    let v: f64 = alphas
        .iter()
        .zip(&g)
        .map(|(a, b)| a.widen() * b.widen())
        .sum();
    F::lit(0.5 * v)
}

fn check_feasible<F: Float>(problem: &OcsvmProblem<F>, alphas: &[F]) -> Result<()> {
    if alphas.len() != problem.n() {
        return Err(Error::DimensionMismatch {
            expected: problem.n(),
            actual: alphas.len(),
        });
    }
    let c = problem.upper_bound().widen();
    let mut worst = 0.0f64;
    let mut sum = 0.0f64;
    for &a in alphas {
        let a = a.widen();
        worst = worst.max(-a).max(a - c);
        sum += a;
    }
    worst = worst.max((sum - 1.0).abs());
    if !(worst <= F::tol(1e-8).widen()) {
        return Err(Error::InfeasiblePoint { violation: worst });
    }
    Ok(())
}

/// Largest violation of the optimality conditions over the pairs SMO can
/// move: `max_{α_j>0} g_j − min_{α_i<C} g_i` with `g = Gα`, floored at zero.
pub fn kkt_violation<F: Float>(problem: &OcsvmProblem<F>, alphas: &[F]) -> Result<F> {
    check_feasible(problem, alphas)?;
    let g = problem.gradient(alphas);
    Ok(select_pair(alphas, &g, problem.upper_bound())
        .map(|(_, _, v)| v)
        .unwrap_or(F::zero())
        .max(F::zero()))
}

/// Maximal violating pair `(i, j, g_j − g_i)`: `i` minimizes the gradient
/// among indices that can grow, `j` maximizes it among those that can
/// shrink. Ties go to the lowest index.
fn select_pair<F: Float>(alphas: &[F], g: &[F], upper: F) -> Option<(usize, usize, F)> {
    let mut up: Option<usize> = None;
    let mut low: Option<usize> = None;
    for k in 0..alphas.len() {
        if alphas[k] < upper && up.is_none_or(|i| g[k] < g[i]) {
            up = Some(k);
        }
        if alphas[k] > F::zero() && low.is_none_or(|j| g[k] > g[j]) {
            low = Some(k);
        }
    }
    match (up, low) {
        (Some(i), Some(j)) => Some((i, j, g[j] - g[i])),
        _ => None,
    }
}

/// Primal objective evaluated literally from `(w, ρ)` and the features.
pub fn primal_objective<F: Float>(
    solution: &OcsvmSolution<F>,
    features: &[FeatureVector<F>],
    nu: F,
) -> Result<F> {
    primal_objective_at(&solution.weight_vector, solution.rho, features, nu)
}

pub fn primal_objective_at<F: Float>(
    weights: &[F],
    rho: F,
    features: &[FeatureVector<F>],
    nu: F,
) -> Result<F> {
    let n = features.len();
    if n == 0 {
        return Err(Error::InvalidParameter("no features".into()));
    }
    let mut hinge = 0.0f64;
    for f in features {
        if f.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: weights.len(),
                actual: f.len(),
            });
        }
        hinge += (rho - f.dot(weights)).widen().max(0.0);
    }
    let w_sq: f64 = weights.iter().map(|w| w.widen() * w.widen()).sum();
    let value = 0.5 * w_sq + hinge / (nu.widen() * n as f64) - rho.widen();
    Ok(F::lit(value))
}

/// Solves the dual with default observer-free settings.
pub fn solve_dual<F: Float>(
    problem: &OcsvmProblem<F>,
    tol: F,
    max_passes: usize,
) -> Result<OcsvmSolution<F>> {
    solve_dual_observed(problem, tol, max_passes, |_| {})
}

/// Like [`solve_dual`], calling `observer` with the coefficients after every
/// pair update.
pub fn solve_dual_observed<F: Float>(
    problem: &OcsvmProblem<F>,
    tol: F,
    max_passes: usize,
    mut observer: impl FnMut(&[F]),
) -> Result<OcsvmSolution<F>> {
    if !(tol > F::zero()) {
        return Err(Error::InvalidParameter("tol must be positive".into()));
    }
    let n = problem.n();
    let c = problem.upper_bound();
    let gram = problem.gram();
    let tau = F::lit(1e-12);

    let mut alphas = initial_alphas(problem.nu(), n);
    let mut g = problem.gradient(&alphas);
    let mut iterations = 0usize;

    let converged = loop {
        let Some((i, j, viol)) = select_pair(&alphas, &g, c) else {
            // every α pinned to one bound: nothing SMO can move
            break true;
        };
        if viol < tol {
            // refresh the incrementally updated gradient before trusting it
            let fresh = problem.gradient(&alphas);
            let still = select_pair(&alphas, &fresh, c).map_or(F::zero(), |(_, _, v)| v);
            g = fresh;
            if still < tol {
                break true;
            }
            continue;
        }
        if iterations >= max_passes {
            break false;
        }

        let eta = gram[(i, i)] + gram[(j, j)] - F::lit(2.0) * gram[(i, j)];
        let eta = if eta > tau { eta } else { tau };
        let room_i = c - alphas[i];
        let room_j = alphas[j];
        let step = viol / eta;
        let (t, snap_i, snap_j) = if step >= room_i && room_i <= room_j {
            (room_i, true, room_i == room_j)
        } else if step >= room_j {
            (room_j, false, true)
        } else {
            (step, false, false)
        };

        alphas[i] = if snap_i { c } else { alphas[i] + t };
        alphas[j] = if snap_j { F::zero() } else { alphas[j] - t };
        let row_i = gram.row(i);
        let row_j = gram.row(j);
        for k in 0..n {
            g[k] += t * (row_i[k] - row_j[k]);
        }
        iterations += 1;
        observer(&alphas);
    };

    let g = problem.gradient(&alphas);
    let kkt = select_pair(&alphas, &g, c)
        .map_or(F::zero(), |(_, _, v)| v)
        .max(F::zero());
    let (support_idx, margin_idx) = partition_indices(&alphas, c);
    let rho = recover_rho(&alphas, &g, c, &margin_idx);

    let weight_vector = match problem.features() {
        Some(fs) => {
            let m = fs.first().map_or(0, FeatureVector::len);
            let mut w = vec![0.0f64; m];
            for (f, &a) in fs.iter().zip(&alphas) {
                if a == F::zero() {
                    continue;
                }
                for (wk, &v) in w.iter_mut().zip(f.values()) {
                    *wk += a.widen() * v.widen();
                }
            }
            w.into_iter().map(F::lit).collect()
        }
        None => Vec::new(),
    };

    // ‖w‖² = αᵀGα = Σ α_i g_i
    let w_sq: f64 = alphas
        .iter()
        .zip(&g)
        .map(|(a, b)| a.widen() * b.widen())
        .sum();
    let hinge: f64 = g.iter().map(|&gi| (rho - gi).widen().max(0.0)).sum();
    let objective = 0.5 * w_sq + c.widen() * hinge - rho.widen();

    Ok(OcsvmSolution {
        alphas,
        rho,
        weight_vector,
        support_idx,
        margin_idx,
        objective_value: F::lit(objective),
        status: if converged && kkt < tol {
            SolverStatus::Converged
        } else {
            SolverStatus::NoConvergence
        },
        iterations,
        kkt_violation: kkt,
    })
}

/// First `⌊νn⌋` coefficients at the bound, the remainder on the next index.
fn initial_alphas<F: Float>(nu: F, n: usize) -> Vec<F> {
    let c = upper_bound(nu, n);
    let mut alphas = vec![F::zero(); n];
    let mut remaining = F::one();
    for a in alphas.iter_mut() {
        if remaining <= F::zero() {
            break;
        }
        let take = if remaining >= c { c } else { remaining };
        *a = take;
        remaining -= take;
    }
    alphas
}

/// Mean gradient over margin vectors; otherwise the midpoint between the
/// largest gradient at the upper bound and the smallest at zero.
fn recover_rho<F: Float>(alphas: &[F], g: &[F], c: F, margin: &[usize]) -> F {
    if !margin.is_empty() {
        let s: f64 = margin.iter().map(|&i| g[i].widen()).sum();
        return F::lit(s / margin.len() as f64);
    }
    let mut hi_upper: Option<F> = None;
    let mut lo_zero: Option<F> = None;
    for (k, &a) in alphas.iter().enumerate() {
        if a >= c {
            hi_upper = Some(hi_upper.map_or(g[k], |v: F| v.max(g[k])));
        } else if a == F::zero() {
            lo_zero = Some(lo_zero.map_or(g[k], |v: F| v.min(g[k])));
        }
    }
    match (hi_upper, lo_zero) {
        (Some(a), Some(b)) => (a + b) / F::lit(2.0),
        (Some(a), None) => a,
        (None, Some(b)) => b,
        (None, None) => F::zero(),
    }
}
