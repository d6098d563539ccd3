//! Gaussian mixture models and their maximum-likelihood fit by EM.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::float::{log_sum_exp, Float};
use crate::gaussian::GaussianComponent;
use crate::linalg::Matrix;

/// Weights, means and covariances of an `m`-component mixture in `d`
/// dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmParams<F> {
    components: Vec<GaussianComponent<F>>,
    weights: Vec<F>,
}

impl<F: Float> GmmParams<F> {
    /// Checks that weights are positive, sum to one, and that every component
    /// shares the same dimension.
    pub fn new(components: Vec<GaussianComponent<F>>, weights: Vec<F>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvariantViolation(
                "mixture has no components".into(),
            ));
        }
        if components.len() != weights.len() {
            return Err(Error::InvariantViolation(format!(
                "{} components but {} weights",
                components.len(),
                weights.len()
            )));
        }
        let d = components[0].dim();
        if let Some(c) = components.iter().find(|c| c.dim() != d) {
            return Err(Error::InvariantViolation(format!(
                "component dimension {} differs from {d}",
                c.dim()
            )));
        }
        if weights.iter().any(|&w| !(w > F::zero()) || !w.is_finite()) {
            return Err(Error::InvariantViolation(
                "mixture weights must be strictly positive".into(),
            ));
        }
        let total: f64 = weights.iter().map(|w| w.widen()).sum();
        let slack = F::tol(1e-12).widen() * weights.len() as f64;
        if (total - 1.0).abs() > slack {
            return Err(Error::InvariantViolation(format!(
                "mixture weights sum to {total}, not 1"
            )));
        }
        Ok(Self {
            components,
            weights,
        })
    }

    pub fn single(component: GaussianComponent<F>) -> Self {
        Self {
            components: vec![component],
            weights: vec![F::one()],
        }
    }

    /// Number of components.
    pub fn m(&self) -> usize {
        self.components.len()
    }

    /// Data dimension.
    pub fn d(&self) -> usize {
        self.components[0].dim()
    }

    pub fn components(&self) -> &[GaussianComponent<F>] {
        &self.components
    }

    pub fn weights(&self) -> &[F] {
        &self.weights
    }

    fn check_dim(&self, x: &[F]) -> Result<()> {
        if x.len() != self.d() {
            return Err(Error::DimensionMismatch {
                expected: self.d(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// `log w_j + log p_j(x)` for every component.
    pub fn weighted_log_densities(&self, x: &[F]) -> Result<Vec<F>> {
        self.check_dim(x)?;
        self.components
            .iter()
            .zip(&self.weights)
            .map(|(c, &w)| Ok(w.ln() + c.log_pdf(x)?))
            .collect()
    }

    /// Log of the mixture density, via log-sum-exp over components.
    pub fn mixture_log_pdf(&self, x: &[F]) -> Result<F> {
        Ok(log_sum_exp(&self.weighted_log_densities(x)?))
    }

    /// Posterior component probabilities for `x`.
    pub fn responsibilities(&self, x: &[F]) -> Result<Vec<F>> {
        let terms = self.weighted_log_densities(x)?;
        Ok(normalize_log_terms(&terms))
    }

    /// Sum of `mixture_log_pdf` over the rows of `data`, in row order.
    pub fn log_likelihood(&self, data: &Dataset<F>) -> Result<F> {
        if data.n() > 0 && data.d() != self.d() {
            return Err(Error::DimensionMismatch {
                expected: self.d(),
                actual: data.d(),
            });
        }
        let mut total = F::zero();
        for x in data.points().iter_rows() {
            total += self.mixture_log_pdf(x)?;
        }
        Ok(total)
    }

    /// Count of free parameters: `m-1` weights, `m·d` means, `m·d(d+1)/2`
    /// covariance entries.
    pub fn n_free_parameters(&self) -> usize {
        free_parameter_count(self.m(), self.d())
    }

    /// Bayesian information criterion `k·ln(n) − 2𝓛`. Lower is better.
    pub fn bic(&self, data: &Dataset<F>) -> Result<F> {
        let ll = self.log_likelihood(data)?;
        let k = F::lit(self.n_free_parameters() as f64);
        Ok(k * F::lit(data.n().max(1) as f64).ln() - F::lit(2.0) * ll)
    }
}

pub fn free_parameter_count(m: usize, d: usize) -> usize {
    m - 1 + m * d + m * d * (d + 1) / 2
}

fn normalize_log_terms<F: Float>(terms: &[F]) -> Vec<F> {
    let total = log_sum_exp(terms);
    if total == F::neg_infinity() {
        // every component underflowed; fall back to uniform
        let u = F::one() / F::lit(terms.len() as f64);
        return vec![u; terms.len()];
    }
    let mut out: Vec<F> = terms.iter().map(|&t| (t - total).exp()).collect();
    let s: F = out.iter().copied().sum();
    for v in &mut out {
        *v /= s;
    }
    out
}

/// EM schedule. Defaults: 500 iterations, relative tolerance `1e-8`, five
/// restarts, covariance ridge `1e-6`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub max_iters: usize,
    pub rel_tol: f64,
    pub n_init: usize,
    pub reg_covar: f64,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            rel_tol: 1e-8,
            n_init: 5,
            reg_covar: 1e-6,
            seed: 0,
        }
    }
}

impl EmConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be positive".into()));
        }
        if !(self.rel_tol > 0.0) || !self.rel_tol.is_finite() {
            return Err(Error::InvalidParameter("rel_tol must be positive".into()));
        }
        if self.n_init == 0 {
            return Err(Error::InvalidParameter("n_init must be positive".into()));
        }
        if !(self.reg_covar >= 0.0) || !self.reg_covar.is_finite() {
            return Err(Error::InvalidParameter(
                "reg_covar must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Per-iteration log-likelihood history of the selected restart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmTrace {
    /// Log-likelihood evaluated at the start of every E-step. After a
    /// component re-seed the sequence restarts, so it is non-decreasing.
    pub log_likelihoods: Vec<f64>,
    /// Relative change fell below `rel_tol`, or the regularized update
    /// stopped increasing the log-likelihood.
    pub converged: bool,
    /// M-steps performed in the selected restart, re-seeds included.
    pub iterations: usize,
    pub restart: usize,
    pub reseeds: usize,
}

impl EmTrace {
    pub fn final_log_likelihood(&self) -> f64 {
        self.log_likelihoods
            .last()
            .copied()
            .unwrap_or(f64::NEG_INFINITY)
    }
}

/// Re-seeds allowed per restart before it is abandoned as degenerate.
pub const MAX_RESEEDS: usize = 3;

/// Fits an `m`-component full-covariance mixture by EM.
///
/// Runs `config.n_init` restarts with k-means++ seeded means, the global
/// data covariance, and uniform weights, and keeps the restart with the
/// highest final log-likelihood (lowest index on ties). Labels on `data`
/// are ignored.
pub fn fit_em<F: Float>(
    data: &Dataset<F>,
    m: usize,
    config: &EmConfig,
) -> Result<(GmmParams<F>, EmTrace)> {
    let mut best: Option<(GmmParams<F>, EmTrace)> = None;
    let mut last_err = None;
    for outcome in fit_em_restarts(data, m, config)? {
        match outcome {
            Ok((params, trace)) => {
                let better = match &best {
                    None => true,
                    Some((_, t)) => trace.final_log_likelihood() > t.final_log_likelihood(),
                };
                if better {
                    best = Some((params, trace));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| {
        last_err.unwrap_or_else(|| Error::DegenerateData("no restart succeeded".into()))
    })
}

/// Outcome of one EM restart.
pub type RestartOutcome<F> = Result<(GmmParams<F>, EmTrace)>;

/// Every restart of [`fit_em`], in order, including the failed ones.
pub fn fit_em_restarts<F: Float>(
    data: &Dataset<F>,
    m: usize,
    config: &EmConfig,
) -> Result<Vec<RestartOutcome<F>>> {
    config.validate()?;
    if m == 0 {
        return Err(Error::InvalidParameter("m must be positive".into()));
    }
    let n = data.n();
    if n < m || n == 0 {
        return Err(Error::TooFewSamples { n, m });
    }
    if !data.points().all_finite() {
        return Err(Error::DegenerateData(
            "data contain non-finite values".into(),
        ));
    }

    let global = global_covariance(data.points(), F::lit(config.reg_covar))?;
    Ok((0..config.n_init)
        .map(|restart| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(crate::derive_seed(config.seed, restart as u64));
            run_restart(data.points(), m, config, &global, &mut rng).map(|(params, mut trace)| {
                trace.restart = restart;
                (params, trace)
            })
        })
        .collect())
}

fn global_covariance<F: Float>(points: &Matrix<F>, reg_covar: F) -> Result<GaussianComponent<F>> {
    let n = points.rows();
    let d = points.cols();
    let weights = vec![F::one(); n];
    let (mean, cov) = weighted_moments(points, &weights, F::lit(n as f64));
    let cov = ridge(cov, reg_covar);
    GaussianComponent::new(mean, cov).map_err(|_| {
        Error::DegenerateData(format!("data covariance is singular in {d} dimensions"))
    })
}

fn ridge<F: Float>(mut cov: Matrix<F>, reg_covar: F) -> Matrix<F> {
    let d = cov.rows();
    let bump = reg_covar * cov.trace() / F::lit(d as f64);
    for i in 0..d {
        cov[(i, i)] += bump;
    }
    cov
}

/// Weighted mean and covariance; `total` is the sum of `weights`.
fn weighted_moments<F: Float>(points: &Matrix<F>, weights: &[F], total: F) -> (Vec<F>, Matrix<F>) {
    let d = points.cols();
    let mut mean = vec![F::zero(); d];
    for (x, &w) in points.iter_rows().zip(weights) {
        for k in 0..d {
            mean[k] += w * x[k];
        }
    }
    for v in &mut mean {
        *v /= total;
    }
    let mut cov = Matrix::zeros(d, d);
    let mut diff = vec![F::zero(); d];
    for (x, &w) in points.iter_rows().zip(weights) {
        for k in 0..d {
            diff[k] = x[k] - mean[k];
        }
        for a in 0..d {
            let wa = w * diff[a];
            for b in 0..=a {
                cov[(a, b)] += wa * diff[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..=a {
            let v = cov[(a, b)] / total;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    (mean, cov)
}

/// k-means++ seeding: first center uniform, the rest by squared-distance
/// sampling. Returns row indices.
fn kmeans_pp_indices<F: Float, R: Rng>(points: &Matrix<F>, m: usize, rng: &mut R) -> Vec<usize> {
    let n = points.rows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut dist: Vec<f64> = points
        .iter_rows()
        .map(|x| sq_dist(x, points.row(chosen[0])))
        .collect();
    while chosen.len() < m {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &dv) in dist.iter().enumerate() {
                acc += dv;
                if acc > target && dv > 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        chosen.push(next);
        for (i, x) in points.iter_rows().enumerate() {
            let dv = sq_dist(x, points.row(next));
            if dv < dist[i] {
                dist[i] = dv;
            }
        }
    }
    chosen
}

fn sq_dist<F: Float>(a: &[F], b: &[F]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = (x - y).widen();
            d * d
        })
        .sum()
}

struct EStep<F> {
    resp: Matrix<F>,
    point_ll: Vec<F>,
    total_ll: f64,
}

fn e_step<F: Float>(points: &Matrix<F>, params: &GmmParams<F>) -> EStep<F> {
    let n = points.rows();
    let m = params.m();
    let mut resp = Matrix::zeros(n, m);
    let mut point_ll = Vec::with_capacity(n);
    let mut total = 0.0f64;
    let log_w: Vec<F> = params.weights.iter().map(|w| w.ln()).collect();
    let mut terms = vec![F::zero(); m];
    for (i, x) in points.iter_rows().enumerate() {
        for (j, c) in params.components.iter().enumerate() {
            terms[j] = log_w[j] + c.log_pdf(x).expect("dimension checked by caller");
        }
        let ll = log_sum_exp(&terms);
        let r = resp.row_mut(i);
        if ll == F::neg_infinity() {
            let u = F::one() / F::lit(m as f64);
            r.iter_mut().for_each(|v| *v = u);
        } else {
            for j in 0..m {
                r[j] = (terms[j] - ll).exp();
            }
        }
        point_ll.push(ll);
        total += ll.widen();
    }
    EStep {
        resp,
        point_ll,
        total_ll: total,
    }
}

fn run_restart<F: Float, R: Rng>(
    points: &Matrix<F>,
    m: usize,
    config: &EmConfig,
    global: &GaussianComponent<F>,
    rng: &mut R,
) -> Result<(GmmParams<F>, EmTrace)> {
    let reg = F::lit(config.reg_covar);
    let min_mass = F::lit(0.1);

    let seeds = kmeans_pp_indices(points, m, rng);
    let mut components: Vec<GaussianComponent<F>> = seeds
        .iter()
        .map(|&i| GaussianComponent::new(points.row(i).to_vec(), global.covariance().clone()))
        .collect::<Result<_>>()?;
    let mut weights = vec![F::one() / F::lit(m as f64); m];

    let mut trace = EmTrace {
        log_likelihoods: Vec::new(),
        converged: false,
        iterations: 0,
        restart: 0,
        reseeds: 0,
    };

    let mut previous: Option<GmmParams<F>> = None;
    loop {
        let params = GmmParams {
            components: components.clone(),
            weights: weights.clone(),
        };
        let e = e_step(points, &params);
        if !e.total_ll.is_finite() {
            return Err(Error::DegenerateData("log-likelihood is not finite".into()));
        }
        if let Some(&prev) = trace.log_likelihoods.last() {
            if e.total_ll < prev {
                // The ridge makes the update inexact; once it stops paying
                // off, keep the better iterate.
                if let Some(p) = previous {
                    trace.converged = true;
                    return Ok((p, trace));
                }
            }
            trace.log_likelihoods.push(e.total_ll);
            if (e.total_ll - prev).abs() / (prev.abs() + 1.0) < config.rel_tol {
                trace.converged = true;
                return Ok((params, trace));
            }
        } else {
            trace.log_likelihoods.push(e.total_ll);
        }
        if trace.iterations >= config.max_iters {
            return Ok((params, trace));
        }

        // M-step
        trace.iterations += 1;
        let mut mass = vec![F::zero(); m];
        for r in e.resp.iter_rows() {
            for j in 0..m {
                mass[j] += r[j];
            }
        }
        let mut collapsed = None;
        let mut new_components = Vec::with_capacity(m);
        for j in 0..m {
            if mass[j] < min_mass {
                collapsed = Some(j);
                break;
            }
            let col: Vec<F> = e.resp.iter_rows().map(|r| r[j]).collect();
            let (mean, cov) = weighted_moments(points, &col, mass[j]);
            match GaussianComponent::new(mean, ridge(cov, reg)) {
                Ok(c) => new_components.push(c),
                Err(_) => {
                    collapsed = Some(j);
                    break;
                }
            }
        }

        if let Some(j) = collapsed {
            trace.reseeds += 1;
            if trace.reseeds > MAX_RESEEDS {
                return Err(Error::DegenerateData(format!(
                    "component {j} kept collapsing after {MAX_RESEEDS} re-seeds"
                )));
            }
            let worst = e.point_ll.iter().enumerate().fold(0usize, |best, (i, &v)| {
                if v < e.point_ll[best] {
                    i
                } else {
                    best
                }
            });
            components[j] =
                GaussianComponent::new(points.row(worst).to_vec(), global.covariance().clone())?;
            weights[j] = F::one() / F::lit(m as f64);
            let s: F = weights.iter().copied().sum();
            weights.iter_mut().for_each(|w| *w /= s);
            // the likelihood sequence restarts from the re-seeded state
            trace.log_likelihoods.clear();
            previous = None;
            continue;
        }

        let total: F = mass.iter().copied().sum();
        previous = Some(params);
        weights = mass.iter().map(|&v| v / total).collect();
        components = new_components;
    }
}
