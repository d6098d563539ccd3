//! Synthetic multi-peaked scenarios: normal data from a Gaussian mixture,
//! anomalies by rejection sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::quantile;
use crate::float::{log_sum_exp, Float};
use crate::gaussian::GaussianComponent;
use crate::linalg::Matrix;

use super::{Dataset, Label};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSpec {
    pub weight: f64,
    pub mean: Vec<f64>,
    /// Row-major `d × d` rows.
    pub covariance: Vec<Vec<f64>>,
}

/// Axis-aligned box `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxRegion {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxRegion {
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(&v, (&lo, &hi))| v >= lo && v <= hi)
    }
}

/// Where anomaly candidates are drawn from before the rejection test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum AnomalyProposal {
    /// Uniform over the box.
    UniformBox,
    /// A cluster chosen by weight, then `N(μ_j, inflation² Σ_j)`, kept only
    /// if inside the box. Concentrates anomalies around every peak.
    ClusterShell { inflation: f64 },
}

/// Which densities a candidate must fall below to be accepted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyRule {
    /// Mixture log-density below the `q`-quantile of the normal samples'
    /// mixture log-densities.
    MixtureQuantile,
    /// For every cluster, the cluster's own log-density below the
    /// `q`-quantile of that density over the normal samples drawn from that
    /// cluster. Equivalently: outside every cluster's `1−q` Mahalanobis
    /// ellipse.
    ComponentQuantile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub clusters: Vec<ClusterSpec>,
    pub n_normal: usize,
    pub n_anomaly: usize,
    pub anomaly_box: BoxRegion,
    #[serde(default = "default_q")]
    pub quantile: f64,
    #[serde(default = "default_rule")]
    pub rule: AnomalyRule,
    #[serde(default = "default_proposal")]
    pub proposal: AnomalyProposal,
    #[serde(default)]
    pub seed: u64,
}

fn default_q() -> f64 {
    0.001
}

fn default_rule() -> AnomalyRule {
    AnomalyRule::MixtureQuantile
}

fn default_proposal() -> AnomalyProposal {
    AnomalyProposal::UniformBox
}

/// Candidate draws after which a low acceptance rate is an error.
pub const STALL_DRAWS: usize = 1_000_000;
/// Minimum acceptance rate once `STALL_DRAWS` candidates have been drawn.
pub const STALL_RATE: f64 = 0.001;

impl ScenarioSpec {
    /// Two well-separated clusters in the plane: a dense one (σ = 0.3) on the
    /// right and a sparse one (σ = 2.5) on the left, equal weights. Peak
    /// mixture log-densities are about −0.12 and −4.36, so a threshold of
    /// `e^{-4.3}` rejects the whole sparse cluster while `e^{-7}` still
    /// admits a wide ring around the dense one. Anomalies are drawn around
    /// both clusters and kept only outside each cluster's 99% ellipse.
    pub fn paper_like(seed: u64) -> Self {
        Self {
            clusters: vec![
                ClusterSpec {
                    weight: 0.5,
                    mean: vec![4.0, 0.0],
                    covariance: vec![vec![0.09, 0.0], vec![0.0, 0.09]],
                },
                ClusterSpec {
                    weight: 0.5,
                    mean: vec![-6.0, 0.0],
                    covariance: vec![vec![6.25, 0.0], vec![0.0, 6.25]],
                },
            ],
            n_normal: 400,
            n_anomaly: 400,
            anomaly_box: BoxRegion {
                lo: vec![-20.0, -14.0],
                hi: vec![12.0, 14.0],
            },
            quantile: 0.01,
            rule: AnomalyRule::ComponentQuantile,
            proposal: AnomalyProposal::ClusterShell { inflation: 2.0 },
            seed,
        }
    }

    pub fn dim(&self) -> usize {
        self.clusters.first().map_or(0, |c| c.mean.len())
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.clusters.is_empty() || d == 0 {
            return Err(Error::InvalidParameter(
                "scenario needs at least one cluster".into(),
            ));
        }
        for c in &self.clusters {
            if !(c.weight > 0.0) || !c.weight.is_finite() {
                return Err(Error::InvalidParameter(
                    "cluster weights must be positive".into(),
                ));
            }
            if c.mean.len() != d
                || c.covariance.len() != d
                || c.covariance.iter().any(|r| r.len() != d)
            {
                return Err(Error::InvalidParameter(
                    "cluster dimensions disagree".into(),
                ));
            }
        }
        if self.anomaly_box.lo.len() != d || self.anomaly_box.hi.len() != d {
            return Err(Error::InvalidParameter(
                "anomaly box has wrong dimension".into(),
            ));
        }
        if self
            .clusters
            .iter()
            .any(|c| !self.anomaly_box.contains(&c.mean))
        {
            return Err(Error::InvalidParameter(
                "anomaly box must enclose every cluster mean".into(),
            ));
        }
        if !(self.quantile > 0.0 && self.quantile < 1.0) {
            return Err(Error::InvalidParameter(
                "quantile must lie in (0, 1)".into(),
            ));
        }
        if let AnomalyProposal::ClusterShell { inflation } = self.proposal {
            if !(inflation > 0.0) {
                return Err(Error::InvalidParameter("inflation must be positive".into()));
            }
        }
        if self.n_anomaly > 0 && self.n_normal == 0 {
            return Err(Error::InvalidParameter(
                "anomaly rejection needs normal samples to set its quantile".into(),
            ));
        }
        Ok(())
    }

    pub(crate) fn components(&self) -> Result<Vec<GaussianComponent<f64>>> {
        self.clusters
            .iter()
            .map(|c| {
                let cov = Matrix::from_rows(&c.covariance)
                    .ok_or_else(|| Error::InvalidParameter("ragged covariance".into()))?;
                GaussianComponent::new(c.mean.clone(), cov)
            })
            .collect()
    }

    fn normalized_weights(&self) -> Vec<f64> {
        let total: f64 = self.clusters.iter().map(|c| c.weight).sum();
        self.clusters.iter().map(|c| c.weight / total).collect()
    }

    /// Log-density of the true generating mixture.
    pub fn mixture_log_pdf(&self, x: &[f64]) -> Result<f64> {
        let comps = self.components()?;
        let w = self.normalized_weights();
        let terms: Vec<f64> = comps
            .iter()
            .zip(&w)
            .map(|(c, w)| Ok(w.ln() + c.log_pdf(x)?))
            .collect::<Result<_>>()?;
        Ok(log_sum_exp(&terms))
    }

    /// Ratio of the highest to the lowest cluster peak density `p_j(μ_j)`.
    pub fn peak_density_ratio(&self) -> Result<f64> {
        let comps = self.components()?;
        let peaks: Vec<f64> = comps.iter().map(|c| c.log_norm_const()).collect();
        let hi = peaks.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = peaks.iter().copied().fold(f64::INFINITY, f64::min);
        Ok((hi - lo).exp())
    }
}

fn pick_cluster<R: Rng>(cdf: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1)
}

/// Normal rows first (label 1), then anomalies (label 0). Deterministic in
/// `spec.seed`.
pub fn generate_scenario<F: Float>(spec: &ScenarioSpec) -> Result<Dataset<F>> {
    spec.validate()?;
    let d = spec.dim();
    let comps = spec.components()?;
    let weights = spec.normalized_weights();
    let log_w: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
    let cdf: Vec<f64> = weights
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_total = spec.n_normal + spec.n_anomaly;
    let mut values = Vec::with_capacity(n_total * d);
    let mut z = vec![0.0f64; d];
    let mut x = vec![0.0f64; d];

    let mut origin = Vec::with_capacity(spec.n_normal);
    for _ in 0..spec.n_normal {
        let j = pick_cluster(&cdf, &mut rng);
        comps[j].sample_into(&mut rng, &mut z, &mut x);
        origin.push(j);
        values.extend_from_slice(&x);
    }
    let normals = Matrix::from_row_major(spec.n_normal, d, values.clone());

    if spec.n_anomaly > 0 {
        let accept = acceptance_test(spec, &comps, &log_w, &normals, &origin)?;
        let shells: Vec<GaussianComponent<f64>> = match spec.proposal {
            AnomalyProposal::UniformBox => Vec::new(),
            AnomalyProposal::ClusterShell { inflation } => comps
                .iter()
                .map(|c| {
                    let cov = c.covariance().map(|v| v * inflation * inflation);
                    GaussianComponent::new(c.mean().to_vec(), cov)
                })
                .collect::<Result<_>>()?,
        };

        let mut accepted = 0usize;
        let mut draws = 0usize;
        while accepted < spec.n_anomaly {
            if draws >= STALL_DRAWS && (accepted as f64) < STALL_RATE * draws as f64 {
                return Err(Error::RejectionStall { accepted, draws });
            }
            draws += 1;
            match spec.proposal {
                AnomalyProposal::UniformBox => {
                    for k in 0..d {
                        let (lo, hi) = (spec.anomaly_box.lo[k], spec.anomaly_box.hi[k]);
                        x[k] = lo + (hi - lo) * rng.random::<f64>();
                    }
                }
                AnomalyProposal::ClusterShell { .. } => {
                    let j = pick_cluster(&cdf, &mut rng);
                    shells[j].sample_into(&mut rng, &mut z, &mut x);
                    if !spec.anomaly_box.contains(&x) {
                        continue;
                    }
                }
            }
            if accept(&x) {
                values.extend_from_slice(&x);
                accepted += 1;
            }
        }
    }

    let points = Matrix::from_row_major(n_total, d, values).map(F::lit);
    let labels = std::iter::repeat_n(Label::Normal, spec.n_normal)
        .chain(std::iter::repeat_n(Label::Anomalous, spec.n_anomaly))
        .collect();
    Dataset::new(points, Some(labels))
}

type AcceptFn<'a> = Box<dyn Fn(&[f64]) -> bool + 'a>;

fn acceptance_test<'a>(
    spec: &ScenarioSpec,
    comps: &'a [GaussianComponent<f64>],
    log_w: &'a [f64],
    normals: &Matrix<f64>,
    origin: &[usize],
) -> Result<AcceptFn<'a>> {
    let q = spec.quantile;
    match spec.rule {
        AnomalyRule::MixtureQuantile => {
            let mixture = move |x: &[f64]| -> f64 {
                let terms: Vec<f64> = comps
                    .iter()
                    .zip(log_w)
                    .map(|(c, w)| w + c.log_pdf(x).expect("dimension validated"))
                    .collect();
                log_sum_exp(&terms)
            };
            let lds: Vec<f64> = normals.iter_rows().map(mixture).collect();
            let cut = quantile(&lds, q).expect("normal sample is nonempty");
            Ok(Box::new(move |x| mixture(x) < cut))
        }
        AnomalyRule::ComponentQuantile => {
            let mut cuts = Vec::with_capacity(comps.len());
            for (j, c) in comps.iter().enumerate() {
                let own: Vec<f64> = normals
                    .iter_rows()
                    .zip(origin)
                    .filter(|(_, &o)| o == j)
                    .map(|(x, _)| c.log_pdf(x).expect("dimension validated"))
                    .collect();
                // a cluster that received no normal draws imposes no constraint
                let cut = quantile(&own, q).unwrap_or(f64::INFINITY);
                cuts.push(cut);
            }
            Ok(Box::new(move |x| {
                comps
                    .iter()
                    .zip(&cuts)
                    .all(|(c, &cut)| c.log_pdf(x).expect("dimension validated") < cut)
            }))
        }
    }
}
