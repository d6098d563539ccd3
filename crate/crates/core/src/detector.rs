//! The two anomaly detectors: a threshold on the mixture density, and the
//! discriminative boundary learned over the component-density features.

use serde::{Deserialize, Serialize};

use crate::dataio::{Dataset, Label};
use crate::error::{Error, Result};
use crate::eval::quantile;
use crate::featmap::{feature_matrix, feature_vector_scaled, FeatureScaling, FeatureVector};
use crate::float::Float;
use crate::gmm::{fit_em, EmConfig, GmmParams};
use crate::ocsvm::{default_max_passes, solve_dual, OcsvmProblem, OcsvmSolution, SolverStatus};

/// Score plus the label it implies. A score of exactly zero is anomalous.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verdict<F> {
    pub score: F,
    pub label: Label,
}

impl<F: Float> Verdict<F> {
    pub fn from_score(score: F) -> Self {
        let label = if score > F::zero() {
            Label::Normal
        } else {
            Label::Anomalous
        };
        Self { score, label }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Digmm,
    ThresholdGmm,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Digmm => "digmm",
            ModelKind::ThresholdGmm => "threshold_gmm",
        }
    }
}

/// Common surface of both detectors.
pub trait Detector<F: Float> {
    fn kind(&self) -> ModelKind;

    fn gmm(&self) -> &GmmParams<F>;

    /// Decision score; positive means normal.
    fn score(&self, x: &[F]) -> Result<F>;

    /// Value plotted on contour grids: the decision function for DiGMM, the
    /// mixture log-density for the baseline.
    fn surface_value(&self, x: &[F]) -> Result<F>;

    fn classify(&self, x: &[F]) -> Result<Verdict<F>> {
        Ok(Verdict::from_score(self.score(x)?))
    }

    fn dim(&self) -> usize {
        self.gmm().d()
    }
}

/// Baseline: a sample is normal iff its mixture log-density exceeds `log τ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdGmmModel<F> {
    gmm: GmmParams<F>,
    log_threshold: F,
}

impl<F: Float> ThresholdGmmModel<F> {
    pub fn new(gmm: GmmParams<F>, log_threshold: F) -> Result<Self> {
        if !log_threshold.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "log threshold must be finite, got {log_threshold}"
            )));
        }
        Ok(Self { gmm, log_threshold })
    }

    pub fn log_threshold(&self) -> F {
        self.log_threshold
    }
}

impl<F: Float> Detector<F> for ThresholdGmmModel<F> {
    fn kind(&self) -> ModelKind {
        ModelKind::ThresholdGmm
    }

    fn gmm(&self) -> &GmmParams<F> {
        &self.gmm
    }

    fn score(&self, x: &[F]) -> Result<F> {
        Ok(self.gmm.mixture_log_pdf(x)? - self.log_threshold)
    }

    fn surface_value(&self, x: &[F]) -> Result<F> {
        self.gmm.mixture_log_pdf(x)
    }
}

/// Fits the mixture and stores the user-supplied `log τ`.
pub fn fit_threshold_gmm<F: Float>(
    data: &Dataset<F>,
    m: usize,
    em_config: &EmConfig,
    log_threshold: F,
) -> Result<ThresholdGmmModel<F>> {
    if !log_threshold.is_finite() {
        return Err(Error::InvalidParameter(
            "log threshold must be finite".into(),
        ));
    }
    let (gmm, _) = fit_em(data, m, em_config)?;
    ThresholdGmmModel::new(gmm, log_threshold)
}

/// `log τ` at which a fraction `target_fpr` of `data` falls at or below the
/// threshold: the linearly interpolated `target_fpr`-quantile of the
/// per-sample mixture log-densities.
pub fn log_threshold_for_fpr<F: Float>(
    gmm: &GmmParams<F>,
    data: &Dataset<F>,
    target_fpr: f64,
) -> Result<F> {
    if !(0.0..=1.0).contains(&target_fpr) {
        return Err(Error::InvalidParameter(format!(
            "target false-positive rate must lie in [0, 1], got {target_fpr}"
        )));
    }
    let lds: Vec<f64> = data
        .points()
        .iter_rows()
        .map(|x| gmm.mixture_log_pdf(x).map(Float::widen))
        .collect::<Result<_>>()?;
    let q = quantile(&lds, target_fpr)
        .ok_or_else(|| Error::InvalidParameter("cannot take a quantile of no samples".into()))?;
    if !q.is_finite() {
        return Err(Error::DegenerateData(
            "training log-density quantile is not finite".into(),
        ));
    }
    Ok(F::lit(q))
}

/// Audit trail of a DiGMM fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMetadata {
    pub em_seed: u64,
    pub em_restart: usize,
    pub em_iterations: usize,
    pub em_converged: bool,
    pub em_reseeds: usize,
    pub final_log_likelihood: f64,
    pub n_train: usize,
    pub feature_scaling: FeatureScaling,
    pub solver_status: SolverStatus,
    pub solver_iterations: usize,
    pub solver_tol: f64,
    pub kkt_violation: f64,
    pub objective_value: f64,
}

/// Mixture feature map plus the one-class boundary `f(x) = ⟨w*, p(x)⟩ − ρ*`.
#[derive(Debug, Clone, PartialEq)]
pub struct DigmmModel<F> {
    gmm: GmmParams<F>,
    svm: OcsvmSolution<F>,
    nu: F,
    metadata: FitMetadata,
}

impl<F: Float> DigmmModel<F> {
    pub fn new(
        gmm: GmmParams<F>,
        svm: OcsvmSolution<F>,
        nu: F,
        metadata: FitMetadata,
    ) -> Result<Self> {
        if svm.weight_vector.len() != gmm.m() {
            return Err(Error::InvariantViolation(format!(
                "weight vector has length {} for {} components",
                svm.weight_vector.len(),
                gmm.m()
            )));
        }
        if !(nu > F::zero() && nu <= F::one()) {
            return Err(Error::InvariantViolation(format!(
                "nu = {nu} outside (0, 1]"
            )));
        }
        if !svm.rho.is_finite() || svm.weight_vector.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvariantViolation(
                "non-finite boundary parameters".into(),
            ));
        }
        Ok(Self {
            gmm,
            svm,
            nu,
            metadata,
        })
    }

    pub fn svm(&self) -> &OcsvmSolution<F> {
        &self.svm
    }

    pub fn nu(&self) -> F {
        self.nu
    }

    pub fn metadata(&self) -> &FitMetadata {
        &self.metadata
    }

    pub fn feature_scaling(&self) -> FeatureScaling {
        self.metadata.feature_scaling
    }

    pub fn weight_vector(&self) -> &[F] {
        &self.svm.weight_vector
    }

    pub fn rho(&self) -> F {
        self.svm.rho
    }

    pub fn features(&self, x: &[F]) -> Result<FeatureVector<F>> {
        feature_vector_scaled(&self.gmm, x, self.metadata.feature_scaling)
    }

    /// `f(x) = ⟨w*, p(x)⟩ − ρ*`.
    pub fn decision_value(&self, x: &[F]) -> Result<F> {
        Ok(self.svm.decision(&self.features(x)?))
    }
}

impl<F: Float> Detector<F> for DigmmModel<F> {
    fn kind(&self) -> ModelKind {
        ModelKind::Digmm
    }

    fn gmm(&self) -> &GmmParams<F> {
        &self.gmm
    }

    fn score(&self, x: &[F]) -> Result<F> {
        self.decision_value(x)
    }

    fn surface_value(&self, x: &[F]) -> Result<F> {
        self.decision_value(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DigmmConfig {
    pub m: usize,
    pub nu: f64,
    pub em: EmConfig,
    pub solver_tol: f64,
    /// Defaults to `10 · n · max(100, n)` when `None`.
    pub max_passes: Option<usize>,
    pub scaling: FeatureScaling,
}

impl DigmmConfig {
    pub fn new(m: usize, nu: f64, em: EmConfig) -> Self {
        Self {
            m,
            nu,
            em,
            solver_tol: crate::ocsvm::DEFAULT_TOL,
            max_passes: None,
            scaling: FeatureScaling::Raw,
        }
    }
}

/// Two-stage training: EM fit, feature map of every training point, dual
/// solve, boundary assembly. The mixture is not touched after EM.
pub fn fit_digmm<F: Float>(
    data: &Dataset<F>,
    m: usize,
    nu: F,
    em_config: &EmConfig,
    solver_tol: F,
) -> Result<DigmmModel<F>> {
    let mut cfg = DigmmConfig::new(m, nu.widen(), *em_config);
    cfg.solver_tol = solver_tol.widen();
    fit_digmm_with(data, &cfg)
}

pub fn fit_digmm_with<F: Float>(data: &Dataset<F>, cfg: &DigmmConfig) -> Result<DigmmModel<F>> {
    let n = data.n();
    if !(cfg.nu > 0.0 && cfg.nu <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "nu must lie in (0, 1], got {}",
            cfg.nu
        )));
    }
    if cfg.nu * (n as f64) < 1.0 - 1e-12 {
        return Err(Error::Infeasible {
            nu_n: cfg.nu * n as f64,
        });
    }
    let (gmm, trace) = fit_em(data, cfg.m, &cfg.em)?;
    solve_boundary(gmm, data, cfg, &trace)
}

/// Second stage alone, on an already fitted mixture.
pub fn solve_boundary<F: Float>(
    gmm: GmmParams<F>,
    data: &Dataset<F>,
    cfg: &DigmmConfig,
    trace: &crate::gmm::EmTrace,
) -> Result<DigmmModel<F>> {
    let nu = F::lit(cfg.nu);
    let features = feature_matrix(&gmm, data, cfg.scaling)?;
    let problem = OcsvmProblem::from_features(features, nu)?;
    let max_passes = cfg
        .max_passes
        .unwrap_or_else(|| default_max_passes(data.n()));
    let svm = solve_dual(&problem, F::lit(cfg.solver_tol), max_passes)?;
    let metadata = FitMetadata {
        em_seed: cfg.em.seed,
        em_restart: trace.restart,
        em_iterations: trace.iterations,
        em_converged: trace.converged,
        em_reseeds: trace.reseeds,
        final_log_likelihood: trace.final_log_likelihood(),
        n_train: data.n(),
        feature_scaling: cfg.scaling,
        solver_status: svm.status,
        solver_iterations: svm.iterations,
        solver_tol: cfg.solver_tol,
        kkt_violation: svm.kkt_violation.widen(),
        objective_value: svm.objective_value.widen(),
    };
    DigmmModel::new(gmm, svm, nu, metadata)
}

/// Either detector, as loaded from a model file.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel<F> {
    Digmm(DigmmModel<F>),
    ThresholdGmm(ThresholdGmmModel<F>),
}

impl<F: Float> Detector<F> for AnyModel<F> {
    fn kind(&self) -> ModelKind {
        match self {
            AnyModel::Digmm(m) => m.kind(),
            AnyModel::ThresholdGmm(m) => m.kind(),
        }
    }

    fn gmm(&self) -> &GmmParams<F> {
        match self {
            AnyModel::Digmm(m) => m.gmm(),
            AnyModel::ThresholdGmm(m) => m.gmm(),
        }
    }

    fn score(&self, x: &[F]) -> Result<F> {
        match self {
            AnyModel::Digmm(m) => m.score(x),
            AnyModel::ThresholdGmm(m) => m.score(x),
        }
    }

    fn surface_value(&self, x: &[F]) -> Result<F> {
        match self {
            AnyModel::Digmm(m) => m.surface_value(x),
            AnyModel::ThresholdGmm(m) => m.surface_value(x),
        }
    }
}

impl<F> From<DigmmModel<F>> for AnyModel<F> {
    fn from(m: DigmmModel<F>) -> Self {
        AnyModel::Digmm(m)
    }
}

impl<F> From<ThresholdGmmModel<F>> for AnyModel<F> {
    fn from(m: ThresholdGmmModel<F>) -> Self {
        AnyModel::ThresholdGmm(m)
    }
}
