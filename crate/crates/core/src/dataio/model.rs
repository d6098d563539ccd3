//! Canonical model file: a single JSON document.
//!
//! ```text
//! format_version  "1"
//! model_kind      "digmm" | "threshold_gmm"
//! d, m            dimension and component count
//! weights         [m]
//! means           [m][d]
//! covariances     [m][d·d], row-major
//! digmm only:          nu, alphas, weight_vector, rho, metadata
//! threshold_gmm only:  log_threshold
//! ```
//!
//! Numbers are written as the shortest decimal string that parses back to
//! the same `f64`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::detector::{AnyModel, DigmmModel, FitMetadata, ModelKind, ThresholdGmmModel};
use crate::error::{Error, Result};
use crate::float::Float;
use crate::gaussian::GaussianComponent;
use crate::gmm::GmmParams;
use crate::linalg::Matrix;
use crate::ocsvm::{partition_indices, upper_bound, OcsvmSolution};

pub const FORMAT_VERSION: &str = "1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format_version: String,
    model_kind: ModelKind,
    d: usize,
    m: usize,
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    covariances: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    nu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alphas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weight_vector: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    metadata: Option<FitMetadata>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    log_threshold: Option<f64>,
}

fn widen_all<F: Float>(v: &[F]) -> Vec<f64> {
    v.iter().map(|x| x.widen()).collect()
}

fn narrow_all<F: Float>(v: &[f64]) -> Vec<F> {
    v.iter().map(|&x| F::lit(x)).collect()
}

fn gmm_fields<F: Float>(gmm: &GmmParams<F>, kind: ModelKind) -> ModelFile {
    ModelFile {
        format_version: FORMAT_VERSION.into(),
        model_kind: kind,
        d: gmm.d(),
        m: gmm.m(),
        weights: widen_all(gmm.weights()),
        means: gmm
            .components()
            .iter()
            .map(|c| widen_all(c.mean()))
            .collect(),
        covariances: gmm
            .components()
            .iter()
            .map(|c| widen_all(c.covariance().as_slice()))
            .collect(),
        nu: None,
        alphas: None,
        weight_vector: None,
        rho: None,
        metadata: None,
        log_threshold: None,
    }
}

/// Serializes either detector as pretty-printed JSON followed by a newline.
pub fn write_model<F: Float, W: Write>(model: &AnyModel<F>, mut sink: W) -> Result<()> {
    let file = match model {
        AnyModel::Digmm(m) => {
            let mut f = gmm_fields(crate::detector::Detector::gmm(m), ModelKind::Digmm);
            f.nu = Some(m.nu().widen());
            f.alphas = Some(widen_all(&m.svm().alphas));
            f.weight_vector = Some(widen_all(m.weight_vector()));
            f.rho = Some(m.rho().widen());
            f.metadata = Some(m.metadata().clone());
            f
        }
        AnyModel::ThresholdGmm(m) => {
            let mut f = gmm_fields(crate::detector::Detector::gmm(m), ModelKind::ThresholdGmm);
            f.log_threshold = Some(m.log_threshold().widen());
            f
        }
    };
    serde_json::to_writer_pretty(&mut sink, &file).map_err(|e| Error::Io(e.into()))?;
    sink.write_all(b"\n")?;
    Ok(())
}

/// Parses a model file and re-validates every type invariant.
pub fn read_model<F: Float, R: Read>(source: R) -> Result<AnyModel<F>> {
    let value: serde_json::Value =
        serde_json::from_reader(source).map_err(|e| Error::SchemaError(e.to_string()))?;
    match value.get("format_version") {
        Some(serde_json::Value::String(v)) if v == FORMAT_VERSION => {}
        Some(serde_json::Value::String(v)) => return Err(Error::VersionError(v.clone())),
        Some(other) => return Err(Error::VersionError(other.to_string())),
        None => return Err(Error::SchemaError("missing field `format_version`".into())),
    }
    let file: ModelFile =
        serde_json::from_value(value).map_err(|e| Error::SchemaError(e.to_string()))?;

    let gmm = rebuild_gmm::<F>(&file)?;
    match file.model_kind {
        ModelKind::ThresholdGmm => {
            if file.nu.is_some()
                || file.alphas.is_some()
                || file.weight_vector.is_some()
                || file.rho.is_some()
                || file.metadata.is_some()
            {
                return Err(Error::SchemaError(
                    "threshold_gmm model carries digmm fields".into(),
                ));
            }
            let lt = file
                .log_threshold
                .ok_or_else(|| Error::SchemaError("missing field `log_threshold`".into()))?;
            ThresholdGmmModel::new(gmm, F::lit(lt))
                .map(AnyModel::ThresholdGmm)
                .map_err(|e| Error::InvariantViolation(e.to_string()))
        }
        ModelKind::Digmm => {
            if file.log_threshold.is_some() {
                return Err(Error::SchemaError(
                    "digmm model carries `log_threshold`".into(),
                ));
            }
            let missing = |name: &str| Error::SchemaError(format!("missing field `{name}`"));
            let nu = file.nu.ok_or_else(|| missing("nu"))?;
            let alphas: Vec<F> = narrow_all(&file.alphas.ok_or_else(|| missing("alphas"))?);
            let weight_vector: Vec<F> =
                narrow_all(&file.weight_vector.ok_or_else(|| missing("weight_vector"))?);
            let rho = file.rho.ok_or_else(|| missing("rho"))?;
            let metadata = file.metadata.ok_or_else(|| missing("metadata"))?;

            check_alphas(&alphas, nu)?;
            let c = upper_bound(F::lit(nu), alphas.len());
            let (support_idx, margin_idx) = partition_indices(&alphas, c);
            let svm = OcsvmSolution {
                alphas,
                rho: F::lit(rho),
                weight_vector,
                support_idx,
                margin_idx,
                objective_value: F::lit(metadata.objective_value),
                status: metadata.solver_status,
                iterations: metadata.solver_iterations,
                kkt_violation: F::lit(metadata.kkt_violation),
            };
            DigmmModel::new(gmm, svm, F::lit(nu), metadata)
                .map(AnyModel::Digmm)
                .map_err(|e| Error::InvariantViolation(e.to_string()))
        }
    }
}

fn check_alphas<F: Float>(alphas: &[F], nu: f64) -> Result<()> {
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(Error::InvariantViolation(format!(
            "nu = {nu} outside (0, 1]"
        )));
    }
    let n = alphas.len();
    if n == 0 || nu * (n as f64) < 1.0 - 1e-12 {
        return Err(Error::InvariantViolation(format!(
            "nu · n = {} is infeasible",
            nu * n as f64
        )));
    }
    let c = 1.0 / (nu * n as f64);
    let slack = F::tol(1e-12).widen();
    let mut sum = 0.0;
    for a in alphas {
        let a = a.widen();
        if !(a >= -slack && a <= c + slack) {
            return Err(Error::InvariantViolation(format!(
                "alpha {a} outside [0, {c}]"
            )));
        }
        sum += a;
    }
    if (sum - 1.0).abs() > F::tol(1e-10).widen() {
        return Err(Error::InvariantViolation(format!("alphas sum to {sum}")));
    }
    Ok(())
}

fn rebuild_gmm<F: Float>(file: &ModelFile) -> Result<GmmParams<F>> {
    let (d, m) = (file.d, file.m);
    if d == 0 || m == 0 {
        return Err(Error::InvariantViolation("d and m must be positive".into()));
    }
    if file.weights.len() != m || file.means.len() != m || file.covariances.len() != m {
        return Err(Error::InvariantViolation(format!(
            "expected {m} weights, means and covariances"
        )));
    }
    let mut comps = Vec::with_capacity(m);
    for (mean, cov) in file.means.iter().zip(&file.covariances) {
        if mean.len() != d || cov.len() != d * d {
            return Err(Error::InvariantViolation(format!(
                "component shapes do not match d = {d}"
            )));
        }
        let cov = Matrix::from_row_major(d, d, narrow_all::<F>(cov));
        let c = GaussianComponent::new(narrow_all(mean), cov)
            .map_err(|e| Error::InvariantViolation(e.to_string()))?;
        comps.push(c);
    }
    GmmParams::new(comps, narrow_all(&file.weights))
        .map_err(|e| Error::InvariantViolation(e.to_string()))
}
