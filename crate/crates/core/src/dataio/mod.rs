//! Datasets, synthetic scenarios, CSV tables and model files.

mod model;
mod scenario;
mod table;

pub use model::{read_model, write_model, FORMAT_VERSION};
pub use scenario::{
    generate_scenario, AnomalyProposal, AnomalyRule, BoxRegion, ClusterSpec, ScenarioSpec,
};
pub use table::{read_csv, write_csv};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::float::Float;
use crate::linalg::Matrix;

/// Binary sample label. Serialized as `1` (normal) and `0` (anomalous) in
/// CSV files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Normal,
    Anomalous,
}

impl Label {
    pub fn as_digit(self) -> u8 {
        match self {
            Label::Normal => 1,
            Label::Anomalous => 0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Anomalous => "anomalous",
        }
    }

    pub fn is_normal(self) -> bool {
        self == Label::Normal
    }
}

/// `n × d` samples with optional labels and column names.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<F> {
    points: Matrix<F>,
    labels: Option<Vec<Label>>,
    feature_names: Option<Vec<String>>,
}

impl<F: Float> Dataset<F> {
    pub fn new(points: Matrix<F>, labels: Option<Vec<Label>>) -> Result<Self> {
        for (i, row) in points.iter_rows().enumerate() {
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFiniteValue { row: i, column: j });
            }
        }
        if let Some(l) = &labels {
            if l.len() != points.rows() {
                return Err(Error::InvariantViolation(format!(
                    "{} labels for {} samples",
                    l.len(),
                    points.rows()
                )));
            }
        }
        Ok(Self {
            points,
            labels,
            feature_names: None,
        })
    }

    pub fn from_rows(rows: &[Vec<F>]) -> Result<Self> {
        let points = Matrix::from_rows(rows)
            .ok_or_else(|| Error::InvariantViolation("rows have differing lengths".into()))?;
        Self::new(points, None)
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.d() {
            return Err(Error::InvariantViolation(format!(
                "{} feature names for {} columns",
                names.len(),
                self.d()
            )));
        }
        self.feature_names = Some(names);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.points.rows()
    }

    pub fn d(&self) -> usize {
        self.points.cols()
    }

    pub fn points(&self) -> &Matrix<F> {
        &self.points
    }

    pub fn labels(&self) -> Option<&[Label]> {
        self.labels.as_deref()
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    /// Rows for which `keep(index)` holds, preserving order.
    pub fn select(&self, mut keep: impl FnMut(usize) -> bool) -> Self {
        let idx: Vec<usize> = (0..self.n()).filter(|&i| keep(i)).collect();
        let mut data = Vec::with_capacity(idx.len() * self.d());
        for &i in &idx {
            data.extend_from_slice(self.points.row(i));
        }
        Self {
            points: Matrix::from_row_major(idx.len(), self.d(), data),
            labels: self
                .labels
                .as_ref()
                .map(|l| idx.iter().map(|&i| l[i]).collect()),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Rows labelled normal; every row when the dataset is unlabelled.
    pub fn normal_only(&self) -> Self {
        match &self.labels {
            Some(l) => {
                let l = l.clone();
                self.select(|i| l[i].is_normal())
            }
            None => self.clone(),
        }
    }

    /// Drops labels, keeping the points.
    pub fn unlabeled(&self) -> Self {
        Self {
            points: self.points.clone(),
            labels: None,
            feature_names: self.feature_names.clone(),
        }
    }

    pub fn cast<G: Float>(&self) -> Dataset<G> {
        Dataset {
            points: self.points.map(|v| G::lit(v.widen())),
            labels: self.labels.clone(),
            feature_names: self.feature_names.clone(),
        }
    }
}
