//! JSON snapshots of fitted mixtures.
//!
//! Layout: `{"dim", "components": [{"weight", "mean", "covariance"}], "fit_info"}`
//! with covariances as arrays of rows.

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{FitInfo, GaussianComponent, GmmModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSnapshot {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSnapshot {
    pub dim: usize,
    pub components: Vec<ComponentSnapshot>,
    pub fit_info: FitInfo,
}

impl From<&GmmModel> for ModelSnapshot {
    fn from(model: &GmmModel) -> Self {
        let components = model
            .components()
            .iter()
            .map(|c| ComponentSnapshot {
                weight: c.weight,
                mean: c.mean.iter().copied().collect(),
                covariance: c.covariance.row_iter().map(|r| r.iter().copied().collect()).collect(),
            })
            .collect();
        Self {
            dim: model.dim(),
            components,
            fit_info: model.fit_info.clone(),
        }
    }
}

impl TryFrom<ModelSnapshot> for GmmModel {
    type Error = Error;

    fn try_from(s: ModelSnapshot) -> Result<Self> {
        let mut comps = Vec::with_capacity(s.components.len());
        for (k, c) in s.components.into_iter().enumerate() {
            if c.mean.len() != s.dim {
                return Err(Error::Snapshot(format!(
                    "components[{k}].mean has length {}, dim is {}",
                    c.mean.len(),
                    s.dim
                )));
            }
            if c.covariance.len() != s.dim || c.covariance.iter().any(|r| r.len() != s.dim) {
                return Err(Error::Snapshot(format!(
                    "components[{k}].covariance is not {0}x{0}",
                    s.dim
                )));
            }
            let flat: Vec<f64> = c.covariance.into_iter().flatten().collect();
            comps.push(GaussianComponent {
                weight: c.weight,
                mean: DVector::from_vec(c.mean),
                covariance: DMatrix::from_row_slice(s.dim, s.dim, &flat),
            });
        }
        GmmModel::new(comps, s.fit_info).map_err(|e| Error::Snapshot(e.to_string()))
    }
}

/// Deserializes JSON, reporting the path of the offending key on failure.
pub(crate) fn from_json_str<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Snapshot(format!("at `{path}`: {}", e.inner()))
    })
}

impl GmmModel {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&ModelSnapshot::from(self)).map_err(|e| Error::Snapshot(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        from_json_str::<ModelSnapshot>(text)?.try_into()
    }
}
