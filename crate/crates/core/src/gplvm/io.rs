use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{BackConstraint, BackConstraintConfig, Geometry, GphlvmModel, HistoryEntry, TrainConfig, VariationalState};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;

pub const MODEL_VERSION: u32 = 1;

type Rows = Vec<Vec<f64>>;

fn rows(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix(name: &str, r: &Rows, ncols: usize) -> Result<DMatrix<f64>> {
    if let Some(bad) = r.iter().find(|row| row.len() != ncols) {
        return Err(Error::invalid(format!("{name}: row of length {} where {ncols} expected", bad.len())));
    }
    Ok(DMatrix::from_fn(r.len(), ncols, |i, j| r[i][j]))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BackConstraintDoc {
    weights: Rows,
    config: BackConstraintConfig,
    node_ids: Vec<String>,
    graph_gram: Rows,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VariationalDoc {
    /// Spatial coordinates, like the latents.
    inducing: Rows,
    q_mean: Rows,
    q_chol: Vec<Rows>,
    x_std: Rows,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    model_version: u32,
    geometry: Geometry,
    latent_dim: usize,
    kernel: KernelSpec,
    /// Spatial coordinates; the time component is recomputed on load.
    latents: Rows,
    noise: Vec<f64>,
    prior_alpha: f64,
    back_constraint: Option<BackConstraintDoc>,
    variational: Option<VariationalDoc>,
    train_config: TrainConfig,
    observations: Rows,
    classes: Vec<String>,
    history: Vec<HistoryEntry>,
}

fn spatial_rows(geometry: Geometry, x: &[DVector<f64>]) -> Rows {
    x.iter().map(|p| geometry.spatial(p)).collect()
}

fn points(geometry: Geometry, q: usize, name: &str, r: &Rows) -> Result<Vec<DVector<f64>>> {
    r.iter()
        .map(|s| {
            if s.len() != q {
                return Err(Error::invalid(format!("{name}: point with {} coordinates where {q} expected", s.len())));
            }
            Ok(geometry.from_spatial(s))
        })
        .collect()
}

impl GphlvmModel {
    /// Self-describing JSON document of the model.
    pub fn to_json(&self) -> String {
        let doc = ModelDoc {
            model_version: MODEL_VERSION,
            geometry: self.geometry,
            latent_dim: self.latent_dim,
            kernel: self.kernel.clone(),
            latents: spatial_rows(self.geometry, &self.latents),
            noise: self.noise.clone(),
            prior_alpha: self.prior_alpha,
            back_constraint: self.bc.as_ref().map(|bc| BackConstraintDoc {
                weights: rows(&bc.weights),
                config: bc.config,
                node_ids: bc.node_ids.clone(),
                graph_gram: rows(&bc.graph_gram),
            }),
            variational: self.variational.as_ref().map(|v| VariationalDoc {
                inducing: spatial_rows(self.geometry, &v.inducing),
                q_mean: v.q_mean.iter().map(|m| m.iter().copied().collect()).collect(),
                q_chol: v.q_chol.iter().map(rows).collect(),
                x_std: v.x_std.iter().map(|s| s.iter().copied().collect()).collect(),
            }),
            train_config: self.train_config.clone(),
            observations: rows(&self.observations),
            classes: self.classes.clone(),
            history: self.history.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("model document serializes")
    }

    pub fn from_json(source: &str) -> Result<Self> {
        let probe: serde_json::Value = serde_json::from_str(source)?;
        match probe.get("model_version").and_then(|v| v.as_u64()) {
            Some(v) if v == MODEL_VERSION as u64 => {}
            Some(v) => return Err(Error::invalid(format!("unsupported model_version {v}, expected {MODEL_VERSION}"))),
            None => return Err(Error::invalid("model document has no model_version")),
        }
        let doc: ModelDoc = serde_json::from_value(probe)?;
        let (g, q) = (doc.geometry, doc.latent_dim);
        let latents = points(g, q, "latents", &doc.latents)?;
        let n = latents.len();
        let d = doc.noise.len();
        let observations = matrix("observations", &doc.observations, d)?;
        if observations.nrows() != n || doc.classes.len() != n {
            return Err(Error::invalid(format!(
                "model has {n} latents but {} observations and {} classes",
                observations.nrows(),
                doc.classes.len()
            )));
        }
        let bc = match doc.back_constraint {
            None => None,
            Some(b) => {
                let k = b.node_ids.len();
                Some(BackConstraint {
                    weights: matrix("weights", &b.weights, n)?,
                    config: b.config,
                    node_ids: b.node_ids,
                    graph_gram: matrix("graph_gram", &b.graph_gram, k)?,
                })
            }
        };
        let variational = match doc.variational {
            None => None,
            Some(v) => {
                let inducing = points(g, q, "inducing", &v.inducing)?;
                let m = inducing.len();
                let state = VariationalState {
                    inducing,
                    q_mean: v.q_mean.iter().map(|r| DVector::from_column_slice(r)).collect(),
                    q_chol: v.q_chol.iter().map(|r| matrix("q_chol", r, m)).collect::<Result<_>>()?,
                    x_std: v.x_std.iter().map(|r| DVector::from_column_slice(r)).collect(),
                };
                if state.q_mean.len() != d || state.q_chol.len() != d || state.q_mean.iter().any(|x| x.len() != m) {
                    return Err(Error::invalid("variational state does not match the model dimensions"));
                }
                state.validate()?;
                Some(state)
            }
        };
        let model = GphlvmModel {
            geometry: g,
            latent_dim: q,
            latents,
            kernel: doc.kernel,
            noise: doc.noise,
            prior_alpha: doc.prior_alpha,
            bc,
            variational,
            train_config: doc.train_config,
            observations,
            classes: doc.classes,
            history: doc.history,
        };
        model.latent_kernel()?;
        Ok(model)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Re-lifts points from their spatial coordinates so in-memory models match
/// what a save/load round trip produces.
pub(crate) fn canonical(geometry: Geometry, x: Vec<DVector<f64>>) -> Vec<DVector<f64>> {
    match geometry {
        Geometry::Euclidean => x,
        Geometry::Lorentz => x.iter().map(|p| geometry.from_spatial(&geometry.spatial(p))).collect(),
    }
}
