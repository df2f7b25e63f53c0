//! Gaussian process latent variable models over a hyperbolic (Lorentz) or
//! Euclidean latent space, with taxonomy-aware regularization.
//!
//! Latent points are stored as plain vectors: ambient coordinates of length
//! `Q + 1` on the hyperboloid, or length `Q` in the Euclidean model. All
//! gradients with respect to latents are returned as tangent vectors in those
//! same coordinates (Riemannian gradients in the Lorentz case), so that they
//! plug directly into [`crate::optim`].

mod backcon;
mod config;
mod io;
mod objective;
mod train;
mod variational;


use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{Gram, KernelKind, KernelSpec, LatentKernel};
use crate::manifold::{acosh_one_plus, cosh_dist_minus_one, LorentzPoint, TANGENT_EPS};

pub use backcon::{back_constrain, bc_kernel_matrix, BackConstraint};
pub use config::{
    table_defaults, BackConstraintConfig, GammaPrior, InitMethod, Regularizer, TableDefaults, TrainConfig, TrainMode,
};
pub use io::MODEL_VERSION;
pub use objective::{
    distortion_grad, distortion_loss, gamma_log_prior, log_marginal, log_marginal_grad, log_prior, log_prior_grad,
    stress_grad, stress_loss, Distortion, MarginalGrad,
};
pub use train::{initial_latents, train, train_back_constrained, train_map, MapEval, MapObjective};
pub use variational::{elbo, elbo_grad, train_variational, ElboGrad, ElboObjective, VariationalState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Geometry {
    Lorentz,
    Euclidean,
}

impl std::fmt::Display for Geometry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Geometry::Lorentz => "lorentz",
            Geometry::Euclidean => "euclidean",
        })
    }
}

impl Geometry {
    /// Length of a stored latent vector.
    pub fn ambient_dim(self, q: usize) -> usize {
        match self {
            Geometry::Lorentz => q + 1,
            Geometry::Euclidean => q,
        }
    }

    pub fn origin(self, q: usize) -> DVector<f64> {
        let mut o = DVector::zeros(self.ambient_dim(q));
        if self == Geometry::Lorentz {
            o[0] = 1.0;
        }
        o
    }

    pub fn distance(self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        match self {
            Geometry::Lorentz => acosh_one_plus(cosh_dist_minus_one(a, b)),
            Geometry::Euclidean => (a - b).norm(),
        }
    }

    /// Distance and its gradient with respect to `a` (tangent at `a`).
    /// The gradient is zero when the points coincide.
    pub(crate) fn dist_grad(self, a: &DVector<f64>, b: &DVector<f64>) -> (f64, DVector<f64>) {
        let d = self.distance(a, b);
        if d < TANGENT_EPS {
            return (d, DVector::zeros(a.len()));
        }
        let g = match self {
            Geometry::Lorentz => self.log(a, b) * (-1.0 / d),
            Geometry::Euclidean => (a - b) / d,
        };
        (d, g)
    }

    /// Converts ambient partial derivatives into a tangent gradient.
    pub(crate) fn to_tangent(self, x: &DVector<f64>, g: &DVector<f64>) -> DVector<f64> {
        match self {
            Geometry::Lorentz => crate::optim::riemannian_gradient(&lorentz(x), g).into_vec(),
            Geometry::Euclidean => g.clone(),
        }
    }

    pub fn exp(self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Geometry::Lorentz => lorentz(x).exp(v).reproject().into_coords(),
            Geometry::Euclidean => x + v,
        }
    }

    pub fn log(self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        match self {
            Geometry::Lorentz => lorentz(x).log(&lorentz(y)),
            Geometry::Euclidean => y - x,
        }
    }

    /// Point at fraction `t` along the geodesic (straight line) from `a` to `b`.
    pub fn geodesic(self, a: &DVector<f64>, b: &DVector<f64>, t: f64) -> DVector<f64> {
        if t == 0.0 {
            return a.clone();
        }
        if t == 1.0 {
            return b.clone();
        }
        match self {
            Geometry::Lorentz => lorentz(a).exp(&(lorentz(a).log(&lorentz(b)) * t)).into_coords(),
            Geometry::Euclidean => a + (b - a) * t,
        }
    }

    /// Exp map at the origin of the coordinate tangent vector `u` (length Q),
    /// with the time coordinate recomputed from the spatial ones.
    pub fn from_origin_tangent(self, u: &DVector<f64>) -> DVector<f64> {
        match self {
            Geometry::Lorentz => {
                let r = u.norm();
                LorentzPoint::lift((u * sinhc(r)).as_slice()).into_coords()
            }
            Geometry::Euclidean => u.clone(),
        }
    }

    /// Inverse of [`Geometry::from_origin_tangent`].
    pub fn origin_tangent(self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Geometry::Lorentz => {
                let v = LorentzPoint::origin(x.len() - 1).log(&lorentz(x));
                DVector::from_column_slice(&v.as_slice()[1..])
            }
            Geometry::Euclidean => x.clone(),
        }
    }

    /// Stored coordinates without the time component.
    pub fn spatial(self, x: &DVector<f64>) -> Vec<f64> {
        match self {
            Geometry::Lorentz => x.as_slice()[1..].to_vec(),
            Geometry::Euclidean => x.as_slice().to_vec(),
        }
    }

    pub fn from_spatial(self, s: &[f64]) -> DVector<f64> {
        match self {
            Geometry::Lorentz => LorentzPoint::lift(s).into_coords(),
            Geometry::Euclidean => DVector::from_column_slice(s),
        }
    }

    /// Kernel used when none is configured.
    pub fn default_kernel(self, q: usize) -> KernelKind {
        match (self, q) {
            (Geometry::Euclidean, _) => KernelKind::EuclideanSe,
            (Geometry::Lorentz, 3) => KernelKind::HyperbolicL3,
            (Geometry::Lorentz, _) => KernelKind::HyperbolicL2Mc,
        }
    }
}

pub(crate) fn lorentz(x: &DVector<f64>) -> LorentzPoint {
    LorentzPoint::from_ambient_unchecked(x.clone())
}

/// `sinh(r) / r`.
pub(crate) fn sinhc(r: f64) -> f64 {
    if r < 1e-4 {
        1.0 + r * r / 6.0
    } else {
        r.sinh() / r
    }
}

/// `(r cosh r - sinh r) / r^3`, the derivative of [`sinhc`] divided by `r`.
pub(crate) fn dsinhc_over_r(r: f64) -> f64 {
    if r < 1e-2 {
        1.0 / 3.0 + r * r / 30.0
    } else {
        (r * r.cosh() - r.sinh()) / (r * r * r)
    }
}

/// One row of the training history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub iteration: usize,
    /// `log p(Y|X) + log p(X)` for MAP training, the ELBO for variational.
    pub objective: f64,
    pub stress: f64,
}

/// A trained (or initialized) model together with its training data.
#[derive(Clone, Debug, PartialEq)]
pub struct GphlvmModel {
    pub geometry: Geometry,
    pub latent_dim: usize,
    pub latents: Vec<DVector<f64>>,
    pub kernel: KernelSpec,
    pub noise: Vec<f64>,
    pub prior_alpha: f64,
    pub bc: Option<BackConstraint>,
    pub variational: Option<VariationalState>,
    pub train_config: TrainConfig,
    pub observations: DMatrix<f64>,
    /// Node id of every training point.
    pub classes: Vec<String>,
    pub history: Vec<HistoryEntry>,
}

impl GphlvmModel {
    pub fn len(&self) -> usize {
        self.latents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.latents.is_empty()
    }

    pub fn output_dim(&self) -> usize {
        self.observations.ncols()
    }

    pub fn latent_kernel(&self) -> Result<LatentKernel> {
        LatentKernel::new(&self.kernel, self.latent_dim)
    }

    /// Geodesic (or Euclidean) distance under the model geometry.
    pub fn distance(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        self.geometry.distance(a, b)
    }

    /// Checks that `x` is a valid latent point for this model.
    pub fn check_point(&self, x: &DVector<f64>) -> Result<()> {
        let want = self.geometry.ambient_dim(self.latent_dim);
        if x.len() != want {
            return Err(Error::Dimension { expected: want, got: x.len() });
        }
        if self.geometry == Geometry::Lorentz {
            LorentzPoint::new(x.clone())?;
        }
        Ok(())
    }

    /// Precomputes the factorizations needed for repeated decoding.
    pub fn predictor(&self) -> Result<Predictor<'_>> {
        let kernel = self.latent_kernel()?;
        let d = self.output_dim();
        let inner = match &self.variational {
            None => {
                let k = kernel.cross(&self.latents, &self.latents);
                let k = (&k + k.transpose()) * 0.5;
                let mut chols = Vec::with_capacity(d);
                let mut alphas = Vec::with_capacity(d);
                for j in 0..d {
                    let mut a = k.clone();
                    for i in 0..a.nrows() {
                        a[(i, i)] += self.noise[j];
                    }
                    let g = Gram::factor(a, 0.0, kernel.variance())?;
                    alphas.push(g.chol.solve(&self.observations.column(j).into_owned()));
                    chols.push(g.chol);
                }
                PredictorKind::Exact { chols, alphas }
            }
            Some(v) => {
                let kuu = kernel.gram(&v.inducing, self.train_config.jitter)?;
                let means = v.q_mean.iter().map(|m| kuu.chol.solve(m)).collect();
                let covs = v
                    .q_chol
                    .iter()
                    .map(|l| {
                        let s = l * l.transpose();
                        kuu.chol.solve(&kuu.chol.solve(&s).transpose())
                    })
                    .collect();
                PredictorKind::Sparse { kuu: kuu.chol, means, covs }
            }
        };
        Ok(Predictor { model: self, kernel, inner })
    }
}

#[derive(Clone, Debug)]
enum PredictorKind {
    Exact { chols: Vec<Cholesky<f64, Dyn>>, alphas: Vec<DVector<f64>> },
    Sparse { kuu: Cholesky<f64, Dyn>, means: Vec<DVector<f64>>, covs: Vec<DMatrix<f64>> },
}

/// GP posterior predictive of a trained model.
#[derive(Clone, Debug)]
pub struct Predictor<'a> {
    model: &'a GphlvmModel,
    kernel: LatentKernel,
    inner: PredictorKind,
}

impl Predictor<'_> {
    /// Predictive mean and variance of the latent function at `x`, per
    /// output dimension (observation noise excluded).
    pub fn decode(&self, x: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let s2 = self.kernel.variance();
        let d = self.model.output_dim();
        let mut mean = DVector::zeros(d);
        let mut var = DVector::zeros(d);
        match &self.inner {
            PredictorKind::Exact { chols, alphas } => {
                let ks = self.kernel.cross(std::slice::from_ref(x), &self.model.latents).transpose();
                let ks = ks.column(0).into_owned();
                for j in 0..d {
                    mean[j] = ks.dot(&alphas[j]);
                    let v = chols[j].l().solve_lower_triangular(&ks).expect("triangular solve");
                    var[j] = (s2 - v.norm_squared()).max(0.0);
                }
            }
            PredictorKind::Sparse { kuu, means, covs } => {
                let z = &self.model.variational.as_ref().expect("sparse predictor").inducing;
                let ks = self.kernel.cross(std::slice::from_ref(x), z).transpose();
                let ks = ks.column(0).into_owned();
                let q = ks.dot(&kuu.solve(&ks));
                for j in 0..d {
                    mean[j] = ks.dot(&means[j]);
                    var[j] = (s2 - q + ks.dot(&(&covs[j] * &ks))).max(0.0);
                }
            }
        }
        (mean, var)
    }
}

/// GP posterior predictive at a single latent point.
pub fn decode(model: &GphlvmModel, x: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
    model.check_point(x)?;
    Ok(model.predictor()?.decode(x))
}

/// Latent point of a new observation through the trained back constraints.
pub fn encode_new(model: &GphlvmModel, y: &DVector<f64>, class: &str) -> Result<DVector<f64>> {
    let bc = model
        .bc
        .as_ref()
        .ok_or_else(|| Error::Capability("model was trained without back constraints".into()))?;
    if y.len() != model.output_dim() {
        return Err(Error::Dimension { expected: model.output_dim(), got: y.len() });
    }
    bc.encode(model, y, class)
}
