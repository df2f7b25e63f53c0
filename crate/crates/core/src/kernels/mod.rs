//! Covariance functions on Euclidean space, the hyperboloid and taxonomy graphs.
//!
//! Every latent kernel is normalized so that `k(x, x) = variance`.

mod graph;
mod mc;
mod quadrature;

use std::fmt;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{cosh_dist_minus_one, acosh_one_plus};

pub use graph::{graph_kernel, graph_kernel_matrix};
pub use mc::{FeatureSampling, McFeatureSet};
pub use quadrature::gauss_laguerre;

pub(crate) use mc::McBank;

pub const DEFAULT_MC_SAMPLES: usize = 3000;
pub const DEFAULT_JITTER: f64 = 1e-6;
pub const MAX_JITTER: f64 = 1e-4;
pub const DEFAULT_QUADRATURE_NODES: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    EuclideanSe,
    HyperbolicL2Mc,
    HyperbolicL3,
    HyperbolicMatern,
    GraphSe,
    GraphMatern,
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            KernelKind::EuclideanSe => "euclidean_se",
            KernelKind::HyperbolicL2Mc => "hyperbolic_l2_mc",
            KernelKind::HyperbolicL3 => "hyperbolic_l3",
            KernelKind::HyperbolicMatern => "hyperbolic_matern",
            KernelKind::GraphSe => "graph_se",
            KernelKind::GraphMatern => "graph_matern",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub lengthscale: f64,
    pub variance: f64,
    /// Matérn smoothness `nu`; required for Matérn kinds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smoothness: Option<f64>,
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
    #[serde(default)]
    pub mc_seed: u64,
    #[serde(default)]
    pub mc_sampling: FeatureSampling,
    #[serde(default = "default_quadrature_nodes")]
    pub quadrature_nodes: usize,
}

fn default_mc_samples() -> usize {
    DEFAULT_MC_SAMPLES
}

fn default_quadrature_nodes() -> usize {
    DEFAULT_QUADRATURE_NODES
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            kind: KernelKind::EuclideanSe,
            lengthscale: 1.0,
            variance: 1.0,
            smoothness: None,
            mc_samples: DEFAULT_MC_SAMPLES,
            mc_seed: 0,
            mc_sampling: FeatureSampling::default(),
            quadrature_nodes: DEFAULT_QUADRATURE_NODES,
        }
    }
}

impl KernelSpec {
    pub fn new(kind: KernelKind, lengthscale: f64, variance: f64) -> Self {
        Self { kind, lengthscale, variance, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(format!("kernel {name} must be positive, got {v}")))
            }
        };
        pos("lengthscale", self.lengthscale)?;
        pos("variance", self.variance)?;
        if matches!(self.kind, KernelKind::HyperbolicMatern | KernelKind::GraphMatern) {
            pos("smoothness", self.nu()?)?;
        }
        if self.kind == KernelKind::HyperbolicL2Mc && self.mc_samples == 0 {
            return Err(Error::param("mc_samples must be at least 1"));
        }
        if self.kind == KernelKind::HyperbolicMatern && self.quadrature_nodes == 0 {
            return Err(Error::param("quadrature_nodes must be at least 1"));
        }
        Ok(())
    }

    fn sample_mc(&self) -> Result<McFeatureSet> {
        McFeatureSet::sample_scheme(self.mc_samples, self.mc_seed, self.mc_sampling)
    }

    pub fn nu(&self) -> Result<f64> {
        self.smoothness
            .ok_or_else(|| Error::param(format!("{} kernel requires a smoothness value", self.kind)))
    }
}

/// `rho / sinh(rho) * exp(-rho^2 / (2 l^2))` and `f'(rho) / sinh(rho)`.
fn heat3_profile(rho: f64, l: f64) -> (f64, f64) {
    let l2 = l * l;
    let e = (-rho * rho / (2.0 * l2)).exp();
    if rho < 1e-4 {
        let g = 1.0 - rho * rho / 6.0;
        return (g * e, (-1.0 / 3.0 - 1.0 / l2) * e);
    }
    let sh = rho.sinh();
    let g = rho / sh;
    // sinh(r) - r cosh(r), via series for small r.
    let num = if rho < 0.1 {
        let r3 = rho * rho * rho;
        -r3 / 3.0 - r3 * rho * rho / 30.0 - r3 * rho.powi(4) / 840.0
    } else {
        sh - rho * rho.cosh()
    };
    let gp_over_sh = num / (sh * sh * sh);
    (g * e, e * (gp_over_sh - g * g / l2))
}

/// Distance and `d rho / d alpha`-scaled helper: returns `(rho, sinh rho)`.
#[inline]
fn rho_sinh(x: &DVector<f64>, y: &DVector<f64>) -> (f64, f64) {
    let delta = cosh_dist_minus_one(x, y);
    (acosh_one_plus(delta), (delta * (delta + 2.0)).sqrt())
}

/// Ambient gradient of `-<x, y>_L` with respect to `x`.
#[inline]
fn dalpha_dx(y: &DVector<f64>) -> DVector<f64> {
    let mut g = -y.clone();
    g[0] = y[0];
    g
}

#[derive(Clone, Debug)]
enum Repr {
    EuclideanSe,
    HeatL3,
    MaternL3 { nodes: Vec<(f64, f64)> },
    Mc(McBank),
}

/// Gradients of `sum(G .* K(A, B))`.
#[derive(Clone, Debug)]
pub struct KernelGrad {
    pub da: Vec<DVector<f64>>,
    pub db: Vec<DVector<f64>>,
    pub d_log_lengthscale: f64,
    pub d_log_variance: f64,
}

/// A latent-space kernel bound to a latent dimension, with any random
/// features or quadrature nodes precomputed.
#[derive(Clone, Debug)]
pub struct LatentKernel {
    spec: KernelSpec,
    q: usize,
    repr: Repr,
}

impl LatentKernel {
    pub fn new(spec: &KernelSpec, q: usize) -> Result<Self> {
        spec.validate()?;
        let repr = match spec.kind {
            KernelKind::EuclideanSe => Repr::EuclideanSe,
            KernelKind::HyperbolicL3 => {
                if q != 3 {
                    return Err(Error::param(format!("hyperbolic_l3 kernel needs Q = 3, got {q}")));
                }
                Repr::HeatL3
            }
            KernelKind::HyperbolicL2Mc => {
                if q != 2 {
                    return Err(Error::param(format!("hyperbolic_l2_mc kernel needs Q = 2, got {q}")));
                }
                Repr::Mc(McBank::heat(spec.sample_mc()?))
            }
            KernelKind::HyperbolicMatern => {
                let nu = spec.nu()?;
                let rule = gauss_laguerre(spec.quadrature_nodes, nu - 1.0);
                // Block i uses lengthscale kappa * sqrt(t_i / nu).
                let nodes: Vec<(f64, f64)> = rule.iter().map(|(t, w)| ((t / nu).sqrt(), *w)).collect();
                match q {
                    2 => Repr::Mc(McBank {
                        set: spec.sample_mc()?,
                        blocks: nodes,
                    }),
                    3 => Repr::MaternL3 { nodes },
                    _ => {
                        return Err(Error::param(format!(
                            "hyperbolic_matern kernel needs Q in {{2, 3}}, got {q}"
                        )))
                    }
                }
            }
            KernelKind::GraphSe | KernelKind::GraphMatern => {
                return Err(Error::param(format!("{} is not a latent-space kernel", spec.kind)))
            }
        };
        Ok(Self { spec: spec.clone(), q, repr })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn latent_dim(&self) -> usize {
        self.q
    }

    /// Whether points are ambient Lorentz coordinates (length Q+1).
    pub fn is_hyperbolic(&self) -> bool {
        !matches!(self.repr, Repr::EuclideanSe)
    }

    pub fn mc_features(&self) -> Option<&McFeatureSet> {
        match &self.repr {
            Repr::Mc(b) => Some(&b.set),
            _ => None,
        }
    }

    pub fn lengthscale(&self) -> f64 {
        self.spec.lengthscale
    }

    pub fn variance(&self) -> f64 {
        self.spec.variance
    }

    pub fn set_hyper(&mut self, lengthscale: f64, variance: f64) -> Result<()> {
        if !(lengthscale > 0.0 && lengthscale.is_finite() && variance > 0.0 && variance.is_finite()) {
            return Err(Error::Numerical(format!(
                "kernel hyperparameters left the valid range (lengthscale {lengthscale}, variance {variance})"
            )));
        }
        self.spec.lengthscale = lengthscale;
        self.spec.variance = variance;
        Ok(())
    }

    pub fn eval(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        self.cross(std::slice::from_ref(a), std::slice::from_ref(b))[(0, 0)]
    }

    /// Unit-variance stationary profile `f(rho)` and `f'(rho)/sinh(rho)` for
    /// the closed-form three-dimensional kernels.
    fn profile3(&self, rho: f64) -> (f64, f64) {
        let kappa = self.spec.lengthscale;
        match &self.repr {
            Repr::HeatL3 => heat3_profile(rho, kappa),
            Repr::MaternL3 { nodes } => nodes.iter().fold((0.0, 0.0), |(v, d), (c, w)| {
                let (f, fp) = heat3_profile(rho, kappa * c);
                (v + w * f, d + w * fp)
            }),
            _ => unreachable!(),
        }
    }

    /// Derivative of the unit-variance profile w.r.t. `log kappa`.
    fn profile3_dlogk(&self, rho: f64) -> f64 {
        let kappa = self.spec.lengthscale;
        let one = |l: f64| {
            let (f, _) = heat3_profile(rho, l);
            f * rho * rho / (l * l)
        };
        match &self.repr {
            Repr::HeatL3 => one(kappa),
            Repr::MaternL3 { nodes } => nodes.iter().map(|(c, w)| w * one(kappa * c)).sum(),
            _ => unreachable!(),
        }
    }

    pub fn cross(&self, a: &[DVector<f64>], b: &[DVector<f64>]) -> DMatrix<f64> {
        let s2 = self.spec.variance;
        let kappa = self.spec.lengthscale;
        match &self.repr {
            Repr::EuclideanSe => DMatrix::from_fn(a.len(), b.len(), |i, j| {
                s2 * (-(&a[i] - &b[j]).norm_squared() / (2.0 * kappa * kappa)).exp()
            }),
            Repr::HeatL3 | Repr::MaternL3 { .. } => DMatrix::from_fn(a.len(), b.len(), |i, j| {
                let (rho, _) = rho_sinh(&a[i], &b[j]);
                s2 * self.profile3(rho).0
            }),
            Repr::Mc(bank) => {
                let fa = bank.features(a, kappa);
                if same(a, b) {
                    return (&fa * fa.transpose()) * s2;
                }
                let fb = bank.features(b, kappa);
                (fa * fb.transpose()) * s2
            }
        }
    }

    /// Reverse-mode gradient of `sum_ij G_ij K(A, B)_ij`.
    pub fn cross_backward(&self, a: &[DVector<f64>], b: &[DVector<f64>], g: &DMatrix<f64>) -> KernelGrad {
        let s2 = self.spec.variance;
        let kappa = self.spec.lengthscale;
        let mut da: Vec<DVector<f64>> = a.iter().map(|x| DVector::zeros(x.len())).collect();
        let mut db: Vec<DVector<f64>> = b.iter().map(|x| DVector::zeros(x.len())).collect();
        let mut dlogk = 0.0;
        let mut dlogv = 0.0;
        match &self.repr {
            Repr::EuclideanSe => {
                let k2 = kappa * kappa;
                for i in 0..a.len() {
                    for j in 0..b.len() {
                        let gij = g[(i, j)];
                        if gij == 0.0 {
                            continue;
                        }
                        let diff = &a[i] - &b[j];
                        let r2 = diff.norm_squared();
                        let k = s2 * (-r2 / (2.0 * k2)).exp();
                        dlogv += gij * k;
                        dlogk += gij * k * r2 / k2;
                        let gd = diff * (-gij * k / k2);
                        da[i] += &gd;
                        db[j] -= gd;
                    }
                }
            }
            Repr::HeatL3 | Repr::MaternL3 { .. } => {
                for i in 0..a.len() {
                    for j in 0..b.len() {
                        let gij = g[(i, j)];
                        if gij == 0.0 {
                            continue;
                        }
                        let (rho, _) = rho_sinh(&a[i], &b[j]);
                        let (f, fp_over_sh) = self.profile3(rho);
                        dlogv += gij * s2 * f;
                        dlogk += gij * s2 * self.profile3_dlogk(rho);
                        let c = gij * s2 * fp_over_sh;
                        da[i] += dalpha_dx(&b[j]) * c;
                        db[j] += dalpha_dx(&a[i]) * c;
                    }
                }
            }
            Repr::Mc(bank) => {
                let fa = bank.features(a, kappa);
                let fb = if same(a, b) { fa.clone() } else { bank.features(b, kappa) };
                let k = (&fa * fb.transpose()) * s2;
                dlogv = g.component_mul(&k).sum();
                let dfa = (g * &fb) * s2;
                let dfb = (g.transpose() * &fa) * s2;
                if same(a, b) {
                    // Both arguments share one set of features: backpropagate once
                    // and attribute the whole gradient to `a`.
                    let (ga, ka) = bank.features_backward(a, kappa, &(dfa + dfb));
                    da = ga;
                    dlogk = ka;
                } else {
                    let (ga, ka) = bank.features_backward(a, kappa, &dfa);
                    let (gb, kb) = bank.features_backward(b, kappa, &dfb);
                    da = ga;
                    db = gb;
                    dlogk = ka + kb;
                }
            }
        }
        KernelGrad { da, db, d_log_lengthscale: dlogk, d_log_variance: dlogv }
    }

    /// Jittered Gram matrix `K(X, X) + jitter * variance * I` with its
    /// Cholesky factor.
    pub fn gram(&self, x: &[DVector<f64>], jitter: f64) -> Result<Gram> {
        let k = self.cross(x, x);
        let k = (&k + k.transpose()) * 0.5;
        Gram::factor(k, jitter, self.spec.variance)
    }
}

/// Whether two point slices are the same memory.
fn same(a: &[DVector<f64>], b: &[DVector<f64>]) -> bool {
    std::ptr::eq(a, b)
}

/// A symmetric matrix with jitter added on the diagonal and its factorization.
#[derive(Clone, Debug)]
pub struct Gram {
    pub matrix: DMatrix<f64>,
    pub chol: Cholesky<f64, Dyn>,
    pub jitter: f64,
}

impl Gram {
    /// Adds `jitter * scale` to the diagonal, escalating tenfold until the
    /// Cholesky factorization succeeds or the jitter exceeds [`MAX_JITTER`].
    pub fn factor(base: DMatrix<f64>, jitter: f64, scale: f64) -> Result<Self> {
        let mut ladder = Vec::new();
        let mut j = jitter.max(0.0);
        loop {
            ladder.push(j);
            let mut m = base.clone();
            for i in 0..m.nrows() {
                m[(i, i)] += j * scale;
            }
            if let Some(chol) = Cholesky::new(m.clone()) {
                if chol.l_dirty().diagonal().iter().all(|d| d.is_finite() && *d > 0.0) {
                    return Ok(Self { matrix: m, chol, jitter: j });
                }
            }
            let next = if j == 0.0 { 1e-10 } else { j * 10.0 };
            if next > MAX_JITTER * (1.0 + 1e-9) {
                return Err(Error::Cholesky { ladder });
            }
            j = next;
        }
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }
}

pub fn se_euclidean(x: &DVector<f64>, y: &DVector<f64>, spec: &KernelSpec) -> f64 {
    spec.variance * (-(x - y).norm_squared() / (2.0 * spec.lengthscale * spec.lengthscale)).exp()
}

pub fn heat_l3(x: &DVector<f64>, y: &DVector<f64>, spec: &KernelSpec) -> f64 {
    let (rho, _) = rho_sinh(x, y);
    spec.variance * heat3_profile(rho, spec.lengthscale).0
}

pub fn sample_features(spec: &KernelSpec) -> Result<McFeatureSet> {
    if spec.kind != KernelKind::HyperbolicL2Mc {
        return Err(Error::param(format!("{} kernel has no Monte Carlo features", spec.kind)));
    }
    spec.sample_mc()
}

pub fn heat_l2_mc(x: &DVector<f64>, y: &DVector<f64>, spec: &KernelSpec, features: &McFeatureSet) -> f64 {
    let bank = McBank::heat(features.clone());
    let fx = bank.features(std::slice::from_ref(x), spec.lengthscale);
    let fy = bank.features(std::slice::from_ref(y), spec.lengthscale);
    spec.variance * fx.row(0).dot(&fy.row(0))
}

pub fn matern_hyperbolic(x: &DVector<f64>, y: &DVector<f64>, spec: &KernelSpec) -> Result<f64> {
    let q = x.len().saturating_sub(1);
    Ok(LatentKernel::new(spec, q)?.eval(x, y))
}

/// Gram matrix of `points` (jitter included) for any latent kernel.
pub fn gram(spec: &KernelSpec, points: &[DVector<f64>], jitter: f64) -> Result<DMatrix<f64>> {
    let q = match spec.kind {
        KernelKind::EuclideanSe => points.first().map_or(1, |p| p.len()),
        _ => points.first().map_or(2, |p| p.len() - 1),
    };
    Ok(LatentKernel::new(spec, q)?.gram(points, jitter)?.matrix)
}

#[cfg(test)]
mod tests;
