//! Wrapped Gaussian on the hyperboloid.
//!
//! A sample is drawn by pushing `v ~ N(0, Σ)` from the origin's tangent space
//! to the mean with parallel transport and then following the exponential map.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::manifold::{mdot, LorentzPoint};

/// Default number of Monte Carlo samples for KL estimates.
pub const DEFAULT_KL_SAMPLES: usize = 256;

/// `log(sinh(r) / r)` for `r >= 0`, accurate at both ends.
pub fn log_sinhc(r: f64) -> f64 {
    if r < 1e-4 {
        r * r / 6.0
    } else if r > 20.0 {
        r - std::f64::consts::LN_2 - r.ln() + (-(-2.0 * r).exp()).ln_1p()
    } else {
        (r.sinh() / r).ln()
    }
}

/// Derivative of [`log_sinhc`]: `coth(r) - 1/r`.
pub fn dlog_sinhc(r: f64) -> f64 {
    if r < 1e-3 {
        r / 3.0 - r * r * r / 45.0
    } else {
        1.0 / r.tanh() - 1.0 / r
    }
}

#[derive(Clone, Debug)]
pub struct WrappedNormal {
    mean: LorentzPoint,
    cov: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl WrappedNormal {
    /// `cov` is expressed in the coordinate basis of the origin's tangent space.
    pub fn new(mean: LorentzPoint, cov: DMatrix<f64>) -> Result<Self> {
        let q = mean.dim();
        if cov.nrows() != q || cov.ncols() != q {
            return Err(Error::Dimension {
                expected: q,
                got: cov.nrows(),
            });
        }
        let asym = (&cov - cov.transpose()).amax();
        if asym > 1e-10 {
            return Err(Error::param(format!("covariance is not symmetric (max asymmetry {asym:e})")));
        }
        let chol = Cholesky::new(cov.clone())
            .ok_or_else(|| Error::param("covariance is not positive definite"))?;
        if chol.l().diagonal().iter().any(|d| !(*d > 0.0)) {
            return Err(Error::param("covariance is not positive definite"));
        }
        Ok(Self { mean, cov, chol })
    }

    pub fn isotropic(mean: LorentzPoint, variance: f64) -> Result<Self> {
        if !(variance > 0.0) || !variance.is_finite() {
            return Err(Error::param(format!("variance must be positive, got {variance}")));
        }
        let q = mean.dim();
        Self::new(mean, DMatrix::identity(q, q) * variance)
    }

    pub fn mean(&self) -> &LorentzPoint {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn dim(&self) -> usize {
        self.mean.dim()
    }

    /// Maps standard-normal noise `eps` (length Q) to a point on the manifold.
    pub fn transform(&self, eps: &DVector<f64>) -> LorentzPoint {
        let v = self.chol.l() * eps;
        push_forward(&self.mean, &v)
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<LorentzPoint>> {
        if n == 0 {
            return Err(Error::param("sample count must be at least 1"));
        }
        let q = self.dim();
        Ok((0..n)
            .map(|_| {
                let eps = DVector::from_fn(q, |_, _| rng.sample(StandardNormal));
                self.transform(&eps)
            })
            .collect())
    }

    /// Tangent coordinates at the origin of `x` relative to the mean.
    pub fn origin_coords(&self, x: &LorentzPoint) -> (DVector<f64>, f64) {
        pull_back(&self.mean, x)
    }

    pub fn log_prob(&self, x: &LorentzPoint) -> f64 {
        let (v, r) = self.origin_coords(x);
        let q = self.dim() as f64;
        let z = self.chol.l().solve_lower_triangular(&v).expect("triangular solve");
        let log_det: f64 = self.chol.l().diagonal().iter().map(|d| d.ln()).sum();
        -0.5 * q * (2.0 * std::f64::consts::PI).ln() - log_det - 0.5 * z.norm_squared()
            - (q - 1.0) * log_sinhc(r)
    }
}

/// `exp_mu(PT_{mu0 -> mu}((0, v)))`.
pub fn push_forward(mean: &LorentzPoint, v: &DVector<f64>) -> LorentzPoint {
    let q = mean.dim();
    let mut amb = DVector::zeros(q + 1);
    amb.as_mut_slice()[1..].copy_from_slice(v.as_slice());
    let origin = LorentzPoint::origin(q);
    let u = origin.transport(mean, &amb);
    mean.exp(&u)
}

/// Inverse of [`push_forward`]; also returns the tangent norm `|log_mu(x)|`.
pub fn pull_back(mean: &LorentzPoint, x: &LorentzPoint) -> (DVector<f64>, f64) {
    let q = mean.dim();
    let u = mean.log(x);
    let r = mdot(&u, &u).max(0.0).sqrt();
    let origin = LorentzPoint::origin(q);
    let v = mean.transport(&origin, &u);
    (DVector::from_column_slice(&v.as_slice()[1..]), r)
}

/// Monte Carlo estimate of KL(q || p) using `k` samples from `q`.
pub fn kl_mc<R: Rng + ?Sized>(q: &WrappedNormal, p: &WrappedNormal, k: usize, rng: &mut R) -> Result<f64> {
    kl_mc_with_stderr(q, p, k, rng).map(|(m, _)| m)
}

/// Same as [`kl_mc`] but also returns the standard error of the estimate.
pub fn kl_mc_with_stderr<R: Rng + ?Sized>(
    q: &WrappedNormal,
    p: &WrappedNormal,
    k: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if q.dim() != p.dim() {
        return Err(Error::Dimension {
            expected: q.dim(),
            got: p.dim(),
        });
    }
    let xs = q.sample(k, rng)?;
    let terms: Vec<f64> = xs.iter().map(|x| q.log_prob(x) - p.log_prob(x)).collect();
    let n = terms.len() as f64;
    let mean = terms.iter().sum::<f64>() / n;
    if k < 2 {
        return Ok((mean, f64::INFINITY));
    }
    let var = terms.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}
