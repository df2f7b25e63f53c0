use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::ln_gamma;

use super::{Geometry, GammaPrior};
use crate::distributions::{dlog_sinhc, log_sinhc};
use crate::error::{Error, Result};
use crate::graphtax::TaxonomyGraph;
use crate::kernels::{Gram, LatentKernel};

/// `log p(Y | X)` and its gradient. Latent gradients are tangent vectors.
#[derive(Clone, Debug)]
pub struct MarginalGrad {
    pub value: f64,
    pub dx: Vec<DVector<f64>>,
    pub d_log_lengthscale: f64,
    pub d_log_variance: f64,
    pub d_log_noise: Vec<f64>,
}

fn check_shapes(y: &DMatrix<f64>, x: &[DVector<f64>], noise: &[f64]) -> Result<()> {
    if y.nrows() != x.len() {
        return Err(Error::Dimension { expected: x.len(), got: y.nrows() });
    }
    if noise.len() != y.ncols() {
        return Err(Error::Dimension { expected: y.ncols(), got: noise.len() });
    }
    if let Some(s) = noise.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        return Err(Error::param(format!("noise variances must be positive, got {s}")));
    }
    Ok(())
}

/// `sum_d log N(y_d; 0, K + sigma_d^2 I)` with one Gram matrix `K` shared by
/// all output dimensions. `jitter` (relative to the kernel variance) is added
/// to the diagonal and escalated if the factorization fails.
pub fn log_marginal(
    y: &DMatrix<f64>,
    x: &[DVector<f64>],
    kernel: &LatentKernel,
    noise: &[f64],
    jitter: f64,
) -> Result<f64> {
    marginal(y, x, kernel, noise, jitter, false).map(|g| g.value)
}

pub fn log_marginal_grad(
    y: &DMatrix<f64>,
    x: &[DVector<f64>],
    kernel: &LatentKernel,
    noise: &[f64],
    jitter: f64,
) -> Result<MarginalGrad> {
    marginal(y, x, kernel, noise, jitter, true)
}

fn marginal(
    y: &DMatrix<f64>,
    x: &[DVector<f64>],
    kernel: &LatentKernel,
    noise: &[f64],
    jitter: f64,
    with_grad: bool,
) -> Result<MarginalGrad> {
    check_shapes(y, x, noise)?;
    let n = x.len();
    let s2 = kernel.variance();
    let k = kernel.cross(x, x);
    let k = (&k + k.transpose()) * 0.5;
    let mut value = 0.0;
    let mut gk = DMatrix::zeros(n, n);
    let mut d_log_noise = vec![0.0; noise.len()];
    let mut d_log_variance = 0.0;
    for (d, &sd) in noise.iter().enumerate() {
        let mut a = k.clone();
        for i in 0..n {
            a[(i, i)] += sd;
        }
        let gram = Gram::factor(a, jitter, s2)?;
        let yd = y.column(d).into_owned();
        let alpha = gram.chol.solve(&yd);
        value += -0.5 * yd.dot(&alpha) - 0.5 * gram.log_det() - 0.5 * n as f64 * (2.0 * PI).ln();
        if with_grad {
            let ainv = gram.chol.inverse();
            let gd = (&alpha * alpha.transpose() - &ainv) * 0.5;
            let tr = gd.trace();
            d_log_noise[d] = sd * tr;
            d_log_variance += gram.jitter * s2 * tr;
            gk += gd;
        }
    }
    if !with_grad {
        return Ok(MarginalGrad { value, dx: Vec::new(), d_log_lengthscale: 0.0, d_log_variance: 0.0, d_log_noise });
    }
    let kg = kernel.cross_backward(x, x, &gk);
    let geometry = if kernel.is_hyperbolic() { Geometry::Lorentz } else { Geometry::Euclidean };
    let dx = (0..n).map(|i| geometry.to_tangent(&x[i], &(&kg.da[i] + &kg.db[i]))).collect();
    Ok(MarginalGrad {
        value,
        dx,
        d_log_lengthscale: kg.d_log_lengthscale,
        d_log_variance: d_log_variance + kg.d_log_variance,
        d_log_noise,
    })
}

/// `sum_n log p(x_n)` under `N_L(mu0, alpha I)` (wrapped) or `N(0, alpha I)`.
pub fn log_prior(geometry: Geometry, x: &[DVector<f64>], alpha: f64) -> f64 {
    log_prior_grad(geometry, x, alpha).0
}

pub fn log_prior_grad(geometry: Geometry, x: &[DVector<f64>], alpha: f64) -> (f64, Vec<DVector<f64>>) {
    let mut value = 0.0;
    let mut grads = Vec::with_capacity(x.len());
    for xn in x {
        let q = match geometry {
            Geometry::Lorentz => xn.len() - 1,
            Geometry::Euclidean => xn.len(),
        } as f64;
        let base = -0.5 * q * (2.0 * PI * alpha).ln();
        match geometry {
            Geometry::Euclidean => {
                value += base - 0.5 * xn.norm_squared() / alpha;
                grads.push(xn * (-1.0 / alpha));
            }
            Geometry::Lorentz => {
                let origin = geometry.origin(xn.len() - 1);
                let r = geometry.distance(xn, &origin);
                value += base - 0.5 * r * r / alpha - (q - 1.0) * log_sinhc(r);
                // d/dr of the log density divided by r; grad r = -log_x(mu0) / r.
                let c_over_r = if r < 1e-8 {
                    -1.0 / alpha - (q - 1.0) / 3.0
                } else {
                    -1.0 / alpha - (q - 1.0) * dlog_sinhc(r) / r
                };
                grads.push(geometry.log(xn, &origin) * -c_over_r);
            }
        }
    }
    (value, grads)
}

fn check_classes(x: &[DVector<f64>], classes: &[usize], graph: &TaxonomyGraph) -> Result<()> {
    if x.len() != classes.len() {
        return Err(Error::Dimension { expected: x.len(), got: classes.len() });
    }
    if let Some(c) = classes.iter().find(|c| **c >= graph.len()) {
        return Err(Error::Lookup { what: "class index", name: c.to_string() });
    }
    Ok(())
}

/// `sum_{i<j} (dist_G(c_i, c_j) - dist(x_i, x_j))^2`.
pub fn stress_loss(geometry: Geometry, x: &[DVector<f64>], classes: &[usize], graph: &TaxonomyGraph) -> Result<f64> {
    check_classes(x, classes, graph)?;
    let g = graph.dist();
    let mut s = 0.0;
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let e = g[(classes[i], classes[j])] - geometry.distance(&x[i], &x[j]);
            s += e * e;
        }
    }
    Ok(s)
}

pub fn stress_grad(
    geometry: Geometry,
    x: &[DVector<f64>],
    classes: &[usize],
    graph: &TaxonomyGraph,
) -> Result<(f64, Vec<DVector<f64>>)> {
    check_classes(x, classes, graph)?;
    let g = graph.dist();
    let mut s = 0.0;
    let mut grads: Vec<DVector<f64>> = x.iter().map(|p| DVector::zeros(p.len())).collect();
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let (d, gi) = geometry.dist_grad(&x[i], &x[j]);
            let (_, gj) = geometry.dist_grad(&x[j], &x[i]);
            let e = g[(classes[i], classes[j])] - d;
            s += e * e;
            grads[i] -= gi * (2.0 * e);
            grads[j] -= gj * (2.0 * e);
        }
    }
    Ok((s, grads))
}

/// Ratio-based alternatives to the stress loss.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Distortion {
    /// `sum_{i<j} (d^2 / (g^2 + eps) - 1)^2`; same-class pairs need `eps > 0`.
    Vanilla { eps: f64 },
    /// `lambda1 * d` for same-class pairs, `lambda2 * (d^2 / g^2 - 1)^2` otherwise.
    Modified { lambda1: f64, lambda2: f64 },
}

pub fn distortion_loss(
    geometry: Geometry,
    x: &[DVector<f64>],
    classes: &[usize],
    graph: &TaxonomyGraph,
    variant: Distortion,
) -> Result<f64> {
    distortion(geometry, x, classes, graph, variant, false).map(|r| r.0)
}

pub fn distortion_grad(
    geometry: Geometry,
    x: &[DVector<f64>],
    classes: &[usize],
    graph: &TaxonomyGraph,
    variant: Distortion,
) -> Result<(f64, Vec<DVector<f64>>)> {
    distortion(geometry, x, classes, graph, variant, true)
}

fn distortion(
    geometry: Geometry,
    x: &[DVector<f64>],
    classes: &[usize],
    graph: &TaxonomyGraph,
    variant: Distortion,
    with_grad: bool,
) -> Result<(f64, Vec<DVector<f64>>)> {
    check_classes(x, classes, graph)?;
    let g = graph.dist();
    let mut s = 0.0;
    let mut grads: Vec<DVector<f64>> = x.iter().map(|p| DVector::zeros(p.len())).collect();
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let gij = g[(classes[i], classes[j])];
            let (d, gi, gj) = if with_grad {
                let (d, gi) = geometry.dist_grad(&x[i], &x[j]);
                (d, gi, geometry.dist_grad(&x[j], &x[i]).1)
            } else {
                (geometry.distance(&x[i], &x[j]), DVector::zeros(0), DVector::zeros(0))
            };
            // Loss term and its derivative with respect to d.
            let (term, dterm) = match variant {
                Distortion::Modified { lambda1, .. } if gij == 0.0 => (lambda1 * d, lambda1),
                Distortion::Modified { lambda2, .. } => {
                    let r = d * d / (gij * gij) - 1.0;
                    (lambda2 * r * r, lambda2 * 4.0 * r * d / (gij * gij))
                }
                Distortion::Vanilla { eps } => {
                    let den = gij * gij + eps;
                    if den <= 0.0 {
                        return Err(Error::domain(format!(
                            "distortion undefined for points {i} and {j} of the same class without eps"
                        )));
                    }
                    let r = d * d / den - 1.0;
                    (r * r, 4.0 * r * d / den)
                }
            };
            s += term;
            if with_grad {
                grads[i] += gi * dterm;
                grads[j] += gj * dterm;
            }
        }
    }
    Ok((s, grads))
}

/// Gamma(shape, rate) log density of the lengthscale and its derivative
/// with respect to the log lengthscale.
pub fn gamma_log_prior(prior: GammaPrior, lengthscale: f64) -> (f64, f64) {
    let GammaPrior { shape: a, rate: b } = prior;
    let value = a * b.ln() - ln_gamma(a) + (a - 1.0) * lengthscale.ln() - b * lengthscale;
    (value, (a - 1.0) - b * lengthscale)
}
