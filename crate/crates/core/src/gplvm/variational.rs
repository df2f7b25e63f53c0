//! Sparse variational training with wrapped-normal latent posteriors.
//!
//! The bound is
//! `sum_{n,d} E_q(x_n) E_q(f) [log N(y_nd; f, s_d^2)] - sum_d KL(q(u_d) || p(u_d | Z)) - sum_n KL(q(x_n) || p(x_n))`,
//! with `q(x_n)` the pushforward of `N(0, diag(std_n^2))` at the origin onto
//! the mean `mu_n` (or a plain Gaussian in the Euclidean model). Expectations
//! over `q(x_n)` use reparameterized draws `eps` shared by the data term and
//! the latent KL, so that for fixed draws the estimate is a smooth function
//! of all parameters.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::objective::{distortion_grad, log_prior_grad, stress_grad, Distortion};
use super::train::{check_inputs, initial_latents, initial_noise, training_failure};
use super::{dsinhc_over_r, sinhc, Geometry, GphlvmModel, HistoryEntry, Regularizer, TrainConfig};
use crate::distributions::{dlog_sinhc, log_sinhc};
use crate::error::{Error, Result};
use crate::graphtax::{LabeledDataset, TaxonomyGraph};
use crate::kernels::{Gram, KernelSpec, LatentKernel};
use crate::manifold::LorentzPoint;
use crate::optim::{OptimizerState, ProductGrad, ProductParam};

/// Variational parameters; the means of `q(x_n)` are the model latents.
#[derive(Clone, Debug, PartialEq)]
pub struct VariationalState {
    /// `M` inducing inputs shared by all output dimensions.
    pub inducing: Vec<DVector<f64>>,
    /// Mean of `q(u_d)` per output dimension.
    pub q_mean: Vec<DVector<f64>>,
    /// Lower-triangular Cholesky factor of the covariance of `q(u_d)`.
    pub q_chol: Vec<DMatrix<f64>>,
    /// Standard deviations of `q(x_n)` in origin tangent coordinates.
    pub x_std: Vec<DVector<f64>>,
}

impl VariationalState {
    pub fn validate(&self) -> Result<()> {
        for l in &self.q_chol {
            for i in 0..l.nrows() {
                if !(l[(i, i)] > 0.0) || (i + 1..l.ncols()).any(|j| l[(i, j)] != 0.0) {
                    return Err(Error::invalid("q(u) covariance factor must be lower triangular with positive diagonal"));
                }
            }
        }
        if self.x_std.iter().flat_map(|s| s.iter()).any(|s| !(*s > 0.0)) {
            return Err(Error::invalid("q(x) standard deviations must be positive"));
        }
        Ok(())
    }
}

/// Reparameterized sample `exp_mu(PT_{mu0 -> mu}((0, v)))` in ambient coordinates.
pub(crate) fn push(mu: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    let (x, _) = push_parts(mu, v);
    x
}

fn push_parts(mu: &DVector<f64>, v: &DVector<f64>) -> (DVector<f64>, (f64, DVector<f64>, f64)) {
    let c = 1.0 + mu[0];
    let coef = (0..v.len()).map(|i| mu[i + 1] * v[i]).sum::<f64>() / c;
    let mut w = mu * coef;
    w[0] += coef;
    for i in 0..v.len() {
        w[i + 1] += v[i];
    }
    let n2 = -w[0] * w[0] + w.rows(1, v.len()).norm_squared();
    let n = n2.max(0.0).sqrt();
    let x = mu * n.cosh() + &w * sinhc(n);
    (x, (coef, w, n))
}

/// Reverse mode of [`push`]: ambient gradients for `mu` and the gradient for `v`.
pub(crate) fn push_backward(mu: &DVector<f64>, v: &DVector<f64>, gx: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let (_, (coef, w, n)) = push_parts(mu, v);
    let q = v.len();
    let c = 1.0 + mu[0];
    let mut gw = gx * sinhc(n);
    let k = sinhc(n) * gx.dot(mu) + dsinhc_over_r(n) * gx.dot(&w);
    // d n / d w = J w / n
    gw[0] -= k * w[0];
    for i in 1..=q {
        gw[i] += k * w[i];
    }
    let mut gmu = gx * n.cosh() + &gw * coef;
    let gcoef = gw[0] * c + (1..=q).map(|i| gw[i] * mu[i]).sum::<f64>();
    let gv = DVector::from_fn(q, |i, _| gw[i + 1] + gcoef * mu[i + 1] / c);
    for i in 0..q {
        gmu[i + 1] += gcoef * v[i] / c;
    }
    gmu[0] -= gcoef * coef / c;
    (gmu, gv)
}

fn tri_len(m: usize) -> usize {
    m * (m + 1) / 2
}

/// ELBO over a packed parameter vector, for fixed reparameterization draws.
pub struct ElboObjective<'a> {
    pub geometry: Geometry,
    pub q: usize,
    pub m: usize,
    pub y: &'a DMatrix<f64>,
    pub classes: &'a [usize],
    pub graph: &'a TaxonomyGraph,
    pub config: &'a TrainConfig,
    pub kernel: LatentKernel,
}

/// ELBO estimate with its gradient.
#[derive(Clone, Debug)]
pub struct ElboGrad {
    /// The bound itself.
    pub elbo: f64,
    /// Bound minus the scaled regularizer on the means.
    pub total: f64,
    pub stress: f64,
    pub grad: ProductGrad,
}

impl<'a> ElboObjective<'a> {
    pub fn new(
        dataset: &'a LabeledDataset,
        graph: &'a TaxonomyGraph,
        config: &'a TrainConfig,
        m: usize,
    ) -> Result<Self> {
        Ok(Self {
            geometry: config.geometry,
            q: config.latent_dim,
            m,
            y: dataset.observations(),
            classes: dataset.classes(),
            graph,
            config,
            kernel: LatentKernel::new(&config.kernel_spec(), config.latent_dim)?,
        })
    }

    fn n(&self) -> usize {
        self.y.nrows()
    }

    fn d(&self) -> usize {
        self.y.ncols()
    }

    /// Start of the non-point parameters in the Euclidean block.
    fn offset(&self) -> usize {
        match self.geometry {
            Geometry::Lorentz => 0,
            Geometry::Euclidean => (self.n() + self.m) * self.q,
        }
    }

    pub fn pack(&self, means: &[DVector<f64>], state: &VariationalState, kernel: &KernelSpec, noise: &[f64]) -> ProductParam {
        let mut e = Vec::new();
        let mut names = Vec::new();
        let mut hyp = Vec::new();
        let points = means.iter().chain(&state.inducing);
        match self.geometry {
            Geometry::Lorentz => hyp = points.map(|p| LorentzPoint::from_ambient_unchecked(p.clone())).collect(),
            Geometry::Euclidean => {
                for (i, p) in points.enumerate() {
                    e.extend(p.iter().copied());
                    names.extend((0..p.len()).map(|k| format!("point[{i}][{k}]")));
                }
            }
        }
        for (n, s) in state.x_std.iter().enumerate() {
            e.extend(s.iter().map(|v| v.ln()));
            names.extend((0..s.len()).map(|k| format!("log_std[{n}][{k}]")));
        }
        for (d, m) in state.q_mean.iter().enumerate() {
            e.extend(m.iter().copied());
            names.extend((0..m.len()).map(|k| format!("q_mean[{d}][{k}]")));
        }
        for (d, l) in state.q_chol.iter().enumerate() {
            for i in 0..self.m {
                for j in 0..=i {
                    e.push(if i == j { l[(i, i)].ln() } else { l[(i, j)] });
                    names.push(format!("q_chol[{d}][{i}][{j}]"));
                }
            }
        }
        e.extend([kernel.lengthscale.ln(), kernel.variance.ln()]);
        names.extend(["log_lengthscale".to_string(), "log_variance".to_string()]);
        e.extend(noise.iter().map(|s| s.ln()));
        names.extend((0..noise.len()).map(|d| format!("log_noise[{d}]")));
        ProductParam::new(hyp, DVector::from_vec(e)).with_names("point", names)
    }

    /// Means, variational state, `(kappa, variance)` and noise encoded in `p`.
    pub fn unpack(&self, p: &ProductParam) -> (Vec<DVector<f64>>, VariationalState, (f64, f64), Vec<f64>) {
        let (n, m, q, d) = (self.n(), self.m, self.q, self.d());
        let points: Vec<DVector<f64>> = match self.geometry {
            Geometry::Lorentz => p.hyperbolic.iter().map(|x| x.coords().clone()).collect(),
            Geometry::Euclidean => (0..n + m).map(|i| p.euclidean.rows(i * q, q).into_owned()).collect(),
        };
        let e = &p.euclidean.as_slice()[self.offset()..];
        let mut at = 0;
        let mut take = |k: usize| {
            let s = &e[at..at + k];
            at += k;
            s
        };
        let x_std = (0..n).map(|_| DVector::from_iterator(q, take(q).iter().map(|v| v.exp()))).collect();
        let q_mean = (0..d).map(|_| DVector::from_column_slice(take(m))).collect();
        let q_chol = (0..d)
            .map(|_| {
                let t = take(tri_len(m));
                let mut l = DMatrix::zeros(m, m);
                let mut k = 0;
                for i in 0..m {
                    for j in 0..=i {
                        l[(i, j)] = if i == j { t[k].exp() } else { t[k] };
                        k += 1;
                    }
                }
                l
            })
            .collect();
        let h = take(2);
        let hyper = (h[0].exp(), h[1].exp());
        let noise = take(d).iter().map(|v| v.exp()).collect();
        let means = points[..n].to_vec();
        let inducing = super::io::canonical(self.geometry, points[n..].to_vec());
        (means, VariationalState { inducing, q_mean, q_chol, x_std }, hyper, noise)
    }

    /// Draws `samples x N` standard-normal vectors of length Q.
    pub fn draw(&self, samples: usize, rng: &mut impl Rng) -> Vec<Vec<DVector<f64>>> {
        (0..samples)
            .map(|_| (0..self.n()).map(|_| DVector::from_fn(self.q, |_, _| rng.sample(StandardNormal))).collect())
            .collect()
    }

    pub fn value(&self, p: &ProductParam, eps: &[Vec<DVector<f64>>]) -> Result<f64> {
        self.eval(p, eps).map(|e| e.total)
    }

    pub fn eval(&self, p: &ProductParam, eps: &[Vec<DVector<f64>>]) -> Result<ElboGrad> {
        let geometry = self.geometry;
        let (n, m, q) = (self.n(), self.m, self.q);
        let (mu, st, (kappa, s2), noise) = self.unpack(p);
        if noise.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Numerical(format!("noise variances left the valid range: {noise:?}")));
        }
        let mut kernel = self.kernel.clone();
        kernel.set_hyper(kappa, s2)?;
        let z = &st.inducing;
        let kuu = kernel.gram(z, self.config.jitter)?;
        let kinv = kuu.chol.inverse();
        let log_det_k = kuu.log_det();
        let ns = eps.len() as f64;

        let mut value = 0.0;
        let mut g_mean: Vec<DVector<f64>> = vec![DVector::zeros(m); self.d()];
        let mut g_chol: Vec<DMatrix<f64>> = vec![DMatrix::zeros(m, m); self.d()];
        let mut g_kuu = DMatrix::zeros(m, m);
        let mut g_log_noise = vec![0.0; self.d()];
        let mut g_log_var = 0.0;
        let mut g_log_len = 0.0;
        let mut g_mu: Vec<DVector<f64>> = mu.iter().map(|x| DVector::zeros(x.len())).collect();
        let mut g_log_std: Vec<DVector<f64>> = vec![DVector::zeros(q); n];
        let mut g_z: Vec<DVector<f64>> = z.iter().map(|x| DVector::zeros(x.len())).collect();

        // KL(q(u_d) || N(0, Kuu)) in closed form.
        let s_mats: Vec<DMatrix<f64>> = st.q_chol.iter().map(|l| l * l.transpose()).collect();
        for d in 0..self.d() {
            let (l, md) = (&st.q_chol[d], &st.q_mean[d]);
            let kinv_m = &kinv * md;
            let log_det_s: f64 = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
            let kl = 0.5 * ((&kinv * &s_mats[d]).trace() + md.dot(&kinv_m) - m as f64 + log_det_k - log_det_s);
            value -= kl;
            g_mean[d] -= &kinv_m;
            let l_inv_t = l.clone().try_inverse().ok_or_else(|| Error::Numerical("singular q(u) factor".into()))?.transpose();
            g_chol[d] -= &kinv * l - l_inv_t;
            g_kuu += (&kinv * (&s_mats[d] + md * md.transpose()) * &kinv - &kinv) * 0.5;
        }

        // All draws go through one cross-covariance evaluation so the
        // inducing features are computed once.
        let vs: Vec<Vec<DVector<f64>>> =
            eps.iter().map(|draws| (0..n).map(|i| st.x_std[i].component_mul(&draws[i])).collect()).collect();
        let mu_ref = &mu;
        let xs: Vec<DVector<f64>> = vs
            .iter()
            .flat_map(|v| {
                (0..n).map(move |i| match geometry {
                    Geometry::Lorentz => push(&mu_ref[i], &v[i]),
                    Geometry::Euclidean => &mu_ref[i] + &v[i],
                })
            })
            .collect();
        let kfu_all = kernel.cross(&xs, z);
        let mut g_kfu_all = DMatrix::zeros(xs.len(), m);
        for si in 0..eps.len() {
            let kfu = kfu_all.rows(si * n, n).into_owned();
            let a = &kfu * &kinv;
            let mut g_a = DMatrix::zeros(n, m);
            let mut g_kfu = DMatrix::zeros(n, m);
            let qff: Vec<f64> = (0..n).map(|i| a.row(i).dot(&kfu.row(i))).collect();
            for d in 0..self.d() {
                let beta = 1.0 / noise[d];
                let md = &st.q_mean[d];
                let r = self.y.column(d) - &a * md;
                let a_s = &a * &s_mats[d];
                let var: Vec<f64> = (0..n).map(|i| s2 - qff[i] + a_s.row(i).dot(&a.row(i))).collect();
                let sq: f64 = (0..n).map(|i| r[i] * r[i] + var[i]).sum();
                value += (-0.5 * n as f64 * (2.0 * PI * noise[d]).ln() - 0.5 * beta * sq) / ns;
                g_a += (&r * md.transpose() * beta + &kfu * (0.5 * beta) - &a_s * beta) / ns;
                g_kfu += &a * (0.5 * beta / ns);
                g_mean[d] += a.transpose() * &r * (beta / ns);
                let g_s = a.transpose() * &a * (-0.5 * beta / ns);
                g_chol[d] += g_s * &st.q_chol[d] * 2.0;
                g_log_noise[d] += (-0.5 * n as f64 + 0.5 * beta * sq) / ns;
                g_log_var += -0.5 * beta * n as f64 * s2 / ns;
            }
            g_kfu_all.rows_mut(si * n, n).copy_from(&(g_kfu + &g_a * &kinv));
            g_kuu -= a.transpose() * &g_a * &kinv;
        }
        let kg = kernel.cross_backward(&xs, z, &g_kfu_all);
        g_log_len += kg.d_log_lengthscale;
        g_log_var += kg.d_log_variance;
        for (gz, db) in g_z.iter_mut().zip(&kg.db) {
            *gz += db;
        }
        let mut g_xs = kg.da;

        if geometry == Geometry::Lorentz {
            // Monte Carlo latent KL. log q at its own draw depends on the
            // parameters only through std; the `-|eps|^2 / 2` term is replaced
            // by its expectation `-Q / 2`, which keeps the estimate unbiased
            // and the gradient unchanged while removing most of its noise.
            let (lp, gp) = log_prior_grad(geometry, &xs, self.config.prior_alpha);
            value += lp / ns;
            for si in 0..eps.len() {
                for i in 0..n {
                    let v = &vs[si][i];
                    let rho = v.norm();
                    let log_q = -0.5 * q as f64 * (2.0 * PI).ln()
                        - st.x_std[i].iter().map(|s| s.ln()).sum::<f64>()
                        - 0.5 * q as f64
                        - (q as f64 - 1.0) * log_sinhc(rho);
                    value -= log_q / ns;
                    let dls_over_rho = if rho < 1e-8 { 1.0 / 3.0 } else { dlog_sinhc(rho) / rho };
                    for k in 0..q {
                        g_log_std[i][k] += (1.0 + (q as f64 - 1.0) * dls_over_rho * v[k] * v[k]) / ns;
                    }
                    let mut jg = &gp[si * n + i] / ns;
                    jg[0] = -jg[0];
                    g_xs[si * n + i] += jg;
                }
            }
        }

        for si in 0..eps.len() {
            for i in 0..n {
                let (v, gx) = (&vs[si][i], &g_xs[si * n + i]);
                let (gm, gv) = match geometry {
                    Geometry::Lorentz => push_backward(&mu[i], v, gx),
                    Geometry::Euclidean => (gx.clone(), gx.clone()),
                };
                g_mu[i] += gm;
                for k in 0..q {
                    g_log_std[i][k] += gv[k] * v[k];
                }
            }
        }

        let kg = kernel.cross_backward(z, z, &g_kuu);
        g_log_len += kg.d_log_lengthscale;
        g_log_var += kg.d_log_variance + kuu.jitter * s2 * g_kuu.trace();
        for j in 0..m {
            g_z[j] += &kg.da[j] + &kg.db[j];
        }

        if geometry == Geometry::Euclidean {
            let alpha = self.config.prior_alpha;
            for i in 0..n {
                for k in 0..q {
                    let s = st.x_std[i][k];
                    let mk = mu[i][k];
                    value -= 0.5 * ((s * s + mk * mk) / alpha - 1.0 - (s * s / alpha).ln());
                    g_mu[i][k] -= mk / alpha;
                    g_log_std[i][k] -= s * s / alpha - 1.0;
                }
            }
        }

        let mut g_mu: Vec<DVector<f64>> = (0..n).map(|i| geometry.to_tangent(&mu[i], &g_mu[i])).collect();
        let g_z: Vec<DVector<f64>> = (0..m).map(|j| geometry.to_tangent(&z[j], &g_z[j])).collect();

        let (stress, gs) = stress_grad(geometry, &mu, self.classes, self.graph)?;
        let gamma = self.config.gamma;
        let (reg, greg) = match self.config.regularizer {
            Regularizer::None => (0.0, None),
            Regularizer::Stress | Regularizer::BcStress => (stress, Some(gs)),
            Regularizer::Distortion => {
                let v = Distortion::Vanilla { eps: self.config.distortion_eps };
                let (r, g) = distortion_grad(geometry, &mu, self.classes, self.graph, v)?;
                (r, Some(g))
            }
            Regularizer::ModifiedDistortion => {
                let v = Distortion::Modified { lambda1: self.config.lambda1, lambda2: self.config.lambda2 };
                let (r, g) = distortion_grad(geometry, &mu, self.classes, self.graph, v)?;
                (r, Some(g))
            }
        };
        if let Some(g) = greg {
            for (a, b) in g_mu.iter_mut().zip(&g) {
                *a -= b * gamma;
            }
        }

        let mut e = Vec::new();
        let mut hyp = Vec::new();
        match geometry {
            Geometry::Lorentz => hyp = g_mu.into_iter().chain(g_z).collect(),
            Geometry::Euclidean => e.extend(g_mu.iter().chain(&g_z).flat_map(|g| g.iter().copied())),
        }
        for g in &g_log_std {
            e.extend(g.iter().copied());
        }
        for g in &g_mean {
            e.extend(g.iter().copied());
        }
        for (d, g) in g_chol.iter().enumerate() {
            let l = &st.q_chol[d];
            for i in 0..m {
                for j in 0..=i {
                    e.push(if i == j { g[(i, i)] * l[(i, i)] } else { g[(i, j)] });
                }
            }
        }
        e.extend([g_log_len, g_log_var]);
        e.extend(g_log_noise);
        Ok(ElboGrad {
            elbo: value,
            total: value - gamma * reg,
            stress,
            grad: ProductGrad { hyperbolic: hyp, euclidean: DVector::from_vec(e) },
        })
    }

    /// Optimal `q(u_d)` of the collapsed bound for latents fixed at `x`.
    pub fn collapsed_q(
        &self,
        x: &[DVector<f64>],
        z: &[DVector<f64>],
        kernel: &LatentKernel,
        noise: &[f64],
    ) -> Result<(Vec<DVector<f64>>, Vec<DMatrix<f64>>)> {
        let kuu = kernel.gram(z, self.config.jitter)?.matrix;
        let kuf = kernel.cross(z, x);
        let mut means = Vec::new();
        let mut chols = Vec::new();
        for d in 0..self.d() {
            let beta = 1.0 / noise[d];
            let sigma = &kuu + &kuf * kuf.transpose() * beta;
            let sigma = Gram::factor((&sigma + sigma.transpose()) * 0.5, 0.0, kernel.variance())?;
            let yd = self.y.column(d).into_owned();
            means.push(&kuu * sigma.chol.solve(&(&kuf * yd)) * beta);
            let s = &kuu * sigma.chol.solve(&kuu);
            let s = Gram::factor((&s + s.transpose()) * 0.5, self.config.jitter, kernel.variance())?;
            chols.push(s.chol.l());
        }
        Ok((means, chols))
    }

    pub fn model(&self, p: &ProductParam, history: Vec<HistoryEntry>) -> GphlvmModel {
        let (means, state, (kappa, s2), noise) = self.unpack(p);
        let mut kernel = self.kernel.spec().clone();
        kernel.lengthscale = kappa;
        kernel.variance = s2;
        GphlvmModel {
            geometry: self.geometry,
            latent_dim: self.q,
            latents: super::io::canonical(self.geometry, means),
            kernel,
            noise,
            prior_alpha: self.config.prior_alpha,
            bc: None,
            variational: Some(state),
            train_config: self.config.clone(),
            observations: self.y.clone(),
            classes: self.classes.iter().map(|c| self.graph.id(*c).to_string()).collect(),
            history,
        }
    }

    /// Initial parameters: means from the configured initialization, inducing
    /// inputs at evenly spaced means, `q(u)` at the collapsed optimum.
    pub fn initial(&self, dataset: &LabeledDataset) -> Result<ProductParam> {
        let means = initial_latents(dataset, self.graph, self.config)?;
        let n = means.len();
        let inducing: Vec<DVector<f64>> = (0..self.m).map(|j| means[j * n / self.m].clone()).collect();
        let spec = self.config.kernel_spec();
        let noise = initial_noise(self.y);
        let (q_mean, q_chol) = self.collapsed_q(&means, &inducing, &self.kernel, &noise)?;
        let x_std = vec![DVector::from_element(self.q, self.config.vi_init_std); n];
        let state = VariationalState { inducing, q_mean, q_chol, x_std };
        Ok(self.pack(&means, &state, &spec, &noise))
    }
}

/// ELBO of a variational model for the given draws `eps[s][n]`.
pub fn elbo(
    model: &GphlvmModel,
    dataset: &LabeledDataset,
    graph: &TaxonomyGraph,
    eps: &[Vec<DVector<f64>>],
) -> Result<f64> {
    elbo_grad(model, dataset, graph, eps).map(|g| g.elbo)
}

pub fn elbo_grad(
    model: &GphlvmModel,
    dataset: &LabeledDataset,
    graph: &TaxonomyGraph,
    eps: &[Vec<DVector<f64>>],
) -> Result<ElboGrad> {
    let st = model
        .variational
        .as_ref()
        .ok_or_else(|| Error::Capability("model has no variational state".into()))?;
    let obj = ElboObjective::new(dataset, graph, &model.train_config, st.inducing.len())?;
    let p = obj.pack(&model.latents, st, &model.kernel, &model.noise);
    obj.eval(&p, eps)
}

/// Sparse variational training over means and covariances of `q(x_n)`,
/// inducing inputs, `q(u_d)` and hyperparameters.
pub fn train_variational(dataset: &LabeledDataset, graph: &TaxonomyGraph, config: &TrainConfig) -> Result<GphlvmModel> {
    check_inputs(dataset, graph, config)?;
    if config.regularizer == Regularizer::BcStress {
        return Err(Error::invalid("back constraints are only available with MAP training"));
    }
    let n = dataset.len();
    let m = config.inducing.unwrap_or(n.min(20));
    if m > n {
        return Err(Error::invalid(format!("inducing count {m} exceeds the number of observations {n}")));
    }
    let obj = ElboObjective::new(dataset, graph, config, m)?;
    let mut params = obj.initial(dataset)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_0f_e1b0);
    let mut state = OptimizerState::new(&params, config.adam());
    let mut history = Vec::with_capacity(config.iterations + 1);
    let mut last_good = params.clone();
    for it in 0..=config.iterations {
        let eps = obj.draw(config.vi_samples, &mut rng);
        let ev = match obj.eval(&params, &eps) {
            Ok(ev) => ev,
            Err(e) => return Err(training_failure(it, e, Some(obj.model(&last_good, history)))),
        };
        history.push(HistoryEntry { iteration: it, objective: ev.elbo, stress: ev.stress });
        last_good = params.clone();
        if it == config.iterations {
            break;
        }
        if let Err(e) = state.step(&mut params, &ev.grad.scale(-1.0)) {
            return Err(training_failure(it, e, Some(obj.model(&last_good, history))));
        }
    }
    Ok(obj.model(&last_good, history))
}
