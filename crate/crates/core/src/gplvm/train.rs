use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::backcon::{fit_weights, latents_from, weights_backward};
use super::objective::{distortion_grad, gamma_log_prior, log_marginal_grad, log_prior_grad, stress_grad, Distortion};
use super::{
    bc_kernel_matrix, BackConstraint, Geometry, GphlvmModel, HistoryEntry, InitMethod, Regularizer, TrainConfig,
    TrainMode,
};
use crate::error::{Error, Result};
use crate::graphtax::{LabeledDataset, TaxonomyGraph};
use crate::kernels::{KernelSpec, LatentKernel};
use crate::manifold::{tangent_basis, LorentzPoint};
use crate::optim::{AdamConfig, OptimizerState, ProductGrad, ProductParam};

/// Scale of the tangent noise that separates coincident initial latents.
const TIE_BREAK: f64 = 1e-4;

/// Trains with the algorithm selected by `config.mode` and `config.regularizer`.
pub fn train(dataset: &LabeledDataset, graph: &TaxonomyGraph, config: &TrainConfig) -> Result<GphlvmModel> {
    match (config.mode, config.regularizer) {
        (TrainMode::Variational, _) => super::train_variational(dataset, graph, config),
        (TrainMode::Map, Regularizer::BcStress) => train_back_constrained(dataset, graph, config),
        (TrainMode::Map, _) => train_map(dataset, graph, config),
    }
}

pub(crate) fn check_inputs(dataset: &LabeledDataset, graph: &TaxonomyGraph, config: &TrainConfig) -> Result<()> {
    config.validate()?;
    if dataset.len() < 2 {
        return Err(Error::invalid("training needs at least two observations"));
    }
    if let Some(c) = dataset.classes().iter().find(|c| **c >= graph.len()) {
        return Err(Error::invalid(format!("class index {c} is not a node of the graph")));
    }
    if dataset.classes().iter().all(|c| *c == dataset.classes()[0]) {
        log::warn!("all observations share one class; stress only pulls the latents together");
    }
    Ok(())
}

/// Initial per-dimension noise variances: a tenth of the empirical variance.
pub(crate) fn initial_noise(y: &DMatrix<f64>) -> Vec<f64> {
    let n = y.nrows() as f64;
    (0..y.ncols())
        .map(|d| {
            let c = y.column(d);
            let mean = c.mean();
            let var = c.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            (0.1 * var).max(1e-6)
        })
        .collect()
}

fn random_tangent(geometry: Geometry, x: &DVector<f64>, scale: f64, rng: &mut ChaCha8Rng) -> DVector<f64> {
    match geometry {
        Geometry::Euclidean => DVector::from_fn(x.len(), |_, _| scale * rng.sample::<f64, _>(StandardNormal)),
        Geometry::Lorentz => tangent_basis(&LorentzPoint::from_ambient_unchecked(x.clone()))
            .into_iter()
            .fold(DVector::zeros(x.len()), |acc, e| acc + e * (scale * rng.sample::<f64, _>(StandardNormal))),
    }
}

pub(crate) fn random_latents(geometry: Geometry, q: usize, n: usize, scale: f64, rng: &mut ChaCha8Rng) -> Vec<DVector<f64>> {
    (0..n)
        .map(|_| {
            let u = DVector::from_fn(q, |_, _| scale * rng.sample::<f64, _>(StandardNormal));
            geometry.from_origin_tangent(&u)
        })
        .collect()
}

/// Packs latents into the hyperbolic block (Lorentz) or the head of the
/// Euclidean block.
fn latent_param(geometry: Geometry, x: &[DVector<f64>], tail: &[f64], names: Vec<String>) -> ProductParam {
    let (hyp, head) = match geometry {
        Geometry::Lorentz => (x.iter().map(|p| LorentzPoint::from_ambient_unchecked(p.clone())).collect(), vec![]),
        Geometry::Euclidean => (vec![], x.iter().flat_map(|p| p.iter().copied()).collect::<Vec<_>>()),
    };
    let mut e = head;
    e.extend_from_slice(tail);
    let mut all_names: Vec<String> = match geometry {
        Geometry::Lorentz => vec![],
        Geometry::Euclidean => (0..x.len())
            .flat_map(|n| (0..x[n].len()).map(move |k| format!("latent[{n}][{k}]")))
            .collect(),
    };
    all_names.extend(names);
    ProductParam::new(hyp, DVector::from_vec(e)).with_names("latent", all_names)
}

fn unpack_latents(geometry: Geometry, q: usize, n: usize, p: &ProductParam) -> Vec<DVector<f64>> {
    match geometry {
        Geometry::Lorentz => p.hyperbolic.iter().map(|x| x.coords().clone()).collect(),
        Geometry::Euclidean => (0..n).map(|i| p.euclidean.rows(i * q, q).into_owned()).collect(),
    }
}

fn latent_grad(geometry: Geometry, grads: Vec<DVector<f64>>, tail: Vec<f64>) -> ProductGrad {
    match geometry {
        Geometry::Lorentz => ProductGrad { hyperbolic: grads, euclidean: DVector::from_vec(tail) },
        Geometry::Euclidean => {
            let mut e: Vec<f64> = grads.iter().flat_map(|g| g.iter().copied()).collect();
            e.extend(tail);
            ProductGrad { hyperbolic: vec![], euclidean: DVector::from_vec(e) }
        }
    }
}

/// Minimizes the stress of the latents alone.
fn minimize_stress(
    geometry: Geometry,
    q: usize,
    x: Vec<DVector<f64>>,
    classes: &[usize],
    graph: &TaxonomyGraph,
    steps: usize,
    lr: f64,
) -> Result<Vec<DVector<f64>>> {
    let n = x.len();
    let mut p = latent_param(geometry, &x, &[], vec![]);
    let mut state = OptimizerState::new(&p, AdamConfig::with_lr(lr));
    for _ in 0..steps {
        let (_, g) = stress_grad(geometry, &unpack_latents(geometry, q, n, &p), classes, graph)?;
        state.step(&mut p, &latent_grad(geometry, g, vec![]))?;
    }
    Ok(unpack_latents(geometry, q, n, &p))
}

/// Starting latents per `config.init`: random points (seeded), optionally
/// refined by stress minimization and separated by a small tangent jitter.
///
/// In the Lorentz model the stress is first minimized over origin tangent
/// coordinates (a flat embedding), which is then mapped onto the hyperboloid
/// and refined there. Starting directly on the hyperboloid gets trapped in
/// folded configurations far more often in two dimensions.
pub fn initial_latents(
    dataset: &LabeledDataset,
    graph: &TaxonomyGraph,
    config: &TrainConfig,
) -> Result<Vec<DVector<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (geometry, q) = (config.geometry, config.latent_dim);
    let (steps, lr) = (config.init_steps, config.init_learning_rate);
    let classes = dataset.classes();
    match config.init {
        InitMethod::Random => Ok(random_latents(geometry, q, dataset.len(), config.init_scale, &mut rng)),
        InitMethod::StressMin => {
            let flat = random_latents(Geometry::Euclidean, q, dataset.len(), config.init_scale, &mut rng);
            let flat = minimize_stress(Geometry::Euclidean, q, flat, classes, graph, steps, lr)?;
            let x = match geometry {
                Geometry::Euclidean => flat,
                Geometry::Lorentz => {
                    let x = flat.iter().map(|u| geometry.from_origin_tangent(u)).collect();
                    minimize_stress(geometry, q, x, classes, graph, steps, lr)?
                }
            };
            Ok(x.into_iter()
                .map(|p| {
                    let v = random_tangent(geometry, &p, TIE_BREAK, &mut rng);
                    geometry.exp(&p, &v)
                })
                .collect())
        }
    }
}

/// Objective `log p(Y|X) + log p(X) + log p(kappa) - gamma * reg(X)` over
/// either free latents or back-constraint weights.
pub struct MapObjective<'a> {
    pub geometry: Geometry,
    pub q: usize,
    pub y: &'a DMatrix<f64>,
    pub classes: &'a [usize],
    pub graph: &'a TaxonomyGraph,
    pub config: &'a TrainConfig,
    pub kernel: LatentKernel,
    /// Back-constraint kernel matrix when the latents are parameterized by weights.
    pub kbc: Option<DMatrix<f64>>,
}

pub struct MapEval {
    pub total: f64,
    pub map: f64,
    pub stress: f64,
    pub grad: ProductGrad,
}

impl<'a> MapObjective<'a> {
    /// Objective over free latents, or over back-constraint weights when
    /// `regularizer` is `bc_stress`.
    pub fn new(dataset: &'a LabeledDataset, graph: &'a TaxonomyGraph, config: &'a TrainConfig) -> Result<Self> {
        let kbc = match config.regularizer {
            Regularizer::BcStress => {
                Some(bc_kernel_matrix(dataset.observations(), dataset.classes(), graph, &config.back_constraint)?)
            }
            _ => None,
        };
        objective(dataset, graph, config, kbc)
    }

    fn n(&self) -> usize {
        self.y.nrows()
    }

    fn hyper_names(&self) -> Vec<String> {
        let mut v = vec!["log_lengthscale".to_string(), "log_variance".to_string()];
        v.extend((0..self.y.ncols()).map(|d| format!("log_noise[{d}]")));
        v
    }

    fn hyper_tail(kernel: &KernelSpec, noise: &[f64]) -> Vec<f64> {
        let mut t = vec![kernel.lengthscale.ln(), kernel.variance.ln()];
        t.extend(noise.iter().map(|s| s.ln()));
        t
    }

    pub fn pack(&self, latents: &[DVector<f64>], weights: Option<&DMatrix<f64>>, kernel: &KernelSpec, noise: &[f64]) -> ProductParam {
        let tail = Self::hyper_tail(kernel, noise);
        match weights {
            None => latent_param(self.geometry, latents, &tail, self.hyper_names()),
            Some(w) => {
                let mut e: Vec<f64> = w.iter().copied().collect();
                e.extend(tail);
                let mut names: Vec<String> = (0..w.ncols())
                    .flat_map(|m| (0..w.nrows()).map(move |q| format!("weight[{q}][{m}]")))
                    .collect();
                names.extend(self.hyper_names());
                ProductParam::euclidean_only(DVector::from_vec(e)).with_names("latent", names)
            }
        }
    }

    fn hyper_offset(&self) -> usize {
        match (&self.kbc, self.geometry) {
            (Some(_), _) => self.q * self.n(),
            (None, Geometry::Euclidean) => self.q * self.n(),
            (None, Geometry::Lorentz) => 0,
        }
    }

    pub fn weights(&self, p: &ProductParam) -> Option<DMatrix<f64>> {
        self.kbc.as_ref().map(|_| DMatrix::from_column_slice(self.q, self.n(), &p.euclidean.as_slice()[..self.q * self.n()]))
    }

    pub fn latents(&self, p: &ProductParam) -> Vec<DVector<f64>> {
        match &self.kbc {
            Some(k) => latents_from(self.geometry, &self.weights(p).expect("weights"), k),
            None => unpack_latents(self.geometry, self.q, self.n(), p),
        }
    }

    /// Kernel hyperparameters and noise variances encoded in `p`.
    pub fn hypers(&self, p: &ProductParam) -> (f64, f64, Vec<f64>) {
        let h = &p.euclidean.as_slice()[self.hyper_offset()..];
        (h[0].exp(), h[1].exp(), h[2..].iter().map(|v| v.exp()).collect())
    }

    pub fn eval(&self, p: &ProductParam) -> Result<MapEval> {
        let (kappa, s2, noise) = self.hypers(p);
        if noise.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Numerical(format!("noise variances left the valid range: {noise:?}")));
        }
        let mut kernel = self.kernel.clone();
        kernel.set_hyper(kappa, s2)?;
        let x = self.latents(p);

        let lm = log_marginal_grad(self.y, &x, &kernel, &noise, self.config.jitter)?;
        let (lp, gp) = log_prior_grad(self.geometry, &x, self.config.prior_alpha);
        let (stress, gs) = stress_grad(self.geometry, &x, self.classes, self.graph)?;
        let gamma = self.config.gamma;
        let (reg, greg) = match self.config.regularizer {
            Regularizer::None => (0.0, None),
            Regularizer::Stress | Regularizer::BcStress => (stress, Some(gs)),
            Regularizer::Distortion => {
                let v = Distortion::Vanilla { eps: self.config.distortion_eps };
                let (r, g) = distortion_grad(self.geometry, &x, self.classes, self.graph, v)?;
                (r, Some(g))
            }
            Regularizer::ModifiedDistortion => {
                let v = Distortion::Modified { lambda1: self.config.lambda1, lambda2: self.config.lambda2 };
                let (r, g) = distortion_grad(self.geometry, &x, self.classes, self.graph, v)?;
                (r, Some(g))
            }
        };
        let (lk, dlk) = match self.config.gamma_prior {
            Some(prior) => gamma_log_prior(prior, kappa),
            None => (0.0, 0.0),
        };

        let mut gx: Vec<DVector<f64>> = lm.dx.iter().zip(&gp).map(|(a, b)| a + b).collect();
        if let Some(g) = greg {
            for (a, b) in gx.iter_mut().zip(&g) {
                *a -= b * gamma;
            }
        }
        let mut tail = vec![lm.d_log_lengthscale + dlk, lm.d_log_variance];
        tail.extend(&lm.d_log_noise);
        let grad = match &self.kbc {
            None => latent_grad(self.geometry, gx, tail),
            Some(k) => {
                let w = self.weights(p).expect("weights");
                let gw = weights_backward(self.geometry, &w, k, &gx);
                let mut e: Vec<f64> = gw.iter().copied().collect();
                e.extend(tail);
                ProductGrad { hyperbolic: vec![], euclidean: DVector::from_vec(e) }
            }
        };
        let map = lm.value + lp;
        Ok(MapEval { total: map + lk - gamma * reg, map, stress, grad })
    }

    pub fn model(&self, p: &ProductParam, history: Vec<HistoryEntry>) -> Result<GphlvmModel> {
        let (kappa, s2, noise) = self.hypers(p);
        let mut kernel = self.kernel.spec().clone();
        kernel.lengthscale = kappa;
        kernel.variance = s2;
        let bc = match (&self.kbc, self.weights(p)) {
            (Some(_), Some(w)) => Some(BackConstraint::new(w, self.config.back_constraint, self.graph)?),
            _ => None,
        };
        Ok(GphlvmModel {
            geometry: self.geometry,
            latent_dim: self.q,
            latents: super::io::canonical(self.geometry, self.latents(p)),
            kernel,
            noise,
            prior_alpha: self.config.prior_alpha,
            bc,
            variational: None,
            train_config: self.config.clone(),
            observations: self.y.clone(),
            classes: self.classes.iter().map(|c| self.graph.id(*c).to_string()).collect(),
            history,
        })
    }
}

pub(crate) fn training_failure(iteration: usize, source: Error, last_good: Option<GphlvmModel>) -> Error {
    Error::Training { iteration, source: Box::new(source), last_good: last_good.map(Box::new) }
}

fn run(obj: &MapObjective, mut params: ProductParam) -> Result<GphlvmModel> {
    let mut state = OptimizerState::new(&params, obj.config.adam());
    let mut history = Vec::with_capacity(obj.config.iterations + 1);
    let fail = |it: usize, e: Error, good: &ProductParam, h: &[HistoryEntry]| {
        training_failure(it, e, obj.model(good, h.to_vec()).ok())
    };
    let mut last_good = params.clone();
    for it in 0..=obj.config.iterations {
        let ev = match obj.eval(&params) {
            Ok(ev) => ev,
            Err(e) => return Err(fail(it, e, &last_good, &history)),
        };
        history.push(HistoryEntry { iteration: it, objective: ev.map, stress: ev.stress });
        last_good = params.clone();
        if it == obj.config.iterations {
            break;
        }
        if let Err(e) = state.step(&mut params, &ev.grad.scale(-1.0)) {
            return Err(fail(it, e, &last_good, &history));
        }
    }
    obj.model(&last_good, history)
}

fn objective<'a>(
    dataset: &'a LabeledDataset,
    graph: &'a TaxonomyGraph,
    config: &'a TrainConfig,
    kbc: Option<DMatrix<f64>>,
) -> Result<MapObjective<'a>> {
    Ok(MapObjective {
        geometry: config.geometry,
        q: config.latent_dim,
        y: dataset.observations(),
        classes: dataset.classes(),
        graph,
        config,
        kernel: LatentKernel::new(&config.kernel_spec(), config.latent_dim)?,
        kbc,
    })
}

/// MAP training of free latents jointly with kernel hyperparameters and
/// per-dimension noise variances.
pub fn train_map(dataset: &LabeledDataset, graph: &TaxonomyGraph, config: &TrainConfig) -> Result<GphlvmModel> {
    check_inputs(dataset, graph, config)?;
    if config.regularizer == Regularizer::BcStress {
        return Err(Error::invalid("regularizer bc_stress requires back-constrained training"));
    }
    let obj = objective(dataset, graph, config, None)?;
    let x0 = initial_latents(dataset, graph, config)?;
    let p0 = obj.pack(&x0, None, &config.kernel_spec(), &initial_noise(dataset.observations()));
    run(&obj, p0)
}

/// MAP training where latents are the back-constraint mapping of the
/// observations; optimizes the weights and hyperparameters.
pub fn train_back_constrained(
    dataset: &LabeledDataset,
    graph: &TaxonomyGraph,
    config: &TrainConfig,
) -> Result<GphlvmModel> {
    check_inputs(dataset, graph, config)?;
    if config.regularizer != Regularizer::BcStress {
        return Err(Error::invalid("back-constrained training requires regularizer bc_stress"));
    }
    let kbc = bc_kernel_matrix(dataset.observations(), dataset.classes(), graph, &config.back_constraint)?;
    let x0 = initial_latents(dataset, graph, config)?;
    let w0 = fit_weights(config.geometry, &kbc, &x0)?;
    let obj = objective(dataset, graph, config, Some(kbc))?;
    let p0 = obj.pack(&x0, Some(&w0), &config.kernel_spec(), &initial_noise(dataset.observations()));
    run(&obj, p0)
}
