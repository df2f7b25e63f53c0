//! Riemannian Adam on a product of Lorentz points and a Euclidean block.
//!
//! Each hyperbolic point keeps a tangent first moment and a scalar second
//! moment (its squared tangent norm). After the exp-map update the first
//! moment is transported to the new iterate, so it stays tangent and the
//! update is equivariant under isometries. With an empty hyperbolic block the
//! step is exactly the usual Adam update.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::manifold::{tangent_basis, LorentzPoint, TangentVector};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 0.01, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |b: f64| (0.0..1.0).contains(&b);
        if !(self.lr > 0.0 && self.lr.is_finite()) || !unit(self.beta1) || !unit(self.beta2) || !(self.eps > 0.0) {
            return Err(Error::param(format!("invalid Adam settings {self:?}")));
        }
        Ok(())
    }
}

/// Parameters on `(L^Q)^n x R^m`. Names are used in error messages.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductParam {
    pub hyperbolic: Vec<LorentzPoint>,
    pub euclidean: DVector<f64>,
    pub hyperbolic_label: String,
    pub euclidean_names: Vec<String>,
}

impl ProductParam {
    pub fn new(hyperbolic: Vec<LorentzPoint>, euclidean: DVector<f64>) -> Self {
        let names = (0..euclidean.len()).map(|i| format!("theta[{i}]")).collect();
        Self { hyperbolic, euclidean, hyperbolic_label: "x".into(), euclidean_names: names }
    }

    pub fn euclidean_only(euclidean: DVector<f64>) -> Self {
        Self::new(Vec::new(), euclidean)
    }

    pub fn with_names(mut self, hyperbolic_label: &str, euclidean_names: Vec<String>) -> Self {
        assert_eq!(euclidean_names.len(), self.euclidean.len());
        self.hyperbolic_label = hyperbolic_label.into();
        self.euclidean_names = euclidean_names;
        self
    }

    pub fn zero_grad(&self) -> ProductGrad {
        ProductGrad {
            hyperbolic: self.hyperbolic.iter().map(|x| DVector::zeros(x.dim() + 1)).collect(),
            euclidean: DVector::zeros(self.euclidean.len()),
        }
    }
}

/// Gradient on a [`ProductParam`]: Riemannian (tangent, ambient coordinates)
/// for the hyperbolic block, plain partials for the Euclidean block.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductGrad {
    pub hyperbolic: Vec<DVector<f64>>,
    pub euclidean: DVector<f64>,
}

impl ProductGrad {
    /// Converts ambient Euclidean partials of the hyperbolic block into
    /// Riemannian gradients.
    pub fn from_ambient(params: &ProductParam, ambient: Vec<DVector<f64>>, euclidean: DVector<f64>) -> Self {
        let hyperbolic = params
            .hyperbolic
            .iter()
            .zip(&ambient)
            .map(|(x, g)| riemannian_gradient(x, g).into_vec())
            .collect();
        Self { hyperbolic, euclidean }
    }

    pub fn scale(mut self, s: f64) -> Self {
        for g in &mut self.hyperbolic {
            *g *= s;
        }
        self.euclidean *= s;
        self
    }
}

/// `proj_x(J g)` with `J = diag(-1, 1, .., 1)`.
pub fn riemannian_gradient(x: &LorentzPoint, g: &DVector<f64>) -> TangentVector {
    let mut jg = g.clone();
    jg[0] = -jg[0];
    TangentVector::new_unchecked(x.clone(), x.project(&jg))
}

#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub config: AdamConfig,
    t: u64,
    m_hyp: Vec<DVector<f64>>,
    v_hyp: Vec<f64>,
    m_euc: DVector<f64>,
    v_euc: DVector<f64>,
}

impl OptimizerState {
    pub fn new(params: &ProductParam, config: AdamConfig) -> Self {
        Self {
            config,
            t: 0,
            m_hyp: params.hyperbolic.iter().map(|x| DVector::zeros(x.dim() + 1)).collect(),
            v_hyp: vec![0.0; params.hyperbolic.len()],
            m_euc: DVector::zeros(params.euclidean.len()),
            v_euc: DVector::zeros(params.euclidean.len()),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// First moments of the hyperbolic block, tangent at the current iterates.
    pub fn hyperbolic_moments(&self) -> &[DVector<f64>] {
        &self.m_hyp
    }

    /// One descent step on `params` along `-grads`. A non-finite gradient
    /// rejects the step and leaves both state and parameters untouched.
    pub fn step(&mut self, params: &mut ProductParam, grads: &ProductGrad) -> Result<()> {
        if grads.hyperbolic.len() != params.hyperbolic.len() {
            return Err(Error::Dimension { expected: params.hyperbolic.len(), got: grads.hyperbolic.len() });
        }
        if grads.euclidean.len() != params.euclidean.len() {
            return Err(Error::Dimension { expected: params.euclidean.len(), got: grads.euclidean.len() });
        }
        for (i, (g, x)) in grads.hyperbolic.iter().zip(&params.hyperbolic).enumerate() {
            if g.len() != x.dim() + 1 {
                return Err(Error::Dimension { expected: x.dim() + 1, got: g.len() });
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite gradient for {}[{i}]",
                    params.hyperbolic_label
                )));
            }
        }
        if let Some(k) = grads.euclidean.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite gradient for {}", params.euclidean_names[k])));
        }

        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        self.t += 1;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);

        for i in 0..params.euclidean.len() {
            let g = grads.euclidean[i];
            self.m_euc[i] = beta1 * self.m_euc[i] + (1.0 - beta1) * g;
            self.v_euc[i] = beta2 * self.v_euc[i] + (1.0 - beta2) * g * g;
            let denom = (self.v_euc[i] / bc2).sqrt() + eps;
            params.euclidean[i] -= lr * (self.m_euc[i] / bc1) / denom;
        }

        for (i, x) in params.hyperbolic.iter_mut().enumerate() {
            let g = &grads.hyperbolic[i];
            let m = &self.m_hyp[i] * beta1 + g * (1.0 - beta1);
            self.v_hyp[i] = beta2 * self.v_hyp[i] + (1.0 - beta2) * crate::manifold::mdot(g, g).max(0.0);
            let denom = (self.v_hyp[i] / bc2).sqrt() + eps;
            let dir = &m * (-lr / (bc1 * denom));
            let next = x.exp(&dir).reproject();
            self.m_hyp[i] = next.project(&x.transport(&next, &m));
            *x = next;
        }
        Ok(())
    }
}

/// Outcome of comparing an analytic gradient with finite differences.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub rel_error: f64,
}

/// Central finite differences along an orthonormal tangent basis at every
/// hyperbolic point (perturbed through the exp map) and along coordinate
/// axes for the Euclidean block. The relative error is
/// `|a - n| / max(|a|, |n|, 1e-10)` over the stacked components.
pub fn check_gradient(f: impl Fn(&ProductParam) -> f64, params: &ProductParam, grad: &ProductGrad, eps: f64) -> GradCheck {
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    for (i, x) in params.hyperbolic.iter().enumerate() {
        for e in tangent_basis(x) {
            analytic.push(crate::manifold::mdot(&grad.hyperbolic[i], &e));
            let mut p = params.clone();
            p.hyperbolic[i] = x.exp(&(&e * eps));
            let up = f(&p);
            p.hyperbolic[i] = x.exp(&(&e * -eps));
            let down = f(&p);
            numeric.push((up - down) / (2.0 * eps));
        }
    }
    for k in 0..params.euclidean.len() {
        analytic.push(grad.euclidean[k]);
        let mut p = params.clone();
        p.euclidean[k] += eps;
        let up = f(&p);
        p.euclidean[k] -= 2.0 * eps;
        let down = f(&p);
        numeric.push((up - down) / (2.0 * eps));
    }
    let a = DVector::from_vec(analytic.clone());
    let n = DVector::from_vec(numeric.clone());
    let rel_error = (&a - &n).norm() / a.norm().max(n.norm()).max(1e-10);
    GradCheck { analytic, numeric, rel_error }
}
