use serde::{Deserialize, Serialize};

use super::Geometry;
use crate::error::{Error, Result};
use crate::graphtax::Builtin;
use crate::kernels::{KernelKind, KernelSpec, DEFAULT_JITTER};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularizer {
    None,
    Stress,
    BcStress,
    Distortion,
    ModifiedDistortion,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMethod {
    StressMin,
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    Map,
    Variational,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

/// Kernels of the back-constraint mapping: a Euclidean SE kernel on
/// observations times a graph Matérn kernel on classes, scaled by `variance`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackConstraintConfig {
    pub obs_lengthscale: f64,
    pub graph_lengthscale: f64,
    pub graph_smoothness: f64,
    pub variance: f64,
}

impl Default for BackConstraintConfig {
    fn default() -> Self {
        Self { obs_lengthscale: 3.0, graph_lengthscale: 1.5, graph_smoothness: 2.5, variance: 2.0 }
    }
}

/// Everything that determines a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub geometry: Geometry,
    pub latent_dim: usize,
    /// Latent kernel; defaults to the SE kernel of the geometry.
    pub kernel: Option<KernelSpec>,
    pub mode: TrainMode,
    pub regularizer: Regularizer,
    /// Scale of the regularizer in the objective.
    pub gamma: f64,
    pub iterations: usize,
    /// Defaults to 0.01 (Euclidean) or 0.025 (Lorentz).
    pub learning_rate: Option<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
    pub gamma_prior: Option<GammaPrior>,
    pub init: InitMethod,
    pub init_steps: usize,
    pub init_learning_rate: f64,
    /// Standard deviation of the random initialization in origin tangent coordinates.
    pub init_scale: f64,
    pub prior_alpha: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Denominator regularizer of the vanilla distortion loss.
    pub distortion_eps: f64,
    pub back_constraint: BackConstraintConfig,
    /// Number of inducing points for variational training (default min(N, 20)).
    pub inducing: Option<usize>,
    pub vi_samples: usize,
    /// Initial standard deviation of q(x_n) per tangent coordinate.
    pub vi_init_std: f64,
    pub jitter: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            geometry: Geometry::Lorentz,
            latent_dim: 2,
            kernel: None,
            mode: TrainMode::Map,
            regularizer: Regularizer::Stress,
            gamma: 100.0,
            iterations: 1000,
            learning_rate: None,
            beta1: 0.9,
            beta2: 0.999,
            seed: 0,
            gamma_prior: None,
            init: InitMethod::StressMin,
            init_steps: 500,
            init_learning_rate: 0.1,
            init_scale: 1.0,
            prior_alpha: 1.0,
            lambda1: 0.01,
            lambda2: 10.0,
            distortion_eps: 0.1,
            back_constraint: BackConstraintConfig::default(),
            inducing: None,
            vi_samples: 8,
            vi_init_std: 0.1,
            jitter: DEFAULT_JITTER,
        }
    }
}

impl TrainConfig {
    pub fn kernel_spec(&self) -> KernelSpec {
        self.kernel
            .clone()
            .unwrap_or_else(|| KernelSpec::new(self.geometry.default_kernel(self.latent_dim), 1.0, 1.0))
    }

    pub fn lr(&self) -> f64 {
        self.learning_rate.unwrap_or(match self.geometry {
            Geometry::Euclidean => 0.01,
            Geometry::Lorentz => 0.025,
        })
    }

    pub fn adam(&self) -> crate::optim::AdamConfig {
        crate::optim::AdamConfig { lr: self.lr(), beta1: self.beta1, beta2: self.beta2, eps: 1e-8 }
    }

    /// Rejects inconsistent settings before any computation.
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be positive and finite, got {v}")))
            }
        };
        if self.latent_dim == 0 {
            return Err(Error::invalid("latent_dim must be at least 1"));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::invalid(format!("gamma must be non-negative, got {}", self.gamma)));
        }
        positive("prior_alpha", self.prior_alpha)?;
        positive("init_learning_rate", self.init_learning_rate)?;
        positive("init_scale", self.init_scale)?;
        positive("lambda1", self.lambda1)?;
        positive("lambda2", self.lambda2)?;
        positive("vi_init_std", self.vi_init_std)?;
        if !(self.distortion_eps >= 0.0) {
            return Err(Error::invalid("distortion_eps must be non-negative"));
        }
        if !(self.jitter >= 0.0) {
            return Err(Error::invalid("jitter must be non-negative"));
        }
        if let Some(p) = self.gamma_prior {
            positive("gamma_prior.shape", p.shape)?;
            positive("gamma_prior.rate", p.rate)?;
        }
        let bc = &self.back_constraint;
        positive("back_constraint.obs_lengthscale", bc.obs_lengthscale)?;
        positive("back_constraint.graph_lengthscale", bc.graph_lengthscale)?;
        positive("back_constraint.graph_smoothness", bc.graph_smoothness)?;
        positive("back_constraint.variance", bc.variance)?;
        self.adam().validate().map_err(|e| Error::invalid(e.to_string()))?;
        if self.vi_samples == 0 {
            return Err(Error::invalid("vi_samples must be at least 1"));
        }
        if self.inducing == Some(0) {
            return Err(Error::invalid("inducing must be at least 1"));
        }

        let kernel = self.kernel_spec();
        kernel.validate().map_err(|e| Error::invalid(e.to_string()))?;
        let kernel_ok = match (self.geometry, kernel.kind) {
            (Geometry::Euclidean, KernelKind::EuclideanSe) => true,
            (Geometry::Lorentz, KernelKind::HyperbolicL2Mc) => self.latent_dim == 2,
            (Geometry::Lorentz, KernelKind::HyperbolicL3) => self.latent_dim == 3,
            (Geometry::Lorentz, KernelKind::HyperbolicMatern) => matches!(self.latent_dim, 2 | 3),
            _ => false,
        };
        if !kernel_ok {
            return Err(Error::invalid(format!(
                "kernel {} is not available for {} geometry with latent_dim {}",
                kernel.kind, self.geometry, self.latent_dim
            )));
        }
        match (self.mode, self.regularizer) {
            (TrainMode::Variational, Regularizer::BcStress) => {
                Err(Error::invalid("back constraints are only available with mode = \"map\""))
            }
            _ => Ok(()),
        }
    }
}

/// Per-taxonomy hyperparameters of the original experiments.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TableDefaults {
    pub gamma: f64,
    pub learning_rate: f64,
    pub gamma_prior: Option<GammaPrior>,
    pub back_constraint: Option<BackConstraintConfig>,
}

/// Loss scale, learning rate, lengthscale prior and back-constraint kernels
/// used for a built-in taxonomy.
pub fn table_defaults(which: Builtin, geometry: Geometry, q: usize, regularizer: Regularizer) -> TableDefaults {
    let q3 = q >= 3;
    let (stress, bc, kd, kg) = match which {
        Builtin::Bimanual => (if q3 { 6000.0 } else { 1500.0 }, if q3 { 1200.0 } else { 1000.0 }, 3.0, 1.5),
        Builtin::Grasp => (if q3 { 6000.0 } else { 5500.0 }, if q3 { 3000.0 } else { 2000.0 }, 1.8, 1.5),
        Builtin::SupportPose => (if q3 { 10000.0 } else { 7000.0 }, if q3 { 8000.0 } else { 5000.0 }, 2.0, 0.8),
    };
    let learning_rate = match (geometry, which) {
        (Geometry::Euclidean, _) => 0.01,
        (Geometry::Lorentz, Builtin::Bimanual) => 0.025,
        (Geometry::Lorentz, _) => 0.05,
    };
    let is_bc = regularizer == Regularizer::BcStress;
    let gamma = match regularizer {
        Regularizer::None => 0.0,
        Regularizer::BcStress => bc,
        Regularizer::Distortion | Regularizer::ModifiedDistortion => 50.0,
        Regularizer::Stress => stress,
    };
    TableDefaults {
        gamma,
        learning_rate,
        gamma_prior: is_bc.then_some(GammaPrior { shape: 2.0, rate: 2.0 }),
        back_constraint: is_bc.then_some(BackConstraintConfig {
            obs_lengthscale: kd,
            graph_lengthscale: kg,
            graph_smoothness: 2.5,
            variance: 2.0,
        }),
    }
}
