//! Random feature map for the heat kernel on the hyperbolic plane.
//!
//! Each feature pairs a boundary direction `b` on the unit circle with a
//! frequency `s`. For a point `z` in the Poincaré disk the hyperbolic outer
//! product is `h = 1/2 log((1 - |z|^2) / |z - b|^2)` and the complex feature is
//! `sqrt(s tanh(pi s)) e^{(1 + 2 i s) h}`. Its real and imaginary parts form
//! a real feature vector, and inner products are cosine-normalized.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Directions and base frequencies; the actual frequency of feature `l` at
/// lengthscale `kappa` is `base_frequencies[l] / kappa`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McFeatureSet {
    pub directions: Vec<[f64; 2]>,
    pub base_frequencies: Vec<f64>,
    pub seed: u64,
}

/// How directions and frequencies are drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSampling {
    /// Independent uniform directions and half-normal frequencies.
    Iid,
    /// Frequencies drawn one per quantile stratum of the half-normal; each
    /// frequency is paired with an equally spaced, randomly rotated set of
    /// directions. Marginals are unchanged but the angular average is
    /// integrated almost exactly, which removes most anisotropy.
    #[default]
    Stratified,
}

impl McFeatureSet {
    pub fn sample(count: usize, seed: u64) -> Result<Self> {
        Self::sample_scheme(count, seed, FeatureSampling::Iid)
    }

    pub fn sample_scheme(count: usize, seed: u64, scheme: FeatureSampling) -> Result<Self> {
        if count == 0 {
            return Err(Error::param("mc_samples must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(match scheme {
            FeatureSampling::Iid => Self::sample_with(count, seed, &mut rng),
            FeatureSampling::Stratified => Self::stratified_with(count, seed, &mut rng),
        })
    }

    fn stratified_with<R: Rng + ?Sized>(count: usize, seed: u64, rng: &mut R) -> Self {
        use statrs::distribution::{ContinuousCDF, Normal};
        let n_dir = direction_count(count);
        let n_freq = count / n_dir;
        let normal = Normal::standard();
        let mut directions = Vec::with_capacity(count);
        let mut base_frequencies = Vec::with_capacity(count);
        for j in 0..n_freq {
            let p = (j as f64 + rng.random::<f64>()) / n_freq as f64;
            // Half-normal quantile.
            let s = normal.inverse_cdf(0.5 + 0.5 * p).max(0.0);
            let offset = rng.random::<f64>();
            for k in 0..n_dir {
                let theta = 2.0 * PI * (k as f64 + offset) / n_dir as f64;
                directions.push([theta.cos(), theta.sin()]);
                base_frequencies.push(s);
            }
        }
        Self { directions, base_frequencies, seed }
    }

    pub fn sample_with<R: Rng + ?Sized>(count: usize, seed: u64, rng: &mut R) -> Self {
        let mut directions = Vec::with_capacity(count);
        let mut base_frequencies = Vec::with_capacity(count);
        for _ in 0..count {
            let theta = 2.0 * PI * rng.random::<f64>();
            directions.push([theta.cos(), theta.sin()]);
            let s: f64 = rng.sample(StandardNormal);
            base_frequencies.push(s.abs());
        }
        Self { directions, base_frequencies, seed }
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn frequencies(&self, lengthscale: f64) -> Vec<f64> {
        self.base_frequencies.iter().map(|s| s / lengthscale).collect()
    }
}

/// Smallest divisor of `count` that is at least its square root, used as the
/// number of directions per frequency.
fn direction_count(count: usize) -> usize {
    (1..=count).find(|d| count % d == 0 && d * d >= count).unwrap_or(count)
}

/// `s tanh(pi s)` and its derivative.
#[inline]
fn spectral_weight(s: f64) -> (f64, f64) {
    let t = (PI * s).tanh();
    (s * t, t + PI * s * (1.0 - t * t))
}

/// Poincaré coordinates of an ambient point on the 2-d hyperboloid.
#[inline]
fn disk(x: &DVector<f64>) -> [f64; 2] {
    let d = 1.0 + x[0];
    [x[1] / d, x[2] / d]
}

/// Feature bank: several cosine-normalized blocks sharing directions, block
/// `i` using frequencies `base / (kappa * scale_i)` and weight `weight_i`.
#[derive(Clone, Debug)]
pub(crate) struct McBank {
    pub set: McFeatureSet,
    pub blocks: Vec<(f64, f64)>,
}

/// Unnormalized features of one block, their norm and the outer products `h`.
struct BlockFeatures {
    phi: Vec<f64>,
    h: Vec<f64>,
    norm: f64,
}

/// Per-feature frequency `s`, `sqrt(w(s))` and `w'(s) / (2 w(s))` of one block.
struct BlockConsts {
    s: Vec<f64>,
    sqrt_w: Vec<f64>,
    dlog_sqrt_w: Vec<f64>,
}

impl McBank {
    pub fn heat(set: McFeatureSet) -> Self {
        Self { set, blocks: vec![(1.0, 1.0)] }
    }

    fn width(&self) -> usize {
        2 * self.set.len() * self.blocks.len()
    }

    fn consts(&self, kappa: f64, scale: f64) -> BlockConsts {
        let l = self.set.len();
        let mut c = BlockConsts { s: Vec::with_capacity(l), sqrt_w: Vec::with_capacity(l), dlog_sqrt_w: Vec::with_capacity(l) };
        for &sh in &self.set.base_frequencies {
            let s = sh / (kappa * scale);
            let (w, wp) = spectral_weight(s);
            c.s.push(s);
            c.sqrt_w.push(w.sqrt());
            c.dlog_sqrt_w.push(if w > 0.0 { wp / (2.0 * w) } else { 0.0 });
        }
        c
    }

    fn block_raw(&self, z: [f64; 2], c: &BlockConsts) -> BlockFeatures {
        let l = self.set.len();
        let mut phi = vec![0.0; 2 * l];
        let r2 = z[0] * z[0] + z[1] * z[1];
        let log_one_minus = (1.0 - r2).ln();
        let mut h = Vec::with_capacity(l);
        let mut hmax = f64::NEG_INFINITY;
        for b in &self.set.directions {
            let d2 = (z[0] - b[0]).powi(2) + (z[1] - b[1]).powi(2);
            let hk = 0.5 * (log_one_minus - d2.ln());
            hmax = hmax.max(hk);
            h.push(hk);
        }
        // A common factor e^{hmax} cancels under cosine normalization.
        let mut sq = 0.0;
        for k in 0..l {
            let a = c.sqrt_w[k] * (h[k] - hmax).exp();
            let (sin, cos) = (2.0 * c.s[k] * h[k]).sin_cos();
            phi[k] = a * cos;
            phi[l + k] = a * sin;
            sq += a * a;
        }
        BlockFeatures { phi, h, norm: sq.sqrt() }
    }

    /// Normalized, block-weighted feature rows for ambient points.
    pub fn features(&self, xs: &[DVector<f64>], kappa: f64) -> DMatrix<f64> {
        let w = self.width();
        let bl = 2 * self.set.len();
        let consts: Vec<BlockConsts> = self.blocks.iter().map(|&(scale, _)| self.consts(kappa, scale)).collect();
        let mut out = DMatrix::zeros(xs.len(), w);
        for (i, x) in xs.iter().enumerate() {
            let z = disk(x);
            for (bi, &(_, weight)) in self.blocks.iter().enumerate() {
                let f = self.block_raw(z, &consts[bi]);
                let m = weight.sqrt() / f.norm;
                for k in 0..bl {
                    out[(i, bi * bl + k)] = f.phi[k] * m;
                }
            }
        }
        out
    }

    /// Backpropagates `dphi` (gradient w.r.t. the normalized features of
    /// each point) to ambient coordinates and to `log kappa`.
    pub fn features_backward(
        &self,
        xs: &[DVector<f64>],
        kappa: f64,
        dphi: &DMatrix<f64>,
    ) -> (Vec<DVector<f64>>, f64) {
        let l = self.set.len();
        let bl = 2 * l;
        let consts: Vec<BlockConsts> = self.blocks.iter().map(|&(scale, _)| self.consts(kappa, scale)).collect();
        let mut dlogk = 0.0;
        let mut dxs = Vec::with_capacity(xs.len());
        for (i, x) in xs.iter().enumerate() {
            let z = disk(x);
            let r2 = z[0] * z[0] + z[1] * z[1];
            let one_minus = 1.0 - r2;
            let mut gz = [0.0; 2];
            for (bi, &(_, weight)) in self.blocks.iter().enumerate() {
                let c = &consts[bi];
                let f = self.block_raw(z, c);
                let sw = weight.sqrt();
                // Phi = sw * F / |F|, so dF = sw (dPhi - u (u . dPhi)) / |F| with u = F/|F|.
                let mut dot = 0.0;
                for k in 0..bl {
                    dot += f.phi[k] * dphi[(i, bi * bl + k)];
                }
                dot /= f.norm;
                let inv = sw / f.norm;
                for k in 0..l {
                    let b = self.set.directions[k];
                    let s = c.s[k];
                    let h = f.h[k];
                    let fc = f.phi[k];
                    let fs = f.phi[l + k];
                    let dfc = (dphi[(i, bi * bl + k)] - fc / f.norm * dot) * inv;
                    let dfs = (dphi[(i, bi * bl + l + k)] - fs / f.norm * dot) * inv;
                    let dz = [z[0] - b[0], z[1] - b[1]];
                    let d2 = dz[0] * dz[0] + dz[1] * dz[1];
                    let dh = dfc * (fc - 2.0 * s * fs) + dfs * (fs + 2.0 * s * fc);
                    for a in 0..2 {
                        gz[a] += dh * (-z[a] / one_minus - dz[a] / d2);
                    }
                    let r = c.dlog_sqrt_w[k];
                    let ds = dfc * (fc * r - 2.0 * h * fs) + dfs * (fs * r + 2.0 * h * fc);
                    dlogk -= ds * s;
                }
            }
            let d = 1.0 + x[0];
            let mut g = DVector::zeros(3);
            g[0] = -(gz[0] * z[0] + gz[1] * z[1]) / d;
            g[1] = gz[0] / d;
            g[2] = gz[1] / d;
            dxs.push(g);
        }
        (dxs, dlogk)
    }
}
