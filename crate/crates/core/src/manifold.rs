//! Lorentz (hyperboloid) model of hyperbolic space with curvature -1.
//!
//! Points are stored in ambient Minkowski coordinates `(x0, x1, .., xQ)` and
//! satisfy `<x, x>_L = -1`, `x0 >= 1`. The origin is `mu0 = (1, 0, .., 0)`.
//! The Poincaré ball is used for plotting and for the two-dimensional kernel
//! feature map; [`to_poincare`] / [`from_poincare`] convert between the two.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Tangent vectors with Minkowski norm below this are treated as zero.
pub const TANGENT_EPS: f64 = 1e-12;

/// Relative tolerance used when validating hyperboloid and tangency constraints.
pub const CONSTRAINT_TOL: f64 = 1e-9;

/// `-u0 v0 + sum_i ui vi`.
pub fn minkowski_inner(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Dimension {
            expected: u.len(),
            got: v.len(),
        });
    }
    if u.len() < 2 {
        return Err(Error::Dimension {
            expected: 2,
            got: u.len(),
        });
    }
    Ok(dot(u, v))
}

#[inline]
fn dot(u: &[f64], v: &[f64]) -> f64 {
    let mut s = -u[0] * v[0];
    for i in 1..u.len() {
        s += u[i] * v[i];
    }
    s
}

/// Minkowski inner product without length checks.
#[inline]
pub fn mdot(u: &DVector<f64>, v: &DVector<f64>) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    dot(u.as_slice(), v.as_slice())
}

/// A point on the upper sheet of the hyperboloid.
#[derive(Clone, Debug, PartialEq)]
pub struct LorentzPoint {
    coords: DVector<f64>,
}

impl LorentzPoint {
    /// Validates `<x,x>_L = -1` (relative to `x0^2`) and `x0 >= 1`.
    pub fn new(coords: DVector<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::Dimension {
                expected: 2,
                got: coords.len(),
            });
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::domain("non-finite Lorentz coordinates"));
        }
        let x0 = coords[0];
        let self_inner = mdot(&coords, &coords);
        if x0 < 1.0 - CONSTRAINT_TOL || (self_inner + 1.0).abs() > CONSTRAINT_TOL * x0 * x0 {
            return Err(Error::domain(format!(
                "point is not on the hyperboloid (<x,x> = {self_inner}, x0 = {x0})"
            )));
        }
        Ok(Self { coords })
    }

    /// Wraps ambient coordinates that are known to lie on the hyperboloid.
    pub fn from_ambient_unchecked(coords: DVector<f64>) -> Self {
        Self { coords }
    }

    pub fn origin(q: usize) -> Self {
        let mut coords = DVector::zeros(q + 1);
        coords[0] = 1.0;
        Self { coords }
    }

    /// Lifts spatial coordinates onto the hyperboloid: `x0 = sqrt(1 + |z|^2)`.
    pub fn lift(spatial: &[f64]) -> Self {
        let sq: f64 = spatial.iter().map(|z| z * z).sum();
        let mut coords = DVector::zeros(spatial.len() + 1);
        coords[0] = (1.0 + sq).sqrt();
        coords.as_mut_slice()[1..].copy_from_slice(spatial);
        Self { coords }
    }

    /// Latent dimension `Q` (ambient dimension minus one).
    pub fn dim(&self) -> usize {
        self.coords.len() - 1
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    pub fn into_coords(self) -> DVector<f64> {
        self.coords
    }

    pub fn spatial(&self) -> &[f64] {
        &self.coords.as_slice()[1..]
    }

    /// Recomputes the time coordinate from the spatial ones.
    pub fn reproject(&self) -> Self {
        Self::lift(self.spatial())
    }

    pub fn distance(&self, other: &LorentzPoint) -> f64 {
        lorentz_distance(&self.coords, &other.coords)
    }

    /// `exp_x(u)` for an ambient tangent vector `u`.
    pub fn exp(&self, u: &DVector<f64>) -> LorentzPoint {
        let n2 = mdot(u, u);
        if n2 <= TANGENT_EPS * TANGENT_EPS {
            return self.clone();
        }
        let n = n2.sqrt();
        LorentzPoint {
            coords: &self.coords * n.cosh() + u * (n.sinh() / n),
        }
    }

    /// `log_x(y)` as an ambient tangent vector at `self`.
    pub fn log(&self, y: &LorentzPoint) -> DVector<f64> {
        let x = &self.coords;
        let delta = cosh_dist_minus_one(x, &y.coords);
        let d = acosh_one_plus(delta);
        if d < TANGENT_EPS {
            return DVector::zeros(x.len());
        }
        let sinh_d = (delta * (delta + 2.0)).sqrt();
        // y + <x,y> x, written to avoid cancellation for nearby points.
        let v = (&y.coords - x) - x * delta;
        v * (d / sinh_d)
    }

    /// Parallel transport of the tangent vector `v` from `self` to `y`.
    pub fn transport(&self, y: &LorentzPoint, v: &DVector<f64>) -> DVector<f64> {
        let x = &self.coords;
        let denom = 1.0 - mdot(x, &y.coords);
        let coef = mdot(&y.coords, v) / denom;
        v + (x + &y.coords) * coef
    }

    /// Orthogonal projection of an ambient vector onto the tangent space.
    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        v + &self.coords * mdot(&self.coords, v)
    }

    pub fn to_poincare(&self) -> PoincarePoint {
        let s = 1.0 / (self.coords[0] + 1.0);
        PoincarePoint {
            coords: DVector::from_iterator(self.dim(), self.spatial().iter().map(|v| v * s)),
        }
    }
}

/// `alpha - 1` where `alpha = -<x,y>_L = cosh(dist)`, clamped at zero.
///
/// For nearby points the difference form `<x-y, x-y>_L / 2` is used, which
/// does not suffer the cancellation of `-<x,y> - 1`.
pub(crate) fn cosh_dist_minus_one(x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    let alpha = -mdot(x, y);
    if alpha > 2.0 {
        return alpha - 1.0;
    }
    let mut m = -(x[0] - y[0]) * (x[0] - y[0]);
    for i in 1..x.len() {
        let d = x[i] - y[i];
        m += d * d;
    }
    (0.5 * m).max(0.0)
}

/// `arcosh(1 + delta)` for `delta >= 0`.
#[inline]
pub(crate) fn acosh_one_plus(delta: f64) -> f64 {
    if delta > 1.0 {
        (1.0 + delta).acosh()
    } else {
        2.0 * (0.5 * delta).sqrt().asinh()
    }
}

/// Geodesic distance between ambient coordinate vectors on the hyperboloid.
pub fn lorentz_distance(x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    acosh_one_plus(cosh_dist_minus_one(x, y))
}

/// A vector in the tangent space at `base`.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector {
    base: LorentzPoint,
    vec: DVector<f64>,
}

impl TangentVector {
    /// Validates `<base, vec>_L = 0` relative to the magnitudes involved.
    pub fn new(base: LorentzPoint, vec: DVector<f64>) -> Result<Self> {
        if vec.len() != base.coords.len() {
            return Err(Error::Dimension {
                expected: base.coords.len(),
                got: vec.len(),
            });
        }
        let scale = base.coords.norm() * vec.norm().max(1.0);
        let ip = mdot(&base.coords, &vec);
        if ip.abs() > CONSTRAINT_TOL * scale {
            return Err(Error::domain(format!(
                "vector is not tangent at base (<x,v> = {ip})"
            )));
        }
        Ok(Self { base, vec })
    }

    pub(crate) fn new_unchecked(base: LorentzPoint, vec: DVector<f64>) -> Self {
        Self { base, vec }
    }

    pub fn zero(base: LorentzPoint) -> Self {
        let n = base.coords.len();
        Self {
            base,
            vec: DVector::zeros(n),
        }
    }

    pub fn base(&self) -> &LorentzPoint {
        &self.base
    }

    pub fn vec(&self) -> &DVector<f64> {
        &self.vec
    }

    pub fn into_vec(self) -> DVector<f64> {
        self.vec
    }

    /// Minkowski norm; tangent vectors are spacelike so this is real.
    pub fn norm(&self) -> f64 {
        mdot(&self.vec, &self.vec).max(0.0).sqrt()
    }

    pub fn inner(&self, other: &TangentVector) -> f64 {
        mdot(&self.vec, &other.vec)
    }
}

/// A point in the open unit ball.
#[derive(Clone, Debug, PartialEq)]
pub struct PoincarePoint {
    coords: DVector<f64>,
}

impl PoincarePoint {
    pub fn new(coords: DVector<f64>) -> Result<Self> {
        if coords.norm_squared() >= 1.0 {
            return Err(Error::domain("Poincaré point must lie strictly inside the unit ball"));
        }
        Ok(Self { coords })
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    /// Distance in the Poincaré model.
    pub fn distance(&self, other: &PoincarePoint) -> f64 {
        let a = self.coords.norm_squared();
        let b = other.coords.norm_squared();
        let diff = (&self.coords - &other.coords).norm_squared();
        (1.0 + 2.0 * diff / ((1.0 - a) * (1.0 - b))).acosh()
    }
}

pub fn distance(x: &LorentzPoint, y: &LorentzPoint) -> f64 {
    x.distance(y)
}

pub fn exp_map(x: &LorentzPoint, u: &TangentVector) -> LorentzPoint {
    x.exp(&u.vec)
}

pub fn log_map(x: &LorentzPoint, y: &LorentzPoint) -> TangentVector {
    TangentVector::new_unchecked(x.clone(), x.log(y))
}

pub fn parallel_transport(x: &LorentzPoint, y: &LorentzPoint, v: &TangentVector) -> TangentVector {
    TangentVector::new_unchecked(y.clone(), x.transport(y, &v.vec))
}

pub fn project_to_tangent(x: &LorentzPoint, v: &DVector<f64>) -> Result<TangentVector> {
    if v.len() != x.coords.len() {
        return Err(Error::Dimension {
            expected: x.coords.len(),
            got: v.len(),
        });
    }
    Ok(TangentVector::new_unchecked(x.clone(), x.project(v)))
}

pub fn lift(z: &[f64]) -> LorentzPoint {
    LorentzPoint::lift(z)
}

pub fn to_poincare(x: &LorentzPoint) -> PoincarePoint {
    x.to_poincare()
}

pub fn from_poincare(y: &PoincarePoint) -> Result<LorentzPoint> {
    let sq = y.coords.norm_squared();
    if sq >= 1.0 {
        return Err(Error::domain("Poincaré point must lie strictly inside the unit ball"));
    }
    let s = 1.0 / (1.0 - sq);
    let mut coords = DVector::zeros(y.coords.len() + 1);
    coords[0] = (1.0 + sq) * s;
    for (i, v) in y.coords.iter().enumerate() {
        coords[i + 1] = 2.0 * v * s;
    }
    Ok(LorentzPoint { coords })
}

/// Point at fraction `t` along the geodesic from `x` to `y`.
pub fn geodesic(x: &LorentzPoint, y: &LorentzPoint, t: f64) -> Result<LorentzPoint> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::domain(format!("geodesic parameter {t} outside [0, 1]")));
    }
    if t == 0.0 {
        return Ok(x.clone());
    }
    if t == 1.0 {
        return Ok(y.clone());
    }
    Ok(x.exp(&(x.log(y) * t)))
}

/// Orthonormal basis of the tangent space at `x`, obtained by transporting
/// the coordinate basis of the origin's tangent space.
pub fn tangent_basis(x: &LorentzPoint) -> Vec<DVector<f64>> {
    let q = x.dim();
    let origin = LorentzPoint::origin(q);
    (0..q)
        .map(|k| {
            let mut e = DVector::zeros(q + 1);
            e[k + 1] = 1.0;
            origin.transport(x, &e)
        })
        .collect()
}
