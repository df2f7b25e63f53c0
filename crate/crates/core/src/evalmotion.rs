//! Evaluation of trained models: stress reports, distance-error matrices,
//! geodesic trajectories and their jerkiness, class centroids.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gplvm::{Geometry, GphlvmModel};
use crate::graphtax::{LabeledDataset, TaxonomyGraph};
use crate::manifold::mdot;

/// Default number of trajectory steps.
pub const DEFAULT_STEPS: usize = 100;
/// Default trajectory timestep in seconds.
pub const DEFAULT_DT: f64 = 0.01;

const FRECHET_TOL: f64 = 1e-9;
const FRECHET_MAX_ITER: usize = 1000;

/// Squared graph-vs-latent distance errors over all point pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct StressReport {
    pub mean: f64,
    /// Population standard deviation over pairs.
    pub std: f64,
    /// `(i, j, squared error)` for `i < j`.
    pub per_pair: Vec<(usize, usize, f64)>,
}

impl StressReport {
    pub fn from_pairs(per_pair: Vec<(usize, usize, f64)>) -> Self {
        let n = per_pair.len();
        if n == 0 {
            return Self { mean: 0.0, std: 0.0, per_pair };
        }
        let mean = per_pair.iter().map(|p| p.2).sum::<f64>() / n as f64;
        let var = per_pair.iter().map(|p| (p.2 - mean).powi(2)).sum::<f64>() / n as f64;
        Self { mean, std: var.sqrt(), per_pair }
    }

    pub fn pairs(&self) -> usize {
        self.per_pair.len()
    }
}

/// Checks that `dataset` is the data the model was trained on, up to labels.
fn check_compatible(model: &GphlvmModel, dataset: &LabeledDataset, graph: &TaxonomyGraph) -> Result<()> {
    if dataset.len() != model.len() {
        return Err(Error::invalid(format!(
            "dataset has {} points but the model has {} latents",
            dataset.len(),
            model.len()
        )));
    }
    if dataset.dim() != model.output_dim() {
        return Err(Error::invalid(format!(
            "dataset has {} features but the model decodes {}",
            dataset.dim(),
            model.output_dim()
        )));
    }
    for (i, (&c, id)) in dataset.classes().iter().zip(&model.classes).enumerate() {
        if graph.id(c) != id {
            return Err(Error::invalid(format!(
                "row {}: dataset class `{}` differs from the model's `{id}`",
                i + 1,
                graph.id(c)
            )));
        }
    }
    Ok(())
}

/// Stress over the training latents plus optional extra `(latent, class index)` points.
pub fn stress_report(
    model: &GphlvmModel,
    dataset: &LabeledDataset,
    graph: &TaxonomyGraph,
    extra: &[(DVector<f64>, usize)],
) -> Result<StressReport> {
    check_compatible(model, dataset, graph)?;
    let mut points: Vec<&DVector<f64>> = model.latents.iter().collect();
    let mut classes = dataset.classes().to_vec();
    for (x, c) in extra {
        model.check_point(x)?;
        if *c >= graph.len() {
            return Err(Error::Lookup { what: "class index", name: c.to_string() });
        }
        points.push(x);
        classes.push(*c);
    }
    let g = graph.dist();
    let n = points.len();
    let mut pairs = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let e = g[(classes[i], classes[j])] - model.distance(points[i], points[j]);
            pairs.push((i, j, e * e));
        }
    }
    Ok(StressReport::from_pairs(pairs))
}

/// `|dist_latent - dist_graph|` for every pair of training points.
pub fn error_matrix(model: &GphlvmModel, dataset: &LabeledDataset, graph: &TaxonomyGraph) -> Result<DMatrix<f64>> {
    check_compatible(model, dataset, graph)?;
    let g = graph.dist();
    let c = dataset.classes();
    let n = model.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let e = (model.distance(&model.latents[i], &model.latents[j]) - g[(c[i], c[j])]).abs();
            m[(i, j)] = e;
            m[(j, i)] = e;
        }
    }
    Ok(m)
}

/// A latent path with its decoded observations.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub latent_path: Vec<DVector<f64>>,
    /// One decoded mean per row.
    pub decoded: DMatrix<f64>,
    /// Class of the nearest training latent at each step.
    pub class_path: Vec<String>,
    pub dt: f64,
}

impl Trajectory {
    /// Decodes and classifies an arbitrary latent path.
    pub fn along(model: &GphlvmModel, path: Vec<DVector<f64>>, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::param(format!("timestep must be positive, got {dt}")));
        }
        for x in &path {
            model.check_point(x)?;
        }
        let predictor = model.predictor()?;
        let mut decoded = DMatrix::zeros(path.len(), model.output_dim());
        let mut class_path = Vec::with_capacity(path.len());
        for (t, x) in path.iter().enumerate() {
            decoded.set_row(t, &predictor.decode(x).0.transpose());
            class_path.push(model.classes[nearest(model, x)?].clone());
        }
        Ok(Self { latent_path: path, decoded, class_path, dt })
    }

    pub fn len(&self) -> usize {
        self.latent_path.len()
    }

    pub fn is_empty(&self) -> bool {
        self.latent_path.is_empty()
    }

    /// Sum of latent distances between consecutive steps.
    pub fn path_length(&self, geometry: Geometry) -> f64 {
        self.latent_path.windows(2).map(|w| geometry.distance(&w[0], &w[1])).sum()
    }
}

/// Index of the training latent closest to `x`.
pub fn nearest(model: &GphlvmModel, x: &DVector<f64>) -> Result<usize> {
    model
        .latents
        .iter()
        .map(|l| model.distance(l, x))
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::invalid("model has no training latents"))
}

/// `steps` points equispaced along the geodesic from `a` to `b`, decoded.
pub fn interpolate(
    model: &GphlvmModel,
    a: &DVector<f64>,
    b: &DVector<f64>,
    steps: usize,
    dt: f64,
) -> Result<Trajectory> {
    if steps < 2 {
        return Err(Error::param(format!("a trajectory needs at least 2 steps, got {steps}")));
    }
    model.check_point(a)?;
    model.check_point(b)?;
    let last = (steps - 1) as f64;
    let path = (0..steps).map(|t| model.geometry.geodesic(a, b, t as f64 / last)).collect();
    Trajectory::along(model, path, dt)
}

/// Mean squared norm of the third finite difference of the decoded path,
/// `(y[t+3] - 3 y[t+2] + 3 y[t+1] - y[t]) / dt^3`, over all `T - 3` windows.
pub fn jerkiness(traj: &Trajectory) -> Result<f64> {
    let y = &traj.decoded;
    let t = y.nrows();
    if t < 4 {
        return Err(Error::domain(format!("jerkiness needs at least 4 steps, got {t}")));
    }
    let scale = traj.dt.powi(3);
    let total: f64 = (0..t - 3)
        .map(|i| {
            let d = y.row(i + 3) - y.row(i + 2) * 3.0 + y.row(i + 1) * 3.0 - y.row(i);
            (d / scale).norm_squared()
        })
        .sum();
    Ok(total / (t - 3) as f64)
}

/// Fréchet mean of `points` and the number of fixed-point iterations used.
///
/// Lorentz: starts from the normalized ambient mean and iterates
/// `x <- exp_x(mean_i log_x(p_i))` until the update is below 1e-9.
/// Euclidean: the arithmetic mean, zero iterations.
pub fn frechet_mean(geometry: Geometry, points: &[DVector<f64>]) -> Result<(DVector<f64>, usize)> {
    let first = points.first().ok_or_else(|| Error::invalid("Fréchet mean of no points"))?;
    let n = points.len() as f64;
    let sum = points.iter().skip(1).fold(first.clone(), |acc, p| acc + p);
    if geometry == Geometry::Euclidean {
        return Ok((sum / n, 0));
    }
    let mut x = geometry.from_spatial(&geometry.spatial(&(&sum / (-mdot(&sum, &sum)).sqrt())));
    for it in 1..=FRECHET_MAX_ITER {
        let step = points.iter().fold(DVector::zeros(x.len()), |acc, p| acc + geometry.log(&x, p)) / n;
        x = geometry.exp(&x, &step);
        if mdot(&step, &step).max(0.0).sqrt() < FRECHET_TOL {
            return Ok((x, it));
        }
    }
    Err(Error::Numerical(format!("Fréchet mean did not converge in {FRECHET_MAX_ITER} iterations")))
}

/// Fréchet mean of the training latents of every class present in the model.
pub fn class_centroids(model: &GphlvmModel) -> Result<BTreeMap<String, DVector<f64>>> {
    let mut groups: BTreeMap<&str, Vec<DVector<f64>>> = BTreeMap::new();
    for (x, c) in model.latents.iter().zip(&model.classes) {
        groups.entry(c.as_str()).or_default().push(x.clone());
    }
    groups
        .into_iter()
        .map(|(c, pts)| Ok((c.to_string(), frechet_mean(model.geometry, &pts)?.0)))
        .collect()
}

/// Fréchet mean of one class's training latents.
pub fn class_centroid(model: &GphlvmModel, class: &str) -> Result<DVector<f64>> {
    let pts: Vec<DVector<f64>> =
        model.latents.iter().zip(&model.classes).filter(|(_, c)| *c == class).map(|(x, _)| x.clone()).collect();
    if pts.is_empty() {
        return Err(Error::Lookup { what: "class with training points", name: class.into() });
    }
    Ok(frechet_mean(model.geometry, &pts)?.0)
}
