use nalgebra::{DMatrix, DVector};

use super::{dsinhc_over_r, sinhc, BackConstraintConfig, Geometry, GphlvmModel};
use crate::error::{Error, Result};
use crate::graphtax::TaxonomyGraph;
use crate::kernels::{graph_kernel_matrix, KernelKind, KernelSpec};

/// Trained back-constraint mapping
/// `x_n = Exp_mu0(sum_m w_m k_obs(y_n, y_m) k_graph(c_n, c_m))`.
#[derive(Clone, Debug, PartialEq)]
pub struct BackConstraint {
    /// `Q x N` weights.
    pub weights: DMatrix<f64>,
    pub config: BackConstraintConfig,
    /// Node ids of the graph the mapping was trained against, in graph order.
    pub node_ids: Vec<String>,
    /// Unit-variance graph Matérn kernel over those nodes.
    pub graph_gram: DMatrix<f64>,
}

pub(crate) fn graph_gram(graph: &TaxonomyGraph, cfg: &BackConstraintConfig) -> Result<DMatrix<f64>> {
    let spec = KernelSpec {
        smoothness: Some(cfg.graph_smoothness),
        ..KernelSpec::new(KernelKind::GraphMatern, cfg.graph_lengthscale, 1.0)
    };
    graph_kernel_matrix(graph, &spec)
}

#[inline]
fn entry(cfg: &BackConstraintConfig, a: &[f64], b: &[f64], kg: f64) -> f64 {
    let r2: f64 = a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum();
    let l2 = cfg.obs_lengthscale * cfg.obs_lengthscale;
    cfg.variance * (-r2 / (2.0 * l2)).exp() * kg
}

fn row(y: &DMatrix<f64>, n: usize) -> Vec<f64> {
    y.row(n).iter().copied().collect()
}

/// `sigma^2 k_obs(y_n, y_m) k_graph(c_n, c_m)` for all training pairs.
pub fn bc_kernel_matrix(
    y: &DMatrix<f64>,
    classes: &[usize],
    graph: &TaxonomyGraph,
    cfg: &BackConstraintConfig,
) -> Result<DMatrix<f64>> {
    if y.nrows() != classes.len() {
        return Err(Error::Dimension { expected: y.nrows(), got: classes.len() });
    }
    let kg = graph_gram(graph, cfg)?;
    let rows: Vec<Vec<f64>> = (0..y.nrows()).map(|n| row(y, n)).collect();
    Ok(DMatrix::from_fn(y.nrows(), y.nrows(), |n, m| entry(cfg, &rows[n], &rows[m], kg[(classes[n], classes[m])])))
}

/// `W k` accumulated in a fixed order, shared by training and encoding so both
/// produce identical bits for identical kernel rows.
fn combine(w: &DMatrix<f64>, k: impl Iterator<Item = f64> + Clone) -> DVector<f64> {
    DVector::from_fn(w.nrows(), |q, _| k.clone().enumerate().fold(0.0, |acc, (m, km)| acc + w[(q, m)] * km))
}

pub(crate) fn latents_from(geometry: Geometry, w: &DMatrix<f64>, kbc: &DMatrix<f64>) -> Vec<DVector<f64>> {
    (0..kbc.nrows())
        .map(|n| geometry.from_origin_tangent(&combine(w, kbc.row(n).iter().copied())))
        .collect()
}

/// Latent points for weights `w` (`Q x N`).
pub fn back_constrain(
    geometry: Geometry,
    w: &DMatrix<f64>,
    y: &DMatrix<f64>,
    classes: &[usize],
    graph: &TaxonomyGraph,
    cfg: &BackConstraintConfig,
) -> Result<Vec<DVector<f64>>> {
    if w.ncols() != y.nrows() {
        return Err(Error::Dimension { expected: y.nrows(), got: w.ncols() });
    }
    let kbc = bc_kernel_matrix(y, classes, graph, cfg)?;
    Ok(latents_from(geometry, w, &kbc))
}

/// Gradient of the origin tangent coordinates `u` given the tangent gradient
/// `xi` at `x = from_origin_tangent(u)`.
pub(crate) fn origin_tangent_backward(geometry: Geometry, u: &DVector<f64>, xi: &DVector<f64>) -> DVector<f64> {
    match geometry {
        Geometry::Euclidean => xi.clone(),
        Geometry::Lorentz => {
            // Ambient form of the gradient is J xi.
            let g0 = -xi[0];
            let gs = xi.rows(1, u.len()).into_owned();
            let r = u.norm();
            let s = sinhc(r);
            u * (g0 * s + gs.dot(u) * dsinhc_over_r(r)) + gs * s
        }
    }
}

/// Gradient with respect to `W` given tangent gradients at the latents.
pub(crate) fn weights_backward(
    geometry: Geometry,
    w: &DMatrix<f64>,
    kbc: &DMatrix<f64>,
    grads: &[DVector<f64>],
) -> DMatrix<f64> {
    let n = kbc.nrows();
    let mut gu = DMatrix::zeros(w.nrows(), n);
    for i in 0..n {
        let u = combine(w, kbc.row(i).iter().copied());
        gu.set_column(i, &origin_tangent_backward(geometry, &u, &grads[i]));
    }
    gu * kbc
}

/// Least-squares weights reproducing the given latents: solves
/// `K_bc W^T = U` for the origin tangent coordinates `U`.
pub(crate) fn fit_weights(geometry: Geometry, kbc: &DMatrix<f64>, latents: &[DVector<f64>]) -> Result<DMatrix<f64>> {
    let q = geometry.origin_tangent(&latents[0]).len();
    let mut u = DMatrix::zeros(latents.len(), q);
    for (n, x) in latents.iter().enumerate() {
        u.set_row(n, &geometry.origin_tangent(x).transpose());
    }
    let svd = kbc.clone().svd(true, true);
    let tol = 1e-10 * svd.singular_values.max();
    let wt = svd.solve(&u, tol).map_err(|e| Error::Numerical(format!("back-constraint fit: {e}")))?;
    Ok(wt.transpose())
}

impl BackConstraint {
    pub(crate) fn new(weights: DMatrix<f64>, config: BackConstraintConfig, graph: &TaxonomyGraph) -> Result<Self> {
        Ok(Self {
            weights,
            config,
            node_ids: graph.nodes().iter().map(|n| n.id.clone()).collect(),
            graph_gram: graph_gram(graph, &config)?,
        })
    }

    fn node(&self, id: &str) -> Result<usize> {
        self.node_ids
            .iter()
            .position(|n| n == id)
            .ok_or_else(|| Error::Lookup { what: "class", name: id.to_string() })
    }

    pub(crate) fn encode(&self, model: &GphlvmModel, y: &DVector<f64>, class: &str) -> Result<DVector<f64>> {
        let c = self.node(class)?;
        let yn = y.as_slice();
        let mut k = Vec::with_capacity(model.len());
        for m in 0..model.len() {
            let cm = self.node(&model.classes[m])?;
            k.push(entry(&self.config, yn, &row(&model.observations, m), self.graph_gram[(c, cm)]));
        }
        Ok(model.geometry.from_origin_tangent(&combine(&self.weights, k.into_iter())))
    }
}
