use nalgebra::DMatrix;

use super::{KernelKind, KernelSpec};
use crate::error::{Error, Result};
use crate::graphtax::TaxonomyGraph;

/// Full node-by-node kernel matrix for a graph [`KernelSpec`], rescaled so the
/// largest diagonal entry equals the configured variance.
pub fn graph_kernel_matrix(graph: &TaxonomyGraph, spec: &KernelSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let lam = graph.eigenvalues();
    let u = graph.eigenvectors();
    let k2 = spec.lengthscale * spec.lengthscale;
    let f: Vec<f64> = match spec.kind {
        KernelKind::GraphSe => lam.iter().map(|l| (-0.5 * k2 * l.max(0.0)).exp()).collect(),
        KernelKind::GraphMatern => {
            let nu = spec.nu()?;
            // Work in log space relative to the zero eigenvalue to avoid
            // overflow of (2 nu / kappa^2)^(-nu) for small kappa.
            let base = 2.0 * nu / k2;
            lam.iter().map(|l| (-nu * (1.0 + l.max(0.0) / base).ln()).exp()).collect()
        }
        other => return Err(Error::param(format!("{other:?} is not a graph kernel"))),
    };
    let mut scaled = u.clone();
    for (j, fj) in f.iter().enumerate() {
        scaled.column_mut(j).scale_mut(*fj);
    }
    let mut k = &scaled * u.transpose();
    k = (&k + k.transpose()) * 0.5;
    let dmax = k.diagonal().max();
    if !(dmax > 0.0) {
        return Err(Error::Numerical("graph kernel has no positive diagonal entry".into()));
    }
    Ok(k * (spec.variance / dmax))
}

pub fn graph_kernel(c: &str, c2: &str, graph: &TaxonomyGraph, spec: &KernelSpec) -> Result<f64> {
    let i = graph.node_index(c)?;
    let j = graph.node_index(c2)?;
    Ok(graph_kernel_matrix(graph, spec)?[(i, j)])
}
