use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{LabeledDataset, Node, TaxonomyGraph};
use crate::error::{Error, Result};

/// Balanced tree with `depth` levels below the root and observations around
/// per-node prototypes.
///
/// Prototypes follow a Gaussian random walk down the tree (unit step variance
/// per coordinate), so the expected squared distance between two prototypes
/// grows linearly with their graph distance. Every node, internal or leaf,
/// receives `points_per_node` noisy copies of its prototype. Node ids encode
/// the path from the root: `n`, `n.0`, `n.0.1`, ...
pub fn synthetic_tree<R: Rng + ?Sized>(
    depth: usize,
    branching: usize,
    points_per_node: usize,
    dim: usize,
    noise: f64,
    rng: &mut R,
) -> Result<(TaxonomyGraph, LabeledDataset)> {
    if depth < 1 {
        return Err(Error::param("synthetic tree depth must be at least 1"));
    }
    if branching < 2 {
        return Err(Error::param("synthetic tree branching must be at least 2"));
    }
    if points_per_node < 1 || dim < 1 {
        return Err(Error::param("points_per_node and dimension must be at least 1"));
    }
    if !(noise >= 0.0) || !noise.is_finite() {
        return Err(Error::param(format!("noise must be non-negative, got {noise}")));
    }

    let mut nodes = vec![Node { id: "n".into(), label: "root".into() }];
    let mut edges = Vec::new();
    let mut protos = vec![DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal))];
    let mut frontier = vec![0usize];
    for level in 1..=depth {
        let mut next = Vec::with_capacity(frontier.len() * branching);
        for &p in &frontier {
            for b in 0..branching {
                let id = format!("{}.{b}", nodes[p].id);
                let step = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
                protos.push(&protos[p] + step);
                edges.push((nodes[p].id.clone(), id.clone()));
                nodes.push(Node { label: format!("level {level} node {id}"), id });
                next.push(nodes.len() - 1);
            }
        }
        frontier = next;
    }
    let graph = TaxonomyGraph::new(nodes, &edges)?;

    let n_nodes = graph.len();
    let n = n_nodes * points_per_node;
    let mut obs = DMatrix::zeros(n, dim);
    let mut classes = Vec::with_capacity(n);
    for c in 0..n_nodes {
        for k in 0..points_per_node {
            let row = c * points_per_node + k;
            for j in 0..dim {
                let e: f64 = if noise > 0.0 { rng.sample(StandardNormal) } else { 0.0 };
                obs[(row, j)] = protos[c][j] + noise * e;
            }
            classes.push(c);
        }
    }
    let ds = LabeledDataset::new(obs, classes, &graph)?;
    Ok((graph, ds))
}
