//! Taxonomy graphs and class-labelled datasets.

mod dataset;
mod synthetic;

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dataset::{load_dataset, LabeledDataset};
pub use synthetic::synthetic_tree;

pub const GRAPH_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub label: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct GraphDoc {
    pub format_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub nodes: Vec<NodeDoc>,
    pub edges: Vec<[String; 2]>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct NodeDoc {
    pub id: String,
    #[serde(default)]
    pub label: Option<String>,
}

/// Connected, unweighted, undirected graph with hop distances and the
/// eigendecomposition of its combinatorial Laplacian.
#[derive(Clone, Debug)]
pub struct TaxonomyGraph {
    nodes: Vec<Node>,
    edges: Vec<(usize, usize)>,
    description: Option<String>,
    index: HashMap<String, usize>,
    dist: DMatrix<f64>,
    laplacian: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl PartialEq for TaxonomyGraph {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.edges == other.edges
    }
}

impl TaxonomyGraph {
    /// Builds and validates a graph from nodes and edges given by node id.
    pub fn new(nodes: Vec<Node>, edges: &[(String, String)]) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::invalid("graph has no nodes"));
        }
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if n.id.is_empty() {
                return Err(Error::invalid(format!("node {i} has an empty id")));
            }
            if index.insert(n.id.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate node id `{}`", n.id)));
            }
        }
        let mut idx_edges = Vec::with_capacity(edges.len());
        let mut seen = std::collections::HashSet::new();
        for (a, b) in edges {
            let ia = *index
                .get(a)
                .ok_or_else(|| Error::invalid(format!("edge ({a}, {b}) references unknown node `{a}`")))?;
            let ib = *index
                .get(b)
                .ok_or_else(|| Error::invalid(format!("edge ({a}, {b}) references unknown node `{b}`")))?;
            if ia == ib {
                return Err(Error::invalid(format!("self-loop on node `{a}`")));
            }
            let key = (ia.min(ib), ia.max(ib));
            if !seen.insert(key) {
                return Err(Error::invalid(format!("duplicate edge ({a}, {b})")));
            }
            idx_edges.push(key);
        }
        let n = nodes.len();
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in &idx_edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut dist = DMatrix::zeros(n, n);
        for s in 0..n {
            let hops = bfs(&adj, s);
            for (t, h) in hops.iter().enumerate() {
                match h {
                    Some(h) => dist[(s, t)] = *h as f64,
                    None => {
                        return Err(Error::invalid(format!(
                            "graph is disconnected: node `{}` is unreachable from `{}`",
                            nodes[t].id, nodes[s].id
                        )))
                    }
                }
            }
        }
        let mut laplacian = DMatrix::zeros(n, n);
        for &(a, b) in &idx_edges {
            laplacian[(a, b)] = -1.0;
            laplacian[(b, a)] = -1.0;
            laplacian[(a, a)] += 1.0;
            laplacian[(b, b)] += 1.0;
        }
        let (eigenvalues, eigenvectors) = sorted_eigen(&laplacian);
        Ok(Self {
            nodes,
            edges: idx_edges,
            description: None,
            index,
            dist,
            laplacian,
            eigenvalues,
            eigenvectors,
        })
    }

    pub fn from_json(source: &str) -> Result<Self> {
        let doc: GraphDoc = serde_json::from_str(source)
            .map_err(|e| Error::Parse { line: e.line() as u64, message: e.to_string() })?;
        if doc.format_version != GRAPH_FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported graph format_version {} (expected {GRAPH_FORMAT_VERSION})",
                doc.format_version
            )));
        }
        let nodes = doc
            .nodes
            .into_iter()
            .map(|n| Node {
                label: n.label.unwrap_or_else(|| n.id.clone()),
                id: n.id,
            })
            .collect();
        let edges: Vec<(String, String)> = doc.edges.into_iter().map(|[a, b]| (a, b)).collect();
        let mut g = Self::new(nodes, &edges)?;
        g.description = doc.description;
        Ok(g)
    }

    pub(crate) fn to_doc(&self) -> GraphDoc {
        GraphDoc {
            format_version: GRAPH_FORMAT_VERSION,
            description: self.description.clone(),
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeDoc { id: n.id.clone(), label: Some(n.label.clone()) })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|&(a, b)| [self.nodes[a].id.clone(), self.nodes[b].id.clone()])
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("graph serializes")
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn description(&self) -> Option<&str> {
        self.description.as_deref()
    }

    pub fn node_index(&self, id: &str) -> Result<usize> {
        self.index.get(id).copied().ok_or_else(|| Error::Lookup {
            what: "node",
            name: id.to_string(),
        })
    }

    pub fn id(&self, index: usize) -> &str {
        &self.nodes[index].id
    }

    /// Hop-count distance matrix.
    pub fn dist(&self) -> &DMatrix<f64> {
        &self.dist
    }

    pub fn distance(&self, a: &str, b: &str) -> Result<f64> {
        Ok(self.dist[(self.node_index(a)?, self.node_index(b)?)])
    }

    /// `D - W`.
    pub fn laplacian(&self) -> &DMatrix<f64> {
        &self.laplacian
    }

    /// Laplacian eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    /// Orthonormal eigenvectors as columns, matching [`Self::eigenvalues`].
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn degree(&self, index: usize) -> usize {
        self.laplacian[(index, index)] as usize
    }

    /// Nodes of degree one; for a rooted tree these are the leaves (plus the
    /// root if it has a single child).
    pub fn leaves(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.degree(i) == 1).collect()
    }
}

fn bfs(adj: &[Vec<usize>], start: usize) -> Vec<Option<usize>> {
    let mut hops = vec![None; adj.len()];
    hops[start] = Some(0);
    let mut queue = VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        let h = hops[u].unwrap();
        for &v in &adj[u] {
            if hops[v].is_none() {
                hops[v] = Some(h + 1);
                queue.push_back(v);
            }
        }
    }
    hops
}

fn sorted_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

pub fn load_graph(source: &str) -> Result<TaxonomyGraph> {
    TaxonomyGraph::from_json(source)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Builtin {
    Bimanual,
    Grasp,
    SupportPose,
}

impl Builtin {
    pub const ALL: [Builtin; 3] = [Builtin::Bimanual, Builtin::Grasp, Builtin::SupportPose];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Bimanual => "bimanual",
            Builtin::Grasp => "grasp",
            Builtin::SupportPose => "support_pose",
        }
    }

    fn source(self) -> &'static str {
        match self {
            Builtin::Bimanual => include_str!("../../fixtures/bimanual.json"),
            Builtin::Grasp => include_str!("../../fixtures/grasp.json"),
            Builtin::SupportPose => include_str!("../../fixtures/support_pose.json"),
        }
    }
}

impl fmt::Display for Builtin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Builtin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bimanual" => Ok(Builtin::Bimanual),
            "grasp" => Ok(Builtin::Grasp),
            "support_pose" | "support-pose" => Ok(Builtin::SupportPose),
            other => Err(Error::Lookup { what: "taxonomy", name: other.to_string() }),
        }
    }
}

pub fn builtin_taxonomy(which: Builtin) -> TaxonomyGraph {
    TaxonomyGraph::from_json(which.source()).expect("builtin fixture is valid")
}
