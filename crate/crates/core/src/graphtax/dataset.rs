use nalgebra::DMatrix;

use super::TaxonomyGraph;
use crate::error::{Error, Result};

pub const DATASET_FORMAT_VERSION: u32 = 1;

/// Observations `Y` (N x D) with one taxonomy node per row.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    observations: DMatrix<f64>,
    classes: Vec<usize>,
    feature_names: Vec<String>,
}

impl LabeledDataset {
    /// `classes` are node indices into `graph`.
    pub fn new(observations: DMatrix<f64>, classes: Vec<usize>, graph: &TaxonomyGraph) -> Result<Self> {
        let d = observations.ncols();
        let names = (0..d).map(|j| format!("y{j}")).collect();
        Self::with_names(observations, classes, names, graph)
    }

    pub fn with_names(
        observations: DMatrix<f64>,
        classes: Vec<usize>,
        feature_names: Vec<String>,
        graph: &TaxonomyGraph,
    ) -> Result<Self> {
        if observations.nrows() == 0 {
            return Err(Error::invalid("dataset has no rows"));
        }
        if observations.ncols() == 0 {
            return Err(Error::invalid("dataset has no feature columns"));
        }
        if classes.len() != observations.nrows() {
            return Err(Error::Dimension { expected: observations.nrows(), got: classes.len() });
        }
        if feature_names.len() != observations.ncols() {
            return Err(Error::Dimension { expected: observations.ncols(), got: feature_names.len() });
        }
        if let Some(&c) = classes.iter().find(|&&c| c >= graph.len()) {
            return Err(Error::invalid(format!("class index {c} is not a node of the graph")));
        }
        if observations.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("dataset contains non-finite values"));
        }
        Ok(Self { observations, classes, feature_names })
    }

    pub fn observations(&self) -> &DMatrix<f64> {
        &self.observations
    }

    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn len(&self) -> usize {
        self.observations.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.observations.ncols()
    }

    /// Keeps only the rows for which `keep` returns true.
    pub fn filter(&self, mut keep: impl FnMut(usize, usize) -> bool) -> Option<Self> {
        let rows: Vec<usize> = (0..self.len()).filter(|&i| keep(i, self.classes[i])).collect();
        if rows.is_empty() {
            return None;
        }
        Some(Self {
            observations: self.observations.select_rows(&rows),
            classes: rows.iter().map(|&i| self.classes[i]).collect(),
            feature_names: self.feature_names.clone(),
        })
    }

    /// Graph distance between the classes of every pair of rows.
    pub fn class_distances(&self, graph: &TaxonomyGraph) -> DMatrix<f64> {
        let n = self.len();
        DMatrix::from_fn(n, n, |i, j| graph.dist()[(self.classes[i], self.classes[j])])
    }

    pub fn to_csv(&self, graph: &TaxonomyGraph) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = self.feature_names.clone();
        header.push("class".into());
        w.write_record(&header).expect("in-memory write");
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.observations.row(i).iter().map(|v| format!("{v:?}")).collect();
            rec.push(graph.id(self.classes[i]).to_string());
            w.write_record(&rec).expect("in-memory write");
        }
        let body = String::from_utf8(w.into_inner().expect("flush")).expect("utf8");
        format!("# format_version: {DATASET_FORMAT_VERSION}\n{body}")
    }
}

/// Parses delimited text with a header naming feature columns and a `class`
/// column. Lines starting with `#` are comments; a leading
/// `# format_version: N` comment is checked when present.
pub fn load_dataset(source: &str, graph: &TaxonomyGraph) -> Result<LabeledDataset> {
    for (i, line) in source.lines().enumerate() {
        let t = line.trim();
        if let Some(rest) = t.strip_prefix('#') {
            if let Some(v) = rest.trim().strip_prefix("format_version:") {
                let v: u32 = v.trim().parse().map_err(|_| Error::Parse {
                    line: i as u64 + 1,
                    message: format!("bad format_version `{}`", v.trim()),
                })?;
                if v != DATASET_FORMAT_VERSION {
                    return Err(Error::Parse {
                        line: i as u64 + 1,
                        message: format!("unsupported dataset format_version {v}"),
                    });
                }
            }
            continue;
        }
        if !t.is_empty() {
            break;
        }
    }

    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?
        .clone();
    let class_col = headers
        .iter()
        .position(|h| h == "class")
        .ok_or_else(|| Error::Parse { line: 1, message: "header has no `class` column".into() })?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != class_col)
        .map(|(_, h)| h.to_string())
        .collect();
    if feature_names.is_empty() {
        return Err(Error::invalid("dataset has no feature columns"));
    }
    let width = headers.len();
    let mut values = Vec::new();
    let mut classes = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != width {
            return Err(Error::Parse {
                line,
                message: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        for (j, field) in rec.iter().enumerate() {
            if j == class_col {
                let c = graph.node_index(field).map_err(|_| Error::Parse {
                    line,
                    message: format!("unknown class `{field}`"),
                })?;
                classes.push(c);
            } else {
                let v: f64 = field.parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("non-numeric value `{field}` in column `{}`", &headers[j]),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse { line, message: format!("non-finite value `{field}`") });
                }
                values.push(v);
            }
        }
    }
    let n = classes.len();
    if n == 0 {
        return Err(Error::invalid("dataset has no rows"));
    }
    let obs = DMatrix::from_row_slice(n, feature_names.len(), &values);
    LabeledDataset::with_names(obs, classes, feature_names, graph)
}
