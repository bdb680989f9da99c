//! JSON file formats for graphs, PAGs, parameters and suite manifests.

use std::path::Path;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Admg, Mark, Pag, Skeleton};
use crate::scm::ScmParams;

/// `{"d", "directed": [[i, j]], "bidirected": [[i, j]]}` with `i < j` for
/// bidirected pairs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphJson {
    pub d: usize,
    pub directed: Vec<(usize, usize)>,
    pub bidirected: Vec<(usize, usize)>,
}

impl From<&Admg> for GraphJson {
    fn from(g: &Admg) -> Self {
        Self {
            d: g.d(),
            directed: g.directed_edges(),
            bidirected: g.bidirected_edges(),
        }
    }
}

impl TryFrom<GraphJson> for Admg {
    type Error = Error;

    fn try_from(g: GraphJson) -> Result<Self> {
        Admg::from_edges(g.d, &g.directed, &g.bidirected)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PagEdgeJson {
    pub i: usize,
    pub j: usize,
    pub mark_at_i: Mark,
    pub mark_at_j: Mark,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PagJson {
    pub d: usize,
    pub edges: Vec<PagEdgeJson>,
}

impl From<&Pag> for PagJson {
    fn from(p: &Pag) -> Self {
        Self {
            d: p.d(),
            edges: p
                .edges()
                .into_iter()
                .map(|(i, j, mark_at_i, mark_at_j)| PagEdgeJson { i, j, mark_at_i, mark_at_j })
                .collect(),
        }
    }
}

impl TryFrom<PagJson> for Pag {
    type Error = Error;

    fn try_from(p: PagJson) -> Result<Self> {
        let edges: Vec<_> = p.edges.iter().map(|e| (e.i, e.j, e.mark_at_i, e.mark_at_j)).collect();
        Pag::from_edges(p.d, &edges)
    }
}

/// Row-major coefficient matrices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamsJson {
    pub d: usize,
    pub delta: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(d: usize, rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(Error::Parse(format!("{what} is not {d} x {d}")));
    }
    Ok(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
}

impl From<&ScmParams> for ParamsJson {
    fn from(p: &ScmParams) -> Self {
        Self {
            d: p.d(),
            delta: rows(&p.delta),
            beta: rows(&p.beta),
        }
    }
}

impl TryFrom<ParamsJson> for ScmParams {
    type Error = Error;

    fn try_from(p: ParamsJson) -> Result<Self> {
        let delta = from_rows(p.d, &p.delta, "delta")?;
        let beta = from_rows(p.d, &p.beta, "beta")?;
        if beta != beta.transpose() {
            return Err(Error::Parse("beta is not symmetric".into()));
        }
        Ok(ScmParams { delta, beta })
    }
}

/// One dataset of a suite, with paths relative to the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub d: usize,
    pub n: usize,
    pub seed: u64,
    pub data: String,
    pub graph: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// Resolved configuration that produced the suite.
    pub config: serde_json::Value,
    pub entries: Vec<ManifestEntry>,
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_graph(path: &Path) -> Result<Admg> {
    read_json::<GraphJson>(path)?.try_into()
}

pub fn save_graph(path: &Path, g: &Admg) -> Result<()> {
    write_json(path, &GraphJson::from(g))
}

pub fn load_pag(path: &Path) -> Result<Pag> {
    read_json::<PagJson>(path)?.try_into()
}

pub fn save_pag(path: &Path, p: &Pag) -> Result<()> {
    write_json(path, &PagJson::from(p))
}

pub fn load_params(path: &Path) -> Result<ScmParams> {
    read_json::<ParamsJson>(path)?.try_into()
}

pub fn save_params(path: &Path, p: &ScmParams) -> Result<()> {
    write_json(path, &ParamsJson::from(p))
}

/// A skeleton stored as a graph file: adjacency of any edge counts.
pub fn load_skeleton(path: &Path) -> Result<Skeleton> {
    Ok(load_graph(path)?.skeleton())
}
