//! Amortized skeleton posteriors: pair features, a boosted cascade trained
//! on simulated corpora, bootstrap regeneration for adaptation, and a
//! bootstrap-FCI reference posterior.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Skeleton;

pub mod cascade;
pub mod dynamic;
pub mod features;
pub mod gbdt;

pub use cascade::{infer_posterior, train_cascade, CascadeConfig, CascadeModel, CascadeOutput, TrainReport};
pub use dynamic::{adapt_model, bootstrap_dynamic_corpus, bootstrap_fci_posterior, bootstrap_replica, AdaptConfig, AdaptedModel, BootstrapConfig, Replica};
pub use features::{extract_pair_features, FeatureContext, PairFeatures, FEATURE_SCHEMA_VERSION};

/// Symmetric matrix of edge-existence probabilities with a zero diagonal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PosteriorJson", into = "PosteriorJson")]
pub struct SkeletonPosterior {
    p: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct PosteriorJson {
    d: usize,
    p: Vec<Vec<f64>>,
}

impl TryFrom<PosteriorJson> for SkeletonPosterior {
    type Error = Error;

    fn try_from(v: PosteriorJson) -> Result<Self> {
        if v.p.len() != v.d || v.p.iter().any(|r| r.len() != v.d) {
            return Err(Error::Parse(format!("posterior rows do not form a {0}x{0} matrix", v.d)));
        }
        Self::from_matrix(DMatrix::from_fn(v.d, v.d, |i, j| v.p[i][j]))
    }
}

impl From<SkeletonPosterior> for PosteriorJson {
    fn from(s: SkeletonPosterior) -> Self {
        let d = s.d();
        Self {
            d,
            p: (0..d).map(|i| (0..d).map(|j| s.p[(i, j)]).collect()).collect(),
        }
    }
}

impl SkeletonPosterior {
    /// Validates range, symmetry and the zero diagonal.
    pub fn from_matrix(p: DMatrix<f64>) -> Result<Self> {
        let d = p.nrows();
        if p.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: p.ncols() });
        }
        for i in 0..d {
            if p[(i, i)] != 0.0 {
                return Err(Error::InvalidInput(format!("posterior diagonal entry {i} is not zero")));
            }
            for j in 0..d {
                let v = p[(i, j)];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidInput(format!("posterior entry ({i}, {j}) = {v} outside [0, 1]")));
                }
                if v != p[(j, i)] {
                    return Err(Error::InvalidInput(format!("posterior is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { p })
    }

    /// Same value for every pair.
    pub fn constant(d: usize, value: f64) -> Result<Self> {
        Self::from_matrix(DMatrix::from_fn(d, d, |i, j| if i == j { 0.0 } else { value }))
    }

    /// 1 on skeleton edges, 0 elsewhere.
    pub fn from_skeleton(s: &Skeleton) -> Self {
        let d = s.d();
        Self {
            p: DMatrix::from_fn(d, d, |i, j| if s.adjacent(i, j) { 1.0 } else { 0.0 }),
        }
    }

    /// Builds from unordered pair values, `f(i, j)` called with `i < j`.
    pub(crate) fn from_pairs(d: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut p = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in (i + 1)..d {
                let v = f(i, j).clamp(0.0, 1.0);
                p[(i, j)] = v;
                p[(j, i)] = v;
            }
        }
        Self { p }
    }

    pub fn d(&self) -> usize {
        self.p.nrows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    /// Pairs with probability at least `threshold`.
    pub fn skeleton_at(&self, threshold: f64) -> Skeleton {
        let d = self.d();
        let mut s = Skeleton::empty(d);
        for i in 0..d {
            for j in (i + 1)..d {
                if self.p[(i, j)] >= threshold {
                    s.set(i, j, true);
                }
            }
        }
        s
    }

    /// Moves entry `(i, j)` to `(perm[i], perm[j])`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let d = self.d();
        let mut p = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                p[(perm[i], perm[j])] = self.p[(i, j)];
            }
        }
        Self { p }
    }

    /// Headerless square CSV matrix.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        for i in 0..self.d() {
            let row: Vec<String> = (0..self.d()).map(|j| self.p[(i, j)].to_string()).collect();
            wr.write_record(&row).map_err(|e| Error::Parse(e.to_string()))?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(r);
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            let row = rec
                .iter()
                .map(|c| c.parse::<f64>().map_err(|_| Error::Parse(format!("non-numeric posterior cell {c:?}"))))
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        let d = rows.len();
        Self::try_from(PosteriorJson { d, p: rows })
    }

    /// JSON when the extension is `.json`, headerless CSV otherwise.
    pub fn load(path: &Path) -> Result<Self> {
        if is_json(path) {
            Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
        } else {
            Self::read_csv(std::fs::File::open(path)?)
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if is_json(path) {
            std::fs::write(path, serde_json::to_string(self)?)?;
            Ok(())
        } else {
            self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
        }
    }
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

#[cfg(test)]
mod tests;
