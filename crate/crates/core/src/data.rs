//! Observational datasets and their CSV form.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// An `n x d` observation matrix with column names.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    column_names: Vec<String>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, column_names: Vec<String>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::InvalidInput("dataset has no rows".into()));
        }
        if column_names.len() != x.ncols() {
            return Err(Error::DimensionMismatch {
                expected: x.ncols(),
                got: column_names.len(),
            });
        }
        if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
            let (r, c) = (pos % x.nrows(), pos / x.nrows());
            return Err(Error::NonFinite(format!("dataset cell ({r}, {c})")));
        }
        Ok(Self { x, column_names })
    }

    /// Columns named `X0, X1, ...`.
    pub fn with_default_names(x: DMatrix<f64>) -> Result<Self> {
        let names = (0..x.ncols()).map(|j| format!("X{j}")).collect();
        Self::new(x, names)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn column(&self, j: usize) -> &[f64] {
        let n = self.n();
        &self.x.as_slice()[j * n..(j + 1) * n]
    }

    pub fn means(&self) -> Vec<f64> {
        (0..self.d())
            .map(|j| self.column(j).iter().sum::<f64>() / self.n() as f64)
            .collect()
    }

    /// Maximum-likelihood covariance (divisor `n`) of the centered data.
    ///
    /// Each entry depends only on its two columns, so permuting columns
    /// permutes the result exactly.
    pub fn covariance(&self) -> DMatrix<f64> {
        let d = self.d();
        let n = self.n();
        let means = self.means();
        let centered: Vec<Vec<f64>> = (0..d)
            .map(|j| self.column(j).iter().map(|v| v - means[j]).collect())
            .collect();
        let mut s = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in i..d {
                let v = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        s
    }

    /// Columns centered and scaled to unit (MLE) variance. Constant columns
    /// are centered only.
    pub fn standardized(&self) -> Self {
        let n = self.n();
        let means = self.means();
        let mut x = self.x.clone();
        for j in 0..self.d() {
            let var = self.column(j).iter().map(|v| (v - means[j]).powi(2)).sum::<f64>() / n as f64;
            let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
            for r in 0..n {
                x[(r, j)] = (x[(r, j)] - means[j]) / sd;
            }
        }
        Self {
            x,
            column_names: self.column_names.clone(),
        }
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let x = DMatrix::from_fn(rows.len(), self.d(), |r, c| self.x[(rows[r], c)]);
        Self::new(x, self.column_names.clone())
    }

    /// Column `v` of `self` becomes column `perm[v]` of the result.
    pub fn permuted_columns(&self, perm: &[usize]) -> Self {
        let d = self.d();
        let mut x = DMatrix::zeros(self.n(), d);
        let mut names = vec![String::new(); d];
        for v in 0..d {
            x.set_column(perm[v], &self.x.column(v));
            names[perm[v]] = self.column_names[v].clone();
        }
        Self { x, column_names: names }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(&self.column_names).map_err(csv_err)?;
        let mut row = Vec::with_capacity(self.d());
        for r in 0..self.n() {
            row.clear();
            row.extend((0..self.d()).map(|c| self.x[(r, c)].to_string()));
            wr.write_record(&row).map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads a CSV with a mandatory header row. Non-numeric cells are an
    /// error; nothing is imputed.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(r);
        let names: Vec<String> = rd.headers().map_err(csv_err)?.iter().map(str::to_owned).collect();
        if names.is_empty() || names.iter().all(|h| h.is_empty()) {
            return Err(Error::Parse("missing header row".into()));
        }
        let d = names.len();
        let mut values = Vec::new();
        let mut n = 0usize;
        for (line, rec) in rd.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            if rec.len() != d {
                return Err(Error::Parse(format!("row {} has {} fields, expected {d}", line + 2, rec.len())));
            }
            for (c, cell) in rec.iter().enumerate() {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| Error::Parse(format!("non-numeric cell {cell:?} at row {}, column {}", line + 2, names[c])))?;
                values.push(v);
            }
            n += 1;
        }
        let x = DMatrix::from_row_slice(n, d, &values);
        Self::new(x, names)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}
