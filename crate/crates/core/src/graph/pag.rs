use serde::{Deserialize, Serialize};

use super::{Admg, Skeleton};
use crate::error::{Error, Result};

/// Endpoint mark of an edge in a partial ancestral graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mark {
    None,
    Circle,
    Arrow,
    Tail,
}

/// `marks[i * d + j]` is the mark at `j`'s end of the edge between `i` and `j`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Pag {
    d: usize,
    marks: Vec<Mark>,
}

impl Pag {
    pub fn empty(d: usize) -> Self {
        Self {
            d,
            marks: vec![Mark::None; d * d],
        }
    }

    /// Every skeleton edge as `o-o`.
    pub fn circles_from_skeleton(s: &Skeleton) -> Self {
        let mut p = Self::empty(s.d());
        for (i, j) in s.edges() {
            p.set(i, j, Mark::Circle);
            p.set(j, i, Mark::Circle);
        }
        p
    }

    /// The marks of a mixed graph read literally, without passing to its
    /// equivalence class.
    pub fn from_admg_marks(g: &Admg) -> Result<Self> {
        let mut p = Self::empty(g.d());
        for (i, j) in g.directed_edges() {
            if p.adjacent(i, j) {
                return Err(Error::InvalidInput(format!("multiple edges between {i} and {j}")));
            }
            p.set(i, j, Mark::Arrow);
            p.set(j, i, Mark::Tail);
        }
        for (i, j) in g.bidirected_edges() {
            if p.adjacent(i, j) {
                return Err(Error::InvalidInput(format!("multiple edges between {i} and {j}")));
            }
            p.set(i, j, Mark::Arrow);
            p.set(j, i, Mark::Arrow);
        }
        Ok(p)
    }

    /// Builds a PAG from `(i, j, mark at i, mark at j)` tuples.
    pub fn from_edges(d: usize, edges: &[(usize, usize, Mark, Mark)]) -> Result<Self> {
        let mut p = Self::empty(d);
        for &(i, j, mi, mj) in edges {
            if i >= d || j >= d || i == j {
                return Err(Error::InvalidInput(format!("invalid PAG edge ({i}, {j})")));
            }
            if mi == Mark::None || mj == Mark::None {
                return Err(Error::InvalidInput(format!("edge ({i}, {j}) has an empty mark")));
            }
            if mi == Mark::Tail && mj == Mark::Tail {
                return Err(Error::InvalidInput(format!("undirected edge ({i}, {j}) not supported")));
            }
            p.set(j, i, mi);
            p.set(i, j, mj);
        }
        Ok(p)
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    /// Mark at `j` on the edge `i - j`.
    #[inline]
    pub fn mark(&self, i: usize, j: usize) -> Mark {
        self.marks[i * self.d + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, m: Mark) {
        self.marks[i * self.d + j] = m;
    }

    #[inline]
    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        i != j && self.mark(i, j) != Mark::None
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.d).filter(|&j| self.adjacent(i, j)).collect()
    }

    pub fn skeleton(&self) -> Skeleton {
        let mut s = Skeleton::empty(self.d);
        for i in 0..self.d {
            for j in (i + 1)..self.d {
                if self.adjacent(i, j) {
                    s.set(i, j, true);
                }
            }
        }
        s
    }

    /// Edges as `(i, j, mark at i, mark at j)` with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize, Mark, Mark)> {
        let mut out = Vec::new();
        for i in 0..self.d {
            for j in (i + 1)..self.d {
                if self.adjacent(i, j) {
                    out.push((i, j, self.mark(j, i), self.mark(i, j)));
                }
            }
        }
        out
    }

    /// `i -> j` with an oriented tail and arrowhead.
    pub fn is_parent(&self, i: usize, j: usize) -> bool {
        self.mark(j, i) == Mark::Tail && self.mark(i, j) == Mark::Arrow
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut p = Self::empty(self.d);
        for i in 0..self.d {
            for j in 0..self.d {
                p.set(perm[i], perm[j], self.mark(i, j));
            }
        }
        p
    }
}
