//! Mixed graphs over observed variables.
//!
//! An [`Admg`] carries directed (`i -> j`) and bidirected (`i <-> j`) edges as
//! two dense boolean adjacency matrices. Graph reasoning here is exact and
//! purely combinatorial: ancestor closure, m-separation by reachability over
//! (node, arrival mark) states, maximal ancestral projection, and the
//! conversion of a MAG to the PAG of its Markov equivalence class.

mod orient;
mod pag;

pub use orient::{orient_pag, ColliderOracle};
pub use pag::{Mark, Pag};

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Above this node count, inseparability of a non-adjacent pair is decided by
/// the single candidate set `An({i, j}) \ {i, j}` rather than by enumerating
/// every conditioning subset.
pub const EXHAUSTIVE_SEPARATION_MAX_D: usize = 12;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Admg {
    d: usize,
    directed: Vec<bool>,
    bidirected: Vec<bool>,
}

impl Admg {
    pub fn empty(d: usize) -> Self {
        Self {
            d,
            directed: vec![false; d * d],
            bidirected: vec![false; d * d],
        }
    }

    /// Builds a graph from edge lists, validating indices and rejecting
    /// self-loops.
    pub fn from_edges(d: usize, directed: &[(usize, usize)], bidirected: &[(usize, usize)]) -> Result<Self> {
        let mut g = Self::empty(d);
        for &(i, j) in directed {
            g.check_pair(i, j)?;
            g.add_directed(i, j);
        }
        for &(i, j) in bidirected {
            g.check_pair(i, j)?;
            g.add_bidirected(i, j);
        }
        Ok(g)
    }

    fn check_pair(&self, i: usize, j: usize) -> Result<()> {
        if i >= self.d || j >= self.d {
            return Err(Error::InvalidInput(format!("edge ({i}, {j}) out of range for d = {}", self.d)));
        }
        if i == j {
            return Err(Error::InvalidInput(format!("self-loop on node {i}")));
        }
        Ok(())
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn has_directed(&self, i: usize, j: usize) -> bool {
        self.directed[i * self.d + j]
    }

    #[inline]
    pub fn has_bidirected(&self, i: usize, j: usize) -> bool {
        self.bidirected[i * self.d + j]
    }

    #[inline]
    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        self.has_directed(i, j) || self.has_directed(j, i) || self.has_bidirected(i, j)
    }

    pub fn add_directed(&mut self, i: usize, j: usize) {
        debug_assert_ne!(i, j);
        self.directed[i * self.d + j] = true;
    }

    pub fn remove_directed(&mut self, i: usize, j: usize) {
        self.directed[i * self.d + j] = false;
    }

    pub fn add_bidirected(&mut self, i: usize, j: usize) {
        debug_assert_ne!(i, j);
        self.bidirected[i * self.d + j] = true;
        self.bidirected[j * self.d + i] = true;
    }

    pub fn remove_bidirected(&mut self, i: usize, j: usize) {
        self.bidirected[i * self.d + j] = false;
        self.bidirected[j * self.d + i] = false;
    }

    /// Removes every edge between `i` and `j`.
    pub fn remove_all(&mut self, i: usize, j: usize) {
        self.remove_directed(i, j);
        self.remove_directed(j, i);
        self.remove_bidirected(i, j);
    }

    pub fn directed_edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.d {
            for j in 0..self.d {
                if self.has_directed(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Bidirected edges as `(i, j)` with `i < j`.
    pub fn bidirected_edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.d {
            for j in (i + 1)..self.d {
                if self.has_bidirected(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.directed.iter().filter(|&&e| e).count() + self.bidirected.iter().filter(|&&e| e).count() / 2
    }

    pub fn parents(&self, j: usize) -> Vec<usize> {
        (0..self.d).filter(|&i| self.has_directed(i, j)).collect()
    }

    pub fn children(&self, i: usize) -> Vec<usize> {
        (0..self.d).filter(|&j| self.has_directed(i, j)).collect()
    }

    pub fn spouses(&self, i: usize) -> Vec<usize> {
        (0..self.d).filter(|&j| self.has_bidirected(i, j)).collect()
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.d).filter(|&j| j != i && self.adjacent(i, j)).collect()
    }

    /// Nodes with a directed path into some member of `set`, including the
    /// members themselves.
    pub fn ancestors_of(&self, set: &[usize]) -> Vec<bool> {
        let mut anc = vec![false; self.d];
        let mut stack: Vec<usize> = Vec::with_capacity(self.d);
        for &v in set {
            if !anc[v] {
                anc[v] = true;
                stack.push(v);
            }
        }
        while let Some(v) = stack.pop() {
            for p in 0..self.d {
                if self.has_directed(p, v) && !anc[p] {
                    anc[p] = true;
                    stack.push(p);
                }
            }
        }
        anc
    }

    /// `m[i * d + j]` is true iff there is a directed path of length >= 1
    /// from `i` to `j`.
    pub fn proper_ancestor_matrix(&self) -> Vec<bool> {
        let d = self.d;
        let mut m = vec![false; d * d];
        let mut stack = Vec::with_capacity(d);
        for src in 0..d {
            stack.clear();
            for c in 0..d {
                if self.has_directed(src, c) && !m[src * d + c] {
                    m[src * d + c] = true;
                    stack.push(c);
                }
            }
            while let Some(v) = stack.pop() {
                for c in 0..d {
                    if self.has_directed(v, c) && !m[src * d + c] {
                        m[src * d + c] = true;
                        stack.push(c);
                    }
                }
            }
        }
        m
    }

    /// Kahn's algorithm over the directed part.
    pub fn is_directed_acyclic(&self) -> bool {
        self.topological_order().is_some()
    }

    /// A topological order of the directed part, smallest available index
    /// first, or `None` if there is a directed cycle.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let d = self.d;
        let mut indeg: Vec<usize> = (0..d).map(|j| self.parents(j).len()).collect();
        let mut ready: std::collections::BTreeSet<usize> = (0..d).filter(|&j| indeg[j] == 0).collect();
        let mut order = Vec::with_capacity(d);
        while let Some(&v) = ready.iter().next() {
            ready.remove(&v);
            order.push(v);
            for c in 0..d {
                if self.has_directed(v, c) {
                    indeg[c] -= 1;
                    if indeg[c] == 0 {
                        ready.insert(c);
                    }
                }
            }
        }
        (order.len() == d).then_some(order)
    }

    /// No directed cycle and no bidirected edge between a node and one of
    /// its ancestors. A bow `i -> j, i <-> j` is an almost directed cycle and
    /// therefore not ancestral.
    pub fn is_ancestral(&self) -> bool {
        if !self.is_directed_acyclic() {
            return false;
        }
        let anc = self.proper_ancestor_matrix();
        let d = self.d;
        for i in 0..d {
            for j in 0..d {
                if self.has_bidirected(i, j) && anc[i * d + j] {
                    return false;
                }
            }
        }
        true
    }

    pub fn is_bow_free(&self) -> bool {
        for i in 0..self.d {
            for j in 0..self.d {
                if self.has_directed(i, j) && (self.has_bidirected(i, j) || self.has_directed(j, i)) {
                    return false;
                }
            }
        }
        true
    }

    /// m-separation of `x` and `y` given `z`.
    ///
    /// Searches for an m-connecting walk over states `(node, arrived with an
    /// arrowhead)`. A collider may be passed iff it is in `An(z)`; a
    /// non-collider iff it is not in `z`.
    pub fn m_separated(&self, x: usize, y: usize, z: &[usize]) -> bool {
        debug_assert_ne!(x, y);
        let d = self.d;
        let mut in_z = vec![false; d];
        for &v in z {
            in_z[v] = true;
        }
        let an_z = self.ancestors_of(z);
        // visited[v * 2 + arrived_with_arrowhead]
        let mut visited = vec![false; d * 2];
        let mut queue = VecDeque::new();
        for w in 0..d {
            for (_, arrow_at_w) in self.incident(x, w) {
                let key = w * 2 + arrow_at_w as usize;
                if !visited[key] {
                    visited[key] = true;
                    queue.push_back((w, arrow_at_w));
                }
            }
        }
        while let Some((v, arrived_arrow)) = queue.pop_front() {
            if v == y {
                return false;
            }
            if v == x {
                continue;
            }
            for w in 0..d {
                for (arrow_at_v, arrow_at_w) in self.incident(v, w) {
                    let collider = arrived_arrow && arrow_at_v;
                    let pass = if collider { an_z[v] } else { !in_z[v] };
                    let key = w * 2 + arrow_at_w as usize;
                    if pass && !visited[key] {
                        visited[key] = true;
                        queue.push_back((w, arrow_at_w));
                    }
                }
            }
        }
        true
    }

    /// Edges between `v` and `w` as `(arrowhead at v, arrowhead at w)`.
    fn incident(&self, v: usize, w: usize) -> impl Iterator<Item = (bool, bool)> {
        let mut marks = [None, None, None];
        if v != w {
            if self.has_directed(v, w) {
                marks[0] = Some((false, true));
            }
            if self.has_directed(w, v) {
                marks[1] = Some((true, false));
            }
            if self.has_bidirected(v, w) {
                marks[2] = Some((true, true));
            }
        }
        marks.into_iter().flatten()
    }

    /// True iff some subset of the remaining nodes m-separates `i` and `j`.
    pub fn m_separable(&self, i: usize, j: usize) -> bool {
        if self.d <= EXHAUSTIVE_SEPARATION_MAX_D {
            self.m_separable_exhaustive(i, j)
        } else {
            self.m_separable_by_ancestors(i, j)
        }
    }

    /// Enumerates every subset of `V \ {i, j}`.
    pub fn m_separable_exhaustive(&self, i: usize, j: usize) -> bool {
        let others: Vec<usize> = (0..self.d).filter(|&v| v != i && v != j).collect();
        let k = others.len();
        let mut z = Vec::with_capacity(k);
        for mask in 0u64..(1u64 << k) {
            z.clear();
            z.extend((0..k).filter(|b| mask >> b & 1 == 1).map(|b| others[b]));
            if self.m_separated(i, j, &z) {
                return true;
            }
        }
        false
    }

    /// In an ancestral graph, a non-adjacent pair is m-separable iff it is
    /// m-separated by `An({i, j}) \ {i, j}`.
    pub fn m_separable_by_ancestors(&self, i: usize, j: usize) -> bool {
        let an = self.ancestors_of(&[i, j]);
        let z: Vec<usize> = (0..self.d).filter(|&v| an[v] && v != i && v != j).collect();
        self.m_separated(i, j, &z)
    }

    pub fn is_maximal(&self) -> bool {
        for i in 0..self.d {
            for j in (i + 1)..self.d {
                if !self.adjacent(i, j) && !self.m_separable(i, j) {
                    return false;
                }
            }
        }
        true
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

    /// Relabels nodes: node `v` of `self` becomes node `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut g = Self::empty(self.d);
        for (i, j) in self.directed_edges() {
            g.add_directed(perm[i], perm[j]);
        }
        for (i, j) in self.bidirected_edges() {
            g.add_bidirected(perm[i], perm[j]);
        }
        g
    }
}

/// Adds an edge between every non-adjacent pair that no set m-separates:
/// `i -> j` if `i` is an ancestor of `j`, `j -> i` in the converse case, and
/// `i <-> j` otherwise.
pub fn maximal_ancestral_projection(g: &Admg) -> Result<Admg> {
    if !g.is_ancestral() {
        return Err(Error::NotAncestral);
    }
    let d = g.d();
    let anc = g.proper_ancestor_matrix();
    let mut out = g.clone();
    for i in 0..d {
        for j in (i + 1)..d {
            if g.adjacent(i, j) || g.m_separable(i, j) {
                continue;
            }
            if anc[i * d + j] {
                out.add_directed(i, j);
            } else if anc[j * d + i] {
                out.add_directed(j, i);
            } else {
                out.add_bidirected(i, j);
            }
        }
    }
    Ok(out)
}

/// Converts a MAG to the PAG of its Markov equivalence class.
pub fn mag_to_pag(g: &Admg) -> Result<Pag> {
    if !g.is_ancestral() {
        return Err(Error::NotAncestral);
    }
    let d = g.d();
    for i in 0..d {
        for j in (i + 1)..d {
            if !g.adjacent(i, j) && !g.m_separable(i, j) {
                return Err(Error::NotMaximal(i, j));
            }
        }
    }
    let mut pag = Pag::circles_from_skeleton(&g.skeleton());
    orient_pag(&mut pag, &MagOracle { g });
    Ok(pag)
}

/// PAG of an ancestral graph that need not be maximal.
pub fn equivalence_pag(g: &Admg) -> Result<Pag> {
    mag_to_pag(&maximal_ancestral_projection(g)?)
}

/// Collider status read directly off a MAG's endpoint marks.
struct MagOracle<'a> {
    g: &'a Admg,
}

impl MagOracle<'_> {
    fn arrow_at(&self, from: usize, at: usize) -> bool {
        self.g.has_directed(from, at) || self.g.has_bidirected(from, at)
    }
}

impl ColliderOracle for MagOracle<'_> {
    fn unshielded_collider(&self, a: usize, b: usize, c: usize) -> bool {
        self.arrow_at(a, b) && self.arrow_at(c, b)
    }

    fn discriminated_collider(&self, _x: usize, a: usize, b: usize, c: usize) -> bool {
        self.arrow_at(a, b) && self.arrow_at(c, b)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Skeleton {
    d: usize,
    adj: Vec<bool>,
}

impl Skeleton {
    pub fn empty(d: usize) -> Self {
        Self { d, adj: vec![false; d * d] }
    }

    pub fn complete(d: usize) -> Self {
        let mut s = Self::empty(d);
        for i in 0..d {
            for j in (i + 1)..d {
                s.set(i, j, true);
            }
        }
        s
    }

    pub fn from_edges(d: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut s = Self::empty(d);
        for &(i, j) in edges {
            if i >= d || j >= d || i == j {
                return Err(Error::InvalidInput(format!("invalid skeleton edge ({i}, {j})")));
            }
            s.set(i, j, true);
        }
        Ok(s)
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        self.adj[i * self.d + j]
    }

    pub fn set(&mut self, i: usize, j: usize, on: bool) {
        debug_assert_ne!(i, j);
        self.adj[i * self.d + j] = on;
        self.adj[j * self.d + i] = on;
    }

    /// Unordered edges `(i, j)` with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.d {
            for j in (i + 1)..self.d {
                if self.adjacent(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.d).filter(|&j| self.adjacent(i, j)).collect()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().filter(|&&e| e).count() / 2
    }
}

/// `S = sign(D + D^T + B)`.
pub fn skeleton_of(g: &Admg) -> Skeleton {
    g.skeleton()
}
