//! Agglomerative clustering on a precomputed distance matrix.
//!
//! Cluster ids follow the usual convention: leaves are `0..n`, and the
//! cluster created by merge `k` gets id `n + k`. Among equally close pairs the
//! one with the smallest `(min id, max id)` is merged first, which makes the
//! tree reproducible.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::matrix::DistanceMatrix;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClusterError {
    #[error("distance matrix is not usable: {0}")]
    InvalidMatrix(&'static str),
    #[error("need at least two items to cluster, got {0}")]
    TooFewItems(usize),
    #[error("unknown linkage method `{0}`")]
    UnknownMethod(String),
    #[error("threshold must be non-negative, got {0}")]
    InvalidThreshold(f64),
    #[error("expected {expected} leaf names, got {got}")]
    LeafCount { expected: usize, got: usize },
}

/// Inter-cluster distance rule, applied through the Lance-Williams update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LinkageMethod {
    Single,
    Complete,
    /// UPGMA.
    Average,
    /// WPGMA.
    Weighted,
}

impl LinkageMethod {
    pub const ALL: [LinkageMethod; 4] = [
        LinkageMethod::Single,
        LinkageMethod::Complete,
        LinkageMethod::Average,
        LinkageMethod::Weighted,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LinkageMethod::Single => "single",
            LinkageMethod::Complete => "complete",
            LinkageMethod::Average => "average",
            LinkageMethod::Weighted => "weighted",
        }
    }

    /// Distance from the union of clusters `a` and `b` to a third cluster.
    fn update(self, d_a: f64, d_b: f64, size_a: usize, size_b: usize) -> f64 {
        match self {
            LinkageMethod::Single => d_a.min(d_b),
            LinkageMethod::Complete => d_a.max(d_b),
            LinkageMethod::Average => {
                let (na, nb) = (size_a as f64, size_b as f64);
                (na * d_a + nb * d_b) / (na + nb)
            }
            LinkageMethod::Weighted => 0.5 * (d_a + d_b),
        }
    }
}

impl fmt::Display for LinkageMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LinkageMethod {
    type Err = ClusterError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LinkageMethod::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| ClusterError::UnknownMethod(s.into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    /// The smaller of the two merged cluster ids.
    pub left: usize,
    pub right: usize,
    pub height: f64,
    /// Number of leaves under the new cluster.
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    n_leaves: usize,
    merges: Vec<Merge>,
}

impl Dendrogram {
    pub fn n_leaves(&self) -> usize {
        self.n_leaves
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    /// Newick rendering with branch lengths equal to height differences.
    pub fn to_newick<S: AsRef<str>>(&self, leaf_names: &[S]) -> Result<String, ClusterError> {
        if leaf_names.len() != self.n_leaves {
            return Err(ClusterError::LeafCount {
                expected: self.n_leaves,
                got: leaf_names.len(),
            });
        }
        let height = |id: usize| {
            if id < self.n_leaves {
                0.0
            } else {
                self.merges[id - self.n_leaves].height
            }
        };
        let mut text: Vec<Option<String>> = leaf_names
            .iter()
            .map(|s| Some(newick_label(s.as_ref())))
            .collect();
        for m in &self.merges {
            let h = m.height;
            let l = text[m.left].take().unwrap_or_default();
            let r = text[m.right].take().unwrap_or_default();
            text.push(Some(alloc::format!(
                "({}:{},{}:{})",
                l,
                h - height(m.left),
                r,
                h - height(m.right)
            )));
        }
        let mut root = text.pop().flatten().unwrap_or_default();
        root.push(';');
        Ok(root)
    }
}

fn newick_label(name: &str) -> String {
    let plain = !name.is_empty()
        && name
            .chars()
            .all(|c| !matches!(c, '(' | ')' | '[' | ']' | ':' | ';' | ',' | '\'') && !c.is_whitespace());
    if plain {
        name.into()
    } else {
        alloc::format!("'{}'", name.replace('\'', "''"))
    }
}

/// Runs agglomerative clustering and returns the `n - 1` merges.
pub fn linkage(d: &DistanceMatrix, method: LinkageMethod) -> Result<Dendrogram, ClusterError> {
    let n = d.n();
    if n < 2 {
        return Err(ClusterError::TooFewItems(n));
    }
    for i in 0..n {
        for j in 0..n {
            let x = d.get(i, j);
            if x.is_nan() {
                return Err(ClusterError::InvalidMatrix("contains NaN"));
            }
            if x < 0.0 {
                return Err(ClusterError::InvalidMatrix("negative entry"));
            }
            if !x.is_finite() {
                return Err(ClusterError::InvalidMatrix("infinite entry"));
            }
        }
    }
    if d.max_asymmetry() > 1e-9 {
        return Err(ClusterError::InvalidMatrix("not symmetric"));
    }

    // Working distances between slots; slot k holds cluster `ids[k]`.
    let mut dist: Vec<Vec<f64>> = (0..n).map(|i| d.row(i).to_vec()).collect();
    let mut ids: Vec<usize> = (0..n).collect();
    let mut sizes: Vec<usize> = vec![1; n];
    let mut active: Vec<bool> = vec![true; n];
    let mut merges = Vec::with_capacity(n - 1);

    for step in 0..n - 1 {
        let mut best: Option<(f64, (usize, usize), (usize, usize))> = None;
        for a in 0..n {
            if !active[a] {
                continue;
            }
            for b in a + 1..n {
                if !active[b] {
                    continue;
                }
                let key = (ids[a].min(ids[b]), ids[a].max(ids[b]));
                let x = dist[a][b];
                let better = match best {
                    None => true,
                    Some((bx, bkey, _)) => x < bx || (x == bx && key < bkey),
                };
                if better {
                    best = Some((x, key, (a, b)));
                }
            }
        }
        let (height, (left, right), (a, b)) = best.expect("at least two active clusters");
        let (size_a, size_b) = (sizes[a], sizes[b]);
        for k in 0..n {
            if active[k] && k != a && k != b {
                let v = method.update(dist[a][k], dist[b][k], size_a, size_b);
                dist[a][k] = v;
                dist[k][a] = v;
            }
        }
        active[b] = false;
        sizes[a] = size_a + size_b;
        ids[a] = n + step;
        merges.push(Merge {
            left,
            right,
            height,
            size: size_a + size_b,
        });
    }

    Ok(Dendrogram { n_leaves: n, merges })
}

/// Flat clusters, index-aligned with the rows of the clustered matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub num_clusters: usize,
}

impl ClusterAssignment {
    /// Relabels arbitrary cluster keys by order of first appearance.
    pub fn from_raw(raw: &[usize]) -> Self {
        let mut map: Vec<(usize, usize)> = Vec::new();
        let labels = raw
            .iter()
            .map(|&r| match map.iter().find(|(k, _)| *k == r) {
                Some(&(_, l)) => l,
                None => {
                    let l = map.len();
                    map.push((r, l));
                    l
                }
            })
            .collect();
        ClusterAssignment {
            labels,
            num_clusters: map.len(),
        }
    }
}

/// Cuts the tree at `threshold`: merges higher than the threshold are
/// dropped, and the remaining connected components become clusters.
pub fn cut(dgm: &Dendrogram, threshold: f64) -> ClusterAssignment {
    let n = dgm.n_leaves;
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    // Any leaf of each cluster id serves as its representative.
    let mut rep: Vec<usize> = (0..n).collect();
    for m in &dgm.merges {
        let (l, r) = (rep[m.left], rep[m.right]);
        if m.height <= threshold {
            let (a, b) = (find(&mut parent, l), find(&mut parent, r));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
        rep.push(l);
    }
    let roots: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
    ClusterAssignment::from_raw(&roots)
}

/// [`cut`] with a checked threshold.
pub fn try_cut(dgm: &Dendrogram, threshold: f64) -> Result<ClusterAssignment, ClusterError> {
    if threshold >= 0.0 {
        Ok(cut(dgm, threshold))
    } else {
        Err(ClusterError::InvalidThreshold(threshold))
    }
}
