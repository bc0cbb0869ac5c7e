//! Homogeneity, completeness and V-measure of a clustering against reference
//! groups. Entropies use natural logarithms.
//!
//! With classes `C` (reference groups) and clusters `K`:
//! `h = 1 - H(C|K) / H(C)`, `c = 1 - H(K|C) / H(K)`, and `V` is their
//! harmonic mean. `h = 1` when `H(C) = 0` and `c = 1` when `H(K) = 0`.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("label lists differ in length ({truth} reference vs {pred} predicted)")]
    LengthMismatch { truth: usize, pred: usize },
    #[error("cannot score an empty partition")]
    EmptyPartition,
    #[error("no piece scores to average")]
    EmptyScoreSet,
}

/// Reference and predicted labels, index-aligned and encoded as dense ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledPartition {
    truth: Vec<usize>,
    pred: Vec<usize>,
    n_classes: usize,
    n_clusters: usize,
}

fn encode<L: Ord>(labels: &[L]) -> (Vec<usize>, usize) {
    let mut ids: BTreeMap<&L, usize> = BTreeMap::new();
    let encoded = labels
        .iter()
        .map(|l| {
            let next = ids.len();
            *ids.entry(l).or_insert(next)
        })
        .collect();
    (encoded, ids.len())
}

impl LabeledPartition {
    pub fn new<A: Ord, B: Ord>(truth: &[A], pred: &[B]) -> Result<Self, MetricsError> {
        if truth.len() != pred.len() {
            return Err(MetricsError::LengthMismatch {
                truth: truth.len(),
                pred: pred.len(),
            });
        }
        if truth.is_empty() {
            return Err(MetricsError::EmptyPartition);
        }
        let (truth, n_classes) = encode(truth);
        let (pred, n_clusters) = encode(pred);
        Ok(LabeledPartition {
            truth,
            pred,
            n_classes,
            n_clusters,
        })
    }

    pub fn len(&self) -> usize {
        self.truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truth.is_empty()
    }

    /// Partition with the roles of reference and prediction exchanged.
    pub fn swapped(&self) -> Self {
        LabeledPartition {
            truth: self.pred.clone(),
            pred: self.truth.clone(),
            n_classes: self.n_clusters,
            n_clusters: self.n_classes,
        }
    }

    /// `table[c][k]` counts items of class `c` in cluster `k`.
    fn contingency(&self) -> Vec<Vec<usize>> {
        let mut table = alloc::vec![alloc::vec![0usize; self.n_clusters]; self.n_classes];
        for (&c, &k) in self.truth.iter().zip(&self.pred) {
            table[c][k] += 1;
        }
        table
    }

    pub fn scores(&self) -> Scores {
        let n = self.len() as f64;
        let table = self.contingency();
        let class_totals: Vec<usize> = table.iter().map(|row| row.iter().sum()).collect();
        let cluster_totals: Vec<usize> = (0..self.n_clusters)
            .map(|k| table.iter().map(|row| row[k]).sum())
            .collect();

        let entropy = |totals: &[usize]| -> f64 {
            -totals
                .iter()
                .filter(|&&t| t > 0)
                .map(|&t| {
                    let p = t as f64 / n;
                    p * libm::log(p)
                })
                .sum::<f64>()
        };
        let h_class = entropy(&class_totals);
        let h_cluster = entropy(&cluster_totals);

        let mut h_class_given_cluster = 0.0;
        let mut h_cluster_given_class = 0.0;
        for (c, row) in table.iter().enumerate() {
            for (k, &count) in row.iter().enumerate() {
                if count == 0 {
                    continue;
                }
                let joint = count as f64 / n;
                h_class_given_cluster -= joint * libm::log(count as f64 / cluster_totals[k] as f64);
                h_cluster_given_class -= joint * libm::log(count as f64 / class_totals[c] as f64);
            }
        }

        let homogeneity = if h_class == 0.0 {
            1.0
        } else {
            (1.0 - h_class_given_cluster / h_class).clamp(0.0, 1.0)
        };
        let completeness = if h_cluster == 0.0 {
            1.0
        } else {
            (1.0 - h_cluster_given_class / h_cluster).clamp(0.0, 1.0)
        };
        Scores::from_hc(homogeneity, completeness)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Scores {
    pub homogeneity: f64,
    pub completeness: f64,
    pub v_measure: f64,
}

impl Scores {
    pub fn from_hc(homogeneity: f64, completeness: f64) -> Self {
        Scores {
            homogeneity,
            completeness,
            v_measure: v_measure(homogeneity, completeness),
        }
    }
}

/// Harmonic mean of homogeneity and completeness, 0 when both are 0.
pub fn v_measure(homogeneity: f64, completeness: f64) -> f64 {
    let sum = homogeneity + completeness;
    if sum == 0.0 {
        0.0
    } else {
        2.0 * homogeneity * completeness / sum
    }
}

pub fn homogeneity(p: &LabeledPartition) -> f64 {
    p.scores().homogeneity
}

pub fn completeness(p: &LabeledPartition) -> f64 {
    p.scores().completeness
}

#[derive(Debug, Clone, PartialEq)]
pub struct PieceScore {
    pub piece_id: String,
    pub scores: Scores,
    /// Number of transcriptions scored.
    pub n: usize,
}

/// How per-piece scores are pooled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Averaging {
    /// Every piece counts equally.
    #[default]
    Macro,
    /// Pieces are weighted by their number of transcriptions.
    Micro,
}

pub fn mean_scores(per_piece: &[PieceScore], averaging: Averaging) -> Result<Scores, MetricsError> {
    if per_piece.is_empty() {
        return Err(MetricsError::EmptyScoreSet);
    }
    let weight = |p: &PieceScore| match averaging {
        Averaging::Macro => 1.0,
        Averaging::Micro => p.n as f64,
    };
    let total: f64 = per_piece.iter().map(weight).sum();
    let mean = |f: fn(&Scores) -> f64| per_piece.iter().map(|p| weight(p) * f(&p.scores)).sum::<f64>() / total;
    Ok(Scores {
        homogeneity: mean(|s| s.homogeneity),
        completeness: mean(|s| s.completeness),
        v_measure: mean(|s| s.v_measure),
    })
}
