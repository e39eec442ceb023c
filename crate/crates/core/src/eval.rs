//! External clustering metrics: ACC, NMI, ARI and community purity.

use std::collections::BTreeMap;

use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Community;

/// ACC, NMI and ARI of one labeling against ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
}

pub fn evaluate<P: Ord, T: Ord>(pred: &[P], truth: &[T]) -> Result<Metrics> {
    let table = Contingency::new(pred, truth)?;
    Ok(Metrics {
        acc: table.accuracy(),
        nmi: table.nmi(),
        ari: table.ari(),
    })
}

/// Maps arbitrary labels onto dense indices in sorted label order.
pub fn dense_labels<L: Ord>(labels: &[L]) -> (Vec<usize>, usize) {
    let mut ids = BTreeMap::new();
    for l in labels {
        let next = ids.len();
        ids.entry(l).or_insert(next);
    }
    // renumber so index order follows label order
    let order: BTreeMap<&L, usize> = ids.keys().enumerate().map(|(i, l)| (*l, i)).collect();
    (labels.iter().map(|l| order[l]).collect(), order.len())
}

/// Contingency table of predicted clusters (rows) against classes (columns).
#[derive(Debug, Clone)]
pub struct Contingency {
    counts: Vec<Vec<u64>>,
    rows: Vec<u64>,
    cols: Vec<u64>,
    n: u64,
}

impl Contingency {
    pub fn new<P: Ord, T: Ord>(pred: &[P], truth: &[T]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::LengthMismatch {
                pred: pred.len(),
                truth: truth.len(),
            });
        }
        if pred.is_empty() {
            return Err(Error::InvalidDataset("empty labeling".into()));
        }
        let (p, r) = dense_labels(pred);
        let (t, c) = dense_labels(truth);
        let mut counts = vec![vec![0u64; c]; r];
        for (&i, &j) in p.iter().zip(&t) {
            counts[i][j] += 1;
        }
        Ok(Self::from_counts(counts))
    }

    /// Builds a table directly from counts; rows and columns may be zero.
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Self {
        let c = counts.first().map_or(0, Vec::len);
        let rows: Vec<u64> = counts.iter().map(|r| r.iter().sum()).collect();
        let cols: Vec<u64> = (0..c).map(|j| counts.iter().map(|r| r[j]).sum()).collect();
        let n = rows.iter().sum();
        Self { counts, rows, cols, n }
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    /// Fraction of points matched under the best one-to-one pairing of
    /// clusters with classes; the table is padded to square with zeros.
    pub fn accuracy(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        let size = self.rows.len().max(self.cols.len());
        let mut m = Matrix::new(size, size, 0i64);
        for (i, row) in self.counts.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                m[(i, j)] = v as i64;
            }
        }
        let (matched, _) = kuhn_munkres(&m);
        matched as f64 / self.n as f64
    }

    /// True when every cluster maps to exactly one class and vice versa.
    fn is_bijective(&self) -> bool {
        let nonzero = |it: &mut dyn Iterator<Item = u64>| it.filter(|&v| v > 0).count() == 1;
        self.counts.iter().all(|r| nonzero(&mut r.iter().copied()))
            && (0..self.cols.len()).all(|j| nonzero(&mut self.counts.iter().map(|r| r[j])))
    }

    fn entropy(sizes: &[u64], n: f64) -> f64 {
        sizes
            .iter()
            .filter(|&&s| s > 0)
            .map(|&s| {
                let p = s as f64 / n;
                -p * p.ln()
            })
            .sum()
    }

    /// Mutual information normalized by the geometric mean of entropies.
    pub fn nmi(&self) -> f64 {
        if self.is_bijective() {
            return 1.0;
        }
        let n = self.n as f64;
        let hp = Self::entropy(&self.rows, n);
        let ht = Self::entropy(&self.cols, n);
        if hp == 0.0 || ht == 0.0 {
            return 0.0;
        }
        let mut mi = 0.0;
        for (i, row) in self.counts.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v > 0 {
                    let v = v as f64;
                    mi += v / n * (n * v / (self.rows[i] as f64 * self.cols[j] as f64)).ln();
                }
            }
        }
        (mi / (hp * ht).sqrt()).clamp(0.0, 1.0)
    }

    /// Adjusted Rand index, evaluated as one division of exact integers.
    pub fn ari(&self) -> f64 {
        let pairs = |x: u64| (x as i128) * (x as i128 - 1) / 2;
        let index: i128 = self.counts.iter().flatten().map(|&v| pairs(v)).sum();
        let a: i128 = self.rows.iter().map(|&v| pairs(v)).sum();
        let b: i128 = self.cols.iter().map(|&v| pairs(v)).sum();
        let total = pairs(self.n);
        let num = 2 * (total * index - a * b);
        let den = total * (a + b) - 2 * a * b;
        if den == 0 {
            // both labelings are all singletons or both a single cluster
            return 1.0;
        }
        num as f64 / den as f64
    }
}

pub fn accuracy<P: Ord, T: Ord>(pred: &[P], truth: &[T]) -> Result<f64> {
    Ok(Contingency::new(pred, truth)?.accuracy())
}

pub fn nmi<P: Ord, T: Ord>(pred: &[P], truth: &[T]) -> Result<f64> {
    Ok(Contingency::new(pred, truth)?.nmi())
}

pub fn ari<P: Ord, T: Ord>(pred: &[P], truth: &[T]) -> Result<f64> {
    Ok(Contingency::new(pred, truth)?.ari())
}

/// Share of the community belonging to its most frequent class.
/// `truth` is indexed by node.
pub fn purity<T: Ord>(c: &Community, truth: &[T]) -> Result<f64> {
    if c.is_empty() {
        return Err(Error::EmptyCommunity);
    }
    let mut freq: BTreeMap<&T, usize> = BTreeMap::new();
    for &m in c.members() {
        let label = truth.get(m).ok_or(Error::IndexOutOfRange {
            index: m,
            n: truth.len(),
        })?;
        *freq.entry(label).or_default() += 1;
    }
    let best = freq.values().copied().max().unwrap_or(0);
    Ok(best as f64 / c.len() as f64)
}
