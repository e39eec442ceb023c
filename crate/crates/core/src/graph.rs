//! Thresholded cosine-similarity graphs over subsets of a dataset.

use std::io::Write;

use crate::error::{Error, Result};
use crate::exec::{self, Parallelism};
use crate::model::Dataset;

/// Cosine similarity clamped to `[-1, 1]`.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    let nu = norm(u);
    let nv = norm(v);
    if nu == 0.0 {
        return Err(Error::ZeroVector(0));
    }
    if nv == 0.0 {
        return Err(Error::ZeroVector(1));
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Unit-normalized copies of the dataset rows, used for every similarity
/// evaluation. Raw rows stay untouched for Euclidean distances.
#[derive(Debug, Clone)]
pub struct UnitRows {
    rows: Vec<f64>,
    dim: usize,
    /// Rows whose norm is zero have no defined direction and never link.
    valid: Vec<bool>,
}

impl UnitRows {
    pub fn new(data: &Dataset) -> Self {
        let dim = data.dim();
        let mut rows = Vec::with_capacity(data.len() * dim);
        let mut valid = Vec::with_capacity(data.len());
        for i in 0..data.len() {
            let r = data.row(i);
            let n = norm(r);
            valid.push(n > 0.0);
            if n > 0.0 {
                rows.extend(r.iter().map(|v| v / n));
            } else {
                rows.extend(std::iter::repeat_n(0.0, dim));
            }
        }
        Self { rows, dim, valid }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    pub fn len(&self) -> usize {
        self.valid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.valid.is_empty()
    }

    /// Similarity of two rows, `None` if either has zero norm.
    pub fn similarity(&self, i: usize, j: usize) -> Option<f64> {
        (self.valid[i] && self.valid[j]).then(|| dot(self.row(i), self.row(j)).clamp(-1.0, 1.0))
    }

    /// Edge weight between `i` and `j` under `threshold`, if any.
    #[inline]
    pub fn edge(&self, i: usize, j: usize, threshold: f64) -> Option<f64> {
        self.similarity(i, j).filter(|&s| s > threshold)
    }

    /// Graph over `subset` with an edge wherever similarity exceeds
    /// `threshold`.
    pub fn build_graph(
        &self,
        subset: &[usize],
        threshold: f64,
        mode: Parallelism,
    ) -> Result<WeightedGraph> {
        if subset.is_empty() {
            return Err(Error::InvalidGraph("empty node subset".into()));
        }
        if !(-1.0..1.0).contains(&threshold) {
            return Err(Error::InvalidConfig(format!(
                "threshold {threshold} outside [-1, 1)"
            )));
        }
        let mut nodes = subset.to_vec();
        nodes.sort_unstable();
        nodes.dedup();
        if let Some(&bad) = nodes.iter().find(|&&i| i >= self.len()) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                n: self.len(),
            });
        }
        let upper: Vec<Vec<(u32, f64)>> = exec::map_range(mode, nodes.len(), |a| {
            let i = nodes[a];
            (a + 1..nodes.len())
                .filter_map(|b| self.edge(i, nodes[b], threshold).map(|w| (b as u32, w)))
                .collect()
        });
        Ok(WeightedGraph::from_upper(nodes, upper))
    }
}

/// Undirected weighted graph over a set of dataset rows.
///
/// Adjacency is stored with local indices (positions in `nodes`), sorted by
/// neighbor. No self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    nodes: Vec<usize>,
    adjacency: Vec<Vec<(u32, f64)>>,
    total_weight: f64,
}

impl WeightedGraph {
    fn from_upper(nodes: Vec<usize>, upper: Vec<Vec<(u32, f64)>>) -> Self {
        let mut adjacency: Vec<Vec<(u32, f64)>> = vec![Vec::new(); nodes.len()];
        let mut total_weight = 0.0;
        for (a, row) in upper.into_iter().enumerate() {
            for (b, w) in row {
                total_weight += w;
                adjacency[b as usize].push((a as u32, w));
                adjacency[a].push((b, w));
            }
        }
        Self {
            nodes,
            adjacency,
            total_weight,
        }
    }

    /// Graph from an explicit edge list over global node ids. Weights must
    /// be positive and finite; duplicates and self-loops are rejected.
    pub fn from_edges(nodes: &[usize], edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut nodes = nodes.to_vec();
        nodes.sort_unstable();
        nodes.dedup();
        let mut upper: Vec<Vec<(u32, f64)>> = vec![Vec::new(); nodes.len()];
        for &(u, v, w) in edges {
            if u == v {
                return Err(Error::InvalidGraph(format!("self-loop on node {u}")));
            }
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::InvalidGraph(format!(
                    "edge ({u}, {v}) has invalid weight {w}"
                )));
            }
            let a = nodes.binary_search(&u).map_err(|_| Error::UnknownNode(u))?;
            let b = nodes.binary_search(&v).map_err(|_| Error::UnknownNode(v))?;
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            upper[lo].push((hi as u32, w));
        }
        for (a, row) in upper.iter_mut().enumerate() {
            row.sort_by_key(|e| e.0);
            if let Some(pair) = row.windows(2).find(|p| p[0].0 == p[1].0) {
                return Err(Error::InvalidGraph(format!(
                    "duplicate edge ({}, {})",
                    nodes[a], nodes[pair[0].0 as usize]
                )));
            }
        }
        Ok(Self::from_upper(nodes, upper))
    }

    /// Global node ids, ascending.
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Sum of edge weights over unordered pairs.
    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    pub fn local_index(&self, node: usize) -> Option<usize> {
        self.nodes.binary_search(&node).ok()
    }

    /// Neighbors of local node `a` as `(local index, weight)`.
    pub fn neighbors(&self, a: usize) -> &[(u32, f64)] {
        &self.adjacency[a]
    }

    /// Edges `(u, v, w)` with global ids and `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.adjacency.iter().enumerate().flat_map(move |(a, row)| {
            row.iter()
                .filter(move |(b, _)| (*b as usize) > a)
                .map(move |&(b, w)| (self.nodes[a], self.nodes[b as usize], w))
        })
    }

    pub fn weighted_degree(&self, node: usize) -> Result<f64> {
        let a = self.local_index(node).ok_or(Error::UnknownNode(node))?;
        Ok(self.local_degree(a))
    }

    pub(crate) fn local_degree(&self, a: usize) -> f64 {
        self.adjacency[a].iter().map(|e| e.1).sum()
    }

    /// Mean weighted degree over `members`, counting only edges inside
    /// `members`.
    pub fn avg_degree(&self, members: &[usize]) -> Result<f64> {
        if members.is_empty() {
            return Err(Error::EmptyCommunity);
        }
        let mut inside = vec![false; self.nodes.len()];
        let mut locals = Vec::with_capacity(members.len());
        for &m in members {
            let a = self.local_index(m).ok_or(Error::UnknownNode(m))?;
            if !inside[a] {
                inside[a] = true;
                locals.push(a);
            }
        }
        let total: f64 = locals
            .iter()
            .map(|&a| {
                self.adjacency[a]
                    .iter()
                    .filter(|(b, _)| inside[*b as usize])
                    .map(|e| e.1)
                    .sum::<f64>()
            })
            .sum();
        Ok(total / locals.len() as f64)
    }

    /// Writes `u v weight` per edge, `u < v`, global ids.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> Result<()> {
        for (u, v, w) in self.edges() {
            writeln!(out, "{u} {v} {w}")?;
        }
        Ok(())
    }
}

/// Builds the similarity graph on `subset` of `data`.
pub fn build_graph(data: &Dataset, subset: &[usize], threshold: f64) -> Result<WeightedGraph> {
    build_graph_with(data, subset, threshold, Parallelism::default())
}

pub fn build_graph_with(
    data: &Dataset,
    subset: &[usize],
    threshold: f64,
    mode: Parallelism,
) -> Result<WeightedGraph> {
    if let Some(&bad) = subset.iter().find(|&&i| i >= data.len()) {
        return Err(Error::IndexOutOfRange {
            index: bad,
            n: data.len(),
        });
    }
    UnitRows::new(data).build_graph(subset, threshold, mode)
}

/// Parses an edge list of `u v weight` lines; blank lines and `#` comments
/// are skipped. Nodes are every id mentioned.
pub fn parse_edge_list(text: &str) -> Result<WeightedGraph> {
    let mut edges = Vec::new();
    let mut nodes = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let ctx = || format!("edge list line {}", lineno + 1);
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 && fields.len() != 2 {
            return Err(Error::parse(ctx(), "expected `u v weight`"));
        }
        let u: usize = fields[0].parse().map_err(|e| Error::parse(ctx(), format!("{e}")))?;
        let v: usize = fields[1].parse().map_err(|e| Error::parse(ctx(), format!("{e}")))?;
        let w: f64 = match fields.get(2) {
            Some(f) => f.parse().map_err(|e| Error::parse(ctx(), format!("{e}")))?,
            None => 1.0,
        };
        nodes.push(u);
        nodes.push(v);
        edges.push((u, v, w));
    }
    WeightedGraph::from_edges(&nodes, &edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn data(rows: &[&[f64]]) -> Dataset {
        Dataset::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine_similarity(&[3.0, 4.0], &[3.0, 4.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let s = cosine_similarity(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((s - 0.7071).abs() < 1e-4);
        assert!((s - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!(matches!(cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::ZeroVector(_))));
    }

    #[test]
    fn identical_rows_share_unit_edge() {
        let d = data(&[&[1.0, 2.0], &[1.0, 2.0]]);
        let g = build_graph(&d, &[0, 1], 0.5).unwrap();
        assert_eq!(g.edge_count(), 1);
        assert!((g.total_weight() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_rows_stay_isolated() {
        let d = data(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let g = build_graph(&d, &[1, 0], 0.5).unwrap();
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.nodes(), &[0, 1]);
        assert_eq!(g.weighted_degree(0).unwrap(), 0.0);
    }

    #[test]
    fn threshold_is_strict() {
        // cos = 0.6 exactly for (3,4) vs (1,0)? 3/5 = 0.6
        let d = data(&[&[3.0, 4.0], &[1.0, 0.0]]);
        let s = UnitRows::new(&d).similarity(0, 1).unwrap();
        assert_eq!(build_graph(&d, &[0, 1], s).unwrap().edge_count(), 0);
        assert_eq!(build_graph(&d, &[0, 1], s - 1e-9).unwrap().edge_count(), 1);
    }

    #[test]
    fn degree_examples() {
        let g = WeightedGraph::from_edges(&[0, 1, 2], &[(0, 1, 0.6), (0, 2, 0.8)]).unwrap();
        assert!((g.weighted_degree(0).unwrap() - 1.4).abs() < 1e-12);
        assert!(matches!(g.weighted_degree(9), Err(Error::UnknownNode(9))));

        let tri = WeightedGraph::from_edges(&[0, 1, 2], &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap();
        for v in 0..3 {
            assert_eq!(tri.weighted_degree(v).unwrap(), 2.0);
        }
        assert_eq!(tri.avg_degree(&[0, 1, 2]).unwrap(), 2.0);
        assert_eq!(tri.avg_degree(&[1]).unwrap(), 0.0);
        assert!(tri.avg_degree(&[]).is_err());

        let path = WeightedGraph::from_edges(&[0, 1, 2], &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        assert!((path.avg_degree(&[0, 1, 2]).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        // induced on {0, 1}: one edge
        assert_eq!(path.avg_degree(&[0, 1]).unwrap(), 1.0);
    }

    #[test]
    fn edge_list_rejects_bad_input() {
        assert!(WeightedGraph::from_edges(&[0, 1], &[(0, 0, 1.0)]).is_err());
        assert!(WeightedGraph::from_edges(&[0, 1], &[(0, 1, -1.0)]).is_err());
        assert!(WeightedGraph::from_edges(&[0, 1], &[(0, 1, 1.0), (1, 0, 1.0)]).is_err());
        assert!(parse_edge_list("0 1 x").is_err());
    }

    #[test]
    fn edge_list_round_trip() {
        let g = WeightedGraph::from_edges(&[2, 5, 7], &[(7, 2, 0.75), (2, 5, 0.5)]).unwrap();
        let mut buf = Vec::new();
        g.write_edge_list(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "2 5 0.5\n2 7 0.75\n");
        assert_eq!(parse_edge_list(&text).unwrap(), g);
    }

    fn rows_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (1usize..4).prop_flat_map(|d| prop::collection::vec(prop::collection::vec(-1.0f64..1.0, d), 1..25))
    }

    proptest! {
        #[test]
        fn graph_invariants(rows in rows_strategy(), threshold in -0.5f64..0.9) {
            let d = Dataset::from_rows(&rows).unwrap();
            let subset: Vec<usize> = (0..d.len()).rev().collect();
            let g = build_graph_with(&d, &subset, threshold, Parallelism::Parallel).unwrap();
            let g_seq = build_graph_with(&d, &(0..d.len()).collect::<Vec<_>>(), threshold, Parallelism::Sequential).unwrap();
            prop_assert_eq!(&g, &g_seq);

            let mut degree_sum = 0.0;
            for a in 0..g.node_count() {
                for &(b, w) in g.neighbors(a) {
                    prop_assert!(b as usize != a);
                    prop_assert!(w > threshold && w <= 1.0);
                    let back = g.neighbors(b as usize).iter().find(|e| e.0 as usize == a).unwrap();
                    prop_assert_eq!(back.1.to_bits(), w.to_bits());
                }
                degree_sum += g.local_degree(a);
            }
            let recomputed: f64 = g.edges().map(|e| e.2).sum();
            let scale = g.total_weight().abs().max(1.0);
            prop_assert!((recomputed - g.total_weight()).abs() <= 1e-9 * scale);
            prop_assert!((degree_sum - 2.0 * g.total_weight()).abs() <= 1e-9 * scale);
        }
    }
}
