//! Modularity and modularity-maximizing community detection.
//!
//! Both detectors share the same aggregate network representation and the
//! same gain formula. For a node `v` detached from its community, moving it
//! into community `C` changes modularity proportionally to
//!
//! ```text
//! w(v, C) - k_v * K_C / (2W)
//! ```
//!
//! where `w(v, C)` is the edge weight between `v` and `C`, `k_v` the weighted
//! degree of `v` and `K_C` the summed degree of `C`. The resolution is fixed
//! at 1.
//!
//! Leiden adds a refinement phase between local moving and aggregation:
//! each community is rebuilt from singletons by merging only well-connected
//! nodes into well-connected sub-communities, and the aggregate network is
//! built from those refined pieces. Communities returned by [`leiden`] are
//! therefore always connected, which [`louvain`] does not guarantee.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::model::{Algorithm, Community, Partition};

/// Smallest modularity increase that justifies another outer pass.
pub const QUALITY_EPSILON: f64 = 1e-12;

/// Upper bound on repeated Leiden iterations from the previous result.
const MAX_OUTER_ITERATIONS: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub partition: Partition,
    pub modularity: f64,
    pub algorithm: Algorithm,
    /// Number of local-moving passes (one per aggregation level).
    pub passes: usize,
    /// Modularity after every pass, in order.
    pub quality_trace: Vec<f64>,
}

/// Summary of a detection run, as stored in traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSummary {
    pub nodes: usize,
    pub edges: usize,
    pub communities: usize,
    pub modularity: f64,
    pub passes: usize,
}

impl DetectionResult {
    pub fn summary(&self, graph: &WeightedGraph) -> DetectionSummary {
        DetectionSummary {
            nodes: graph.node_count(),
            edges: graph.edge_count(),
            communities: self.partition.len(),
            modularity: self.modularity,
            passes: self.passes,
        }
    }
}

/// Modularity of `partition` on `graph`; zero for an edgeless graph.
pub fn modularity(graph: &WeightedGraph, partition: &Partition) -> Result<f64> {
    if partition.nodes() != graph.nodes() {
        return Err(Error::PartitionMismatch(format!(
            "partition covers {} nodes, graph has {}",
            partition.nodes().len(),
            graph.node_count()
        )));
    }
    Ok(modularity_of_labels(graph, &partition.labels()))
}

/// `labels[a]` is the community of local node `a`.
pub(crate) fn modularity_of_labels(graph: &WeightedGraph, labels: &[usize]) -> f64 {
    let w = graph.total_weight();
    if w <= 0.0 {
        return 0.0;
    }
    let communities = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut internal = vec![0.0; communities];
    let mut degree = vec![0.0; communities];
    for a in 0..graph.node_count() {
        let c = labels[a];
        for &(b, wt) in graph.neighbors(a) {
            degree[c] += wt;
            if labels[b as usize] == c {
                // each internal edge is seen from both ends
                internal[c] += wt;
            }
        }
    }
    let two_w = 2.0 * w;
    internal
        .iter()
        .zip(&degree)
        .map(|(i, d)| i - d * d / two_w)
        .sum::<f64>()
        / two_w
}

/// True iff the subgraph induced on the community's members is connected.
pub fn is_internally_connected(community: &Community, graph: &WeightedGraph) -> Result<bool> {
    let members = community.members();
    let mut inside = vec![false; graph.node_count()];
    let mut locals = Vec::with_capacity(members.len());
    for &m in members {
        let a = graph.local_index(m).ok_or(Error::UnknownNode(m))?;
        inside[a] = true;
        locals.push(a);
    }
    if locals.len() <= 1 {
        return Ok(true);
    }
    let mut seen = vec![false; graph.node_count()];
    let mut stack = vec![locals[0]];
    seen[locals[0]] = true;
    let mut reached = 1;
    while let Some(a) = stack.pop() {
        for &(b, _) in graph.neighbors(a) {
            let b = b as usize;
            if inside[b] && !seen[b] {
                seen[b] = true;
                reached += 1;
                stack.push(b);
            }
        }
    }
    Ok(reached == locals.len())
}

/// Seeded restarts performed by [`leiden`]; the best modularity wins.
pub const DEFAULT_RESTARTS: usize = 8;

/// Leiden community detection with [`DEFAULT_RESTARTS`] seeded restarts.
pub fn leiden(graph: &WeightedGraph, seed: u64) -> DetectionResult {
    leiden_with_restarts(graph, seed, DEFAULT_RESTARTS)
}

/// Runs Leiden `restarts` times (at least once) with seeds derived from
/// `seed` and keeps the result with the highest modularity. Ties keep the
/// earliest run.
pub fn leiden_with_restarts(graph: &WeightedGraph, seed: u64, restarts: usize) -> DetectionResult {
    let base = Network::from_graph(graph);
    let mut best: Option<DetectionResult> = None;
    for r in 0..restarts.max(1) {
        let run_seed = if r == 0 { seed } else { crate::rng::derive_seed(seed, crate::rng::Stream::Leiden, r as u64) };
        let result = leiden_once(graph, &base, run_seed);
        let better = match &best {
            None => true,
            Some(b) => result.modularity > b.modularity + QUALITY_EPSILON,
        };
        if better {
            best = Some(result);
        }
        if graph.edge_count() == 0 {
            break;
        }
    }
    best.expect("at least one run")
}

/// A single Leiden run, iterated from its own output until modularity
/// stops improving.
fn leiden_once(graph: &WeightedGraph, base: &Network, seed: u64) -> DetectionResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<usize> = (0..base.len()).collect();
    let mut trace = Vec::new();
    let mut passes = 0;
    let mut best_q = modularity_of_labels(graph, &labels);
    for _ in 0..MAX_OUTER_ITERATIONS {
        let (next, level_trace) = leiden_levels(base, &labels, &mut rng, graph);
        passes += level_trace.len();
        trace.extend(level_trace);
        let q = modularity_of_labels(graph, &next);
        let improved = q > best_q + QUALITY_EPSILON;
        let changed = canonical(&next) != canonical(&labels);
        labels = next;
        best_q = best_q.max(q);
        if !improved || !changed {
            break;
        }
    }
    finish(graph, &labels, Algorithm::Leiden, passes, trace)
}

/// Classic Louvain: sweep local moving followed by aggregation, without
/// refinement.
pub fn louvain(graph: &WeightedGraph, seed: u64) -> DetectionResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Network::from_graph(graph);
    let mut membership: Vec<usize> = (0..net.len()).collect();
    let mut trace = Vec::new();
    let mut passes = 0;
    loop {
        let mut part: Vec<usize> = (0..net.len()).collect();
        let moves = net.sweep_move(&mut part, &mut rng);
        passes += 1;
        let flat: Vec<usize> = membership.iter().map(|&m| part[m]).collect();
        trace.push(modularity_of_labels(graph, &flat));
        if moves == 0 {
            break;
        }
        let (dense, count) = relabel(&part);
        net = net.aggregate(&dense, count);
        membership.iter_mut().for_each(|m| *m = dense[*m]);
    }
    finish(graph, &membership, Algorithm::Louvain, passes, trace)
}

/// Dispatch on the configured algorithm.
pub fn detect(graph: &WeightedGraph, algorithm: Algorithm, seed: u64) -> DetectionResult {
    match algorithm {
        Algorithm::Leiden => leiden(graph, seed),
        Algorithm::Louvain => louvain(graph, seed),
    }
}

fn finish(
    graph: &WeightedGraph,
    labels: &[usize],
    algorithm: Algorithm,
    passes: usize,
    quality_trace: Vec<f64>,
) -> DetectionResult {
    let partition =
        Partition::from_labels(graph.nodes(), labels).expect("labels cover every graph node");
    let modularity = modularity_of_labels(graph, &partition.labels());
    DetectionResult {
        partition,
        modularity,
        algorithm,
        passes,
        quality_trace,
    }
}

/// One full Leiden run starting from `initial` (labels per base node).
/// Returns the final labels and the modularity after each level's moving
/// phase.
fn leiden_levels(
    base: &Network,
    initial: &[usize],
    rng: &mut ChaCha8Rng,
    graph: &WeightedGraph,
) -> (Vec<usize>, Vec<f64>) {
    let mut net = base.clone();
    let mut membership: Vec<usize> = (0..base.len()).collect();
    let (mut part, _) = relabel(initial);
    let mut trace = Vec::new();
    loop {
        net.fast_move(&mut part, rng);
        let flat: Vec<usize> = membership.iter().map(|&m| part[m]).collect();
        trace.push(modularity_of_labels(graph, &flat));

        let (dense_part, part_count) = relabel(&part);
        if part_count == net.len() {
            // every aggregate node is alone: its members form the communities
            return (membership, trace);
        }
        let mut refined = net.refine(&dense_part, part_count, rng);
        let (mut dense_refined, mut refined_count) = relabel(&refined);
        if refined_count == net.len() {
            refined = net.components_within(&dense_part);
            (dense_refined, refined_count) = relabel(&refined);
            if refined_count == net.len() {
                return (membership, trace);
            }
        }
        // each refined community lies inside one community of `part`
        let mut next_part = vec![0; refined_count];
        for (v, &r) in dense_refined.iter().enumerate() {
            next_part[r] = dense_part[v];
        }
        net = net.aggregate(&dense_refined, refined_count);
        membership.iter_mut().for_each(|m| *m = dense_refined[*m]);
        part = next_part;
    }
}

/// Dense relabeling in order of first appearance.
fn relabel(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = std::collections::HashMap::new();
    let dense = labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect();
    (dense, map.len())
}

fn canonical(labels: &[usize]) -> Vec<usize> {
    relabel(labels).0
}

/// Weighted network on aggregate nodes. Self-loops are dropped since they
/// never affect move gains; `strength` keeps the full degree of each node.
#[derive(Debug, Clone)]
struct Network {
    adjacency: Vec<Vec<(usize, f64)>>,
    strength: Vec<f64>,
    /// Twice the total edge weight.
    total: f64,
}

impl Network {
    fn from_graph(graph: &WeightedGraph) -> Self {
        let adjacency: Vec<Vec<(usize, f64)>> = (0..graph.node_count())
            .map(|a| graph.neighbors(a).iter().map(|&(b, w)| (b as usize, w)).collect())
            .collect();
        let strength: Vec<f64> = (0..graph.node_count()).map(|a| graph.local_degree(a)).collect();
        Self {
            adjacency,
            strength,
            total: 2.0 * graph.total_weight(),
        }
    }

    fn len(&self) -> usize {
        self.strength.len()
    }

    fn tolerance(&self, v: usize) -> f64 {
        1e-12 * self.strength[v].max(1.0)
    }

    /// Queue-based local moving: every node whose neighborhood changed is
    /// revisited. Returns the number of moves.
    fn fast_move(&self, labels: &mut [usize], rng: &mut ChaCha8Rng) -> usize {
        let n = self.len();
        if self.total <= 0.0 {
            return 0;
        }
        let mut comm_weight = vec![0.0; n];
        let mut comm_size = vec![0usize; n];
        for v in 0..n {
            comm_weight[labels[v]] += self.strength[v];
            comm_size[labels[v]] += 1;
        }
        let mut empty: Vec<usize> = (0..n).filter(|&c| comm_size[c] == 0).collect();

        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut queue: VecDeque<usize> = order.into();
        let mut queued = vec![true; n];

        let mut link = vec![0.0; n];
        let mut touched: Vec<usize> = Vec::new();
        let mut moves = 0;

        while let Some(v) = queue.pop_front() {
            queued[v] = false;
            let old = labels[v];
            let kv = self.strength[v];
            comm_weight[old] -= kv;
            comm_size[old] -= 1;
            if comm_size[old] == 0 {
                empty.push(old);
            }

            touched.clear();
            for &(u, w) in &self.adjacency[v] {
                let c = labels[u];
                if link[c] == 0.0 {
                    touched.push(c);
                }
                link[c] += w;
            }

            let gain = |c: usize, link_c: f64| link_c - kv * comm_weight[c] / self.total;
            let mut best = old;
            let mut best_gain = gain(old, link[old]);
            let tol = self.tolerance(v);
            for &c in &touched {
                if c == old {
                    continue;
                }
                let g = gain(c, link[c]);
                if g > best_gain + tol {
                    best = c;
                    best_gain = g;
                }
            }
            if comm_size[old] > 0 && 0.0 > best_gain + tol {
                best = *empty.last().expect("a community slot is free");
            }
            for &c in &touched {
                link[c] = 0.0;
            }

            if best != old {
                if comm_size[best] == 0 {
                    // taken from the top of the free list above
                    empty.pop();
                }
                moves += 1;
                for &(u, _) in &self.adjacency[v] {
                    if !queued[u] && labels[u] != best {
                        queued[u] = true;
                        queue.push_back(u);
                    }
                }
            } else if comm_size[old] == 0 {
                empty.pop();
            }
            labels[v] = best;
            comm_weight[best] += kv;
            comm_size[best] += 1;
        }
        moves
    }

    /// Louvain-style local moving: full sweeps in a fresh random order until
    /// a sweep moves nothing. Starts from `labels`.
    fn sweep_move(&self, labels: &mut [usize], rng: &mut ChaCha8Rng) -> usize {
        let n = self.len();
        if self.total <= 0.0 {
            return 0;
        }
        let mut comm_weight = vec![0.0; n];
        for v in 0..n {
            comm_weight[labels[v]] += self.strength[v];
        }
        let mut link = vec![0.0; n];
        let mut touched = Vec::new();
        let mut order: Vec<usize> = (0..n).collect();
        let mut total_moves = 0;
        loop {
            order.shuffle(rng);
            let mut moves = 0;
            for &v in &order {
                let old = labels[v];
                let kv = self.strength[v];
                comm_weight[old] -= kv;
                touched.clear();
                for &(u, w) in &self.adjacency[v] {
                    let c = labels[u];
                    if link[c] == 0.0 {
                        touched.push(c);
                    }
                    link[c] += w;
                }
                let gain = |c: usize, link_c: f64| link_c - kv * comm_weight[c] / self.total;
                let mut best = old;
                let mut best_gain = gain(old, link[old]);
                let tol = self.tolerance(v);
                for &c in &touched {
                    if c != old {
                        let g = gain(c, link[c]);
                        if g > best_gain + tol {
                            best = c;
                            best_gain = g;
                        }
                    }
                }
                for &c in &touched {
                    link[c] = 0.0;
                }
                labels[v] = best;
                comm_weight[best] += kv;
                if best != old {
                    moves += 1;
                }
            }
            total_moves += moves;
            if moves == 0 {
                return total_moves;
            }
        }
    }

    /// Leiden refinement: inside every community of `part`, start from
    /// singletons and greedily merge well-connected nodes into
    /// well-connected refined communities when modularity strictly
    /// increases.
    fn refine(&self, part: &[usize], part_count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let n = self.len();
        let mut refined: Vec<usize> = (0..n).collect();
        let mut refined_weight = self.strength.clone();
        let mut refined_size = vec![1usize; n];

        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); part_count];
        for v in 0..n {
            groups[part[v]].push(v);
        }
        let mut group_weight = vec![0.0; part_count];
        for v in 0..n {
            group_weight[part[v]] += self.strength[v];
        }
        // weight from each node (and later each refined community) to the
        // rest of its group
        let mut external = vec![0.0; n];
        for v in 0..n {
            external[v] = self.adjacency[v]
                .iter()
                .filter(|(u, _)| part[*u] == part[v])
                .map(|e| e.1)
                .sum();
        }
        let node_external = external.clone();

        let mut link = vec![0.0; n];
        let mut touched = Vec::new();
        for (g, members) in groups.iter_mut().enumerate() {
            if members.len() < 2 {
                continue;
            }
            let k_group = group_weight[g];
            members.shuffle(rng);
            for &v in members.iter() {
                let kv = self.strength[v];
                let well_connected = node_external[v] >= kv * (k_group - kv) / self.total;
                if !well_connected || refined_size[refined[v]] != 1 {
                    continue;
                }
                let own = refined[v];
                touched.clear();
                for &(u, w) in &self.adjacency[v] {
                    if part[u] != g {
                        continue;
                    }
                    let c = refined[u];
                    if c == own {
                        continue;
                    }
                    if link[c] == 0.0 {
                        touched.push(c);
                    }
                    link[c] += w;
                }
                let mut best = own;
                let mut best_gain = 0.0;
                let tol = self.tolerance(v);
                for &c in &touched {
                    let kc = refined_weight[c];
                    let c_connected = external[c] >= kc * (k_group - kc) / self.total;
                    if !c_connected || link[c] <= 0.0 {
                        continue;
                    }
                    let gain = link[c] - kv * kc / self.total;
                    if gain > best_gain + tol {
                        best = c;
                        best_gain = gain;
                    }
                }
                if best != own {
                    external[best] += node_external[v] - 2.0 * link[best];
                    refined_weight[best] += kv;
                    refined_size[best] += 1;
                    refined_weight[own] = 0.0;
                    refined_size[own] = 0;
                    refined[v] = best;
                }
                for &c in &touched {
                    link[c] = 0.0;
                }
            }
        }
        refined
    }

    /// Connected components of every community of `part`.
    fn components_within(&self, part: &[usize]) -> Vec<usize> {
        let n = self.len();
        let mut comp = vec![usize::MAX; n];
        let mut next = 0;
        let mut stack = Vec::new();
        for s in 0..n {
            if comp[s] != usize::MAX {
                continue;
            }
            comp[s] = next;
            stack.push(s);
            while let Some(v) = stack.pop() {
                for &(u, _) in &self.adjacency[v] {
                    if comp[u] == usize::MAX && part[u] == part[s] {
                        comp[u] = next;
                        stack.push(u);
                    }
                }
            }
            next += 1;
        }
        comp
    }

    /// Collapses each community of `labels` (dense, `count` values) into a
    /// node.
    fn aggregate(&self, labels: &[usize], count: usize) -> Network {
        let mut strength = vec![0.0; count];
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); count];
        for v in 0..self.len() {
            let cv = labels[v];
            strength[cv] += self.strength[v];
            for &(u, w) in &self.adjacency[v] {
                let cu = labels[u];
                if cu != cv {
                    rows[cv].push((cu, w));
                }
            }
        }
        let adjacency = rows
            .into_iter()
            .map(|mut row| {
                row.sort_by_key(|e| e.0);
                let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
                for (u, w) in row {
                    match merged.last_mut() {
                        Some(last) if last.0 == u => last.1 += w,
                        _ => merged.push((u, w)),
                    }
                }
                merged
            })
            .collect();
        Network {
            adjacency,
            strength,
            total: self.total,
        }
    }
}
