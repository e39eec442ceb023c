//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use comclust::refine::{infonce_loss, RefineBatch, Rows};
use comclust::{Community, Partition, WeightedGraph};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Modularity by the literal double sum over ordered node pairs.
pub fn modularity_double_sum(g: &WeightedGraph, labels: &[usize]) -> f64 {
    let n = g.node_count();
    let mut w = vec![vec![0.0; n]; n];
    for a in 0..n {
        for &(b, wt) in g.neighbors(a) {
            w[a][b as usize] = wt;
        }
    }
    let k: Vec<f64> = w.iter().map(|row| row.iter().sum()).collect();
    let total: f64 = k.iter().sum::<f64>() / 2.0;
    if total == 0.0 {
        return 0.0;
    }
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if labels[i] == labels[j] {
                q += w[i][j] - k[i] * k[j] / (2.0 * total);
            }
        }
    }
    q / (2.0 * total)
}

/// Every set partition of `n` items as restricted-growth strings.
pub fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    fn rec(i: usize, n: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        for c in 0..=max {
            cur.push(c);
            rec(i + 1, n, if c == max { max + 1 } else { max }, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        out.push(Vec::new());
    } else {
        rec(0, n, 0, &mut Vec::new(), &mut out);
    }
    out
}

pub fn brute_force_max_modularity(g: &WeightedGraph) -> f64 {
    set_partitions(g.node_count())
        .iter()
        .map(|labels| modularity_double_sum(g, labels))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Random weighted graph: `n` nodes, each pair linked with probability
/// `density`, weights uniform in `(0.5, 1]`.
pub fn random_graph(seed: u64, n: usize, density: f64) -> WeightedGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes: Vec<usize> = (0..n).collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < density {
                edges.push((i, j, 1.0 - 0.5 * rng.random::<f64>()));
            }
        }
    }
    WeightedGraph::from_edges(&nodes, &edges).unwrap()
}

/// The fixed small-graph corpus: `count` graphs with 2..=8 nodes.
pub fn small_graph_corpus(count: usize) -> Vec<WeightedGraph> {
    (0..count as u64)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + i);
            let n = rng.random_range(2..=8);
            let density = rng.random_range(0.15..0.85);
            random_graph(2000 + i, n, density)
        })
        .collect()
}

pub fn labels_of(p: &Partition) -> Vec<usize> {
    p.labels()
}

/// Random dataset with rows drawn uniformly from `[-1, 1)^d`.
pub fn random_rows(seed: u64, n: usize, d: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

pub fn random_labeling(seed: u64, n: usize, k: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(0..k)).collect()
}

/// Cosine similarity computed from scratch.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Graph over `nodes` linking pairs whose cosine similarity exceeds
/// `threshold`, weighted by that similarity.
pub fn threshold_graph(rows: &[Vec<f64>], nodes: &[usize], threshold: f64) -> WeightedGraph {
    let mut edges = Vec::new();
    for (a, &i) in nodes.iter().enumerate() {
        for &j in &nodes[a + 1..] {
            let s = cosine(&rows[i], &rows[j]);
            if s > threshold {
                edges.push((i, j, s));
            }
        }
    }
    WeightedGraph::from_edges(nodes, &edges).unwrap()
}

/// Modularity gain of merging `main` and `iso`, evaluated as two full
/// double sums on their union graph.
pub fn union_delta_q(rows: &[Vec<f64>], main: &[usize], iso: &[usize], threshold: f64) -> f64 {
    let mut nodes: Vec<usize> = main.iter().chain(iso).copied().collect();
    nodes.sort_unstable();
    let g = threshold_graph(rows, &nodes, threshold);
    let merged = vec![0; g.node_count()];
    let split: Vec<usize> = g.nodes().iter().map(|v| usize::from(iso.contains(v))).collect();
    modularity_double_sum(&g, &merged) - modularity_double_sum(&g, &split)
}

/// Mean weighted degree inside the graph induced on `members`.
pub fn induced_avg_degree(rows: &[Vec<f64>], members: &[usize], threshold: f64) -> f64 {
    let g = threshold_graph(rows, members, threshold);
    2.0 * g.total_weight() / members.len() as f64
}

/// Every injective map of `from` labels into `to` labels.
fn injections(from: usize, to: usize) -> Vec<Vec<usize>> {
    fn rec(i: usize, from: usize, to: usize, used: &mut Vec<bool>, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == from {
            out.push(cur.clone());
            return;
        }
        for t in 0..to {
            if !used[t] {
                used[t] = true;
                cur.push(t);
                rec(i + 1, from, to, used, cur, out);
                cur.pop();
                used[t] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(0, from, to, &mut vec![false; to], &mut Vec::new(), &mut out);
    out
}

/// Best matched fraction over every relabeling of the predicted clusters
/// into classes. Labels must be dense `0..k`.
pub fn brute_force_accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    let kp = pred.iter().max().map_or(0, |m| m + 1);
    let kt = truth.iter().max().map_or(0, |m| m + 1);
    let size = kp.max(kt);
    injections(size, size)
        .iter()
        .map(|perm| pred.iter().zip(truth).filter(|(p, t)| perm[**p] == **t).count())
        .max()
        .unwrap_or(0) as f64
        / pred.len() as f64
}

/// Adjusted Rand index from explicit agreement counts over all node pairs.
pub fn pair_counting_ari(pred: &[usize], truth: &[usize]) -> f64 {
    let (mut ss, mut sd, mut ds, mut dd) = (0i128, 0i128, 0i128, 0i128);
    for i in 0..pred.len() {
        for j in i + 1..pred.len() {
            match (pred[i] == pred[j], truth[i] == truth[j]) {
                (true, true) => ss += 1,
                (true, false) => sd += 1,
                (false, true) => ds += 1,
                (false, false) => dd += 1,
            }
        }
    }
    let num = 2 * (ss * dd - sd * ds);
    let den = (ss + sd) * (sd + dd) + (ss + ds) * (ds + dd);
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// Random rows, labels and a label-consistent batch of at most 8 anchors.
pub fn random_batch(seed: u64) -> (Vec<f64>, usize, RefineBatch, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(2..=16);
    let n = rng.random_range(6..=14);
    let rows = random_rows(seed.wrapping_add(91), n, d);
    let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
    let size = rng.random_range(1..=8usize.min(n));
    let mut pool: Vec<usize> = (0..n).collect();
    pool.sort_by_key(|_| rng.random::<u32>());
    let anchors: Vec<usize> = pool[..size].to_vec();
    let positives = anchors
        .iter()
        .map(|&a| {
            let same: Vec<usize> = (0..n).filter(|&j| j != a && labels[j] == labels[a]).collect();
            *same.choose(&mut rng).unwrap()
        })
        .collect();
    let negatives = anchors
        .iter()
        .map(|&a| anchors.iter().copied().filter(|&b| labels[b] != labels[a]).collect())
        .collect();
    let batch = RefineBatch::new(anchors, positives, negatives).unwrap();
    batch.check_labels(|i| Some(labels[i])).unwrap();
    let tau = rng.random_range(0.1..1.0);
    (rows.concat(), d, batch, tau)
}

/// Central differences of the loss with step `h`.
pub fn finite_difference(values: &[f64], d: usize, batch: &RefineBatch, tau: f64, h: f64) -> Vec<f64> {
    let mut work = values.to_vec();
    (0..values.len())
        .map(|i| {
            let orig = work[i];
            work[i] = orig + h;
            let up = infonce_loss(Rows::new(&work, d), batch, tau).unwrap();
            work[i] = orig - h;
            let down = infonce_loss(Rows::new(&work, d), batch, tau).unwrap();
            work[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / scale(a).max(scale(b)).max(1e-12)
}

/// Random disjoint (main, iso) pair over rows clustered near a few
/// directions so that the union graph has both inner and cross edges.
pub fn random_pair(seed: u64) -> (Vec<Vec<f64>>, Community, Community) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=12);
    let d = rng.random_range(2..=6);
    let centers = random_rows(seed ^ 0x5eed, 2, d);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| centers[i % 2].iter().map(|c| c + rng.random_range(-0.6..0.6)).collect())
        .collect();
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut rng);
    let cut = rng.random_range(1..n);
    let main = Community::new(0, ids[..cut].to_vec()).unwrap();
    let iso = Community::new(1, ids[cut..].to_vec()).unwrap();
    (rows, main, iso)
}
