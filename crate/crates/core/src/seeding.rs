//! Initial clustering and main-community selection.

use rand::distr::{Distribution, Uniform};
use rand::Rng;

use crate::detect::{self, DetectionResult};
use crate::error::{Error, Result};
use crate::exec::{self, Parallelism};
use crate::graph::UnitRows;
use crate::model::{centroid, euclidean, ClusterState, Community, Dataset, Partition, RunConfig};
use crate::rng::{derive_seed, stream_rng, Stream};

/// Lloyd iterations after k-means++ seeding.
pub const MAX_LLOYD_ROUNDS: usize = 300;

/// k-means++ seeding followed by Lloyd iterations. Returns a cluster id in
/// `0..k` for every row; every cluster is non-empty.
pub fn kmeans_init(data: &Dataset, k: usize, seed: u64) -> Result<Vec<usize>> {
    kmeans_with(data, k, seed, Parallelism::default())
}

pub fn kmeans_with(data: &Dataset, k: usize, seed: u64, mode: Parallelism) -> Result<Vec<usize>> {
    let n = data.len();
    if k == 0 {
        return Err(Error::InvalidConfig("k must be positive".into()));
    }
    if k > n {
        return Err(Error::InvalidConfig(format!("k = {k} exceeds n = {n}")));
    }
    let d = data.dim();
    let mut rng = stream_rng(seed, Stream::Init, 0);

    let sq = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum() };

    // k-means++
    let mut centers: Vec<f64> = Vec::with_capacity(k * d);
    let mut chosen = vec![false; n];
    let first = Uniform::new(0, n).expect("n > 0").sample(&mut rng);
    chosen[first] = true;
    centers.extend_from_slice(data.row(first));
    let mut nearest: Vec<f64> = (0..n).map(|i| sq(data.row(i), data.row(first))).collect();
    for _ in 1..k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in nearest.iter().enumerate() {
                if w > 0.0 && target < w {
                    pick = Some(i);
                    break;
                }
                target -= w;
            }
            // rounding can run past the end; fall back to the last positive weight
            pick.or_else(|| nearest.iter().rposition(|&w| w > 0.0))
                .expect("positive total weight")
        } else {
            chosen.iter().position(|c| !c).expect("k <= n")
        };
        chosen[next] = true;
        centers.extend_from_slice(data.row(next));
        for (i, best) in nearest.iter_mut().enumerate() {
            *best = best.min(sq(data.row(i), data.row(next)));
        }
    }

    let mut labels = vec![usize::MAX; n];
    for _ in 0..MAX_LLOYD_ROUNDS {
        let assigned: Vec<(usize, f64)> = exec::map_range(mode, n, |i| {
            let row = data.row(i);
            let mut best = (0, f64::INFINITY);
            for c in 0..k {
                let dist = sq(row, &centers[c * d..(c + 1) * d]);
                if dist < best.1 {
                    best = (c, dist);
                }
            }
            best
        });
        let mut new_labels: Vec<usize> = assigned.iter().map(|a| a.0).collect();
        repair_empty(&mut new_labels, &assigned, k);
        let changed = new_labels != labels;
        labels = new_labels;
        centers = cluster_means(data, &labels, k);
        if !changed {
            break;
        }
    }
    Ok(labels)
}

/// Empty clusters take the point farthest from its centroid among clusters
/// that can spare one.
fn repair_empty(labels: &mut [usize], assigned: &[(usize, f64)], k: usize) {
    let mut sizes = vec![0usize; k];
    labels.iter().for_each(|&l| sizes[l] += 1);
    let mut taken = vec![false; labels.len()];
    for c in 0..k {
        if sizes[c] > 0 {
            continue;
        }
        let donor = (0..labels.len())
            .filter(|&i| !taken[i] && sizes[labels[i]] > 1)
            .max_by(|&a, &b| assigned[a].1.total_cmp(&assigned[b].1).then(b.cmp(&a)))
            .expect("k <= n leaves a donor");
        sizes[labels[donor]] -= 1;
        labels[donor] = c;
        sizes[c] = 1;
        taken[donor] = true;
    }
}

fn cluster_means(data: &Dataset, labels: &[usize], k: usize) -> Vec<f64> {
    let d = data.dim();
    let mut sums = vec![0.0; k * d];
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for (s, v) in sums[l * d..(l + 1) * d].iter_mut().zip(data.row(i)) {
            *s += v;
        }
    }
    for c in 0..k {
        let cnt = counts[c].max(1) as f64;
        sums[c * d..(c + 1) * d].iter_mut().for_each(|s| *s /= cnt);
    }
    sums
}

/// Member lists per cluster id; every cluster in `0..k` must be non-empty.
pub fn cluster_members(labeling: &[usize], k: usize) -> Result<Vec<Vec<usize>>> {
    let mut members = vec![Vec::new(); k];
    for (i, &l) in labeling.iter().enumerate() {
        if l >= k {
            return Err(Error::InvalidConfig(format!(
                "node {i} has cluster {l}, but k = {k}"
            )));
        }
        members[l].push(i);
    }
    if let Some(c) = members.iter().position(Vec::is_empty) {
        return Err(Error::InvalidConfig(format!("cluster {c} is empty")));
    }
    Ok(members)
}

/// Community detection inside every initial cluster.
pub fn detect_initial_communities(
    data: &Dataset,
    labeling: &[usize],
    cfg: &RunConfig,
) -> Result<Vec<Partition>> {
    let unit = UnitRows::new(data);
    let results = detect_in_clusters(&unit, labeling, cfg, Parallelism::from_flag(cfg.parallel))?;
    Ok(results.into_iter().map(|r| r.partition).collect())
}

pub(crate) fn detect_in_clusters(
    unit: &UnitRows,
    labeling: &[usize],
    cfg: &RunConfig,
    mode: Parallelism,
) -> Result<Vec<DetectionResult>> {
    if labeling.len() != unit.len() {
        return Err(Error::LengthMismatch {
            pred: labeling.len(),
            truth: unit.len(),
        });
    }
    let members = cluster_members(labeling, cfg.k)?;
    exec::map_range(mode, cfg.k, |c| {
        // the outer map already spreads clusters over threads
        let graph = unit.build_graph(&members[c], cfg.similarity_threshold, Parallelism::Sequential)?;
        let seed = derive_seed(cfg.seed, Stream::Leiden, c as u64);
        Ok(detect::detect(&graph, cfg.detector, seed))
    })
    .into_iter()
    .collect()
}

/// The largest community; ties go to the one holding the smallest node.
pub fn select_main(partition: &Partition) -> Result<Community> {
    partition
        .communities()
        .iter()
        .max_by(|a, b| {
            a.len()
                .cmp(&b.len())
                .then_with(|| b.min_member().cmp(&a.min_member()))
        })
        .cloned()
        .ok_or(Error::EmptyPartition)
}

/// Splits `community` into members within the nearest-rank
/// `confidence`-quantile of Euclidean distance to its centroid, and the
/// rejected rest.
pub fn risk_screen(
    community: &Community,
    data: &Dataset,
    confidence: f64,
) -> Result<(Community, Vec<usize>)> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "confidence {confidence} outside (0, 1)"
        )));
    }
    let center = centroid(community, data)?;
    let distances: Vec<f64> = community
        .members()
        .iter()
        .map(|&m| euclidean(data.row(m), &center))
        .collect();
    let mut sorted = distances.clone();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    // guard against 0.9 * 30 = 27.000000000000004
    let rank = ((confidence * m as f64 - 1e-9).ceil() as usize).clamp(1, m);
    let cutoff = sorted[rank - 1];

    let mut kept = Vec::with_capacity(rank);
    let mut rejected = Vec::new();
    for (&node, &dist) in community.members().iter().zip(&distances) {
        if dist <= cutoff {
            kept.push(node);
        } else {
            rejected.push(node);
        }
    }
    if kept.is_empty() {
        // unreachable with rank >= 1, but a cluster must keep an anchor
        let closest = distances
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| community.members()[i])
            .expect("non-empty community");
        rejected.retain(|&r| r != closest);
        kept.push(closest);
    }
    Ok((Community::new(community.id, kept)?, rejected))
}

/// Everything the initialization phase produces.
#[derive(Debug, Clone)]
pub struct Seeding {
    pub partitions: Vec<Partition>,
    pub modularity: Vec<f64>,
    /// Main communities before risk screening.
    pub unscreened: Vec<Community>,
    pub state: ClusterState,
}

/// Detection, main selection and screening for an initial labeling.
pub fn initialize(
    data: &Dataset,
    unit: &UnitRows,
    labeling: &[usize],
    cfg: &RunConfig,
    mode: Parallelism,
) -> Result<Seeding> {
    let results = detect_in_clusters(unit, labeling, cfg, mode)?;
    let mut unscreened = Vec::with_capacity(cfg.k);
    let mut mains = Vec::with_capacity(cfg.k);
    for (c, result) in results.iter().enumerate() {
        let mut main = select_main(&result.partition)?;
        main.id = c;
        let (kept, _) = risk_screen(&main, data, cfg.confidence)?;
        unscreened.push(main);
        mains.push(kept);
    }
    let state = ClusterState::new(data.len(), mains)?;
    Ok(Seeding {
        modularity: results.iter().map(|r| r.modularity).collect(),
        partitions: results.into_iter().map(|r| r.partition).collect(),
        unscreened,
        state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(rows: &[Vec<f64>]) -> Dataset {
        Dataset::from_rows(rows).unwrap()
    }

    #[test]
    fn kmeans_n_equals_k_gives_singletons() {
        let d = data(&[vec![0.0, 1.0], vec![5.0, 5.0], vec![-3.0, 2.0], vec![9.0, -1.0]]);
        let labels = kmeans_init(&d, 4, 1).unwrap();
        let mut sorted = labels.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2, 3]);
    }

    #[test]
    fn kmeans_rejects_k_above_n() {
        let d = data(&[vec![1.0]]);
        assert!(kmeans_init(&d, 2, 0).is_err());
        assert!(kmeans_init(&d, 0, 0).is_err());
    }

    #[test]
    fn kmeans_handles_duplicates() {
        let d = data(&vec![vec![1.0, 1.0]; 5]);
        let labels = kmeans_init(&d, 3, 9).unwrap();
        for c in 0..3 {
            assert!(labels.contains(&c));
        }
    }

    #[test]
    fn kmeans_separates_blobs_and_repeats() {
        let mut rows = Vec::new();
        for i in 0..20 {
            let jitter = (i as f64 * 0.37).sin() * 0.05;
            rows.push(vec![jitter, 1.0 + jitter]);
            rows.push(vec![20.0 + jitter, -jitter]);
        }
        let d = data(&rows);
        let labels = kmeans_init(&d, 2, 5).unwrap();
        for pair in labels.chunks(2) {
            assert_ne!(pair[0], pair[1]);
        }
        assert!(labels.iter().step_by(2).all(|&l| l == labels[0]));
        assert_eq!(labels, kmeans_init(&d, 2, 5).unwrap());
    }

    fn partition(groups: &[&[usize]]) -> Partition {
        let nodes: Vec<usize> = groups.iter().flat_map(|g| g.iter().copied()).collect();
        let comms = groups
            .iter()
            .enumerate()
            .map(|(i, g)| Community::new(i, g.to_vec()).unwrap())
            .collect();
        Partition::new(&nodes, comms).unwrap()
    }

    #[test]
    fn select_main_examples() {
        let p = partition(&[&[0, 1, 2], &[3, 4, 5, 6, 7], &[8, 9]]);
        assert_eq!(select_main(&p).unwrap().members(), &[3, 4, 5, 6, 7]);
        let p = partition(&[&[4, 5, 6, 7], &[0, 1, 2, 3]]);
        assert_eq!(select_main(&p).unwrap().members(), &[0, 1, 2, 3]);
        let p = partition(&[&[2]]);
        assert_eq!(select_main(&p).unwrap().members(), &[2]);
        assert!(matches!(
            select_main(&Partition::new(&[], vec![]).unwrap()),
            Err(Error::EmptyPartition)
        ));
    }

    #[test]
    fn screening_keeps_equidistant_members() {
        let d = data(&[vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]]);
        let c = Community::new(0, vec![0, 1, 2, 3]).unwrap();
        let (kept, rejected) = risk_screen(&c, &d, 0.9).unwrap();
        assert_eq!(kept.len(), 4);
        assert!(rejected.is_empty());
    }

    #[test]
    fn screening_rejects_far_outlier() {
        let mut rows: Vec<Vec<f64>> = (0..9)
            .map(|i| {
                let a = i as f64 * 0.7;
                vec![a.cos() * 0.5, a.sin() * 0.5]
            })
            .collect();
        rows.push(vec![100.0, 0.0]);
        let d = data(&rows);
        let c = Community::new(0, (0..10).collect()).unwrap();
        let (kept, rejected) = risk_screen(&c, &d, 0.9).unwrap();
        assert_eq!(rejected, vec![9]);
        assert_eq!(kept.len(), 9);
    }

    #[test]
    fn screening_singleton_keeps_anchor() {
        let d = data(&[vec![3.0]]);
        let c = Community::new(0, vec![0]).unwrap();
        let (kept, rejected) = risk_screen(&c, &d, 0.1).unwrap();
        assert_eq!(kept.members(), &[0]);
        assert!(rejected.is_empty());
    }

    #[test]
    fn single_node_cluster_is_one_singleton() {
        let d = data(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.1, 1.0]]);
        let cfg = RunConfig::new(2);
        let parts = detect_initial_communities(&d, &[0, 1, 1], &cfg).unwrap();
        assert_eq!(parts[0].len(), 1);
        assert_eq!(parts[0].communities()[0].members(), &[0]);
    }

    #[test]
    fn near_duplicate_groups_split_into_two_communities() {
        // two groups of three near-identical directions, orthogonal to each other
        let rows = vec![
            vec![1.0, 0.01, 0.0],
            vec![1.0, 0.0, 0.01],
            vec![1.0, 0.02, 0.01],
            vec![0.0, 1.0, 0.01],
            vec![0.01, 1.0, 0.0],
            vec![0.02, 1.0, 0.02],
        ];
        let d = data(&rows);
        let cfg = RunConfig::new(1);
        let parts = detect_initial_communities(&d, &[0; 6], &cfg).unwrap();
        let sets: Vec<Vec<usize>> = parts[0].communities().iter().map(|c| c.members().to_vec()).collect();
        assert_eq!(sets, vec![vec![0, 1, 2], vec![3, 4, 5]]);
    }

    proptest::proptest! {
        #[test]
        fn screening_rejection_bound(
            rows in proptest::collection::vec(proptest::collection::vec(-10.0f64..10.0, 2), 1..40),
            confidence in 0.05f64..0.95,
        ) {
            let d = data(&rows);
            let c = Community::new(0, (0..rows.len()).collect()).unwrap();
            let (kept, rejected) = risk_screen(&c, &d, confidence).unwrap();
            let m = rows.len() as f64;
            let bound = ((1.0 - confidence) * m).ceil() as usize + 1;
            proptest::prop_assert!(rejected.len() <= bound);
            proptest::prop_assert_eq!(kept.len() + rejected.len(), rows.len());
        }
    }
}
