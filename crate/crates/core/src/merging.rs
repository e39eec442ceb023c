//! Scoring isolated communities against main communities and merging them.
//!
//! A candidate pair (main `M`, isolated `I`) is judged on the similarity
//! graph over `M ∪ I`. With `W_M`, `W_I` the internal edge weight of each
//! side and `w_b` the cross weight, the union graph has total weight
//! `W = W_M + W_I + w_b` and the two sides have summed degrees
//! `D_M = 2 W_M + w_b`, `D_I = 2 W_I + w_b`. Then
//!
//! ```text
//! ΔQ = w_b / W - D_M D_I / (2 W²)
//! Δk = 2 W / (|M| + |I|) - 2 W_M / |M|
//! ```
//!
//! and the community distance `t` is the mean pairwise Euclidean distance.
//! The ensemble score is `L = ΔQ/max|ΔQ| + Δk/max|Δk| - t/max|t|` over the
//! round's candidate set.

use std::time::Instant;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::detect;
use crate::error::{Error, Result};
use crate::exec::{self, Parallelism};
use crate::graph::{UnitRows, WeightedGraph};
use crate::model::{euclidean, ClusterState, Community, Dataset, MergeRecord, RunConfig};
use crate::rng::{derive_seed, stream_rng, Stream};

/// Edge-weight sums of a (main, isolated) pair on their union graph.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PairWeights {
    pub main_internal: f64,
    pub iso_internal: f64,
    pub between: f64,
    pub main_size: usize,
    pub iso_size: usize,
}

impl PairWeights {
    pub fn total(&self) -> f64 {
        self.main_internal + self.iso_internal + self.between
    }

    pub fn delta_modularity(&self) -> f64 {
        let w = self.total();
        if w <= 0.0 {
            return 0.0;
        }
        let d_main = 2.0 * self.main_internal + self.between;
        let d_iso = 2.0 * self.iso_internal + self.between;
        self.between / w - d_main * d_iso / (2.0 * w * w)
    }

    pub fn delta_avg_degree(&self) -> f64 {
        let after = 2.0 * self.total() / (self.main_size + self.iso_size) as f64;
        let before = 2.0 * self.main_internal / self.main_size as f64;
        after - before
    }
}

pub(crate) fn internal_weight(unit: &UnitRows, members: &[usize], threshold: f64) -> f64 {
    let mut total = 0.0;
    for (a, &i) in members.iter().enumerate() {
        for &j in &members[a + 1..] {
            if let Some(w) = unit.edge(i, j, threshold) {
                total += w;
            }
        }
    }
    total
}

pub(crate) fn cross_weight(unit: &UnitRows, left: &[usize], right: &[usize], threshold: f64) -> f64 {
    let mut total = 0.0;
    for &i in left {
        for &j in right {
            if let Some(w) = unit.edge(i, j, threshold) {
                total += w;
            }
        }
    }
    total
}

fn pair_weights(data: &Dataset, main: &Community, iso: &Community, threshold: f64) -> Result<PairWeights> {
    for &m in main.members().iter().chain(iso.members()) {
        data.check_index(m)?;
    }
    if let Some(&shared) = main.members().iter().find(|m| iso.contains(**m)) {
        return Err(Error::Overlap(shared));
    }
    let unit = UnitRows::new(data);
    Ok(PairWeights {
        main_internal: internal_weight(&unit, main.members(), threshold),
        iso_internal: internal_weight(&unit, iso.members(), threshold),
        between: cross_weight(&unit, main.members(), iso.members(), threshold),
        main_size: main.len(),
        iso_size: iso.len(),
    })
}

/// Modularity gained on the union graph by treating `main ∪ iso` as one
/// community instead of two.
pub fn delta_modularity(data: &Dataset, main: &Community, iso: &Community, threshold: f64) -> Result<f64> {
    Ok(pair_weights(data, main, iso, threshold)?.delta_modularity())
}

/// Change of the mean induced weighted degree when `iso` joins `main`.
pub fn delta_avg_degree(data: &Dataset, main: &Community, iso: &Community, threshold: f64) -> Result<f64> {
    Ok(pair_weights(data, main, iso, threshold)?.delta_avg_degree())
}

/// Mean pairwise Euclidean distance, and whether subsampling was used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Distance {
    pub value: f64,
    pub approximate: bool,
}

/// Mean pairwise Euclidean distance between the two member sets. A side
/// larger than `cap` is replaced by a seeded uniform subsample of `cap`
/// members.
pub fn community_distance(
    data: &Dataset,
    main: &Community,
    iso: &Community,
    cap: usize,
    seed: u64,
) -> Result<f64> {
    for &m in main.members().iter().chain(iso.members()) {
        data.check_index(m)?;
    }
    Ok(distance_estimate(data, main.members(), iso.members(), cap, seed).value)
}

pub(crate) fn distance_estimate(data: &Dataset, left: &[usize], right: &[usize], cap: usize, seed: u64) -> Distance {
    let mut rng = stream_rng(seed, Stream::Sampling, 0);
    let mut subsample = |side: &[usize]| -> Vec<usize> {
        if side.len() <= cap {
            side.to_vec()
        } else {
            let mut picked: Vec<usize> = index::sample(&mut rng, side.len(), cap)
                .into_iter()
                .map(|i| side[i])
                .collect();
            picked.sort_unstable();
            picked
        }
    };
    let a = subsample(left);
    let b = subsample(right);
    let mut total = 0.0;
    for &i in &a {
        for &j in &b {
            total += euclidean(data.row(i), data.row(j));
        }
    }
    Distance {
        value: total / (a.len() * b.len()) as f64,
        approximate: a.len() < left.len() || b.len() < right.len(),
    }
}

/// Unscored terms of a candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawTerms {
    pub delta_q: f64,
    pub delta_k: f64,
    pub distance: f64,
}

/// Ensemble score of every candidate. Each term is divided by its largest
/// absolute value across the set; a term that is zero everywhere
/// contributes nothing.
pub fn ensemble_scores(candidates: &[RawTerms]) -> Vec<f64> {
    let max_abs = |f: fn(&RawTerms) -> f64| candidates.iter().map(|c| f(c).abs()).fold(0.0, f64::max);
    let scale = |v: f64, m: f64| if m > 0.0 { v / m } else { 0.0 };
    let mq = max_abs(|c| c.delta_q);
    let mk = max_abs(|c| c.delta_k);
    let mt = max_abs(|c| c.distance);
    candidates
        .iter()
        .map(|c| scale(c.delta_q, mq) + scale(c.delta_k, mk) - scale(c.distance, mt))
        .collect()
}

/// A scored (main, isolated) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeCandidate {
    pub main_id: usize,
    pub iso: Community,
    pub delta_q: f64,
    pub delta_k: f64,
    pub distance_t: f64,
    pub score_l: f64,
    pub approximate_distance: bool,
}

impl MergeCandidate {
    fn record(&self) -> MergeRecord {
        MergeRecord {
            cluster: self.main_id,
            members: self.iso.members().to_vec(),
            delta_q: self.delta_q,
            delta_k: self.delta_k,
            distance: self.distance_t,
            score: self.score_l,
            approximate_distance: self.approximate_distance,
        }
    }
}

/// Scores every (main, isolated) combination. Main communities that are
/// empty are skipped.
pub fn score_candidates(
    data: &Dataset,
    unit: &UnitRows,
    mains: &[Community],
    isolated: &[Community],
    cfg: &RunConfig,
    round_seed: u64,
    mode: Parallelism,
) -> Vec<MergeCandidate> {
    let threshold = cfg.similarity_threshold;
    let main_internal: Vec<f64> = exec::map(mode, mains, |m| internal_weight(unit, m.members(), threshold));
    let iso_internal: Vec<f64> = exec::map(mode, isolated, |c| internal_weight(unit, c.members(), threshold));

    let pairs: Vec<(usize, usize)> = (0..isolated.len())
        .flat_map(|i| (0..mains.len()).map(move |m| (i, m)))
        .collect();
    let raw: Vec<(RawTerms, bool)> = exec::map(mode, &pairs, |&(i, m)| {
        let (main, iso) = (&mains[m], &isolated[i]);
        let weights = PairWeights {
            main_internal: main_internal[m],
            iso_internal: iso_internal[i],
            between: cross_weight(unit, main.members(), iso.members(), threshold),
            main_size: main.len(),
            iso_size: iso.len(),
        };
        let seed = derive_seed(round_seed, Stream::Sampling, ((m as u64) << 32) | iso.min_member() as u64);
        let dist = distance_estimate(data, main.members(), iso.members(), cfg.distance_sample_cap, seed);
        (
            RawTerms {
                delta_q: weights.delta_modularity(),
                delta_k: weights.delta_avg_degree(),
                distance: dist.value,
            },
            dist.approximate,
        )
    });
    let terms: Vec<RawTerms> = raw.iter().map(|r| r.0).collect();
    let scores = ensemble_scores(&terms);
    pairs
        .iter()
        .zip(raw)
        .zip(scores)
        .map(|((&(i, m), (t, approximate)), score)| MergeCandidate {
            main_id: mains[m].id,
            iso: isolated[i].clone(),
            delta_q: t.delta_q,
            delta_k: t.delta_k,
            distance_t: t.distance,
            score_l: score,
            approximate_distance: approximate,
        })
        .collect()
}

/// Picks merges in descending score. Each isolated community is used at
/// most once; in a regular round each main community receives at most one
/// merge and scores below `floor` are ignored. A forced round sends every
/// isolated community to its best main community.
pub fn resolve_greedy(candidates: &[MergeCandidate], floor: f64, forced: bool) -> Vec<usize> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        let (ca, cb) = (&candidates[a], &candidates[b]);
        cb.score_l
            .total_cmp(&ca.score_l)
            .then(ca.main_id.cmp(&cb.main_id))
            .then(ca.iso.min_member().cmp(&cb.iso.min_member()))
    });
    let mut used_main = std::collections::BTreeSet::new();
    let mut used_iso = std::collections::BTreeSet::new();
    let mut chosen = Vec::new();
    for idx in order {
        let c = &candidates[idx];
        if used_iso.contains(&c.iso.min_member()) {
            continue;
        }
        if !forced && (used_main.contains(&c.main_id) || c.score_l < floor) {
            continue;
        }
        used_iso.insert(c.iso.min_member());
        used_main.insert(c.main_id);
        chosen.push(idx);
    }
    chosen
}

/// What one merge round did.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub isolated_communities: usize,
    pub candidate_count: usize,
    pub merges: Vec<MergeRecord>,
    pub detect_seconds: f64,
    pub merge_seconds: f64,
    /// Similarity graph over the unlabeled pool, if one was built.
    pub pool_graph: Option<WeightedGraph>,
}

/// One round of detection on the unlabeled pool followed by greedy merging.
pub fn merge_round(state: &mut ClusterState, data: &Dataset, cfg: &RunConfig) -> Result<RoundOutcome> {
    let unit = UnitRows::new(data);
    let round = state.iteration;
    merge_round_with(state, data, &unit, cfg, round, false, Parallelism::from_flag(cfg.parallel))
}

pub fn merge_round_with(
    state: &mut ClusterState,
    data: &Dataset,
    unit: &UnitRows,
    cfg: &RunConfig,
    round: usize,
    forced: bool,
    mode: Parallelism,
) -> Result<RoundOutcome> {
    let pool = state.unlabeled_vec();
    if pool.is_empty() {
        state.terminated = true;
        return Ok(RoundOutcome {
            isolated_communities: 0,
            candidate_count: 0,
            merges: Vec::new(),
            detect_seconds: 0.0,
            merge_seconds: 0.0,
            pool_graph: None,
        });
    }

    let started = Instant::now();
    let graph = unit.build_graph(&pool, cfg.similarity_threshold, mode)?;
    let detection = detect::detect(
        &graph,
        cfg.detector,
        derive_seed(cfg.seed, Stream::Leiden, (1 << 32) | round as u64),
    );
    let isolated = detection.partition.communities().to_vec();
    let detect_seconds = started.elapsed().as_secs_f64();

    let started = Instant::now();
    let mains: Vec<Community> = state.main_communities().to_vec();
    let round_seed = derive_seed(cfg.seed, Stream::Sampling, round as u64);
    let candidates = score_candidates(data, unit, &mains, &isolated, cfg, round_seed, mode);
    let chosen = resolve_greedy(&candidates, cfg.merge_floor, forced);
    let mut merges = Vec::with_capacity(chosen.len());
    for idx in chosen {
        let c = &candidates[idx];
        state.merge(c.main_id, &c.iso)?;
        merges.push(c.record());
    }
    state.check_invariants()?;
    if state.unlabeled().is_empty() {
        state.terminated = true;
    }
    Ok(RoundOutcome {
        isolated_communities: isolated.len(),
        candidate_count: candidates.len(),
        merges,
        detect_seconds,
        merge_seconds: started.elapsed().as_secs_f64(),
        pool_graph: Some(graph),
    })
}
