//! End-to-end driver: k-means seeding, community detection inside each
//! cluster, then alternating refinement and merging until every node has a
//! cluster.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{self, Metrics};
use crate::exec::Parallelism;
use crate::graph::UnitRows;
use crate::merging;
use crate::model::{Community, Dataset, IterationRecord, RunConfig};
use crate::refine;
use crate::rng::{stream_rng, Stream};
use crate::seeding;

/// Choices this implementation makes where the method leaves room.
pub const DEVIATIONS: &[&str] = &[
    "refinement optimizes embedding rows directly with SGD; there is no backbone network",
    "InfoNCE negatives are the other-cluster anchors of the same mini-batch",
    "NMI is normalized by the geometric mean of the two entropies",
    "community distance subsamples each side above distance_sample_cap members",
    "merge-score terms are normalized by their max magnitude over all candidates of a round",
    "each main community absorbs at most one isolated community per round",
    "a forced final round assigns any remaining isolated community to its best main community",
    "Leiden keeps the best of several seeded restarts",
];

/// Ground-truth purity around the initialization phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurityReport {
    /// Per initial k-means cluster.
    pub parent_clusters: Vec<f64>,
    pub mains_before_screening: Vec<f64>,
    pub mains_after_screening: Vec<f64>,
}

impl PurityReport {
    pub fn mean(values: &[f64]) -> f64 {
        values.iter().sum::<f64>() / values.len().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub n: usize,
    pub dim: usize,
    pub initial_metrics: Option<Metrics>,
    pub final_metrics: Option<Metrics>,
    /// Modularity of the detected partition in each initial cluster.
    pub initial_modularity: Vec<f64>,
    pub initial_community_counts: Vec<usize>,
    pub main_sizes_before_screening: Vec<usize>,
    pub main_sizes_after_screening: Vec<usize>,
    pub purity: Option<PurityReport>,
    pub iterations: Vec<IterationRecord>,
    pub initial_unlabeled: usize,
    pub forced_final_round: bool,
    pub deviations: Vec<String>,
    pub init_seconds: f64,
    pub total_seconds: f64,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Extra outputs that do not influence the result.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Directory for per-round edge lists of the unlabeled-pool graph.
    pub debug_graphs: Option<PathBuf>,
}

pub fn run_pipeline(data: &Dataset, cfg: &RunConfig) -> Result<(Vec<usize>, RunReport)> {
    run_pipeline_with(data, cfg, &RunOptions::default())
}

pub fn run_pipeline_with(data: &Dataset, cfg: &RunConfig, opts: &RunOptions) -> Result<(Vec<usize>, RunReport)> {
    let total = Instant::now();
    cfg.validate().map_err(|e| e.in_phase("config"))?;
    if cfg.k > data.len() {
        return Err(Error::InvalidConfig(format!("k = {} exceeds {} samples", cfg.k, data.len())).in_phase("config"));
    }
    let mode = Parallelism::from_flag(cfg.parallel);
    let truth = data.ground_truth();

    let started = Instant::now();
    let initial = seeding::kmeans_with(data, cfg.k, cfg.seed, mode).map_err(|e| e.in_phase("kmeans"))?;
    let unit = UnitRows::new(data);
    let seeded = seeding::initialize(data, &unit, &initial, cfg, mode).map_err(|e| e.in_phase("seeding"))?;
    let init_seconds = started.elapsed().as_secs_f64();

    let initial_metrics = truth.map(|t| eval::evaluate(&initial, t)).transpose()?;
    let purity = match truth {
        Some(t) => Some(purity_report(&initial, &seeded, cfg.k, t)?),
        None => None,
    };
    let main_sizes_after_screening = seeded.state.main_communities().iter().map(Community::len).collect();
    let mut report = RunReport {
        config: cfg.clone(),
        n: data.len(),
        dim: data.dim(),
        initial_metrics,
        final_metrics: None,
        initial_modularity: seeded.modularity.clone(),
        initial_community_counts: seeded.partitions.iter().map(|p| p.len()).collect(),
        main_sizes_before_screening: seeded.unscreened.iter().map(Community::len).collect(),
        main_sizes_after_screening,
        purity,
        iterations: Vec::new(),
        initial_unlabeled: seeded.state.unlabeled().len(),
        forced_final_round: false,
        deviations: DEVIATIONS.iter().map(|s| s.to_string()).collect(),
        init_seconds,
        total_seconds: 0.0,
    };

    let mut state = seeded.state;
    let mut current = data.clone();
    let mut unit = unit;
    let rounds = cfg.max_iterations + 1;
    for round in 1..=rounds {
        if state.unlabeled().is_empty() {
            break;
        }
        let forced = round == rounds;
        state.iteration = round;
        let before = state.unlabeled().len();

        let mut refine_record = None;
        let mut refine_seconds = 0.0;
        if !forced {
            let started = Instant::now();
            let (next, record) =
                refine::refine_with(&state, &current, cfg, mode).map_err(|e| e.in_phase("refine"))?;
            refine_seconds = started.elapsed().as_secs_f64();
            if !record.skipped {
                current = next;
                unit = UnitRows::new(&current);
            }
            refine_record = Some(record);
        }

        let outcome = merging::merge_round_with(&mut state, &current, &unit, cfg, round, forced, mode)
            .map_err(|e| e.in_phase("merge"))?;
        if let (Some(dir), Some(graph)) = (&opts.debug_graphs, &outcome.pool_graph) {
            dump_graph(dir, round, graph).map_err(|e| e.in_phase("debug-graphs"))?;
        }
        log::info!(
            "round {round}: {} isolated communities, {} merges, {} unlabeled left",
            outcome.isolated_communities,
            outcome.merges.len(),
            state.unlabeled().len()
        );
        let record = IterationRecord {
            iteration: round,
            unlabeled_before: before,
            unlabeled_after: state.unlabeled().len(),
            isolated_communities: outcome.isolated_communities,
            candidate_count: outcome.candidate_count,
            forced,
            merges: outcome.merges,
            refine: refine_record,
            detect_seconds: outcome.detect_seconds,
            merge_seconds: outcome.merge_seconds,
            refine_seconds,
        };
        state.trace.push(record);
        report.forced_final_round |= forced;
    }

    let labeling: Vec<usize> = state
        .labeling()
        .into_iter()
        .enumerate()
        .map(|(node, l)| l.ok_or_else(|| Error::InvalidConfig(format!("node {node} left unlabeled")).in_phase("finish")))
        .collect::<Result<_>>()?;
    report.final_metrics = truth.map(|t| eval::evaluate(&labeling, t)).transpose()?;
    report.iterations = state.trace;
    report.total_seconds = total.elapsed().as_secs_f64();
    Ok((labeling, report))
}

fn purity_report(initial: &[usize], seeded: &seeding::Seeding, k: usize, truth: &[i64]) -> Result<PurityReport> {
    let members = seeding::cluster_members(initial, k)?;
    let parent_clusters = members
        .into_iter()
        .enumerate()
        .map(|(c, m)| eval::purity(&Community::new(c, m)?, truth))
        .collect::<Result<_>>()?;
    let of = |cs: &[Community]| cs.iter().map(|c| eval::purity(c, truth)).collect::<Result<Vec<_>>>();
    Ok(PurityReport {
        parent_clusters,
        mains_before_screening: of(&seeded.unscreened)?,
        mains_after_screening: of(seeded.state.main_communities())?,
    })
}

fn dump_graph(dir: &std::path::Path, round: usize, graph: &crate::graph::WeightedGraph) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut out = BufWriter::new(File::create(dir.join(format!("round_{round:03}.edges")))?);
    graph.write_edge_list(&mut out)?;
    out.flush()?;
    Ok(())
}

/// `k` Gaussian blobs around random unit-norm centers with isotropic noise
/// of standard deviation `spread`. Row `i` belongs to blob `i mod k`, so
/// blob sizes differ by at most one.
pub fn generate_blobs(k: usize, n: usize, d: usize, spread: f64, seed: u64) -> Result<Dataset> {
    if k == 0 || k > n {
        return Err(Error::InvalidConfig(format!("need 1 <= k <= n, got k = {k}, n = {n}")));
    }
    if d == 0 {
        return Err(Error::InvalidConfig("dimension must be at least 1".into()));
    }
    if !(spread > 0.0 && spread.is_finite()) {
        return Err(Error::InvalidConfig(format!("spread {spread} must be positive")));
    }
    let mut rng = stream_rng(seed, Stream::Data, 0);
    let mut centers = Vec::with_capacity(k);
    while centers.len() < k {
        let c: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            centers.push(c.into_iter().map(|v| v / norm).collect::<Vec<f64>>());
        }
    }
    let mut values = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % k;
        for &mu in &centers[c] {
            let z: f64 = StandardNormal.sample(&mut rng);
            values.push(mu + spread * z);
        }
        labels.push(c as i64);
    }
    Dataset::new((0..n).map(|i| i.to_string()).collect(), values, d, Some(labels))
}
