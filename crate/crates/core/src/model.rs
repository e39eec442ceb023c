//! Shared data types: datasets, communities, partitions, cluster state and
//! run configuration.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sample identifiers plus a dense row-major `n × d` embedding matrix.
///
/// Node identity everywhere else in the crate is the row index; `ids` are
/// only carried for I/O.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    ids: Vec<String>,
    embeddings: Vec<f64>,
    dim: usize,
    ground_truth: Option<Vec<i64>>,
}

impl Dataset {
    pub fn new(
        ids: Vec<String>,
        embeddings: Vec<f64>,
        dim: usize,
        ground_truth: Option<Vec<i64>>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDataset("dimension must be at least 1".into()));
        }
        if embeddings.len() != ids.len() * dim {
            return Err(Error::InvalidDataset(format!(
                "{} ids with dimension {} need {} values, got {}",
                ids.len(),
                dim,
                ids.len() * dim,
                embeddings.len()
            )));
        }
        if let Some(pos) = embeddings.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "non-finite value at row {}, column {}",
                pos / dim,
                pos % dim
            )));
        }
        let mut seen = std::collections::HashSet::with_capacity(ids.len());
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::InvalidDataset(format!("duplicate id `{id}`")));
            }
        }
        if let Some(truth) = &ground_truth {
            if truth.len() != ids.len() {
                return Err(Error::InvalidDataset(format!(
                    "{} labels for {} rows",
                    truth.len(),
                    ids.len()
                )));
            }
        }
        Ok(Self {
            ids,
            embeddings,
            dim,
            ground_truth,
        })
    }

    /// Dataset whose ids are the row indices.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        let ids = (0..rows.len()).map(|i| i.to_string()).collect();
        Self::new(ids, rows.concat(), dim, None)
    }

    pub fn with_ground_truth(mut self, truth: Vec<i64>) -> Result<Self> {
        if truth.len() != self.len() {
            return Err(Error::InvalidDataset(format!(
                "{} labels for {} rows",
                truth.len(),
                self.len()
            )));
        }
        self.ground_truth = Some(truth);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.embeddings[i * self.dim..(i + 1) * self.dim]
    }

    pub fn embeddings(&self) -> &[f64] {
        &self.embeddings
    }

    pub fn ground_truth(&self) -> Option<&[i64]> {
        self.ground_truth.as_deref()
    }

    /// Replace the embedding matrix, keeping ids and labels.
    pub fn with_embeddings(&self, embeddings: Vec<f64>) -> Result<Self> {
        Self::new(
            self.ids.clone(),
            embeddings,
            self.dim,
            self.ground_truth.clone(),
        )
    }

    pub(crate) fn check_index(&self, index: usize) -> Result<()> {
        if index >= self.len() {
            Err(Error::IndexOutOfRange {
                index,
                n: self.len(),
            })
        } else {
            Ok(())
        }
    }
}

/// A non-empty, strictly increasing set of dataset row indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Community {
    pub id: usize,
    members: Vec<usize>,
}

impl Community {
    /// Sorts and deduplicates `members`.
    pub fn new(id: usize, mut members: Vec<usize>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::EmptyCommunity);
        }
        members.sort_unstable();
        members.dedup();
        Ok(Self { id, members })
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    /// Always false; kept for clippy's `len_without_is_empty`.
    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn min_member(&self) -> usize {
        self.members[0]
    }

    pub fn contains(&self, node: usize) -> bool {
        self.members.binary_search(&node).is_ok()
    }

    /// Sorted merge of two disjoint communities; keeps `self.id`.
    pub fn union(&self, other: &Community) -> Community {
        let mut members = Vec::with_capacity(self.len() + other.len());
        members.extend_from_slice(&self.members);
        members.extend_from_slice(&other.members);
        members.sort_unstable();
        members.dedup();
        Community {
            id: self.id,
            members,
        }
    }

    /// Members not in `removed`; `None` when nothing is left.
    pub fn without(&self, removed: &[usize]) -> Option<Community> {
        let removed: BTreeSet<usize> = removed.iter().copied().collect();
        let members: Vec<usize> = self
            .members
            .iter()
            .copied()
            .filter(|m| !removed.contains(m))
            .collect();
        (!members.is_empty()).then_some(Community {
            id: self.id,
            members,
        })
    }
}

/// Disjoint communities covering a declared node subset.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    nodes: Vec<usize>,
    communities: Vec<Community>,
}

impl Partition {
    /// Validates disjointness and coverage of `nodes`.
    pub fn new(nodes: &[usize], communities: Vec<Community>) -> Result<Self> {
        let mut nodes = nodes.to_vec();
        nodes.sort_unstable();
        nodes.dedup();
        let mut covered: Vec<usize> = communities
            .iter()
            .flat_map(|c| c.members().iter().copied())
            .collect();
        covered.sort_unstable();
        if let Some(w) = covered.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Overlap(w[0]));
        }
        if covered != nodes {
            return Err(Error::PartitionMismatch(format!(
                "communities cover {} nodes, subset has {}",
                covered.len(),
                nodes.len()
            )));
        }
        Ok(Self { nodes, communities })
    }

    /// Builds from per-node community labels (`labels[i]` for `nodes[i]`).
    /// Communities are ordered by their smallest member and numbered densely.
    pub fn from_labels(nodes: &[usize], labels: &[usize]) -> Result<Self> {
        if nodes.len() != labels.len() {
            return Err(Error::LengthMismatch {
                pred: labels.len(),
                truth: nodes.len(),
            });
        }
        let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for (&node, &label) in nodes.iter().zip(labels) {
            groups.entry(label).or_default().push(node);
        }
        let mut communities: Vec<Community> = groups
            .into_values()
            .map(|m| Community::new(0, m))
            .collect::<Result<_>>()?;
        communities.sort_by_key(Community::min_member);
        for (id, c) in communities.iter_mut().enumerate() {
            c.id = id;
        }
        Self::new(nodes, communities)
    }

    pub fn singletons(nodes: &[usize]) -> Self {
        let labels: Vec<usize> = (0..nodes.len()).collect();
        Self::from_labels(nodes, &labels).expect("singletons always form a partition")
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn communities(&self) -> &[Community] {
        &self.communities
    }

    pub fn len(&self) -> usize {
        self.communities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.communities.is_empty()
    }

    /// Community index of every node, aligned with [`Partition::nodes`].
    pub fn labels(&self) -> Vec<usize> {
        let mut labels = vec![usize::MAX; self.nodes.len()];
        for (ci, c) in self.communities.iter().enumerate() {
            for m in c.members() {
                let pos = self.nodes.binary_search(m).expect("member of subset");
                labels[pos] = ci;
            }
        }
        labels
    }

    /// Community sizes in descending order.
    pub fn size_profile(&self) -> Vec<usize> {
        let mut sizes: Vec<usize> = self.communities.iter().map(Community::len).collect();
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        sizes
    }
}

/// Arithmetic mean of the member rows.
pub fn centroid(community: &Community, data: &Dataset) -> Result<Vec<f64>> {
    if community.members().is_empty() {
        return Err(Error::EmptyCommunity);
    }
    let mut mean = vec![0.0; data.dim()];
    for &m in community.members() {
        data.check_index(m)?;
        for (acc, v) in mean.iter_mut().zip(data.row(m)) {
            *acc += v;
        }
    }
    let count = community.len() as f64;
    mean.iter_mut().for_each(|v| *v /= count);
    Ok(mean)
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// One executed merge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeRecord {
    pub cluster: usize,
    pub members: Vec<usize>,
    pub delta_q: f64,
    pub delta_k: f64,
    pub distance: f64,
    pub score: f64,
    /// Distance term was computed on a subsample.
    pub approximate_distance: bool,
}

/// Summary of one refinement call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineRecord {
    pub skipped: bool,
    pub epoch_losses: Vec<f64>,
}

/// Bookkeeping for one loop iteration (refine, detect, merge).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub unlabeled_before: usize,
    pub unlabeled_after: usize,
    pub isolated_communities: usize,
    pub candidate_count: usize,
    pub forced: bool,
    pub merges: Vec<MergeRecord>,
    pub refine: Option<RefineRecord>,
    pub detect_seconds: f64,
    pub merge_seconds: f64,
    pub refine_seconds: f64,
}

/// Main communities per cluster plus the pool of not-yet-labeled nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    pub k: usize,
    n: usize,
    main_communities: Vec<Community>,
    unlabeled: BTreeSet<usize>,
    pub iteration: usize,
    pub terminated: bool,
    pub trace: Vec<IterationRecord>,
}

impl ClusterState {
    /// `mains[c]` is the main community of cluster `c`; everything else is
    /// unlabeled.
    pub fn new(n: usize, mains: Vec<Community>) -> Result<Self> {
        let mut labeled = vec![false; n];
        for (c, main) in mains.iter().enumerate() {
            for &m in main.members() {
                if m >= n {
                    return Err(Error::IndexOutOfRange { index: m, n });
                }
                if labeled[m] {
                    return Err(Error::Overlap(m));
                }
                labeled[m] = true;
            }
            debug_assert_eq!(main.id, c);
        }
        let unlabeled = (0..n).filter(|&i| !labeled[i]).collect();
        let state = Self {
            k: mains.len(),
            n,
            main_communities: mains,
            unlabeled,
            iteration: 0,
            terminated: false,
            trace: Vec::new(),
        };
        state.check_invariants()?;
        Ok(state)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn main_communities(&self) -> &[Community] {
        &self.main_communities
    }

    pub fn unlabeled(&self) -> &BTreeSet<usize> {
        &self.unlabeled
    }

    pub fn unlabeled_vec(&self) -> Vec<usize> {
        self.unlabeled.iter().copied().collect()
    }

    /// Moves the isolated community into cluster `cluster`'s main community.
    pub fn merge(&mut self, cluster: usize, iso: &Community) -> Result<()> {
        for m in iso.members() {
            if !self.unlabeled.contains(m) {
                return Err(Error::Overlap(*m));
            }
        }
        for m in iso.members() {
            self.unlabeled.remove(m);
        }
        let merged = self.main_communities[cluster].union(iso);
        self.main_communities[cluster] = merged;
        Ok(())
    }

    /// Disjointness of the main communities and exact coverage with the
    /// unlabeled pool.
    pub fn check_invariants(&self) -> Result<()> {
        let mut seen = vec![false; self.n];
        for main in &self.main_communities {
            for &m in main.members() {
                if seen[m] {
                    return Err(Error::Overlap(m));
                }
                seen[m] = true;
            }
        }
        for &u in &self.unlabeled {
            if seen[u] {
                return Err(Error::Overlap(u));
            }
            seen[u] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::PartitionMismatch(format!(
                "node {missing} is neither labeled nor unlabeled"
            )));
        }
        Ok(())
    }

    /// Cluster id per node; `None` for unlabeled nodes.
    pub fn labeling(&self) -> Vec<Option<usize>> {
        let mut out = vec![None; self.n];
        for (c, main) in self.main_communities.iter().enumerate() {
            for &m in main.members() {
                out[m] = Some(c);
            }
        }
        out
    }
}

/// Community detection algorithm used inside the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Leiden,
    Louvain,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "leiden" => Ok(Algorithm::Leiden),
            "louvain" => Ok(Algorithm::Louvain),
            other => Err(Error::InvalidConfig(format!("unknown detector `{other}`"))),
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Leiden => "leiden",
            Algorithm::Louvain => "louvain",
        })
    }
}

/// Every tunable of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Cosine similarity an edge must strictly exceed.
    pub similarity_threshold: f64,
    /// Quantile of centroid distance kept by risk screening.
    pub confidence: f64,
    pub k: usize,
    /// InfoNCE temperature.
    pub tau: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs_per_iteration: usize,
    pub max_iterations: usize,
    pub seed: u64,
    /// Per-side subsample size for the community distance.
    pub distance_sample_cap: usize,
    /// Candidates scoring below this are never merged, except in the
    /// final forced round.
    #[serde(with = "extended_float")]
    pub merge_floor: f64,
    pub detector: Algorithm,
    pub parallel: bool,
}

impl RunConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if !(-1.0..1.0).contains(&self.similarity_threshold) {
            return fail(format!(
                "similarity_threshold {} outside [-1, 1)",
                self.similarity_threshold
            ));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return fail(format!("confidence {} outside (0, 1)", self.confidence));
        }
        if self.k == 0 {
            return fail("k must be positive".into());
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return fail(format!("tau {} must be positive", self.tau));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            ));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        if self.distance_sample_cap == 0 {
            return fail("distance_sample_cap must be positive".into());
        }
        if self.merge_floor.is_nan() {
            return fail("merge_floor is NaN".into());
        }
        Ok(())
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            similarity_threshold: 0.5,
            confidence: 0.9,
            k: 0,
            tau: 0.5,
            learning_rate: 1e-4,
            batch_size: 64,
            epochs_per_iteration: 100,
            max_iterations: 50,
            seed: 0,
            distance_sample_cap: 256,
            merge_floor: f64::NEG_INFINITY,
            detector: Algorithm::Leiden,
            parallel: true,
        }
    }
}

/// JSON has no infinities; they are written as the strings `inf`/`-inf`.
mod extended_float {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&v.to_string())
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Number(v) => Ok(v),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}
