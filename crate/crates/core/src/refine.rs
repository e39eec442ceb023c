//! Contrastive refinement of embeddings from main-community pseudo-labels.
//!
//! Embedding rows are optimized directly with plain SGD on
//!
//! ```text
//! L = -Σ_i log( exp(s(z_i, z_p)/τ) / (exp(s(z_i, z_p)/τ) + Σ_{j∈N_i} exp(s(z_i, z_j)/τ)) )
//! ```
//!
//! where `s` is cosine similarity, `p` a positive sharing the anchor's main
//! community and `N_i` the in-batch anchors of other main communities.

use rand::seq::{IndexedRandom, SliceRandom};

use crate::error::{Error, Result};
use crate::exec::{self, Parallelism};
use crate::graph::{dot, norm};
use crate::model::{ClusterState, Dataset, RefineRecord, RunConfig};
use crate::rng::{stream_rng, Stream};

/// Anchors with one positive and a list of negatives each.
#[derive(Debug, Clone, PartialEq)]
pub struct RefineBatch {
    anchors: Vec<usize>,
    positives: Vec<usize>,
    negatives: Vec<Vec<usize>>,
}

impl RefineBatch {
    pub fn new(anchors: Vec<usize>, positives: Vec<usize>, negatives: Vec<Vec<usize>>) -> Result<Self> {
        if anchors.len() != positives.len() || anchors.len() != negatives.len() {
            return Err(Error::InvalidBatch(format!(
                "{} anchors, {} positives, {} negative lists",
                anchors.len(),
                positives.len(),
                negatives.len()
            )));
        }
        for (i, &a) in anchors.iter().enumerate() {
            if positives[i] == a {
                return Err(Error::InvalidBatch(format!("anchor {a} is its own positive")));
            }
            if negatives[i].contains(&a) {
                return Err(Error::InvalidBatch(format!("anchor {a} is its own negative")));
            }
        }
        Ok(Self {
            anchors,
            positives,
            negatives,
        })
    }

    /// Checks that positives share and negatives differ in pseudo-label.
    pub fn check_labels(&self, label: impl Fn(usize) -> Option<usize>) -> Result<()> {
        for (i, &a) in self.anchors.iter().enumerate() {
            let la = label(a);
            if la.is_none() || label(self.positives[i]) != la {
                return Err(Error::InvalidBatch(format!("positive of anchor {a} has another label")));
            }
            if self.negatives[i].iter().any(|&j| label(j) == la) {
                return Err(Error::InvalidBatch(format!("negative of anchor {a} shares its label")));
            }
        }
        Ok(())
    }

    pub fn anchors(&self) -> &[usize] {
        &self.anchors
    }

    pub fn positives(&self) -> &[usize] {
        &self.positives
    }

    pub fn negatives(&self) -> &[Vec<usize>] {
        &self.negatives
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }
}

/// Row-major embedding matrix view.
#[derive(Debug, Clone, Copy)]
pub struct Rows<'a> {
    pub values: &'a [f64],
    pub dim: usize,
}

impl<'a> Rows<'a> {
    pub fn new(values: &'a [f64], dim: usize) -> Self {
        Self { values, dim }
    }

    fn row(&self, i: usize) -> Result<&'a [f64]> {
        self.values
            .get(i * self.dim..(i + 1) * self.dim)
            .ok_or(Error::IndexOutOfRange {
                index: i,
                n: self.values.len() / self.dim.max(1),
            })
    }

    fn n(&self) -> usize {
        self.values.len() / self.dim.max(1)
    }
}

impl<'a> From<&'a Dataset> for Rows<'a> {
    fn from(d: &'a Dataset) -> Self {
        Rows::new(d.embeddings(), d.dim())
    }
}

type Contribution = Vec<(usize, Vec<f64>)>;

/// Loss and sparse gradient contributions of one anchor.
fn anchor_terms(rows: Rows<'_>, batch: &RefineBatch, i: usize, tau: f64, with_grad: bool) -> Result<(f64, Contribution)> {
    let a = batch.anchors[i];
    let za = rows.row(a)?;
    let na = norm(za);
    if na == 0.0 {
        return Err(Error::ZeroVector(a));
    }
    let others: Vec<usize> = std::iter::once(batch.positives[i])
        .chain(batch.negatives[i].iter().copied())
        .collect();
    let mut sims = Vec::with_capacity(others.len());
    let mut norms = Vec::with_capacity(others.len());
    for &o in &others {
        let zo = rows.row(o)?;
        let no = norm(zo);
        if no == 0.0 {
            return Err(Error::ZeroVector(o));
        }
        sims.push(dot(za, zo) / (na * no));
        norms.push(no);
    }
    let logits: Vec<f64> = sims.iter().map(|s| s / tau).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    let lse = max + sum.ln();
    let loss = lse - logits[0];
    if !with_grad {
        return Ok((loss, Vec::new()));
    }

    let d = rows.dim;
    let mut grad_a = vec![0.0; d];
    let mut contributions = Vec::with_capacity(others.len() + 1);
    for (k, &o) in others.iter().enumerate() {
        let prob = (logits[k] - lse).exp();
        let coeff = if k == 0 { (prob - 1.0) / tau } else { prob / tau };
        let zo = rows.row(o)?;
        let s = sims[k];
        let no = norms[k];
        // ds/dz_a = (u_o - s u_a) / |z_a|, ds/dz_o = (u_a - s u_o) / |z_o|
        let mut grad_o = vec![0.0; d];
        for t in 0..d {
            let ua = za[t] / na;
            let uo = zo[t] / no;
            grad_a[t] += coeff * (uo - s * ua) / na;
            grad_o[t] = coeff * (ua - s * uo) / no;
        }
        contributions.push((o, grad_o));
    }
    contributions.push((a, grad_a));
    Ok((loss, contributions))
}

/// InfoNCE loss of `batch`, summed over anchors.
pub fn infonce_loss(rows: Rows<'_>, batch: &RefineBatch, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    let mut total = 0.0;
    for i in 0..batch.len() {
        total += anchor_terms(rows, batch, i, tau, false)?.0;
    }
    Ok(total)
}

/// Analytic gradient of [`infonce_loss`] as a dense `n × d` matrix; rows
/// not touched by the batch are zero.
pub fn infonce_grad(rows: Rows<'_>, batch: &RefineBatch, tau: f64) -> Result<Vec<f64>> {
    Ok(loss_and_grad(rows, batch, tau, Parallelism::default())?.1)
}

/// Loss and gradient together. Per-anchor terms may be evaluated in
/// parallel; they are always accumulated in anchor order.
pub fn loss_and_grad(rows: Rows<'_>, batch: &RefineBatch, tau: f64, mode: Parallelism) -> Result<(f64, Vec<f64>)> {
    check_tau(tau)?;
    let per_anchor: Vec<Result<(f64, Contribution)>> =
        exec::map_range(mode, batch.len(), |i| anchor_terms(rows, batch, i, tau, true));
    let d = rows.dim;
    let mut grad = vec![0.0; rows.values.len()];
    let mut loss = 0.0;
    for item in per_anchor {
        let (l, contributions) = item?;
        loss += l;
        for (row, g) in contributions {
            for (acc, v) in grad[row * d..(row + 1) * d].iter_mut().zip(&g) {
                *acc += v;
            }
        }
    }
    debug_assert_eq!(grad.len(), rows.n() * d);
    Ok((loss, grad))
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("tau {tau} must be positive")))
    }
}

/// Runs `cfg.epochs_per_iteration` epochs of mini-batch SGD over the
/// pseudo-labeled rows and returns the updated dataset together with the
/// per-epoch losses. Unlabeled rows never change.
///
/// Needs at least two main communities with two or more members;
/// otherwise refinement is skipped and the data is returned unchanged.
pub fn refine_embeddings(state: &ClusterState, data: &Dataset, cfg: &RunConfig) -> Result<(Dataset, RefineRecord)> {
    refine_with(state, data, cfg, Parallelism::from_flag(cfg.parallel))
}

pub fn refine_with(
    state: &ClusterState,
    data: &Dataset,
    cfg: &RunConfig,
    mode: Parallelism,
) -> Result<(Dataset, RefineRecord)> {
    let eligible: Vec<&crate::model::Community> =
        state.main_communities().iter().filter(|c| c.len() >= 2).collect();
    if eligible.len() < 2 {
        log::warn!(
            "skipping refinement: {} main communities with at least two members",
            eligible.len()
        );
        return Ok((
            data.clone(),
            RefineRecord {
                skipped: true,
                epoch_losses: Vec::new(),
            },
        ));
    }
    let mut label = vec![usize::MAX; data.len()];
    for c in &eligible {
        for &m in c.members() {
            label[m] = c.id;
        }
    }
    let mains = state.main_communities();
    let mut anchors: Vec<usize> = eligible.iter().flat_map(|c| c.members().iter().copied()).collect();
    anchors.sort_unstable();

    let d = data.dim();
    let mut values = data.embeddings().to_vec();
    let mut rng = stream_rng(cfg.seed, Stream::Refine, state.iteration as u64);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs_per_iteration);
    for _ in 0..cfg.epochs_per_iteration {
        anchors.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in anchors.chunks(cfg.batch_size) {
            let positives: Vec<usize> = chunk
                .iter()
                .map(|&a| loop {
                    let p = *mains[label[a]].members().choose(&mut rng).expect("non-empty");
                    if p != a {
                        break p;
                    }
                })
                .collect();
            let negatives: Vec<Vec<usize>> = chunk
                .iter()
                .map(|&a| chunk.iter().copied().filter(|&b| label[b] != label[a]).collect())
                .collect();
            let batch = RefineBatch::new(chunk.to_vec(), positives, negatives)?;
            let (loss, grad) = loss_and_grad(Rows::new(&values, d), &batch, cfg.tau, mode)?;
            epoch_loss += loss;
            for (v, g) in values.iter_mut().zip(&grad) {
                *v -= cfg.learning_rate * g;
            }
        }
        if !epoch_loss.is_finite() {
            return Err(Error::InvalidBatch(format!("non-finite loss {epoch_loss}")));
        }
        epoch_losses.push(epoch_loss);
    }
    Ok((
        data.with_embeddings(values)?,
        RefineRecord {
            skipped: false,
            epoch_losses,
        },
    ))
}
