//! Cluster refinement by gradual community detection and merging.
//!
//! An initial k-way clustering is refined in three stages:
//!
//! 1. Within every initial cluster a thresholded cosine-similarity graph is
//!    built and partitioned with Leiden. The largest community, after
//!    dropping members far from its centroid, becomes the cluster's *main
//!    community*. Everything else goes to an unlabeled pool.
//! 2. Each iteration refines embeddings with an InfoNCE objective over the
//!    main-community pseudo-labels, detects communities in the unlabeled
//!    pool, and merges the best-scoring isolated community into each main
//!    community.
//! 3. The loop ends when the pool is empty; a final forced round bounds the
//!    number of iterations.
//!
//! Data-parallel sections (graph construction, per-cluster detection,
//! candidate scoring, gradient evaluation) run on rayon when the default
//! `parallel` feature is enabled and sequentially otherwise, with identical
//! results.

pub mod detect;
pub mod error;
pub mod eval;
pub mod exec;
pub mod graph;
pub mod io;
pub mod merging;
pub mod model;
pub mod pipeline;
pub mod refine;
pub mod rng;
pub mod seeding;

pub use detect::{is_internally_connected, leiden, louvain, modularity, DetectionResult};
pub use error::{Error, Result};
pub use exec::Parallelism;
pub use graph::{build_graph, cosine_similarity, WeightedGraph};
pub use model::{
    centroid, Algorithm, ClusterState, Community, Dataset, IterationRecord, Partition, RunConfig,
};
pub use pipeline::{generate_blobs, run_pipeline, RunReport};
