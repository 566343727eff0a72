//! Cluster-to-class label alignment for precomputed embeddings.
//!
//! The pipeline clusters embeddings with K-means, trains a domain-adversarial
//! model on the samples nearest each centroid, maps cluster ids onto class
//! ids by majority vote over a small labeled set, and then refines that map
//! by iterating between a classifier and its confident predictions.
//!
//! Modules, bottom-up:
//!
//! - [`data`]: datasets, file formats, synthetic generator
//! - [`neural`]: MLP, softmax cross-entropy, gradient reversal, SGD
//! - [`clustering`]: K-means, centroid-nearest subsets, domain splits, purity
//! - [`dam`]: the domain adaptation model and its losses
//! - [`matching`]: cold-start map, iterative matching, final classifier
//! - [`pipeline`]: configuration, stage orchestration and artifacts

pub mod artifacts;
pub mod clustering;
pub mod dam;
pub mod data;
pub mod error;
pub mod matching;
pub mod neural;
pub mod pipeline;
pub mod report;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use clustering::{
    centroid_topk, kmeans, purity, split_domains, ClusterModel, DomainSplit, KMeansConfig, Purity,
    SplitStrategy,
};
pub use dam::{
    class_weights, loss_ordinary, loss_partial, predict_confident, train_dam, ClassWeights,
    ConfidentSet, DamMode, DamNetwork, DamTrainConfig, TrainedDam,
};
pub use data::{
    load_embeddings, select_labeled_subset, synthesize, EmbeddingDataset, SyntheticSpec,
};
pub use error::{Error, ErrorKind, Result};
pub use matching::{
    apply_map, cold_start_map, evaluate, iterate_match, remap_from_predictions, train_classifier,
    ClassifierConfig, ClassifierD, LabelMap, MatchConfig, MatchState, Provenance, WorkingSet,
};
pub use neural::{finite_diff_check, softmax_ce, Mlp, ReversalGate, Sgd, Standardizer};
pub use pipeline::{run_pipeline, PipelineConfig, RunReport};

/// Deterministic generator for `(seed, stream)`. Streams keep independent
/// consumers of one user seed from perturbing each other.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
