//! Experiment configuration and stage orchestration.
//!
//! A run is a pure function of its [`PipelineConfig`] and input files. Each
//! stage reads what it needs from the output directory and writes its own
//! artifacts there, so stages can also be run one at a time.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::artifacts::{self, *};
use crate::clustering::{
    centroid_topk, kmeans, purity, split_domains, validate_ratio, ClusterModel, DomainSplit,
    KMeansConfig, SplitStrategy,
};
use crate::dam::{train_dam, validate_alpha, DamNetwork, DamTrainConfig, TrainedDam};
use crate::data::{
    load_embeddings, select_labeled_subset, synthesize, EmbeddingDataset, SyntheticSpec,
};
use crate::error::{Error, Result};
use crate::matching::{
    evaluate, iterate_match, ClassifierConfig, IterationRecord, MatchConfig, MatchState, StopReason,
};
use crate::neural::{Mlp, ReversalGate, Standardizer};
use crate::report::{accuracy_svg, purity_table, PurityRow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSource {
    File {
        path: PathBuf,
        #[serde(default)]
        labels: Option<PathBuf>,
    },
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub dataset: DatasetSource,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::out")]
    pub out: PathBuf,
    /// Labeled samples drawn per class. `None` keeps the labels stored in
    /// the dataset file as the labeled set.
    #[serde(default)]
    pub labels_per_class: Option<usize>,
    /// Number of K-means clusters; defaults to the class count.
    #[serde(default)]
    pub clusters: Option<usize>,
    /// Centroid-nearest samples kept per cluster.
    #[serde(default = "defaults::k")]
    pub k: usize,
    #[serde(default = "defaults::split")]
    pub split: SplitStrategy,
    #[serde(default = "defaults::ratio")]
    pub ratio: f64,
    #[serde(default = "defaults::alpha")]
    pub alpha: f64,
    #[serde(default = "defaults::alpha_prime")]
    pub alpha_prime: f64,
    #[serde(default = "defaults::max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "defaults::stagnation_limit")]
    pub stagnation_limit: usize,
    #[serde(default = "defaults::report_sizes")]
    pub report_sizes: Vec<usize>,
    #[serde(default)]
    pub kmeans: KMeansConfig,
    #[serde(default)]
    pub dam: DamTrainConfig,
    #[serde(default)]
    pub classifier: ClassifierConfig,
}

mod defaults {
    use super::*;

    pub fn out() -> PathBuf {
        PathBuf::from("out")
    }
    pub fn k() -> usize {
        100
    }
    pub fn split() -> SplitStrategy {
        SplitStrategy::Random
    }
    pub fn ratio() -> f64 {
        0.8
    }
    pub fn alpha() -> f64 {
        1e-5
    }
    pub fn alpha_prime() -> f64 {
        1e-2
    }
    pub fn max_iterations() -> usize {
        50
    }
    pub fn stagnation_limit() -> usize {
        3
    }
    pub fn report_sizes() -> Vec<usize> {
        vec![50, 100, 150, 200]
    }
}

impl PipelineConfig {
    /// Config with every default and the given dataset.
    pub fn with_dataset(dataset: DatasetSource) -> Self {
        Self {
            dataset,
            seed: 0,
            out: defaults::out(),
            labels_per_class: None,
            clusters: None,
            k: defaults::k(),
            split: defaults::split(),
            ratio: defaults::ratio(),
            alpha: defaults::alpha(),
            alpha_prime: defaults::alpha_prime(),
            max_iterations: defaults::max_iterations(),
            stagnation_limit: defaults::stagnation_limit(),
            report_sizes: defaults::report_sizes(),
            kmeans: KMeansConfig::default(),
            dam: DamTrainConfig::default(),
            classifier: ClassifierConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a TOML config. Relative dataset and output paths resolve
    /// against the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.out.is_relative() {
            cfg.out = base.join(&cfg.out);
        }
        if let DatasetSource::File { path: data, labels } = &mut cfg.dataset {
            if data.is_relative() {
                *data = base.join(&*data);
            }
            if let Some(l) = labels.as_mut().filter(|l| l.is_relative()) {
                *l = base.join(&*l);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serialisable")
    }

    pub fn validate(&self) -> Result<()> {
        validate_ratio(self.ratio)?;
        validate_alpha(self.alpha)?;
        validate_alpha(self.alpha_prime)?;
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.clusters == Some(0) {
            return Err(Error::Config("clusters must be at least 1".into()));
        }
        match &self.dataset {
            DatasetSource::Synthetic(spec) => {
                spec.validate()?;
                if self.labels_per_class.is_none() {
                    return Err(Error::Config(
                        "synthetic datasets need labels_per_class".into(),
                    ));
                }
            }
            DatasetSource::File { .. } => {}
        }
        self.dam.validate()?;
        self.match_config().validate()
    }

    pub fn match_config(&self) -> MatchConfig {
        MatchConfig {
            alpha: self.alpha,
            alpha_prime: self.alpha_prime,
            max_iterations: self.max_iterations,
            stagnation_limit: self.stagnation_limit,
            classifier: ClassifierConfig {
                seed: self.seed,
                ..self.classifier.clone()
            },
        }
    }

    pub fn dam_config(&self) -> DamTrainConfig {
        DamTrainConfig {
            seed: self.seed,
            ..self.dam.clone()
        }
    }

    fn kmeans_config(&self, ds: &EmbeddingDataset) -> KMeansConfig {
        KMeansConfig {
            k: self.clusters.unwrap_or(ds.num_classes()),
            seed: self.seed,
            ..self.kmeans.clone()
        }
    }
}

/// Loads or synthesises the dataset and fixes the labeled set.
pub fn prepare_dataset(cfg: &PipelineConfig) -> Result<EmbeddingDataset> {
    let ds = match &cfg.dataset {
        DatasetSource::File { path, labels } => load_embeddings(path, labels.as_deref())?,
        DatasetSource::Synthetic(spec) => synthesize(spec)?,
    };
    match cfg.labels_per_class {
        Some(per_class) => select_labeled_subset(&ds, per_class, cfg.seed),
        None => Ok(ds),
    }
}

fn ensure_out(cfg: &PipelineConfig) -> Result<&Path> {
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    Ok(&cfg.out)
}

pub fn stage_cluster(cfg: &PipelineConfig, ds: &EmbeddingDataset) -> Result<ClusterModel> {
    let run = || {
        let out = ensure_out(cfg)?;
        let cm = kmeans(ds, &cfg.kmeans_config(ds))?;
        write_clusters(out, &cm, ds)?;
        Ok(cm)
    };
    run().map_err(|e: Error| e.in_stage("cluster"))
}

pub fn stage_train_dam(
    cfg: &PipelineConfig,
    ds: &EmbeddingDataset,
    cm: &ClusterModel,
) -> Result<(DomainSplit, TrainedDam)> {
    let run = || {
        let out = ensure_out(cfg)?;
        let confident = centroid_topk(cm, ds, cfg.k)?;
        let split = split_domains(&confident, cfg.split, cfg.ratio, cfg.seed)?;
        let mut trained = train_dam(ds, &split, &cfg.dam_config())?;
        // Snapshots carry no input transform, so downstream stages always
        // see the folded network, whether in memory or reloaded.
        trained.network = trained.network.folded();
        write_split(out, &split)?;
        write_dam_trace(out, &trained.trace)?;
        trained.network.mapper.save(&out.join(DAM_MAPPER))?;
        trained.network.classifier.save(&out.join(DAM_CLASSIFIER))?;
        trained
            .network
            .discriminator
            .save(&out.join(DAM_DISCRIMINATOR))?;
        Ok((split, trained))
    };
    run().map_err(|e: Error| e.in_stage("train-dam"))
}

/// Reads the DAM snapshots written by [`stage_train_dam`].
pub fn load_dam(cfg: &PipelineConfig) -> Result<DamNetwork> {
    let mapper = Mlp::load(&cfg.out.join(DAM_MAPPER))?;
    Ok(DamNetwork {
        input: Standardizer::identity(mapper.in_dim()),
        mapper,
        classifier: Mlp::load(&cfg.out.join(DAM_CLASSIFIER))?,
        discriminator: Mlp::load(&cfg.out.join(DAM_DISCRIMINATOR))?,
        gate: ReversalGate::new(cfg.dam.lambda),
        class_weights: None,
    })
}

/// Samples with ground truth that are not in the labeled set.
pub fn held_out_indices(ds: &EmbeddingDataset) -> Vec<usize> {
    let truth = ds.ground_truth();
    let labeled = ds.labeled_indices();
    (0..ds.len())
        .filter(|i| truth.get(*i).is_some() && labeled.binary_search(i).is_err())
        .collect()
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub out: PathBuf,
    /// Accuracy of the best classifier on held-out ground truth.
    pub final_accuracy: f64,
    pub acc_best: f64,
    pub best_iteration: usize,
    pub history: Vec<IterationRecord>,
    pub stop_reason: StopReason,
    pub summary: Vec<(String, String)>,
}

fn stop_name(reason: StopReason) -> &'static str {
    match reason {
        StopReason::AccuracyDropped => "accuracy_dropped",
        StopReason::Stagnated => "stagnated",
        StopReason::MaxIterations => "max_iterations",
    }
}

pub fn stage_match(
    cfg: &PipelineConfig,
    ds: &EmbeddingDataset,
    cm: &ClusterModel,
    split: &DomainSplit,
    dam: &DamNetwork,
) -> Result<RunReport> {
    let run = || {
        let out = ensure_out(cfg)?;
        let state: MatchState = iterate_match(ds, split, dam, &cfg.match_config())?;
        write_history(out, &state.history)?;
        write_label_map(out, &state.map)?;
        state.model_best.folded().save(&out.join(CLASSIFIER_D))?;
        artifacts::write_text(&out.join(ACCURACY_PLOT), &accuracy_svg(&state.history))?;

        let held_out = held_out_indices(ds);
        let final_accuracy = evaluate(&state.model_best, ds, &held_out)?;
        let mut summary: Vec<(String, String)> = [
            ("samples", ds.len().to_string()),
            ("dim", ds.dim().to_string()),
            ("classes", ds.num_classes().to_string()),
            ("clusters", cm.k().to_string()),
            ("labeled", ds.labeled_indices().len().to_string()),
            ("held_out", held_out.len().to_string()),
            ("seed", cfg.seed.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        if ds.is_fully_labeled() {
            let subsets: Vec<Vec<usize>> =
                split.clusters.iter().map(|c| c.confident.clone()).collect();
            summary.push((
                "kmeans_purity".into(),
                format!("{:?}", purity(&cm.members(), ds)?.accuracy),
            ));
            summary.push((
                "subset_purity".into(),
                format!("{:?}", purity(&subsets, ds)?.accuracy),
            ));
        }
        summary.extend(
            [
                ("iterations", state.history.len().to_string()),
                ("best_iteration", state.best_iteration.to_string()),
                ("stop_reason", stop_name(state.stop_reason).to_string()),
                ("acc_best", format!("{:?}", state.acc_best)),
                ("final_accuracy", format!("{:?}", final_accuracy)),
            ]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v)),
        );
        write_summary(out, &summary)?;
        Ok(RunReport {
            out: out.to_path_buf(),
            final_accuracy,
            acc_best: state.acc_best,
            best_iteration: state.best_iteration,
            history: state.history,
            stop_reason: state.stop_reason,
            summary,
        })
    };
    run().map_err(|e: Error| e.in_stage("match"))
}

/// Purity table over the configured subset sizes. Sizes larger than the
/// smallest cluster are skipped and returned separately.
pub fn stage_report(
    cfg: &PipelineConfig,
    ds: &EmbeddingDataset,
    cm: &ClusterModel,
) -> Result<(Vec<PurityRow>, Vec<usize>)> {
    let run = || {
        let out = ensure_out(cfg)?;
        if !ds.is_fully_labeled() {
            return Err(Error::Dataset(
                "purity report needs ground truth for every sample".into(),
            ));
        }
        let smallest = cm.members().iter().map(Vec::len).min().unwrap_or(0);
        let (sizes, skipped): (Vec<usize>, Vec<usize>) =
            cfg.report_sizes.iter().partition(|&&s| s <= smallest);
        let rows = purity_table(cm, ds, &sizes)?;
        write_purity(out, &rows)?;
        Ok((rows, skipped))
    };
    run().map_err(|e: Error| e.in_stage("report"))
}

const RUN_OUTPUTS: &[&str] = &[
    CLUSTERS,
    CENTROIDS,
    SPLIT,
    DAM_TRACE,
    DAM_MAPPER,
    DAM_CLASSIFIER,
    DAM_DISCRIMINATOR,
    MATCH_HISTORY,
    LABEL_MAP,
    CLASSIFIER_D,
    ACCURACY_PLOT,
    SUMMARY,
];

/// Runs every stage in order and writes the manifest of produced files.
/// The purity report needs ground truth for every sample and is skipped
/// otherwise.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunReport> {
    cfg.validate().map_err(|e| e.in_stage("config"))?;
    let ds = prepare_dataset(cfg).map_err(|e| e.in_stage("data"))?;
    let cm = stage_cluster(cfg, &ds)?;
    let mut outputs = RUN_OUTPUTS.to_vec();
    if ds.is_fully_labeled() {
        stage_report(cfg, &ds, &cm)?;
        outputs.push(PURITY);
    }
    let (split, trained) = stage_train_dam(cfg, &ds, &cm)?;
    let report = stage_match(cfg, &ds, &cm, &split, &trained.network)?;
    write_manifest(&cfg.out, &outputs).map_err(|e| e.in_stage("match"))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic() -> DatasetSource {
        DatasetSource::Synthetic(SyntheticSpec {
            classes: 2,
            domains_per_class: 1,
            samples_per_class: 20,
            dim: 2,
            class_separation: 10.0,
            domain_spread: 0.0,
            noise_sigma: 0.1,
            seed: 0,
        })
    }

    #[test]
    fn config_defaults_follow_documented_values() {
        let text = r#"
            labels_per_class = 5
            [dataset.synthetic]
            classes = 2
            domains_per_class = 1
            samples_per_class = 20
            dim = 2
            class_separation = 10.0
            domain_spread = 0.0
            noise_sigma = 0.1
            seed = 0
        "#;
        let cfg = PipelineConfig::from_toml(text).unwrap();
        assert_eq!(cfg.ratio, 0.8);
        assert_eq!(cfg.alpha, 1e-5);
        assert_eq!(cfg.alpha_prime, 1e-2);
        assert_eq!(cfg.split, SplitStrategy::Random);
        assert_eq!(cfg.dam.lambda, 1.0);
        assert_eq!(cfg.dam.momentum, 0.9);
        cfg.validate().unwrap();
        assert_eq!(PipelineConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn out_of_range_ratio_fails_validation() {
        let mut cfg = PipelineConfig::with_dataset(synthetic());
        cfg.labels_per_class = Some(2);
        cfg.ratio = 1.2;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(PipelineConfig::from_toml("bogus = 1\n[dataset.file]\npath = \"x\"\n").is_err());
    }
}
