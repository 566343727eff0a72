//! Pseudo-label to class-label matching.
//!
//! A cold start maps every DAM pseudo-label seen confidently on the labeled
//! set to its most frequent true label. The loop then alternates between
//! training classifier `D` on the relabelled working set and remapping each
//! pseudo-label to the label `D` predicts most often, with confidence, on the
//! source domain. The best classifier by labeled-set accuracy is kept.

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::clustering::DomainSplit;
use crate::dam::{confident_from_probs, validate_alpha, ConfidentSet, DamNetwork};
use crate::data::EmbeddingDataset;
use crate::error::{Error, Result};
use crate::neural::{softmax, softmax_ce, Mlp, Sgd, Standardizer};
use crate::seeded_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    ColdStart,
    Iteration(usize),
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Provenance::ColdStart => f.write_str("cold_start"),
            Provenance::Iteration(n) => write!(f, "iteration_{n}"),
        }
    }
}

impl std::str::FromStr for Provenance {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "cold_start" {
            return Ok(Provenance::ColdStart);
        }
        s.strip_prefix("iteration_")
            .and_then(|n| n.parse().ok())
            .map(Provenance::Iteration)
            .ok_or_else(|| format!("bad provenance {s:?}"))
    }
}

/// Partial function from pseudo-labels `[0, K)` to true labels `[0, Z)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    entries: Vec<Option<(usize, Provenance)>>,
    num_classes: usize,
}

impl LabelMap {
    pub fn new(num_pseudo: usize, num_classes: usize) -> Self {
        Self {
            entries: vec![None; num_pseudo],
            num_classes,
        }
    }

    pub fn num_pseudo(&self) -> usize {
        self.entries.len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, pseudo: usize) -> Option<usize> {
        self.entries.get(pseudo).copied().flatten().map(|e| e.0)
    }

    pub fn provenance(&self, pseudo: usize) -> Option<Provenance> {
        self.entries.get(pseudo).copied().flatten().map(|e| e.1)
    }

    pub fn set(&mut self, pseudo: usize, label: usize, provenance: Provenance) -> Result<()> {
        if pseudo >= self.entries.len() {
            return Err(Error::LabelOutOfRange {
                label: pseudo,
                classes: self.entries.len(),
            });
        }
        if label >= self.num_classes {
            return Err(Error::LabelOutOfRange {
                label,
                classes: self.num_classes,
            });
        }
        self.entries[pseudo] = Some((label, provenance));
        Ok(())
    }

    /// `(pseudo, true, provenance)` for every mapped pseudo-label.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, Provenance)> + '_ {
        self.entries
            .iter()
            .enumerate()
            .filter_map(|(p, e)| e.map(|(t, prov)| (p, t, prov)))
    }

    pub fn len(&self) -> usize {
        self.iter().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// True when no two pseudo-labels share a true label and all are mapped.
    pub fn is_bijection(&self) -> bool {
        let mut seen = vec![false; self.num_classes];
        self.entries.len() == self.num_classes
            && self.iter().count() == self.entries.len()
            && self
                .iter()
                .all(|(_, t, _)| !std::mem::replace(&mut seen[t], true))
    }
}

/// For each pseudo-label, the most frequent co-occurring true label
/// (smaller label on ties). `None` where a pseudo-label never occurs.
pub fn majority_vote(
    pairs: impl IntoIterator<Item = (usize, usize)>,
    num_pseudo: usize,
    num_classes: usize,
) -> Result<Vec<Option<usize>>> {
    let mut hist = vec![vec![0usize; num_classes]; num_pseudo];
    for (p, t) in pairs {
        if p >= num_pseudo {
            return Err(Error::LabelOutOfRange {
                label: p,
                classes: num_pseudo,
            });
        }
        if t >= num_classes {
            return Err(Error::LabelOutOfRange {
                label: t,
                classes: num_classes,
            });
        }
        hist[p][t] += 1;
    }
    Ok(hist
        .iter()
        .map(|h| {
            let mut best: Option<(usize, usize)> = None;
            for (t, &count) in h.iter().enumerate() {
                if count > 0 && best.is_none_or(|b| count > b.1) {
                    best = Some((t, count));
                }
            }
            best.map(|b| b.0)
        })
        .collect())
}

/// Maps each confidently predicted pseudo-label on the labeled set to its
/// modal true label.
///
/// `confident` holds DAM predictions (label = pseudo-label) for members of
/// the labeled set, whose `(index, label)` pairs are given in `labeled`.
pub fn cold_start_map(
    confident: &ConfidentSet,
    labeled: &[(usize, usize)],
    num_pseudo: usize,
    num_classes: usize,
) -> Result<LabelMap> {
    if confident.is_empty() {
        return Err(Error::ColdStart {
            threshold: 1.0 - confident.alpha,
        });
    }
    let mut pairs = Vec::with_capacity(confident.len());
    for m in &confident.members {
        let t = match labeled.binary_search_by_key(&m.index, |p| p.0) {
            Ok(pos) => labeled[pos].1,
            Err(_) => {
                return Err(Error::Dataset(format!(
                    "cold start sample {} is not in the labeled set",
                    m.index
                )))
            }
        };
        pairs.push((m.label, t));
    }
    let mut map = LabelMap::new(num_pseudo, num_classes);
    for (p, t) in majority_vote(pairs, num_pseudo, num_classes)?
        .into_iter()
        .enumerate()
    {
        if let Some(t) = t {
            map.set(p, t, Provenance::ColdStart)?;
        }
    }
    Ok(map)
}

/// Working training set `R`: every sample's pseudo-label and, once its
/// pseudo-label is mapped, its assigned true label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkingSet {
    pub pseudo: Vec<usize>,
    pub assigned: Vec<Option<usize>>,
}

impl WorkingSet {
    pub fn new(pseudo: Vec<usize>) -> Self {
        let assigned = vec![None; pseudo.len()];
        Self { pseudo, assigned }
    }

    /// `(index, label)` for every sample with an assigned true label.
    pub fn training_pairs(&self) -> Vec<(usize, usize)> {
        self.assigned
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.map(|l| (i, l)))
            .collect()
    }
}

/// Relabels every target whose pseudo-label is mapped. Returns how many
/// assigned labels changed.
pub fn apply_map(map: &LabelMap, working: &mut WorkingSet, targets: &[usize]) -> usize {
    let mut changes = 0;
    for &i in targets {
        if let Some(t) = map.get(working.pseudo[i]) {
            if working.assigned[i] != Some(t) {
                working.assigned[i] = Some(t);
                changes += 1;
            }
        }
    }
    changes
}

/// Remaps pseudo-labels from confident classifier predictions.
///
/// `confident` holds `D`'s predictions (label = inferred true label); the
/// pseudo-label of each member is read from `working`. Pseudo-labels with no
/// confident member keep their previous entry.
pub fn remap_from_predictions(
    previous: &LabelMap,
    confident: &ConfidentSet,
    working: &WorkingSet,
    iteration: usize,
) -> Result<LabelMap> {
    let pairs = confident
        .members
        .iter()
        .map(|m| (working.pseudo[m.index], m.label));
    let votes = majority_vote(pairs, previous.num_pseudo(), previous.num_classes())?;
    let mut map = previous.clone();
    for (p, t) in votes.into_iter().enumerate() {
        if let Some(t) = t {
            if previous.get(p) != Some(t) {
                map.set(p, t, Provenance::Iteration(iteration))?;
            }
        }
    }
    Ok(map)
}

/// Anything that assigns a class to each row of a feature batch.
pub trait LabelPredictor {
    fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<usize>>;
}

fn argmax_rows(m: &Array2<f64>) -> Vec<usize> {
    m.rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

impl LabelPredictor for DamNetwork {
    fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.predict_proba(x)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub hidden: usize,
    /// Epochs over the working set `R` per round.
    pub epochs: usize,
    /// Epochs over the labeled set `T` after each round.
    pub finetune_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    /// Set from the pipeline seed, not read from config files.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            epochs: 10,
            finetune_epochs: 10,
            batch_size: 32,
            lr: 0.01,
            momentum: 0.9,
            seed: 0,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "classifier hidden and batch_size must be >= 1".into(),
            ));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config("classifier learning rate must be > 0".into()));
        }
        if !(self.momentum.is_finite() && (0.0..1.0).contains(&self.momentum)) {
            return Err(Error::Config(
                "classifier momentum must lie in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Final classifier: `d → hidden → Z` MLP over embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierD {
    /// Fixed transform applied to raw embeddings before the network.
    pub input: Standardizer,
    pub network: Mlp,
}

impl ClassifierD {
    pub fn new(in_dim: usize, classes: usize, cfg: &ClassifierConfig) -> Self {
        let mut rng = seeded_rng(cfg.seed, 7);
        Self {
            input: Standardizer::identity(in_dim),
            network: Mlp::new(&[in_dim, cfg.hidden, classes], &mut rng),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.network.out_dim()
    }

    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let x = self.input.apply(x)?;
        Ok(softmax(self.network.forward(x.view())?.view()))
    }

    /// The network with the input transform absorbed into its first layer.
    pub fn folded(&self) -> Mlp {
        self.input.fold_into(&self.network)
    }
}

impl LabelPredictor for ClassifierD {
    fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        let x = self.input.apply(x)?;
        Ok(argmax_rows(&self.network.forward(x.view())?))
    }
}

#[allow(clippy::too_many_arguments)]
fn fit_epochs(
    net: &mut Mlp,
    input: &Standardizer,
    opt: &mut Sgd,
    ds: &EmbeddingDataset,
    pairs: &[(usize, usize)],
    epochs: usize,
    batch_size: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
    stage: &str,
) -> Result<()> {
    let mut order = pairs.to_vec();
    for epoch in 0..epochs {
        order.shuffle(rng);
        for (b, chunk) in order.chunks(batch_size).enumerate() {
            let idx: Vec<usize> = chunk.iter().map(|p| p.0).collect();
            let labels: Vec<usize> = chunk.iter().map(|p| p.1).collect();
            let x = input.apply(ds.rows(&idx).view())?;
            let (logits, tape) = net.forward_taped(x.view())?;
            let (loss, g) = softmax_ce(logits.view(), &labels, None)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("classifier {stage} loss at epoch {epoch} batch {b}"),
                });
            }
            let (grads, _) = tape.backward(net, g.view());
            opt.step(net, &grads, "classifier").map_err(|e| match e {
                Error::NonFinite { context } => Error::NonFinite {
                    context: format!("{context} ({stage} epoch {epoch} batch {b})"),
                },
                other => other,
            })?;
        }
    }
    Ok(())
}

/// Trains `D` on the working-set pairs, then finetunes on the labeled pairs.
/// Starts from `init` when given, otherwise from a fresh seeded network.
pub fn train_classifier(
    ds: &EmbeddingDataset,
    working: &[(usize, usize)],
    labeled: &[(usize, usize)],
    cfg: &ClassifierConfig,
    init: Option<&ClassifierD>,
) -> Result<ClassifierD> {
    cfg.validate()?;
    let mut model = init.cloned().unwrap_or_else(|| {
        let mut fresh = ClassifierD::new(ds.dim(), ds.num_classes(), cfg);
        fresh.input = Standardizer::fit(ds.features());
        fresh
    });
    let mut rng = seeded_rng(cfg.seed, 8);
    let mut opt = Sgd::new(cfg.lr, cfg.momentum);
    fit_epochs(
        &mut model.network,
        &model.input,
        &mut opt,
        ds,
        working,
        cfg.epochs,
        cfg.batch_size,
        &mut rng,
        "working-set",
    )?;
    let mut opt = Sgd::new(cfg.lr, cfg.momentum);
    fit_epochs(
        &mut model.network,
        &model.input,
        &mut opt,
        ds,
        labeled,
        cfg.finetune_epochs,
        cfg.batch_size,
        &mut rng,
        "finetune",
    )?;
    Ok(model)
}

/// Fraction of `indices` whose prediction equals the ground truth.
pub fn evaluate<P: LabelPredictor + ?Sized>(
    model: &P,
    ds: &EmbeddingDataset,
    indices: &[usize],
) -> Result<f64> {
    if indices.is_empty() {
        return Ok(0.0);
    }
    let truth = ds.ground_truth();
    let predicted = model.predict(ds.rows(indices).view())?;
    let mut correct = 0;
    for (&i, p) in indices.iter().zip(predicted) {
        let t = truth
            .get(i)
            .ok_or_else(|| Error::Dataset(format!("sample {i} has no ground truth")))?;
        correct += usize::from(p == t);
    }
    Ok(correct as f64 / indices.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatchConfig {
    pub alpha: f64,
    pub alpha_prime: f64,
    pub max_iterations: usize,
    /// Stop after this many consecutive rounds without a label change.
    pub stagnation_limit: usize,
    pub classifier: ClassifierConfig,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            alpha: 1e-5,
            alpha_prime: 1e-2,
            max_iterations: 50,
            stagnation_limit: 3,
            classifier: ClassifierConfig::default(),
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        validate_alpha(self.alpha)?;
        validate_alpha(self.alpha_prime)?;
        if self.max_iterations == 0 || self.stagnation_limit == 0 {
            return Err(Error::Config(
                "max_iterations and stagnation_limit must be >= 1".into(),
            ));
        }
        self.classifier.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub acc_l: f64,
    pub acc_best: f64,
    pub map_changes: usize,
    pub conf_set_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    AccuracyDropped,
    Stagnated,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct MatchState {
    pub working: WorkingSet,
    pub map: LabelMap,
    pub acc_best: f64,
    pub model_best: ClassifierD,
    /// Round that produced `model_best` (1 is the cold start).
    pub best_iteration: usize,
    pub iteration: usize,
    pub history: Vec<IterationRecord>,
    pub stop_reason: StopReason,
}

/// The iterative matching loop.
///
/// Round 1 is the cold start from DAM predictions on the labeled set; each
/// later round remaps from `D`'s confident predictions on the source domain.
/// The loop stops when labeled-set accuracy falls below the best so far,
/// after `stagnation_limit` rounds without a label change, or after
/// `max_iterations` rounds in total.
pub fn iterate_match(
    ds: &EmbeddingDataset,
    split: &DomainSplit,
    dam: &DamNetwork,
    cfg: &MatchConfig,
) -> Result<MatchState> {
    cfg.validate()?;
    let labeled = ds.labeled_pairs();
    if labeled.is_empty() {
        return Err(Error::Dataset(
            "iterative matching needs a labeled set".into(),
        ));
    }
    let t_indices: Vec<usize> = labeled.iter().map(|p| p.0).collect();
    let all: Vec<usize> = (0..ds.len()).collect();
    let num_pseudo = dam.num_classes();

    let dam_probs = dam.predict_proba(ds.features())?;
    let mut working = WorkingSet::new(argmax_rows(&dam_probs));

    let t_probs = dam_probs.select(ndarray::Axis(0), &t_indices);
    let confident = confident_from_probs(t_probs.view(), &t_indices, cfg.alpha)?;
    let mut map = cold_start_map(&confident, &labeled, num_pseudo, ds.num_classes())?;
    let changes = apply_map(&map, &mut working, &all);
    let mut model = train_classifier(
        ds,
        &working.training_pairs(),
        &labeled,
        &cfg.classifier,
        None,
    )?;
    let acc = evaluate(&model, ds, &t_indices)?;

    let mut state_best = (acc, model.clone(), 1usize);
    let mut history = vec![IterationRecord {
        iteration: 1,
        acc_l: acc,
        acc_best: acc,
        map_changes: changes,
        conf_set_size: confident.len(),
    }];
    let mut stagnant = usize::from(changes == 0);
    let mut stop_reason = StopReason::MaxIterations;
    let source: Vec<usize> = split.source().into_iter().map(|p| p.0).collect();

    let mut iteration = 1;
    while iteration < cfg.max_iterations {
        if stagnant >= cfg.stagnation_limit {
            stop_reason = StopReason::Stagnated;
            break;
        }
        iteration += 1;
        let probs = model.predict_proba(ds.rows(&source).view())?;
        let confident = confident_from_probs(probs.view(), &source, cfg.alpha_prime)?;
        map = remap_from_predictions(&map, &confident, &working, iteration)?;
        let changes = apply_map(&map, &mut working, &all);
        model = train_classifier(
            ds,
            &working.training_pairs(),
            &labeled,
            &cfg.classifier,
            Some(&model),
        )?;
        let acc = evaluate(&model, ds, &t_indices)?;
        let improved = acc >= state_best.0;
        if improved {
            state_best = (acc, model.clone(), iteration);
        }
        history.push(IterationRecord {
            iteration,
            acc_l: acc,
            acc_best: state_best.0,
            map_changes: changes,
            conf_set_size: confident.len(),
        });
        if !improved {
            stop_reason = StopReason::AccuracyDropped;
            break;
        }
        stagnant = if changes == 0 { stagnant + 1 } else { 0 };
    }

    let (acc_best, model_best, best_iteration) = state_best;
    Ok(MatchState {
        working,
        map,
        acc_best,
        model_best,
        best_iteration,
        iteration: history.len(),
        history,
        stop_reason,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dam::ConfidentPrediction;

    fn conf(members: &[(usize, usize)]) -> ConfidentSet {
        ConfidentSet {
            alpha: 1e-5,
            members: members
                .iter()
                .map(|&(index, label)| ConfidentPrediction {
                    index,
                    label,
                    probability: 1.0,
                })
                .collect(),
        }
    }

    #[test]
    fn cold_start_unanimous_and_majority() {
        let labeled = vec![(0, 7), (1, 7), (2, 5), (3, 5), (4, 9)];
        let c = conf(&[(0, 3), (1, 3), (2, 2), (3, 2), (4, 2)]);
        let map = cold_start_map(&c, &labeled, 4, 10).unwrap();
        assert_eq!(map.get(3), Some(7));
        assert_eq!(map.get(2), Some(5));
        assert_eq!(map.get(0), None);
        assert_eq!(map.provenance(3), Some(Provenance::ColdStart));
    }

    #[test]
    fn cold_start_tie_prefers_smaller_label() {
        let labeled = vec![(0, 4), (1, 1)];
        let map = cold_start_map(&conf(&[(0, 0), (1, 0)]), &labeled, 1, 5).unwrap();
        assert_eq!(map.get(0), Some(1));
    }

    #[test]
    fn empty_confident_set_is_a_cold_start_failure() {
        let err = cold_start_map(&conf(&[]), &[(0, 0)], 2, 2).unwrap_err();
        assert!(matches!(err, Error::ColdStart { .. }));
    }

    #[test]
    fn apply_map_counts_changes_and_skips_unmapped() {
        let mut r = WorkingSet::new(vec![0; 10]);
        let empty = LabelMap::new(2, 5);
        assert_eq!(apply_map(&empty, &mut r, &(0..10).collect::<Vec<_>>()), 0);
        let mut map = LabelMap::new(2, 5);
        map.set(0, 4, Provenance::ColdStart).unwrap();
        let targets: Vec<usize> = (0..10).collect();
        assert_eq!(apply_map(&map, &mut r, &targets), 10);
        assert!(r.assigned.iter().all(|&a| a == Some(4)));
        assert_eq!(apply_map(&map, &mut r, &targets), 0);

        let mut r = WorkingSet::new(vec![1, 1]);
        assert_eq!(apply_map(&map, &mut r, &[0, 1]), 0);
        assert_eq!(r.assigned, vec![None, None]);
    }

    #[test]
    fn remap_keeps_entries_without_votes() {
        let mut prev = LabelMap::new(3, 3);
        prev.set(0, 0, Provenance::ColdStart).unwrap();
        prev.set(1, 1, Provenance::ColdStart).unwrap();
        let r = WorkingSet::new(vec![0, 0, 1, 2]);
        let next = remap_from_predictions(&prev, &conf(&[(0, 2), (1, 2), (3, 1)]), &r, 4).unwrap();
        assert_eq!(next.get(0), Some(2));
        assert_eq!(next.provenance(0), Some(Provenance::Iteration(4)));
        assert_eq!(next.get(1), Some(1));
        assert_eq!(next.provenance(1), Some(Provenance::ColdStart));
        assert_eq!(next.get(2), Some(1));
        let same = remap_from_predictions(&prev, &conf(&[]), &r, 5).unwrap();
        assert_eq!(same, prev);
    }

    struct Constant(usize);

    impl LabelPredictor for Constant {
        fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
            Ok(vec![self.0; x.nrows()])
        }
    }

    #[test]
    fn constant_predictor_scores_one_over_classes() {
        let labels: Vec<Option<usize>> = (0..12).map(|i| Some(i % 4)).collect();
        let ds = EmbeddingDataset::new(Array2::zeros((12, 1)), Some(labels), 4).unwrap();
        let acc = evaluate(&Constant(2), &ds, &(0..12).collect::<Vec<_>>()).unwrap();
        assert!((acc - 0.25).abs() < 1e-15);
    }

    #[test]
    fn provenance_text_round_trip() {
        for p in [Provenance::ColdStart, Provenance::Iteration(12)] {
            assert_eq!(p.to_string().parse::<Provenance>().unwrap(), p);
        }
    }

    #[test]
    fn zero_epoch_training_returns_initial_network() {
        let ds = EmbeddingDataset::new(Array2::zeros((4, 3)), Some(vec![Some(0); 4]), 2).unwrap();
        let cfg = ClassifierConfig {
            epochs: 0,
            finetune_epochs: 0,
            ..ClassifierConfig::default()
        };
        let pairs = vec![(0, 0), (1, 0)];
        let trained = train_classifier(&ds, &pairs, &pairs, &cfg, None).unwrap();
        assert_eq!(trained, ClassifierD::new(3, 2, &cfg));
    }
}
