//! K-means pseudo-labelling, centroid-nearest confidence subsets and their
//! source/target domain splits.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::EmbeddingDataset;
use crate::error::{Error, Result};
use crate::seeded_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KMeansConfig {
    #[serde(skip)]
    pub k: usize,
    #[serde(skip)]
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
    /// Independent k-means++ initialisations; the lowest final inertia wins.
    pub restarts: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            k: 0,
            seed: 0,
            max_iters: 300,
            tol: 1e-8,
            restarts: 10,
        }
    }
}

/// Centroids and the pseudo-label (cluster id) of every sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub centroids: Array2<f64>,
    pub assignment: Vec<usize>,
    /// Inertia after each assignment step, including the final one.
    pub inertia_trace: Vec<f64>,
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid (lowest index on ties) and the squared distance.
fn nearest(x: ArrayView1<'_, f64>, centroids: ArrayView2<'_, f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, row) in centroids.rows().into_iter().enumerate() {
        let d = sq_dist(x, row);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

impl ClusterModel {
    pub fn from_parts(centroids: Array2<f64>, assignment: Vec<usize>) -> Result<Self> {
        let k = centroids.nrows();
        if let Some(&bad) = assignment.iter().find(|&&c| c >= k) {
            return Err(Error::Dataset(format!(
                "cluster id {bad} out of range for {k} centroids"
            )));
        }
        Ok(Self {
            centroids,
            assignment,
            inertia_trace: Vec::new(),
        })
    }

    pub fn k(&self) -> usize {
        self.centroids.nrows()
    }

    /// Euclidean distance from sample `index` to its assigned centroid.
    pub fn distance(&self, ds: &EmbeddingDataset, index: usize) -> f64 {
        sq_dist(ds.row(index), self.centroids.row(self.assignment[index])).sqrt()
    }

    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k()];
        for (i, &c) in self.assignment.iter().enumerate() {
            out[c].push(i);
        }
        out
    }

    pub fn inertia(&self, ds: &EmbeddingDataset) -> f64 {
        (0..ds.len())
            .map(|i| sq_dist(ds.row(i), self.centroids.row(self.assignment[i])))
            .sum()
    }
}

fn kmeans_plus_plus<R: Rng>(x: ArrayView2<'_, f64>, k: usize, rng: &mut R) -> Array2<f64> {
    let n = x.nrows();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(x.row(i), x.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // Rounding can leave `acc` just short of `target`.
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).expect("total > 0"))
        } else {
            (0..n).find(|i| !chosen.contains(i)).expect("k <= n")
        };
        chosen.push(pick);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(x.row(i), x.row(pick)));
        }
    }
    let mut centroids = Array2::zeros((k, x.ncols()));
    for (c, &i) in chosen.iter().enumerate() {
        centroids.row_mut(c).assign(&x.row(i));
    }
    centroids
}

/// Assigns every sample, then re-seeds each empty cluster at the sample
/// farthest from its centroid. Returns per-sample squared distances.
fn assign(
    x: ArrayView2<'_, f64>,
    centroids: &mut Array2<f64>,
    assignment: &mut [usize],
) -> Vec<f64> {
    let k = centroids.nrows();
    let mut d2 = vec![0.0; x.nrows()];
    let mut counts = vec![0usize; k];
    for (i, row) in x.rows().into_iter().enumerate() {
        let (c, d) = nearest(row, centroids.view());
        assignment[i] = c;
        d2[i] = d;
        counts[c] += 1;
    }
    for c in 0..k {
        if counts[c] > 0 {
            continue;
        }
        let mut far: Option<usize> = None;
        for i in 0..x.nrows() {
            if counts[assignment[i]] > 1 && far.is_none_or(|f| d2[i] > d2[f]) {
                far = Some(i);
            }
        }
        let far = far.expect("k <= n guarantees a cluster with spare members");
        counts[assignment[far]] -= 1;
        counts[c] = 1;
        assignment[far] = c;
        d2[far] = 0.0;
        centroids.row_mut(c).assign(&x.row(far));
    }
    d2
}

fn lloyd<R: Rng>(x: ArrayView2<'_, f64>, cfg: &KMeansConfig, rng: &mut R) -> ClusterModel {
    let mut centroids = kmeans_plus_plus(x, cfg.k, rng);
    let mut assignment = vec![0usize; x.nrows()];
    let mut trace = Vec::new();

    for _ in 0..cfg.max_iters {
        let d2 = assign(x, &mut centroids, &mut assignment);
        trace.push(d2.iter().sum());

        let mut sums = Array2::<f64>::zeros(centroids.raw_dim());
        let mut counts = vec![0usize; cfg.k];
        for (i, &c) in assignment.iter().enumerate() {
            counts[c] += 1;
            let mut s = sums.row_mut(c);
            s += &x.row(i);
        }
        let mut movement = 0.0f64;
        for (c, &count) in counts.iter().enumerate() {
            let mean = sums.row(c).mapv(|v| v / count as f64);
            movement = movement.max(sq_dist(mean.view(), centroids.row(c)).sqrt());
            centroids.row_mut(c).assign(&mean);
        }
        if movement < cfg.tol {
            break;
        }
    }
    let d2 = assign(x, &mut centroids, &mut assignment);
    trace.push(d2.iter().sum());
    ClusterModel {
        centroids,
        assignment,
        inertia_trace: trace,
    }
}

/// Lloyd's algorithm from k-means++ seeding, best of `restarts` runs.
///
/// Each run stops once no centroid moves by `tol` or more, or after
/// `max_iters` update steps. The returned assignment is nearest-centroid with
/// respect to the returned centroids and leaves no cluster empty; the
/// inertia trace is that of the winning run.
pub fn kmeans(ds: &EmbeddingDataset, cfg: &KMeansConfig) -> Result<ClusterModel> {
    let x = ds.features();
    let n = x.nrows();
    if cfg.k == 0 || cfg.k > n {
        return Err(Error::Config(format!(
            "K-means needs 1 <= K <= N, got K={} for N={n}",
            cfg.k
        )));
    }
    if !(cfg.tol.is_finite() && cfg.tol >= 0.0) {
        return Err(Error::Config(
            "K-means tolerance must be finite and >= 0".into(),
        ));
    }
    if cfg.restarts == 0 {
        return Err(Error::Config("K-means needs at least one restart".into()));
    }
    let mut rng = seeded_rng(cfg.seed, 3);
    let mut best: Option<ClusterModel> = None;
    for _ in 0..cfg.restarts {
        let run = lloyd(x, cfg, &mut rng);
        let better = best
            .as_ref()
            .is_none_or(|b| run.inertia_trace.last() < b.inertia_trace.last());
        if better {
            best = Some(run);
        }
    }
    Ok(best.expect("restarts >= 1"))
}

/// The `k` members of every cluster nearest its centroid, ordered by
/// distance with lower sample index winning ties.
pub fn centroid_topk(
    cm: &ClusterModel,
    ds: &EmbeddingDataset,
    k: usize,
) -> Result<Vec<Vec<usize>>> {
    cm.members()
        .into_iter()
        .enumerate()
        .map(|(cluster, members)| {
            if k > members.len() {
                return Err(Error::ClusterTooSmall {
                    cluster,
                    size: members.len(),
                    requested: k,
                });
            }
            let mut ranked: Vec<(f64, usize)> = members
                .into_iter()
                .map(|i| (cm.distance(ds, i), i))
                .collect();
            ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            Ok(ranked.into_iter().take(k).map(|(_, i)| i).collect())
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitStrategy {
    /// Seeded shuffle, then the first `ratio` share becomes the source.
    Random,
    /// The `ratio` share nearest the centroid becomes the source.
    Circle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSplit {
    pub cluster: usize,
    pub confident: Vec<usize>,
    pub source: Vec<usize>,
    pub target: Vec<usize>,
}

/// Domain flag of a source sample.
pub const SOURCE: usize = 0;
/// Domain flag of a target sample.
pub const TARGET: usize = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct DomainSplit {
    pub strategy: SplitStrategy,
    pub ratio: f64,
    pub clusters: Vec<ClusterSplit>,
}

impl DomainSplit {
    /// `(sample, cluster)` for every source member.
    pub fn source(&self) -> Vec<(usize, usize)> {
        self.clusters
            .iter()
            .flat_map(|c| c.source.iter().map(move |&i| (i, c.cluster)))
            .collect()
    }

    /// `(sample, cluster)` for every target member.
    pub fn target(&self) -> Vec<(usize, usize)> {
        self.clusters
            .iter()
            .flat_map(|c| c.target.iter().map(move |&i| (i, c.cluster)))
            .collect()
    }

    /// `(sample, cluster, domain flag)` for every confident sample.
    pub fn flagged(&self) -> Vec<(usize, usize, usize)> {
        let mut out: Vec<_> = self
            .source()
            .into_iter()
            .map(|(i, c)| (i, c, SOURCE))
            .chain(self.target().into_iter().map(|(i, c)| (i, c, TARGET)))
            .collect();
        out.sort_unstable();
        out
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.iter().all(|c| c.confident.is_empty())
    }
}

pub fn validate_ratio(ratio: f64) -> Result<()> {
    if ratio.is_finite() && ratio > 0.0 && ratio <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "split ratio must lie in (0, 1], got {ratio}"
        )))
    }
}

/// Partitions each confidence subset into source and target domains.
/// `confident[c]` must be ordered by centroid distance, as produced by
/// [`centroid_topk`]; the Circle strategy relies on it.
pub fn split_domains(
    confident: &[Vec<usize>],
    strategy: SplitStrategy,
    ratio: f64,
    seed: u64,
) -> Result<DomainSplit> {
    validate_ratio(ratio)?;
    let mut rng = seeded_rng(seed, 4);
    let clusters = confident
        .iter()
        .enumerate()
        .map(|(cluster, members)| {
            let n_source = (ratio * members.len() as f64).round() as usize;
            let mut order = members.clone();
            if strategy == SplitStrategy::Random {
                order.shuffle(&mut rng);
            }
            let mut source = order[..n_source].to_vec();
            let mut target = order[n_source..].to_vec();
            source.sort_unstable();
            target.sort_unstable();
            ClusterSplit {
                cluster,
                confident: members.clone(),
                source,
                target,
            }
        })
        .collect();
    Ok(DomainSplit {
        strategy,
        ratio,
        clusters,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Purity {
    pub total_correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

/// Share of samples carrying their group's modal ground-truth label.
pub fn purity(groups: &[Vec<usize>], ds: &EmbeddingDataset) -> Result<Purity> {
    let truth = ds.ground_truth();
    let mut total_correct = 0;
    let mut total = 0;
    let mut hist = vec![0usize; ds.num_classes()];
    for group in groups {
        hist.iter_mut().for_each(|h| *h = 0);
        for &i in group {
            let label = truth
                .get(i)
                .ok_or_else(|| Error::Dataset(format!("sample {i} has no ground truth")))?;
            hist[label] += 1;
        }
        total_correct += hist.iter().copied().max().unwrap_or(0);
        total += group.len();
    }
    let accuracy = if total == 0 {
        0.0
    } else {
        total_correct as f64 / total as f64
    };
    Ok(Purity {
        total_correct,
        total,
        accuracy,
    })
}
