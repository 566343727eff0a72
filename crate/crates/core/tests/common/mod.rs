#![allow(dead_code)]

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2};
use pseudoalign::dam::{DamGrads, DamLoss, DamNetwork};
use pseudoalign::{finite_diff_check, EmbeddingDataset, Mlp, SyntheticSpec};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_7e57)
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-scale..scale))
}

/// Four classes, three domains each, 300 samples per class in 16 dimensions.
pub fn reference_spec(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        classes: 4,
        domains_per_class: 3,
        samples_per_class: 300,
        dim: 16,
        class_separation: 8.0,
        domain_spread: 3.0,
        noise_sigma: 1.5,
        seed,
    }
}

/// Ten overlapping classes; K-means agrees with the generating labels on
/// roughly 80% of samples.
pub fn overlapping_spec(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        classes: 10,
        domains_per_class: 1,
        samples_per_class: 500,
        dim: 16,
        class_separation: 10.0,
        domain_spread: 0.0,
        noise_sigma: 2.85,
        seed,
    }
}

/// Histogram argmax per key, counted with an ordered map and resolved by
/// sorting `(count desc, label asc)`.
pub fn histogram_argmax(pairs: &[(usize, usize)], keys: usize) -> Vec<Option<usize>> {
    let mut hist: BTreeMap<usize, BTreeMap<usize, usize>> = BTreeMap::new();
    for &(k, v) in pairs {
        *hist.entry(k).or_default().entry(v).or_default() += 1;
    }
    (0..keys)
        .map(|k| {
            hist.get(&k).map(|h| {
                let mut counts: Vec<(usize, usize)> = h.iter().map(|(&l, &c)| (l, c)).collect();
                counts.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
                counts[0].0
            })
        })
        .collect()
}

/// Modal-label count per group, by sorting each group's labels.
pub fn brute_purity(groups: &[Vec<usize>], ds: &EmbeddingDataset) -> (usize, usize) {
    let truth = ds.ground_truth();
    let mut correct = 0;
    let mut total = 0;
    for g in groups {
        let mut labels: Vec<usize> = g.iter().map(|&i| truth.get(i).unwrap()).collect();
        labels.sort_unstable();
        let mut best = 0;
        let mut run = 0;
        for (j, l) in labels.iter().enumerate() {
            run = if j > 0 && labels[j - 1] == *l {
                run + 1
            } else {
                1
            };
            best = best.max(run);
        }
        correct += best;
        total += labels.len();
    }
    (correct, total)
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// Dense forward pass written out with explicit loops.
pub fn forward_loops(net: &pseudoalign::Mlp, x: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut h = x.to_owned();
    for layer in net.layers() {
        let mut out = Array2::zeros((h.nrows(), layer.out_dim()));
        for r in 0..h.nrows() {
            for o in 0..layer.out_dim() {
                let mut s = layer.bias[o];
                for i in 0..layer.in_dim() {
                    s += layer.weight[[o, i]] * h[[r, i]];
                }
                out[[r, o]] = match layer.activation {
                    pseudoalign::neural::Activation::Relu => relu(s),
                    pseudoalign::neural::Activation::Identity => s,
                };
            }
        }
        h = out;
    }
    h
}

/// `-log softmax(row)[label]` for each row.
pub fn nll_rows(logits: &Array2<f64>, labels: &[usize]) -> Vec<f64> {
    logits
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(row, &l)| {
            let lse = row.iter().map(|v| v.exp()).sum::<f64>().ln();
            lse - row[l]
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Classification and domain terms of the ordinary loss, from plain forward
/// passes: `mean_s Lc - lambda * mean_all Lg`.
pub fn ordinary_terms(
    net: &DamNetwork,
    xs: ArrayView2<'_, f64>,
    ys: &[usize],
    xa: ArrayView2<'_, f64>,
    flags: &[usize],
) -> (f64, f64) {
    let cls = mean(&nll_rows(
        &forward_loops(&net.classifier, forward_loops(&net.mapper, xs).view()),
        ys,
    ));
    let dom = mean(&nll_rows(
        &forward_loops(&net.discriminator, forward_loops(&net.mapper, xa).view()),
        flags,
    ));
    (cls, dom)
}

/// Terms of the class-weighted loss:
/// `mean(v_y Lc) - lambda * (mean(v_y Lg_source) + mean(Lg_target))`.
pub fn partial_terms(
    net: &DamNetwork,
    xs: ArrayView2<'_, f64>,
    ys: &[usize],
    xt: ArrayView2<'_, f64>,
    v: &[f64],
) -> (f64, f64) {
    let fs = forward_loops(&net.mapper, xs);
    let lc = nll_rows(&forward_loops(&net.classifier, fs.view()), ys);
    let lgs = nll_rows(
        &forward_loops(&net.discriminator, fs.view()),
        &vec![0; ys.len()],
    );
    let weighted = |l: &[f64]| mean(&l.iter().zip(ys).map(|(l, &y)| v[y] * l).collect::<Vec<_>>());
    let ft = forward_loops(&net.mapper, xt);
    let lgt = nll_rows(
        &forward_loops(&net.discriminator, ft.view()),
        &vec![1; xt.nrows()],
    );
    (weighted(&lc), weighted(&lgs) + mean(&lgt))
}

/// Smallest |pre-activation| over every ReLU unit for the batch. Central
/// differences are only meaningful when this is well above the step size.
pub fn relu_margin(net: &pseudoalign::Mlp, x: ArrayView2<'_, f64>) -> f64 {
    let mut h = x.to_owned();
    let mut margin = f64::INFINITY;
    for layer in net.layers() {
        let z = h.dot(&layer.weight.t()) + &layer.bias;
        if layer.activation == pseudoalign::neural::Activation::Relu {
            margin = z.iter().fold(margin, |m, v| m.min(v.abs()));
            h = z.mapv(relu);
        } else {
            h = z;
        }
    }
    margin
}

/// ReLU margin of a DAM network over a set of input batches.
pub fn dam_margin(net: &DamNetwork, batches: &[ArrayView2<'_, f64>]) -> f64 {
    batches
        .iter()
        .map(|x| {
            let f = forward_loops(&net.mapper, *x);
            relu_margin(&net.mapper, *x).min(relu_margin(&net.discriminator, f.view()))
        })
        .fold(f64::INFINITY, f64::min)
}

pub const FD_MARGIN: f64 = 1e-3;

#[derive(Clone, Copy, Debug)]
pub enum Sub {
    Mapper,
    Classifier,
    Discriminator,
}

pub fn sub_mut(net: &mut DamNetwork, sub: Sub) -> &mut Mlp {
    match sub {
        Sub::Mapper => &mut net.mapper,
        Sub::Classifier => &mut net.classifier,
        Sub::Discriminator => &mut net.discriminator,
    }
}

pub fn sub_grad(g: &DamGrads, sub: Sub) -> Vec<f64> {
    match sub {
        Sub::Mapper => g.mapper.flat(),
        Sub::Classifier => g.classifier.flat(),
        Sub::Discriminator => g.discriminator.flat(),
    }
}

/// Worst relative error over the three subnets. Mapper and classifier are
/// checked against the total loss, the discriminator against its own term.
pub fn check_all<L, O>(net: &DamNetwork, lib: L, oracle: O) -> f64
where
    L: Fn(&DamNetwork) -> (DamLoss, DamGrads),
    O: Fn(&DamNetwork) -> (f64, f64),
{
    let lambda = net.gate.lambda;
    let mut worst = 0.0f64;
    for sub in [Sub::Mapper, Sub::Classifier, Sub::Discriminator] {
        let mut probe = net.clone();
        let params = sub_mut(&mut probe, sub).params_flat();
        let err = finite_diff_check(
            |p| {
                sub_mut(&mut probe, sub).set_params_flat(p);
                let (cls, dom) = oracle(&probe);
                let value = match sub {
                    Sub::Discriminator => dom,
                    _ => cls - lambda * dom,
                };
                // Only the unperturbed call's gradient is used.
                let grad = if p == params.as_slice() {
                    sub_grad(&lib(&probe).1, sub)
                } else {
                    Vec::new()
                };
                (value, grad)
            },
            &params,
            1e-5,
        );
        worst = worst.max(err);
    }
    worst
}
