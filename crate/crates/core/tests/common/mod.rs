//! Independent oracles shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use std::path::PathBuf;

use arae_core::attacks::{pgd_linf_latent, pgd_linf_recon, PerturbationSpec};
use arae_core::metrics::{best_f1, fpr_at_tpr, roc_auc, PositiveClass, ScoredSet};
use arae_core::nn::{Activation, DenseLayer, Network, ScalarLoss};
use arae_core::{Autoencoder, Sample, Split};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;
/// Gradients smaller than this are compared absolutely.
pub const FD_FLOOR: f64 = 1e-6;

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(FD_FLOOR)
}

pub fn random_network(rng: &mut ChaCha8Rng) -> Network {
    let depth = rng.random_range(1..=3);
    let mut dims = vec![rng.random_range(1..=5)];
    for _ in 0..depth {
        dims.push(rng.random_range(1..=5));
    }
    let layers = dims
        .windows(2)
        .map(|w| {
            let weights = Array2::from_shape_fn((w[1], w[0]), |_| rng.random_range(-1.5..1.5));
            let biases = Array1::from_shape_fn(w[1], |_| rng.random_range(-0.5..0.5));
            let act = if rng.random_bool(0.7) { Activation::Sigmoid } else { Activation::Identity };
            DenseLayer::new(weights, biases, act).unwrap()
        })
        .collect();
    Network::new(layers).unwrap()
}

/// Worst relative error between backprop and central differences over every
/// parameter and input coordinate of one random network and batch.
pub fn gradient_check(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = random_network(&mut rng);
    let rows = rng.random_range(1..=3);
    let x = Array2::from_shape_fn((rows, net.in_dim()), |_| rng.random_range(-1.0..1.0));
    let target = Array2::from_shape_fn((rows, net.out_dim()), |_| rng.random_range(0.0..1.0));
    let half = rng.random_bool(0.5);
    let loss_of = |net: &Network, x: &Array2<f64>| -> f64 {
        let y = net.forward_batch(x.view()).unwrap();
        if half {
            0.5 * y.iter().map(|v| v * v).sum::<f64>()
        } else {
            (&y - &target).iter().map(|v| v * v).sum()
        }
    };
    let loss = if half { ScalarLoss::HalfSquaredNorm } else { ScalarLoss::SquaredDistance(target.view()) };
    let (_, grads, dx) = net.loss_gradients(x.clone(), loss).unwrap();

    let mut worst = 0.0f64;
    for l in 0..net.layers().len() {
        let (o, i) = net.layers()[l].weights.dim();
        for r in 0..o {
            for c in 0..=i {
                let nudge = |h: f64| {
                    let mut n = net.clone();
                    let layer = &mut n.layers_mut()[l];
                    if c == i {
                        layer.biases[r] += h;
                    } else {
                        layer.weights[[r, c]] += h;
                    }
                    loss_of(&n, &x)
                };
                let fd = (nudge(FD_STEP) - nudge(-FD_STEP)) / (2.0 * FD_STEP);
                let g = if c == i { grads.layers[l].biases[r] } else { grads.layers[l].weights[[r, c]] };
                worst = worst.max(rel_err(g, fd));
            }
        }
    }
    for idx in 0..x.len() {
        let nudge = |h: f64| {
            let mut xp = x.clone();
            xp.as_slice_mut().unwrap()[idx] += h;
            loss_of(&net, &xp)
        };
        let fd = (nudge(FD_STEP) - nudge(-FD_STEP)) / (2.0 * FD_STEP);
        worst = worst.max(rel_err(dx.as_slice().unwrap()[idx], fd));
    }
    worst
}

pub const GRID: usize = 41;
/// Random starts per PGD run in the grid oracle.
pub const PGD_RESTARTS: usize = 16;

/// Random 2-pixel sigmoid autoencoder, input, and ℓ∞ radius.
pub fn two_pixel_instance(seed: u64) -> (Autoencoder, Sample, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let latent = rng.random_range(1..=3);
    let ae = Autoencoder::new(2, &[4, latent], &mut rng).unwrap();
    let x = Sample::new(vec![rng.random(), rng.random()], 1, 2, 0, Split::Test).unwrap();
    (ae, x, rng.random_range(0.05..0.3))
}

/// Maximum of `f` over the 41×41 grid covering the ℓ∞ ball around `x`,
/// clipped to the unit square.
pub fn grid_max(x: &[f64], eps: f64, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let axis = |c: f64| -> Vec<f64> {
        (0..GRID)
            .map(|k| (c - eps + 2.0 * eps * k as f64 / (GRID - 1) as f64).clamp(0.0, 1.0))
            .collect()
    };
    let (a, b) = (axis(x[0]), axis(x[1]));
    let mut best = f64::NEG_INFINITY;
    for &u in &a {
        for &v in &b {
            best = best.max(f(&[u, v]));
        }
    }
    best
}

pub struct PgdRatios {
    pub latent: f64,
    pub recon: f64,
}

/// PGD value divided by the grid maximum for both attack objectives; the
/// PGD value is recomputed from the returned point after checking the ball.
pub fn pgd_vs_grid(seed: u64, restarts: usize) -> PgdRatios {
    let (ae, x, eps) = two_pixel_instance(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let inside = |adv: &[f64]| {
        adv.iter()
            .zip(&x.pixels)
            .all(|(a, c)| (a - c).abs() <= eps + 1e-12 && (0.0..=1.0).contains(a))
    };
    let ratio = |achieved: f64, best: f64| if best <= 0.0 { 1.0 } else { achieved / best };

    let (adv, _) = pgd_linf_latent(&ae, &x, &PerturbationSpec::linf(eps).with_restarts(restarts), &mut rng).unwrap();
    assert!(inside(&adv));
    let latent_best = grid_max(&x.pixels, eps, |p| ae.latent_loss(&x, p).unwrap());
    let latent = ratio(ae.latent_loss(&x, &adv).unwrap(), latent_best);

    let (adv, _) = pgd_linf_recon(&ae, &x, &PerturbationSpec::recon_linf(eps), &mut rng).unwrap();
    assert!(inside(&adv));
    let recon_best = grid_max(&x.pixels, eps, |p| ae.rec_loss(&x, p).unwrap());
    let recon = ratio(ae.rec_loss(&x, &adv).unwrap(), recon_best);
    PgdRatios { latent, recon }
}

/// Scores drawn from a small integer grid so ties are common.
pub fn random_scored(seed: u64) -> (Vec<f64>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..60);
    let levels = rng.random_range(1..12);
    let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
    labels[0] = true;
    labels[1] = false;
    let scores = (0..n).map(|_| rng.random_range(0..levels) as f64 * 0.25 - 1.0).collect();
    (scores, labels)
}

pub fn pairwise_auc(scores: &[f64], positive: &[bool]) -> f64 {
    let (mut wins2, mut pairs) = (0u64, 0u64);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if positive[i] && !positive[j] {
                pairs += 1;
                wins2 += if si > sj { 2 } else if si == sj { 1 } else { 0 };
            }
        }
    }
    wins2 as f64 / (2 * pairs) as f64
}

/// Exhaustive scan over `score >= t` for every observed score and `+inf`.
pub fn scan_thresholds(scores: &[f64], positive: &[bool]) -> Vec<(f64, usize, usize)> {
    let mut ts: Vec<f64> = scores.to_vec();
    ts.push(f64::INFINITY);
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    ts.into_iter()
        .map(|t| {
            let tp = scores.iter().zip(positive).filter(|(s, p)| **p && **s >= t).count();
            let fp = scores.iter().zip(positive).filter(|(s, p)| !**p && **s >= t).count();
            (t, tp, fp)
        })
        .collect()
}

pub fn scan_best_f1(scores: &[f64], positive: &[bool]) -> (f64, f64) {
    let n_pos = positive.iter().filter(|p| **p).count();
    let mut best = (f64::NEG_INFINITY, f64::INFINITY);
    for (t, tp, fp) in scan_thresholds(scores, positive) {
        let f1 = if tp == 0 { 0.0 } else { 2.0 * tp as f64 / (tp + fp + n_pos) as f64 };
        if f1 > best.0 || (f1 == best.0 && t < best.1) {
            best = (f1, t);
        }
    }
    best
}

pub fn scan_fpr_at_tpr(scores: &[f64], positive: &[bool], target: f64) -> f64 {
    let n_pos = positive.iter().filter(|p| **p).count() as f64;
    let n_neg = positive.len() as f64 - n_pos;
    scan_thresholds(scores, positive)
        .into_iter()
        .filter(|&(_, tp, _)| tp as f64 / n_pos >= target)
        .map(|(_, _, fp)| fp as f64 / n_neg)
        .fold(f64::INFINITY, f64::min)
}

/// Whether every metric agrees exactly with its oracle on one instance.
pub fn metrics_agree(seed: u64) -> Result<(), String> {
    let (scores, positive) = random_scored(seed);
    let set = ScoredSet::new(scores.clone(), positive.clone(), PositiveClass::Anomalous).unwrap();
    let auc = roc_auc(&set);
    let oracle = pairwise_auc(&scores, &positive);
    if auc != oracle {
        return Err(format!("seed {seed}: auc {auc} vs {oracle}"));
    }
    let f1 = best_f1(&set);
    let oracle = scan_best_f1(&scores, &positive);
    if f1 != oracle {
        return Err(format!("seed {seed}: best_f1 {f1:?} vs {oracle:?}"));
    }
    for target in [0.5, 0.9, 0.995, 1.0] {
        let fpr = fpr_at_tpr(&set, target).unwrap();
        let oracle = scan_fpr_at_tpr(&scores, &positive, target);
        if fpr != oracle {
            return Err(format!("seed {seed}: fpr@{target} {fpr} vs {oracle}"));
        }
    }
    Ok(())
}

/// `ARAE_MNIST_DIR`, else `data/mnist` at the workspace root.
pub fn mnist_dir() -> PathBuf {
    std::env::var_os("ARAE_MNIST_DIR").map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist")
    })
}
