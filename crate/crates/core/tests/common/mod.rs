//! Independent test-side oracles shared by the integration tests.
#![allow(dead_code)]

use gazegrade::features::WindowFeatures;
use gazegrade::nn::model::Batch;
use gazegrade::nn::{ModelConfig, Network};
use gazegrade::session::Label;
use gazegrade::windowing::PhaseTag;
use itertools::Itertools;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// AUROC by counting every positive/negative pair, ties counted half.
pub fn brute_auroc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// U by pairwise counting.
pub fn brute_u(a: &[f64], b: &[f64]) -> f64 {
    let mut u = 0.0;
    for &x in a {
        for &y in b {
            if x > y {
                u += 1.0;
            } else if x == y {
                u += 0.5;
            }
        }
    }
    u
}

/// Two-sided permutation p: the share of all relabelings of the pooled
/// values whose U is at least as far from `n1 * n2 / 2` as the observed U.
pub fn enumerated_p(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let center = (a.len() * b.len()) as f64 / 2.0;
    let observed = (brute_u(a, b) - center).abs();
    let (mut extreme, mut total) = (0u64, 0u64);
    for pick in (0..pooled.len()).combinations(a.len()) {
        let mut in_a = vec![false; pooled.len()];
        pick.iter().for_each(|&i| in_a[i] = true);
        let ga: Vec<f64> = pick.iter().map(|&i| pooled[i]).collect();
        let gb: Vec<f64> = (0..pooled.len())
            .filter(|&i| !in_a[i])
            .map(|i| pooled[i])
            .collect();
        total += 1;
        if (brute_u(&ga, &gb) - center).abs() >= observed - 1e-9 {
            extreme += 1;
        }
    }
    extreme as f64 / total as f64
}

/// Spearman rank correlation (midranks for ties).
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            for &k in &idx[i..=j] {
                r[k] = (i + j) as f64 / 2.0 + 1.0;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

pub const FD_STEP: f64 = 1e-4;
/// Gradients smaller than this are compared in absolute terms.
pub const FD_FLOOR: f64 = 1e-6;

/// Worst relative error of `grad` against central differences of `f` at `x`.
pub fn check_fd(x: &mut [f64], grad: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + FD_STEP;
        let up = f(x);
        x[i] = orig - FD_STEP;
        let down = f(x);
        x[i] = orig;
        let numeric = (up - down) / (2.0 * FD_STEP);
        worst = worst.max(rel_err(grad[i], numeric, FD_FLOOR));
    }
    worst
}

pub fn small_config(seed: u64) -> ModelConfig {
    ModelConfig {
        seq_len: 24,
        stem_channels: 4,
        block_channels: vec![4, 5, 6],
        kernel_size: 3,
        scalar_hidden: 3,
        fusion_hidden: 5,
        skip_connections: true,
        seed,
    }
}

pub fn random_window(rng: &mut impl Rng, seq_len: usize, label: Label) -> WindowFeatures {
    WindowFeatures {
        window_index: 0,
        start: 0.0,
        gaze_seq: (0..2 * seq_len).map(|_| rng.gen::<f64>()).collect(),
        afd_ms: rng.gen_range(-2.0..2.0),
        fc: rng.gen_range(-2.0..2.0),
        aed: rng.gen_range(-2.0..2.0),
        label,
        phase_tag: PhaseTag::InitialOnly,
        empty_gaze: false,
    }
}

/// Two expert and two non-expert random windows.
pub fn random_batch<T: gazegrade::nn::Real>(seq_len: usize, seed: u64) -> Batch<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ws: Vec<WindowFeatures> = [
        Label::Expert,
        Label::NonExpert,
        Label::Expert,
        Label::NonExpert,
    ]
    .iter()
    .map(|&l| random_window(&mut rng, seq_len, l))
    .collect();
    let refs: Vec<&WindowFeatures> = ws.iter().collect();
    Batch::from_features(&refs, seq_len).unwrap()
}

pub struct FullModelCheck {
    /// Worst relative error of the analytic gradient against step `FD_STEP`.
    pub worst: f64,
    /// Some perturbation crossed a ReLU kink: central differences at `FD_STEP`
    /// and `FD_STEP / 2` disagree, so neither is a valid derivative estimate.
    pub kinked: bool,
}

/// Finite-difference check over every parameter of a double-precision network.
pub fn full_model_fd(net: &Network<f64>, batch: &Batch<f64>) -> FullModelCheck {
    let (_, grad) = net.loss_and_gradients(batch).unwrap();
    let analytic: Vec<f64> = grad
        .tensors()
        .into_iter()
        .flat_map(|(_, t)| t.clone())
        .collect();
    let mut probe = net.clone();
    let shapes: Vec<usize> = net.tensors().into_iter().map(|(_, t)| t.len()).collect();
    let mut worst: f64 = 0.0;
    let mut kinked = false;
    let mut k = 0;
    for (ti, &len) in shapes.iter().enumerate() {
        for i in 0..len {
            let mut central = |h: f64| {
                let orig = probe.tensors_mut()[ti][i];
                probe.tensors_mut()[ti][i] = orig + h;
                let up = probe.loss_and_gradients(batch).unwrap().0;
                probe.tensors_mut()[ti][i] = orig - h;
                let down = probe.loss_and_gradients(batch).unwrap().0;
                probe.tensors_mut()[ti][i] = orig;
                (up - down) / (2.0 * h)
            };
            let full = central(FD_STEP);
            let half = central(FD_STEP / 2.0);
            kinked |= rel_err(full, half, FD_FLOOR) > 1e-6;
            worst = worst.max(rel_err(analytic[k + i], full, FD_FLOOR));
        }
        k += len;
    }
    FullModelCheck { worst, kinked }
}

/// Freshly initialized networks have zero biases, which puts units with
/// all-zero inputs exactly on a ReLU kink where finite differences are
/// meaningless. Random small biases move the check to a generic point.
pub fn jitter_biases(net: &mut Network<f64>, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<String> = net.tensors().into_iter().map(|(n, _)| n).collect();
    for (name, t) in names.iter().zip(net.tensors_mut()) {
        if name.ends_with(".bias") {
            t.iter_mut().for_each(|v| *v = rng.gen_range(-0.1..0.1));
        }
    }
}

pub fn uniform_vec(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Worst finite-difference error for each layer type on a random 4-item batch.
pub fn layer_checks(seed: u64) -> Vec<(&'static str, f64)> {
    use gazegrade::nn::layers::*;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batch = 4;
    let mut out = Vec::new();

    for (name, stride) in [("conv1d", 1), ("conv1d-stride2", 2)] {
        let (cin, cout, k, len) = (3, 4, 5, 11);
        let mut conv = Conv1d::<f64>::new(cin, cout, k, stride);
        conv.weight = uniform_vec(&mut rng, conv.weight.len(), -1.0, 1.0);
        conv.bias = uniform_vec(&mut rng, cout, -1.0, 1.0);
        let x = uniform_vec(&mut rng, batch * cin * len, -1.0, 1.0);
        let r = uniform_vec(&mut rng, batch * cout * conv.output_len(len), -1.0, 1.0);
        let mut grad = Conv1d::<f64>::new(cin, cout, k, stride);
        let dx = conv.backward(&x, &r, batch, len, &mut grad);
        let mut worst = check_fd(&mut x.clone(), &dx, |xp| {
            dot(&r, &conv.forward(xp, batch, len))
        });
        let mut w = conv.weight.clone();
        worst = worst.max(check_fd(&mut w, &grad.weight, |wp| {
            let mut c = conv.clone();
            c.weight = wp.to_vec();
            dot(&r, &c.forward(&x, batch, len))
        }));
        let mut b = conv.bias.clone();
        worst = worst.max(check_fd(&mut b, &grad.bias, |bp| {
            let mut c = conv.clone();
            c.bias = bp.to_vec();
            dot(&r, &c.forward(&x, batch, len))
        }));
        out.push((name, worst));
    }

    {
        let (n_in, n_out) = (5, 3);
        let mut dense = Dense::<f64>::new(n_in, n_out);
        dense.weight = uniform_vec(&mut rng, n_in * n_out, -1.0, 1.0);
        dense.bias = uniform_vec(&mut rng, n_out, -1.0, 1.0);
        let x = uniform_vec(&mut rng, batch * n_in, -1.0, 1.0);
        let r = uniform_vec(&mut rng, batch * n_out, -1.0, 1.0);
        let mut grad = Dense::<f64>::new(n_in, n_out);
        let dx = dense.backward(&x, &r, batch, &mut grad);
        let mut worst = check_fd(&mut x.clone(), &dx, |xp| dot(&r, &dense.forward(xp, batch)));
        worst = worst.max(check_fd(&mut dense.weight.clone(), &grad.weight, |wp| {
            let mut d = dense.clone();
            d.weight = wp.to_vec();
            dot(&r, &d.forward(&x, batch))
        }));
        worst = worst.max(check_fd(&mut dense.bias.clone(), &grad.bias, |bp| {
            let mut d = dense.clone();
            d.bias = bp.to_vec();
            dot(&r, &d.forward(&x, batch))
        }));
        out.push(("dense", worst));
    }

    {
        // inputs kept at least 0.05 away from the kink
        let x: Vec<f64> = (0..batch * 10)
            .map(|_| rng.gen_range(0.05..1.0) * if rng.gen::<bool>() { 1.0 } else { -1.0 })
            .collect();
        let r = uniform_vec(&mut rng, x.len(), -1.0, 1.0);
        let relu = |v: &[f64]| {
            let mut y = v.to_vec();
            relu_inplace(&mut y);
            y
        };
        let mut g = r.clone();
        relu_backward_inplace(&relu(&x), &mut g);
        out.push((
            "relu",
            check_fd(&mut x.clone(), &g, |xp| dot(&r, &relu(xp))),
        ));
    }

    {
        let (channels, len) = (3, 7);
        let x = uniform_vec(&mut rng, batch * channels * len, -1.0, 1.0);
        let r = uniform_vec(&mut rng, batch * channels, -1.0, 1.0);
        let g = global_avg_pool_backward(&r, len);
        out.push((
            "global-avg-pool",
            check_fd(&mut x.clone(), &g, |xp| {
                dot(&r, &global_avg_pool(xp, batch, channels, len))
            }),
        ));
    }

    {
        let logits = uniform_vec(&mut rng, batch * 2, -3.0, 3.0);
        let targets = [1, 0, 1, 0];
        let (_, g) = softmax_cross_entropy(&logits, 2, &targets);
        out.push((
            "softmax-cross-entropy",
            check_fd(&mut logits.clone(), &g, |lp| {
                softmax_cross_entropy(lp, 2, &targets).0
            }),
        ));
    }
    out
}
