//! Seeded invariant checks, one suite per module, and the coverage map from
//! each stated invariant to the checks that exercise it.

use ndarray::array;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::criteria::{file_tree, gradcheck_trials, zero_strength_matches_multihead};
use super::trend::{assert_trend, TrendAssertion};
use super::{timed, BatteryOptions, CheckResult};
use crate::amce::{amce_bruteforce, amce_estimate, AmceConfig, Density, FnReward, LinearReward};
use crate::autodiff::{Activation, Graph, Linear, Matrix, Mlp, MlpSpec};
use crate::btl::{btl_nll, nll_on_graph, pref_prob, LabelledBatch};
use crate::causal::{enumerate_potential_outcomes, randomized_world, verify_prop1, Tolerance};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::eval::{
    accuracy, consistency_report, ExperimentReport, ReportMeta, SeedResult, SliceSpec,
    UNCERTAINTY_NOTE,
};
use crate::gaussian::{
    alpha_objective, arcsin_table, labelled_deltas, opposite_sign_probability, DeltaModel,
};
use crate::models::{
    train_run, Batch, LossPart, RewardModel, RewardModelSpec, TrainConfig, Variant, Widths,
};
use crate::rng::{rng_from_seed, SeedTree};
use crate::runner::{run, Manifest, RunOptions, MANIFEST_FILE};
use crate::worlds::{
    make_splits_by_count, nonadditive_world, sample_confounded_world, sample_ultrafeedback_world,
};

pub type InvariantSuite = fn(u64, &BatteryOptions) -> Vec<CheckResult>;

pub const INVARIANT_SUITES: [(&str, InvariantSuite); 10] = [
    ("autodiff-core", autodiff),
    ("btl-core", btl),
    ("synthetic-worlds", worlds),
    ("reward-models", models),
    ("eval-harness", eval),
    ("causal-oracle", causal),
    ("gaussian-analysis", gaussian),
    ("amce", amce),
    ("cli", cli),
    ("property-suite", property_suite),
];

fn sub(seed: u64, name: &str) -> u64 {
    SeedTree::new(seed).child(name).seed()
}

fn autodiff(seed: u64, _: &BatteryOptions) -> Vec<CheckResult> {
    vec![
        timed("finite differences", || {
            gradcheck_trials(sub(seed, "fd"), 100)
        }),
        timed("backward repeatable", || {
            let mlp = Mlp::new(MlpSpec::new(
                vec![3, 5, 1],
                Activation::Gelu,
                sub(seed, "mlp"),
            ))?;
            let mut rng = rng_from_seed(sub(seed, "x"));
            let x = Matrix::from_shape_fn((4, 3), |_| rng.random_range(-2.0..2.0));
            let grads = || -> Result<(Vec<Matrix>, Vec<Matrix>)> {
                let mut g = Graph::new();
                let b = mlp.bind(&mut g);
                let vx = g.constant(x.clone());
                let out = b.forward(&mut g, vx);
                let s = g.sum(out);
                let first = g.backward(s)?;
                let again = g.backward(s)?;
                let vars = b.parameter_vars();
                Ok((
                    vars.iter().map(|&v| first.wrt(v)).collect(),
                    vars.iter().map(|&v| again.wrt(v)).collect(),
                ))
            };
            let (a, b) = grads()?;
            let (c, _) = grads()?;
            Ok((
                a == b && a == c,
                "repeated and rebuilt backward passes agree bitwise".into(),
            ))
        }),
        timed("identity network", || {
            let eye = Linear {
                weight: Matrix::eye(3),
                bias: Matrix::zeros((1, 3)),
            };
            let mlp = Mlp::from_layers(
                MlpSpec::new(vec![3, 3, 3], Activation::Identity, 0),
                vec![eye.clone(), eye],
            )?;
            let x = array![[1.5, -2.0, 0.25], [0.0, 3.0, -7.0]];
            let mut g = Graph::new();
            let bound = mlp.bind(&mut g);
            let xv = g.constant(x.clone());
            let y = bound.forward(&mut g, xv);
            let ok = mlp.forward(&x) == x && *g.value(y) == x;
            Ok((ok, "identity layers reproduce the input".into()))
        }),
    ]
}

fn btl(seed: u64, _: &BatteryOptions) -> Vec<CheckResult> {
    vec![
        timed("prompt shift invariance", || {
            let mut rng = rng_from_seed(sub(seed, "shift"));
            // multiples of 1/8 keep shifted differences exact
            let mut q = || f64::from(rng.random_range(-8000i32..8000)) / 8.0;
            let mut ok = true;
            for _ in 0..2_000 {
                let (r, rp, f) = (q(), q(), q());
                ok &= pref_prob(r + f, rp + f)? == pref_prob(r, rp)?;
            }
            Ok((ok, "2000 shifts, exact equality".into()))
        }),
        timed("nll non-negative", || {
            let mut rng = rng_from_seed(sub(seed, "nll"));
            let mut ok = true;
            for _ in 0..200 {
                let n = rng.random_range(1..40);
                let items: Vec<(f64, u8)> = (0..n)
                    .map(|_| (rng.random_range(-20.0..20.0), rng.random_range(0..=1)))
                    .collect();
                ok &= btl_nll(&LabelledBatch::new(items)?)? >= 0.0;
            }
            let margins = [0.0, 1.0, 5.0, 10.0, 20.0, 30.0];
            let losses = margins
                .iter()
                .map(|&m| btl_nll(&LabelledBatch::new(vec![(m, 0)])?))
                .collect::<Result<Vec<f64>>>()?;
            let vanishing =
                losses.windows(2).all(|w| w[1] < w[0]) && losses.iter().all(|&l| l > 0.0);
            Ok((
                ok && vanishing,
                format!(
                    "200 random batches; loss at margin 30 is {:.2e} and still positive",
                    losses[5]
                ),
            ))
        }),
        timed("winner gradient", || {
            let mut rng = rng_from_seed(sub(seed, "grad"));
            let mut worst = 0.0f64;
            let mut inside = true;
            for _ in 0..100 {
                let m: f64 = rng.random_range(-10.0..10.0);
                let l: u8 = rng.random_range(0..=1);
                let mut g = Graph::new();
                let r = g.leaf(array![[m]]);
                let rp = g.leaf(array![[0.0]]);
                let nll = nll_on_graph(&mut g, r, rp, &[l])?;
                let grads = g.backward(nll)?;
                let (winner, margin) = if l == 0 { (r, m) } else { (rp, -m) };
                let expected = -1.0 / (1.0 + margin.exp());
                worst = worst.max((grads.wrt(winner)[[0, 0]] - expected).abs());
                inside &= expected > -1.0 && expected < 0.0;
            }
            Ok((
                worst < 1e-14 && inside,
                format!("largest deviation from sigma(margin) - 1: {worst:.1e}"),
            ))
        }),
    ]
}

fn corr(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let vx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let vy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn latents(ex: &crate::worlds::PreferenceExample) -> Result<(&Vec<f64>, &Vec<f64>)> {
    ex.z.as_ref()
        .zip(ex.z_prime.as_ref())
        .ok_or_else(|| Error::invalid("example has no latents"))
}

fn worlds(seed: u64, _: &BatteryOptions) -> Vec<CheckResult> {
    vec![
        timed("correlation control", || {
            let mut worst = 0.0f64;
            for (i, rho) in [0.0, 0.3, 0.6, 0.9, -0.8].into_iter().enumerate() {
                let d = sample_ultrafeedback_world(
                    10_000,
                    rho,
                    0.25,
                    SeedTree::new(seed).indexed("corr", i as u64).seed(),
                )?;
                let mut d1 = Vec::with_capacity(d.len());
                let mut d2 = Vec::with_capacity(d.len());
                for ex in &d.examples {
                    let (z, zp) = latents(ex)?;
                    d1.push(z[0] - zp[0]);
                    d2.push(z[1] - zp[1]);
                }
                worst = worst.max((corr(&d1, &d2) - rho).abs());
            }
            Ok((
                worst < 0.03,
                format!("largest |corr - rho| {worst:.4} at n = 10000"),
            ))
        }),
        timed("confounding control", || {
            let mut worst = 0.0f64;
            for (i, rho) in [0.5, 0.6, 0.7, 0.8, 0.9, 1.0].into_iter().enumerate() {
                let d = sample_confounded_world(
                    10_000,
                    rho,
                    SeedTree::new(seed).indexed("conf", i as u64).seed(),
                )?;
                let hits = d.examples.iter().filter(|e| e.t == e.c).count() as f64 / d.len() as f64;
                worst = worst.max((hits - rho).abs());
            }
            Ok((worst < 0.02, format!("largest |P(t = c) - rho| {worst:.4}")))
        }),
        timed("label consistency", || {
            let s = |n| sub(seed, n);
            let data = [
                sample_ultrafeedback_world(3_000, 0.6, 0.25, s("uf"))?,
                sample_confounded_world(3_000, 0.8, s("conf"))?,
                nonadditive_world(3_000, -1.0, -1.0, 0.8, 0.3, s("na"))?,
            ];
            let mismatches: usize = data
                .iter()
                .map(|d| d.label_mismatches().map_or(usize::MAX, |m| m.len()))
                .sum();
            Ok((
                mismatches == 0,
                format!("{mismatches} non-tied labels disagree with stored latents"),
            ))
        }),
        timed("aligned factor variance", || {
            let d = sample_confounded_world(10_000, 0.7, sub(seed, "var"))?;
            let mut ok = true;
            let mut shown = Vec::new();
            for t in 0..2u8 {
                let zs: Vec<&Vec<f64>> = d
                    .examples
                    .iter()
                    .filter(|e| e.t == t)
                    .filter_map(|e| e.z.as_ref())
                    .collect();
                let var = |k: usize| {
                    let m = zs.iter().map(|z| z[k]).sum::<f64>() / zs.len() as f64;
                    zs.iter().map(|z| (z[k] - m).powi(2)).sum::<f64>() / zs.len() as f64
                };
                let (aligned, off) = (var(t as usize), var(1 - t as usize));
                ok &= aligned > off;
                shown.push(format!("type {t}: {aligned:.3} vs {off:.3}"));
            }
            Ok((ok, shown.join(", ")))
        }),
    ]
}

fn all_zero(ms: &[Matrix]) -> bool {
    ms.iter().all(|m| m.iter().all(|v| *v == 0.0))
}

fn models(seed: u64, _: &BatteryOptions) -> Vec<CheckResult> {
    vec![
        timed("head isolation", || {
            let d = sample_confounded_world(32, 0.8, sub(seed, "data"))?;
            let mut ok = true;
            for variant in [Variant::Multihead, Variant::Adversarial] {
                let m = RewardModel::new(
                    RewardModelSpec::desk(variant, 64).with_seed(sub(seed, "init")),
                )?;
                let t = m.trunk_tensor_count();
                let h = m.heads().map_or(0, |h| h[0].parameters().len());
                let total = m.parameters().len();
                for c in 0..2usize {
                    let mut b = Batch::all(&d)?;
                    b.c = vec![c as u8; b.len()];
                    let (_, g) = m.loss_gradients(&b, LossPart::Combined)?;
                    let own = &g[t + c * h..t + (c + 1) * h];
                    let other = &g[t + (1 - c) * h..t + (2 - c) * h];
                    ok &= all_zero(other) && !all_zero(own) && !all_zero(&g[..t]);
                    if variant == Variant::Adversarial {
                        ok &= !all_zero(&g[t + 2 * h..total]);
                    }
                }
            }
            Ok((
                ok,
                "single-objective batches touch only their head, the trunk and the adversary"
                    .into(),
            ))
        }),
        timed("strength continuity", || {
            let (exact, detail) = zero_strength_matches_multihead(sub(seed, "lambda0"))?;
            let d = sample_confounded_world(64, 0.8, sub(seed, "batch"))?;
            let b = Batch::all(&d)?;
            let init = sub(seed, "init");
            let mh =
                RewardModel::new(RewardModelSpec::desk(Variant::Multihead, 64).with_seed(init))?;
            let t = mh.trunk_tensor_count();
            let (_, gm) = mh.loss_gradients(&b, LossPart::Combined)?;
            let mut gaps = Vec::new();
            for lambda in [1e-1, 1e-2, 1e-3, 1e-4] {
                let adv = RewardModel::new(
                    RewardModelSpec::new(Variant::Adversarial, 64, Widths::DESK, lambda)
                        .with_seed(init),
                )?;
                let (_, ga) = adv.loss_gradients(&b, LossPart::Combined)?;
                let gap = ga[..t]
                    .iter()
                    .zip(&gm[..t])
                    .flat_map(|(a, m)| a.iter().zip(m.iter()).map(|(x, y)| (x - y).abs()))
                    .fold(0.0f64, f64::max);
                gaps.push(gap);
            }
            let shrinking = gaps.windows(2).all(|w| w[1] < w[0]) && gaps[3] < 1e-2 * gaps[0];
            Ok((
                exact && shrinking,
                format!(
                    "{detail}; trunk gaps {}",
                    gaps.iter()
                        .map(|g| format!("{g:.2e}"))
                        .collect::<Vec<_>>()
                        .join(" ")
                ),
            ))
        }),
        timed("best epoch kept", || {
            let d = sample_confounded_world(1_200, 0.8, sub(seed, "es-data"))?;
            let s = make_splits_by_count(&d, 800, 200, sub(seed, "es-split"))?;
            let cfg = TrainConfig {
                epochs: 4,
                batch_size: 32,
                learning_rate: 1e-3,
                seeds: vec![0],
            };
            let run = train_run(
                &RewardModelSpec::desk(Variant::Adversarial, 64),
                &s.train,
                &s.validation,
                &cfg,
                sub(seed, "es"),
            )?;
            let best = run.best_record().val_accuracy;
            let ok = run.history.iter().all(|r| r.val_accuracy <= best);
            Ok((
                ok,
                format!(
                    "kept epoch {} of {} (validation {best:.4})",
                    run.best_epoch,
                    run.history.len()
                ),
            ))
        }),
        timed("swap symmetry", || {
            let d = sample_confounded_world(600, 0.7, sub(seed, "swap-data"))?;
            let s = make_splits_by_count(&d, 400, 100, sub(seed, "swap-split"))?;
            let cfg = TrainConfig {
                epochs: 3,
                batch_size: 32,
                learning_rate: 1e-3,
                seeds: vec![0],
            };
            let spec = RewardModelSpec::desk(Variant::Multihead, 64);
            let init = sub(seed, "swap");
            let a = train_run(&spec, &s.train, &s.validation, &cfg, init)?;
            let b = train_run(
                &spec,
                &s.train.swapped(),
                &s.validation.swapped(),
                &cfg,
                init,
            )?;
            let worst = a
                .history
                .iter()
                .zip(&b.history)
                .map(|(x, y)| {
                    (x.train_nll - y.train_nll)
                        .abs()
                        .max((x.val_nll - y.val_nll).abs())
                })
                .fold(0.0f64, f64::max);
            let acc = a
                .history
                .iter()
                .zip(&b.history)
                .all(|(x, y)| x.val_accuracy == y.val_accuracy);
            Ok((
                worst < 1e-9 && acc,
                format!("largest loss difference {worst:.1e}"),
            ))
        }),
    ]
}

fn eval(seed: u64, _: &BatteryOptions) -> Vec<CheckResult> {
    vec![
        timed("slice partition", || {
            let d = sample_confounded_world(5_001, 0.7, sub(seed, "slices"))?;
            let (c, i) = (
                SliceSpec::Consistent.select(&d).len(),
                SliceSpec::Inconsistent.select(&d).len(),
            );
            Ok((
                c + i == d.len(),
                format!("{c} consistent + {i} inconsistent of {}", d.len()),
            ))
        }),
        timed("report round trip", || {
            let mut rng = rng_from_seed(sub(seed, "report"));
            let mut per_seed = Vec::new();
            for v in ["Base", "Adversarial"] {
                for k in [0.5, 1.0] {
                    for slice in ["consistent", "inconsistent"] {
                        for s in 0..3 {
                            let a: f64 = rng.random_range(0.0..1.0);
                            per_seed.push(SeedResult {
                                variant: v.into(),
                                knob: k,
                                slice: slice.into(),
                                seed: s,
                                n: 500,
                                accuracy: a,
                                stderr: (a * (1.0 - a) / 500.0).sqrt(),
                            });
                        }
                    }
                }
            }
            let meta = ReportMeta {
                study: "confounded".into(),
                knob: "rho".into(),
                root_seed: seed,
                seeds: vec![0, 1, 2],
                uncertainty: UNCERTAINTY_NOTE.into(),
                config: serde_json::json!({}),
            };
            let r = consistency_report(
                meta,
                vec!["Base".into(), "Adversarial".into()],
                vec![0.5, 1.0],
                per_seed,
            )?;
            let back = ExperimentReport::from_json(&r.to_json()?)?;
            Ok((
                back == r,
                format!("{} cells survive write and read", r.cells.len()),
            ))
        }),
        timed("union accuracy", || {
            let d = sample_confounded_world(3_001, 0.8, sub(seed, "union"))?;
            let m = RewardModel::new(
                RewardModelSpec::desk(Variant::Multihead, 64).with_seed(sub(seed, "model")),
            )?;
            let all = accuracy(&m, &d, &SliceSpec::All)?;
            let parts = [SliceSpec::Consistent, SliceSpec::Inconsistent]
                .iter()
                .map(|s| accuracy(&m, &d, s))
                .collect::<Result<Vec<_>>>()?;
            let hits: f64 = parts.iter().map(|a| a.mean * a.n as f64).sum();
            let ok = parts[0].n + parts[1].n == all.n
                && hits.round() as usize == (all.mean * all.n as f64).round() as usize;
            Ok((
                ok,
                format!(
                    "union {:.4} from {} + {} examples",
                    all.mean, parts[0].n, parts[1].n
                ),
            ))
        }),
    ]
}

fn causal(seed: u64, _: &BatteryOptions) -> Vec<CheckResult> {
    let logistic = |t: f64| 1.0 / (1.0 + (-t).exp());
    vec![
        timed("enumeration exact", || {
            let w = randomized_world(sub(seed, "enum"));
            let t = enumerate_potential_outcomes(&w)?;
            let mut worst = 0.0f64;
            for (x, y, yp) in w.triples() {
                let mut by_hand = 0.0;
                for c in 0..w.objective_probs.len() {
                    let direct = logistic(w.rewards[c][x][y] - w.rewards[c][x][yp]);
                    worst = worst.max((t.conditional[c][x][y][yp] - direct).abs());
                    by_hand += w.objective_probs[c] * direct;
                }
                worst = worst.max((t.marginal[x][y][yp] - by_hand).abs());
            }
            let repeat = enumerate_potential_outcomes(&w)? == t;
            Ok((
                worst < 1e-15 && repeat,
                format!(
                    "largest deviation from closed form {worst:.1e}; repeat identical: {repeat}"
                ),
            ))
        }),
        timed("error shrinks with n", || {
            let w = randomized_world(sub(seed, "conv"));
            let (mut small, mut large) = (0.0, 0.0);
            for i in 0..20u64 {
                let s = SeedTree::new(seed).indexed("conv", i).seed();
                small += verify_prop1(&w, 1_000, Tolerance::default(), s)?.max_error;
                large += verify_prop1(&w, 100_000, Tolerance::default(), s)?.max_error;
            }
            Ok((
                large <= small,
                format!(
                    "mean max-cell error {:.4} at n=1000, {:.4} at n=100000",
                    small / 20.0,
                    large / 20.0
                ),
            ))
        }),
        timed("heterogeneity detected", || {
            let w = randomized_world(sub(seed, "het"));
            let t = enumerate_potential_outcomes(&w)?;
            let (mut pairs, mut ok) = (0, true);
            for (x, y, yp) in w.triples() {
                let d0 = w.rewards[0][x][y] - w.rewards[0][x][yp];
                let d1 = w.rewards[1][x][y] - w.rewards[1][x][yp];
                if d0 != d1 {
                    pairs += 1;
                    ok &= t.conditional[0][x][y][yp] != t.conditional[1][x][y][yp];
                }
            }
            Ok((
                ok && pairs > 0,
                format!("{pairs} heterogeneous triples all distinguished"),
            ))
        }),
    ]
}

fn gaussian(seed: u64, _: &BatteryOptions) -> Vec<CheckResult> {
    vec![
        timed("decreasing and symmetric", || {
            let rhos: Vec<f64> = (-199..=199).map(|i| f64::from(i) / 200.0).collect();
            let p = rhos
                .iter()
                .map(|&r| opposite_sign_probability(r))
                .collect::<Result<Vec<f64>>>()?;
            let decreasing = p.windows(2).all(|w| w[1] < w[0]);
            let n = p.len();
            let worst = (0..n)
                .map(|i| (p[i] + p[n - 1 - i] - 1.0).abs())
                .fold(0.0f64, f64::max);
            Ok((
                decreasing && worst < 1e-15,
                format!("{n} grid points; largest |p(r) + p(-r) - 1| {worst:.1e}"),
            ))
        }),
        timed("monte carlo coverage", || {
            let mut inside = 0;
            for trial in 0..100u64 {
                let rho = -0.9 + 1.8 * (trial % 10) as f64 / 9.0;
                let row = &arcsin_table(
                    &[rho],
                    10_000,
                    SeedTree::new(seed).indexed("mc", trial).seed(),
                )?[0];
                inside += usize::from(row.within(3.0));
            }
            Ok((inside >= 95, format!("{inside}/100 trials within 3 SE")))
        }),
        timed("objective unimodal", || {
            let mut turns = 0;
            for (i, (rho, alpha)) in [
                (0.0, 0.25),
                (0.9, 0.25),
                (-0.8, 0.6),
                (0.5, 0.0),
                (0.9, 1.0),
            ]
            .into_iter()
            .enumerate()
            {
                let (d, l) = labelled_deltas(
                    &DeltaModel::new(rho, alpha)?,
                    5_000,
                    SeedTree::new(seed).indexed("fit", i as u64).seed(),
                )?;
                let f: Vec<f64> = (0..=1_000)
                    .map(|k| alpha_objective(&d, &l, f64::from(k) / 1e3))
                    .collect();
                turns += f.windows(3).filter(|w| w[1] > w[0] && w[1] > w[2]).count();
            }
            Ok((
                turns == 0,
                format!("{turns} interior local maxima over 5 samples at 1e-3 resolution"),
            ))
        }),
    ]
}

fn amce(seed: u64, _: &BatteryOptions) -> Vec<CheckResult> {
    vec![
        timed("range and swap complement", || {
            let mut rng = rng_from_seed(sub(seed, "swap"));
            let mut worst = 0.0f64;
            let mut in_range = true;
            for _ in 0..50 {
                let n = rng.random_range(2..=6usize);
                let w: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
                let inter: f64 = rng.random_range(-2.0..2.0);
                let r = FnReward {
                    dim: n,
                    f: |z: &[f64]| {
                        w.iter().zip(z).map(|(a, b)| a * b).sum::<f64>() + inter * z[0] * z[n - 1]
                    },
                };
                let cfg = AmceConfig::new(rng.random_range(0..n), Density::Uniform);
                let mut rev = cfg.clone();
                rev.reversed = true;
                let (a, s) = (amce_bruteforce(&r, &cfg)?, amce_bruteforce(&r, &rev)?);
                in_range &= (0.0..=1.0).contains(&a);
                worst = worst.max((a + s - 1.0).abs());
            }
            Ok((
                in_range && worst < 1e-12,
                format!("50 interacting rewards; largest |a + swapped - 1| {worst:.1e}"),
            ))
        }),
        timed("separable ignores density", || {
            let mut rng = rng_from_seed(sub(seed, "sep"));
            let mut worst = 0.0f64;
            for _ in 0..50 {
                let n = rng.random_range(2..=6usize);
                let r = LinearReward {
                    weights: (0..n).map(|_| rng.random_range(-3.0..3.0)).collect(),
                    bias: 1.0,
                };
                let rows: Vec<Vec<f64>> = (0..64)
                    .map(|_| {
                        (0..n)
                            .map(|_| f64::from(u8::from(rng.random_bool(0.3))))
                            .collect()
                    })
                    .collect();
                let k = rng.random_range(0..n);
                let u = amce_estimate(&r, &AmceConfig::new(k, Density::Uniform))?;
                let m = amce_estimate(
                    &r,
                    &AmceConfig::new(k, Density::from_rows(rows.iter().map(|v| v.as_slice()), k)?),
                )?;
                worst = worst.max((u - m).abs());
            }
            Ok((
                worst < 1e-12,
                format!("50 linear rewards; largest uniform vs empirical gap {worst:.1e}"),
            ))
        }),
        timed("monotone in weight", || {
            let mut rng = rng_from_seed(sub(seed, "mono"));
            let mut ok = true;
            for _ in 0..100 {
                let w: f64 = rng.random_range(-3.0..3.0);
                let step: f64 = rng.random_range(0.01..2.0);
                let lo = LinearReward {
                    weights: vec![0.3, w, -0.5],
                    bias: 0.0,
                };
                let hi = LinearReward {
                    weights: vec![0.3, w + step, -0.5],
                    bias: 0.0,
                };
                let cfg = AmceConfig::new(1, Density::Uniform);
                ok &= amce_estimate(&hi, &cfg)? > amce_estimate(&lo, &cfg)?;
            }
            Ok((ok, "100 weight increases all raise the effect".into()))
        }),
    ]
}

fn small_confounded(seed: u64) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::preset("confounded-smoke")?;
    cfg.root_seed = seed;
    let w = cfg.world.as_mut().expect("preset has a world");
    w.n_train = 120;
    w.n_validation = 40;
    w.n_test = 80;
    Ok(cfg)
}

fn cli(seed: u64, opts: &BatteryOptions) -> Vec<CheckResult> {
    let dir = opts.out_dir.join("invariants").join("cli");
    vec![
        timed("rerun overwrites identically", || {
            let mut same = true;
            let mut files = 0;
            for (name, cfg) in [
                ("amce", ExperimentConfig::preset("amce")?),
                ("confounded", small_confounded(seed)?),
            ] {
                let d = dir.join("idempotence").join(name);
                let opts = RunOptions {
                    out_dir: d.clone(),
                    jobs: 1,
                };
                run(&cfg, &opts).map_err(|e| Error::invalid(e.to_string()))?;
                let before = file_tree(&d)?;
                run(&cfg, &opts).map_err(|e| Error::invalid(e.to_string()))?;
                same &= file_tree(&d)? == before;
                files += before.len();
            }
            Ok((same, format!("{files} files unchanged by a second run")))
        }),
        timed("manifest reconstructs run", || {
            let cfg = small_confounded(seed)?;
            let (a, b) = (
                dir.join("manifest").join("first"),
                dir.join("manifest").join("second"),
            );
            let first = run(
                &cfg,
                &RunOptions {
                    out_dir: a.clone(),
                    jobs: 1,
                },
            )
            .map_err(|e| Error::invalid(e.to_string()))?;
            let loaded = Manifest::load(a.join(MANIFEST_FILE))?;
            let second = run(
                &loaded.config,
                &RunOptions {
                    out_dir: b,
                    jobs: 1,
                },
            )
            .map_err(|e| Error::invalid(e.to_string()))?;
            let ok = loaded == first.manifest && second.manifest == first.manifest;
            Ok((
                ok,
                format!(
                    "{} outputs, manifest to config to identical manifest: {ok}",
                    first.manifest.outputs.len()
                ),
            ))
        }),
    ]
}

fn property_suite(seed: u64, opts: &BatteryOptions) -> Vec<CheckResult> {
    let trend = |name: &str, series: &[f64], a: TrendAssertion, expect: bool| {
        timed(name, || {
            let e = assert_trend(series, &a)?;
            Ok((
                e.pass == expect,
                format!(
                    "{} (expected {})",
                    e.message,
                    if expect { "pass" } else { "fail" }
                ),
            ))
        })
    };
    vec![
        trend(
            "OOD row decreasing",
            &[64.5, 62.0, 59.7, 57.8],
            TrendAssertion::decreasing(3.0),
            true,
        ),
        trend(
            "inconsistent row increasing",
            &[55.9, 56.3, 58.9],
            TrendAssertion::increasing(1.0),
            true,
        ),
        trend(
            "constant series fails",
            &[60.0, 60.0, 60.0],
            TrendAssertion::increasing(0.5),
            false,
        ),
        timed("incomplete series rejected", || {
            let short = assert_trend(&[1.0], &TrendAssertion::increasing(0.0)).is_err();
            let missing =
                assert_trend(&[1.0, f64::NAN, 2.0], &TrendAssertion::increasing(0.0)).is_err();
            Ok((
                short && missing,
                "one-point and gapped series are errors".into(),
            ))
        }),
        timed("seeded rerun identical", || {
            let strip = |cs: Vec<CheckResult>| -> Vec<(String, super::Outcome, String)> {
                cs.into_iter()
                    .map(|c| (c.name, c.outcome, c.detail))
                    .collect()
            };
            let mut same = true;
            for suite in [btl as InvariantSuite, gaussian, causal] {
                same &= strip(suite(seed, opts)) == strip(suite(seed, opts));
            }
            Ok((
                same,
                "three suites rerun with the same seed give identical outcomes".into(),
            ))
        }),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageEntry {
    pub module: String,
    pub invariant: String,
    /// `suite/check` names in the battery.
    pub checks: Vec<String>,
}

/// Every module invariant with the battery checks that exercise it.
pub fn coverage() -> Vec<CoverageEntry> {
    let inv = |module: &str, check: &str| format!("invariants/{module}/{check}");
    let table: [(&str, &str, Vec<String>); 29] = [
        (
            "autodiff-core",
            "gradients match central differences",
            vec![
                inv("autodiff-core", "finite differences"),
                "criteria/C4 gradient integrity".into(),
            ],
        ),
        (
            "autodiff-core",
            "backward is deterministic",
            vec![inv("autodiff-core", "backward repeatable")],
        ),
        (
            "autodiff-core",
            "identity MLP reproduces input",
            vec![inv("autodiff-core", "identity network")],
        ),
        (
            "btl-core",
            "prompt shift invariance",
            vec![inv("btl-core", "prompt shift invariance")],
        ),
        (
            "btl-core",
            "nll non-negative, zero only in the limit",
            vec![inv("btl-core", "nll non-negative")],
        ),
        (
            "btl-core",
            "winner gradient is sigma(margin) - 1",
            vec![inv("btl-core", "winner gradient")],
        ),
        (
            "synthetic-worlds",
            "correlation control",
            vec![inv("synthetic-worlds", "correlation control")],
        ),
        (
            "synthetic-worlds",
            "confounding control",
            vec![inv("synthetic-worlds", "confounding control")],
        ),
        (
            "synthetic-worlds",
            "label consistency",
            vec![inv("synthetic-worlds", "label consistency")],
        ),
        (
            "synthetic-worlds",
            "aligned factor has larger variance",
            vec![inv("synthetic-worlds", "aligned factor variance")],
        ),
        (
            "reward-models",
            "head isolation",
            vec![inv("reward-models", "head isolation")],
        ),
        (
            "reward-models",
            "reversal strength continuity",
            vec![
                inv("reward-models", "strength continuity"),
                "criteria/C4 gradient integrity".into(),
            ],
        ),
        (
            "reward-models",
            "early stopping keeps the best epoch",
            vec![inv("reward-models", "best epoch kept")],
        ),
        (
            "reward-models",
            "swap symmetry end to end",
            vec![inv("reward-models", "swap symmetry")],
        ),
        (
            "eval-harness",
            "slices partition the test set",
            vec![inv("eval-harness", "slice partition")],
        ),
        (
            "eval-harness",
            "reports round-trip",
            vec![inv("eval-harness", "report round trip")],
        ),
        (
            "eval-harness",
            "union accuracy is count-weighted",
            vec![inv("eval-harness", "union accuracy")],
        ),
        (
            "causal-oracle",
            "enumeration is exact",
            vec![inv("causal-oracle", "enumeration exact")],
        ),
        (
            "causal-oracle",
            "error shrinks with n",
            vec![inv("causal-oracle", "error shrinks with n")],
        ),
        (
            "causal-oracle",
            "heterogeneity detection",
            vec![inv("causal-oracle", "heterogeneity detected")],
        ),
        (
            "gaussian-analysis",
            "decreasing and odd-symmetric",
            vec![inv("gaussian-analysis", "decreasing and symmetric")],
        ),
        (
            "gaussian-analysis",
            "monte carlo within 3 SE in 95% of trials",
            vec![
                inv("gaussian-analysis", "monte carlo coverage"),
                "criteria/C1 closed-form arcsin check".into(),
            ],
        ),
        (
            "gaussian-analysis",
            "fit objective unimodal",
            vec![inv("gaussian-analysis", "objective unimodal")],
        ),
        (
            "amce",
            "range and swap complement",
            vec![inv("amce", "range and swap complement")],
        ),
        (
            "amce",
            "separable rewards ignore the density",
            vec![inv("amce", "separable ignores density")],
        ),
        (
            "amce",
            "monotone in weight",
            vec![inv("amce", "monotone in weight")],
        ),
        (
            "cli",
            "idempotent reruns",
            vec![
                inv("cli", "rerun overwrites identically"),
                "criteria/C9 determinism".into(),
            ],
        ),
        (
            "cli",
            "manifest reconstructs the run",
            vec![inv("cli", "manifest reconstructs run")],
        ),
        (
            "property-suite",
            "battery deterministic per root seed",
            vec![inv("property-suite", "seeded rerun identical")],
        ),
    ];
    table
        .into_iter()
        .map(|(module, invariant, checks)| CoverageEntry {
            module: module.into(),
            invariant: invariant.into(),
            checks,
        })
        .collect()
}
