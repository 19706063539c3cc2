//! Acceptance suite: one test per release criterion, each printing a
//! PASS line (visible with `--nocapture`) after its assertions hold.
//!
//! Run with `cargo test -p ovid-core --test acceptance`.

use std::collections::HashSet;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ovid_core::eval::{metrics, pr_sweep, ConfusionCounts};
use ovid_core::features::{FeatureBundle, D_EDIT, D_USER};
use ovid_core::miner::{mine, split_user_disjoint, Label, LabeledExample, Provenance, SplitName};
use ovid_core::model::{
    ablate, fit, predict, save_checkpoint, AblationVariant, FeatureDims, ModelCheckpoint,
    ModelError, OvidConfig, OvidParams, TrainExample,
};
use ovid_core::nn::{
    attention, bce_loss, dropout, fc, l2_penalty, multi_head, Activation, HeadNodes, Mode, NodeId,
    Tape, Tensor,
};
use ovid_core::store::ChangesetStore;
use ovid_core::synth::build_world;

const FD_STEP: f64 = 1e-5;
const PRIMITIVE_TOL: f64 = 1e-6;
const END_TO_END_TOL: f64 = 1e-4;

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs());
    if denom < 1e-6 {
        (analytic - numeric).abs()
    } else {
        (analytic - numeric).abs() / denom
    }
}

/// Values bounded away from zero so ReLU kinks stay far from the probe step.
fn safe_tensor(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let mut t = Tensor::zeros(rows, cols);
    for v in t.values_mut() {
        let magnitude = rng.gen_range(0.1..1.0);
        *v = if rng.gen_bool(0.5) {
            magnitude
        } else {
            -magnitude
        };
    }
    t
}

/// Checks every component of d objective / d leaf against central finite
/// differences, where `build` reconstructs the graph from the probe tensor.
fn check_gradient<F>(name: &str, build: F, leaf: &Tensor, tol: f64)
where
    F: Fn(&Tensor) -> (Tape, NodeId, NodeId),
{
    let (mut tape, probe_node, out) = build(leaf);
    tape.backward(out);
    let analytic = tape.grad(probe_node).clone();
    for idx in 0..leaf.len() {
        let mut plus = leaf.clone();
        plus.values_mut()[idx] += FD_STEP;
        let (tape_p, _, out_p) = build(&plus);
        let mut minus = leaf.clone();
        minus.values_mut()[idx] -= FD_STEP;
        let (tape_m, _, out_m) = build(&minus);
        let numeric = (tape_p.value(out_p).item() - tape_m.value(out_m).item()) / (2.0 * FD_STEP);
        let a = analytic.values()[idx];
        assert!(
            rel_err(a, numeric) < tol,
            "{name}[{idx}]: analytic {a}, numeric {numeric}, rel err {}",
            rel_err(a, numeric)
        );
    }
}

#[test]
fn acceptance_gradient_suite() {
    let started = Instant::now();

    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        // fc with ReLU, gradients w.r.t. input, weight, and bias.
        let x0 = safe_tensor(1, 5, &mut rng);
        let w0 = safe_tensor(5, 4, &mut rng);
        let b0 = safe_tensor(1, 4, &mut rng);
        let fc_graph = |x: &Tensor, w: &Tensor, b: &Tensor, probe: usize| {
            let mut tape = Tape::new();
            let xn = tape.leaf(x.clone());
            let wn = tape.leaf(w.clone());
            let bn = tape.leaf(b.clone());
            let y = fc(&mut tape, xn, wn, bn, Activation::Relu).unwrap();
            let out = tape.sum_squares(y);
            assert!(
                tape.relu_input_margin() > 50.0 * FD_STEP,
                "degenerate preactivation"
            );
            (tape, [xn, wn, bn][probe], out)
        };
        check_gradient("fc/x", |p| fc_graph(p, &w0, &b0, 0), &x0, PRIMITIVE_TOL);
        check_gradient("fc/w", |p| fc_graph(&x0, p, &b0, 1), &w0, PRIMITIVE_TOL);
        check_gradient("fc/b", |p| fc_graph(&x0, &w0, p, 2), &b0, PRIMITIVE_TOL);

        // Layer normalization with learnable gain and bias.
        let ln_x = safe_tensor(1, 6, &mut rng);
        let ln_g = safe_tensor(1, 6, &mut rng);
        let ln_b = safe_tensor(1, 6, &mut rng);
        let ln_graph = |x: &Tensor, g: &Tensor, b: &Tensor, probe: usize| {
            let mut tape = Tape::new();
            let xn = tape.leaf(x.clone());
            let gn = tape.leaf(g.clone());
            let bn = tape.leaf(b.clone());
            let y = tape.layer_norm(xn, gn, bn).unwrap();
            let out = tape.sum_squares(y);
            (tape, [xn, gn, bn][probe], out)
        };
        check_gradient(
            "layer_norm/x",
            |p| ln_graph(p, &ln_g, &ln_b, 0),
            &ln_x,
            PRIMITIVE_TOL,
        );
        check_gradient(
            "layer_norm/gain",
            |p| ln_graph(&ln_x, p, &ln_b, 1),
            &ln_g,
            PRIMITIVE_TOL,
        );
        check_gradient(
            "layer_norm/bias",
            |p| ln_graph(&ln_x, &ln_g, p, 2),
            &ln_b,
            PRIMITIVE_TOL,
        );

        // Scaled dot-product attention (softmax included), w.r.t. q, k, v.
        let q0 = safe_tensor(1, 3, &mut rng);
        let k0 = safe_tensor(4, 3, &mut rng);
        let v0 = safe_tensor(4, 2, &mut rng);
        let at_graph = |q: &Tensor, k: &Tensor, v: &Tensor, probe: usize| {
            let mut tape = Tape::new();
            let qn = tape.leaf(q.clone());
            let kn = tape.leaf(k.clone());
            let vn = tape.leaf(v.clone());
            let y = attention(&mut tape, qn, kn, vn).unwrap();
            let out = tape.sum_squares(y);
            (tape, [qn, kn, vn][probe], out)
        };
        check_gradient(
            "attention/q",
            |p| at_graph(p, &k0, &v0, 0),
            &q0,
            PRIMITIVE_TOL,
        );
        check_gradient(
            "attention/k",
            |p| at_graph(&q0, p, &v0, 1),
            &k0,
            PRIMITIVE_TOL,
        );
        check_gradient(
            "attention/v",
            |p| at_graph(&q0, &k0, p, 2),
            &v0,
            PRIMITIVE_TOL,
        );

        // Sigmoid into binary cross-entropy.
        let z0 = safe_tensor(1, 1, &mut rng);
        let target = if rng.gen_bool(0.5) { 1.0 } else { 0.0 };
        check_gradient(
            "sigmoid+bce",
            |p| {
                let mut tape = Tape::new();
                let z = tape.leaf(p.clone());
                let s = tape.sigmoid(z);
                let out = tape.bce(s, target).unwrap();
                (tape, z, out)
            },
            &z0,
            PRIMITIVE_TOL,
        );

        // Softmax against a fixed linear readout.
        let sm_x = safe_tensor(1, 5, &mut rng);
        let readout = safe_tensor(5, 1, &mut rng);
        check_gradient(
            "softmax",
            |p| {
                let mut tape = Tape::new();
                let xn = tape.leaf(p.clone());
                let s = tape.softmax(xn);
                let r = tape.leaf(readout.clone());
                let y = tape.matmul(s, r).unwrap();
                let out = tape.sum_squares(y);
                (tape, xn, out)
            },
            &sm_x,
            PRIMITIVE_TOL,
        );

        // Dropout with a fixed mask (same seed for every probe evaluation).
        let dr_x = safe_tensor(1, 8, &mut rng);
        let mask_seed = seed.wrapping_mul(31).wrapping_add(7);
        check_gradient(
            "dropout",
            |p| {
                let mut tape = Tape::new();
                let xn = tape.leaf(p.clone());
                let mut drng = ChaCha8Rng::seed_from_u64(mask_seed);
                let y = dropout(&mut tape, xn, 0.5, Mode::Train, &mut drng).unwrap();
                let out = tape.sum_squares(y);
                (tape, xn, out)
            },
            &dr_x,
            PRIMITIVE_TOL,
        );

        // L2 penalty.
        let l2_w = safe_tensor(3, 3, &mut rng);
        check_gradient(
            "l2_penalty",
            |p| {
                let mut tape = Tape::new();
                let wn = tape.leaf(p.clone());
                let out = l2_penalty(&mut tape, &[wn], 0.01).unwrap();
                (tape, wn, out)
            },
            &l2_w,
            PRIMITIVE_TOL,
        );

        // Multi-head attention as a composed block.
        let mh_q = safe_tensor(1, 3, &mut rng);
        let mh_kv = safe_tensor(3, 3, &mut rng);
        let mh_heads: Vec<[Tensor; 3]> = (0..2)
            .map(|_| {
                [
                    safe_tensor(3, 3, &mut rng),
                    safe_tensor(3, 3, &mut rng),
                    safe_tensor(3, 3, &mut rng),
                ]
            })
            .collect();
        let mh_wo = safe_tensor(6, 3, &mut rng);
        check_gradient(
            "multi_head/wq0",
            |p| {
                let mut tape = Tape::new();
                let q = tape.leaf(mh_q.clone());
                let kv = tape.leaf(mh_kv.clone());
                let heads: Vec<HeadNodes> = mh_heads
                    .iter()
                    .enumerate()
                    .map(|(i, h)| HeadNodes {
                        wq: tape.leaf(if i == 0 { p.clone() } else { h[0].clone() }),
                        wk: tape.leaf(h[1].clone()),
                        wv: tape.leaf(h[2].clone()),
                    })
                    .collect();
                let wo = tape.leaf(mh_wo.clone());
                let y = multi_head(&mut tape, q, kv, kv, &heads, wo).unwrap();
                let out = tape.sum_squares(y);
                (tape, heads[0].wq, out)
            },
            &mh_heads[0][0],
            END_TO_END_TOL,
        );
    }

    // Full model: d(loss)/d(theta) for every parameter group on a
    // 4-example batch, dropout active with a pinned mask stream. Seeds that
    // park a preactivation on a ReLU kink are not differentiable there, so
    // each logical seed deterministically walks sub-seeds until the margin
    // clears the probe step.
    for logical_seed in 0..20u64 {
        let seed = (0..50)
            .map(|attempt| logical_seed * 1000 + attempt)
            .find(|&candidate| e2e_relu_margin(candidate) > 50.0 * FD_STEP)
            .unwrap_or_else(|| panic!("no kink-free configuration near seed {logical_seed}"));
        let (config, dims, batch) = e2e_setup(seed);
        let base = OvidParams::init(&config, dims).unwrap();

        let (mut tape, out, leaf_ids) = e2e_loss(&base, &config, dims, &batch, seed);
        tape.backward(out);
        let analytic: Vec<Tensor> = leaf_ids.iter().map(|id| tape.grad(*id).clone()).collect();

        for (pi, param) in base.params().iter().enumerate() {
            // Probe a handful of coordinates per parameter to keep the
            // suite fast; coverage still spans every parameter group.
            let stride = (param.value.len() / 4).max(1);
            for idx in (0..param.value.len()).step_by(stride) {
                let numeric = {
                    let mut plus = base.clone();
                    plus.params_mut()[pi].value.values_mut()[idx] += FD_STEP;
                    let (tp, op, _) = e2e_loss(&plus, &config, dims, &batch, seed);
                    let f_plus = tp.value(op).item();
                    let mut minus = base.clone();
                    minus.params_mut()[pi].value.values_mut()[idx] -= FD_STEP;
                    let (tm, om, _) = e2e_loss(&minus, &config, dims, &batch, seed);
                    let f_minus = tm.value(om).item();
                    (f_plus - f_minus) / (2.0 * FD_STEP)
                };
                let a = analytic[pi].values()[idx];
                assert!(
                    rel_err(a, numeric) < END_TO_END_TOL,
                    "seed {seed}, {}[{idx}]: analytic {a}, numeric {numeric}",
                    param.name
                );
            }
        }
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 60, "gradient suite took {elapsed:?}");
    println!("ACCEPTANCE gradient-suite: PASS ({elapsed:?})");
}

fn e2e_setup(seed: u64) -> (OvidConfig, FeatureDims, Vec<(FeatureBundle, f64)>) {
    let config = OvidConfig {
        d_h: 6,
        n_head: 2,
        n_pred: 2,
        dropout: 0.3,
        lambda: 0.01,
        th_e_max: 10,
        seed,
        ..OvidConfig::default()
    };
    let dims = FeatureDims {
        d_changeset: 7,
        d_user: D_USER,
        d_edit: D_EDIT,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1000));
    let batch = (0..4u64)
        .map(|i| {
            let mut gen = |n: usize| safe_tensor(1, n, &mut rng).values().to_vec();
            (
                FeatureBundle {
                    changeset: i,
                    x_c: gen(dims.d_changeset),
                    x_u: gen(dims.d_user),
                    m_e: (0..(i as usize % 3) + 1)
                        .map(|_| gen(dims.d_edit))
                        .collect(),
                    flagged: false,
                },
                if i % 2 == 0 { 1.0 } else { 0.0 },
            )
        })
        .collect();
    (config, dims, batch)
}

/// Batch loss (mean BCE + L2) with a dropout mask stream pinned to the
/// seed, so repeated evaluations differentiate the same function.
fn e2e_loss(
    params: &OvidParams,
    config: &OvidConfig,
    dims: FeatureDims,
    batch: &[(FeatureBundle, f64)],
    seed: u64,
) -> (Tape, NodeId, Vec<NodeId>) {
    let mut tape = Tape::new();
    let nodes = ovid_core::model::ParamNodes::register(&mut tape, params);
    let mut drng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2000));
    let mut preds = Vec::new();
    let mut targets = Vec::new();
    for (bundle, target) in batch {
        preds.push(
            ovid_core::model::forward_graph(
                &mut tape,
                &nodes,
                bundle,
                config,
                dims,
                Mode::Train,
                &mut drng,
            )
            .unwrap(),
        );
        targets.push(*target);
    }
    let data = bce_loss(&mut tape, &preds, &targets).unwrap();
    let reg = l2_penalty(&mut tape, nodes.regularized(), config.lambda).unwrap();
    let out = tape.add_n(&[data, reg]).unwrap();
    let ids = nodes.ids().to_vec();
    (tape, out, ids)
}

fn e2e_relu_margin(seed: u64) -> f64 {
    let (config, dims, batch) = e2e_setup(seed);
    let params = OvidParams::init(&config, dims).unwrap();
    let (tape, _, _) = e2e_loss(&params, &config, dims, &batch, seed);
    tape.relu_input_margin()
}

#[test]
fn acceptance_attention_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);

    // Softmax weights sum to 1 within 1e-12.
    for _ in 0..200 {
        let cols = rng.gen_range(1..12);
        let x = safe_tensor(1, cols, &mut rng);
        let mut tape = Tape::new();
        let xn = tape.leaf(x);
        let s = tape.softmax(xn);
        let sum: f64 = tape.value(s).values().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(tape.value(s).values().iter().all(|w| *w >= 0.0));
    }

    // Identical key/value permutations leave multi-head output unchanged.
    for case in 0..20 {
        let d = 4;
        let n = rng.gen_range(2..7);
        let q0 = safe_tensor(1, d, &mut rng);
        let kv0 = safe_tensor(n, d, &mut rng);
        let heads0: Vec<[Tensor; 3]> = (0..3)
            .map(|_| {
                [
                    safe_tensor(d, d, &mut rng),
                    safe_tensor(d, d, &mut rng),
                    safe_tensor(d, d, &mut rng),
                ]
            })
            .collect();
        let wo0 = safe_tensor(3 * d, d, &mut rng);
        let eval = |kv: &Tensor| {
            let mut tape = Tape::new();
            let q = tape.leaf(q0.clone());
            let kvn = tape.leaf(kv.clone());
            let heads: Vec<HeadNodes> = heads0
                .iter()
                .map(|h| HeadNodes {
                    wq: tape.leaf(h[0].clone()),
                    wk: tape.leaf(h[1].clone()),
                    wv: tape.leaf(h[2].clone()),
                })
                .collect();
            let wo = tape.leaf(wo0.clone());
            let out = multi_head(&mut tape, q, kvn, kvn, &heads, wo).unwrap();
            tape.value(out).values().to_vec()
        };
        let base = eval(&kv0);
        let shift = rng.gen_range(1..n);
        let mut permuted = Tensor::zeros(n, 4);
        for r in 0..n {
            for c in 0..4 {
                permuted.set(r, c, kv0.get((r + shift) % n, c));
            }
        }
        let rotated = eval(&permuted);
        for (a, b) in base.iter().zip(&rotated) {
            assert!((a - b).abs() < 1e-12, "case {case}: {a} vs {b}");
        }
    }

    // A single edit comes back as exactly the value row.
    for _ in 0..20 {
        let q = safe_tensor(1, 5, &mut rng);
        let k = safe_tensor(1, 5, &mut rng);
        let v = safe_tensor(1, 3, &mut rng);
        let mut tape = Tape::new();
        let qn = tape.leaf(q);
        let kn = tape.leaf(k);
        let vn = tape.leaf(v.clone());
        let out = attention(&mut tape, qn, kn, vn).unwrap();
        for (o, expected) in tape.value(out).values().iter().zip(v.values()) {
            assert_eq!(o.to_bits(), expected.to_bits());
        }
    }

    println!("ACCEPTANCE attention-invariants: PASS");
}

fn random_bundle(dims: FeatureDims, n_edits: usize, rng: &mut ChaCha8Rng) -> FeatureBundle {
    let mut gen = |n: usize| safe_tensor(1, n, rng).values().to_vec();
    FeatureBundle {
        changeset: 0,
        x_c: gen(dims.d_changeset),
        x_u: gen(dims.d_user),
        m_e: (0..n_edits).map(|_| gen(dims.d_edit)).collect(),
        flagged: false,
    }
}

#[test]
fn acceptance_architecture_contracts() {
    let dims = FeatureDims {
        d_changeset: 9,
        d_user: D_USER,
        d_edit: D_EDIT,
    };
    let config = OvidConfig {
        d_h: 8,
        n_head: 3,
        n_pred: 2,
        dropout: 0.0,
        th_e_max: 10,
        seed: 12,
        ..OvidConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    // Over-large changesets: prediction is a function of (X_c, X_u) only.
    let params = OvidParams::init(&config, dims).unwrap();
    let mut big = random_bundle(dims, config.th_e_max + 13, &mut rng);
    let y = predict(&params, &config, &big).unwrap();
    for row in &mut big.m_e {
        for v in row.iter_mut() {
            *v = v.mul_add(-7.0, 3.0);
        }
    }
    assert_eq!(
        predict(&params, &config, &big).unwrap().to_bits(),
        y.to_bits()
    );

    // Each ablation makes the prediction provably independent of the
    // removed feature block.
    let base_bundle = random_bundle(dims, 4, &mut rng);
    for variant in AblationVariant::ALL {
        let cfg = ablate(&config, variant).unwrap();
        let params = OvidParams::init(&cfg, dims).unwrap();
        let y = predict(&params, &cfg, &base_bundle).unwrap();

        let mut substituted = base_bundle.clone();
        if !cfg.use_changeset {
            substituted.x_c = safe_tensor(1, dims.d_changeset, &mut rng).values().to_vec();
        }
        if !cfg.use_user {
            substituted.x_u = safe_tensor(1, dims.d_user, &mut rng).values().to_vec();
        }
        if !cfg.use_edits {
            substituted.m_e = (0..6)
                .map(|_| safe_tensor(1, dims.d_edit, &mut rng).values().to_vec())
                .collect();
        }
        let y_sub = predict(&params, &cfg, &substituted).unwrap();
        assert_eq!(
            y.to_bits(),
            y_sub.to_bits(),
            "variant {} leaked its ablated features",
            variant.name()
        );
    }

    // Removing both query branches is rejected.
    let no_user = ablate(&config, AblationVariant::NoUser).unwrap();
    assert!(matches!(
        ablate(&no_user, AblationVariant::NoChangeset),
        Err(ModelError::ConfigViolation(_))
    ));
    let mut both = config.clone();
    both.use_changeset = false;
    both.use_user = false;
    assert!(matches!(
        both.validate(),
        Err(ModelError::ConfigViolation(_))
    ));

    println!("ACCEPTANCE architecture-contracts: PASS");
}

fn separable_set(n: usize, seed: u64, dims: FeatureDims) -> Vec<TrainExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let positive = i % 2 == 0;
            let mut bundle = random_bundle(dims, 2, &mut rng);
            bundle.x_u[0] = if positive {
                rng.gen_range(0.8..1.6)
            } else {
                rng.gen_range(-1.6..-0.8)
            };
            TrainExample {
                bundle,
                target: if positive { 1.0 } else { 0.0 },
            }
        })
        .collect()
}

#[test]
fn acceptance_trainability() {
    let started = Instant::now();
    let dims = FeatureDims {
        d_changeset: 9,
        d_user: D_USER,
        d_edit: D_EDIT,
    };

    // The 64-example separable set reaches 100% training accuracy within
    // 200 epochs (the usual 100-epoch cap lifted for this check).
    let set = separable_set(64, 11, dims);
    let config = OvidConfig {
        d_h: 12,
        n_head: 2,
        n_pred: 1,
        dropout: 0.0,
        lambda: 0.0005,
        th_e_max: 10,
        max_epochs: 200,
        seed: 3,
        ..OvidConfig::default()
    };
    let (params, log) = fit(&set, &set, &config, dims).unwrap();
    assert!(log.stopped_epoch <= 200);
    let correct = set
        .iter()
        .filter(|ex| {
            let y = predict(&params, &config, &ex.bundle).unwrap();
            (y > config.th_class) == (ex.target == 1.0)
        })
        .count();
    assert_eq!(correct, set.len(), "training accuracy below 100%");

    // Early stopping halts within patience+1 epochs on the adversarial
    // fixture (validation labels inverted).
    let train = separable_set(32, 21, dims);
    let val: Vec<TrainExample> = train
        .iter()
        .map(|ex| TrainExample {
            bundle: ex.bundle.clone(),
            target: 1.0 - ex.target,
        })
        .collect();
    let adv_config = OvidConfig {
        d_h: 8,
        n_head: 2,
        n_pred: 1,
        dropout: 0.0,
        lambda: 0.0,
        learning_rate: 5e-3,
        max_epochs: 100,
        patience: 10,
        seed: 2,
        ..OvidConfig::default()
    };
    let (_, adv_log) = fit(&train, &val, &adv_config, dims).unwrap();
    assert!(
        adv_log.stopped_epoch <= adv_config.patience + 1,
        "stopped at epoch {} with patience {}",
        adv_log.stopped_epoch,
        adv_config.patience
    );
    assert_eq!(adv_log.best_epoch, 1);

    // Identical seeds reproduce bit-identical checkpoints.
    let dir = tempfile::tempdir().unwrap();
    let quick = OvidConfig {
        d_h: 8,
        n_head: 2,
        n_pred: 1,
        dropout: 0.4,
        max_epochs: 5,
        seed: 9,
        ..OvidConfig::default()
    };
    let small = separable_set(32, 5, dims);
    let stats = ovid_core::features::fit_norm(&[small[0].bundle.clone()]).unwrap();
    for run in 0..2 {
        let (params, _) = fit(&small, &small, &quick, dims).unwrap();
        let cp = ModelCheckpoint::assemble(quick.clone(), params, stats.clone(), "vocab".into())
            .unwrap();
        save_checkpoint(&cp, &dir.path().join(format!("run{run}.ckpt"))).unwrap();
    }
    let a = std::fs::read(dir.path().join("run0.ckpt")).unwrap();
    let b = std::fs::read(dir.path().join("run1.ckpt")).unwrap();
    assert_eq!(a, b, "checkpoints diverged across identical runs");

    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs() < 120,
        "trainability suite took {elapsed:?}"
    );
    println!("ACCEPTANCE trainability: PASS ({elapsed:?})");
}

#[test]
fn acceptance_miner_oracle() {
    let world = build_world();
    let store = world.to_store();
    let examples = mine(&store, 17).unwrap();

    // Exactly the expected positives, each through its expected path.
    let mut explicit = Vec::new();
    let mut deletion = Vec::new();
    for ex in examples.iter().filter(|e| e.label == Label::Vandalism) {
        match ex.provenance {
            Provenance::ExplicitMention { .. } => explicit.push(ex.changeset),
            Provenance::DeletionAttribution { .. } => deletion.push(ex.changeset),
            Provenance::NegativeSample => panic!("positive with negative provenance"),
        }
    }
    explicit.sort_unstable();
    deletion.sort_unstable();
    let mut want_explicit = world.expected_explicit.clone();
    want_explicit.sort_unstable();
    let mut want_deletion = world.expected_deletion.clone();
    want_deletion.sort_unstable();
    assert_eq!(explicit, want_explicit);
    assert_eq!(deletion, want_deletion);

    // Balanced, and free of the reverts themselves.
    let positives = examples
        .iter()
        .filter(|e| e.label == Label::Vandalism)
        .count();
    let negatives = examples
        .iter()
        .filter(|e| e.label == Label::Regular)
        .count();
    assert_eq!(positives, negatives);
    let reverts: HashSet<u64> = world.revert_ids.iter().copied().collect();
    assert!(examples.iter().all(|e| !reverts.contains(&e.changeset)));

    // Splits are user-disjoint on the mined dataset.
    let split = split_user_disjoint(&examples, (0.70, 0.10, 0.20), 5);
    let users = |part: &[LabeledExample]| part.iter().map(|e| e.user).collect::<HashSet<_>>();
    let (tr, va, te) = (
        users(&split.train),
        users(&split.validation),
        users(&split.test),
    );
    assert!(tr.is_disjoint(&va) && tr.is_disjoint(&te) && va.is_disjoint(&te));
    assert_eq!(split.total(), examples.len());

    // Ratio tolerance (threshold applies to datasets of 1000+ examples):
    // 150 users with uneven activity, 2000 examples.
    let mut big = Vec::new();
    let mut changeset = 0u64;
    for user in 0..150u64 {
        let count = 4 + (user % 21);
        for _ in 0..count {
            changeset += 1;
            big.push(LabeledExample {
                changeset,
                label: if changeset.is_multiple_of(2) {
                    Label::Vandalism
                } else {
                    Label::Regular
                },
                provenance: if changeset.is_multiple_of(2) {
                    Provenance::ExplicitMention { revert: 1 }
                } else {
                    Provenance::NegativeSample
                },
                user,
            });
        }
    }
    assert!(big.len() >= 1000, "fixture has {} examples", big.len());
    for seed in 0..5 {
        let split = split_user_disjoint(&big, (0.70, 0.10, 0.20), seed);
        let total = split.total() as f64;
        for (part, target) in [
            (split.train.len(), 0.70),
            (split.validation.len(), 0.10),
            (split.test.len(), 0.20),
        ] {
            let achieved = part as f64 / total;
            assert!(
                (achieved - target).abs() <= 0.03,
                "seed {seed}: achieved {achieved:.4} vs target {target}"
            );
        }
        let users = |part: &[LabeledExample]| part.iter().map(|e| e.user).collect::<HashSet<_>>();
        let (tr, va, te) = (
            users(&split.train),
            users(&split.validation),
            users(&split.test),
        );
        assert!(tr.is_disjoint(&va) && tr.is_disjoint(&te) && va.is_disjoint(&te));
    }

    println!("ACCEPTANCE miner-oracle: PASS");
}

#[test]
fn acceptance_metrics_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);

    // Metrics equal brute-force recomputation on 1000 random configurations.
    for _ in 0..1000 {
        let cc = ConfusionCounts {
            tp: rng.gen_range(0..200),
            fp: rng.gen_range(0..200),
            tn: rng.gen_range(0..200),
            fn_: rng.gen_range(0..200),
        };
        if cc.total() == 0 {
            continue;
        }
        let m = metrics(&cc).unwrap();
        let precision = if cc.tp + cc.fp == 0 {
            1.0
        } else {
            cc.tp as f64 / (cc.tp + cc.fp) as f64
        };
        let recall = if cc.tp + cc.fn_ == 0 {
            0.0
        } else {
            cc.tp as f64 / (cc.tp + cc.fn_) as f64
        };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        assert_eq!(m.precision, precision);
        assert_eq!(m.recall, recall);
        assert_eq!(m.f1, f1);
        assert_eq!(m.accuracy, (cc.tp + cc.tn) as f64 / cc.total() as f64);
    }

    // Balanced-data sweep endpoints and monotone recall.
    let scored: Vec<(f64, Label)> = (0..500)
        .map(|i| {
            let label = if i % 2 == 0 {
                Label::Vandalism
            } else {
                Label::Regular
            };
            let base: f64 = if label == Label::Vandalism {
                0.65
            } else {
                0.35
            };
            ((base + rng.gen_range(-0.3..0.3)).clamp(0.001, 0.999), label)
        })
        .collect();
    let curve = pr_sweep(&scored, 100).unwrap();
    assert_eq!((curve[0].precision, curve[0].recall), (0.5, 1.0));
    let last = curve.last().unwrap();
    assert_eq!((last.precision, last.recall), (1.0, 0.0));
    for pair in curve.windows(2) {
        assert!(pair[1].recall <= pair[0].recall);
    }

    println!("ACCEPTANCE metrics-oracle: PASS");
}

#[test]
fn acceptance_ingest_round_trip() {
    use ovid_core::ingest::{parse_changeset_metadata, parse_osc};
    use ovid_core::osm::EditOp;

    let world = build_world();

    // parse -> save -> load -> save is byte-identical, with and without
    // gzip on the input side.
    let mut store = ChangesetStore::new();
    parse_changeset_metadata(world.changesets_xml().as_bytes(), &mut store).unwrap();
    parse_osc(world.osc_xml().as_bytes(), &mut store).unwrap();

    let mut first = Vec::new();
    store.save(&mut first).unwrap();
    let reloaded = ChangesetStore::load(&first[..]).unwrap();
    let mut second = Vec::new();
    reloaded.save(&mut second).unwrap();
    assert_eq!(first, second, "store bytes changed across save/load/save");

    // Gzip-compressed inputs produce the same store bytes.
    {
        use flate2::write::GzEncoder;
        use flate2::Compression;
        use std::io::Write;

        let dir = tempfile::tempdir().unwrap();
        let gz_path = dir.path().join("changesets.xml.gz");
        let mut enc = GzEncoder::new(
            std::fs::File::create(&gz_path).unwrap(),
            Compression::default(),
        );
        enc.write_all(world.changesets_xml().as_bytes()).unwrap();
        enc.finish().unwrap();

        let mut store_gz = ChangesetStore::new();
        let reader = ovid_core::ingest::open_xml(&gz_path).unwrap();
        parse_changeset_metadata(reader, &mut store_gz).unwrap();
        parse_osc(world.osc_xml().as_bytes(), &mut store_gz).unwrap();
        let mut gz_bytes = Vec::new();
        store_gz.save(&mut gz_bytes).unwrap();
        assert_eq!(first, gz_bytes);
    }

    // Delete edits carry the joined prior-version tags.
    let mut checked = 0;
    for revert_id in &world.revert_ids {
        for edit in &store.get(*revert_id).unwrap().edits {
            if edit.op == EditOp::Delete {
                assert!(
                    !edit.object.tags.is_empty(),
                    "delete in changeset {revert_id} lost its prior tags"
                );
                checked += 1;
            }
        }
    }
    assert!(checked >= 7, "fixture contains {checked} delete edits");

    println!("ACCEPTANCE ingest-round-trip: PASS");
}

/// Informational only: when a converted copy of the published ground-truth
/// dataset is supplied via OVID_REVERTS_DATA (a features file produced by
/// the documented conversion plus featurize run), report a tuned model's
/// test scores next to the published ones. No tolerance is enforced; the
/// original feature vintage cannot be reconstructed exactly.
#[test]
fn acceptance_published_dataset_informational() {
    let Some(path) = std::env::var_os("OVID_REVERTS_DATA") else {
        println!(
            "ACCEPTANCE published-dataset (informational): SKIP \
             (set OVID_REVERTS_DATA to a features file to enable)"
        );
        return;
    };
    let file = std::fs::File::open(&path).expect("open OVID_REVERTS_DATA");
    let features = ovid_core::features::read_features(std::io::BufReader::new(file)).unwrap();
    let dims = FeatureDims::standard(features.d_changeset);

    let to_examples = |split: SplitName| -> Vec<TrainExample> {
        features
            .part(split)
            .into_iter()
            .map(|r| {
                TrainExample::new(
                    ovid_core::features::apply_norm(&r.bundle, &features.stats),
                    r.label,
                )
            })
            .collect()
    };
    let train_set = to_examples(SplitName::Train);
    let val_set = to_examples(SplitName::Validation);
    let test_set = to_examples(SplitName::Test);

    let config = OvidConfig::default();
    let (params, _) = fit(&train_set, &val_set, &config, dims).unwrap();
    let mut cc = ConfusionCounts::default();
    for ex in &test_set {
        let y = predict(&params, &config, &ex.bundle).unwrap();
        let actual = if ex.target == 1.0 {
            Label::Vandalism
        } else {
            Label::Regular
        };
        cc.tally(ovid_core::model::classify(y, config.th_class), actual);
    }
    let m = metrics(&cc).unwrap();
    println!(
        "ACCEPTANCE published-dataset (informational): test F1 {:.4}, accuracy {:.4} \
         (published reference: F1 0.7599, accuracy 0.7575 on average)",
        m.f1, m.accuracy
    );
}
