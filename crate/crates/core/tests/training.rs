use proptest::prelude::*;
use psv_core::dataset::{generate_scene, Sample, SceneSpec};
use psv_core::label::{LabelMask, NUM_CATEGORIES};
use psv_core::network::{build, images_to_tensor, Network, NetworkConfig, STAGES};
use psv_core::training::{
    class_proportions, compute_class_weights, sgd_step, total_loss, train, train_step, weighted_sq_loss, ClassWeights,
    TrainConfig, TrainError, TrainOutputs,
};
use psv_core::tensor::{Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::{loss_term, random_label, random_outputs};

fn tiny_config() -> NetworkConfig {
    NetworkConfig { encoder_channels: [4, 4, 8, 8, 8], input_size: (64, 64), ..Default::default() }
}

fn scenes(n: usize, size: usize, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let spec = SceneSpec::random(size, &mut rng);
            generate_scene(&spec, &mut rng).unwrap()
        })
        .collect()
}

#[test]
fn loss_report_recomposes_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let (w, h) = (rng.random_range(2..12), rng.random_range(2..12));
        let label = random_label(w, h, &mut rng);
        let weights = [compute_class_weights(&label, rng.random_range(1.0..2000.0))];
        let lambda: [f64; STAGES] = std::array::from_fn(|_| rng.random_range(0.0..3.0));
        let out = random_outputs(h, w, &mut rng);
        let (r, _) = total_loss(&out, &[&label], &weights, &lambda).unwrap();
        assert!((r.total - r.recompose()).abs() <= 1e-6 * r.total.abs());
        // Independent recomputation of every term from the raw outputs.
        let term = |t: &Tensor<f64>| loss_term(t, &label, &weights[0]);
        let expected = term(&out.final_output)
            + lambda.iter().zip(&out.pre_outputs).map(|(l, p)| l * term(p)).sum::<f64>();
        assert!((r.total - expected).abs() <= 1e-9 * expected.abs(), "{} vs {expected}", r.total);
    }
}

#[test]
fn weight_inversion_is_exact_below_the_clamp() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let label = random_label(rng.random_range(1..40), rng.random_range(1..40), &mut rng);
        let w_max = 1000.0;
        let w = compute_class_weights(&label, w_max);
        let p = class_proportions(&label);
        for c in 0..NUM_CATEGORIES {
            if p[c] == 0.0 {
                assert_eq!(w.get(c), 0.0);
            } else if 1.0 / p[c] <= w_max {
                assert!((w.get(c) * p[c] - 1.0).abs() <= 4.0 * f64::EPSILON, "{c}: {} * {}", w.get(c), p[c]);
            } else {
                assert_eq!(w.get(c), w_max);
            }
        }
    }
}

#[test]
fn weights_clamp_a_single_pixel_category() {
    let mut label = LabelMask::new(1000, 1000);
    label.set(3, 3, psv_core::label::Category::YellowDashed);
    let w = compute_class_weights(&label, 1000.0);
    assert_eq!(w.get(5), 1000.0);
}

#[test]
fn scaling_weights_scales_loss_and_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let label = random_label(9, 7, &mut rng);
    let pred = Tensor::<f64>::randn(Shape::new(1, NUM_CATEGORIES, 7, 9), 1.0, &mut rng);
    let w = compute_class_weights(&label, 1000.0);
    let (l1, g1) = weighted_sq_loss(&pred, &[&label], &[w]).unwrap();
    for kappa in [0.25, 3.0, 17.5] {
        let (lk, gk) = weighted_sq_loss(&pred, &[&label], &[w.scaled(kappa)]).unwrap();
        assert!((lk - kappa * l1).abs() <= 1e-6 * (kappa * l1).abs());
        for (a, b) in gk.data().iter().zip(g1.data()) {
            assert!((a - kappa * b).abs() <= 1e-6 * (kappa * b).abs().max(1e-12));
        }
    }
}

#[test]
fn scaling_weights_scales_network_gradients() {
    let cfg = tiny_config();
    let net = Network::new(&cfg).unwrap();
    let params = build(&cfg, 3).unwrap().cast::<f64>();
    let s = &scenes(1, 64, 1)[0];
    let x = images_to_tensor::<f64>(&[&s.image]).unwrap();
    let (out, trace) = net.forward_traced(&params, &x).unwrap();
    let w = compute_class_weights(&s.label, 1000.0);
    let grads = |w: ClassWeights| {
        let (r, h) = total_loss(&out, &[&s.label], &[w], &[1.0; STAGES]).unwrap();
        (r.total, net.backward(&params, &trace, &h.final_output, &h.pre_outputs).unwrap())
    };
    let (l1, g1) = grads(w);
    let kappa = 4.5;
    let (lk, gk) = grads(w.scaled(kappa));
    assert!((lk - kappa * l1).abs() <= 1e-6 * kappa * l1);
    for (name, a) in gk.iter() {
        let b = g1.get(name).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - kappa * y).abs() <= 1e-6 * (kappa * y).abs().max(1e-12), "{name}");
        }
    }
}

#[test]
fn sgd_step_arithmetic() {
    let cfg = tiny_config();
    let mut p = build(&cfg, 0).unwrap().cast::<f64>();
    let before = p.clone();
    let zero = psv_core::network::ModelParams::zeros_like(&p);
    sgd_step(&mut p, &zero, 0.1).unwrap();
    assert_eq!(p, before);

    let mut g = psv_core::network::ModelParams::zeros_like(&p);
    let name = p.names().next().unwrap().to_owned();
    p.get_mut(&name).unwrap().data_mut()[0] = 1.0;
    g.get_mut(&name).unwrap().data_mut()[0] = 2.0;
    sgd_step(&mut p, &g, 0.1).unwrap();
    assert!((p.get(&name).unwrap().data()[0] - 0.8).abs() < 1e-15);
}

#[test]
fn sgd_step_rejects_nan_gradients_untouched() {
    let cfg = tiny_config();
    let mut p = build(&cfg, 0).unwrap();
    let before = p.clone();
    let mut g = psv_core::network::ModelParams::zeros_like(&p);
    let last = p.names().last().unwrap().to_owned();
    g.get_mut(&last).unwrap().data_mut()[0] = f32::NAN;
    assert!(matches!(sgd_step(&mut p, &g, 0.1), Err(TrainError::NonFinite { .. })));
    assert_eq!(p, before);
}

#[test]
fn overfitting_one_sample_lowers_the_loss() {
    let cfg = tiny_config();
    let net = Network::new(&cfg).unwrap();
    let mut params = build(&cfg, 1).unwrap();
    let sample = &scenes(1, 64, 4)[0];
    let tc = TrainConfig { batch_size: 1, learning_rate: 5e-3, ..Default::default() };
    let losses: Vec<f64> = (0..20).map(|_| train_step(&net, &mut params, &[sample], &tc).unwrap().total).collect();
    assert!(losses[19] < losses[0], "{losses:?}");
    let early: f64 = losses[3..8].iter().sum::<f64>() / 5.0;
    let late: f64 = losses[15..20].iter().sum::<f64>() / 5.0;
    assert!(late < early, "{losses:?}");
}

#[test]
fn seeded_training_is_reproducible() {
    let cfg = tiny_config();
    let data = scenes(3, 64, 8);
    let tc = TrainConfig { batch_size: 2, learning_rate: 1e-3, epochs: 2, ..Default::default() };
    let run = || {
        let mut p = build(&cfg, 5).unwrap();
        let log = train(&mut p, &cfg, &data, &data[..1], &tc, &mut ChaCha8Rng::seed_from_u64(9), &TrainOutputs::default(), |_| {})
            .unwrap();
        (p, log)
    };
    let (pa, la) = run();
    let (pb, lb) = run();
    assert_eq!(la, lb);
    assert_eq!(pa, pb);
    assert_eq!(la.len(), 2);
    assert!(la.iter().all(|e| e.val_miou.is_some()));
}

#[test]
fn zero_learning_rate_leaves_parameters() {
    let cfg = tiny_config();
    let data = scenes(2, 64, 3);
    let mut p = build(&cfg, 5).unwrap();
    let before = p.clone();
    let tc = TrainConfig { batch_size: 1, learning_rate: 0.0, epochs: 1, ..Default::default() };
    train(&mut p, &cfg, &data, &[], &tc, &mut ChaCha8Rng::seed_from_u64(0), &TrainOutputs::default(), |_| {}).unwrap();
    assert_eq!(p, before);
}

#[test]
fn empty_training_set_is_an_error() {
    let cfg = tiny_config();
    let mut p = build(&cfg, 5).unwrap();
    let r = train(&mut p, &cfg, &[], &[], &TrainConfig::default(), &mut ChaCha8Rng::seed_from_u64(0), &TrainOutputs::default(), |_| {});
    assert!(matches!(r, Err(TrainError::EmptyDataset)));
}

#[test]
fn writes_log_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config();
    let data = scenes(2, 64, 3);
    let mut p = build(&cfg, 5).unwrap();
    let outputs = TrainOutputs { checkpoint_dir: Some(dir.path().join("ckpt")), log_path: Some(dir.path().join("log.tsv")) };
    let tc = TrainConfig { batch_size: 2, learning_rate: 1e-3, epochs: 2, ..Default::default() };
    train(&mut p, &cfg, &data, &[], &tc, &mut ChaCha8Rng::seed_from_u64(0), &outputs, |_| {}).unwrap();
    let log = std::fs::read_to_string(dir.path().join("log.tsv")).unwrap();
    assert_eq!(log.lines().count(), 3);
    assert!(log.lines().nth(1).unwrap().starts_with("1\t"));
    for e in 1..=2 {
        let (c, loaded) = psv_core::network::ModelParams::<f32>::load(&dir.path().join(format!("ckpt/epoch_{e:03}.psvnet"))).unwrap();
        assert_eq!(c, cfg);
        if e == 2 {
            assert_eq!(loaded, p);
        }
    }
}

proptest! {
    #[test]
    fn loss_is_zero_exactly_at_one_hot_targets(vals in prop::collection::vec(0u8..6, 12)) {
        let label = LabelMask::from_raw(4, 3, vals).unwrap();
        let mut t = Tensor::<f64>::zeros(Shape::new(1, NUM_CATEGORIES, 3, 4));
        for y in 0..3 {
            for x in 0..4 {
                t.set(0, label.get(x, y) as usize, y, x, 1.0);
            }
        }
        let (l, g) = weighted_sq_loss(&t, &[&label], &[compute_class_weights(&label, 1000.0)]).unwrap();
        prop_assert_eq!(l, 0.0);
        prop_assert!(g.data().iter().all(|&v| v == 0.0));
    }
}
