mod common;

use std::io::Cursor;

use common::pairwise_auc;
use phnet_core::checkpoint::{AnyModel, Checkpoint};
use phnet_core::data::synthetic::{corpus_splits, SyntheticConfig};
use phnet_core::metrics::{confusion_and_accuracy, roc_auc, MetricsReport};
use phnet_core::models::{Classifier, Model, ModelSpec};
use phnet_core::nn::ParamStore;
use phnet_core::tensor::{read_tensor_from, write_tensor_to, AnyTensor};
use phnet_core::train::{evaluate, train, Adam, AdamConfig, EarlyStopping, TrainConfig, Verdict};
use phnet_core::{Error, Graph, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn no_decay(lr: f64) -> AdamConfig {
    AdamConfig { lr, weight_decay: 0.0, ..AdamConfig::default() }
}

#[test]
fn adam_leaves_parameters_alone_under_zero_gradient() {
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let mut store = ParamStore::<f64>::new();
    store.add("a", Tensor::randn([3, 4, 1, 1], &mut r));
    let before = store.clone();
    let mut adam = Adam::new(no_decay(1e-2), &store);
    for _ in 0..10 {
        adam.step(&mut store, &[Tensor::zeros([3, 4, 1, 1])]).unwrap();
    }
    assert_eq!(store.get(store.ids().next().unwrap()), before.get(before.ids().next().unwrap()));
}

#[test]
fn first_adam_step_has_magnitude_lr() {
    let mut r = ChaCha8Rng::seed_from_u64(2);
    let mut store = ParamStore::<f64>::new();
    let id = store.add("a", Tensor::randn([50, 1, 1, 1], &mut r));
    let before = store.get(id).clone();
    let grad = Tensor::randn([50, 1, 1, 1], &mut r);
    let mut adam = Adam::new(no_decay(1e-3), &store);
    adam.step(&mut store, &[grad.clone()]).unwrap();
    for i in 0..50 {
        let delta = store.get(id).data()[i] - before.data()[i];
        let g = grad.data()[i];
        // m̂ = g and v̂ = g², so the step is lr·g/(|g| + eps)
        let want = -1e-3 * g / (g.abs() + 1e-8);
        assert!((delta - want).abs() < 1e-15, "{delta} vs {want}");
    }
}

#[test]
fn adam_minimizes_a_quadratic() {
    let target = [3.0, -2.0, 0.5];
    let mut store = ParamStore::<f64>::new();
    let id = store.add("x", Tensor::zeros([3, 1, 1, 1]));
    let mut adam = Adam::new(no_decay(0.1), &store);
    for _ in 0..200 {
        let x = store.get(id).clone();
        let g = Tensor::from_vec([3, 1, 1, 1], (0..3).map(|i| 2.0 * (x.data()[i] - target[i])).collect()).unwrap();
        adam.step(&mut store, &[g]).unwrap();
    }
    for (v, t) in store.get(id).data().iter().zip(target) {
        assert!((v - t).abs() < 0.05, "{v} vs {t}");
    }
}

#[test]
fn weight_decay_enters_through_the_gradient() {
    let mut store = ParamStore::<f64>::new();
    let id = store.add("x", Tensor::full([1, 1, 1, 1], 2.0));
    let mut adam = Adam::new(AdamConfig { lr: 0.01, weight_decay: 0.5, ..AdamConfig::default() }, &store);
    adam.step(&mut store, &[Tensor::zeros([1, 1, 1, 1])]).unwrap();
    // effective gradient 0.5·2 > 0, so the first step is −lr
    assert!((store.get(id).item() - (2.0 - 0.01)).abs() < 1e-9);
}

#[test]
fn non_finite_gradient_is_an_error_naming_the_parameter() {
    let mut store = ParamStore::<f32>::new();
    store.add("good", Tensor::zeros([2, 1, 1, 1]));
    store.add("bad", Tensor::zeros([2, 1, 1, 1]));
    let before = store.clone();
    let mut adam = Adam::new(AdamConfig::default(), &store);
    let grads = [Tensor::ones([2, 1, 1, 1]), Tensor::from_vec([2, 1, 1, 1], vec![1.0, f32::NAN]).unwrap()];
    match adam.step(&mut store, &grads) {
        Err(Error::NonFinite(m)) => assert!(m.contains("bad"), "{m}"),
        other => panic!("{other:?}"),
    }
    assert_eq!(adam.step, 0);
    assert_eq!(store.iter().collect::<Vec<_>>(), before.iter().collect::<Vec<_>>());
}

fn random_instance(r: &mut ChaCha8Rng) -> (Vec<f64>, Vec<usize>) {
    let n = r.gen_range(2..=50);
    let mut labels: Vec<usize> = (0..n).map(|_| r.gen_range(0..2)).collect();
    let (a, b) = (r.gen_range(0..n), r.gen_range(0..n - 1));
    let b = if b >= a { b + 1 } else { b };
    labels[a] = 0;
    labels[b] = 1;
    // few distinct levels force plenty of ties
    let levels = r.gen_range(1..=n);
    let scores = (0..n).map(|_| r.gen_range(0..levels) as f64 / levels as f64 - 0.3).collect();
    (scores, labels)
}

#[test]
fn auc_equals_the_pairwise_oracle_on_fuzzed_instances() {
    let mut r = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..2000 {
        let (s, l) = random_instance(&mut r);
        let got = roc_auc(&s, &l).unwrap().auc;
        assert!((got - pairwise_auc(&s, &l)).abs() < 1e-12);
    }
}

#[test]
fn auc_is_invariant_under_monotone_transforms() {
    let mut r = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..1000 {
        let (s, l) = random_instance(&mut r);
        let base = roc_auc(&s, &l).unwrap().auc;
        let (a, b) = (r.gen_range(0.1..10.0), r.gen_range(-5.0..5.0));
        for t in [s.iter().map(|x| x.exp()).collect::<Vec<_>>(), s.iter().map(|x| a * x + b).collect(), s.iter().map(|x| x.powi(3)).collect()] {
            assert!((roc_auc(&t, &l).unwrap().auc - base).abs() < 1e-12);
        }
    }
}

#[test]
fn auc_edge_cases() {
    assert_eq!(roc_auc(&[0.1, 0.9], &[0, 1]).unwrap().auc, 1.0);
    assert_eq!(roc_auc(&[0.9, 0.1], &[0, 1]).unwrap().auc, 0.0);
    assert_eq!(roc_auc(&[0.5; 6], &[0, 1, 0, 1, 1, 0]).unwrap().auc, 0.5);
    assert!(matches!(roc_auc(&[0.1, 0.2], &[1, 1]), Err(Error::MetricUndefined(_))));
    assert!(roc_auc(&[0.1, f64::NAN], &[0, 1]).is_err());
    assert!(roc_auc(&[0.1], &[0, 1]).is_err());
    let mut r = ChaCha8Rng::seed_from_u64(5);
    let scores: Vec<f64> = (0..20000).map(|_| r.gen()).collect();
    let labels: Vec<usize> = (0..20000).map(|_| r.gen_range(0..2)).collect();
    assert!((roc_auc(&scores, &labels).unwrap().auc - 0.5).abs() < 0.015);
}

#[test]
fn roc_curve_is_monotone_from_origin_to_corner() {
    let mut r = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..200 {
        let (s, l) = random_instance(&mut r);
        let pts = roc_auc(&s, &l).unwrap().points;
        assert_eq!((pts[0].fpr, pts[0].tpr), (0.0, 0.0));
        assert!(pts[0].threshold.is_infinite());
        let last = pts.last().unwrap();
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        assert!(pts.windows(2).all(|w| w[0].fpr <= w[1].fpr && w[0].tpr <= w[1].tpr && w[0].threshold > w[1].threshold));
    }
}

#[test]
fn confusion_matrix_uses_inclusive_half_threshold() {
    let scores = [0.5, 0.49, 0.9, 0.1, 0.5, 0.7];
    let labels = [1, 1, 0, 0, 0, 1];
    let (c, acc) = confusion_and_accuracy(&scores, &labels, 0.5).unwrap();
    assert_eq!(c.matrix(), [[1, 2], [1, 2]]);
    assert_eq!(acc, 0.5);
    let report = MetricsReport::compute(&scores, &labels).unwrap();
    let dir = tempfile::tempdir().unwrap();
    report.write(dir.path()).unwrap();
    let roc = std::fs::read_to_string(dir.path().join("roc.csv")).unwrap();
    assert!(roc.starts_with("fpr,tpr,threshold\n"));
    assert_eq!(roc.lines().count(), 1 + report.roc_points.len());
}

/// Epoch at which a patience rule stops, computed without the library.
fn expected_stop(metrics: &[f64], patience: usize) -> (Option<usize>, Option<usize>) {
    let mut best = f64::NEG_INFINITY;
    let mut best_epoch = None;
    let mut stale = 0;
    for (i, &m) in metrics.iter().enumerate() {
        if m > best {
            best = m;
            best_epoch = Some(i + 1);
            stale = 0;
        } else {
            stale += 1;
            if stale == patience {
                return (Some(i + 1), best_epoch);
            }
        }
    }
    (None, best_epoch)
}

fn run_stopper(metrics: &[f64], patience: usize) -> (Option<usize>, Option<usize>) {
    let mut s = EarlyStopping::new(patience);
    for (i, &m) in metrics.iter().enumerate() {
        if s.observe(i + 1, m) == Verdict::Stop {
            return (Some(i + 1), s.best().map(|b| b.0));
        }
    }
    (None, s.best().map(|b| b.0))
}

#[test]
fn patience_twenty_on_scripted_sequences() {
    // rises for five epochs then plateaus: stop 20 epochs after the peak
    let mut plateau: Vec<f64> = (1..=5).map(|i| i as f64 / 10.0).collect();
    plateau.extend(std::iter::repeat(0.5).take(30));
    assert_eq!(run_stopper(&plateau, 20), (Some(25), Some(5)));
    // a late strict improvement resets the counter, a tie does not
    let mut late = vec![0.7; 19];
    late[0] = 0.8;
    late.push(0.80000001);
    late.extend(std::iter::repeat(0.80000001).take(25));
    assert_eq!(run_stopper(&late, 20), (Some(40), Some(20)));
    // never stops when improving
    let rising: Vec<f64> = (0..60).map(|i| i as f64).collect();
    assert_eq!(run_stopper(&rising, 20), (None, Some(60)));
}

proptest! {
    #[test]
    fn early_stopping_matches_the_rule(raw in prop::collection::vec(0u8..6, 1..80), patience in 1usize..25) {
        let metrics: Vec<f64> = raw.iter().map(|&v| v as f64 / 5.0).collect();
        prop_assert_eq!(run_stopper(&metrics, patience), expected_stop(&metrics, patience));
    }

    #[test]
    fn nan_never_improves(k in 1usize..10) {
        let mut s = EarlyStopping::new(3);
        s.observe(1, 0.6);
        for e in 0..k.min(2) {
            prop_assert_ne!(s.observe(2 + e, f64::NAN), Verdict::Improved);
        }
        prop_assert_eq!(s.best(), Some((1, 0.6)));
    }

    #[test]
    fn pht1_round_trips_bit_exactly(dims in prop::array::uniform4(0usize..5), seed in any::<u64>(), wide in any::<bool>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let n: usize = dims.iter().product();
        let special = [f64::NAN, f64::INFINITY, -0.0, f64::MIN_POSITIVE, 1e300];
        let vals: Vec<f64> = (0..n).map(|i| if i % 7 == 3 { special[i % 5] } else { r.gen_range(-1e6..1e6) }).collect();
        let mut buf = Vec::new();
        if wide {
            write_tensor_to(&mut buf, &Tensor::from_vec(dims, vals.clone()).unwrap()).unwrap();
        } else {
            write_tensor_to(&mut buf, &Tensor::from_vec(dims, vals.iter().map(|&v| v as f32).collect()).unwrap()).unwrap();
        }
        let back = read_tensor_from(&mut Cursor::new(&buf)).unwrap();
        prop_assert_eq!(back.shape().0, dims);
        match back {
            AnyTensor::F64(t) => {
                prop_assert!(wide);
                prop_assert!(t.data().iter().zip(&vals).all(|(a, b)| a.to_bits() == b.to_bits()));
            }
            AnyTensor::F32(t) => {
                prop_assert!(!wide);
                prop_assert!(t.data().iter().zip(&vals).all(|(a, b)| a.to_bits() == (*b as f32).to_bits()));
            }
        }
    }
}

#[test]
fn pht1_rejects_corruption() {
    let mut buf = Vec::new();
    write_tensor_to(&mut buf, &Tensor::<f32>::ones([1, 2, 3, 4])).unwrap();
    let mut bad = buf.clone();
    bad[0] = b'X';
    assert!(read_tensor_from(&mut Cursor::new(&bad)).is_err());
    assert!(read_tensor_from(&mut Cursor::new(&buf[..buf.len() - 1])).is_err());
    let mut dtype = buf.clone();
    dtype[8] = 9;
    assert!(read_tensor_from(&mut Cursor::new(&dtype)).is_err());
}

fn tiny_corpus(seed: u64) -> [Vec<phnet_core::data::AugmentedSample>; 3] {
    let cfg = SyntheticConfig { size: 32, count: 240, radius: [3.0, 5.0], contrast: 4.0, seed, ..Default::default() };
    corpus_splits(&cfg).unwrap()
}

fn tiny_config(epochs: usize) -> TrainConfig {
    TrainConfig { lr: 3e-3, max_epochs: epochs, patience: epochs, batch_size: 16, seed: 2, ..TrainConfig::default() }
}

#[test]
fn mini_network_separates_easy_data() {
    let [tr, va, te] = tiny_corpus(1);
    let mut model = Model::<f32>::build(&ModelSpec::mini(2, 2), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let out = train(&mut model, &tr, &va, &tiny_config(30), |_| Ok(())).unwrap();
    assert!(out.best_metric > 0.99, "best val AUC {}", out.best_metric);
    let report = evaluate(&mut model, &te, 32).unwrap();
    assert!(report.auc.unwrap() > 0.99, "test AUC {:?}", report.auc);
}

#[test]
fn training_restores_the_best_epoch_and_is_reproducible() {
    let [tr, va, _] = tiny_corpus(2);
    let cfg = TrainConfig { patience: 2, ..tiny_config(8) };
    let run = || {
        let mut model = Model::<f32>::build(&ModelSpec::mini(2, 2), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let mut seen = Vec::new();
        let out = train(&mut model, &tr, &va, &cfg, |l| {
            seen.push(l.clone());
            Ok(())
        })
        .unwrap();
        (model, out, seen)
    };
    let (mut model, out, seen) = run();
    assert_eq!(seen, out.history);
    let best = out.history.iter().filter_map(|l| l.val_auc).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(out.best_metric, best);
    assert_eq!(out.history[out.best_epoch - 1].val_auc, Some(best));
    let again = evaluate(&mut model, &va, 7).unwrap();
    assert_eq!(again.auc, Some(out.best_metric), "restored weights reproduce the logged value");
    if out.stopped_early {
        assert_eq!(out.history.len(), out.best_epoch + 2);
    }
    assert_eq!(out.optimizer.step as usize, out.best_epoch * tr.len().div_ceil(16));

    let (model2, out2, _) = run();
    let strip = |h: &[phnet_core::train::EpochLog]| h.iter().map(|l| (l.epoch, l.train_loss, l.val_auc, l.val_accuracy)).collect::<Vec<_>>();
    assert_eq!(strip(&out.history), strip(&out2.history));
    assert_eq!(model.params.iter().collect::<Vec<_>>(), model2.params.iter().collect::<Vec<_>>());
}

#[test]
fn single_class_validation_cannot_monitor_auc() {
    let [tr, va, _] = tiny_corpus(3);
    let negatives: Vec<_> = va.into_iter().filter(|s| s.label == 0).collect();
    let mut model = Model::<f32>::build(&ModelSpec::mini(2, 2), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let err = train(&mut model, &tr, &negatives, &tiny_config(2), |_| Ok(())).unwrap_err();
    assert!(matches!(err, Error::MetricUndefined(_)));
}

#[test]
fn checkpoints_round_trip_bit_exactly() {
    let mut model = Model::<f32>::build(&ModelSpec::mini(2, 2), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let mut adam = Adam::new(AdamConfig { lr: 1e-2, ..AdamConfig::default() }, &model.params);
    let mut r = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..2 {
        let mut g = Graph::new();
        let x = g.constant(Tensor::randn([3, 2, 16, 16], &mut r));
        let (logits, bind) = Classifier::forward(&mut model, &mut g, x, phnet_core::kernels::Mode::Train).unwrap();
        let loss = g.cross_entropy(logits, &[0, 1, 1]).unwrap();
        g.backward(loss).unwrap();
        adam.step(&mut model.params, &bind.grads(&g)).unwrap();
    }
    let ck = Checkpoint { model: AnyModel::Resnet(model), optimizer: Some(adam), meta: serde_json::json!({"best_epoch": 7}) };
    let mut buf = Vec::new();
    ck.write_to(&mut buf).unwrap();
    let back = Checkpoint::<f32>::read_from(&mut Cursor::new(&buf)).unwrap();
    assert_eq!(back.meta, ck.meta);
    assert_eq!(back.model.desc(), ck.model.desc());
    let bits = |s: &ParamStore<f32>| s.iter().map(|(n, t)| (n.to_owned(), t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>())).collect::<Vec<_>>();
    assert_eq!(bits(back.model.params()), bits(ck.model.params()));
    assert_eq!(bits(back.model.buffers()), bits(ck.model.buffers()));
    let (a, b) = (back.optimizer.as_ref().unwrap(), ck.optimizer.as_ref().unwrap());
    assert_eq!((a.step, a.config), (b.step, b.config));
    assert_eq!((&a.m, &a.v), (&b.m, &b.v));
    let mut again = Vec::new();
    back.write_to(&mut again).unwrap();
    assert_eq!(again, buf);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.phck");
    ck.save(&path).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), buf);
    assert!(Checkpoint::<f32>::load(&path).is_ok());
    let mut trailing = buf.clone();
    trailing.push(0);
    assert!(Checkpoint::<f32>::read_from(&mut Cursor::new(&trailing)).is_err());
    assert!(Checkpoint::<f64>::read_from(&mut Cursor::new(&buf)).is_err(), "dtype must match");
    assert!(Checkpoint::<f32>::read_from(&mut Cursor::new(&buf[..buf.len() / 2])).is_err());
}
