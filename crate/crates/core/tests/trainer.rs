use msagsm::data::{cue_dataset, SynthConfig, Video};
use msagsm::temporal::ParamTree;
use msagsm::train::{
    adamw_step, clip_loss_and_grads, evaluate_model, lr_at, train, weighted_ce_loss, write_metrics_csv,
    AdamState, ExperimentConfig, LossConfig, OptimConfig, TemporalBlock, ToyModelConfig, ToyParams,
    TrainData,
};
use msagsm::{Error, Tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

/// Plain per-frame cross-entropy averaged over frames.
fn ce_oracle(logits: &Tensor, labels: &[usize]) -> f64 {
    let k = logits.shape()[1];
    let mut total = 0.0;
    for (t, row) in logits.data().chunks(k).enumerate() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - row[labels[t]];
    }
    total / labels.len() as f64
}

#[test]
fn loss_uniform_logits_fixtures() {
    let logits = Tensor::zeros(&[1, 4]);
    let (bg, _) = weighted_ce_loss(&logits, &[0], 5.0).unwrap();
    let (ev, _) = weighted_ce_loss(&logits, &[2], 5.0).unwrap();
    assert!((bg - 4f64.ln()).abs() < 1e-15);
    assert!((ev - 5.0 * 4f64.ln()).abs() < 1e-14);
}

#[test]
fn weighted_loss_scales_single_event_frames() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for w in [1.0, 2.5, 5.0, 10.0] {
        let logits = Tensor::uniform(&[1, 5], 3.0, &mut rng);
        let (weighted, _) = weighted_ce_loss(&logits, &[3], w).unwrap();
        let (plain, _) = weighted_ce_loss(&logits, &[3], 1.0).unwrap();
        assert!((weighted - w * plain).abs() <= 1e-12 * weighted.abs());
    }
}

#[test]
fn loss_rejects_bad_inputs() {
    let logits = Tensor::zeros(&[2, 3]);
    assert!(weighted_ce_loss(&logits, &[0, 3], 5.0).is_err());
    assert!(weighted_ce_loss(&logits, &[0], 5.0).is_err());
    assert!(matches!(weighted_ce_loss(&logits, &[0, 1], 0.5), Err(Error::Config { .. })));
}

#[test]
fn loss_near_zero_only_for_confident_correct_logits() {
    let mut logits = Tensor::zeros(&[3, 3]);
    let labels = [0, 2, 1];
    for (t, &l) in labels.iter().enumerate() {
        logits.set(&[t, l], 60.0);
    }
    let (loss, _) = weighted_ce_loss(&logits, &labels, 5.0).unwrap();
    assert!(loss < 1e-20);
    let (wrong, _) = weighted_ce_loss(&logits, &[1, 2, 1], 5.0).unwrap();
    assert!(wrong > 10.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn unit_weight_is_plain_cross_entropy(seed in any::<u64>(), t in 1usize..10, k in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let logits = Tensor::uniform(&[t, k], 4.0, &mut rng);
        let labels: Vec<usize> = (0..t).map(|i| (seed as usize / (i + 1)) % k).collect();
        let (loss, _) = weighted_ce_loss(&logits, &labels, 1.0).unwrap();
        prop_assert_eq!(loss, ce_oracle(&logits, &labels));
    }

    #[test]
    fn loss_is_non_negative_with_softmax_gradient(seed in any::<u64>(), t in 1usize..8, w in 1.0f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = 4;
        let logits = Tensor::uniform(&[t, k], 5.0, &mut rng);
        let labels: Vec<usize> = (0..t).map(|i| (seed as usize >> i) % k).collect();
        let (loss, grad) = weighted_ce_loss(&logits, &labels, w).unwrap();
        prop_assert!(loss >= 0.0);
        for (ti, row) in logits.data().chunks(k).enumerate() {
            let weight = if labels[ti] == 0 { 1.0 } else { w };
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| (v - max).exp()).sum();
            for c in 0..k {
                let p = (row[c] - max).exp() / z;
                let expected = weight / t as f64 * (p - if c == labels[ti] { 1.0 } else { 0.0 });
                prop_assert!((grad.at(&[ti, c]) - expected).abs() < 1e-12);
            }
        }
    }
}

fn optim(base_lr: f64, weight_decay: f64) -> OptimConfig {
    OptimConfig {
        base_lr,
        weight_decay,
        ..OptimConfig::default()
    }
}

#[test]
fn lr_schedule_fixtures() {
    let cfg = OptimConfig {
        base_lr: 2e-3,
        warmup_epochs: 3,
        total_epochs: 30,
        ..OptimConfig::default()
    };
    let spe = 64;
    assert_eq!(lr_at(0, spe, &cfg), 0.0);
    assert_eq!(lr_at(3 * spe, spe, &cfg), 2e-3);
    let mid = 3 * spe + 27 * spe / 2;
    assert!((lr_at(mid, spe, &cfg) - 1e-3).abs() <= 1e-9);
    assert!(lr_at(30 * spe, spe, &cfg).abs() < 1e-18);
    assert!((lr_at(spe, spe, &cfg) - 2e-3 / 3.0).abs() < 1e-18);
    for s in 1..30 * spe {
        let (a, b) = (lr_at(s - 1, spe, &cfg), lr_at(s, spe, &cfg));
        if s <= 3 * spe {
            assert!(b > a);
        } else {
            assert!(b <= a);
        }
    }
}

#[test]
fn adamw_zero_gradient_applies_only_decay() {
    let cfg = optim(0.1, 0.01);
    let mut params = vec![Tensor::from_vec(vec![1.0, -2.0, 0.5])];
    let grads = vec![Tensor::zeros(&[3])];
    let mut state = AdamState::zeros_like(&params);
    adamw_step(&mut params, &grads, &mut state, 1, 0.1, &cfg).unwrap();
    let f = 1.0 - 0.1 * 0.01;
    assert_eq!(params[0].data(), &[f, -2.0 * f, 0.5 * f]);

    let no_decay = optim(0.1, 0.0);
    let before = params.clone();
    adamw_step(&mut params, &grads, &mut state, 2, 0.1, &no_decay).unwrap();
    assert_eq!(params, before);
}

#[test]
fn adamw_first_step_moves_by_lr() {
    let cfg = optim(0.05, 0.0);
    let mut params = vec![Tensor::from_vec(vec![0.0, 0.0])];
    let grads = vec![Tensor::from_vec(vec![3.0, -0.2])];
    let mut state = AdamState::zeros_like(&params);
    adamw_step(&mut params, &grads, &mut state, 1, 0.05, &cfg).unwrap();
    assert!((params[0].data()[0] + 0.05).abs() < 1e-7);
    assert!((params[0].data()[1] - 0.05).abs() < 1e-7);
}

#[test]
fn adamw_minimises_quadratic() {
    let cfg = optim(0.05, 0.0);
    let mut params = vec![Tensor::from_vec(vec![3.0, -1.5])];
    let mut state = AdamState::zeros_like(&params);
    for t in 1..=500 {
        let grads = vec![params[0].map(|x| 2.0 * x)];
        adamw_step(&mut params, &grads, &mut state, t, 0.05, &cfg).unwrap();
    }
    assert!(params[0].data().iter().all(|x| x.abs() < 0.05), "{:?}", params[0].data());
}

#[test]
fn adamw_rejects_bad_calls() {
    let cfg = optim(0.1, 0.0);
    let mut params = vec![Tensor::zeros(&[2])];
    let mut state = AdamState::zeros_like(&params);
    assert!(adamw_step(&mut params, &[Tensor::zeros(&[2])], &mut state, 0, 0.1, &cfg).is_err());
    assert!(adamw_step(&mut params, &[Tensor::zeros(&[3])], &mut state, 1, 0.1, &cfg).is_err());
    assert!(adamw_step(&mut params, &[], &mut state, 1, 0.1, &cfg).is_err());
}

#[test]
fn optim_config_validation_names_fields() {
    let bad = OptimConfig { warmup_epochs: 5, total_epochs: 5, ..OptimConfig::default() };
    match bad.validate() {
        Err(Error::Config { field, .. }) => assert_eq!(field, "optim.warmup_epochs"),
        other => panic!("{other:?}"),
    }
    let bad = OptimConfig { beta2: 1.0, ..OptimConfig::default() };
    assert!(matches!(bad.validate(), Err(Error::Config { field, .. }) if field == "optim.beta2"));
}

fn count_scalars(params: &ToyParams) -> usize {
    let mut n = 0;
    params.visit("", &mut |_, t| n += t.len());
    n
}

#[test]
fn param_count_matches_initialised_tensors() {
    let blocks = [
        TemporalBlock::None,
        TemporalBlock::tsm(),
        TemporalBlock::Gsm,
        TemporalBlock::Msagsm { heads: 1, dilations: vec![1] },
        TemporalBlock::Msagsm { heads: 4, dilations: vec![1, 2, 3] },
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for block in blocks {
        for depth in 1..3 {
            let cfg = ToyModelConfig::benchmark(3, 8, depth, 4, block.clone());
            let params = ToyParams::init(&cfg, &mut rng).unwrap();
            assert_eq!(cfg.param_count().unwrap(), count_scalars(&params), "{block:?} depth {depth}");
        }
    }
    let reference = ToyModelConfig::reference_backbone(8, TemporalBlock::default());
    let params = ToyParams::init(&reference, &mut rng).unwrap();
    assert_eq!(reference.param_count().unwrap(), count_scalars(&params));
}

#[test]
fn reference_backbone_overhead_fixture() {
    // Convolutions: sum over stages of 4 layers of (Cout*Cin*9 + Cout).
    let convs = (32 * 3 * 9 + 32) + 3 * (32 * 32 * 9 + 32)
        + (64 * 32 * 9 + 64) + 3 * (64 * 64 * 9 + 64)
        + (128 * 64 * 9 + 128) + 3 * (128 * 128 * 9 + 128)
        + (256 * 128 * 9 + 256) + 3 * (256 * 256 * 9 + 256);
    assert_eq!(convs, 2_739_936);
    let head = 9 * 257;
    let msagsm = |c: usize| 180 * c + 11;
    let gsm = |c: usize| 54 * c + 2;
    let full = ToyModelConfig::reference_backbone(8, TemporalBlock::default());
    let base = ToyModelConfig::reference_backbone(8, TemporalBlock::Gsm);
    assert_eq!(full.param_count().unwrap(), convs + head + msagsm(128) + msagsm(256));
    assert_eq!(base.param_count().unwrap(), convs + head + gsm(128) + gsm(256));
    assert_eq!(full.param_count().unwrap(), 2_811_391);
    assert_eq!(full.param_count().unwrap() - base.param_count().unwrap(), 48_402);
}

fn cue_data(seed: u64, train_videos: usize, val_videos: usize) -> TrainData {
    let cfg = SynthConfig { seed, ..SynthConfig::default() };
    TrainData {
        train: cue_dataset(&cfg, train_videos).unwrap(),
        val: cue_dataset(&SynthConfig { seed: seed ^ 0x5eed, ..cfg.clone() }, val_videos).unwrap(),
        clip_length: cfg.length,
    }
}

fn short_optim(epochs: usize) -> OptimConfig {
    OptimConfig {
        base_lr: 3e-2,
        warmup_epochs: 0,
        total_epochs: epochs,
        clips_per_epoch: 8,
        batch_size: 4,
        ..OptimConfig::default()
    }
}

#[test]
fn one_epoch_changes_every_parameter_with_gradient() {
    let model = ToyModelConfig::benchmark(3, 8, 1, 4, TemporalBlock::default());
    let data = cue_data(1, 2, 0);
    let seed = 17;
    let init = ToyParams::init(&model, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    let loss = LossConfig::default();
    let mut grad_mass = Vec::new();
    for clip in &data.train {
        let (_, grads) = clip_loss_and_grads(&model, &init, &loss, clip).unwrap();
        grad_mass.push(grads);
    }
    let trained = train(&model, &short_optim(1), &loss, &data, seed).unwrap();
    let mut before = Vec::new();
    init.visit("", &mut |n, t| before.push((n, t.clone())));
    let mut after = Vec::new();
    trained.params.visit("", &mut |_, t| after.push(t.clone()));
    let mut checked = 0;
    for (i, ((name, b), a)) in before.iter().zip(&after).enumerate() {
        for j in 0..b.len() {
            if grad_mass.iter().any(|g| g[i].data()[j] != 0.0) {
                assert_ne!(a.data()[j], b.data()[j], "{name}[{j}] did not move");
                checked += 1;
            }
        }
    }
    assert!(checked > 100);
    assert_eq!(trained.log.len(), 1);
    assert!(trained.log[0].val_map1.is_nan());
}

#[test]
fn training_is_bitwise_deterministic() {
    let model = ToyModelConfig::benchmark(3, 8, 1, 4, TemporalBlock::default());
    let data = cue_data(2, 8, 4);
    let run = || train(&model, &short_optim(3), &LossConfig::default(), &data, 5).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.params, b.params);
    let (mut csv_a, mut csv_b) = (Vec::new(), Vec::new());
    write_metrics_csv(&mut csv_a, &a.log).unwrap();
    write_metrics_csv(&mut csv_b, &b.log).unwrap();
    assert_eq!(csv_a, csv_b);
    let c = train(&model, &short_optim(3), &LossConfig::default(), &data, 6).unwrap();
    assert_ne!(a.params, c.params);
}

#[test]
fn empty_training_set_is_an_error() {
    let model = ToyModelConfig::benchmark(3, 8, 1, 4, TemporalBlock::Gsm);
    let data = TrainData { train: Vec::new(), val: Vec::new(), clip_length: 32 };
    assert!(train(&model, &short_optim(2), &LossConfig::default(), &data, 0).is_err());
}

#[test]
fn fixed_batch_loss_decreases() {
    for block in [TemporalBlock::default(), TemporalBlock::Gsm, TemporalBlock::tsm()] {
        let model = ToyModelConfig::benchmark(3, 8, 1, 4, block.clone());
        let batch: Vec<Video> = cue_data(3, 4, 0).train;
        let mut params = ToyParams::init(&model, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let cfg = optim(3e-2, 1e-4);
        let mut flat = Vec::new();
        params.visit("", &mut |_, t| flat.push(t.clone()));
        let mut state = AdamState::zeros_like(&flat);
        let mut losses = Vec::new();
        for step in 1..=40 {
            let mut total = 0.0;
            let mut acc: Vec<Tensor> = flat.iter().map(|t| Tensor::zeros(t.shape())).collect();
            for clip in &batch {
                let (l, grads) = clip_loss_and_grads(&model, &params, &LossConfig::default(), clip).unwrap();
                total += l;
                for (a, g) in acc.iter_mut().zip(&grads) {
                    a.data_mut().iter_mut().zip(g.data()).for_each(|(a, g)| *a += g / batch.len() as f64);
                }
            }
            losses.push(total / batch.len() as f64);
            adamw_step(&mut flat, &acc, &mut state, step, 3e-2, &cfg).unwrap();
            let mut it = flat.clone().into_iter();
            params.visit_mut("", &mut |_, t| *t = it.next().unwrap());
        }
        let first: f64 = losses[..10].iter().sum::<f64>() / 10.0;
        let last: f64 = losses[30..].iter().sum::<f64>() / 10.0;
        assert!(last < first, "{block:?}: {first} -> {last}");
    }
}

#[test]
fn metrics_csv_layout() {
    let model = ToyModelConfig::benchmark(3, 4, 1, 4, TemporalBlock::Gsm);
    let out = train(&model, &short_optim(2), &LossConfig::default(), &cue_data(4, 4, 2), 0).unwrap();
    let mut buf = Vec::new();
    write_metrics_csv(&mut buf, &out.log).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "epoch,lr,train_loss,val_mAP@1,val_mAP@2");
    assert_eq!(lines.len(), 3);
    assert!(lines[2].starts_with("2,0,"));
}

#[test]
fn evaluate_model_reports_requested_tolerances() {
    let model = ToyModelConfig::benchmark(3, 4, 1, 4, TemporalBlock::Gsm);
    let params = ToyParams::init(&model, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let data = cue_data(5, 0, 3);
    let report = evaluate_model(&model, &params, &data.val, &[0, 1, 2]).unwrap();
    let maps: Vec<f64> = [0, 1, 2].iter().map(|&t| report.map_at(t).unwrap()).collect();
    assert!(maps[0] <= maps[1] && maps[1] <= maps[2]);
}

#[test]
fn experiment_overrides_and_errors() {
    let cfg = ExperimentConfig::from_json(r#"{"model.dilations": [1], "optim": {"total_epochs": 7}}"#).unwrap();
    assert_eq!(cfg.model.dilations, vec![1]);
    assert_eq!(cfg.optim.total_epochs, 7);
    assert_eq!(cfg.optim.base_lr, ExperimentConfig::default().optim.base_lr);

    let flat = cfg.to_flat_json().unwrap();
    assert_eq!(ExperimentConfig::from_json(&flat).unwrap(), cfg);

    let err = cfg.with_overrides(&[("optim.nope".into(), json!(1))]).unwrap_err();
    assert!(matches!(err, Error::Config { ref field, .. } if field == "optim.nope"), "{err}");
    let err = cfg.with_overrides(&[("model.heads".into(), json!(3))]).unwrap_err();
    assert!(matches!(err, Error::Config { .. }), "{err}");
    let err = cfg.with_overrides(&[("data.source".into(), json!("cache"))]).unwrap_err();
    assert!(matches!(err, Error::Config { ref field, .. } if field == "data.path"), "{err}");
}

#[test]
fn shift_free_control_stays_near_chance() {
    // Without any temporal mixing the class cue at t - k is invisible at t.
    let cfg = ExperimentConfig::default()
        .with_overrides(&[("model.block".into(), json!("none"))])
        .unwrap();
    let (_, dataset, outcome) = cfg.run(0, |_| {}).unwrap();
    let chance = 1.0 / dataset.class_names.len() as f64;
    let final_map = outcome.log.last().unwrap().val_map1;
    assert!(final_map <= chance + 0.10, "control mAP@1 {final_map}");
}
