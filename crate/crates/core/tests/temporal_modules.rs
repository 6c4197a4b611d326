use msagsm::temporal::{
    attention_forward, gated_shift_branch, gsm_forward, msagsm_forward, msgsm_forward, tsm_forward,
    AttentionParams, ConvParams, Msagsm, MsagsmConfig, MsagsmParams, MsgsmParams, ParamTree,
    ScaleWeights,
};
use msagsm::tensor::{grad_check, Graph, Tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

mod common;

use common::*;

fn roll(x: &Tensor, channels: std::ops::Range<usize>, offset: isize) -> Tensor {
    let s = x.shape().to_vec();
    let mut out = x.clone();
    for c in channels {
        for t in 0..s[1] {
            let src = t as isize - offset;
            for h in 0..s[2] {
                for w in 0..s[3] {
                    let v = if src >= 0 && (src as usize) < s[1] {
                        x.at(&[c, src as usize, h, w])
                    } else {
                        0.0
                    };
                    out.set(&[c, t, h, w], v);
                }
            }
        }
    }
    out
}

#[test]
fn tsm_channel_geometry() {
    let x = Tensor::uniform(&[8, 5, 2, 2], 1.0, &mut rng(1));
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let y = tsm_forward(&mut g, xv, 0.125).unwrap();
    let expect = roll(&roll(&x, 0..1, -1), 1..2, 1);
    assert_eq!(g.value(y), &expect);
}

#[test]
fn tsm_single_frame_zeroes_shifted_channels() {
    let x = Tensor::uniform(&[8, 1, 2, 2], 1.0, &mut rng(2));
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let y = tsm_forward(&mut g, xv, 0.125).unwrap();
    let y = g.value(y);
    for c in 0..8 {
        for i in 0..4 {
            let (h, w) = (i / 2, i % 2);
            let expect = if c < 2 { 0.0 } else { x.at(&[c, 0, h, w]) };
            assert_eq!(y.at(&[c, 0, h, w]), expect);
        }
    }
}

#[test]
fn tsm_needs_enough_channels() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::zeros(&[4, 3, 2, 2]));
    let err = tsm_forward(&mut g, x, 0.125).unwrap_err().to_string();
    assert!(err.contains("fraction"), "{err}");
    assert!(tsm_forward(&mut g, x, 0.25).is_ok());
}

#[test]
fn tsm_has_no_parameters() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::uniform(&[8, 4, 2, 2], 1.0, &mut rng(3)));
    let before = g.len();
    let y = tsm_forward(&mut g, x, 0.125).unwrap();
    let s = g.sum(y);
    let grads = g.backward(s).unwrap();
    // Only the input is a leaf; the gradient flows back to surviving positions.
    assert!(g.len() > before);
    let gx = grads.get(x).unwrap();
    assert_eq!(gx.at(&[0, 0, 0, 0]), 0.0);
    assert_eq!(gx.at(&[0, 1, 0, 0]), 1.0);
    assert_eq!(gx.at(&[1, 3, 0, 0]), 0.0);
    assert_eq!(gx.at(&[5, 3, 0, 0]), 1.0);
}

fn gate_with(channels: usize, weight: f64, bias: f64) -> ConvParams {
    ConvParams {
        weight: Tensor::full(&[2, channels, 3, 3, 3], weight),
        bias: Tensor::full(&[2], bias),
    }
}

#[test]
fn gsm_zero_gate_is_identity() {
    let x = Tensor::uniform(&[4, 5, 3, 3], 1.0, &mut rng(4));
    assert_eq!(eval_gsm(&x, &gate_with(4, 0.0, 0.0)), x);
}

#[test]
fn gsm_saturated_gate_adds_plain_shift() {
    let x = Tensor::uniform(&[4, 5, 3, 3], 1.0, &mut rng(5));
    let y = eval_gsm(&x, &gate_with(4, 0.0, 50.0));
    let shifted = roll(&roll(&x, 0..2, -1), 2..4, 1);
    let expect = Tensor::new(
        x.shape().to_vec(),
        x.data().iter().zip(shifted.data()).map(|(a, b)| a + b).collect(),
    )
    .unwrap();
    assert!(y.max_abs_diff(&expect).unwrap() <= 1e-12);
}

#[test]
fn gsm_rejects_odd_channels() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::zeros(&[3, 4, 2, 2]));
    let gate = gate_with(3, 0.1, 0.0).map(&mut |t| g.constant(t.clone()));
    assert!(gsm_forward(&mut g, x, &gate).is_err());
}

#[test]
fn gsm_agrees_with_single_scale_msgsm_and_oracle() {
    let mut r = rng(6);
    let cfg = MsagsmConfig::new(4, 1, vec![1]).unwrap();
    for _ in 0..10 {
        let x = Tensor::uniform(&[4, 6, 4, 4], 1.0, &mut r);
        let params = MsgsmParams::init(&cfg, &mut r);
        let gsm = eval_gsm(&x, &params.gates[0]);
        let ms = eval_msgsm(&x, &params, &[1]);
        assert!(gsm.max_abs_diff(&ms).unwrap() <= 1e-12);
        let oracle = branch_oracle(&x, &params.gates[0], 1);
        assert!(gsm.max_abs_diff(&oracle).unwrap() <= 1e-12);
    }
}

#[test]
fn attention_constant_half_map() {
    let cfg = MsagsmConfig::new(4, 2, vec![1]).unwrap();
    let mut attn = AttentionParams::init(&cfg, &mut rng(7));
    attn.visit_mut("", &mut |_, t| t.data_mut().fill(0.0));
    let x = Tensor::uniform(&[4, 3, 3, 3], 1.0, &mut rng(8));
    let y = eval_attention(&x, &attn);
    assert_eq!(y, x.map(|v| 0.5 * v));
}

#[test]
fn attention_saturated_is_identity() {
    let cfg = MsagsmConfig::new(4, 2, vec![1]).unwrap();
    let mut attn = AttentionParams::init(&cfg, &mut rng(9));
    for h in &mut attn.heads {
        h.weight.data_mut().fill(0.0);
        h.bias.data_mut().fill(50.0);
    }
    let x = Tensor::uniform(&[4, 3, 3, 3], 1.0, &mut rng(10));
    assert!(eval_attention(&x, &attn).max_abs_diff(&x).unwrap() <= 1e-12);
}

#[test]
fn attention_hand_built_half_planes() {
    // C = 2, T = 1, 2x2 frames. Channel 0 carries +10 in the left column and
    // -10 in the right; channel 1 is its mirror. Head 0 reads channel 0 and
    // head 1 reads channel 1 through 1x1 kernels, so head 0 opens the left
    // column of chunk 0 and head 1 opens the right column of chunk 1.
    let x = Tensor::new(vec![2, 1, 2, 2], vec![10.0, -10.0, 10.0, -10.0, -10.0, 10.0, -10.0, 10.0]).unwrap();
    let attn = AttentionParams {
        heads: vec![
            ConvParams {
                weight: Tensor::new(vec![1, 2, 1, 1], vec![1.0, 0.0]).unwrap(),
                bias: Tensor::zeros(&[1]),
            },
            ConvParams {
                weight: Tensor::new(vec![1, 2, 1, 1], vec![0.0, 1.0]).unwrap(),
                bias: Tensor::zeros(&[1]),
            },
        ],
    };
    let y = eval_attention(&x, &attn);
    let s = |v: f64| 1.0 / (1.0 + (-v).exp());
    let (hi, lo) = (10.0 * s(10.0), -10.0 * s(-10.0));
    let hi_neg = -10.0 * s(-10.0);
    let expect = [hi, hi_neg, hi, hi_neg, lo, hi, lo, hi];
    for (a, b) in y.data().iter().zip(expect) {
        assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
    }
    // Left column of chunk 0 passes almost unchanged; right column is suppressed.
    assert!(y.at(&[0, 0, 0, 0]) > 9.99 && y.at(&[0, 0, 0, 1]).abs() < 1e-3);
    assert!(y.at(&[1, 0, 0, 1]) > 9.99 && y.at(&[1, 0, 0, 0]).abs() < 1e-3);
}

#[test]
fn attention_rejects_indivisible_heads() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::zeros(&[4, 2, 3, 3]));
    let attn = AttentionParams {
        heads: (0..3).map(|_| ConvParams::zeros(&[1, 4, 3, 3])).collect(),
    }
    .map(&mut |t| g.constant(t.clone()));
    assert!(attention_forward(&mut g, x, &attn).is_err());
}

#[test]
fn msgsm_zero_gates_identity_for_any_logits() {
    let mut r = rng(11);
    let cfg = MsagsmConfig::new(4, 2, vec![1, 2, 3]).unwrap();
    let mut params = MsgsmParams::zeros(&cfg);
    params.scale.logits = Tensor::uniform(&[3], 3.0, &mut r);
    let x = Tensor::uniform(&[4, 7, 3, 3], 1.0, &mut r);
    assert_eq!(eval_msgsm(&x, &params, &[1, 2, 3]), x);
}

#[test]
fn msgsm_saturated_logits_select_first_scale() {
    let mut r = rng(12);
    let cfg = MsagsmConfig::new(4, 2, vec![1, 2, 3]).unwrap();
    let mut params = MsgsmParams::init(&cfg, &mut r);
    params.scale.logits = Tensor::from_vec(vec![50.0, -50.0, -50.0]);
    let x = Tensor::uniform(&[4, 7, 3, 3], 1.0, &mut r);
    let y = eval_msgsm(&x, &params, &[1, 2, 3]);
    let single = branch_oracle(&x, &params.gates[0], 1);
    assert!(y.max_abs_diff(&single).unwrap() <= 1e-12);
}

#[test]
fn msgsm_uniform_logits_average_branch_oracles() {
    let mut r = rng(13);
    let cfg = MsagsmConfig::new(4, 2, vec![1, 2, 3]).unwrap();
    for _ in 0..5 {
        let mut params = MsgsmParams::init(&cfg, &mut r);
        for gate in &mut params.gates {
            gate.bias = Tensor::uniform(&[2], 1.0, &mut r);
        }
        let x = Tensor::uniform(&[4, 8, 4, 4], 1.0, &mut r);
        let y = eval_msgsm(&x, &params, &[1, 2, 3]);
        let branches: Vec<Tensor> = [1, 2, 3]
            .iter()
            .zip(&params.gates)
            .map(|(&d, gate)| branch_oracle(&x, gate, d))
            .collect();
        let mean = Tensor::from_fn(x.shape(), |i| {
            branches.iter().map(|b| b.data()[i]).sum::<f64>() / 3.0
        });
        assert!(y.max_abs_diff(&mean).unwrap() <= 1e-12);
    }
}

#[test]
fn msgsm_rejects_bad_dilations() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::zeros(&[4, 3, 2, 2]));
    let cfg = MsagsmConfig::new(4, 1, vec![1, 3]).unwrap();
    let p = MsgsmParams::zeros(&cfg).map(&mut |t| g.constant(t.clone()));
    assert!(msgsm_forward(&mut g, x, &p, &[1, 3]).is_err());
    assert!(msgsm_forward(&mut g, x, &p, &[1, 1]).is_err());
    assert!(msgsm_forward(&mut g, x, &p, &[1]).is_err());
}

#[test]
fn gated_branch_locality() {
    // Constant gates, dilation d: output frame t depends on frames t - d, t, t + d only.
    let d = 2;
    let x = Tensor::uniform(&[4, 9, 2, 2], 1.0, &mut rng(14));
    let gate = gate_with(4, 0.0, 0.7);
    let eval = |x: &Tensor| {
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let gv = gate.map(&mut |t| g.constant(t.clone()));
        let y = gated_shift_branch(&mut g, xv, &gv, d).unwrap();
        g.value(y).clone()
    };
    let base = eval(&x);
    for probe in 0..9 {
        let mut xp = x.clone();
        for c in 0..4 {
            xp.set(&[c, probe, 1, 0], xp.at(&[c, probe, 1, 0]) + 1.0);
        }
        let y = eval(&xp);
        for t in 0..9 {
            let changed = (0..4).any(|c| y.at(&[c, t, 1, 0]) != base.at(&[c, t, 1, 0]));
            let reachable = [t as isize - d as isize, t as isize, t as isize + d as isize]
                .contains(&(probe as isize));
            assert!(!changed || reachable, "frame {t} changed by probe at {probe}");
        }
    }
}

#[test]
fn msagsm_composed_identity() {
    let mut r = rng(15);
    let cfg = MsagsmConfig::new(4, 2, vec![1, 2, 3]).unwrap();
    let mut block = Msagsm::init(cfg, &mut r).unwrap();
    for h in &mut block.params.attention.heads {
        h.weight.data_mut().fill(0.0);
        h.bias.data_mut().fill(50.0);
    }
    block.params.shift = MsgsmParams::zeros(&block.config);
    let x = Tensor::uniform(&[4, 6, 3, 3], 1.0, &mut r);
    assert!(block.apply(&x).unwrap().max_abs_diff(&x).unwrap() <= 1e-12);
}

#[test]
fn msagsm_reduces_to_gsm() {
    let mut r = rng(16);
    let cfg = MsagsmConfig::new(4, 1, vec![1]).unwrap();
    let mut block = Msagsm::init(cfg, &mut r).unwrap();
    for h in &mut block.params.attention.heads {
        h.bias.data_mut().fill(50.0);
        h.weight.data_mut().fill(0.0);
    }
    let x = Tensor::uniform(&[4, 6, 3, 3], 1.0, &mut r);
    let gsm = eval_gsm(&x, &block.params.shift.gates[0]);
    assert!(block.apply(&x).unwrap().max_abs_diff(&gsm).unwrap() <= 1e-12);
}

#[test]
fn msagsm_full_gradient_check() {
    let mut r = rng(17);
    let cfg = MsagsmConfig::new(4, 2, vec![1, 2, 3]).unwrap();
    let mut params = MsagsmParams::init(&cfg, &mut r);
    params.shift.scale.logits = Tensor::uniform(&[3], 1.0, &mut r);
    for gate in &mut params.shift.gates {
        gate.bias = Tensor::uniform(&[2], 0.5, &mut r);
    }
    let mut inputs = vec![Tensor::uniform(&[4, 6, 5, 5], 1.0, &mut r)];
    params.visit("", &mut |_, t| inputs.push(t.clone()));
    let template = params.clone();
    let err = grad_check(
        |g, vars| {
            let mut it = vars[1..].iter();
            let bound = template.map(&mut |_| *it.next().unwrap());
            msagsm_forward(g, vars[0], &cfg, &bound)
        },
        &inputs,
        1e-5,
    )
    .unwrap();
    assert!(err <= 1e-5, "{err}");
}

#[test]
fn forwards_are_pure() {
    let mut r = rng(18);
    let block = Msagsm::init(MsagsmConfig::new(4, 2, vec![1, 2]).unwrap(), &mut r).unwrap();
    let x = Tensor::uniform(&[4, 5, 3, 3], 1.0, &mut r);
    assert_eq!(block.apply(&x).unwrap(), block.apply(&x).unwrap());
}

#[test]
fn scale_weights_start_uniform() {
    let w = ScaleWeights::uniform(3).weights();
    assert!(w.iter().all(|&v| v == 1.0 / 3.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn zero_gates_identity_property(
        seed in any::<u64>(), t in 4usize..9, half in 1usize..3, scales in 1usize..4,
    ) {
        let mut r = rng(seed);
        let dilations: Vec<usize> = (1..=scales).collect();
        let cfg = MsagsmConfig::new(2 * half, 1, dilations.clone()).unwrap();
        let mut params = MsgsmParams::zeros(&cfg);
        params.scale.logits = Tensor::uniform(&[scales], 5.0, &mut r);
        let x = Tensor::uniform(&[2 * half, t, 2, 3], 100.0, &mut r);
        prop_assert_eq!(eval_msgsm(&x, &params, &dilations), x);
    }

    #[test]
    fn combination_stays_in_branch_hull(seed in any::<u64>()) {
        let mut r = rng(seed);
        let cfg = MsagsmConfig::new(4, 1, vec![1, 2, 3]).unwrap();
        let mut params = MsgsmParams::init(&cfg, &mut r);
        params.scale.logits = Tensor::uniform(&[3], 2.0, &mut r);
        let x = Tensor::uniform(&[4, 7, 3, 3], 1.0, &mut r);
        let y = eval_msgsm(&x, &params, &[1, 2, 3]);
        let branches: Vec<Tensor> = [1, 2, 3].iter().zip(&params.gates)
            .map(|(&d, gate)| branch_oracle(&x, gate, d)).collect();
        for (i, v) in y.data().iter().enumerate() {
            let lo = branches.iter().map(|b| b.data()[i]).fold(f64::INFINITY, f64::min);
            let hi = branches.iter().map(|b| b.data()[i]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(*v >= lo - 1e-12 && *v <= hi + 1e-12);
        }
    }
}
