//! Finite-difference gradient suites, one per module family.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::temporal::{
    attention_forward, gsm_forward, msagsm_forward, msgsm_forward, AttentionParams, ConvParams,
    MsagsmConfig, MsagsmParams, MsgsmParams, ParamTree, ScaleWeights,
};
use crate::tensor::{GradCheck, Graph, Padding, Tensor, Var};

/// Relative-error bound every group must meet.
pub const GRADCHECK_TOLERANCE: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckModule {
    Tensor,
    Gsm,
    Msgsm,
    Attention,
    Msagsm,
    Loss,
}

impl CheckModule {
    pub const ALL: [CheckModule; 6] = [
        CheckModule::Tensor,
        CheckModule::Gsm,
        CheckModule::Msgsm,
        CheckModule::Attention,
        CheckModule::Msagsm,
        CheckModule::Loss,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckModule::Tensor => "tensor",
            CheckModule::Gsm => "gsm",
            CheckModule::Msgsm => "msgsm",
            CheckModule::Attention => "attention",
            CheckModule::Msagsm => "msagsm",
            CheckModule::Loss => "loss",
        }
    }
}

impl fmt::Display for CheckModule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CheckModule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CheckModule::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::invalid(
                    "gradcheck",
                    format!("unknown module `{s}`; expected one of tensor, gsm, msgsm, attention, msagsm, loss"),
                )
            })
    }
}

/// Max relative error of one parameter group.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupError {
    pub group: String,
    pub max_rel_error: f64,
}

impl GroupError {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= GRADCHECK_TOLERANCE
    }
}

type Build = Box<dyn Fn(&mut Graph, &[Var]) -> Result<Var>>;

fn uniform(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::uniform(shape, 1.0, rng)
}

fn single(check: &GradCheck, group: &str, f: Build, inputs: Vec<Tensor>) -> Result<GroupError> {
    let r = check.run(f, &inputs)?;
    Ok(GroupError {
        group: group.into(),
        max_rel_error: r.max_rel_error,
    })
}

/// Checks `input` plus every named tensor of a parameter tree; `build` gets the
/// input var and the parameter vars in visiting order.
fn per_group<P: ParamTree>(
    check: &GradCheck,
    x: Tensor,
    params: &P,
    build: impl Fn(&mut Graph, Var, &[Var]) -> Result<Var>,
) -> Result<Vec<GroupError>> {
    let mut names = vec!["input".to_string()];
    let mut inputs = vec![x];
    params.visit("", &mut |n, t| {
        names.push(n);
        inputs.push(t.clone());
    });
    let report = check.run(|g, v| build(g, v[0], &v[1..]), &inputs)?;
    Ok(names
        .into_iter()
        .zip(report.per_input)
        .map(|(group, max_rel_error)| GroupError { group, max_rel_error })
        .collect())
}

fn rebuild<T: Clone>(template: &MsagsmParams, vars: &[T]) -> MsagsmParams<T> {
    let mut it = vars.iter();
    template.map(&mut |_| it.next().expect("one var per tensor").clone())
}

fn tensor_suite(check: &GradCheck, rng: &mut ChaCha8Rng) -> Result<Vec<GroupError>> {
    let mut out = Vec::new();
    let cases: Vec<(&str, Build, Vec<Tensor>)> = vec![
        (
            "conv2d",
            Box::new(|g, v| g.conv2d(v[0], v[1], v[2], Padding::Same)),
            vec![uniform(&[2, 3, 4, 4], rng), uniform(&[3, 2, 3, 3], rng), uniform(&[3], rng)],
        ),
        (
            "conv3d",
            Box::new(|g, v| g.conv3d(v[0], v[1], v[2], 2, Padding::Same)),
            vec![uniform(&[2, 6, 3, 3], rng), uniform(&[2, 2, 3, 3, 3], rng), uniform(&[2], rng)],
        ),
        ("roll_time", Box::new(|g, v| g.roll_time(v[0], 2)), vec![uniform(&[2, 5, 2, 2], rng)]),
        ("tanh", Box::new(|g, v| Ok(g.tanh(v[0]))), vec![uniform(&[2, 3, 2, 2], rng)]),
        ("sigmoid", Box::new(|g, v| Ok(g.sigmoid(v[0]))), vec![uniform(&[2, 3, 2, 2], rng)]),
        ("add", Box::new(|g, v| g.add(v[0], v[1])), vec![uniform(&[2, 3], rng), uniform(&[2, 3], rng)]),
        ("mul", Box::new(|g, v| g.mul(v[0], v[1])), vec![uniform(&[2, 3], rng), uniform(&[2, 3], rng)]),
        (
            "mul_channel_broadcast",
            Box::new(|g, v| g.mul_channel_broadcast(v[0], v[1])),
            vec![uniform(&[3, 2, 2, 2], rng), uniform(&[1, 2, 2, 2], rng)],
        ),
        (
            "scale_by_entry",
            Box::new(|g, v| g.scale_by_entry(v[0], v[1], 1)),
            vec![uniform(&[2, 2, 2, 2], rng), uniform(&[3], rng)],
        ),
        ("softmax", Box::new(|g, v| g.softmax(v[0])), vec![uniform(&[4], rng)]),
        ("channel_slice", Box::new(|g, v| g.channel_slice(v[0], 1, 2)), vec![uniform(&[4, 2, 2, 2], rng)]),
        (
            "concat_channels",
            Box::new(|g, v| g.concat_channels(&[v[0], v[1]])),
            vec![uniform(&[1, 2, 2, 2], rng), uniform(&[2, 2, 2, 2], rng)],
        ),
        ("frame_pool", Box::new(|g, v| g.frame_pool(v[0])), vec![uniform(&[3, 4, 2, 3], rng)]),
        (
            "linear",
            Box::new(|g, v| g.linear(v[0], v[1], v[2])),
            vec![uniform(&[4, 3], rng), uniform(&[5, 3], rng), uniform(&[5], rng)],
        ),
    ];
    for (name, f, inputs) in cases {
        out.push(single(check, name, f, inputs)?);
    }
    Ok(out)
}

fn loss_suite(check: &GradCheck, rng: &mut ChaCha8Rng) -> Result<Vec<GroupError>> {
    let (t, k) = (6, 4);
    let labels: Vec<usize> = (0..t).map(|_| rng.random_range(0..k)).collect();
    let weights: Vec<f64> = labels.iter().map(|&l| if l == 0 { 1.0 } else { 5.0 }).collect();
    let logits = Tensor::uniform(&[t, k], 2.0, rng);
    Ok(vec![single(
        check,
        "logits",
        Box::new(move |g, v| g.weighted_cross_entropy(v[0], &labels, &weights)),
        vec![logits],
    )?])
}

/// Runs one suite with inputs drawn from `seed`.
pub fn run_gradcheck(module: CheckModule, seed: u64, check: &GradCheck) -> Result<Vec<GroupError>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match module {
        CheckModule::Tensor => tensor_suite(check, &mut rng),
        CheckModule::Loss => loss_suite(check, &mut rng),
        CheckModule::Gsm => {
            let cfg = MsagsmConfig::new(4, 1, vec![1])?;
            let x = uniform(&[4, 5, 4, 4], &mut rng);
            let gate = MsgsmParams::init(&cfg, &mut rng).gates.remove(0);
            per_group(check, x, &gate, |g, x, v| {
                gsm_forward(g, x, &ConvParams { weight: v[0], bias: v[1] })
            })
        }
        CheckModule::Msgsm => {
            let cfg = MsagsmConfig::new(4, 1, vec![1, 2])?;
            let x = uniform(&[4, 6, 3, 3], &mut rng);
            let mut p = MsgsmParams::init(&cfg, &mut rng);
            p.scale = ScaleWeights {
                logits: uniform(&[2], &mut rng),
            };
            per_group(check, x, &p, |g, x, v| {
                let mut it = v.iter();
                let bound = p.map(&mut |_| *it.next().expect("one var per tensor"));
                msgsm_forward(g, x, &bound, &cfg.dilations)
            })
        }
        CheckModule::Attention => {
            let cfg = MsagsmConfig::new(4, 2, vec![1])?;
            let x = uniform(&[4, 3, 4, 4], &mut rng);
            let p = AttentionParams::init(&cfg, &mut rng);
            per_group(check, x, &p, |g, x, v| {
                let mut it = v.iter();
                attention_forward(g, x, &p.map(&mut |_| *it.next().expect("one var per tensor")))
            })
        }
        CheckModule::Msagsm => {
            let cfg = MsagsmConfig::new(4, 2, vec![1, 2, 3])?;
            let x = uniform(&[4, 6, 5, 5], &mut rng);
            let mut p = MsagsmParams::init(&cfg, &mut rng);
            p.shift.scale = ScaleWeights {
                logits: uniform(&[3], &mut rng),
            };
            per_group(check, x, &p, |g, x, v| msagsm_forward(g, x, &cfg, &rebuild(&p, v)))
        }
    }
}
