//! Runs one MSAGSM block on a synthetic clip, then backpropagates through it.

use msagsm::data::{synth_dilated_cue, SynthConfig};
use msagsm::temporal::{gsm_param_count, Msagsm, MsagsmConfig, MsgsmParams};
use msagsm::{Graph, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> msagsm::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    // Four channels: the three colour planes plus their mean.
    let clip = synth_dilated_cue(&SynthConfig::default())?.clip;
    let [_, t, h, w] = <[usize; 4]>::try_from(clip.shape()).expect("rank 4");
    let mut data = clip.data().to_vec();
    let mean: Vec<f64> = (0..t * h * w)
        .map(|i| (0..3).map(|c| clip.data()[c * t * h * w + i]).sum::<f64>() / 3.0)
        .collect();
    data.extend(mean);
    let x = Tensor::new(vec![4, t, h, w], data)?;

    let config = MsagsmConfig::new(4, 2, vec![1, 2, 3])?;
    let block = Msagsm::init(config.clone(), &mut rng)?;
    println!("block: {} params (GSM at the same width: {})", block.param_count(), gsm_param_count(4, config.gate_kernel));
    println!("scale weights: {:?}", block.params.shift.scale.weights());

    let y = block.apply(&x)?;
    println!("output shape {:?}, max |y - x| = {:.4}", y.shape(), y.max_abs_diff(&x).unwrap_or(0.0));

    // Saturated attention passes features through; zero gates add no shifted term.
    let mut silent = block.clone();
    for head in &mut silent.params.attention.heads {
        head.weight.data_mut().fill(0.0);
        head.bias.data_mut().fill(50.0);
    }
    silent.params.shift = MsgsmParams::zeros(&config);
    let residual = silent.apply(&x)?.max_abs_diff(&x).unwrap_or(0.0);
    println!("saturated attention + zero gates: max |y - x| = {residual:.1e}");

    let mut g = Graph::new();
    let xv = g.leaf(x.clone());
    let (yv, params) = block.forward(&mut g, xv)?;
    let loss = g.sum(yv);
    let grads = g.backward(loss)?;
    let gx = grads.get_or_zeros(xv, &x);
    let glogits = grads.get_or_zeros(params.shift.scale.logits, &block.params.shift.scale.logits);
    println!("|d sum(y) / dx|_max = {:.4}", gx.data().iter().fold(0.0f64, |m, v| m.max(v.abs())));
    println!("d sum(y) / d scale logits = {:?}", glogits.data());
    Ok(())
}
