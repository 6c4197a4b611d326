//! Parameter budgets of the reference backbone with each temporal block.

use msagsm::train::{TemporalBlock, ToyModelConfig};

fn main() -> msagsm::Result<()> {
    let classes = 8;
    let gsm = ToyModelConfig::reference_backbone(classes, TemporalBlock::Gsm).param_count()?;
    let blocks = [
        ("none", TemporalBlock::None),
        ("tsm", TemporalBlock::tsm()),
        ("gsm", TemporalBlock::Gsm),
        ("msagsm h1 [1]", TemporalBlock::Msagsm { heads: 1, dilations: vec![1] }),
        ("msagsm h2 [1,2,3]", TemporalBlock::default()),
        ("msagsm h4 [1,2,3]", TemporalBlock::Msagsm { heads: 4, dilations: vec![1, 2, 3] }),
        ("msagsm h2 [1,2,3,4,5]", TemporalBlock::Msagsm { heads: 2, dilations: vec![1, 2, 3, 4, 5] }),
    ];
    println!("{:<24} {:>10} {:>10} {:>9}", "block", "total", "temporal", "vs gsm");
    for (name, block) in blocks {
        let cfg = ToyModelConfig::reference_backbone(classes, block);
        let total = cfg.param_count()?;
        let delta = total as f64 - gsm as f64;
        println!(
            "{name:<24} {total:>10} {:>10} {:>+8.2}%",
            cfg.temporal_param_count()?,
            100.0 * delta / total as f64
        );
    }
    Ok(())
}
