//! Heads and dilations sweeps on the dilated-cue task, reduced for a quick run.
//!
//! cargo run --release --example ablation -- [seed]

use msagsm::train::ExperimentConfig;
use serde_json::json;

fn main() -> msagsm::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let base = ExperimentConfig::default().with_overrides(&[
        ("optim.total_epochs".into(), json!(10)),
        ("data.train_videos".into(), json!(256)),
    ])?;
    let sweeps = [
        ("model.heads", vec![json!(1), json!(2), json!(4)]),
        ("model.dilations", vec![json!([1]), json!([1, 2]), json!([1, 2, 3])]),
    ];
    for (key, values) in sweeps {
        println!("{key}");
        for v in values {
            let cfg = base.with_overrides(&[(key.to_string(), v.clone())])?;
            let (model, _, out) = cfg.run(seed, |_| {})?;
            let last = out.log.last().expect("at least one epoch");
            println!(
                "  {:<10} mAP@1 {:.3} mAP@2 {:.3} params {}",
                v.to_string(),
                last.val_map1,
                last.val_map2,
                model.param_count()?
            );
        }
    }
    Ok(())
}
