//! The dilated-cue benchmark: the same depth-1 toy model trained with no
//! temporal mixing, single-scale shifts and multi-scale shifts.
//!
//! cargo run --release --example train_dilated_cue -- [seed] [KEY=VALUE ...]
//!
//! Overrides use the dotted config keys, e.g. `optim.total_epochs=5`.

use std::time::Instant;

use msagsm::train::ExperimentConfig;
use serde_json::{json, Value};

fn main() -> msagsm::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let overrides: Vec<(String, Value)> = args
        .filter_map(|kv| {
            let (k, v) = kv.split_once('=')?;
            Some((k.to_string(), serde_json::from_str(v).unwrap_or_else(|_| json!(v))))
        })
        .collect();
    let base = ExperimentConfig::default().with_overrides(&overrides)?;

    let variants = [
        ("no shift", vec![("model.block".to_string(), json!("none"))]),
        ("dilations [1]", vec![("model.dilations".to_string(), json!([1]))]),
        ("dilations [1,2,3]", vec![("model.dilations".to_string(), json!([1, 2, 3]))]),
    ];
    for (name, over) in variants {
        let cfg = base.with_overrides(&over)?;
        let start = Instant::now();
        let (model, dataset, out) = cfg.run(seed, |m| {
            if m.epoch % 5 == 0 {
                println!(
                    "{name:>18} epoch {:>2} lr {:.5} loss {:.4} mAP@1 {:.3} mAP@2 {:.3}",
                    m.epoch, m.lr, m.train_loss, m.val_map1, m.val_map2
                );
            }
        })?;
        let last = out.log.last().expect("at least one epoch");
        println!(
            "{name:>18}: final mAP@1 {:.3} (chance {:.2}), {} params, {:.1}s",
            last.val_map1,
            1.0 / dataset.class_names.len() as f64,
            model.param_count()?,
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
