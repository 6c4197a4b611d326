//! Peak extraction and tolerance-based evaluation on a hand-made score track.

use msagsm::eval::{evaluate, extract_peaks, write_pr_curves_csv, EventAnnotation, PeakConfig};
use msagsm::Tensor;

fn main() -> msagsm::Result<()> {
    // Frame scores for background plus two classes; class 1 peaks near 5 and 20, class 2 near 13.
    let t = 30;
    let mut scores = Tensor::zeros(&[t, 3]);
    for f in 0..t {
        let bump = |c: f64, width: f64| (-((f as f64 - c) / width).powi(2)).exp();
        let s1 = 0.8 * bump(5.0, 1.0) + 0.6 * bump(21.0, 1.5);
        let s2 = 0.7 * bump(13.0, 1.0);
        scores.set(&[f, 1], s1 * 0.95);
        scores.set(&[f, 2], s2 * 0.95);
        scores.set(&[f, 0], 1.0 - 0.95 * (s1 + s2));
    }
    let tolerances = [0, 1, 2];
    let dets = extract_peaks(&scores, &PeakConfig::for_tolerances(&tolerances), 0)?;
    for d in &dets {
        println!("detection: frame {:>2} class {} confidence {:.3}", d.frame, d.class_id, d.confidence);
    }
    let gts = [(5, 1), (20, 1), (12, 2)]
        .map(|(frame, class_id)| EventAnnotation { video: 0, frame, class_id });
    let report = evaluate(&dets, &gts, &tolerances)?;
    for r in &report.tolerances {
        println!("mAP@{} = {:.4}", r.tolerance, r.map);
    }
    let names = vec!["bounce".to_string(), "hit".to_string()];
    println!("{}", serde_json::to_string_pretty(&report.to_json(&names))?);

    let d1 = report.tolerances.iter().find(|r| r.tolerance == 1).expect("requested");
    let curves: Vec<_> = d1.curves.iter().map(|(c, p)| (names[c - 1].clone(), p.clone())).collect();
    write_pr_curves_csv(std::io::stdout(), &curves)?;
    Ok(())
}
