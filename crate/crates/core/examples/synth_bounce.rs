//! Renders a bouncing-dot clip as ASCII and lists the frames labelled as bounces.

use msagsm::data::{render_bounce, synth_bounce, DotState, SynthConfig};
use msagsm::Tensor;

fn show(clip: &Tensor, frame: usize) {
    let (h, w) = (clip.shape()[2], clip.shape()[3]);
    for y in 0..h {
        let row: String = (0..w)
            .map(|x| match clip.at(&[0, frame, y, x]) {
                v if v > 0.66 => '#',
                v if v > 0.33 => '+',
                v if v > 0.0 => '.',
                _ => ' ',
            })
            .collect();
        println!("  |{row}|");
    }
}

fn main() -> msagsm::Result<()> {
    let cfg = SynthConfig { seed: 3, length: 24, ..SynthConfig::default() };
    let clip = synth_bounce(&cfg)?;
    for (t, s) in clip.trajectory.iter().enumerate().take(6) {
        println!("frame {t}: y {:.2} x {:.2} vy {:+.2}", s.y, s.x, s.vy);
        show(&clip.clip, t);
    }
    let events: Vec<usize> = (0..cfg.length).filter(|&t| clip.labels[t] == 1).collect();
    println!("random start, bounce frames: {events:?}");

    let vertical = render_bounce(&cfg, DotState { y: 0.0, x: 3.0, vy: 1.0, vx: 0.0 });
    let events: Vec<usize> = (0..cfg.length).filter(|&t| vertical.labels[t] == 1).collect();
    println!("vertical drop from the top at speed 1 (period {}): {events:?}", cfg.height - 1);
    Ok(())
}
