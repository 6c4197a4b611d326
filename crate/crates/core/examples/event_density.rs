//! Event density over sliding windows for a dense and a sparse annotation file.

use msagsm::data::{AnnotationFile, LabeledFrame};
use msagsm::eval::event_density;

fn file(id: &str, frames: &[usize]) -> AnnotationFile {
    AnnotationFile {
        video_id: id.into(),
        num_frames: 500,
        fps: 25,
        classes: vec!["hit".into()],
        events: frames.iter().map(|&frame| LabeledFrame { frame, label: "hit".into() }).collect(),
    }
}

fn main() -> msagsm::Result<()> {
    let rally: Vec<usize> = (10..480).step_by(12).collect();
    let files = [file("rally", &rally), file("sparse", &[40, 250, 260, 470])];
    println!("{:>8} {:>10} {:>10}", "window", files[0].video_id, files[1].video_id);
    for w in [25, 50, 100, 200, 500] {
        let d: Vec<f64> = files
            .iter()
            .map(|f| event_density(&f.event_frames(), w, f.num_frames))
            .collect::<msagsm::Result<_>>()?;
        println!("{w:>8} {:>10.3} {:>10.3}", d[0], d[1]);
    }
    Ok(())
}
