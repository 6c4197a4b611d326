//! Writes a small cached dataset, reads it back and cuts training clips from it.

use msagsm::data::{
    load_annotations, load_clip, sample_clips, save_annotations, save_clip, synth_dilated_cue,
    AnnotationFile, LabeledFrame, SampleMode, SynthConfig, Video,
};

fn main() -> msagsm::Result<()> {
    let dir = std::env::temp_dir().join("msagsm-data-pipeline");
    std::fs::create_dir_all(&dir).map_err(|e| msagsm::Error::Io { path: dir.clone(), source: e })?;
    let classes: Vec<String> = (1..=4).map(|k| format!("cue{k}")).collect();

    for i in 0..3u64 {
        let cfg = SynthConfig { seed: i, length: 64, ..SynthConfig::default() };
        let clip = synth_dilated_cue(&cfg)?;
        let ann = AnnotationFile {
            video_id: format!("video{i}"),
            num_frames: cfg.length,
            fps: 25,
            classes: classes.clone(),
            events: clip
                .labels
                .iter()
                .enumerate()
                .filter(|(_, &l)| l > 0)
                .map(|(frame, &l)| LabeledFrame { frame, label: classes[l - 1].clone() })
                .collect(),
        };
        save_clip(&clip.clip, &dir.join(format!("video{i}.clip")))?;
        save_annotations(&ann, &dir.join(format!("video{i}.json")))?;
    }

    let mut videos = Vec::new();
    for i in 0..3 {
        let ann = load_annotations(&dir.join(format!("video{i}.json")))?;
        let clip = load_clip(&dir.join(format!("video{i}.clip")))?;
        println!("{}: {} frames, events at {:?}", ann.video_id, ann.num_frames, ann.event_frames());
        videos.push(Video::new(clip, ann.frame_labels())?);
    }

    let tiles = sample_clips(&videos, 32, SampleMode::Sequential)?.count();
    println!("sequential tiling of length 32: {tiles} clips");
    for clip in sample_clips(&videos, 32, SampleMode::Random { seed: 3, count: 4 })? {
        let clip = clip?;
        let events: Vec<usize> = (0..32).filter(|&i| clip.data.labels[i] > 0).map(|i| clip.start + i).collect();
        println!("random clip from video {} at {:>2}: events at absolute frames {events:?}", clip.video, clip.start);
    }
    Ok(())
}
