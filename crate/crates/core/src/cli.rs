//! Command-line front end. Exit codes: 0 success, 1 check failed, 2 usage or config error.

use std::collections::HashMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::Value;

use crate::checks::{run_gradcheck, CheckModule, GRADCHECK_TOLERANCE};
use crate::data::{
    load_annotations, save_annotations, save_clip, synth_bounce, synth_dilated_cue, AnnotationFile,
    LabeledFrame, SynthConfig,
};
use crate::error::{Error, Result};
use crate::eval::{
    event_density, evaluate, read_detections_csv, write_pr_curves_csv, Detection, EventAnnotation,
};
use crate::temporal::ParamTree;
use crate::tensor::GradCheck;
use crate::train::{write_metrics_csv, ExperimentConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "msagsm", version, about = "Multi-scale attention gate shift toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SynthKind {
    Cue,
    Bounce,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AblationAxis {
    Heads,
    Dilations,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compare analytic and finite-difference gradients of one module family.
    Gradcheck {
        /// tensor, gsm, msgsm, attention, msagsm or loss.
        #[arg(long)]
        module: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Offsets every analytic gradient to exercise the failure path.
        #[arg(long, hide = true)]
        corrupt_gradient: bool,
    },
    /// Train the toy spotting model and write a checkpoint plus metrics CSV.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Dotted-key override, e.g. `optim.total_epochs=5`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Write synthetic clips and annotation files.
    Synth {
        #[arg(long, value_enum, default_value = "cue")]
        kind: SynthKind,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        count: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Score detections against annotations at each tolerance.
    Eval {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long, required = true)]
        annotations: Vec<PathBuf>,
        #[arg(long = "delta")]
        deltas: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Average number of events per sliding window.
    Density {
        #[arg(long, required = true)]
        annotations: Vec<PathBuf>,
        #[arg(long = "window", required = true)]
        windows: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one variant per value along an axis and tabulate the results.
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        axis: AblationAxis,
        /// Repeatable; `;` also separates values. Dilation lists use commas.
        #[arg(long = "values", required = true)]
        values: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

enum Failure {
    Usage(Error),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Usage(e)
    }
}

type CmdResult = std::result::Result<(), Failure>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(Failure::Check(msg)) => {
            let _ = writeln!(err, "check failed: {msg}");
            EXIT_CHECK_FAILED
        }
        Err(Failure::Usage(e)) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_USAGE
        }
    }
}

fn execute(cmd: Command, out: &mut dyn Write) -> CmdResult {
    match cmd {
        Command::Gradcheck { module, seed, corrupt_gradient } => cmd_gradcheck(&module, seed, corrupt_gradient, out),
        Command::Train { config, seed, out: dir, overrides } => cmd_train(config.as_deref(), &overrides, seed, &dir, out),
        Command::Synth { kind, seed, out: dir, count, config, overrides } => {
            cmd_synth(kind, seed, count, config.as_deref(), &overrides, &dir, out)
        }
        Command::Eval { detections, annotations, deltas, out: dir } => cmd_eval(&detections, &annotations, &deltas, &dir, out),
        Command::Density { annotations, windows, out: dir } => cmd_density(&annotations, &windows, dir.as_deref(), out),
        Command::Ablate { config, axis, values, seed, out: dir, overrides } => {
            cmd_ablate(config.as_deref(), &overrides, axis, &values, seed, &dir, out)
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

fn say(out: &mut dyn Write, text: std::fmt::Arguments<'_>) -> Result<()> {
    out.write_fmt(text).map_err(io_err(Path::new("<stdout>")))?;
    out.write_all(b"\n").map_err(io_err(Path::new("<stdout>")))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(io_err(path))
}

/// `key=value` with the value parsed as JSON, or taken as a string when that fails.
fn parse_overrides(items: &[String]) -> Result<Vec<(String, Value)>> {
    items
        .iter()
        .map(|item| {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::config(item.clone(), "expected KEY=VALUE"))?;
            let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
            Ok((k.trim().to_string(), value))
        })
        .collect()
}

fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig> {
    let base = match path {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    base.with_overrides(&parse_overrides(overrides)?)
}

fn cmd_gradcheck(module: &str, seed: u64, corrupt: bool, out: &mut dyn Write) -> CmdResult {
    let module: CheckModule = module.parse()?;
    let check = GradCheck {
        analytic_perturbation: if corrupt { 1e-3 } else { 0.0 },
        ..GradCheck::default()
    };
    let groups = run_gradcheck(module, seed, &check)?;
    let mut worst = 0.0f64;
    for g in &groups {
        worst = worst.max(g.max_rel_error);
        say(out, format_args!("{:<40} {:.3e} {}", g.group, g.max_rel_error, if g.passed() { "ok" } else { "FAIL" }))?;
    }
    say(out, format_args!("{module}: max relative error {worst:.3e} (tolerance {GRADCHECK_TOLERANCE:e})"))?;
    if groups.iter().all(|g| g.passed()) {
        Ok(())
    } else {
        Err(Failure::Check(format!("{module} gradient error {worst:.3e} exceeds {GRADCHECK_TOLERANCE:e}")))
    }
}

fn cmd_train(config: Option<&Path>, overrides: &[String], seed: u64, dir: &Path, out: &mut dyn Write) -> CmdResult {
    let cfg = load_config(config, overrides)?;
    let (_, _, outcome) = cfg.run(seed, |m| {
        let _ = writeln!(
            out,
            "epoch {:>3} lr {:.6} loss {:.6} val mAP@1 {:.4} mAP@2 {:.4}",
            m.epoch, m.lr, m.train_loss, m.val_map1, m.val_map2
        );
    })?;
    create_dir(dir)?;
    outcome.params.to_param_set().save(&dir.join("checkpoint.bin"))?;
    let mut csv = Vec::new();
    write_metrics_csv(&mut csv, &outcome.log)?;
    write_file(&dir.join("metrics.csv"), &csv)?;
    write_file(&dir.join("config.json"), cfg.to_flat_json()?.as_bytes())?;
    say(out, format_args!("wrote {}", dir.display()))?;
    Ok(())
}

fn cmd_synth(
    kind: SynthKind,
    seed: u64,
    count: usize,
    config: Option<&Path>,
    overrides: &[String],
    dir: &Path,
    out: &mut dyn Write,
) -> CmdResult {
    let base = load_config(config, overrides)?.data.synth;
    create_dir(dir)?;
    for i in 0..count {
        let cfg = SynthConfig {
            seed: seed.wrapping_add(i as u64),
            ..base.clone()
        };
        let (clip, classes) = match kind {
            SynthKind::Cue => (synth_dilated_cue(&cfg)?, (1..=cfg.num_classes).map(|k| format!("cue{k}")).collect::<Vec<_>>()),
            SynthKind::Bounce => (synth_bounce(&cfg)?, vec!["bounce".to_string()]),
        };
        let name = format!("{}_{i:04}", match kind {
            SynthKind::Cue => "cue",
            SynthKind::Bounce => "bounce",
        });
        let ann = AnnotationFile {
            video_id: name.clone(),
            num_frames: cfg.length,
            fps: 25,
            events: clip
                .labels
                .iter()
                .enumerate()
                .filter(|(_, &l)| l > 0)
                .map(|(frame, &l)| LabeledFrame {
                    frame,
                    label: classes[l - 1].clone(),
                })
                .collect(),
            classes,
        };
        save_clip(&clip.clip, &dir.join(format!("{name}.clip")))?;
        save_annotations(&ann, &dir.join(format!("{name}.json")))?;
    }
    say(out, format_args!("wrote {count} clips to {}", dir.display()))?;
    Ok(())
}

fn load_annotation_set(paths: &[PathBuf]) -> Result<(Vec<AnnotationFile>, Vec<String>)> {
    let files: Vec<AnnotationFile> = paths.iter().map(|p| load_annotations(p)).collect::<Result<_>>()?;
    let classes = files.first().map(|f| f.classes.clone()).unwrap_or_default();
    for (f, p) in files.iter().zip(paths) {
        if f.classes != classes {
            return Err(Error::Annotation {
                record: p.display().to_string(),
                detail: format!("classes {:?} differ from {:?}", f.classes, classes),
            });
        }
    }
    Ok((files, classes))
}

fn cmd_eval(det_path: &Path, ann_paths: &[PathBuf], deltas: &[usize], dir: &Path, out: &mut dyn Write) -> CmdResult {
    let deltas = if deltas.is_empty() { vec![0, 1, 2] } else { deltas.to_vec() };
    let (files, classes) = load_annotation_set(ann_paths)?;
    let index: HashMap<&str, usize> = files.iter().enumerate().map(|(i, f)| (f.video_id.as_str(), i)).collect();
    if index.len() != files.len() {
        return Err(Error::invalid("eval", "duplicate video_id across annotation files").into());
    }
    let gts: Vec<EventAnnotation> = files.iter().enumerate().flat_map(|(i, f)| f.event_annotations(i)).collect();
    let reader = fs::File::open(det_path).map_err(io_err(det_path))?;
    let mut dets = Vec::new();
    for (row, r) in read_detections_csv(reader)?.into_iter().enumerate() {
        let record = format!("{} row {}", det_path.display(), row + 1);
        let video = *index.get(r.video_id.as_str()).ok_or_else(|| Error::Annotation {
            record: record.clone(),
            detail: format!("unknown video_id `{}`", r.video_id),
        })?;
        let class_id = files[video].class_id(&r.class).ok_or_else(|| Error::Annotation {
            record: record.clone(),
            detail: format!("class `{}` is not in the annotation vocabulary", r.class),
        })?;
        if r.frame >= files[video].num_frames {
            return Err(Error::Annotation {
                record,
                detail: format!("frame {} outside {} frames", r.frame, files[video].num_frames),
            }
            .into());
        }
        dets.push(Detection {
            video,
            frame: r.frame,
            class_id,
            confidence: r.confidence,
        });
    }
    let report = evaluate(&dets, &gts, &deltas)?;
    create_dir(dir)?;
    let json = serde_json::to_string_pretty(&report.to_json(&classes)).map_err(Error::from)?;
    write_file(&dir.join("report.json"), json.as_bytes())?;
    for t in &report.tolerances {
        say(out, format_args!("mAP@{} = {:.6}", t.tolerance, t.map))?;
        let curves: Vec<(String, Vec<_>)> = t
            .curves
            .iter()
            .map(|(c, pts)| (classes[c - 1].clone(), pts.clone()))
            .collect();
        let mut buf = Vec::new();
        write_pr_curves_csv(&mut buf, &curves)?;
        write_file(&dir.join(format!("pr_curve_d{}.csv", t.tolerance)), &buf)?;
    }
    Ok(())
}

fn cmd_density(ann_paths: &[PathBuf], windows: &[usize], dir: Option<&Path>, out: &mut dyn Write) -> CmdResult {
    let files: Vec<AnnotationFile> = ann_paths.iter().map(|p| load_annotations(p)).collect::<Result<_>>()?;
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["window", "density"]).map_err(Error::from)?;
    for &w in windows {
        let mut total = 0.0;
        for f in &files {
            total += event_density(&f.event_frames(), w, f.num_frames).map_err(|_| {
                Error::config("window", format!("window {w} exceeds {} frames of `{}`", f.num_frames, f.video_id))
            })?;
        }
        wtr.write_record([w.to_string(), (total / files.len() as f64).to_string()])
            .map_err(Error::from)?;
    }
    let bytes = wtr.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    out.write_all(&bytes).map_err(io_err(Path::new("<stdout>")))?;
    if let Some(dir) = dir {
        create_dir(dir)?;
        write_file(&dir.join("density.csv"), &bytes)?;
    }
    Ok(())
}

fn parse_axis_values(axis: AblationAxis, raw: &[String]) -> Result<Vec<(String, Value)>> {
    let items: Vec<&str> = raw
        .iter()
        .flat_map(|s| s.split(';'))
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    let items: Vec<String> = match axis {
        AblationAxis::Heads => items.iter().flat_map(|s| s.split(',')).map(|s| s.trim().to_string()).collect(),
        AblationAxis::Dilations => items.iter().map(|s| s.to_string()).collect(),
    };
    items
        .into_iter()
        .map(|item| {
            let bad = || Error::config("values", format!("cannot parse `{item}`"));
            match axis {
                AblationAxis::Heads => {
                    let h: usize = item.parse().map_err(|_| bad())?;
                    Ok((h.to_string(), Value::from(h)))
                }
                AblationAxis::Dilations => {
                    let list = item
                        .trim_matches(|c| c == '[' || c == ']')
                        .split(',')
                        .map(|d| d.trim().parse::<usize>().map_err(|_| bad()))
                        .collect::<Result<Vec<_>>>()?;
                    let label = format!("[{}]", list.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(","));
                    Ok((label, Value::from(list)))
                }
            }
        })
        .collect()
}

fn cmd_ablate(
    config: Option<&Path>,
    overrides: &[String],
    axis: AblationAxis,
    values: &[String],
    seed: u64,
    dir: &Path,
    out: &mut dyn Write,
) -> CmdResult {
    let base = load_config(config, overrides)?;
    let key = match axis {
        AblationAxis::Heads => "model.heads",
        AblationAxis::Dilations => "model.dilations",
    };
    let variants: Vec<(String, ExperimentConfig)> = parse_axis_values(axis, values)?
        .into_iter()
        .map(|(label, v)| Ok((label, base.with_overrides(&[(key.to_string(), v)])?)))
        .collect::<Result<_>>()?;
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["value", "mAP@1", "mAP@2", "params"]).map_err(Error::from)?;
    for (label, cfg) in variants {
        let (model, _, outcome) = cfg.run(seed, |_| {})?;
        let last = outcome.log.last().expect("at least one epoch");
        let params = model.param_count()?;
        say(out, format_args!("{key}={label}: mAP@1 {:.4} mAP@2 {:.4} params {params}", last.val_map1, last.val_map2))?;
        wtr.write_record([label, last.val_map1.to_string(), last.val_map2.to_string(), params.to_string()])
            .map_err(Error::from)?;
    }
    let bytes = wtr.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    create_dir(dir)?;
    write_file(&dir.join("ablation.csv"), &bytes)?;
    Ok(())
}
