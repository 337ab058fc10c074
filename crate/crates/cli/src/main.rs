use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{info, LevelFilter};
use serde_json::json;

use mmbio_core::backend::{fingerprint_trace, iris_trace, Backend};
use mmbio_core::config::RunConfig;
use mmbio_core::harness::{dataset_images, enroll, equivalence, evaluate, verify, write_artifacts};
use mmbio_core::imgio::{load_gray, read_template, save_gray, write_template};
use mmbio_core::synth::{write_dataset, DatasetSpec};
use mmbio_core::{DatasetIndex, Error, GrayImage};

#[derive(Parser, Debug)]
#[command(name = "mmbio", version, about = "Fingerprint + iris multimodal verification")]
struct Cli {
    /// Flat `module.key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// reference | hardware-model
    #[arg(long, global = true)]
    backend: Option<Backend>,
    /// Override one key, e.g. `--set fusion.threshold=0.6`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// -v info, -vv debug.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build templates for one or every subject of a dataset.
    Enroll {
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Directory receiving `<subject>.mbt` files.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        subject: Option<String>,
    },
    /// Verify a probe pair against a template; prints the decision as JSON.
    Verify {
        #[arg(long)]
        template: PathBuf,
        #[arg(long)]
        fingerprint: PathBuf,
        #[arg(long)]
        iris: PathBuf,
    },
    /// FAR / FRR / EER over a dataset, with CSV, JSON and SVG artifacts.
    Evaluate {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump the intermediate images of one fingerprint or eye image.
    Segment {
        #[arg(long, required_unless_present = "iris", conflicts_with = "iris")]
        fingerprint: Option<PathBuf>,
        #[arg(long)]
        iris: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Stage report JSON path (hardware-model backend); defaults to `<out>/stages.json`.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Compare the reference and hardware-model backends on a dataset.
    Equiv {
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// JSON report path.
        #[arg(long)]
        report: PathBuf,
    },
    /// Write a synthetic multimodal dataset with ground truth.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        subjects: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Print the effective configuration.
    Config,
}

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_PIPELINE: u8 = 3;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Stage { source, .. } => exit_code(source),
        Error::Config(_) | Error::Calibration { .. } => EXIT_USAGE,
        Error::Io { .. }
        | Error::UnsupportedFormat { .. }
        | Error::TemplateVersion { .. }
        | Error::TemplateTruncated(_)
        | Error::TemplateChecksum { .. }
        | Error::TemplateInvalid(_)
        | Error::Dataset(_)
        | Error::Enrollment(_)
        | Error::InvalidImage(_) => EXIT_DATA,
        _ => EXIT_PIPELINE,
    }
}

fn load_config(cli: &Cli) -> mmbio_core::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for kv in &cli.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(b) = cli.backend {
        cfg.backend = b;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn dataset_root(arg: &Option<PathBuf>, cfg: &RunConfig) -> mmbio_core::Result<PathBuf> {
    arg.clone()
        .or_else(|| cfg.dataset.clone())
        .ok_or_else(|| Error::Config("no dataset: pass --dataset or set run.dataset".into()))
}

fn create_dir(dir: &Path) -> mmbio_core::Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> mmbio_core::Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn scaled(img: &GrayImage, factor: u8) -> GrayImage {
    GrayImage::from_fn(img.width(), img.height(), |x, y| img.get(x, y).saturating_mul(factor))
}

fn run(cli: &Cli) -> mmbio_core::Result<()> {
    let cfg = load_config(cli)?;
    let backend = cfg.backend;
    match &cli.command {
        Command::Enroll { dataset, out, subject } => {
            let index = DatasetIndex::load(dataset_root(dataset, &cfg)?)?;
            let subjects: Vec<_> = match subject {
                Some(id) => vec![index
                    .subject(id)
                    .ok_or_else(|| Error::Dataset(format!("no subject `{id}` in dataset")))?],
                None => index.subjects.iter().collect(),
            };
            create_dir(out)?;
            for s in subjects {
                let record = enroll(s, &cfg, backend)?;
                let path = out.join(format!("{}.mbt", s.id));
                write_template(&record, &path)?;
                println!(
                    "{}",
                    json!({
                        "subject": s.id,
                        "template": path,
                        "minutiae": record.fingerprint.len(),
                        "iris_valid_samples": record.iris.valid_count(),
                    })
                );
            }
        }
        Command::Verify {
            template,
            fingerprint,
            iris,
        } => {
            let record = read_template(template)?;
            let v = verify(fingerprint, iris, &record, &cfg, backend);
            println!("{}", serde_json::to_string(&v).expect("serializable"));
        }
        Command::Evaluate { dataset, out } => {
            let index = DatasetIndex::load(dataset_root(dataset, &cfg)?)?;
            let eval = evaluate(&index, &cfg, backend)?;
            write_artifacts(&eval, out)?;
            println!(
                "{}",
                json!({
                    "backend": backend,
                    "subjects": eval.subjects.len(),
                    "genuine_trials": eval.genuine_trials,
                    "impostor_trials": eval.impostor_trials,
                    "eer": {
                        "fingerprint": eval.fingerprint.eer,
                        "iris": eval.iris.eer,
                        "fused": eval.fused.eer,
                    },
                    "at_threshold": {
                        "threshold": cfg.fusion.threshold,
                        "far": eval.fused.far_at_threshold,
                        "frr": eval.fused.frr_at_threshold,
                    },
                    "artifacts": out,
                })
            );
        }
        Command::Segment {
            fingerprint,
            iris,
            out,
            report,
        } => {
            create_dir(out)?;
            let report = report.clone().unwrap_or_else(|| out.join("stages.json"));
            if let Some(path) = fingerprint {
                let t = fingerprint_trace(&load_gray(path)?, &cfg, backend)?;
                let field = GrayImage::new(
                    t.field.width,
                    t.field.height,
                    t.field
                        .theta
                        .iter()
                        .map(|&a| (a / std::f64::consts::PI * 255.0).round() as u8)
                        .collect(),
                )?;
                for (name, img) in [
                    ("normalized", t.normalized.clone()),
                    ("orientation", field),
                    ("filtered", t.filtered.clone()),
                    ("binary", scaled(&t.binary, 255)),
                    ("skeleton", scaled(&t.skeleton, 255)),
                ] {
                    save_gray(&img, out.join(format!("{name}.pgm")))?;
                }
                write_json(&out.join("minutiae.json"), &t.minutiae)?;
                if let Some(run) = &t.run {
                    write_json(&report, &run.reports)?;
                }
                println!("{}", json!({ "minutiae": t.minutiae.len(), "out": out }));
            } else if let Some(path) = iris {
                let t = iris_trace(&load_gray(path)?, &cfg, backend)?;
                let u = &t.unwrapped;
                save_gray(&GrayImage::new(u.cols, u.rows, u.values.clone())?, out.join("unwrapped.pgm"))?;
                save_gray(&t.enhanced, out.join("enhanced.pgm"))?;
                let c = &t.code;
                let plane1 = GrayImage::new(c.cols, c.rows, c.planes.iter().map(|p| (p & 1) * 255).collect())?;
                save_gray(&plane1, out.join("code_plane1.pgm"))?;
                let mask = GrayImage::new(c.cols, c.rows, c.mask.iter().map(|&m| u8::from(m) * 255).collect())?;
                save_gray(&mask, out.join("code_mask.pgm"))?;
                let summary = json!({
                    "pupil": { "cx": t.pupil.cx, "cy": t.pupil.cy, "radius": t.pupil.radius },
                    "limbic_row": u.limbic_row,
                    "limbic_fallback": u.limbic_fallback,
                    "valid_samples": c.valid_count(),
                });
                write_json(&out.join("iris.json"), &summary)?;
                if let Some(run) = &t.run {
                    write_json(&report, &run.reports)?;
                }
                println!("{summary}");
            }
        }
        Command::Equiv { dataset, report } => {
            let index = DatasetIndex::load(dataset_root(dataset, &cfg)?)?;
            let (fps, eyes) = dataset_images(&index)?;
            let r = equivalence(&fps, &eyes, &cfg)?;
            write_json(report, &r)?;
            println!(
                "{}",
                json!({
                    "fingerprints": r.fingerprints.len(),
                    "within_3px": r.fingerprints_within_3px,
                    "max_hausdorff": r.max_hausdorff,
                    "irises": r.irises.len(),
                    "max_bit_disagreement": r.max_bit_disagreement,
                    "pipelined_identical": r.all_pipelined_identical,
                    "report": report,
                })
            );
        }
        Command::Synth { out, subjects, seed } => {
            let spec = DatasetSpec {
                subjects: *subjects,
                seed: *seed,
                ..DatasetSpec::default()
            };
            write_dataset(out, &spec)?;
            info!("wrote {} subjects to {}", subjects, out.display());
            println!("{}", json!({ "subjects": subjects, "out": out }));
        }
        Command::Config => print!("{}", cfg.to_text()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => LevelFilter::Warn,
        1 => LevelFilter::Info,
        _ => LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
