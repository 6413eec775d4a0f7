use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use roadquant::pipeline::{run_autolabel_files, run_quantify_files, RunOptions};
use roadquant::synth::{planted_fixture, write_fixture, FixtureSpec};

/// Metric road-damage quantification and auto-labelling.
///
/// Exit status: 0 on success, 1 on a fatal ingestion or contract error
/// (including bad arguments), 2 when the run succeeded but skipped damages.
#[derive(Debug, Parser)]
#[command(name = "roadquant", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Quantify every detection of a manifest and write report.csv,
    /// damages.geojson and summary.json.
    Quantify {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Top-view resolution in meters per pixel.
        #[arg(long)]
        mpp: Option<f64>,
        /// Camera height above the road in meters.
        #[arg(long)]
        camera_height: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Label unlabelled frames and write the surviving boxes as JSON Lines.
    Autolabel {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        pools: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the candidate boxes (for feature extraction) instead of
        /// labels.
        #[arg(long)]
        list_candidates: bool,
    },
    /// Render a synthetic fixture in the pipeline's input formats.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn synth(spec: &PathBuf, out_dir: &PathBuf) -> Result<()> {
    let text = fs::read_to_string(spec).with_context(|| format!("reading {}", spec.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", spec.display()))?;
    if let Some(planted) = value.get("planted_autolabel") {
        let seed = planted.get("seed").and_then(|s| s.as_u64()).unwrap_or(0);
        let paths = planted_fixture(seed)?.write(out_dir)?;
        println!("auto-label fixture: {}", paths.manifest.display());
    } else {
        let spec: FixtureSpec = serde_json::from_value(value).with_context(|| format!("parsing {}", spec.display()))?;
        let written = write_fixture(&spec, out_dir)?;
        println!("{} detections: {}", written.truth.len(), written.manifest.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Quantify {
            manifest,
            out_dir,
            mpp,
            camera_height,
            seed,
            jobs,
        } => {
            let opts = RunOptions {
                mpp,
                camera_height,
                seed,
                jobs,
            };
            let out = run_quantify_files(&manifest, &out_dir, &opts)?;
            let s = &out.summary;
            println!(
                "{} frames, {} detections: {} quantified, {} skipped",
                s.frames, s.detections, s.quantified, s.skipped
            );
            for skip in &s.skips {
                eprintln!(
                    "skipped frame {} detection {}: {}",
                    skip.frame,
                    skip.detection.map_or("-".into(), |d| d.to_string()),
                    skip.reason
                );
            }
            Ok(out.exit_code() as u8)
        }
        Command::Autolabel {
            manifest,
            pools,
            features,
            out,
            seed,
            list_candidates,
        } => {
            let n = run_autolabel_files(&manifest, &pools, &features, &out, seed, list_candidates)?;
            let what = if list_candidates { "candidates" } else { "labels" };
            println!("{n} {what} written to {}", out.display());
            Ok(0)
        }
        Command::Synth { spec, out_dir } => {
            synth(&spec, &out_dir)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
