//! `tsi`: batch pipeline from annotated images to spuriosity tables.

mod commands;
mod config;
mod error;
mod output;

use clap::{Args, Parser, Subcommand};
use commands::influence::{MapKind, PredictorKind};
use commands::{parse_list, CountList};
use config::PipelineConfig;
use error::CliResult;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "tsi", version, about = "Token spuriosity index pipeline")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// TOML pipeline configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; outputs do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic annotated corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 24)]
        n_images: usize,
        /// Independently seeded mini ViTs; with more than one, records where
        /// every model is correct become rare.
        #[arg(long, default_value_t = 1)]
        models: usize,
    },
    /// Compute per-token score maps for every (image, model).
    Influence {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long, value_enum, default_value = "mini-vit")]
        predictor: PredictorKind,
        /// Precomputed records, used with `--predictor offline`.
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "influence")]
        kind: MapKind,
        #[arg(long)]
        out: PathBuf,
    },
    /// Join score maps with annotations and compute A-TSI and M-TSI.
    Tsi {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        /// Attention top-k regions to score besides the boxes.
        #[arg(long, value_parser = parse_list)]
        top_k: Option<CountList>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grouped mean/std tables, non-finite tallies and class rankings.
    Aggregate {
        #[arg(long)]
        tsi: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Clamped histograms of both indices.
    Hist {
        #[arg(long)]
        tsi: PathBuf,
        #[arg(long)]
        bin_width: Option<f64>,
        #[arg(long)]
        clamp: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Correlations between score sources and between the two indices.
    Compare {
        #[arg(long)]
        tsi: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Confidence drop after discarding each source's top-n tokens.
    Mask {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long, value_enum, default_value = "mini-vit")]
        predictor: PredictorKind,
        #[arg(long, required = true)]
        scores: Vec<PathBuf>,
        #[arg(long, value_parser = parse_list)]
        ns: Option<CountList>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render one score map as PGM, or PPM with box outlines.
    Render {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        image_id: Option<String>,
        #[arg(long)]
        model_id: Option<String>,
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn build_config(global: &GlobalArgs, command: &Command) -> CliResult<PipelineConfig> {
    let mut cfg = match &global.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(w) = global.workers {
        cfg.workers = w;
    }
    if let Some(s) = global.seed {
        cfg.seed = s;
    }
    match command {
        Command::Tsi { top_k: Some(k), .. } => cfg.top_k = k.0.clone(),
        Command::Mask { ns: Some(ns), .. } => cfg.ns = ns.0.clone(),
        Command::Hist { bin_width, clamp, .. } => {
            cfg.bin_width = bin_width.unwrap_or(cfg.bin_width);
            cfg.clamp = clamp.unwrap_or(cfg.clamp);
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = build_config(&cli.global, &cli.command)?;
    match cli.command {
        Command::Synth { out, n_images, models } => {
            cfg.output = Some(out.clone());
            commands::synth::run(&cfg, &out, n_images, models)
        }
        Command::Influence {
            annotations,
            predictor,
            scores,
            kind,
            out,
        } => {
            cfg.input = Some(annotations.clone());
            cfg.output = Some(out.clone());
            commands::influence::run(&cfg, &annotations, predictor, scores.as_deref(), kind, &out)
        }
        Command::Tsi {
            scores,
            annotations,
            out,
            ..
        } => {
            let top_k = cfg.top_k.clone();
            commands::tsi::run(&cfg, &scores, &annotations, &top_k, &out)
        }
        Command::Aggregate { tsi, out } => commands::tables::aggregate(&cfg, &tsi, &out),
        Command::Hist { tsi, out, .. } => commands::tables::hist(&cfg, &tsi, &out),
        Command::Compare { tsi, out } => commands::tables::compare(&cfg, &tsi, &out),
        Command::Mask {
            annotations,
            predictor,
            scores,
            out,
            ..
        } => commands::mask::run(&cfg, &annotations, predictor, &scores, &out),
        Command::Render {
            scores,
            image_id,
            model_id,
            annotations,
            out,
        } => commands::render::run(
            &cfg,
            &scores,
            image_id.as_deref(),
            model_id.as_deref(),
            annotations.as_deref(),
            &out,
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tsi: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
