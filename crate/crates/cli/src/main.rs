//! `artikit`: one executable over the full articulated-object pipeline.
//!
//! Subcommands read and write the pipeline's file formats (AVOX grids,
//! ASPLAT splat sets, ATNS checkpoints with JSON sidecar metadata, PPM
//! images) and print a one-line JSON summary on success. Failures print a
//! JSON error to stderr and exit with 1 (usage), 2 (missing input),
//! 3 (validation), or 4 (numeric failure). Defaults resolve as CLI flag >
//! `artikit.toml` > built-in.

mod cmd_object;
mod cmd_pipeline;
mod cmd_train;
mod config;
mod meta;
mod util;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use util::CliError;

#[derive(Parser)]
#[command(name = "artikit", version, about = "Articulated 3D object pipeline")]
struct Cli {
    /// TOML config file (default: ./artikit.toml when present).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a procedural articulated object description (JSON).
    Gen {
        /// RNG seed for sizes and placement.
        #[arg(long)]
        seed: Option<u64>,
        /// One of: cabinet, table, dishwasher, microwave.
        #[arg(long, default_value = "cabinet")]
        category: String,
        /// Drawer count (default depends on the category).
        #[arg(long)]
        drawers: Option<usize>,
        /// Door count (default depends on the category).
        #[arg(long)]
        doors: Option<usize>,
        /// Attach a handle to every movable part.
        #[arg(long)]
        handles: bool,
        /// Relative size jitter in [0, 1).
        #[arg(long)]
        jitter: Option<f64>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Voxelize an object description into an AVOX grid.
    Ingest {
        obj: PathBuf,
        /// Grid resolution per axis.
        #[arg(short = 'n', long)]
        resolution: Option<usize>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Pose a grid and dump the transformed voxel centers (JSON).
    Articulate {
        grid: PathBuf,
        /// Joint values as "part:value,part:value"; empty = rest.
        #[arg(long, default_value = "")]
        state: String,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Render a splat set from a ring of cameras, optionally posed.
    Render {
        splats: PathBuf,
        /// Grid that owns the splats; required with --state.
        #[arg(long)]
        grid: Option<PathBuf>,
        /// Joint values as "part:value,part:value"; empty = rest.
        #[arg(long, default_value = "")]
        state: String,
        #[arg(long)]
        views: Option<usize>,
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        height: Option<usize>,
        /// Output directory for PPM images.
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Cluster voxels into parts and aggregate per-part parameters.
    Segment {
        grid: PathBuf,
        /// DBSCAN radius in bbox-feature space.
        #[arg(long)]
        eps: Option<f64>,
        /// DBSCAN core-point threshold (the point itself counts).
        #[arg(long)]
        min_pts: Option<usize>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Train the grid VAE on a directory of AVOX grids.
    TrainVae {
        data: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// KL weight.
        #[arg(long)]
        alpha_kl: Option<f64>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        latent_channels: Option<usize>,
        /// Encoder stage widths as "w0,w1,w2".
        #[arg(long)]
        widths: Option<String>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Train the latent flow prior on VAE posterior means.
    TrainPrior {
        data: PathBuf,
        /// VAE checkpoint used to encode the dataset.
        #[arg(long)]
        vae: Option<PathBuf>,
        #[arg(long)]
        hidden: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        train_steps: Option<usize>,
        /// Probability of dropping the condition during training.
        #[arg(long)]
        cond_dropout: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Fine-tune the Gaussian decoder across articulation states.
    Finetune {
        /// Directory of AVOX grids with matching .asplat supervision.
        data: PathBuf,
        /// Decoder checkpoint to start from (default: fresh init).
        #[arg(long)]
        decoder: Option<PathBuf>,
        /// Synthesize part-colored supervision when .asplat is missing.
        #[arg(long)]
        reference: bool,
        /// Articulation states curated per object.
        #[arg(long)]
        k_states: Option<usize>,
        /// Camera views per state.
        #[arg(long)]
        views: Option<usize>,
        /// Scale/opacity regularizer weight.
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Sample a latent from the prior and decode it into a grid.
    Sample {
        #[command(flatten)]
        sample: SampleFlags,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Full pipeline: sample, decode, segment, splat, render, manifest.
    Generate {
        #[command(flatten)]
        sample: SampleFlags,
        /// Gaussian decoder checkpoint.
        #[arg(long)]
        decoder: Option<PathBuf>,
        /// Articulation states to render.
        #[arg(long)]
        render_states: Option<usize>,
        /// Camera views per state.
        #[arg(long)]
        views: Option<usize>,
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        height: Option<usize>,
        /// Skip preview renders.
        #[arg(long)]
        no_render: bool,
        /// Output directory for all artifacts.
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Compare two grids: Chamfer at rest and articulated, plus joint
    /// and bbox parameter errors.
    Eval {
        pred: PathBuf,
        gt: PathBuf,
        /// Number of articulation states to average over.
        #[arg(long)]
        states: Option<usize>,
        /// Also write the report to this path.
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SampleFlags {
    /// Condition category: cabinet, table, dishwasher, microwave.
    /// Omit for an unconditional sample.
    #[arg(long)]
    cond: Option<String>,
    /// Classifier-free guidance scale.
    #[arg(long = "cfg")]
    cfg_scale: Option<f64>,
    /// Euler integration steps.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// VAE checkpoint.
    #[arg(long)]
    vae: Option<PathBuf>,
    /// Flow prior checkpoint.
    #[arg(long)]
    prior: Option<PathBuf>,
    /// Occupancy threshold in (0, 1).
    #[arg(long)]
    threshold: Option<f64>,
    /// DBSCAN radius for part segmentation.
    #[arg(long)]
    eps: Option<f64>,
    /// DBSCAN core-point threshold.
    #[arg(long)]
    min_pts: Option<usize>,
}

impl SampleFlags {
    fn into_args(self) -> cmd_pipeline::SampleArgs {
        cmd_pipeline::SampleArgs {
            cond: self.cond,
            cfg_scale: self.cfg_scale,
            steps: self.steps,
            seed: self.seed,
            vae: self.vae,
            prior: self.prior,
            threshold: self.threshold,
            eps: self.eps,
            min_pts: self.min_pts,
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = config::load(cli.config.as_deref())?;
    match cli.cmd {
        Cmd::Gen {
            seed,
            category,
            drawers,
            doors,
            handles,
            jitter,
            out,
        } => cmd_object::gen(
            &cfg,
            cmd_object::GenArgs {
                seed,
                category,
                drawers,
                doors,
                handles,
                jitter,
                out,
            },
        ),
        Cmd::Ingest {
            obj,
            resolution,
            out,
        } => cmd_object::ingest(&cfg, &obj, resolution, &out),
        Cmd::Articulate { grid, state, out } => cmd_object::articulate(&grid, &state, &out),
        Cmd::Render {
            splats,
            grid,
            state,
            views,
            width,
            height,
            out,
        } => cmd_pipeline::render_cmd(
            &cfg,
            cmd_pipeline::RenderArgs {
                splats,
                grid,
                state,
                views,
                width,
                height,
                out,
            },
        ),
        Cmd::Segment {
            grid,
            eps,
            min_pts,
            out,
        } => cmd_object::segment(&cfg, &grid, eps, min_pts, &out),
        Cmd::TrainVae {
            data,
            epochs,
            seed,
            alpha_kl,
            lr,
            latent_channels,
            widths,
            out,
        } => cmd_train::train_vae_cmd(
            &cfg,
            cmd_train::TrainVaeArgs {
                data,
                epochs,
                seed,
                alpha_kl,
                lr,
                latent_channels,
                widths,
                out,
            },
        ),
        Cmd::TrainPrior {
            data,
            vae,
            hidden,
            lr,
            train_steps,
            cond_dropout,
            seed,
            out,
        } => cmd_train::train_prior_cmd(
            &cfg,
            cmd_train::TrainPriorArgs {
                data,
                vae,
                hidden,
                lr,
                train_steps,
                cond_dropout,
                seed,
                out,
            },
        ),
        Cmd::Finetune {
            data,
            decoder,
            reference,
            k_states,
            views,
            lambda,
            epochs,
            lr,
            seed,
            out,
        } => cmd_train::finetune_cmd(
            &cfg,
            cmd_train::FinetuneArgs {
                data,
                decoder,
                reference,
                k_states,
                views,
                lambda,
                epochs,
                lr,
                seed,
                out,
            },
        ),
        Cmd::Sample { sample, out } => cmd_pipeline::sample_cmd(&cfg, sample.into_args(), &out),
        Cmd::Generate {
            sample,
            decoder,
            render_states,
            views,
            width,
            height,
            no_render,
            out,
        } => cmd_pipeline::generate_cmd(
            &cfg,
            cmd_pipeline::GenerateArgs {
                sample: sample.into_args(),
                decoder,
                render_states,
                views,
                width,
                height,
                no_render,
                out,
            },
        ),
        Cmd::Eval {
            pred,
            gt,
            states,
            json,
        } => cmd_object::eval(&cfg, &pred, &gt, states, json.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                // --help/--version are successes, not usage errors.
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.code() as u8)
        }
    }
}
