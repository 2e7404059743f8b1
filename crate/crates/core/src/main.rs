//! `segpace` command-line entry point: thin argument parsing over the
//! library's command implementations.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use segpace::cli::commands;
use segpace::cli::config::{Profile, RunConfig};
use segpace::sampling::SamplerParams;

#[derive(Parser)]
#[command(
    name = "segpace",
    about = "Self-supervised video pretraining: segment-pace pretext task with an auxiliary similarity-distillation stage",
    version
)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunFlags {
    /// TOML config file; omitted keys fall back to the profile defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Profile defaults to start from (`desk` or `paper`).
    #[arg(long, value_parser = parse_profile)]
    profile: Option<Profile>,
    /// Override the run seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl RunFlags {
    fn resolve(&self) -> Result<RunConfig, segpace::cli::CliError> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path, self.profile)?,
            None => RunConfig::defaults(self.profile.unwrap_or(Profile::Desk)),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(out_dir) = &self.out_dir {
            config.out_dir = out_dir.to_string_lossy().to_string();
        }
        Ok(config)
    }
}

fn parse_profile(s: &str) -> Result<Profile, String> {
    match s {
        "desk" => Ok(Profile::Desk),
        "paper" => Ok(Profile::Paper),
        other => Err(format!("unknown profile `{other}` (expected desk|paper)")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Stage-1 auxiliary distillation pretraining.
    PretrainAux {
        #[command(flatten)]
        flags: RunFlags,
        /// Same-stage checkpoint to resume from.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Stage-2 segment-pace pretraining.
    PretrainVspp {
        #[command(flatten)]
        flags: RunFlags,
        /// Stage-1 checkpoint to initialize from, or stage-2 to resume.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Supervised finetuning of a pretrained encoder (or from scratch).
    Finetune {
        #[command(flatten)]
        flags: RunFlags,
        /// Pretraining checkpoint for the encoder; omit for scratch.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Ten-clip averaged-softmax evaluation of a finetuned checkpoint.
    Evaluate {
        #[command(flatten)]
        flags: RunFlags,
        /// Finetuned checkpoint to evaluate.
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Print the frame-index plan for an explicit (rate, segment, start).
    InspectSample {
        /// Source frame count N.
        #[arg(long, default_value_t = 20)]
        num_frames: usize,
        /// Clip length K.
        #[arg(long, default_value_t = 16)]
        clip_len: usize,
        /// Segment count Z.
        #[arg(long, default_value_t = 4)]
        segments: usize,
        /// Max speed rate Q.
        #[arg(long, default_value_t = 4)]
        max_rate: usize,
        /// Speed rate of the altered segment.
        #[arg(long)]
        rate: usize,
        /// One-based altered segment index.
        #[arg(long)]
        segment: usize,
        /// Source start offset.
        #[arg(long, default_value_t = 0)]
        start: usize,
    },
    /// Render SVG curves from metrics files (overlays multiple files).
    Plot {
        /// Metrics CSV files.
        files: Vec<PathBuf>,
        /// Directory for the SVG output.
        #[arg(long, default_value = "plots")]
        out_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}

fn run(args: Args) -> Result<(), Box<dyn std::error::Error>> {
    match args.command {
        Command::PretrainAux { flags, checkpoint } => {
            let config = flags.resolve()?;
            let artifacts = commands::cmd_pretrain_aux(&config, checkpoint.as_deref())?;
            println!("run dir: {}", artifacts.run_dir.display());
            println!("metrics: {}", artifacts.metrics.unwrap().display());
            for c in &artifacts.checkpoints {
                println!("checkpoint: {}", c.display());
            }
        }
        Command::PretrainVspp { flags, checkpoint } => {
            let config = flags.resolve()?;
            let artifacts = commands::cmd_pretrain_vspp(&config, checkpoint.as_deref())?;
            println!("run dir: {}", artifacts.run_dir.display());
            println!("metrics: {}", artifacts.metrics.unwrap().display());
            for c in &artifacts.checkpoints {
                println!("checkpoint: {}", c.display());
            }
        }
        Command::Finetune { flags, checkpoint } => {
            let config = flags.resolve()?;
            let artifacts = commands::cmd_finetune(&config, checkpoint.as_deref())?;
            println!("run dir: {}", artifacts.run_dir.display());
            println!("metrics: {}", artifacts.metrics.unwrap().display());
            for c in &artifacts.checkpoints {
                println!("checkpoint: {}", c.display());
            }
        }
        Command::Evaluate { flags, checkpoint } => {
            let config = flags.resolve()?;
            let artifacts = commands::cmd_evaluate(&config, &checkpoint)?;
            let results = artifacts.results.unwrap();
            println!("results: {}", results.display());
            print!("{}", std::fs::read_to_string(results)?);
        }
        Command::InspectSample {
            num_frames,
            clip_len,
            segments,
            max_rate,
            rate,
            segment,
            start,
        } => {
            let params = SamplerParams::new(num_frames, clip_len, segments, max_rate)?;
            println!("{}", commands::cmd_inspect_sample(&params, rate, segment, start));
        }
        Command::Plot { files, out_dir } => {
            if files.is_empty() {
                return Err("plot needs at least one metrics file".into());
            }
            for path in commands::cmd_plot(&files, &out_dir)? {
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}
