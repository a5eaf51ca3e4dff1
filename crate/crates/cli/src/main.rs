use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vgan::config::RunConfig;
use vgan::metrics::ThresholdMode;
use vgan::pipeline::{run_eval, run_infer, run_overlay, run_train, EvalArgs, ThresholdChoice};
use vgan::{Error, Result};

/// Adversarial retinal vessel segmentation.
#[derive(Parser)]
#[command(name = "vgan", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a generator (and discriminator) from a config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's `seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write the 16-bit probability map of one fundus image.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score probability maps against gold standards.
    Eval {
        #[arg(long)]
        pred_dir: PathBuf,
        #[arg(long)]
        gold_dir: PathBuf,
        #[arg(long)]
        mask_dir: Option<PathBuf>,
        /// Fundus images (`*.ppm`) to derive FOV masks from when no mask
        /// directory exists.
        #[arg(long)]
        image_dir: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// One Otsu threshold per image instead of one pooled threshold.
        #[arg(long)]
        per_image_threshold: bool,
        #[arg(long, default_value_t = vgan::data::DEFAULT_LUMINANCE_THRESHOLD)]
        fov_luminance: f64,
    },
    /// Colour-code agreement between a thresholded map and its gold standard.
    Overlay {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        mask: Option<PathBuf>,
        /// `otsu` or a fixed value in [0, 1].
        #[arg(long, default_value = "otsu")]
        threshold: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: &PathBuf, seed: Option<u64>) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(vec![format!("cannot read config {}: {e}", path.display())]))?;
    let mut cfg = RunConfig::parse(&text)?;
    if let Some(seed) = seed {
        cfg.train.seed = seed;
    }
    Ok(cfg)
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Train { config, out, seed } => {
            let cfg = load_config(&config, seed)?;
            let rounds = cfg.train.rounds;
            let summary = run_train(&cfg, &out, |s| {
                eprintln!(
                    "round {}/{rounds}: d_loss {:.4} g_gan {:.4} seg {:.4} val {:.4}",
                    s.round,
                    s.d_loss,
                    s.g_gan_loss,
                    s.seg_loss,
                    s.val_g_loss.unwrap_or(f64::NAN)
                )
            })?;
            println!(
                "best round {} (validation loss {:.6}); wrote {}",
                summary.best_round,
                summary.best_val_loss,
                out.display()
            );
        }
        Command::Infer { checkpoint, image, out } => {
            run_infer(&checkpoint, &image, &out)?;
            println!("wrote {}", out.display());
        }
        Command::Eval {
            pred_dir,
            gold_dir,
            mask_dir,
            image_dir,
            out,
            per_image_threshold,
            fov_luminance,
        } => {
            let outcome = run_eval(&EvalArgs {
                pred_dir: &pred_dir,
                gold_dir: &gold_dir,
                mask_dir: mask_dir.as_deref(),
                image_dir: image_dir.as_deref(),
                out: &out,
                mode: if per_image_threshold {
                    ThresholdMode::PerImage
                } else {
                    ThresholdMode::Pooled
                },
                fov_luminance,
            })?;
            for note in &outcome.notes {
                println!("note: {note}");
            }
            let r = &outcome.report;
            println!(
                "dice {:.4}  roc_auc {:.4}  pr_auc {:.4}  otsu {:.6}",
                r.aggregate.dice,
                r.roc_auc(),
                r.pr_auc(),
                r.otsu_threshold
            );
        }
        Command::Overlay {
            pred,
            gold,
            mask,
            threshold,
            out,
        } => {
            let choice: ThresholdChoice = threshold.parse()?;
            let t = run_overlay(&pred, &gold, mask.as_deref(), choice, &out)?;
            println!("threshold {t}; wrote {}", out.display());
        }
    }
    Ok(())
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
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
