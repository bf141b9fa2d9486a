use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use crosstask_cli::bench::{run_benchmarks, GRABCUT_BUDGET, REFINE_BUDGET};
use crosstask_cli::commands::{
    cmd_eval, cmd_losses, cmd_overlay, cmd_pseudomask, cmd_refine, CommandReport, EvalArgs, LossesArgs, OverlayArgs,
    PseudomaskArgs, RefineArgs,
};
use crosstask_cli::{CliError, ExitStatus, RunConfig};

/// Box refinement, pseudo masks, losses and evaluation for multi-task
/// partially supervised detection and segmentation.
#[derive(Parser)]
#[command(name = "crosstask", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Run configuration (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Refine detector boxes against segmentation masks.
    Refine {
        #[arg(long)]
        manifest: PathBuf,
        /// Directory of `<image_id>.json` prediction documents.
        #[arg(long)]
        predictions: PathBuf,
        /// Output directory; defaults to `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Refine images without a predictions file as if nothing was detected.
        #[arg(long)]
        allow_missing: bool,
    },
    /// Box-filled and coarse masks for detection-annotated images.
    Pseudomask {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// mAP, TIDE errors and mIOU.
    Eval {
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        ground_truth: Option<PathBuf>,
        #[arg(long)]
        pred_masks: Option<PathBuf>,
        #[arg(long)]
        gt_masks: Option<PathBuf>,
        /// JSON report destination.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw boxes and masks over an image.
    Overlay {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        boxes: Option<PathBuf>,
        /// Image id inside a multi-image boxes document.
        #[arg(long = "id")]
        image_id: Option<String>,
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Box-for-mask losses and the combined objective.
    Losses {
        #[arg(long)]
        logits: PathBuf,
        #[arg(long)]
        alpha: PathBuf,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        coarse_mask: PathBuf,
        #[arg(long)]
        box_mask: PathBuf,
        #[arg(long)]
        boxes: Option<PathBuf>,
        #[arg(long = "id")]
        image_id: Option<String>,
        #[arg(long)]
        keys: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        det_loss: f64,
        #[arg(long, default_value_t = 0.0)]
        m4b_loss: f64,
        #[arg(long, default_value_t = 0.0)]
        seg_loss: f64,
        /// Overrides `loss.lambda`.
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        check_grads: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time refinement and GrabCut on the built-in fixtures.
    Bench {
        #[arg(long, default_value_t = 21)]
        refine_runs: usize,
        #[arg(long, default_value_t = 3)]
        grabcut_runs: usize,
    },
}

/// Config for commands whose output depends on the seed.
fn seeded_config(g: &Global) -> Result<RunConfig, CliError> {
    match (&g.config, g.seed) {
        (Some(p), seed) => {
            let mut cfg = RunConfig::load(p)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            Ok(cfg)
        }
        (None, Some(s)) => Ok(RunConfig::with_seed(s)),
        (None, None) => Err(CliError::Usage("a seed is required: pass --config or --seed".into())),
    }
}

fn loose_config(g: &Global) -> Result<RunConfig, CliError> {
    match (&g.config, g.seed) {
        (None, None) => Ok(RunConfig::with_seed(0)),
        _ => seeded_config(g),
    }
}

fn out_dir(out: Option<PathBuf>, cfg: &RunConfig) -> Result<PathBuf, CliError> {
    out.or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| CliError::Usage("no output directory: pass --out or set output_dir".into()))
}

fn dispatch(cli: Cli) -> Result<CommandReport, CliError> {
    let g = &cli.global;
    match cli.command {
        Command::Refine { manifest, predictions, out, allow_missing } => {
            let cfg = seeded_config(g)?;
            let out = out_dir(out, &cfg)?;
            cmd_refine(&RefineArgs { manifest, predictions, out, allow_missing }, &cfg)
        }
        Command::Pseudomask { manifest, out } => {
            let cfg = seeded_config(g)?;
            let out = out_dir(out, &cfg)?;
            cmd_pseudomask(&PseudomaskArgs { manifest, out }, &cfg)
        }
        Command::Eval { predictions, ground_truth, pred_masks, gt_masks, out } => {
            let cfg = loose_config(g)?;
            cmd_eval(&EvalArgs { predictions, ground_truth, pred_masks, gt_masks, out }, &cfg)
        }
        Command::Overlay { image, boxes, image_id, mask, out } => {
            let num_classes = match (&g.config, g.seed) {
                (None, None) => None,
                _ => Some(seeded_config(g)?.num_classes),
            };
            cmd_overlay(&OverlayArgs { image, boxes, image_id, mask, out, num_classes })
        }
        Command::Losses {
            logits,
            alpha,
            embeddings,
            coarse_mask,
            box_mask,
            boxes,
            image_id,
            keys,
            det_loss,
            m4b_loss,
            seg_loss,
            lambda,
            check_grads,
            out,
        } => {
            let cfg = loose_config(g)?;
            let args = LossesArgs {
                logits,
                alpha,
                embeddings,
                coarse_mask,
                box_mask,
                boxes,
                image_id,
                keys,
                det_loss,
                m4b_loss,
                seg_loss,
                lambda,
                check_grads,
                out,
            };
            cmd_losses(&args, &cfg)
        }
        Command::Bench { refine_runs, grabcut_runs } => {
            let seed = loose_config(g)?.seed;
            let r = run_benchmarks(refine_runs, grabcut_runs, seed);
            let verdict = |ok: bool| if ok { "ok" } else { "over budget" };
            Ok(CommandReport {
                lines: vec![
                    format!(
                        "refine 640x480, 50 predictions: median {:.3} ms (budget {} ms, {})",
                        r.refine_median.as_secs_f64() * 1e3,
                        REFINE_BUDGET.as_millis(),
                        verdict(r.refine_ok())
                    ),
                    format!(
                        "grabcut 320x240 box: median {:.3} s (budget {} s, {})",
                        r.grabcut_median.as_secs_f64(),
                        GRABCUT_BUDGET.as_secs(),
                        verdict(r.grabcut_ok())
                    ),
                ],
                warnings: Vec::new(),
                partial: !(r.refine_ok() && r.grabcut_ok()),
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { ExitStatus::Usage.code() as u8 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(report) => {
            for l in &report.lines {
                println!("{l}");
            }
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            ExitCode::from(report.status().code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.status().code() as u8)
        }
    }
}
