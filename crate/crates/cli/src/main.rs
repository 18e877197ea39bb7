//! Command-line front end for the single-feature detector analysis toolkit.

mod commands;
mod config;
mod report;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use commands::*;
use config::{KernelSpec, RunConfig};
use report::Format;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "sfdet",
    version,
    about = "Anchor coverage, rotated-box proposals, score-map filtering, and detector FLOPs analysis"
)]
struct Cli {
    /// JSON config file; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    /// Report rendering.
    #[arg(long, global = true, value_enum, default_value = "table")]
    format: Format,

    /// Seed echoed into report provenance for sampled self-checks.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-level matched-anchor fractions for a directory of annotations.
    Coverage(CoverageCli),
    /// Worst-case anchor/object IoU over a size and stride grid.
    Worstcase(WorstcaseCli),
    /// Run RPN post-processing on score/delta tensors.
    Propose(ProposeCli),
    /// Apply a high-pass filter to a score-map tensor.
    Filter(FilterCli),
    /// Rotated NMS over a proposals CSV file.
    Nms(NmsCli),
    /// Baseline vs single-feature FLOPs breakdown for a detector model.
    Flops(FlopsCli),
    /// Plan overlapping crop windows and transfer annotations into them.
    Tile(TileCli),
    /// Object-size histogram over a directory of annotations.
    Stats(StatsCli),
}

#[derive(Args)]
struct CoverageCli {
    /// Directory of DOTA-format .txt annotation files.
    #[arg(long)]
    annotations: PathBuf,
    /// Positive-anchor IoU threshold (default from config).
    #[arg(long)]
    threshold: Option<f64>,
    /// Image side used to size the lattices.
    #[arg(long)]
    image_size: Option<usize>,
    /// Report both the original (32..512) and adjusted (16..256) anchor sets.
    #[arg(long)]
    compare: bool,
    /// Assign with exact rotated IoU instead of enclosing horizontal boxes.
    #[arg(long)]
    exact_obb: bool,
}

#[derive(Args)]
struct WorstcaseCli {
    /// Comma-separated anchor sizes in pixels.
    #[arg(long, value_delimiter = ',', required = true)]
    anchor_sizes: Vec<f64>,
    /// Comma-separated feature strides in pixels.
    #[arg(long, value_delimiter = ',', required = true)]
    strides: Vec<f64>,
    /// Comma-separated object sizes in pixels.
    #[arg(long, value_delimiter = ',', required = true)]
    object_sizes: Vec<f64>,
    /// Threshold for flagging cells (default from config).
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args)]
struct ProposeCli {
    /// Score tensor (SFT1, or CSV for single-channel maps).
    #[arg(long)]
    scores: PathBuf,
    /// Regression delta tensor (SFT1).
    #[arg(long)]
    deltas: PathBuf,
    /// Enable or disable the high-pass filter.
    #[arg(long)]
    hpf: Option<bool>,
    /// Filter kernel kind (unsharp, gaussian, laplacian, log, identity).
    #[arg(long)]
    kernel_kind: Option<String>,
    /// Filter kernel size (3 or 5).
    #[arg(long)]
    kernel_size: Option<usize>,
    /// Keep this many top-scoring anchors before NMS.
    #[arg(long)]
    k_pre: Option<usize>,
    /// Keep this many proposals after NMS.
    #[arg(long)]
    k_post: Option<usize>,
    /// NMS IoU threshold.
    #[arg(long)]
    nms_threshold: Option<f64>,
    /// Run an RoI-budget sweep over these post-NMS caps instead.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    sweep: Vec<usize>,
}

#[derive(Args)]
struct FilterCli {
    /// Input tensor (SFT1, or CSV for rank-2 maps).
    #[arg(long)]
    input: PathBuf,
    /// Kernel kind.
    #[arg(long)]
    kind: String,
    /// Kernel size (3 or 5).
    #[arg(long, default_value_t = 5)]
    size: usize,
    /// Filtered tensor destination (SFT1). Required.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct NmsCli {
    /// Proposals CSV (cx,cy,w,h,theta,score).
    #[arg(long)]
    input: PathBuf,
    /// Suppression IoU threshold (default from config).
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args)]
struct FlopsCli {
    /// Bundled model name (oriented-rcnn, lsknet-t, lsknet-s) or a JSON path.
    #[arg(long)]
    model: String,
    /// Include the score-map filter in the simplified variant.
    #[arg(long, default_value_t = true)]
    hpf: bool,
}

#[derive(Args)]
struct TileCli {
    #[arg(long)]
    image_w: usize,
    #[arg(long)]
    image_h: usize,
    /// Crop window side.
    #[arg(long, default_value_t = 1024)]
    patch: usize,
    /// Shared border between adjacent windows (or the step, see below).
    #[arg(long, default_value_t = 200)]
    overlap: usize,
    /// Treat --overlap as the window step instead of the shared border.
    #[arg(long)]
    overlap_is_step: bool,
    /// Transfer annotations from this directory into the windows.
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Directory for per-window annotation files.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Keep annotations with at least this fraction of their area inside.
    #[arg(long, default_value_t = 0.5)]
    min_area_fraction: f64,
}

#[derive(Args)]
struct StatsCli {
    /// Directory of DOTA-format .txt annotation files.
    #[arg(long)]
    annotations: PathBuf,
    /// Ascending histogram bin edges for sqrt(box area), in pixels.
    #[arg(long, value_delimiter = ',', default_values_t = vec![4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0, 512.0])]
    bin_edges: Vec<f64>,
}

fn run(cli: Cli) -> Result<()> {
    let run_cfg = RunConfig::load(cli.config.as_deref())?;
    let mut report = match &cli.command {
        Command::Coverage(a) => commands::cmd_coverage(
            &run_cfg,
            &CoverageArgs {
                annotations: a.annotations.clone(),
                threshold: a.threshold,
                image_size: a.image_size,
                compare: a.compare,
                exact_obb: a.exact_obb,
            },
        )?,
        Command::Worstcase(a) => commands::cmd_worstcase(
            &run_cfg,
            &WorstcaseArgs {
                anchor_sizes: a.anchor_sizes.clone(),
                strides: a.strides.clone(),
                object_sizes: a.object_sizes.clone(),
                threshold: a.threshold,
            },
        )?,
        Command::Propose(a) => {
            let kernel = match (&a.kernel_kind, a.kernel_size) {
                (None, None) => None,
                (kind, size) => Some(KernelSpec {
                    kind: kind.clone().unwrap_or_else(|| "unsharp".into()),
                    size: size.unwrap_or(5),
                    weights: None,
                }),
            };
            commands::cmd_propose(
                &run_cfg,
                &ProposeArgs {
                    scores: a.scores.clone(),
                    deltas: a.deltas.clone(),
                    hpf: a.hpf,
                    kernel,
                    k_pre: a.k_pre,
                    k_post: a.k_post,
                    nms_threshold: a.nms_threshold,
                    sweep: a.sweep.clone(),
                },
            )?
        }
        Command::Filter(a) => commands::cmd_filter(&FilterArgs {
            input: a.input.clone(),
            kind: a.kind.clone(),
            size: a.size,
            weights: None,
            output: a.out.clone(),
        })?,
        Command::Nms(a) => commands::cmd_nms(
            &run_cfg,
            &NmsArgs {
                input: a.input.clone(),
                threshold: a.threshold,
            },
        )?,
        Command::Flops(a) => commands::cmd_flops(&FlopsArgs {
            model: a.model.clone(),
            hpf: a.hpf,
        })?,
        Command::Tile(a) => commands::cmd_tile(&TileArgs {
            image_w: a.image_w,
            image_h: a.image_h,
            patch: a.patch,
            overlap: a.overlap,
            overlap_is_step: a.overlap_is_step,
            annotations: a.annotations.clone(),
            out_dir: a.out_dir.clone(),
            min_area_fraction: a.min_area_fraction,
        })?,
        Command::Stats(a) => commands::cmd_stats(&StatsArgs {
            annotations: a.annotations.clone(),
            bin_edges: a.bin_edges.clone(),
        })?,
    };
    if let Some(obj) = report.config.as_object_mut() {
        obj.insert("seed".into(), serde_json::json!(cli.seed));
    }
    report.emit(cli.format, cli.output.as_deref())?;
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
