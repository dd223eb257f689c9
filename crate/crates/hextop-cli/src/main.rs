use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use hextop::config::{benchmark_config, Benchmark, RunConfig};
use hextop::mask::Polarity;
use hextop::pipeline;
use hextop::sls::SlsStatus;
use hextop::truss::{self, TrussSkeleton, TrussSpec};

#[derive(Parser)]
#[command(
    name = "hextop",
    about = "Topology optimization on honeycomb meshes with elliptical masks and explicit length scales",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full sequence-of-length-scales optimization from a config file.
    Optimize {
        /// Run configuration (TOML).
        config: PathBuf,
        /// Output directory (defaults to the config's [output] dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one of the shipped benchmark problems I-IV.
    Bench {
        /// Benchmark id: I, II, III or IV.
        which: String,
        /// Uniform mesh/mask count scale; cell size grows to keep the
        /// physical domain fixed.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// Mask polarity.
        #[arg(long, default_value = "negative")]
        masks: String,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the resolved config and exit without optimizing.
        #[arg(long)]
        emit_config: bool,
    },
    /// Skeletonize a density-grid CSV (row,col,density).
    Skeletonize {
        input: PathBuf,
        /// Output CSV (defaults to <input>.skeleton.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the closed-form KKT case table for the three-truss example.
    Analytic {
        #[arg(long, default_value_t = 2)]
        p: u32,
        #[arg(long)]
        vstar: f64,
        #[arg(long)]
        xm: f64,
        #[arg(long)]
        eps: f64,
        /// Drop the middle member (x2 = 0).
        #[arg(long)]
        two_member: bool,
        /// Also run the numeric optimizer against the table.
        #[arg(long)]
        cross_check: bool,
    },
    /// Verify analytic gradients against central finite differences.
    FdCheck {
        config: PathBuf,
        /// Number of design-vector components to probe.
        #[arg(long, default_value_t = 25)]
        samples: usize,
    },
    /// Re-render a saved run directory into render.svg.
    Render { dir: PathBuf },
}

fn parse_polarity(s: &str) -> anyhow::Result<Polarity> {
    match s.to_ascii_lowercase().as_str() {
        "negative" | "neg" => Ok(Polarity::Negative),
        "positive" | "pos" => Ok(Polarity::Positive),
        other => bail!("masks must be negative or positive, got {other:?}"),
    }
}

fn print_run_summary(arts: &pipeline::RunArtifacts) {
    let o = &arts.outcome;
    let status = match o.status {
        SlsStatus::Accepted => "accepted",
        SlsStatus::BudgetExhausted => "budget exhausted",
        SlsStatus::StepLimit => "step limit reached",
    };
    println!("status: {status}");
    if o.stage1_exhausted {
        println!("warning: stage I pinned vf at its lower bound with g_max still violated");
    }
    println!("phi = {:.6}  (projected: {:.6})", o.phi, arts.projected.phi);
    println!(
        "vf = {:.4}, g1 = {:.3}, gmin = {:.3}, gmax = {:.3}, eps = {:.1}, bwi = {:.4}",
        o.vf, o.g1, o.gmin, o.gmax, o.eps1, o.bwi
    );
    println!(
        "masks: {} ({} deleted), evaluations: {}, skeleton cells: {}",
        o.masks.masks.len(),
        o.masks_deleted,
        o.evals_used,
        o.skeleton.cells.len()
    );
    println!("artifacts in {}", arts.outdir.display());
}

fn run_optimize(cfg: &RunConfig, out: Option<PathBuf>) -> anyhow::Result<()> {
    let outdir = out.unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    let arts = pipeline::run_to_dir(cfg, &outdir)?;
    print_run_summary(&arts);
    Ok(())
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Optimize { config, out } => {
            let text = std::fs::read_to_string(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let cfg = RunConfig::from_toml(&text)
                .with_context(|| format!("parsing {}", config.display()))?;
            run_optimize(&cfg, out)?;
        }
        Command::Bench {
            which,
            scale,
            masks,
            out,
            emit_config,
        } => {
            let bench: Benchmark = which.parse()?;
            let polarity = parse_polarity(&masks)?;
            let cfg = benchmark_config(bench, scale, polarity)?;
            let default_dir = PathBuf::from(format!(
                "out-bench-{}-x{}",
                which.to_ascii_uppercase(),
                scale
            ));
            let outdir = out.unwrap_or(default_dir);
            if emit_config {
                std::fs::create_dir_all(&outdir)?;
                let path = outdir.join("config.toml");
                std::fs::write(&path, cfg.to_toml())?;
                println!("wrote {}", path.display());
                return Ok(());
            }
            run_optimize(&cfg, Some(outdir))?;
        }
        Command::Skeletonize { input, out } => {
            let output = out.unwrap_or_else(|| input.with_extension("skeleton.csv"));
            let summary = pipeline::skeletonize_file(&input, &output)?;
            println!(
                "{}x{} grid, {} filled cells -> {} skeleton cells in {} iterations{}",
                summary.n_cols,
                summary.n_rows,
                summary.filled,
                summary.skeleton_cells,
                summary.iterations,
                if summary.special_case {
                    " (special case triggered)"
                } else {
                    ""
                }
            );
            println!("wrote {}", output.display());
        }
        Command::Analytic {
            p,
            vstar,
            xm,
            eps,
            two_member,
            cross_check,
        } => {
            let skeleton = if two_member {
                TrussSkeleton::TwoMember
            } else {
                TrussSkeleton::ThreeMember
            };
            let spec = TrussSpec::new(p, vstar, xm, eps, skeleton)?;
            print!("{}", truss::case_table(&spec));
            if cross_check {
                let report = truss::numeric_cross_check(&spec, 3000);
                println!(
                    "numeric: x1 = {:.6}, f = {:.6}, lambda = ({:.6}, {:.6}), status = {:?}",
                    report.nlp.x[0],
                    report.nlp.f,
                    report.nlp.multipliers[0],
                    report.nlp.multipliers[1],
                    report.nlp.status
                );
                if report.width_err.is_finite() {
                    println!(
                        "width error vs best KKT point: {:.2e}, objective gap: {:.2e}",
                        report.width_err, report.objective_gap
                    );
                }
            }
        }
        Command::FdCheck { config, samples } => {
            let text = std::fs::read_to_string(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let cfg = RunConfig::from_toml(&text)
                .with_context(|| format!("parsing {}", config.display()))?;
            let report = pipeline::fd_check(&cfg, samples)?;
            println!(
                "{:<6} {:<6} {:>14} {:>14} {:>10}",
                "comp", "qty", "analytic", "fd", "rel err"
            );
            for row in &report.rows {
                println!(
                    "{:<6} {:<6} {:>14.6e} {:>14.6e} {:>10.2e}",
                    row.component, row.quantity, row.analytic, row.fd, row.rel_err
                );
            }
            println!("max relative error: {:.3e}", report.max_rel_err);
            if !report.passed(1e-4) {
                bail!("gradient check failed (threshold 1e-4)");
            }
        }
        Command::Render { dir } => {
            let out = pipeline::render_state_dir(&dir)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}
