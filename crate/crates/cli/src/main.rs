use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use ehpc_core::harness::figures::{run_figure_suite, FigureOptions, FIGURE_SEED};
use ehpc_core::harness::{
    run_experiment, upper_bound_for, write_csv, ExperimentConfig, LineChart, Series,
};
use ehpc_core::selftest;

#[derive(Parser)]
#[command(
    name = "ehpc",
    version,
    about = "Energy-harvesting power control simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo experiment from a JSON config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Aggregate CSV path (default: config outputs.csv, else <out-dir>/<name>.csv).
        #[arg(long)]
        out_csv: Option<PathBuf>,
        /// Optional SVG plot of the running average utility.
        #[arg(long)]
        out_svg: Option<PathBuf>,
        #[arg(long, env = "EHPC_OUT_DIR", default_value = "out")]
        out_dir: PathBuf,
        /// Override the config's replication count.
        #[arg(long)]
        replications: Option<u64>,
        /// Override the config's horizon.
        #[arg(long)]
        horizon: Option<u64>,
    },
    /// Estimate the upper bound U* for a config's environment.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
    },
    /// Reproduce one or more figure suites.
    Figures {
        /// Figure id 1-8; repeat for several. Defaults to all.
        #[arg(long = "id")]
        ids: Vec<u8>,
        #[arg(long, env = "EHPC_OUT_DIR", default_value = "out")]
        outdir: PathBuf,
        #[arg(long, default_value_t = 200)]
        replications: u64,
        #[arg(long, default_value_t = 5000)]
        horizon: u64,
        /// Oracle samples for the U* reference line; 0 disables it.
        #[arg(long, default_value_t = 1_000_000)]
        oracle_samples: usize,
        #[arg(long, default_value_t = FIGURE_SEED)]
        seed: u64,
    },
    /// Run the built-in sanity checks.
    Selftest,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Simulate {
            config,
            out_csv,
            out_svg,
            out_dir,
            replications,
            horizon,
        } => simulate(&config, out_csv, out_svg, &out_dir, replications, horizon),
        Command::Oracle { config, samples } => {
            let cfg = load(&config)?;
            let start = Instant::now();
            let sol = upper_bound_for(&cfg, samples)?;
            println!("U* = {:.6}", sol.value);
            println!("p* = {:?}", sol.power.as_slice());
            println!(
                "iterations = {}, gradient mapping norm = {:.2e}, samples = {samples}, elapsed = {:.2?}",
                sol.iterations,
                sol.gradient_mapping_norm,
                start.elapsed()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Figures {
            ids,
            outdir,
            replications,
            horizon,
            oracle_samples,
            seed,
        } => {
            let ids = if ids.is_empty() {
                (1..=8).collect()
            } else {
                ids
            };
            let opts = FigureOptions {
                replications,
                horizon,
                oracle_samples,
                master_seed: seed,
            };
            for id in ids {
                let start = Instant::now();
                let res =
                    run_figure_suite(id, &outdir, &opts).with_context(|| format!("figure {id}"))?;
                println!(
                    "figure {id}: {} and {} ({:.1?})",
                    res.csv_path.display(),
                    res.svg_path.display(),
                    start.elapsed()
                );
                if let Some(u) = res.reference {
                    println!("  U* = {u:.4}");
                }
                for c in &res.curves {
                    println!(
                        "  {:<12} final {:.4} +/- {:.4}, scaled slots {}",
                        c.label,
                        c.summary.final_mean_avg_utility,
                        c.summary.final_stderr,
                        c.summary.total_scaled
                    );
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Selftest => {
            let results = selftest::run_all();
            let mut failed = 0;
            for r in &results {
                println!(
                    "[{}] {}: {}",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.name,
                    r.detail
                );
                failed += (!r.passed) as usize;
            }
            if failed > 0 {
                eprintln!("{failed} of {} checks failed", results.len());
                return Ok(ExitCode::FAILURE);
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn load(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))
}

fn simulate(
    config: &Path,
    out_csv: Option<PathBuf>,
    out_svg: Option<PathBuf>,
    out_dir: &Path,
    replications: Option<u64>,
    horizon: Option<u64>,
) -> Result<ExitCode> {
    let mut cfg = load(config)?;
    if let Some(r) = replications {
        cfg.replications = r;
    }
    if let Some(t) = horizon {
        cfg.horizon = t;
    }
    let (rows, summary) = run_experiment(&cfg)?;

    let csv_path = out_csv
        .or_else(|| cfg.outputs.csv.clone())
        .unwrap_or_else(|| out_dir.join(format!("{}.csv", cfg.name)));
    if let Some(parent) = csv_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let file =
        File::create(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?;
    write_csv(BufWriter::new(file), &rows)?;

    if let Some(svg_path) = out_svg.or_else(|| cfg.outputs.svg.clone()) {
        let chart = LineChart {
            title: cfg.name.clone(),
            x_label: "slot t".into(),
            y_label: "running average of expected utility".into(),
            series: vec![Series {
                label: cfg.name.clone(),
                points: rows
                    .iter()
                    .map(|r| (r.slot as f64, r.mean_avg_utility))
                    .collect(),
            }],
            reference: cfg.upper_bound.map(|u| ("U*".to_string(), u)),
        };
        std::fs::write(&svg_path, chart.render())
            .with_context(|| format!("writing {}", svg_path.display()))?;
    }

    println!("{}", serde_json::to_string_pretty(&summary)?);
    if summary.total_violations > 0 {
        bail!("{} battery invariant violations", summary.total_violations);
    }
    Ok(ExitCode::SUCCESS)
}
