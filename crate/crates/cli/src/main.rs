use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mixwalk_core::experiment::{
    leaderboard, merge_results, run_experiment, simulate, simulation_csv, ExperimentConfig, ExperimentKind,
    Report,
};

#[derive(Parser)]
#[command(name = "mixwalk", version, about = "Mixture self-interacting random walk experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Summarise one trajectory per grid point.
    Simulate(RunArgs),
    /// Run an experiment and print its report.
    Estimate(RunArgs),
    /// Run an experiment and write CSV and JSON summary files.
    Sweep(RunArgs),
    /// Merge partial summaries that share a config digest.
    Merge {
        /// Summary JSON files produced by `sweep` or `estimate --out`.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Render a saved summary.
    Report {
        summary: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    replicas: Option<u64>,
    #[arg(long)]
    replica_start: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl RunArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut config = ExperimentConfig::load(&self.config)
            .with_context(|| format!("reading config {}", self.config.display()))?;
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(w) = self.workers {
            config.workers = Some(w);
        }
        if let Some(r) = self.replicas {
            config.replicas = r;
        }
        if let Some(s) = self.replica_start {
            config.replica_start = s;
        }
        if let Some(out) = &self.out {
            config.out_dir = Some(out.display().to_string());
        }
        Ok(config)
    }
}

fn render(report: &Report, format: Format) -> Result<String> {
    Ok(match format {
        Format::Csv => report.to_csv()?,
        Format::Json => report.to_json()? + "\n",
    })
}

fn write_report(report: &Report, dir: &Path) -> Result<()> {
    let (csv, json) = report.write_outputs(dir)?;
    eprintln!("wrote {}", csv.display());
    eprintln!("wrote {}", json.display());
    Ok(())
}

fn diagnostics(report: &Report) {
    match report.kind {
        ExperimentKind::Strategy => {
            eprintln!("strategy leaderboard (mean range, best first):");
            for (n, name, e) in leaderboard(report) {
                eprintln!("  n={n:<8} {name:<15} {:.3} [{:.3}, {:.3}]", e.point, e.ci_lo, e.ci_hi);
            }
        }
        ExperimentKind::Shape => {
            let points: Vec<_> = report
                .rows
                .iter()
                .filter_map(|r| report.row_estimate(r).map(|e| (r.n, e)))
                .collect();
            for (n, e) in &points {
                eprintln!("  n={n:<8} E[W/H] = {:.5} [{:.5}, {:.5}]", e.point, e.ci_lo, e.ci_hi);
            }
            if let (Some(first), Some(last)) = (points.first(), points.last()) {
                let trend = if last.1.point < first.1.point { "decreasing" } else { "not decreasing" };
                eprintln!("shape ratio {trend} from n={} to n={}", first.0, last.0);
            }
        }
        ExperimentKind::ReturnWindow => match &report.fit {
            Some(fit) => eprintln!(
                "scaling fit: C = {:.4}, relative residual {:.3}, good = {}",
                fit.constant, fit.relative_residual, fit.good
            ),
            None => eprintln!("scaling fit: not available for this grid"),
        },
        _ => {}
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(args) => {
            let config = args.load()?;
            let rows = simulate(&config)?;
            match args.format {
                Format::Csv => print!("{}", simulation_csv(&rows)?),
                Format::Json => println!("{}", serde_json::to_string_pretty(&rows)?),
            }
        }
        Command::Estimate(args) => {
            let config = args.load()?;
            let report = run_experiment(&config)?;
            if let Some(dir) = &args.out {
                write_report(&report, dir)?;
            }
            print!("{}", render(&report, args.format)?);
        }
        Command::Sweep(args) => {
            let config = args.load()?;
            let dir = PathBuf::from(config.out_dir.clone().unwrap_or_else(|| "out".into()));
            let report = run_experiment(&config)?;
            write_report(&report, &dir)?;
            diagnostics(&report);
            print!("{}", render(&report, args.format)?);
        }
        Command::Merge { inputs, out, format } => {
            let parts = inputs
                .iter()
                .map(|p| {
                    let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                    Report::from_json(&text).with_context(|| format!("parsing {}", p.display()))
                })
                .collect::<Result<Vec<_>>>()?;
            let merged = merge_results(parts)?;
            if let Some(dir) = &out {
                write_report(&merged, dir)?;
            }
            print!("{}", render(&merged, format)?);
        }
        Command::Report { summary, format } => {
            let text = std::fs::read_to_string(&summary).with_context(|| format!("reading {}", summary.display()))?;
            let report = Report::from_json(&text)?;
            diagnostics(&report);
            print!("{}", render(&report, format)?);
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    err.chain()
        .find_map(|e| e.downcast_ref::<mixwalk_core::Error>())
        .map(|e| e.exit_code() as u8)
        .unwrap_or(2)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
