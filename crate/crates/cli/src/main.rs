use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use mmwave_sim::runner::{
    compare_models, run_matrix, write_csv, write_csv_to, ComparisonReport, MetricsRow,
};
use mmwave_sim::scenario::{load_config, ScenarioConfig, ScenarioKind};
use mmwave_sim::ChannelModel;

#[derive(Parser)]
#[command(name = "mmwsim", version, about = "mmWave cellular downlink simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario config over its seeds and emit a metrics CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Use seeds 1..=N instead of the config's seed list.
        #[arg(long)]
        seeds: Option<u64>,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Long run: 20 seeds, 10 s grid runs, full walk on the line.
        #[arg(long)]
        full: bool,
        /// Override the config's channel model.
        #[arg(long)]
        model: Option<ChannelModel>,
    },
    /// Run configs under several channel models on paired seeds and compare.
    Compare {
        #[arg(long, num_args = 1.., required = true)]
        configs: Vec<PathBuf>,
        /// Models each config is run with.
        #[arg(long, value_delimiter = ',', default_values_t = ChannelModel::ALL)]
        models: Vec<ChannelModel>,
        #[arg(long)]
        out: PathBuf,
        /// Model the others are compared against.
        #[arg(long, default_value = "scm")]
        reference: ChannelModel,
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(long)]
        full: bool,
        /// Also write the comparison report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

fn prepare(path: &Path, seeds: Option<u64>, full: bool) -> Result<ScenarioConfig> {
    let mut cfg = load_config(path)?;
    if full {
        cfg.seeds = (1..=20).collect();
        cfg.duration_s = match cfg.scenario {
            ScenarioKind::UdpGrid => 10.0,
            ScenarioKind::TcpLine if cfg.layout.ue_speed_mps > 0.0 => {
                cfg.layout.line_length_m / cfg.layout.ue_speed_mps
            }
            ScenarioKind::TcpLine => cfg.duration_s,
        };
    }
    if let Some(n) = seeds {
        if n == 0 {
            bail!("--seeds must be at least 1");
        }
        cfg.seeds = (1..=n).collect();
    }
    cfg.validate()
        .with_context(|| format!("config {}", path.display()))?;
    Ok(cfg)
}

fn emit(rows: &[MetricsRow], out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            write_csv(rows, path).with_context(|| format!("writing {}", path.display()))?
        }
        None => write_csv_to(rows, std::io::stdout().lock())?,
    }
    Ok(())
}

fn print_report(report: &ComparisonReport) -> Result<()> {
    let mut w = std::io::stderr().lock();
    writeln!(
        w,
        "{:<9} {:>9} {:<9} {:>22} {:>22} {:>9}",
        "scenario", "load", "model", "throughput vs ref [%]", "MAC latency vs ref [%]", "speedup"
    )?;
    for e in &report.entries {
        writeln!(
            w,
            "{:<9} {:>9} {:<9} {:>13.2} ± {:<6.2} {:>13.2} ± {:<6.2} {:>9.2}",
            e.scenario.as_str(),
            e.load,
            e.candidate.as_str(),
            e.throughput_delta_pct.mean,
            e.throughput_delta_pct.ci95,
            e.mac_latency_delta_pct.mean,
            e.mac_latency_delta_pct.ci95,
            e.speedup
        )?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            config,
            seeds,
            out,
            full,
            model,
        } => {
            let mut cfg = prepare(&config, seeds, full)?;
            if let Some(m) = model {
                cfg.model = m;
            }
            let rows = run_matrix(std::slice::from_ref(&cfg))?;
            emit(&rows, out.as_deref())
        }
        Command::Compare {
            configs,
            models,
            out,
            reference,
            seeds,
            full,
            report,
        } => {
            let mut cfgs = Vec::new();
            for path in &configs {
                let cfg = prepare(path, seeds, full)?;
                cfgs.extend(models.iter().map(|&m| cfg.with_model(m)));
            }
            let rows = run_matrix(&cfgs)?;
            emit(&rows, Some(&out))?;
            let cmp = compare_models(&rows, reference)?;
            print_report(&cmp)?;
            if let Some(path) = report {
                let json = serde_json::to_string_pretty(&cmp)?;
                std::fs::write(&path, json)
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
