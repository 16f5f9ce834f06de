//! Command-line front end: run one configuration, sweep purification
//! rounds or link lengths, and summarize per-trial CSVs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qlink::ruleset::PurifyMethod;
use qlink::simcore::{
    output, parse_config, run_bootstrap, run_experiment, write_csv, write_outputs, CsvRow,
    ExperimentConfig, TrialResult,
};

#[derive(Parser)]
#[command(name = "qlink", version, about = "Two-node quantum repeater link simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Configuration file (key = value; defaults apply when omitted).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base random seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Trial count (overrides the config).
    #[arg(long)]
    trials: Option<u32>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured experiment and write summary, _dm and CSV files.
    Run {
        #[command(flatten)]
        common: CommonArgs,
        /// Write the structured event trace of the first trial.
        #[arg(long)]
        trace: bool,
    },
    /// Sweep purification rounds (bootstrapping) or link lengths.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Highest purification round to try.
        #[arg(long, default_value_t = 8)]
        max_rounds: u32,
        /// Comma-separated total link lengths in km; sweeps rounds at
        /// each length.
        #[arg(long, value_delimiter = ',')]
        lengths: Vec<f64>,
    },
    /// Aggregate one or more per-trial CSV files into a summary table.
    Report {
        /// CSV files produced by `run` or `sweep`.
        files: Vec<PathBuf>,
    },
}

const EXIT_CONFIG: u8 = 2;
const EXIT_TIMEOUT_PARTIAL: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { common, trace } => cmd_run(common, trace),
        Command::Sweep {
            common,
            max_rounds,
            lengths,
        } => cmd_sweep(common, max_rounds, lengths),
        Command::Report { files } => cmd_report(&files),
    }
}

fn load_config(common: &CommonArgs) -> Result<ExperimentConfig, ExitCode> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = match std::fs::read_to_string(path) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: cannot read {}: {e}", path.display());
                    return Err(ExitCode::from(EXIT_CONFIG));
                }
            };
            match parse_config(&text) {
                Ok(cfg) => cfg,
                Err(e) => {
                    eprintln!("error: {e}");
                    return Err(ExitCode::from(EXIT_CONFIG));
                }
            }
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = common.trials {
        cfg.trials = trials;
    }
    Ok(cfg)
}

fn csv_row(cfg: &ExperimentConfig, trial: u32, r: &TrialResult) -> CsvRow {
    let method = PurifyMethod::from_type_id(cfg.purification_type)
        .map(|m| m.name().to_string())
        .unwrap_or_else(|_| cfg.purification_type.to_string());
    CsvRow {
        trial,
        seed: cfg.seed + trial as u64,
        rounds: cfg.initial_purification,
        method,
        architecture: cfg.architecture.name().to_string(),
        total_km: cfg.total_length_km,
        num_measure: cfg.num_measure,
        fidelity: r.stats.fidelity_reconstructed,
        fidelity_actual: r.stats.fidelity_actual,
        bellpair_per_sec: r.stats.throughput,
        tomography_time_s: r.output.tomography_time_s,
        god_clean: r.god.clean,
        god_x: r.god.x,
        god_y: r.god.y,
        god_z: r.god.z,
        god_other: r.god.other,
        decomposition: r.output.decomposition,
        timed_out: r.timed_out,
    }
}

fn cmd_run(common: CommonArgs, trace: bool) -> ExitCode {
    let cfg = match load_config(&common) {
        Ok(c) => c,
        Err(code) => return code,
    };
    if let Err(e) = std::fs::create_dir_all(&common.out) {
        eprintln!("error: cannot create {}: {e}", common.out.display());
        return ExitCode::from(EXIT_CONFIG);
    }
    if trace {
        match qlink::simcore::run_trial_traced(&cfg, cfg.seed) {
            Ok(r) => {
                let path = common.out.join(format!("{}_trace", cfg.tomography_output_filename));
                if let Some(t) = &r.trace {
                    if let Err(e) = std::fs::write(&path, t) {
                        eprintln!("error: cannot write {}: {e}", path.display());
                        return ExitCode::from(EXIT_CONFIG);
                    }
                    println!("wrote {}", path.display());
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_CONFIG);
            }
        }
    }
    let report = match run_experiment(&cfg, cfg.trials) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };

    // Summary and density files reflect the first trial, matching a
    // single-seed run; the CSV carries every trial.
    let first = &report.trials[0];
    let base = common.out.join(&cfg.tomography_output_filename);
    if let Err(e) = write_outputs(&first.output, &first.density, &base) {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_CONFIG);
    }
    let rows: Vec<CsvRow> = report
        .trials
        .iter()
        .enumerate()
        .map(|(i, r)| csv_row(&cfg, i as u32, r))
        .collect();
    let csv_path = common.out.join(format!("{}.csv", cfg.tomography_output_filename));
    if let Err(e) = std::fs::write(&csv_path, write_csv(&rows)) {
        eprintln!("error: cannot write {}: {e}", csv_path.display());
        return ExitCode::from(EXIT_CONFIG);
    }

    let a = &report.aggregate;
    println!(
        "{} | {} km {} | rounds={} | trials={}",
        cfg.tomography_output_filename,
        cfg.total_length_km,
        cfg.architecture.name(),
        cfg.initial_purification,
        a.trials
    );
    println!(
        "fidelity mean={:.6} sigma={:.6} min={:.6} max={:.6} |r-a|={:.6}",
        a.mean_fidelity, a.stddev_fidelity, a.min_fidelity, a.max_fidelity, a.mean_abs_diff
    );
    println!("throughput mean={:.3}/s", a.mean_throughput);
    println!("wrote {}, {}_dm, {}", base.display(), base.display(), csv_path.display());

    if report.trials.iter().any(|t| t.timed_out) {
        eprintln!("warning: at least one trial timed out; outputs are partial");
        return ExitCode::from(EXIT_TIMEOUT_PARTIAL);
    }
    ExitCode::SUCCESS
}

fn cmd_sweep(common: CommonArgs, max_rounds: u32, lengths: Vec<f64>) -> ExitCode {
    let base_cfg = match load_config(&common) {
        Ok(c) => c,
        Err(code) => return code,
    };
    if let Err(e) = std::fs::create_dir_all(&common.out) {
        eprintln!("error: cannot create {}: {e}", common.out.display());
        return ExitCode::from(EXIT_CONFIG);
    }
    let lengths = if lengths.is_empty() {
        vec![base_cfg.total_length_km]
    } else {
        lengths
    };
    let mut rows = Vec::new();
    let mut timed_out = false;
    for length in lengths {
        let mut cfg = base_cfg.clone();
        cfg.total_length_km = length;
        let rounds = match run_bootstrap(&cfg, max_rounds, cfg.trials) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_CONFIG);
            }
        };
        println!("== {} km {} ==", length, cfg.architecture.name());
        println!("rounds  mean_F    sigma     throughput/s");
        for round in &rounds {
            let a = &round.report.aggregate;
            println!(
                "{:>6}  {:.6}  {:.6}  {:>12.3}",
                round.rounds, a.mean_fidelity, a.stddev_fidelity, a.mean_throughput
            );
            let mut round_cfg = cfg.clone();
            round_cfg.initial_purification = round.rounds;
            for (i, r) in round.report.trials.iter().enumerate() {
                timed_out |= r.timed_out;
                rows.push(csv_row(&round_cfg, i as u32, r));
            }
        }
    }
    let csv_path = common
        .out
        .join(format!("{}_sweep.csv", base_cfg.tomography_output_filename));
    if let Err(e) = std::fs::write(&csv_path, write_csv(&rows)) {
        eprintln!("error: cannot write {}: {e}", csv_path.display());
        return ExitCode::from(EXIT_CONFIG);
    }
    println!("wrote {}", csv_path.display());
    if timed_out {
        eprintln!("warning: at least one trial timed out; outputs are partial");
        return ExitCode::from(EXIT_TIMEOUT_PARTIAL);
    }
    ExitCode::SUCCESS
}

fn cmd_report(files: &[PathBuf]) -> ExitCode {
    if files.is_empty() {
        eprintln!("error: no CSV files given");
        return ExitCode::from(EXIT_CONFIG);
    }
    println!("file,group,trials,mean_fidelity,sigma,min,max,mean_throughput");
    for file in files {
        let text = match std::fs::read_to_string(file) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("error: cannot read {}: {e}", file.display());
                return ExitCode::from(EXIT_CONFIG);
            }
        };
        match summarize_csv(file, &text) {
            Ok(lines) => {
                for l in lines {
                    println!("{l}");
                }
            }
            Err(e) => {
                eprintln!("error: {} is not a trial CSV: {e}", file.display());
                return ExitCode::from(EXIT_CONFIG);
            }
        }
    }
    ExitCode::SUCCESS
}

/// Groups rows by (method, architecture, rounds, length) and aggregates
/// each group.
fn summarize_csv(path: &Path, text: &str) -> Result<Vec<String>, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty file")?;
    if header != output::CSV_HEADER {
        return Err("unexpected header".to_string());
    }
    let mut groups: std::collections::BTreeMap<String, Vec<(f64, f64)>> =
        std::collections::BTreeMap::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() < 21 {
            return Err(format!("short row: {line}"));
        }
        let group = format!("{}-{}-r{}-{}km", cols[3], cols[4], cols[2], cols[5]);
        let fidelity: f64 = cols[7].parse().map_err(|_| "bad fidelity")?;
        let throughput: f64 = cols[9].parse().map_err(|_| "bad throughput")?;
        groups.entry(group).or_default().push((fidelity, throughput));
    }
    let mut out = Vec::new();
    for (group, rows) in groups {
        let n = rows.len() as f64;
        let mean_f = rows.iter().map(|r| r.0).sum::<f64>() / n;
        let var = if rows.len() > 1 {
            rows.iter().map(|r| (r.0 - mean_f).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let min = rows.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
        let max = rows.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max);
        let mean_t = rows.iter().map(|r| r.1).sum::<f64>() / n;
        out.push(format!(
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.3}",
            path.display(),
            group,
            rows.len(),
            mean_f,
            var.sqrt(),
            min,
            max,
            mean_t
        ));
    }
    Ok(out)
}
