use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use losmimo::harness::{self, append_csv, load_scenario_dir, psd_check, rel_improvements, run_scenario, write_rows, SweepRow};
use losmimo::scenario::{PnSpec, Scenario};
use losmimo::validation::{self, ValidationOptions};

#[derive(Parser)]
#[command(name = "losmimo", version, about = "LOS MIMO phase-noise link simulator")]
struct Cli {
    /// Master seed; overrides the scenario's `seed`.
    #[arg(long, global = true, env = "LOSMIMO_SEED")]
    seed: Option<u64>,

    /// Frames per SNR point; overrides the scenario's `trials`.
    #[arg(long, global = true)]
    trials: Option<u64>,

    /// Worker threads (0 = one per CPU).
    #[arg(long, global = true, env = "LOSMIMO_WORKERS", default_value_t = 0)]
    workers: usize,

    /// Output CSV path (appended to; header written when the file is new).
    /// Results go to stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file (or built-in preset name).
    Simulate { scenario: String },
    /// Run every `*.scn` file in a directory, in file-name order.
    Sweep { dir: PathBuf },
    /// Check the PSD of a generated phase path against its model, e.g.
    /// `wiener:1e-4`, `beta:8000`, `mask:reynolds85`, `mask:1e6=-115`,
    /// `maskfile:osc.txt;taps=8193`.
    Psd {
        spec: String,
        /// Path length in samples.
        #[arg(long, default_value_t = 1 << 22)]
        samples: usize,
    },
    /// Run the acceptance criteria and report pass/fail for each.
    Validate {
        /// Only run the listed criteria (1-8).
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
        /// Include the N = 96 topology point.
        #[arg(long)]
        full: bool,
    },
    /// List the built-in presets.
    Presets,
}

fn load(arg: &str) -> anyhow::Result<Scenario> {
    let path = Path::new(arg);
    if !path.exists() && harness::PRESETS.iter().any(|(name, _)| *name == arg) {
        return Ok(harness::preset(arg)?);
    }
    Scenario::load(path).with_context(|| format!("loading scenario {arg}"))
}

fn apply_overrides(cli: &Cli, s: &mut Scenario) {
    if let Some(seed) = cli.seed {
        s.seed = seed;
    }
    if let Some(trials) = cli.trials {
        s.trials = trials;
    }
}

fn emit(cli: &Cli, rows: &[SweepRow]) -> anyhow::Result<()> {
    match &cli.out {
        Some(path) => append_csv(path, rows)?,
        None => write_rows(std::io::stdout().lock(), rows, true)?,
    }
    let mut err = std::io::stderr().lock();
    for r in rel_improvements(rows) {
        let value = r.value.map_or_else(|| "n/a".to_string(), |v| format!("{v:.6}"));
        writeln!(
            err,
            "{} N={} snr={} dB: SER {:.4e} -> {:.4e} ({} errors / {} symbols), rel. improvement {value}",
            r.scenario_id, r.antennas, r.snr_db, r.ser, r.ser_compensated, r.compensated_errors, r.compensated_symbols
        )?;
    }
    Ok(())
}

fn run(cli: &Cli) -> anyhow::Result<bool> {
    match &cli.command {
        Command::Simulate { scenario } => {
            let mut s = load(scenario)?;
            apply_overrides(cli, &mut s);
            let rows = run_scenario(&s, cli.workers).with_context(|| format!("running scenario `{}`", s.id))?;
            emit(cli, &rows)?;
        }
        Command::Sweep { dir } => {
            let mut scenarios = load_scenario_dir(dir)?;
            if scenarios.is_empty() {
                eprintln!("no .scn files in {}", dir.display());
            }
            let mut rows = Vec::new();
            for s in &mut scenarios {
                apply_overrides(cli, s);
                rows.extend(run_scenario(s, cli.workers).with_context(|| format!("running scenario `{}`", s.id))?);
            }
            emit(cli, &rows)?;
        }
        Command::Psd { spec, samples } => {
            let pn: PnSpec = spec.parse()?;
            let report = psd_check(&pn, None, *samples, cli.seed.unwrap_or(1))?;
            match &cli.out {
                Some(path) => {
                    let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
                    report.write_csv(file)?;
                }
                None => report.write_csv(std::io::stdout().lock())?,
            }
            for b in &report.bands {
                eprintln!(
                    "{:>12.4e} - {:>12.4e} Hz: estimate {:8.2} dBc/Hz, target {:8.2} dBc/Hz",
                    b.lo_hz, b.hi_hz, b.estimate_db, b.target_db
                );
            }
            let verdict = if report.passed() { "PASS" } else { "FAIL" };
            eprintln!("{verdict}: max band deviation {:.2} dB (tolerance {} dB)", report.max_deviation_db(), report.tolerance_db);
            return Ok(report.passed());
        }
        Command::Validate { only, full } => {
            let opts = ValidationOptions {
                seed: cli.seed.unwrap_or(validation::DEFAULT_SEED),
                workers: cli.workers,
                include_n96: *full,
            };
            let mut all_passed = true;
            for id in 1..=validation::CRITERIA {
                if !only.is_empty() && !only.contains(&id) {
                    continue;
                }
                let c = validation::run_criterion(id, &opts)?;
                println!("{c}");
                all_passed &= c.passed;
            }
            return Ok(all_passed);
        }
        Command::Presets => {
            for (name, _) in harness::PRESETS {
                println!("{name}");
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn unknown_scenario_is_an_error() {
        assert!(load("/nonexistent/scenario.scn").is_err());
        assert!(load("fig2a-nopn").is_ok());
    }

    #[test]
    fn overrides_apply() {
        let cli = Cli::parse_from(["losmimo", "--seed", "7", "--trials", "3", "presets"]);
        let mut s = Scenario::new("x", vec![1.0]);
        apply_overrides(&cli, &mut s);
        assert_eq!((s.seed, s.trials), (7, 3));
    }

    #[test]
    fn bad_model_spec_is_an_error() {
        let cli = Cli::parse_from(["losmimo", "psd", "bogus"]);
        assert!(run(&cli).is_err());
    }
}
