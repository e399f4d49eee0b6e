use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use harq_noma::experiment::{
    diversity_table, emit_figure, figure_raw_specs, fitted_diversity, run_experiment, write_results, write_rows,
    ExperimentResult, ExperimentSpec, FigureId, Format, DIVERSITY_COLUMNS,
};
use harq_noma::montecarlo::DEFAULT_TRIALS;

/// Outage and diversity experiments for HARQ-aided downlink NOMA.
#[derive(Debug, Parser)]
#[command(name = "harq-noma", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the sweep described by a spec file.
    Run {
        spec: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Print a least-squares diversity fit per curve to stderr.
        #[arg(long)]
        fit: bool,
    },
    /// Reproduce a built-in figure (fig1 .. fig5).
    Figure {
        id: String,
        #[command(flatten)]
        common: Common,
        /// Print the figure's spec files as JSON instead of running them.
        #[arg(long)]
        dump_spec: bool,
        #[arg(long)]
        fit: bool,
    },
    /// Closed-form diversity orders for a spec file.
    Diversity {
        spec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "csv")]
        format: Format,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Monte Carlo trials per point (overrides the spec file).
    #[arg(long)]
    trials: Option<u64>,
    /// RNG seed (overrides the spec file).
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: Format,
    /// Worker threads. Results do not depend on this.
    #[arg(long)]
    workers: Option<usize>,
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot write {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        Some(0) => anyhow::bail!("--workers must be at least 1"),
        Some(n) => Ok(rayon::ThreadPoolBuilder::new().num_threads(n).build()?.install(f)),
        None => Ok(f()),
    }
}

fn apply_overrides(spec: ExperimentSpec, common: &Common) -> Result<ExperimentSpec> {
    let spec = match common.trials {
        Some(t) => spec.with_trials(t)?,
        None => spec,
    };
    Ok(match common.seed {
        Some(s) => spec.with_seed(s),
        None => spec,
    })
}

fn print_fits(result: &ExperimentResult) {
    let mut groups: BTreeMap<(String, String, usize), Vec<_>> = BTreeMap::new();
    for row in &result.rows {
        groups
            .entry((row.label.clone(), row.scheme.to_string(), row.user))
            .or_default()
            .push(row.clone());
    }
    for ((label, scheme, user), rows) in groups {
        match fitted_diversity(&rows) {
            Some(d) => eprintln!("fit {label} {scheme} user {user}: d ~ {d:.3}"),
            None => eprintln!("fit {label} {scheme} user {user}: not enough positive estimates"),
        }
    }
}

/// Writes the table and turns sandwich violations into a failing exit code.
fn finish(result: &ExperimentResult, common: &Common, fit: bool) -> Result<ExitCode> {
    let mut out = open_output(common.out.as_deref())?;
    write_results(result, common.format, &mut out)?;
    out.flush()?;
    if fit {
        print_fits(result);
    }
    let failures = result.sandwich_failures();
    if failures.is_empty() {
        return Ok(ExitCode::SUCCESS);
    }
    eprintln!("{} of {} rows fail the bound check:", failures.len(), result.rows.len());
    for r in failures {
        eprintln!(
            "  {} {} user {} at {:.1} dBW: p_mc={:?} bounds=[{:?}, {:?}] closed_form={:?}",
            r.label, r.scheme, r.user, r.p1_dbw, r.p_mc, r.p_lower_bound, r.p_upper_bound, r.p_closed_form
        );
    }
    Ok(ExitCode::from(2))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { spec, common, fit } => {
            let parsed =
                ExperimentSpec::from_path(&spec).with_context(|| format!("invalid spec {}", spec.display()))?;
            let parsed = apply_overrides(parsed, &common)?;
            let result = with_workers(common.workers, || run_experiment(&parsed))??;
            finish(&result, &common, fit)
        }
        Command::Figure {
            id,
            common,
            dump_spec,
            fit,
        } => {
            let id: FigureId = id.parse()?;
            if dump_spec {
                let mut out = open_output(common.out.as_deref())?;
                write_rows(&figure_raw_specs(id), &[], Format::Json, &mut out)?;
                out.flush()?;
                return Ok(ExitCode::SUCCESS);
            }
            let trials = common.trials.unwrap_or(DEFAULT_TRIALS);
            let seed = common.seed.unwrap_or(0);
            let result = with_workers(common.workers, || emit_figure(id, trials, seed))??;
            finish(&result, &common, fit)
        }
        Command::Diversity { spec, out, format } => {
            let parsed =
                ExperimentSpec::from_path(&spec).with_context(|| format!("invalid spec {}", spec.display()))?;
            let rows = diversity_table(&parsed)?;
            let mut w = open_output(out.as_deref())?;
            write_rows(&rows, &DIVERSITY_COLUMNS, format, &mut w)?;
            w.flush()?;
            Ok(ExitCode::SUCCESS)
        }
    }
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
