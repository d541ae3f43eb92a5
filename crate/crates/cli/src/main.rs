//! `deputy`: run, verify, inspect and export finite-stage constructions.
//!
//! Exit status: 0 on success, 1 when violations (or a replay mismatch) are
//! found, 2 for usage errors, unreadable snapshots and engine defects.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use deputy_core::dot::{export_dot, View};
use deputy_core::sampler::{build_path, limit_eval, oscillation_witness, readback, Strategy, DEFAULT_MIN_STABLE};
use deputy_core::snapshot::{load, save};
use deputy_core::verifier::{verify, Check};
use deputy_core::{run_with, BinaryString, ConstructionState, NumTuple, RunOptions, ScheduleConfig};
use serde_json::json;

#[derive(Parser)]
#[command(name = "deputy", version, about = "Finite-stage simulator for the deputy construction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a construction and save the snapshot.
    Run {
        #[arg(long)]
        n: u32,
        #[arg(long)]
        stages: u64,
        /// `canonical` or `focused:<root>:<bound>`.
        #[arg(long, default_value = "canonical")]
        schedule: ScheduleConfig,
        /// Snapshot path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Rescan the state for freshness before every stage.
        #[arg(long)]
        paranoid: bool,
    },
    /// Check a snapshot's invariants.
    Verify {
        #[arg(long = "in")]
        input: PathBuf,
        /// `all` or a comma list of codes, tables, constraints, top-layer,
        /// replication, progress, readback.
        #[arg(long, default_value = "all")]
        checks: String,
        /// Also re-execute the run with freshness rescans and compare bytes.
        #[arg(long)]
        paranoid: bool,
    },
    /// Look up tables in a snapshot.
    Query {
        #[arg(long = "in")]
        input: PathBuf,
        #[command(subcommand)]
        what: Query,
    },
    /// Grow a path through the witnesses and evaluate along it.
    Sample(SampleArgs),
    /// Write a Graphviz view of a snapshot.
    Export {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        view: View,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-execute a snapshot's configuration and compare bytes.
    Replay {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

#[derive(Subcommand)]
enum Query {
    /// Γ(σ) and the key that governs it.
    Gamma { sigma: BinaryString },
    /// Δ(σ; x⃗) and the entry deciding it.
    Delta { sigma: BinaryString, args: NumTuple },
    /// Constraints active at σ.
    Active { sigma: BinaryString },
    /// The deputy record with source or image σ.
    Deputy { sigma: BinaryString },
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Number of growth steps.
    #[arg(long, default_value_t = 12)]
    length: u64,
    /// `zeros`, `ones`, `force:<x>` or `through:<σ>`.
    #[arg(long, default_value = "zeros")]
    strategy: Strategy,
    /// Numbers read back from Δ along the path (n = 1).
    #[arg(long, conflicts_with_all = ["limit", "oscillation"])]
    readback: bool,
    /// Iterated limit of level k at a tuple, e.g. `--limit 0 3`.
    #[arg(long, num_args = 2, value_names = ["K", "TUPLE"], conflicts_with = "oscillation")]
    limit: Option<Vec<String>>,
    /// Search for a Δ oscillation below ρ (n = 2).
    #[arg(long, value_name = "RHO")]
    oscillation: Option<BinaryString>,
    /// Agreeing tail length needed for a stable verdict.
    #[arg(long, default_value_t = DEFAULT_MIN_STABLE)]
    min_stable: usize,
}

/// A failure that ends the command with exit status 2.
struct Fatal(String);

impl<E: std::fmt::Display> From<E> for Fatal {
    fn from(e: E) -> Self {
        Fatal(e.to_string())
    }
}

type Outcome = Result<ExitCode, Fatal>;

fn read_state(path: &Path) -> Result<ConstructionState, Fatal> {
    let bytes = fs::read(path).map_err(|e| Fatal(format!("{}: {e}", path.display())))?;
    Ok(load(&bytes)?)
}

fn write_out(out: Option<&Path>, bytes: &[u8]) -> Result<(), Fatal> {
    match out {
        Some(p) => fs::write(p, bytes).map_err(|e| Fatal(format!("{}: {e}", p.display()))),
        None => to_stdout(bytes),
    }
}

/// Writes to stdout; a reader that hung up early is not an error.
fn to_stdout(bytes: &[u8]) -> Result<(), Fatal> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match out.write_all(bytes).and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn print_json(value: &serde_json::Value) -> Result<(), Fatal> {
    let mut text = serde_json::to_string_pretty(value).expect("JSON values serialize");
    text.push('\n');
    to_stdout(text.as_bytes())
}

fn rerun(state: &ConstructionState, paranoid: bool) -> Result<ConstructionState, Fatal> {
    let c = &state.config;
    Ok(run_with(c.n, c.stages, c.schedule.clone(), RunOptions { paranoid })?)
}

fn cmd_run(n: u32, stages: u64, schedule: ScheduleConfig, out: Option<&Path>, paranoid: bool) -> Outcome {
    if n == 0 {
        return Err(Fatal("--n must be at least 1".into()));
    }
    let state = run_with(n, stages, schedule, RunOptions { paranoid })?;
    write_out(out, &save(&state))?;
    eprintln!(
        "n={n} stages={stages}: {} Γ keys, {} Δ entries, {} constraints, {} deputies",
        state.gamma.len(),
        state.delta.len(),
        state.constraints.len(),
        state.deputies.len()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(input: &Path, checks: &str, paranoid: bool) -> Outcome {
    let checks = Check::parse_list(checks).map_err(Fatal)?;
    let state = read_state(input)?;
    let violations = verify(&state, &checks);
    let listing: String = violations.iter().map(|v| format!("{v}\n")).collect();
    to_stdout(listing.as_bytes())?;
    let mut failed = !violations.is_empty();
    if paranoid && save(&rerun(&state, true)?) != save(&state) {
        println!("replay: re-executing the configuration gives a different state");
        failed = true;
    }
    if failed {
        eprintln!("{} violation(s)", violations.len());
        return Ok(ExitCode::from(1));
    }
    eprintln!("clean: {}", checks.iter().map(|c| c.name()).collect::<Vec<_>>().join(", "));
    Ok(ExitCode::SUCCESS)
}

fn cmd_query(input: &Path, what: Query) -> Outcome {
    let state = read_state(input)?;
    let value = match what {
        Query::Gamma { sigma } => json!({
            "sigma": sigma,
            "value": state.gamma.eval(&sigma),
            "key": state.gamma.governing_key(&sigma),
        }),
        Query::Delta { sigma, args } => json!({
            "sigma": sigma,
            "args": args,
            "value": state.delta.eval(&sigma, &args),
            "entry": state.delta.deciding_entry(&sigma, &args).map(|(xi, e)| json!({"xi": xi, "entry": e})),
        }),
        Query::Active { sigma } => json!({
            "sigma": sigma,
            "constraints": state.constraints.active_at(&sigma),
        }),
        Query::Deputy { sigma } => json!({
            "sigma": sigma,
            "as_source": state.deputies.lookup(&sigma),
            "as_image": state.deputies.lookup_image(&sigma),
        }),
    };
    print_json(&value)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_sample(a: SampleArgs) -> Outcome {
    let state = read_state(&a.input)?;
    if let Some(rho) = &a.oscillation {
        let found = oscillation_witness(&state, rho);
        print_json(&json!({ "rho": rho, "witness": found }))?;
        return Ok(ExitCode::SUCCESS);
    }
    let pg = build_path(&state, a.length, &a.strategy);
    let value = if a.readback {
        json!({ "path": pg.path, "readback": readback(&state, &pg.path) })
    } else if let Some(limit) = &a.limit {
        let k: u32 = limit[0].parse().map_err(|e| Fatal(format!("bad level `{}`: {e}", limit[0])))?;
        let args: NumTuple = limit[1].parse().map_err(|e| Fatal(format!("bad tuple `{}`: {e}", limit[1])))?;
        json!({ "path": pg.path, "limit": limit_eval(&state, &pg.path, k, &args, a.min_stable) })
    } else {
        json!({ "path": pg.path, "met": pg.met })
    };
    print_json(&value)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_export(input: &Path, view: View, out: Option<&Path>) -> Outcome {
    let state = read_state(input)?;
    write_out(out, export_dot(&state, view).as_bytes())?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_replay(input: &Path) -> Outcome {
    let bytes = fs::read(input).map_err(|e| Fatal(format!("{}: {e}", input.display())))?;
    let state = load(&bytes)?;
    if save(&rerun(&state, false)?) == bytes {
        eprintln!("replay matches {}", input.display());
        Ok(ExitCode::SUCCESS)
    } else {
        println!("replay: re-executing the configuration gives different bytes");
        Ok(ExitCode::from(1))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { n, stages, schedule, out, paranoid } => cmd_run(n, stages, schedule, out.as_deref(), paranoid),
        Command::Verify { input, checks, paranoid } => cmd_verify(&input, &checks, paranoid),
        Command::Query { input, what } => cmd_query(&input, what),
        Command::Sample(args) => cmd_sample(args),
        Command::Export { input, view, out } => cmd_export(&input, view, out.as_deref()),
        Command::Replay { input } => cmd_replay(&input),
    };
    result.unwrap_or_else(|Fatal(msg)| {
        eprintln!("error: {msg}");
        ExitCode::from(2)
    })
}
