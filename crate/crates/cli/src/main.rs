use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use see_core::experiment::{absolutize_table, Experiment, Summary};
use see_core::export;
use see_core::threads::threads_from_env;
use see_core::{parse_config_str, verify_run, SeeConfig, SeeError};

/// Safe equilibrium exploration experiments.
#[derive(Parser, Debug)]
#[command(name = "see", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Explore until equilibrium and write per-iteration snapshots.
    Run(RunArgs),
    /// Write the feasible zone of the true model.
    Baseline(RunArgs),
    /// Re-check every invariant of a finished run from its snapshots.
    Verify {
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-render CSV and PGM files from stored snapshots.
    Export {
        #[arg(long)]
        out: PathBuf,
        /// Skip the PGM heatmaps.
        #[arg(long)]
        no_pgm: bool,
    },
    /// Run one experiment per `--set` entry and print a summary table.
    /// Each entry may hold several comma-separated assignments.
    Sweep(RunArgs),
}

#[derive(clap::Args, Debug)]
struct RunArgs {
    /// JSON config; keys missing from it take the system defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// `key=value` override, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

/// Failure classes with their exit codes.
enum Failure {
    Usage(anyhow::Error),
    Solver(anyhow::Error),
    Verify(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Solver(_) => 2,
            Failure::Verify(_) => 3,
        }
    }
}

impl From<SeeError> for Failure {
    fn from(e: SeeError) -> Self {
        match e {
            SeeError::Config(_) | SeeError::Validation(_) => Failure::Usage(e.into()),
            other => Failure::Solver(other.into()),
        }
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn load_config(args: &RunArgs, extra: &[String]) -> Outcome<(SeeConfig, PathBuf)> {
    let (text, base) = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .map_err(Failure::Usage)?;
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            (text, base)
        }
        None => ("{}".to_string(), PathBuf::from(".")),
    };
    let mut overrides = args.overrides.clone();
    overrides.extend_from_slice(extra);
    let mut config = parse_config_str(&text, &overrides).map_err(|e| {
        let name = args.config.as_ref().map_or("config".into(), |p| p.display().to_string());
        Failure::Usage(anyhow!("{name}: {e}"))
    })?;
    absolutize_table(&mut config, &base).map_err(|e| Failure::Usage(e.into()))?;
    Ok((config, base))
}

fn experiment(config: SeeConfig, base: &Path) -> Outcome<Experiment> {
    Experiment::new(config, Some(base)).map_err(Failure::from)
}

fn run(args: &RunArgs) -> Outcome<()> {
    let (config, base) = load_config(args, &[])?;
    let exp = experiment(config, &base)?;
    let (_, summary) = exp.run(Some(&args.out)).map_err(Failure::from)?;
    print!("{}", table(&[("run".to_string(), summary)]));
    Ok(())
}

fn baseline(args: &RunArgs) -> Outcome<()> {
    let (config, base) = load_config(args, &[])?;
    let exp = experiment(config, &base)?;
    exp.write_baseline(&args.out).map_err(Failure::from)?;
    let states = exp.baseline.region().iter().filter(|&&b| b).count();
    println!("baseline: {} pairs, {states} states", exp.baseline.len());
    Ok(())
}

fn verify(out: &Path) -> Outcome<()> {
    let report = verify_run(out).map_err(|e| Failure::Verify(e.to_string()))?;
    if report.ok() {
        println!("verified {} iterations, {} checks passed", report.iterations, report.checks);
        Ok(())
    } else {
        Err(Failure::Verify(report.failures.join("\n")))
    }
}

fn rerender(out: &Path, pgm: bool) -> Outcome<()> {
    let config: SeeConfig = export::read_json(&out.join(export::CONFIG_FILE)).map_err(Failure::from)?;
    let system = config.build_system(None).map_err(Failure::from)?;
    let done = export::rerender(out, &system, pgm).map_err(Failure::from)?;
    println!("re-rendered {} iterations", done.len());
    Ok(())
}

/// Splits `a=1,b=[1,2]` at commas that start a new assignment.
fn split_assignments(entry: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut depth = 0i32;
    let mut cur = String::new();
    for ch in entry.chars() {
        match ch {
            '[' | '{' => depth += 1,
            ']' | '}' => depth -= 1,
            ',' if depth == 0 => {
                out.push(std::mem::take(&mut cur));
                continue;
            }
            _ => {}
        }
        cur.push(ch);
    }
    out.push(cur);
    out.into_iter().map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
}

fn sweep(args: &RunArgs) -> Outcome<()> {
    if args.overrides.is_empty() {
        return Err(Failure::Usage(anyhow!("sweep needs at least one --set entry")));
    }
    let base_args = RunArgs {
        config: args.config.clone(),
        out: args.out.clone(),
        overrides: Vec::new(),
    };
    let mut rows = Vec::new();
    for (i, entry) in args.overrides.iter().enumerate() {
        let (config, base) = load_config(&base_args, &split_assignments(entry))?;
        let exp = experiment(config, &base)?;
        let dir = args.out.join(format!("run_{i}"));
        let (_, summary) = exp
            .run(Some(&dir))
            .map_err(|e| Failure::Solver(anyhow!("entry {entry:?}: {e}")))?;
        rows.push((entry.clone(), summary));
    }
    let text = table(&rows);
    export::write_atomic(&args.out.join("sweep.txt"), text.as_bytes()).map_err(Failure::from)?;
    let json: Vec<_> = rows
        .iter()
        .map(|(e, s)| serde_json::json!({"entry": e, "summary": s.summary}))
        .collect();
    export::write_json(&args.out.join("sweep.json"), &json).map_err(Failure::from)?;
    print!("{text}");
    Ok(())
}

fn table(rows: &[(String, Summary)]) -> String {
    let width = rows.iter().map(|(e, _)| e.len()).max().unwrap_or(0).max(5);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<width$}  {:>10}  {:>8}  {:>9}  {:>10}  {}",
        "entry", "iterations", "recall", "ud_inside", "ud_outside", "status"
    );
    for (entry, sum) in rows {
        let r = &sum.summary;
        let _ = writeln!(
            s,
            "{:<width$}  {:>10}  {:>8}  {:>9}  {:>10}  {}",
            entry,
            r.iterations,
            r.recall_text(),
            r.ud_inside_text(),
            r.ud_outside_text(),
            serde_json::to_value(r.status).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
        );
    }
    s
}

fn execute(cli: Cli) -> Outcome<()> {
    let threads = threads_from_env().map_err(Failure::from)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::Usage(anyhow!("thread pool: {e}")))?;
    match &cli.command {
        Command::Run(a) => run(a),
        Command::Baseline(a) => baseline(a),
        Command::Verify { out } => verify(out),
        Command::Export { out, no_pgm } => rerender(out, !no_pgm),
        Command::Sweep(a) => sweep(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(e) => eprintln!("error: {e:#}"),
                Failure::Solver(e) => eprintln!("solver error: {e:#}"),
                Failure::Verify(msg) => eprintln!("verification failed:\n{msg}"),
            }
            ExitCode::from(f.code())
        }
    }
}
