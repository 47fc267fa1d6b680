//! The `hyperlab` experiment runner.
//!
//! ```text
//! hyperlab <kind> --seed N --out DIR [--config PATH] [--threads K] [--quick]
//! hyperlab replay REPORT --out DIR [--threads K]
//! ```
//!
//! Exit status: 0 pass, 1 fail (or a replay mismatch), 2 inconclusive,
//! 3 usage or configuration error. Configuration errors and an unwritable
//! output directory are reported before any computation.

pub mod config;
pub mod kinds;
pub mod output;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;

use hyperlab::report::{Verdict, VERSION};

use config::{Config, Kind};
use output::{fingerprint, read_report, sha256_hex, write_report, write_tables, Artifact, StoredReport, REPORT_FILE};

/// Default worker count when `--threads` is absent.
pub const THREADS_ENV: &str = "HYPERLAB_THREADS";

pub const EXIT_USAGE: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "hyperlab", version, about = "Run one experiment and write report.jsonl plus CSV data")]
struct RunArgs {
    /// simulate-vrjp | sample-hn | sample-h22 | verify-susy | verify-dynkin | verify-mw | scan-h
    kind: String,
    /// Flat TOML; absent keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
    /// Shrink every budget for a smoke run (recorded in the config echo).
    #[arg(long)]
    quick: bool,
}

#[derive(Parser, Debug)]
#[command(name = "hyperlab replay", about = "Re-run a stored report and compare its data byte for byte")]
struct ReplayArgs {
    report: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("computation failed: {0}")]
    Compute(#[from] hyperlab::Error),
    #[error("replay mismatch: {0}")]
    Mismatch(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Compute(_) | CliError::Mismatch(_) => 1,
        }
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

/// Parse `args` (including the program name), run, and return the exit status.
pub fn main_with_args(args: Vec<OsString>) -> i32 {
    let replay = args.get(1).is_some_and(|a| a == "replay");
    let result = if replay {
        let rest: Vec<OsString> = args[..1].iter().chain(&args[2..]).cloned().collect();
        ReplayArgs::try_parse_from(rest).map_err(clap_exit).and_then(|a| replay_cmd(&a).map_err(report_error))
    } else {
        RunArgs::try_parse_from(args).map_err(clap_exit).and_then(|a| run_cmd(&a).map_err(report_error))
    };
    result.unwrap_or_else(|code| code)
}

fn clap_exit(e: clap::Error) -> i32 {
    let _ = e.print();
    if e.use_stderr() {
        EXIT_USAGE
    } else {
        0
    }
}

fn report_error(e: CliError) -> i32 {
    eprintln!("hyperlab: {e}");
    e.exit_code()
}

fn init_threads(threads: Option<usize>) -> Result<(), CliError> {
    let n = match threads {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(v.trim().parse::<usize>().map_err(|_| usage(format!("{THREADS_ENV}={v} is not a thread count")))?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(usage("--threads must be positive"));
        }
        // A second call in one process keeps the first pool; results do not
        // depend on the thread count anyway.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| usage(format!("output directory {}: {e}", dir.display())))?;
    let probe = dir.join(".hyperlab-probe");
    fs::write(&probe, b"").map_err(|e| usage(format!("output directory {} is not writable: {e}", dir.display())))?;
    let _ = fs::remove_file(probe);
    Ok(())
}

struct Finished {
    stored: StoredReport,
    path: PathBuf,
}

/// Run a validated config and write everything under `out`.
fn execute(kind: Kind, cfg: &Config, seed: u64, out: &Path) -> Result<Finished, CliError> {
    let start = Instant::now();
    let outcome = kinds::run(kind, cfg, seed)?;
    let mut report = outcome.report;
    report.config = cfg.echo();
    report.config_hash = sha256_hex(report.config.as_bytes());
    let artifacts = write_tables(out, &outcome.tables).map_err(|e| usage(format!("writing data: {e}")))?;
    report.elapsed_seconds = start.elapsed().as_secs_f64();
    let fp = fingerprint(&report.version, &report.kind, report.seed, &report.config_hash);
    let stored = StoredReport { report, fingerprint: fp, artifacts };
    let path = out.join(REPORT_FILE);
    write_report(&path, &stored).map_err(|e| usage(format!("writing {}: {e}", path.display())))?;
    Ok(Finished { stored, path })
}

fn print_summary(f: &Finished) {
    for c in &f.stored.report.checks {
        let z = c.z.map(|z| format!("  z = {z:.2}")).unwrap_or_default();
        println!("{:<13} {}  {} vs {}{z}", c.verdict.as_str(), c.name, c.lhs, c.rhs);
    }
    for n in &f.stored.report.notes {
        println!("note: {n}");
    }
    println!("overall: {} ({} checks) -> {}", f.stored.report.overall(), f.stored.report.checks.len(), f.path.display());
}

fn run_cmd(args: &RunArgs) -> Result<i32, CliError> {
    let kind: Kind = args.kind.parse().map_err(usage)?;
    let text = match &args.config {
        Some(p) => fs::read_to_string(p).map_err(|e| usage(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    let mut cfg = Config::parse(&text).map_err(usage)?;
    if args.quick {
        cfg.quick();
    }
    cfg.validate(kind).map_err(usage)?;
    prepare_out(&args.out)?;
    init_threads(args.threads)?;
    let finished = execute(kind, &cfg, args.seed, &args.out)?;
    print_summary(&finished);
    let overall = finished.stored.report.overall();
    if overall == Verdict::Inconclusive {
        println!("inconclusive checks are not failures; raise the budgets to settle them");
    }
    Ok(overall.exit_code())
}

fn replay_cmd(args: &ReplayArgs) -> Result<i32, CliError> {
    let old = read_report(&args.report).map_err(usage)?;
    let r = &old.report;
    if r.version != VERSION {
        return Err(usage(format!(
            "refusing to replay: the report was written by version {} and this build is {VERSION}; estimates are only reproducible on the same build",
            r.version
        )));
    }
    if sha256_hex(r.config.as_bytes()) != r.config_hash {
        return Err(CliError::Mismatch("the config echo does not match its recorded hash".into()));
    }
    if fingerprint(&r.version, &r.kind, r.seed, &r.config_hash) != old.fingerprint {
        return Err(CliError::Mismatch("the header fingerprint does not match (seed, kind or config hash altered)".into()));
    }
    let kind: Kind = r.kind.parse().map_err(usage)?;
    let cfg = Config::parse_strict(&r.config).map_err(usage)?;
    cfg.validate(kind).map_err(usage)?;
    prepare_out(&args.out)?;
    init_threads(args.threads)?;
    let new = execute(kind, &cfg, r.seed, &args.out)?;
    let diffs = compare(&old, &new.stored);
    for a in &new.stored.artifacts {
        let same = old.artifacts.iter().any(|o| o == a);
        println!("{} {} ({} bytes)", if same { "identical" } else { "DIFFERS  " }, a.file, a.bytes);
    }
    if diffs.is_empty() {
        println!("replay of {}: byte-identical", args.report.display());
        Ok(0)
    } else {
        Err(CliError::Mismatch(diffs.join("; ")))
    }
}

fn compare(old: &StoredReport, new: &StoredReport) -> Vec<String> {
    let mut diffs = Vec::new();
    let names = |a: &[Artifact]| a.iter().map(|x| x.file.clone()).collect::<Vec<_>>();
    if names(&old.artifacts) != names(&new.artifacts) {
        diffs.push(format!("artifact list {:?} vs {:?}", names(&old.artifacts), names(&new.artifacts)));
    }
    for (o, n) in old.artifacts.iter().zip(&new.artifacts) {
        if o.sha256 != n.sha256 {
            diffs.push(format!("{} digest {} vs {}", o.file, o.sha256, n.sha256));
        }
    }
    let json = |c: &hyperlab::report::CheckRecord| serde_json::to_string(c).unwrap_or_default();
    if old.report.checks.len() != new.report.checks.len() {
        diffs.push(format!("{} checks vs {}", old.report.checks.len(), new.report.checks.len()));
    }
    for (o, n) in old.report.checks.iter().zip(&new.report.checks) {
        if json(o) != json(n) {
            diffs.push(format!("check {} changed", o.name));
        }
    }
    if old.report.lanes != new.report.lanes {
        diffs.push("RNG lane log changed".into());
    }
    diffs
}
