//! `fracsing` command line: scenario runs with manifests, and the catalog.

// `!(x > 0.0)` style checks reject NaN on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod scenarios;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use fracsing::catalog;
use config::{RunConfig, Scenario};
use scenarios::RunOutput;

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or data outside the hypotheses; exit 2.
    Config(String),
    /// A solver did not converge or hit a numerical failure; exit 3.
    Solver(String),
    /// An in-run invariant check failed; exit 4.
    Invariant(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Invariant(_) => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Solver(_) => "solver",
            CliError::Invariant(_) => "invariant",
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (CliError::Config(m) | CliError::Solver(m) | CliError::Invariant(m)) = self;
        // one line on stderr, whatever the source message looks like
        write!(f, "error[{}]: {}", self.kind(), m.replace('\n', " "))
    }
}

impl From<fracsing::Error> for CliError {
    fn from(e: fracsing::Error) -> Self {
        use fracsing::Error as E;
        match e {
            E::InvalidParameter(_) => CliError::Config(e.to_string()),
            E::MonotonicityViolation { .. } | E::BracketingViolation { .. } => CliError::Invariant(e.to_string()),
            _ => CliError::Solver(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "fracsing", version, about = "Singular fractional problems on an interval: scenario runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write manifest.json, CSV files and summary.txt.
    Run(RunArgs),
    /// List built-in sources and nonlinearities.
    Catalog {
        /// Print JSON instead of text.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Scenario name; same as --scenario.
    #[arg(value_name = "SCENARIO")]
    positional: Option<Scenario>,
    #[arg(long)]
    scenario: Option<Scenario>,
    /// TOML config, or a manifest.json from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default: runs/<scenario>).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Override a config key, e.g. --set nonlinearity.params.mu=0.3
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn resolve(args: &RunArgs) -> Result<RunConfig, CliError> {
    let mut table = match &args.config {
        Some(p) => config::load_table(p)?,
        None => toml::Table::new(),
    };
    for a in &args.set {
        config::apply_override(&mut table, a)?;
    }
    let mut cfg = config::from_table(table)?;
    if let (Some(a), Some(b)) = (args.positional, args.scenario) {
        if a != b {
            return Err(CliError::Config(format!("scenario given twice: '{a}' and '{b}'")));
        }
    }
    if let Some(sc) = args.scenario.or(args.positional) {
        cfg.scenario = Some(sc);
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Solver(format!("cannot write {}: {e}", path.display()))
}

fn write_outputs(cfg: &RunConfig, out: &RunOutput, dir: &Path, elapsed_s: f64) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut files = Vec::new();
    for t in &out.tables {
        t.write_to(dir).map_err(|e| io_err(dir, e))?;
        files.push(format!("{}.csv", t.name));
    }
    let passed = out.checks.iter().all(|c| c.pass);
    files.push("summary.txt".into());
    let manifest = json!({
        "tool": "fracsing",
        "versions": {
            "cli": env!("CARGO_PKG_VERSION"),
            "core": fracsing::VERSION,
        },
        "scenario": cfg.scenario().as_str(),
        "status": if passed { "ok" } else { "invariant_violation" },
        "config": cfg,
        "timings": { "total_s": elapsed_s },
        "results": out.results,
        "checks": out.checks,
        "outputs": files,
    });
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))?;

    let mut s = format!("scenario: {}\n", cfg.scenario());
    s += &format!("status: {}\n", if passed { "all checks passed" } else { "CHECK FAILED" });
    s += &format!("seed: {}\nelapsed: {elapsed_s:.2} s\n\nchecks:\n", cfg.seed);
    for c in &out.checks {
        let v = if c.pass { "pass" } else { "FAIL" };
        s += &format!("  {v}  {} = {:e} ({})\n", c.name, c.value, c.condition);
    }
    if !out.notes.is_empty() {
        s += "\nnotes:\n";
        for n in &out.notes {
            s += &format!("  {n}\n");
        }
    }
    s += "\nfiles:\n  manifest.json\n";
    for f in &files {
        s += &format!("  {f}\n");
    }
    let path = dir.join("summary.txt");
    fs::write(&path, s).map_err(|e| io_err(&path, e))
}

fn run(args: &RunArgs) -> Result<PathBuf, CliError> {
    let cfg = resolve(args)?;
    let dir = cfg
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(cfg.scenario().as_str()));
    log::info!("running {} into {}", cfg.scenario(), dir.display());
    let start = Instant::now();
    let out = scenarios::run(&cfg)?;
    write_outputs(&cfg, &out, &dir, start.elapsed().as_secs_f64())?;
    let failed: Vec<&str> = out.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        Ok(dir)
    } else {
        Err(CliError::Invariant(format!(
            "failed checks: {} (see {})",
            failed.join(", "),
            dir.join("summary.txt").display()
        )))
    }
}

fn print_catalog(as_json: bool) {
    let entries = catalog::listing();
    if as_json {
        println!("{}", serde_json::to_string_pretty(&entries).expect("listing serializes"));
        return;
    }
    for e in &entries {
        let kind = serde_json::to_value(e.kind).expect("kind serializes");
        println!("{} {}: {}", kind.as_str().unwrap_or_default(), e.name, e.formula);
        for p in &e.params {
            println!("    {} = {} ({})", p.name, p.default, p.doc);
        }
        if let Some(m) = e.monotone_quotient {
            println!("    monotone_quotient: {m}");
        }
        for h in &e.hypotheses {
            println!("    - {h}");
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    // the declared catalog flags must agree with sampling before anything runs
    if let Err(e) = catalog::self_check(-1.0, 1.0, 10.0) {
        eprintln!("{}", CliError::Invariant(e.to_string()));
        return ExitCode::from(4);
    }
    match cli.command {
        Command::Catalog { json } => {
            print_catalog(json);
            ExitCode::SUCCESS
        }
        Command::Run(args) => match run(&args) {
            Ok(dir) => {
                println!("{}", dir.display());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("{e}");
                ExitCode::from(e.code())
            }
        },
    }
}
