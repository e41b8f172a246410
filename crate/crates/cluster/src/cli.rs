//! The `pmsr` command line.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use num_rational::Ratio;
use pmsr_core::pir::{build_patterns, metrics_report, verify_scheme};
use rand_chacha::ChaCha20Rng;
use rand_core::{OsRng, SeedableRng, TryRngCore};

use crate::config::ClusterConfig;
use crate::coordinator::Coordinator;
use crate::demo;
use crate::local::{self, FailureMode};

#[derive(Debug, Parser)]
#[command(name = "pmsr", version, about = "Privately retrievable MSR-coded storage cluster")]
pub struct Cli {
    /// Cluster config file
    #[arg(long, short, global = true, env = "PMSR_CONFIG", default_value = "pmsr.conf")]
    pub config: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Start or stop the local node daemons
    Cluster {
        #[arg(value_enum)]
        action: ClusterAction,
    },
    /// Store a file as record <RECORD_ID>
    Put { record_id: u32, file: PathBuf },
    /// Retrieve a record without revealing which one
    Get {
        /// Record to retrieve
        #[arg(long = "private", value_name = "F")]
        record: u32,
        /// Seed for the query masks; fresh OS randomness if omitted
        #[arg(long)]
        seed: Option<u64>,
        /// Output file; standard output if omitted
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate the failure of a node
    Fail {
        node: usize,
        #[arg(long, value_enum)]
        mode: Mode,
    },
    /// Regenerate a failed node's shares from live helpers
    Repair {
        node: usize,
        /// Skip the re-encode check of every regenerated share
        #[arg(long)]
        no_verify: bool,
    },
    /// Print the scheme's cost metrics as exact rationals
    Metrics,
    /// Check that the retrieval scheme decodes for this configuration
    Verify,
    /// Run a self-contained worked example
    Demo {
        #[arg(value_enum)]
        name: DemoName,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    #[command(hide = true)]
    Node {
        #[arg(value_enum)]
        action: NodeAction,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ClusterAction {
    Up,
    Down,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Mode {
    Kill,
    Wipe,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DemoName {
    Example1,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NodeAction {
    Serve,
}

fn rational(r: Ratio<i64>) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

fn load(path: &Path) -> Result<ClusterConfig> {
    Ok(ClusterConfig::load(path)?)
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Cluster { action: ClusterAction::Up } => {
            let cfg = load(&cli.config)?;
            let exe = std::env::current_exe().context("cannot locate the pmsr executable")?;
            let started = local::cluster_up(&cfg, &exe)?;
            if started.is_empty() {
                writeln!(out, "cluster already up ({} nodes)", cfg.n)?;
            } else {
                writeln!(out, "started nodes {started:?}")?;
            }
        }
        Command::Cluster { action: ClusterAction::Down } => {
            let cfg = load(&cli.config)?;
            let stopped = local::cluster_down(&cfg)?;
            writeln!(out, "stopped nodes {stopped:?}")?;
        }
        Command::Put { record_id, file } => {
            let coord = Coordinator::new(load(&cli.config)?)?;
            let payload = fs::read(&file).with_context(|| format!("cannot read {}", file.display()))?;
            let stripes = coord.put(record_id, &payload)?;
            writeln!(out, "stored record {record_id}: {} bytes in {stripes} stripe(s)", payload.len())?;
        }
        Command::Get { record, seed, out: path } => {
            let coord = Coordinator::new(load(&cli.config)?)?;
            let mut rng = match seed {
                Some(s) => ChaCha20Rng::seed_from_u64(s),
                None => {
                    let mut key = [0u8; 32];
                    OsRng.try_fill_bytes(&mut key).context("no OS randomness")?;
                    ChaCha20Rng::from_seed(key)
                }
            };
            let report = coord.private_get_with(record, &mut rng)?;
            let summary = format!(
                "retrieved record {record}: {} bytes, {} stripe(s), downloaded {} symbols, cPoP = {}",
                report.payload.len(),
                report.stripes,
                report.downloaded_symbols,
                rational(report.cpop())
            );
            match path {
                Some(p) => {
                    fs::write(&p, &report.payload).with_context(|| format!("cannot write {}", p.display()))?;
                    writeln!(out, "{summary}")?;
                }
                None => {
                    out.write_all(&report.payload)?;
                    eprintln!("{summary}");
                }
            }
        }
        Command::Fail { node, mode } => {
            let cfg = load(&cli.config)?;
            let mode = match mode {
                Mode::Kill => FailureMode::Kill,
                Mode::Wipe => FailureMode::Wipe,
            };
            local::inject_failure(&cfg, node, mode)?;
            writeln!(out, "node {node} failed ({})", if mode == FailureMode::Kill { "killed" } else { "wiped" })?;
        }
        Command::Repair { node, no_verify } => {
            let cfg = load(&cli.config)?;
            let exe = std::env::current_exe().context("cannot locate the pmsr executable")?;
            local::ensure_replacement(&cfg, &exe, node)?;
            let report = Coordinator::new(cfg)?.repair(node, !no_verify)?;
            let ratio = report.ratio().map(rational).unwrap_or_else(|| "-".into());
            writeln!(
                out,
                "repaired node {node} from helpers {:?}: {} share(s), downloaded {} symbols, restored {} symbols, ratio {ratio}{}",
                report.helpers,
                report.regenerated,
                report.downloaded_symbols,
                report.restored_symbols,
                if report.verified { ", verified" } else { "" }
            )?;
        }
        Command::Metrics => {
            let cfg = load(&cli.config)?;
            let m = metrics_report(&cfg.pir_config()?);
            writeln!(out, "SO={}", rational(m.so))?;
            writeln!(out, "cPoP={}", rational(m.cpop))?;
            writeln!(out, "RR={}", rational(m.rr))?;
            writeln!(out, "tradeoff={}", rational(m.tradeoff_product))?;
            writeln!(out, "slack={}", rational(m.slack))?;
        }
        Command::Verify => {
            let cfg = load(&cli.config)?;
            let pir = cfg.pir_config()?;
            let report = verify_scheme(&pir, &cfg.encoding_matrix()?, &build_patterns(&pir, cfg.field()?));
            for (check, ok) in &report.results {
                writeln!(out, "{} {check:?}", if *ok { "ok  " } else { "FAIL" })?;
            }
            if !report.passed() {
                bail!("scheme check failed: {:?}", report.failures());
            }
        }
        Command::Demo { name: DemoName::Example1, seed } => {
            let outcome = demo::example1(seed)?;
            out.write_all(outcome.transcript.as_bytes())?;
        }
        Command::Node { action: NodeAction::Serve } => local::serve_from_env()?,
    }
    Ok(())
}

/// Parses `args` and runs the command. Returns the process exit code: 0 on
/// success, 1 on an operational error, 2 on a usage error.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
