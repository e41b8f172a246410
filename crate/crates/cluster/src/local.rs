//! Local cluster lifecycle: node daemons run as child processes of the
//! `pmsr` binary, one store directory and pid file per node under the
//! config's `data_dir`.

use std::fs::{self, File};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use log::{info, warn};

use crate::config::ClusterConfig;
use crate::coordinator::Coordinator;
use crate::daemon::node_serve;
use crate::error::{ClusterError, Result};
use crate::store::{Manifest, ShareStore};

pub const ROOT_ENV: &str = "PMSR_ROOT";
pub const ADDR_ENV: &str = "PMSR_ADDR";

const STARTUP_WAIT: Duration = Duration::from_secs(10);
const POLL: Duration = Duration::from_millis(25);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureMode {
    /// Stop the daemon process.
    Kill,
    /// Delete the node's shares, leaving the daemon running.
    Wipe,
}

fn pid_path(cfg: &ClusterConfig, node: usize) -> PathBuf {
    cfg.data_dir.join(format!("node{node}.pid"))
}

fn read_pid(cfg: &ClusterConfig, node: usize) -> Option<u32> {
    fs::read_to_string(pid_path(cfg, node)).ok()?.trim().parse().ok()
}

fn signal(pid: u32, sig: &str) -> bool {
    Command::new("kill")
        .args([sig, &pid.to_string()])
        .stderr(Stdio::null())
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

fn check_node(cfg: &ClusterConfig, node: usize) -> Result<()> {
    if node == 0 || node > cfg.n {
        return Err(ClusterError::UnknownNode(node));
    }
    Ok(())
}

/// Creates (or reopens) the store of node `node`.
pub fn init_store(cfg: &ClusterConfig, node: usize) -> Result<ShareStore> {
    ShareStore::init(&cfg.node_dir(node), Manifest::for_node(cfg, node)?)
}

fn wait_for<F: Fn() -> bool>(cond: F, limit: Duration) -> bool {
    let start = Instant::now();
    while start.elapsed() < limit {
        if cond() {
            return true;
        }
        thread::sleep(POLL);
    }
    cond()
}

/// Spawns `exe node serve` for one node and waits until it answers.
pub fn spawn_node(cfg: &ClusterConfig, exe: &Path, node: usize) -> Result<u32> {
    check_node(cfg, node)?;
    let store = init_store(cfg, node)?;
    let log = File::create(cfg.data_dir.join(format!("node{node}.log")))?;
    let child = Command::new(exe)
        .args(["node", "serve"])
        .env(ROOT_ENV, store.root())
        .env(ADDR_ENV, &cfg.nodes[node - 1])
        .stdin(Stdio::null())
        .stdout(log.try_clone()?)
        .stderr(log)
        .spawn()?;
    let pid = child.id();
    fs::write(pid_path(cfg, node), format!("{pid}\n"))?;
    let coord = Coordinator::new(cfg.clone())?.with_timeout(Duration::from_millis(500));
    if !wait_for(|| coord.health(node).is_ok(), STARTUP_WAIT) {
        signal(pid, "-TERM");
        return Err(ClusterError::Config(format!(
            "node {node} did not come up on {}; see node{node}.log",
            cfg.nodes[node - 1]
        )));
    }
    info!("node {node} listening on {} (pid {pid})", cfg.nodes[node - 1]);
    Ok(pid)
}

/// Starts every node that is not already running. Returns the nodes that
/// were started.
pub fn cluster_up(cfg: &ClusterConfig, exe: &Path) -> Result<Vec<usize>> {
    fs::create_dir_all(&cfg.data_dir)?;
    let coord = Coordinator::new(cfg.clone())?.with_timeout(Duration::from_millis(500));
    let mut started = Vec::new();
    for node in 1..=cfg.n {
        if coord.health(node).is_ok() {
            warn!("node {node} is already running on {}", cfg.nodes[node - 1]);
            continue;
        }
        spawn_node(cfg, exe, node)?;
        started.push(node);
    }
    Ok(started)
}

/// Stops a locally managed node and waits until its port is closed.
pub fn stop_node(cfg: &ClusterConfig, node: usize) -> Result<bool> {
    check_node(cfg, node)?;
    let Some(pid) = read_pid(cfg, node) else {
        return Ok(false);
    };
    let killed = signal(pid, "-TERM");
    let _ = fs::remove_file(pid_path(cfg, node));
    let coord = Coordinator::new(cfg.clone())?.with_timeout(Duration::from_millis(200));
    wait_for(|| coord.health(node).is_err(), STARTUP_WAIT);
    Ok(killed)
}

/// Stops every locally managed node. Returns the nodes that were stopped.
pub fn cluster_down(cfg: &ClusterConfig) -> Result<Vec<usize>> {
    let mut stopped = Vec::new();
    for node in 1..=cfg.n {
        if stop_node(cfg, node)? {
            stopped.push(node);
        }
    }
    Ok(stopped)
}

pub fn inject_failure(cfg: &ClusterConfig, node: usize, mode: FailureMode) -> Result<()> {
    check_node(cfg, node)?;
    match mode {
        FailureMode::Kill => {
            if !stop_node(cfg, node)? {
                return Err(ClusterError::Config(format!("node {node} is not a running local daemon")));
            }
        }
        FailureMode::Wipe => ShareStore::open(&cfg.node_dir(node))?.wipe()?,
    }
    Ok(())
}

/// Makes a replacement for `node` available: a node that does not answer
/// is restarted on an emptied store.
pub fn ensure_replacement(cfg: &ClusterConfig, exe: &Path, node: usize) -> Result<()> {
    check_node(cfg, node)?;
    let coord = Coordinator::new(cfg.clone())?.with_timeout(Duration::from_millis(500));
    if coord.health(node).is_ok() {
        return Ok(());
    }
    stop_node(cfg, node)?;
    init_store(cfg, node)?.wipe()?;
    spawn_node(cfg, exe, node)?;
    Ok(())
}

/// Entry point of a spawned daemon: store root and bind address come from
/// the environment.
pub fn serve_from_env() -> Result<()> {
    let root = std::env::var_os(ROOT_ENV)
        .ok_or_else(|| ClusterError::Config(format!("{ROOT_ENV} is not set")))?;
    let addr = std::env::var(ADDR_ENV).map_err(|_| ClusterError::Config(format!("{ADDR_ENV} is not set")))?;
    let store = ShareStore::open(Path::new(&root))?;
    let listener = TcpListener::bind(&addr)?;
    info!("node {} serving {} on {addr}", store.manifest().node_id, store.root().display());
    node_serve(store, listener)
}
