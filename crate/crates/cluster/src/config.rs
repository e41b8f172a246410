//! Cluster configuration, read from plain `key = value` text:
//!
//! ```text
//! # GF(257), k = 3 so n = 6
//! q = 257
//! k = 3
//! m = 3
//! symbol_width = 2
//! nodes = 127.0.0.1:7101, 127.0.0.1:7102, 127.0.0.1:7103, 127.0.0.1:7104, 127.0.0.1:7105, 127.0.0.1:7106
//! data_dir = ./data
//! ```
//!
//! `points` (comma separated evaluation points) and `data_dir` are optional.
//! A relative `data_dir` is resolved against the config file's directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use pmsr_core::{EncodingMatrix, Field, MsrParams, PirConfig};

use crate::error::{ClusterError, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterConfig {
    pub q: u32,
    pub k: usize,
    pub n: usize,
    pub m: usize,
    pub symbol_width: usize,
    pub points: Option<Vec<u64>>,
    pub nodes: Vec<String>,
    pub data_dir: PathBuf,
}

/// Bytes needed to hold any residue of GF(q).
pub fn required_symbol_width(q: u32) -> usize {
    match q - 1 {
        0..=0xff => 1,
        0x100..=0xffff => 2,
        _ => 4,
    }
}

fn bad(msg: impl Into<String>) -> ClusterError {
    ClusterError::Config(msg.into())
}

impl ClusterConfig {
    /// Builds and validates a configuration.
    pub fn new(q: u32, k: usize, m: usize, nodes: Vec<String>, data_dir: PathBuf) -> Result<Self> {
        let cfg = ClusterConfig {
            q,
            k,
            n: 3 * k.max(1) - 3,
            m,
            symbol_width: required_symbol_width(q.max(2)),
            points: None,
            nodes,
            data_dir,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let (mut q, mut k, mut m, mut width) = (None, None, None, None);
        let (mut nodes, mut points, mut data_dir) = (None, None, None);
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("line {}: expected key = value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let int = |v: &str| -> Result<u64> {
                v.parse::<u64>().map_err(|_| bad(format!("line {}: `{v}` is not an integer", lineno + 1)))
            };
            let list = |v: &str| -> Vec<String> {
                v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
            };
            match key {
                "q" => q = Some(u32::try_from(int(value)?).map_err(|_| bad("q must fit in 32 bits"))?),
                "k" => k = Some(int(value)? as usize),
                "m" => m = Some(int(value)? as usize),
                "symbol_width" => width = Some(int(value)? as usize),
                "nodes" => nodes = Some(list(value)),
                "points" => points = Some(list(value).iter().map(|p| int(p)).collect::<Result<Vec<_>>>()?),
                "data_dir" => data_dir = Some(PathBuf::from(value)),
                other => return Err(bad(format!("line {}: unknown key `{other}`", lineno + 1))),
            }
        }
        let q = q.ok_or_else(|| bad("missing key `q`"))?;
        let k = k.ok_or_else(|| bad("missing key `k`"))?;
        let m = m.ok_or_else(|| bad("missing key `m`"))?;
        let nodes = nodes.ok_or_else(|| bad("missing key `nodes`"))?;
        let data_dir = match data_dir {
            Some(d) if d.is_relative() => base_dir.join(d),
            Some(d) => d,
            None => base_dir.join("data"),
        };
        if k < 2 {
            return Err(bad("k must be at least 2"));
        }
        let cfg = ClusterConfig {
            q,
            k,
            n: 3 * k - 3,
            m,
            symbol_width: width.unwrap_or_else(|| required_symbol_width(q.max(2))),
            points,
            nodes,
            data_dir,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(bad("k must be at least 2"));
        }
        if self.m == 0 {
            return Err(bad("m must be at least 1"));
        }
        if self.nodes.len() != self.n {
            return Err(bad(format!("expected {} node addresses (n = 3k - 3), got {}", self.n, self.nodes.len())));
        }
        for (i, a) in self.nodes.iter().enumerate() {
            if self.nodes[..i].contains(a) {
                return Err(bad(format!("duplicate node address {a}")));
            }
        }
        if !matches!(self.symbol_width, 1 | 2 | 4) || self.symbol_width < required_symbol_width(self.q.max(2)) {
            return Err(bad(format!("symbol_width {} cannot hold GF({}) symbols", self.symbol_width, self.q)));
        }
        if let Some(p) = &self.points {
            if p.len() != self.n {
                return Err(bad(format!("expected {} points, got {}", self.n, p.len())));
            }
        }
        // build the code once so bad fields or points fail at load time
        self.encoding_matrix()?;
        Ok(())
    }

    pub fn field(&self) -> Result<Field> {
        Ok(Field::new(self.q)?)
    }

    pub fn params(&self) -> Result<MsrParams> {
        Ok(MsrParams::for_retrieval(self.k)?)
    }

    pub fn pir_config(&self) -> Result<PirConfig> {
        Ok(PirConfig::new(self.params()?, self.m)?)
    }

    pub fn encoding_matrix(&self) -> Result<EncodingMatrix> {
        let field = self.field()?;
        let points = self.points.as_ref().map(|p| p.iter().map(|&x| field.element(x)).collect::<Vec<_>>());
        Ok(EncodingMatrix::build(self.params()?, field, points.as_deref())?)
    }

    /// Store directory of node `node` (one-based).
    pub fn node_dir(&self, node: usize) -> PathBuf {
        self.data_dir.join(format!("node{node}"))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "q = {}", self.q);
        let _ = writeln!(s, "k = {}", self.k);
        let _ = writeln!(s, "m = {}", self.m);
        let _ = writeln!(s, "symbol_width = {}", self.symbol_width);
        let _ = writeln!(s, "nodes = {}", self.nodes.join(", "));
        if let Some(p) = &self.points {
            let p: Vec<String> = p.iter().map(u64::to_string).collect();
            let _ = writeln!(s, "points = {}", p.join(", "));
        }
        let _ = writeln!(s, "data_dir = {}", self.data_dir.display());
        s
    }
}
