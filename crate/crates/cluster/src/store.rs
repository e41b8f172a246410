//! On-disk share storage of one node.
//!
//! ```text
//! <root>/manifest                    key = value cluster parameters
//! <root>/shares/r<rec>_s<stripe>.pmsr one share row per (record, stripe)
//! <root>/shares/r<rec>.meta          stripe count and payload length
//! ```
//!
//! A share file is `"PMSR"`, version byte `1`, then `q, n, k, node, record,
//! stripe` as 4-byte big-endian integers, then `α` symbols of
//! `symbol_width` little-endian bytes. Files are written to a temporary
//! name and renamed into place.

use std::fmt::Write as _;
use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use pmsr_core::{Field, FieldElement};

use crate::codec::{read_symbol, write_symbol};
use crate::config::ClusterConfig;
use crate::error::{ClusterError, Result};

pub const SHARE_MAGIC: &[u8; 4] = b"PMSR";
pub const SHARE_VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 6 * 4;

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Parameters a node is provisioned with.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub q: u32,
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub node_id: usize,
    pub symbol_width: usize,
    pub points: Vec<u64>,
}

impl Manifest {
    pub fn for_node(cfg: &ClusterConfig, node_id: usize) -> Result<Self> {
        let enc = cfg.encoding_matrix()?;
        Ok(Manifest {
            q: cfg.q,
            n: cfg.n,
            k: cfg.k,
            m: cfg.m,
            node_id,
            symbol_width: cfg.symbol_width,
            points: enc.points().iter().map(|p| u64::from(p.value())).collect(),
        })
    }

    pub fn alpha(&self) -> usize {
        self.k - 1
    }

    fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "q = {}", self.q);
        let _ = writeln!(s, "n = {}", self.n);
        let _ = writeln!(s, "k = {}", self.k);
        let _ = writeln!(s, "m = {}", self.m);
        let _ = writeln!(s, "node_id = {}", self.node_id);
        let _ = writeln!(s, "symbol_width = {}", self.symbol_width);
        let pts: Vec<String> = self.points.iter().map(u64::to_string).collect();
        let _ = writeln!(s, "points = {}", pts.join(", "));
        s
    }

    fn parse(text: &str) -> Result<Self> {
        let get = |key: &str| -> Result<String> {
            text.lines()
                .filter_map(|l| l.split_once('='))
                .find(|(k, _)| k.trim() == key)
                .map(|(_, v)| v.trim().to_string())
                .ok_or_else(|| ClusterError::Store(format!("manifest lacks `{key}`")))
        };
        let int = |v: String| -> Result<u64> {
            v.parse().map_err(|_| ClusterError::Store(format!("manifest value `{v}` is not an integer")))
        };
        let points = get("points")?
            .split(',')
            .map(|p| p.trim())
            .filter(|p| !p.is_empty())
            .map(|p| int(p.to_string()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Manifest {
            q: int(get("q")?)? as u32,
            n: int(get("n")?)? as usize,
            k: int(get("k")?)? as usize,
            m: int(get("m")?)? as usize,
            node_id: int(get("node_id")?)? as usize,
            symbol_width: int(get("symbol_width")?)? as usize,
            points,
        })
    }
}

/// Per-record metadata kept next to the shares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct RecordInfo {
    pub record: u32,
    pub stripes: u32,
    /// Payload length in bytes.
    pub length: u32,
}

#[derive(Debug, Clone)]
pub struct ShareStore {
    root: PathBuf,
    manifest: Manifest,
    field: Field,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let n = TMP_COUNTER.fetch_add(1, Ordering::Relaxed);
    let tmp = path.with_extension(format!("{}.{n}.tmp", std::process::id()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

impl ShareStore {
    /// Creates the store layout, or reopens it if the manifest on disk is
    /// identical.
    pub fn init(root: &Path, manifest: Manifest) -> Result<Self> {
        let path = root.join("manifest");
        if path.exists() {
            let store = Self::open(root)?;
            if store.manifest != manifest {
                return Err(ClusterError::ConfigMismatch(format!(
                    "{} was provisioned with different parameters",
                    root.display()
                )));
            }
            return Ok(store);
        }
        fs::create_dir_all(root.join("shares"))?;
        write_atomic(&path, manifest.to_text().as_bytes())?;
        Self::open(root)
    }

    pub fn open(root: &Path) -> Result<Self> {
        let text = fs::read_to_string(root.join("manifest"))
            .map_err(|e| ClusterError::Store(format!("cannot read manifest in {}: {e}", root.display())))?;
        let manifest = Manifest::parse(&text)?;
        let field = Field::new(manifest.q)?;
        fs::create_dir_all(root.join("shares"))?;
        Ok(ShareStore { root: root.to_path_buf(), manifest, field })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn field(&self) -> Field {
        self.field
    }

    fn shares_dir(&self) -> PathBuf {
        self.root.join("shares")
    }

    pub fn share_path(&self, record: u32, stripe: u32) -> PathBuf {
        self.shares_dir().join(format!("r{record}_s{stripe}.pmsr"))
    }

    fn meta_path(&self, record: u32) -> PathBuf {
        self.shares_dir().join(format!("r{record}.meta"))
    }

    fn check_record(&self, record: u32) -> Result<()> {
        if record == 0 || record as usize > self.manifest.m {
            return Err(ClusterError::ConfigMismatch(format!(
                "record {record} outside 1..={}",
                self.manifest.m
            )));
        }
        Ok(())
    }

    pub fn encode_share(&self, record: u32, stripe: u32, symbols: &[FieldElement]) -> Vec<u8> {
        let m = &self.manifest;
        let mut out = Vec::with_capacity(HEADER_LEN + symbols.len() * m.symbol_width);
        out.extend_from_slice(SHARE_MAGIC);
        out.push(SHARE_VERSION);
        for v in [m.q, m.n as u32, m.k as u32, m.node_id as u32, record, stripe] {
            out.extend_from_slice(&v.to_be_bytes());
        }
        for s in symbols {
            write_symbol(&mut out, s.value(), m.symbol_width);
        }
        out
    }

    pub fn decode_share(&self, record: u32, stripe: u32, bytes: &[u8]) -> Result<Vec<FieldElement>> {
        let m = &self.manifest;
        let corrupt = |why: &str| ClusterError::Store(format!("share r{record}_s{stripe}: {why}"));
        if bytes.len() != HEADER_LEN + m.alpha() * m.symbol_width {
            return Err(corrupt("wrong length"));
        }
        if &bytes[..4] != SHARE_MAGIC || bytes[4] != SHARE_VERSION {
            return Err(corrupt("bad magic or version"));
        }
        let ints: Vec<u32> = bytes[5..HEADER_LEN]
            .chunks(4)
            .map(|c| u32::from_be_bytes(c.try_into().expect("4-byte chunk")))
            .collect();
        if ints != [m.q, m.n as u32, m.k as u32, m.node_id as u32, record, stripe] {
            return Err(ClusterError::ConfigMismatch(format!("share r{record}_s{stripe} header disagrees with manifest")));
        }
        bytes[HEADER_LEN..]
            .chunks(m.symbol_width)
            .map(|c| read_symbol(self.field, c))
            .collect()
    }

    /// Persists one share row and the record's metadata.
    pub fn put_share(&self, info: RecordInfo, stripe: u32, symbols: &[FieldElement]) -> Result<()> {
        self.check_record(info.record)?;
        if symbols.len() != self.manifest.alpha() {
            return Err(ClusterError::ConfigMismatch(format!(
                "share has {} symbols, expected {}",
                symbols.len(),
                self.manifest.alpha()
            )));
        }
        if stripe >= info.stripes {
            return Err(ClusterError::ConfigMismatch(format!("stripe {stripe} beyond {} stripes", info.stripes)));
        }
        if symbols.iter().any(|s| s.field() != self.field) {
            return Err(ClusterError::ConfigMismatch("symbols from a different field".into()));
        }
        fs::create_dir_all(self.shares_dir())?;
        write_atomic(&self.share_path(info.record, stripe), &self.encode_share(info.record, stripe, symbols))?;
        let meta = format!("stripes = {}\nlength = {}\n", info.stripes, info.length);
        write_atomic(&self.meta_path(info.record), meta.as_bytes())
    }

    pub fn share(&self, record: u32, stripe: u32) -> Result<Vec<FieldElement>> {
        self.check_record(record)?;
        match fs::read(self.share_path(record, stripe)) {
            Ok(bytes) => self.decode_share(record, stripe, &bytes),
            Err(e) if e.kind() == ErrorKind::NotFound => {
                Err(ClusterError::NotFound(format!("record {record} stripe {stripe}")))
            }
            Err(e) => Err(e.into()),
        }
    }

    pub fn record_info(&self, record: u32) -> Result<Option<RecordInfo>> {
        let text = match fs::read_to_string(self.meta_path(record)) {
            Ok(t) => t,
            Err(e) if e.kind() == ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let field = |key: &str| -> Result<u32> {
            text.lines()
                .filter_map(|l| l.split_once('='))
                .find(|(k, _)| k.trim() == key)
                .and_then(|(_, v)| v.trim().parse().ok())
                .ok_or_else(|| ClusterError::Store(format!("record {record} metadata lacks `{key}`")))
        };
        Ok(Some(RecordInfo { record, stripes: field("stripes")?, length: field("length")? }))
    }

    /// Metadata of every stored record, ordered by record id.
    pub fn catalog(&self) -> Result<Vec<RecordInfo>> {
        let mut out = Vec::new();
        for record in 1..=self.manifest.m as u32 {
            if let Some(info) = self.record_info(record)? {
                out.push(info);
            }
        }
        Ok(out)
    }

    pub fn delete_record(&self, record: u32) -> Result<()> {
        self.check_record(record)?;
        let prefix = format!("r{record}_");
        let meta = format!("r{record}.meta");
        for entry in fs::read_dir(self.shares_dir())? {
            let name = entry?.file_name();
            let name = name.to_string_lossy();
            if name.starts_with(&prefix) || name == meta {
                let _ = fs::remove_file(self.shares_dir().join(&*name));
            }
        }
        Ok(())
    }

    /// Removes every share and metadata file, keeping the manifest.
    pub fn wipe(&self) -> Result<()> {
        match fs::remove_dir_all(self.shares_dir()) {
            Ok(()) => {}
            Err(e) if e.kind() == ErrorKind::NotFound => {}
            Err(e) => return Err(e.into()),
        }
        fs::create_dir_all(self.shares_dir())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(node_id: usize) -> Manifest {
        Manifest { q: 257, n: 6, k: 3, m: 3, node_id, symbol_width: 2, points: (1..=6).collect() }
    }

    fn info(record: u32, stripes: u32) -> RecordInfo {
        RecordInfo { record, stripes, length: 7 }
    }

    #[test]
    fn share_round_trip_and_file_layout() {
        let dir = tempfile::tempdir().unwrap();
        let store = ShareStore::init(dir.path(), manifest(4)).unwrap();
        let f = store.field();
        let row = [f.element(256), f.element(3)];
        store.put_share(info(2, 2), 1, &row).unwrap();
        assert_eq!(store.share(2, 1).unwrap(), row);

        let bytes = fs::read(dir.path().join("shares/r2_s1.pmsr")).unwrap();
        let mut want = b"PMSR\x01".to_vec();
        for v in [257u32, 6, 3, 4, 2, 1] {
            want.extend_from_slice(&v.to_be_bytes());
        }
        want.extend_from_slice(&[0x00, 0x01, 0x03, 0x00]);
        assert_eq!(bytes, want);
        assert_eq!(store.catalog().unwrap(), vec![info(2, 2)]);
    }

    #[test]
    fn missing_and_wiped_shares_are_not_found() {
        let dir = tempfile::tempdir().unwrap();
        let store = ShareStore::init(dir.path(), manifest(1)).unwrap();
        assert!(matches!(store.share(1, 0), Err(ClusterError::NotFound(_))));
        let f = store.field();
        store.put_share(info(1, 1), 0, &[f.one(), f.one()]).unwrap();
        store.wipe().unwrap();
        assert!(matches!(store.share(1, 0), Err(ClusterError::NotFound(_))));
        assert!(store.catalog().unwrap().is_empty());
        assert_eq!(ShareStore::open(dir.path()).unwrap().manifest(), &manifest(1));
    }

    #[test]
    fn rejects_mismatches() {
        let dir = tempfile::tempdir().unwrap();
        let store = ShareStore::init(dir.path(), manifest(1)).unwrap();
        assert!(matches!(ShareStore::init(dir.path(), manifest(2)), Err(ClusterError::ConfigMismatch(_))));
        let f = store.field();
        assert!(store.put_share(info(4, 1), 0, &[f.one(), f.one()]).is_err());
        assert!(store.put_share(info(1, 1), 0, &[f.one()]).is_err());
        assert!(store.put_share(info(1, 1), 1, &[f.one(), f.one()]).is_err());
        // a share copied from another node fails the header check
        store.put_share(info(1, 1), 0, &[f.one(), f.one()]).unwrap();
        let other = tempfile::tempdir().unwrap();
        let other = ShareStore::init(other.path(), manifest(2)).unwrap();
        fs::copy(store.share_path(1, 0), other.share_path(1, 0)).unwrap();
        assert!(matches!(other.share(1, 0), Err(ClusterError::ConfigMismatch(_))));
    }

    #[test]
    fn delete_record_leaves_others() {
        let dir = tempfile::tempdir().unwrap();
        let store = ShareStore::init(dir.path(), manifest(1)).unwrap();
        let f = store.field();
        store.put_share(info(1, 1), 0, &[f.one(), f.one()]).unwrap();
        store.put_share(info(3, 1), 0, &[f.one(), f.zero()]).unwrap();
        store.delete_record(1).unwrap();
        assert_eq!(store.catalog().unwrap(), vec![info(3, 1)]);
        assert!(store.share(3, 0).is_ok());
    }
}
