//! Framed binary protocol between the coordinator and storage nodes.
//!
//! A frame is a 4-byte big-endian payload length followed by the payload.
//! The payload starts with a one-byte kind. Integers are 4-byte big-endian,
//! symbols are `symbol_width`-byte little-endian, vectors are a count
//! followed by symbols, and matrices are `rows, cols` followed by entries in
//! row-major order.
//!
//! Messages that depend on the code parameters (`STORE`, `QUERY`,
//! `REPAIR_HELP`) start with `q, n, k` so a node can refuse requests meant
//! for a different cluster.

use std::io::{self, Read, Write};

use pmsr_core::{Field, FieldElement, Matrix};

use crate::codec::{read_symbol, write_symbol};
use crate::error::{ClusterError, Result};
use crate::store::RecordInfo;

pub const MAX_PAYLOAD: usize = 16 * 1024 * 1024;

pub mod kind {
    pub const STORE: u8 = 0x01;
    pub const QUERY: u8 = 0x02;
    pub const ANSWER: u8 = 0x03;
    pub const REPAIR_HELP: u8 = 0x04;
    pub const REPAIR_SYMBOL: u8 = 0x05;
    pub const GET_SHARE: u8 = 0x06;
    pub const SHARE: u8 = 0x07;
    pub const HEALTH: u8 = 0x08;
    pub const OK: u8 = 0x09;
    pub const ERROR: u8 = 0x0a;
    pub const DELETE: u8 = 0x0b;
}

/// `q, n, k` of the cluster a request is meant for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodeHeader {
    pub q: u32,
    pub n: u32,
    pub k: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    Store { header: CodeHeader, info: RecordInfo, stripe: u32, symbols: Vec<FieldElement> },
    Query { header: CodeHeader, stripe: u32, query: Matrix },
    Answer { symbols: Vec<FieldElement> },
    RepairHelp { header: CodeHeader, failed: u32, record: u32, stripe: u32 },
    RepairSymbol { symbol: FieldElement },
    GetShare { record: u32, stripe: u32 },
    Share { symbols: Vec<FieldElement> },
    Health,
    Ok { node_id: u32, catalog: Vec<RecordInfo> },
    Error { message: String },
    Delete { record: u32 },
}

impl Message {
    pub fn kind(&self) -> u8 {
        match self {
            Message::Store { .. } => kind::STORE,
            Message::Query { .. } => kind::QUERY,
            Message::Answer { .. } => kind::ANSWER,
            Message::RepairHelp { .. } => kind::REPAIR_HELP,
            Message::RepairSymbol { .. } => kind::REPAIR_SYMBOL,
            Message::GetShare { .. } => kind::GET_SHARE,
            Message::Share { .. } => kind::SHARE,
            Message::Health => kind::HEALTH,
            Message::Ok { .. } => kind::OK,
            Message::Error { .. } => kind::ERROR,
            Message::Delete { .. } => kind::DELETE,
        }
    }

    pub fn error(message: impl Into<String>) -> Self {
        Message::Error { message: message.into() }
    }

    pub fn encode(&self, width: usize) -> Vec<u8> {
        let mut w = Writer { out: vec![self.kind()], width };
        match self {
            Message::Store { header, info, stripe, symbols } => {
                w.header(header);
                w.u32(info.record);
                w.u32(*stripe);
                w.u32(info.stripes);
                w.u32(info.length);
                w.vector(symbols);
            }
            Message::Query { header, stripe, query } => {
                w.header(header);
                w.u32(*stripe);
                w.matrix(query);
            }
            Message::Answer { symbols } | Message::Share { symbols } => w.vector(symbols),
            Message::RepairHelp { header, failed, record, stripe } => {
                w.header(header);
                w.u32(*failed);
                w.u32(*record);
                w.u32(*stripe);
            }
            Message::RepairSymbol { symbol } => w.symbol(*symbol),
            Message::GetShare { record, stripe } => {
                w.u32(*record);
                w.u32(*stripe);
            }
            Message::Health => {}
            Message::Ok { node_id, catalog } => {
                w.u32(*node_id);
                w.u32(catalog.len() as u32);
                for info in catalog {
                    w.u32(info.record);
                    w.u32(info.stripes);
                    w.u32(info.length);
                }
            }
            Message::Error { message } => {
                w.u32(message.len() as u32);
                w.out.extend_from_slice(message.as_bytes());
            }
            Message::Delete { record } => w.u32(*record),
        }
        w.out
    }

    /// Parses a payload. Symbols are read in `field`; a code header naming a
    /// different field is a [`ClusterError::ConfigMismatch`].
    pub fn decode(payload: &[u8], field: Field, width: usize) -> Result<Self> {
        let (&kind, rest) = payload.split_first().ok_or_else(|| bad("empty payload"))?;
        let mut r = Reader { buf: rest, field, width };
        let msg = match kind {
            kind::STORE => {
                let header = r.header()?;
                let record = r.u32()?;
                let stripe = r.u32()?;
                let stripes = r.u32()?;
                let length = r.u32()?;
                Message::Store {
                    header,
                    info: RecordInfo { record, stripes, length },
                    stripe,
                    symbols: r.vector()?,
                }
            }
            kind::QUERY => {
                let header = r.header()?;
                Message::Query { header, stripe: r.u32()?, query: r.matrix()? }
            }
            kind::ANSWER => Message::Answer { symbols: r.vector()? },
            kind::REPAIR_HELP => Message::RepairHelp {
                header: r.header()?,
                failed: r.u32()?,
                record: r.u32()?,
                stripe: r.u32()?,
            },
            kind::REPAIR_SYMBOL => Message::RepairSymbol { symbol: r.symbol()? },
            kind::GET_SHARE => Message::GetShare { record: r.u32()?, stripe: r.u32()? },
            kind::SHARE => Message::Share { symbols: r.vector()? },
            kind::HEALTH => Message::Health,
            kind::OK => {
                let node_id = r.u32()?;
                let count = r.u32()? as usize;
                if count > r.buf.len() / 12 {
                    return Err(bad("catalog longer than payload"));
                }
                let mut catalog = Vec::with_capacity(count);
                for _ in 0..count {
                    catalog.push(RecordInfo { record: r.u32()?, stripes: r.u32()?, length: r.u32()? });
                }
                Message::Ok { node_id, catalog }
            }
            kind::ERROR => {
                let len = r.u32()? as usize;
                let bytes = r.take(len)?;
                Message::Error { message: String::from_utf8_lossy(bytes).into_owned() }
            }
            kind::DELETE => Message::Delete { record: r.u32()? },
            other => return Err(bad(format!("unknown kind 0x{other:02x}"))),
        };
        if !r.buf.is_empty() {
            return Err(bad(format!("{} trailing bytes", r.buf.len())));
        }
        Ok(msg)
    }
}

fn bad(msg: impl Into<String>) -> ClusterError {
    ClusterError::BadFrame(msg.into())
}

struct Writer {
    out: Vec<u8>,
    width: usize,
}

impl Writer {
    fn u32(&mut self, v: u32) {
        self.out.extend_from_slice(&v.to_be_bytes());
    }

    fn header(&mut self, h: &CodeHeader) {
        self.u32(h.q);
        self.u32(h.n);
        self.u32(h.k);
    }

    fn symbol(&mut self, s: FieldElement) {
        write_symbol(&mut self.out, s.value(), self.width);
    }

    fn vector(&mut self, v: &[FieldElement]) {
        self.u32(v.len() as u32);
        for &s in v {
            self.symbol(s);
        }
    }

    fn matrix(&mut self, m: &Matrix) {
        self.u32(m.rows() as u32);
        self.u32(m.cols() as u32);
        for &v in m.residues() {
            write_symbol(&mut self.out, v, self.width);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    field: Field,
    width: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(bad("truncated payload"));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn header(&mut self) -> Result<CodeHeader> {
        let h = CodeHeader { q: self.u32()?, n: self.u32()?, k: self.u32()? };
        if h.q != self.field.modulus() {
            return Err(ClusterError::ConfigMismatch(format!(
                "request for GF({}) sent to a GF({}) node",
                h.q,
                self.field.modulus()
            )));
        }
        Ok(h)
    }

    fn symbol(&mut self) -> Result<FieldElement> {
        let bytes = self.take(self.width)?;
        read_symbol(self.field, bytes)
    }

    fn symbols(&mut self, count: usize) -> Result<Vec<FieldElement>> {
        if count > self.buf.len() / self.width {
            return Err(bad("symbol count longer than payload"));
        }
        (0..count).map(|_| self.symbol()).collect()
    }

    fn vector(&mut self) -> Result<Vec<FieldElement>> {
        let count = self.u32()? as usize;
        self.symbols(count)
    }

    fn matrix(&mut self) -> Result<Matrix> {
        let rows = self.u32()? as usize;
        let cols = self.u32()? as usize;
        let count = rows.checked_mul(cols).ok_or_else(|| bad("matrix too large"))?;
        let entries = self.symbols(count)?;
        Ok(Matrix::from_elements(self.field, rows, cols, &entries)?)
    }
}

/// Reads one frame. `Ok(None)` on a clean end of stream.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_PAYLOAD {
        return Err(bad(format!("payload of {len} bytes exceeds the 16 MiB limit")));
    }
    let mut payload = vec![0u8; len];
    r.read_exact(&mut payload)?;
    Ok(Some(payload))
}

pub fn write_frame<W: Write>(w: &mut W, payload: &[u8]) -> Result<()> {
    if payload.len() > MAX_PAYLOAD {
        return Err(bad(format!("payload of {} bytes exceeds the 16 MiB limit", payload.len())));
    }
    let mut buf = Vec::with_capacity(4 + payload.len());
    buf.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    buf.extend_from_slice(payload);
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}
