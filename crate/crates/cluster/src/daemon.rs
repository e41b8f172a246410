//! Storage node daemon: one thread per connection, any number of framed
//! requests per connection.

use std::io::{BufReader, BufWriter};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use log::{debug, warn};
use pmsr_core::msr::repair_helper_symbol;
use pmsr_core::pir::node_answer;
use pmsr_core::{EncodingMatrix, MsrParams, QueryMatrix};

use crate::error::{ClusterError, Result};
use crate::store::ShareStore;
use crate::wire::{read_frame, write_frame, CodeHeader, Message};

const IDLE_TIMEOUT: Duration = Duration::from_secs(60);

/// Request handling state shared by all connections of one node.
#[derive(Debug)]
pub struct Node {
    store: ShareStore,
    enc: EncodingMatrix,
}

impl Node {
    pub fn new(store: ShareStore) -> Result<Self> {
        let m = store.manifest();
        let field = store.field();
        let points: Vec<_> = m.points.iter().map(|&p| field.element(p)).collect();
        let enc = EncodingMatrix::build(MsrParams::new(m.n, m.k)?, field, Some(&points))?;
        Ok(Node { store, enc })
    }

    pub fn store(&self) -> &ShareStore {
        &self.store
    }

    fn check_header(&self, h: &CodeHeader) -> Result<()> {
        let m = self.store.manifest();
        if (h.q, h.n as usize, h.k as usize) != (m.q, m.n, m.k) {
            return Err(ClusterError::ConfigMismatch(format!(
                "request for (q, n, k) = ({}, {}, {}), node has ({}, {}, {})",
                h.q, h.n, h.k, m.q, m.n, m.k
            )));
        }
        Ok(())
    }

    fn ok(&self) -> Result<Message> {
        Ok(Message::Ok {
            node_id: self.store.manifest().node_id as u32,
            catalog: self.store.catalog()?,
        })
    }

    /// This node's `m·α` row for one stripe. Records that are absent or
    /// have fewer stripes contribute zeros.
    fn stripe_row(&self, stripe: u32) -> Result<Vec<pmsr_core::FieldElement>> {
        let m = self.store.manifest();
        let field = self.store.field();
        let mut row = Vec::with_capacity(m.m * m.alpha());
        for record in 1..=m.m as u32 {
            match self.store.record_info(record)? {
                Some(info) if stripe < info.stripes => row.extend(self.store.share(record, stripe)?),
                _ => row.extend(std::iter::repeat_n(field.zero(), m.alpha())),
            }
        }
        Ok(row)
    }

    fn dispatch(&self, msg: Message) -> Result<Message> {
        match msg {
            Message::Health => self.ok(),
            Message::Store { header, info, stripe, symbols } => {
                self.check_header(&header)?;
                self.store.put_share(info, stripe, &symbols)?;
                self.ok()
            }
            Message::Query { header, stripe, query } => {
                self.check_header(&header)?;
                let m = self.store.manifest();
                if query.rows() != m.k || query.cols() != m.m * m.alpha() {
                    return Err(ClusterError::ConfigMismatch(format!(
                        "query is {}x{}, expected {}x{}",
                        query.rows(),
                        query.cols(),
                        m.k,
                        m.m * m.alpha()
                    )));
                }
                let row = self.stripe_row(stripe)?;
                let answer = node_answer(&QueryMatrix::new(query), &row)?;
                Ok(Message::Answer { symbols: answer.symbols().to_vec() })
            }
            Message::RepairHelp { header, failed, record, stripe } => {
                self.check_header(&header)?;
                let share = self.store.share(record, stripe)?;
                let me = self.store.manifest().node_id;
                let failed = (failed as usize)
                    .checked_sub(1)
                    .ok_or_else(|| ClusterError::ConfigMismatch("node ids start at 1".into()))?;
                let symbol = repair_helper_symbol(me - 1, &share, failed, &self.enc)?;
                Ok(Message::RepairSymbol { symbol })
            }
            Message::GetShare { record, stripe } => Ok(Message::Share { symbols: self.store.share(record, stripe)? }),
            Message::Delete { record } => {
                self.store.delete_record(record)?;
                self.ok()
            }
            other => Err(ClusterError::BadFrame(format!("unexpected request kind 0x{:02x}", other.kind()))),
        }
    }

    /// Decodes a request payload and produces the reply. Failures become
    /// `ERROR` replies.
    pub fn handle_payload(&self, payload: &[u8]) -> Message {
        let m = self.store.manifest();
        let reply = Message::decode(payload, self.store.field(), m.symbol_width).and_then(|msg| self.dispatch(msg));
        reply.unwrap_or_else(|e| Message::error(e.to_string()))
    }

    fn serve_connection(&self, stream: TcpStream) -> Result<()> {
        stream.set_read_timeout(Some(IDLE_TIMEOUT))?;
        stream.set_nodelay(true)?;
        let width = self.store.manifest().symbol_width;
        let mut reader = BufReader::new(stream.try_clone()?);
        let mut writer = BufWriter::new(stream);
        loop {
            let payload = match read_frame(&mut reader) {
                Ok(Some(p)) => p,
                Ok(None) => return Ok(()),
                Err(e @ ClusterError::BadFrame(_)) => {
                    // an oversized frame cannot be skipped safely
                    write_frame(&mut writer, &Message::error(e.to_string()).encode(width))?;
                    return Err(e);
                }
                Err(e) => return Err(e),
            };
            let reply = self.handle_payload(&payload);
            write_frame(&mut writer, &reply.encode(width))?;
        }
    }
}

/// Accepts connections until the process exits.
pub fn node_serve(store: ShareStore, listener: TcpListener) -> Result<()> {
    let node = Arc::new(Node::new(store)?);
    accept_loop(node, listener, Arc::new(AtomicBool::new(false)));
    Ok(())
}

fn accept_loop(node: Arc<Node>, listener: TcpListener, stop: Arc<AtomicBool>) {
    for conn in listener.incoming() {
        if stop.load(Ordering::SeqCst) {
            break;
        }
        match conn {
            Ok(stream) => {
                let node = Arc::clone(&node);
                thread::spawn(move || {
                    if let Err(e) = node.serve_connection(stream) {
                        debug!("connection closed: {e}");
                    }
                });
            }
            Err(e) => warn!("accept failed: {e}"),
        }
    }
}

/// An in-process node, used by tests and the demo cluster.
#[derive(Debug)]
pub struct NodeHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl NodeHandle {
    pub fn spawn(store: ShareStore, listener: TcpListener) -> Result<Self> {
        let addr = listener.local_addr()?;
        let node = Arc::new(Node::new(store)?);
        let stop = Arc::new(AtomicBool::new(false));
        let flag = Arc::clone(&stop);
        let thread = thread::spawn(move || accept_loop(node, listener, flag));
        Ok(NodeHandle { addr, stop, thread: Some(thread) })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting connections and releases the port.
    pub fn shutdown(mut self) {
        self.stop_inner();
    }

    fn stop_inner(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the blocking accept
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_millis(500));
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for NodeHandle {
    fn drop(&mut self) {
        if self.thread.is_some() {
            self.stop_inner();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{Manifest, RecordInfo};
    use crate::wire::kind;
    use pmsr_core::{Field, Matrix};

    fn node(dir: &std::path::Path) -> Node {
        let manifest = Manifest { q: 257, n: 6, k: 3, m: 2, node_id: 2, symbol_width: 2, points: (1..=6).collect() };
        Node::new(ShareStore::init(dir, manifest).unwrap()).unwrap()
    }

    const H: CodeHeader = CodeHeader { q: 257, n: 6, k: 3 };

    fn call(node: &Node, msg: Message) -> Message {
        let reply = node.handle_payload(&msg.encode(2));
        Message::decode(&reply.encode(2), Field::new(257).unwrap(), 2).unwrap()
    }

    #[test]
    fn health_store_get_share() {
        let dir = tempfile::tempdir().unwrap();
        let n = node(dir.path());
        let f = Field::new(257).unwrap();
        assert_eq!(call(&n, Message::Health), Message::Ok { node_id: 2, catalog: vec![] });
        let info = RecordInfo { record: 1, stripes: 1, length: 3 };
        let row = vec![f.element(5), f.element(250)];
        let reply = call(&n, Message::Store { header: H, info, stripe: 0, symbols: row.clone() });
        assert_eq!(reply, Message::Ok { node_id: 2, catalog: vec![info] });
        assert_eq!(call(&n, Message::GetShare { record: 1, stripe: 0 }), Message::Share { symbols: row });
    }

    #[test]
    fn queries_use_zero_rows_for_absent_records() {
        let dir = tempfile::tempdir().unwrap();
        let n = node(dir.path());
        let f = Field::new(257).unwrap();
        let q = Matrix::from_values(f, 3, 4, (1..=12).map(|x| x as u64)).unwrap();
        assert_eq!(
            call(&n, Message::Query { header: H, stripe: 0, query: Matrix::zeros(f, 3, 4) }),
            Message::Answer { symbols: vec![f.zero(); 3] }
        );
        let info = RecordInfo { record: 2, stripes: 1, length: 1 };
        call(&n, Message::Store { header: H, info, stripe: 0, symbols: vec![f.element(1), f.element(2)] });
        // row = [0, 0, 1, 2]
        let want: Vec<_> = [11u64, 23, 35].iter().map(|&v| f.element(v)).collect();
        let a1 = call(&n, Message::Query { header: H, stripe: 0, query: q.clone() });
        assert_eq!(a1, Message::Answer { symbols: want });
        assert_eq!(call(&n, Message::Query { header: H, stripe: 0, query: q }), a1);
    }

    #[test]
    fn repair_help_returns_helper_symbol() {
        let dir = tempfile::tempdir().unwrap();
        let n = node(dir.path());
        let f = Field::new(257).unwrap();
        let info = RecordInfo { record: 1, stripes: 1, length: 1 };
        call(&n, Message::Store { header: H, info, stripe: 0, symbols: vec![f.element(9), f.element(11)] });
        // failed node 3 has Φ = (1, 3): 9 + 33 = 42
        let reply = call(&n, Message::RepairHelp { header: H, failed: 3, record: 1, stripe: 0 });
        assert_eq!(reply, Message::RepairSymbol { symbol: f.element(42) });
        let reply = call(&n, Message::RepairHelp { header: H, failed: 2, record: 1, stripe: 0 });
        assert!(matches!(reply, Message::Error { .. }));
    }

    #[test]
    fn error_replies() {
        let dir = tempfile::tempdir().unwrap();
        let n = node(dir.path());
        let f = Field::new(257).unwrap();
        let msg = |m: Message| match m {
            Message::Error { message } => message,
            other => panic!("expected error, got {other:?}"),
        };
        assert!(msg(call(&n, Message::GetShare { record: 1, stripe: 0 })).starts_with("not found"));
        let wrong = CodeHeader { q: 257, n: 9, k: 4 };
        let reply = call(&n, Message::Query { header: wrong, stripe: 0, query: Matrix::zeros(f, 4, 6) });
        assert!(msg(reply).starts_with("config mismatch"));
        let reply = call(&n, Message::Query { header: H, stripe: 0, query: Matrix::zeros(f, 3, 5) });
        assert!(msg(reply).starts_with("config mismatch"));
        assert!(msg(n.handle_payload(&[0x55])).starts_with("bad frame"));
        assert!(msg(n.handle_payload(&[kind::ANSWER, 0, 0, 0, 0])).starts_with("bad frame"));
    }
}
