//! Client side of the cluster: writes, private reads and single-node
//! repair. The coordinator acts for the user and is trusted with the
//! requested record index; the nodes never see it.

use std::io::{BufReader, BufWriter};
use std::net::{TcpStream, ToSocketAddrs};
use std::thread;
use std::time::Duration;

use log::{debug, info};
use num_rational::Ratio;
use pmsr_core::msr::{encode, recover, repair_regenerate, Share};
use pmsr_core::pir::{build_patterns, decode_record, prepare_queries, split_stripes};
use pmsr_core::{Answer, EncodingMatrix, Field, FieldElement, Matrix, MessageMatrix, PatternMatrix, PirConfig};
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

use crate::codec::{bytes_to_symbols, symbols_to_bytes};
use crate::config::ClusterConfig;
use crate::error::{ClusterError, Result};
use crate::store::RecordInfo;
use crate::wire::{read_frame, write_frame, CodeHeader, Message};

pub const REQUEST_TIMEOUT: Duration = Duration::from_secs(5);
pub const TRANSPORT_RETRIES: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GetReport {
    pub payload: Vec<u8>,
    /// Stripes fetched; the same for every record of the cluster.
    pub stripes: usize,
    /// Symbols received from all nodes.
    pub downloaded_symbols: usize,
    /// Symbols of the decoded record, `stripes · B`.
    pub desired_symbols: usize,
    /// Query matrices sent, per stripe then per node.
    pub queries: Vec<Vec<Matrix>>,
}

impl GetReport {
    pub fn cpop(&self) -> Ratio<i64> {
        Ratio::new(self.downloaded_symbols as i64, self.desired_symbols as i64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepairReport {
    pub failed: usize,
    pub helpers: Vec<usize>,
    /// `(record, stripe)` pairs regenerated.
    pub regenerated: usize,
    pub downloaded_symbols: usize,
    pub restored_symbols: usize,
    pub verified: bool,
}

impl RepairReport {
    pub fn ratio(&self) -> Option<Ratio<i64>> {
        (self.restored_symbols > 0)
            .then(|| Ratio::new(self.downloaded_symbols as i64, self.restored_symbols as i64))
    }
}

#[derive(Debug)]
pub struct Coordinator {
    cfg: ClusterConfig,
    field: Field,
    enc: EncodingMatrix,
    pir: PirConfig,
    patterns: Vec<PatternMatrix>,
    timeout: Duration,
}

impl Coordinator {
    pub fn new(cfg: ClusterConfig) -> Result<Self> {
        let field = cfg.field()?;
        let enc = cfg.encoding_matrix()?;
        let pir = cfg.pir_config()?;
        let patterns = build_patterns(&pir, field);
        Ok(Coordinator { cfg, field, enc, pir, patterns, timeout: REQUEST_TIMEOUT })
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn config(&self) -> &ClusterConfig {
        &self.cfg
    }

    pub fn encoding_matrix(&self) -> &EncodingMatrix {
        &self.enc
    }

    pub fn pir_config(&self) -> &PirConfig {
        &self.pir
    }

    fn header(&self) -> CodeHeader {
        CodeHeader { q: self.cfg.q, n: self.cfg.n as u32, k: self.cfg.k as u32 }
    }

    fn check_node(&self, node: usize) -> Result<()> {
        if node == 0 || node > self.cfg.n {
            return Err(ClusterError::UnknownNode(node));
        }
        Ok(())
    }

    fn check_record(&self, record: u32) -> Result<()> {
        if record == 0 || record as usize > self.cfg.m {
            return Err(ClusterError::Config(format!("record id {record} outside 1..={}", self.cfg.m)));
        }
        Ok(())
    }

    fn exchange(&self, node: usize, payload: &[u8]) -> std::io::Result<Vec<u8>> {
        let addr = self.cfg.nodes[node - 1]
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::NotFound, "address did not resolve"))?;
        let stream = TcpStream::connect_timeout(&addr, self.timeout)?;
        stream.set_read_timeout(Some(self.timeout))?;
        stream.set_write_timeout(Some(self.timeout))?;
        stream.set_nodelay(true)?;
        let mut writer = BufWriter::new(stream.try_clone()?);
        write_frame(&mut writer, payload).map_err(std::io::Error::other)?;
        drop(writer);
        let mut reader = BufReader::new(stream);
        match read_frame(&mut reader) {
            Ok(Some(reply)) => Ok(reply),
            Ok(None) => Err(std::io::Error::new(std::io::ErrorKind::UnexpectedEof, "connection closed")),
            Err(ClusterError::Io(e)) => Err(e),
            Err(e) => Err(std::io::Error::other(e.to_string())),
        }
    }

    /// One request/reply round trip. Transport errors are retried; `ERROR`
    /// replies are not.
    pub fn request(&self, node: usize, msg: &Message) -> Result<Message> {
        self.check_node(node)?;
        let payload = msg.encode(self.cfg.symbol_width);
        let mut attempt = 0;
        let reply = loop {
            match self.exchange(node, &payload) {
                Ok(reply) => break reply,
                Err(e) if attempt < TRANSPORT_RETRIES => {
                    debug!("node {node}: {e}, retrying");
                    attempt += 1;
                }
                Err(source) => return Err(ClusterError::Unreachable { node, source }),
            }
        };
        match Message::decode(&reply, self.field, self.cfg.symbol_width)? {
            Message::Error { message } => Err(ClusterError::Remote { node, message }),
            other => Ok(other),
        }
    }

    /// Sends one request per listed node concurrently.
    fn fan_out<F>(&self, nodes: &[usize], make: F) -> Vec<(usize, Result<Message>)>
    where
        F: Fn(usize) -> Message + Sync,
    {
        thread::scope(|s| {
            let handles: Vec<_> = nodes
                .iter()
                .map(|&node| {
                    let make = &make;
                    (node, s.spawn(move || self.request(node, &make(node))))
                })
                .collect();
            handles
                .into_iter()
                .map(|(node, h)| (node, h.join().expect("request thread panicked")))
                .collect()
        })
    }

    fn all_nodes(&self) -> Vec<usize> {
        (1..=self.cfg.n).collect()
    }

    /// `(node id, catalog)` of a live node.
    pub fn health(&self, node: usize) -> Result<(u32, Vec<RecordInfo>)> {
        match self.request(node, &Message::Health)? {
            Message::Ok { node_id, catalog } => Ok((node_id, catalog)),
            _ => Err(ClusterError::UnexpectedReply { node }),
        }
    }

    /// Health of every node; `None` for nodes that did not answer.
    pub fn health_all(&self) -> Vec<(usize, Option<Vec<RecordInfo>>)> {
        self.fan_out(&self.all_nodes(), |_| Message::Health)
            .into_iter()
            .map(|(node, r)| match r {
                Ok(Message::Ok { catalog, .. }) => (node, Some(catalog)),
                _ => (node, None),
            })
            .collect()
    }

    pub fn get_share(&self, node: usize, record: u32, stripe: u32) -> Result<Vec<FieldElement>> {
        match self.request(node, &Message::GetShare { record, stripe })? {
            Message::Share { symbols } => Ok(symbols),
            _ => Err(ClusterError::UnexpectedReply { node }),
        }
    }

    fn delete_everywhere(&self, record: u32) -> Vec<(usize, Result<Message>)> {
        self.fan_out(&self.all_nodes(), |_| Message::Delete { record })
    }

    /// Encodes `payload` as record `record` and stores row `i` of every
    /// stripe at node `i`. Returns the stripe count. On any failure the
    /// record is deleted from every reachable node.
    pub fn put(&self, record: u32, payload: &[u8]) -> Result<usize> {
        self.check_record(record)?;
        let length = u32::try_from(payload.len()).map_err(|_| ClusterError::Config("payload too large".into()))?;
        for (node, r) in self.fan_out(&self.all_nodes(), |_| Message::Health) {
            r.map_err(|e| ClusterError::PutAborted(format!("node {node} is not healthy: {e}")))?;
        }
        let params = *self.enc.params();
        let symbols = bytes_to_symbols(self.field, payload);
        let stripes = split_stripes(&symbols, self.field, params.b);
        let info = RecordInfo { record, stripes: stripes.len() as u32, length };
        let mut rows: Vec<Vec<Vec<FieldElement>>> = vec![Vec::with_capacity(stripes.len()); params.n];
        for stripe in &stripes {
            let code = encode(&MessageMatrix::from_record(stripe, &params)?, &self.enc)?;
            for (i, node_rows) in rows.iter_mut().enumerate() {
                node_rows.push(code.share(i));
            }
        }

        let result = (|| -> Result<()> {
            for (node, r) in self.delete_everywhere(record) {
                r.map_err(|e| ClusterError::PutAborted(format!("node {node}: {e}")))?;
            }
            let header = self.header();
            let outcomes = thread::scope(|s| {
                let handles: Vec<_> = rows
                    .iter()
                    .enumerate()
                    .map(|(i, node_rows)| {
                        s.spawn(move || -> Result<()> {
                            for (stripe, row) in node_rows.iter().enumerate() {
                                let msg = Message::Store { header, info, stripe: stripe as u32, symbols: row.clone() };
                                self.request(i + 1, &msg)?;
                            }
                            Ok(())
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("store thread panicked")).collect::<Vec<_>>()
            });
            for (i, r) in outcomes.into_iter().enumerate() {
                r.map_err(|e| ClusterError::PutAborted(format!("node {}: {e}", i + 1)))?;
            }
            Ok(())
        })();
        if let Err(e) = result {
            self.delete_everywhere(record);
            return Err(e);
        }
        info!("stored record {record} as {} stripe(s)", stripes.len());
        Ok(stripes.len())
    }

    /// [`Coordinator::private_get_with`] driven by a seeded ChaCha20 stream.
    pub fn private_get(&self, record: u32, seed: u64) -> Result<GetReport> {
        self.private_get_with(record, &mut ChaCha20Rng::seed_from_u64(seed))
    }

    /// Privately fetches record `record`. Every node must answer; the stripe
    /// count fetched is the cluster-wide maximum so the traffic does not
    /// depend on which record is wanted. Each stripe uses a fresh mask drawn
    /// from `rng`.
    pub fn private_get_with<R: RngCore>(&self, record: u32, rng: &mut R) -> Result<GetReport> {
        self.check_record(record)?;
        let mut catalog: Option<Vec<RecordInfo>> = None;
        for (node, health) in self.health_all() {
            let Some(c) = health else {
                return Err(ClusterError::RetrievalUnavailable(format!("node {node} is down")));
            };
            match &catalog {
                None => catalog = Some(c),
                Some(first) if *first != c => {
                    return Err(ClusterError::RetrievalUnavailable(format!(
                        "node {node} holds a different set of records"
                    )))
                }
                Some(_) => {}
            }
        }
        let catalog = catalog.unwrap_or_default();
        let info = catalog
            .iter()
            .find(|i| i.record == record)
            .copied()
            .ok_or_else(|| ClusterError::NotFound(format!("record {record}")))?;
        let stripes = catalog.iter().map(|i| i.stripes as usize).max().unwrap_or(0);

        let header = self.header();
        let mut symbols = Vec::with_capacity(stripes * self.enc.params().b);
        let mut downloaded = 0;
        let mut sent = Vec::with_capacity(stripes);
        for stripe in 0..stripes {
            let queries = prepare_queries(&self.pir, &self.patterns, record as usize - 1, rng)?;
            let matrices: Vec<Matrix> = queries.into_iter().map(|q| q.into_matrix()).collect();
            let replies = self.fan_out(&self.all_nodes(), |node| Message::Query {
                header,
                stripe: stripe as u32,
                query: matrices[node - 1].clone(),
            });
            let mut answers = Vec::with_capacity(self.cfg.n);
            for (node, r) in replies {
                match r {
                    Ok(Message::Answer { symbols }) => {
                        downloaded += symbols.len();
                        answers.push(Answer::new(symbols));
                    }
                    Ok(_) => return Err(ClusterError::UnexpectedReply { node }),
                    Err(e) => return Err(ClusterError::RetrievalUnavailable(format!("node {node}: {e}"))),
                }
            }
            symbols.extend(decode_record(&answers, &self.enc, &self.pir)?);
            sent.push(matrices);
        }
        let payload = symbols_to_bytes(self.field, &symbols, info.length as usize)?;
        Ok(GetReport {
            payload,
            stripes,
            downloaded_symbols: downloaded,
            desired_symbols: stripes * self.enc.params().b,
            queries: sent,
        })
    }

    /// Regenerates every share of node `failed` from the `r` lowest-indexed
    /// live nodes and stores it back at `failed`, which must be reachable
    /// (restarted or wiped). With `verify`, each regenerated row is checked
    /// against a re-encode of the record recovered from `k` helpers.
    pub fn repair(&self, failed: usize, verify: bool) -> Result<RepairReport> {
        self.check_node(failed)?;
        let params = *self.enc.params();
        let others: Vec<usize> = self.all_nodes().into_iter().filter(|&n| n != failed).collect();
        let live: Vec<(usize, Vec<RecordInfo>)> = self
            .fan_out(&others, |_| Message::Health)
            .into_iter()
            .filter_map(|(node, r)| match r {
                Ok(Message::Ok { catalog, .. }) => Some((node, catalog)),
                _ => None,
            })
            .collect();
        if live.len() < params.r {
            return Err(ClusterError::InsufficientHelpers { live: live.len(), needed: params.r });
        }
        let helpers: Vec<usize> = live.iter().take(params.r).map(|(n, _)| *n).collect();
        let catalog = live[0].1.clone();
        self.health(failed)?;

        let header = self.header();
        let mut report = RepairReport {
            failed,
            helpers: helpers.clone(),
            regenerated: 0,
            downloaded_symbols: 0,
            restored_symbols: 0,
            verified: verify,
        };
        for info in &catalog {
            for stripe in 0..info.stripes {
                let replies = self.fan_out(&helpers, |_| Message::RepairHelp {
                    header,
                    failed: failed as u32,
                    record: info.record,
                    stripe,
                });
                let mut symbols = Vec::with_capacity(params.r);
                for (node, r) in replies {
                    match r? {
                        Message::RepairSymbol { symbol } => symbols.push((node - 1, symbol)),
                        _ => return Err(ClusterError::UnexpectedReply { node }),
                    }
                }
                report.downloaded_symbols += symbols.len();
                let row = repair_regenerate(failed - 1, &symbols, &self.enc)?;
                if verify {
                    let shares: Vec<Share> = helpers[..params.k]
                        .iter()
                        .map(|&h| Ok((h - 1, self.get_share(h, info.record, stripe)?)))
                        .collect::<Result<_>>()?;
                    let code = encode(&recover(&shares, &self.enc)?, &self.enc)?;
                    if code.share(failed - 1) != row {
                        return Err(ClusterError::RepairMismatch { record: info.record, stripe });
                    }
                }
                let store = Message::Store { header, info: *info, stripe, symbols: row };
                self.request(failed, &store)?;
                report.regenerated += 1;
                report.restored_symbols += params.alpha;
            }
        }
        info!(
            "node {failed}: regenerated {} share(s) from helpers {:?}",
            report.regenerated, report.helpers
        );
        Ok(report)
    }
}
