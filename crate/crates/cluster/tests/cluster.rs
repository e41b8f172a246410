use std::net::TcpListener;

use pmsr_cluster::daemon::NodeHandle;
use pmsr_cluster::local::init_store;
use pmsr_cluster::wire::Message;
use pmsr_cluster::{ClusterConfig, ClusterError, Coordinator};
use pmsr_core::msr::{encode, recover};
use pmsr_core::pir::{build_patterns, privacy_coupling_check, split_stripes};
use pmsr_core::{Field, MessageMatrix, MsrParams};
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use tempfile::TempDir;

struct Cluster {
    _dir: TempDir,
    cfg: ClusterConfig,
    nodes: Vec<Option<NodeHandle>>,
}

impl Cluster {
    fn start(q: u32, k: usize, m: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let n = 3 * k - 3;
        let listeners: Vec<TcpListener> = (0..n).map(|_| TcpListener::bind("127.0.0.1:0").unwrap()).collect();
        let addrs = listeners.iter().map(|l| l.local_addr().unwrap().to_string()).collect();
        let cfg = ClusterConfig::new(q, k, m, addrs, dir.path().join("data")).unwrap();
        let nodes = listeners
            .into_iter()
            .enumerate()
            .map(|(i, l)| Some(NodeHandle::spawn(init_store(&cfg, i + 1).unwrap(), l).unwrap()))
            .collect();
        Cluster { _dir: dir, cfg, nodes }
    }

    fn coord(&self) -> Coordinator {
        Coordinator::new(self.cfg.clone()).unwrap().with_timeout(std::time::Duration::from_millis(500))
    }

    fn kill(&mut self, node: usize) {
        self.nodes[node - 1].take().unwrap().shutdown();
    }

    /// Restarts `node` on the same address with an empty store.
    fn replace(&mut self, node: usize) {
        let store = init_store(&self.cfg, node).unwrap();
        store.wipe().unwrap();
        let l = TcpListener::bind(&self.cfg.nodes[node - 1]).unwrap();
        self.nodes[node - 1] = Some(NodeHandle::spawn(store, l).unwrap());
    }

    fn snapshot(&self, node: usize) -> Vec<(String, Vec<u8>)> {
        let dir = self.cfg.node_dir(node).join("shares");
        let mut files: Vec<_> = std::fs::read_dir(dir)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        files
    }
}

fn payload(seed: u64, len: usize) -> Vec<u8> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut v = vec![0u8; len];
    rng.fill_bytes(&mut v);
    v
}

#[test]
fn put_get_round_trip_every_record() {
    let c = Cluster::start(257, 3, 3);
    let coord = c.coord();
    let data: Vec<Vec<u8>> = (0..3).map(|i| payload(i, [5, 40, 0][i as usize])).collect();
    for (i, d) in data.iter().enumerate() {
        coord.put(i as u32 + 1, d).unwrap();
    }
    for (i, d) in data.iter().enumerate() {
        let report = coord.private_get(i as u32 + 1, 99).unwrap();
        assert_eq!(&report.payload, d);
        // 40 bytes need 7 stripes, and every get fetches that many
        assert_eq!(report.stripes, 7);
        assert_eq!(report.downloaded_symbols, 7 * 3 * 6);
        assert_eq!(report.cpop(), num_rational::Ratio::from_integer(3));
    }
}

#[test]
fn stripe_counts() {
    let c = Cluster::start(257, 3, 2);
    let coord = c.coord();
    assert_eq!(coord.put(1, &[]).unwrap(), 1);
    assert_eq!(coord.put(1, &[1; 6]).unwrap(), 1);
    assert_eq!(coord.put(2, &[1; 7]).unwrap(), 2);
    assert_eq!(coord.private_get(2, 0).unwrap().payload, vec![1; 7]);
    assert!(coord.private_get(1, 0).unwrap().payload.len() == 6);
}

#[test]
fn stored_rows_equal_psi_times_message() {
    let c = Cluster::start(257, 3, 1);
    let coord = c.coord();
    let data = payload(4, 13);
    coord.put(1, &data).unwrap();
    let f = Field::new(257).unwrap();
    let p = MsrParams::for_retrieval(3).unwrap();
    let symbols: Vec<_> = data.iter().map(|&b| f.element(b.into())).collect();
    for (s, stripe) in split_stripes(&symbols, f, p.b).iter().enumerate() {
        let code = encode(&MessageMatrix::from_record(stripe, &p).unwrap(), coord.encoding_matrix()).unwrap();
        for node in 1..=6 {
            assert_eq!(coord.get_share(node, 1, s as u32).unwrap(), code.share(node - 1));
        }
    }
}

#[test]
fn wipe_then_repair_restores_identical_files() {
    let c = Cluster::start(257, 3, 3);
    let coord = c.coord();
    for r in 1..=3 {
        coord.put(r, &payload(r.into(), 20)).unwrap();
    }
    for failed in 1..=6 {
        let before = c.snapshot(failed);
        init_store(&c.cfg, failed).unwrap().wipe().unwrap();
        assert!(matches!(coord.get_share(failed, 1, 0), Err(ClusterError::Remote { .. })));
        let report = coord.repair(failed, true).unwrap();
        assert_eq!(report.regenerated, 3 * 4);
        assert_eq!(report.downloaded_symbols, 3 * 4 * 4);
        assert_eq!(report.ratio(), Some(num_rational::Ratio::from_integer(2)));
        assert!(!report.helpers.contains(&failed));
        assert_eq!(c.snapshot(failed), before);
    }
}

#[test]
fn killed_node_blocks_retrieval_until_replaced() {
    let mut c = Cluster::start(257, 3, 2);
    let coord = c.coord();
    coord.put(1, b"private").unwrap();
    coord.put(2, b"other").unwrap();
    let before = c.snapshot(4);
    c.kill(4);
    assert!(matches!(coord.private_get(1, 1), Err(ClusterError::RetrievalUnavailable(_))));
    assert!(matches!(coord.put(1, b"x"), Err(ClusterError::PutAborted(_))));
    assert!(matches!(coord.repair(4, false), Err(ClusterError::Unreachable { node: 4, .. })));
    c.replace(4);
    let report = coord.repair(4, true).unwrap();
    assert_eq!(report.helpers, vec![1, 2, 3, 5]);
    assert_eq!(c.snapshot(4), before);
    assert_eq!(coord.private_get(1, 1).unwrap().payload, b"private");
}

#[test]
fn repair_needs_r_live_helpers() {
    let mut c = Cluster::start(257, 3, 1);
    let coord = c.coord();
    coord.put(1, b"abc").unwrap();
    c.kill(5);
    c.kill(6);
    match coord.repair(1, false) {
        Err(ClusterError::InsufficientHelpers { live: 3, needed: 4 }) => {}
        other => panic!("expected insufficient helpers, got {other:?}"),
    }
}

#[test]
fn larger_code_round_trip_and_repair() {
    let c = Cluster::start(257, 4, 2);
    let coord = c.coord();
    let a = payload(1, 30);
    coord.put(1, &a).unwrap();
    coord.put(2, &payload(2, 3)).unwrap();
    let before = c.snapshot(9);
    init_store(&c.cfg, 9).unwrap().wipe().unwrap();
    coord.repair(9, true).unwrap();
    assert_eq!(c.snapshot(9), before);
    assert_eq!(coord.private_get(1, 3).unwrap().payload, a);
}

#[test]
fn small_field_payloads_use_several_symbols_per_byte() {
    let c = Cluster::start(13, 3, 2);
    let coord = c.coord();
    let data: Vec<u8> = (0..=255).collect();
    // 3 symbols per byte, 6 per stripe
    assert_eq!(coord.put(2, &data).unwrap(), 128);
    assert_eq!(coord.private_get(2, 8).unwrap().payload, data);
}

#[test]
fn query_traffic_does_not_reveal_the_record() {
    let c = Cluster::start(257, 3, 3);
    let coord = c.coord();
    for r in 1..=3 {
        coord.put(r, &payload(r.into(), 12)).unwrap();
    }
    let a = coord.private_get(1, 42).unwrap();
    let b = coord.private_get(3, 42).unwrap();
    assert_eq!(a.queries.len(), b.queries.len());
    let cfg = coord.pir_config();
    let pats = build_patterns(cfg, Field::new(257).unwrap());
    for (qa, qb) in a.queries.iter().zip(&b.queries) {
        for (x, y) in qa.iter().zip(qb) {
            assert_eq!((x.rows(), x.cols()), (y.rows(), y.cols()));
        }
        // nodes past k receive the bare mask, identical under the same seed
        assert_eq!(qa[5], qb[5]);
        let u = &qa[5];
        assert!(privacy_coupling_check(cfg, &pats, 0, 2, u));
        // the first k nodes' queries differ from the mask by a pattern only
        let e = qa[0].sub(u).unwrap();
        assert_eq!(e.residues().iter().filter(|&&x| x != 0).count(), 2);
    }
}

#[test]
fn error_replies_surface_as_remote_errors() {
    let c = Cluster::start(257, 3, 1);
    let coord = c.coord();
    match coord.request(1, &Message::GetShare { record: 1, stripe: 0 }) {
        Err(ClusterError::Remote { node: 1, message }) => assert!(message.starts_with("not found")),
        other => panic!("{other:?}"),
    }
    assert!(matches!(coord.request(7, &Message::Health), Err(ClusterError::UnknownNode(7))));
}

#[test]
fn recovery_from_any_k_nodes_through_the_wire() {
    let c = Cluster::start(257, 3, 1);
    let coord = c.coord();
    let data = payload(6, 6);
    coord.put(1, &data).unwrap();
    let f = Field::new(257).unwrap();
    let want: Vec<_> = data.iter().map(|&b| f.element(b.into())).collect();
    pmsr_core::msr::for_each_subset(6, 3, |s| {
        let shares: Vec<_> = s.iter().map(|&i| (i, coord.get_share(i + 1, 1, 0).unwrap())).collect();
        let m = recover(&shares, coord.encoding_matrix()).unwrap();
        assert_eq!(m.to_record().unwrap(), want);
    });
}
