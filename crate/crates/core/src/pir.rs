//! Private retrieval over an MSR-coded store with `n = 3k − 3` nodes.
//!
//! Every node holds, for each of the `m` records, its `α`-symbol share;
//! concatenated that is one row of `m·α` symbols. To fetch record `f` the
//! client draws a uniform `k × m·α` mask `U` and sends node `i` the query
//! `Qⁱ = U + Vⁱ E^f`, where `Vⁱ` is a binary pattern and `E^f` selects the
//! columns of record `f`. Each node answers `Qⁱ · rowᵢᵀ` (`k` symbols).
//!
//! For subquery `t`, exactly `r = 2k − 2` nodes have a zero pattern row, so
//! their answers are pure interference `Ψᵢ · Iᵗ`. Solving that `r × r`
//! system gives `Iᵗ`, and subtracting `Ψᵢ · Iᵗ` from the other `k − 1`
//! answers exposes one share symbol each. Over all `k` subqueries this
//! yields the full shares of nodes `0..k`, from which the record is
//! recovered.
//!
//! Node, subquery, record and symbol indices here are zero-based.

use alloc::vec;
use alloc::vec::Vec;

use num_rational::Ratio;
use rand_core::RngCore;
use thiserror::Error;

use crate::field::{Field, FieldElement};
use crate::matrix::{Matrix, MatrixError};
use crate::msr::{self, EncodingMatrix, MessageMatrix, MsrError, MsrParams, Share};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PirError {
    #[error("invalid retrieval configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("record index {f} out of range for {m} records")]
    RecordOutOfRange { f: usize, m: usize },
    #[error("incomplete responses: {0}")]
    IncompleteResponses(&'static str),
    #[error("corrupt responses: {0}")]
    CorruptResponses(MsrError),
    #[error("invalid encoding matrix")]
    InvalidEncodingMatrix,
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Msr(#[from] MsrError),
}

/// Code parameters plus the record count `m` and the subquery count `d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PirConfig {
    params: MsrParams,
    m: usize,
    d: usize,
}

impl PirConfig {
    /// The constructible scheme: `n = 3k − 3`, `d = k`.
    pub fn new(params: MsrParams, m: usize) -> Result<Self, PirError> {
        if params.n != 3 * params.k - 3 {
            return Err(PirError::InvalidConfig("retrieval requires n = 3k - 3"));
        }
        Self::with_subqueries(params, m, params.k)
    }

    /// Any subquery count, for analysis with [`verify_scheme`]. Only
    /// `d = k` can generate queries.
    pub fn with_subqueries(params: MsrParams, m: usize, d: usize) -> Result<Self, PirError> {
        if m == 0 {
            return Err(PirError::InvalidConfig("at least one record is required"));
        }
        if d == 0 {
            return Err(PirError::InvalidConfig("at least one subquery is required"));
        }
        Ok(PirConfig { params, m, d })
    }

    pub const fn params(&self) -> &MsrParams {
        &self.params
    }

    /// Number of records.
    pub const fn records(&self) -> usize {
        self.m
    }

    /// Subqueries per node.
    pub const fn subqueries(&self) -> usize {
        self.d
    }

    /// Width of a node's concatenated row, `m·α`.
    pub const fn row_len(&self) -> usize {
        self.m * self.params.alpha
    }

    fn require_constructible(&self) -> Result<(), PirError> {
        if self.d != self.params.k || self.params.n != 3 * self.params.k - 3 {
            return Err(PirError::InvalidConfig("queries exist only for n = 3k - 3 and d = k"));
        }
        Ok(())
    }

    fn check_record(&self, f: usize) -> Result<(), PirError> {
        if f >= self.m {
            return Err(PirError::RecordOutOfRange { f, m: self.m });
        }
        Ok(())
    }
}

/// Binary `d × α` pattern `Vⁱ` of one node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternMatrix {
    v: Matrix,
}

impl PatternMatrix {
    pub fn new(v: Matrix) -> Self {
        PatternMatrix { v }
    }

    pub const fn matrix(&self) -> &Matrix {
        &self.v
    }

    /// Column of the single 1 in row `t`, or `None` for a zero row.
    pub fn selected(&self, t: usize) -> Option<usize> {
        self.v.row_residues(t).iter().position(|&x| x != 0)
    }

    /// `Vⁱ E^f`: the pattern placed at the columns of record `f`.
    pub fn expand(&self, cfg: &PirConfig, f: usize) -> Result<Matrix, PirError> {
        cfg.check_record(f)?;
        let alpha = cfg.params.alpha;
        let field = self.v.field();
        let mut out = Matrix::zeros(field, self.v.rows(), cfg.row_len());
        for t in 0..self.v.rows() {
            for s in 0..alpha.min(self.v.cols()) {
                let x = self.v.get(t, s);
                if !x.is_zero() {
                    out = out.with_entry(t, f * alpha + s, x)?;
                }
            }
        }
        Ok(out)
    }
}

/// Symbol of node `node` that subquery `t` retrieves, if any.
pub fn retrieved_position(params: &MsrParams, node: usize, t: usize) -> Option<usize> {
    if node >= params.k {
        return None;
    }
    let k = params.k;
    let s = (t + k - node % k) % k;
    (s < params.alpha).then_some(s)
}

/// `V⁰ = [I; 0]`, each following pattern a downward cyclic row shift of the
/// previous one for the first `k` nodes, zero for the rest.
pub fn build_patterns(cfg: &PirConfig, field: Field) -> Vec<PatternMatrix> {
    let p = cfg.params;
    (0..p.n)
        .map(|i| {
            let v = Matrix::from_fn(field, cfg.d, p.alpha, |t, s| {
                if retrieved_position(&p, i, t) == Some(s) {
                    field.one()
                } else {
                    field.zero()
                }
            });
            PatternMatrix { v }
        })
        .collect()
}

/// The uniform mask `U`. Not `Clone`: each retrieval consumes a fresh one.
#[derive(Debug, PartialEq, Eq)]
pub struct QueryMask {
    u: Matrix,
}

impl QueryMask {
    pub fn random<R: RngCore + ?Sized>(cfg: &PirConfig, field: Field, rng: &mut R) -> Self {
        let vals = field.sample_uniform(rng, cfg.d * cfg.row_len());
        let u = Matrix::from_elements(field, cfg.d, cfg.row_len(), &vals).expect("sized to fit");
        QueryMask { u }
    }

    pub fn from_matrix(cfg: &PirConfig, u: Matrix) -> Result<Self, PirError> {
        if u.rows() != cfg.d || u.cols() != cfg.row_len() {
            return Err(MatrixError::DimensionMismatch {
                op: "query mask",
                left: (u.rows(), u.cols()),
                right: (cfg.d, cfg.row_len()),
            }
            .into());
        }
        Ok(QueryMask { u })
    }

    pub const fn matrix(&self) -> &Matrix {
        &self.u
    }
}

/// `Qⁱ`, the `d × m·α` query sent to one node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryMatrix {
    q: Matrix,
}

impl QueryMatrix {
    pub fn new(q: Matrix) -> Self {
        QueryMatrix { q }
    }

    pub const fn matrix(&self) -> &Matrix {
        &self.q
    }

    pub fn into_matrix(self) -> Matrix {
        self.q
    }
}

/// `d` symbols returned by one node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Answer {
    symbols: Vec<FieldElement>,
}

impl Answer {
    pub fn new(symbols: Vec<FieldElement>) -> Self {
        Answer { symbols }
    }

    pub fn symbols(&self) -> &[FieldElement] {
        &self.symbols
    }
}

/// `Qⁱ = U + Vⁱ E^f` for every node. Consumes the mask.
pub fn gen_queries(
    cfg: &PirConfig,
    mask: QueryMask,
    patterns: &[PatternMatrix],
    f: usize,
) -> Result<Vec<QueryMatrix>, PirError> {
    cfg.require_constructible()?;
    cfg.check_record(f)?;
    if patterns.len() != cfg.params.n {
        return Err(PirError::InvalidConfig("one pattern per node is required"));
    }
    let u = mask.u;
    if u.rows() != cfg.d || u.cols() != cfg.row_len() {
        return Err(PirError::InvalidConfig("mask shape does not match the configuration"));
    }
    patterns
        .iter()
        .map(|v| Ok(QueryMatrix { q: u.add(&v.expand(cfg, f)?)? }))
        .collect()
}

/// Draws a fresh mask and generates the queries for record `f`.
pub fn prepare_queries<R: RngCore + ?Sized>(
    cfg: &PirConfig,
    patterns: &[PatternMatrix],
    f: usize,
    rng: &mut R,
) -> Result<Vec<QueryMatrix>, PirError> {
    let field = patterns
        .first()
        .map(|p| p.v.field())
        .ok_or(PirError::InvalidConfig("one pattern per node is required"))?;
    let mask = QueryMask::random(cfg, field, rng);
    gen_queries(cfg, mask, patterns, f)
}

/// `Qⁱ · rowᵀ`, one inner product per subquery.
pub fn node_answer(query: &QueryMatrix, stored_row: &[FieldElement]) -> Result<Answer, PirError> {
    let field = query.q.field();
    let row = Matrix::column_vector(field, stored_row)?;
    let a = query.q.mul(&row)?;
    Ok(Answer { symbols: a.col(0) })
}

/// One symbol exposed by a subquery: `(node, position within the record's
/// α symbols, value)`.
pub type Retrieved = (usize, usize, FieldElement);

/// Nodes whose pattern row `t` is zero, in increasing order.
fn interference_nodes(patterns: &[PatternMatrix], t: usize) -> Vec<usize> {
    (0..patterns.len()).filter(|&i| patterns[i].selected(t).is_none()).collect()
}

/// Cancels the interference of subquery `t` and returns the `k − 1` share
/// symbols of record `f` it carries. `column[i]` is node `i`'s answer to
/// subquery `t`.
pub fn decode_subquery(
    t: usize,
    column: &[FieldElement],
    enc: &EncodingMatrix,
    cfg: &PirConfig,
) -> Result<Vec<Retrieved>, PirError> {
    let p = cfg.params;
    if column.len() != p.n {
        return Err(PirError::IncompleteResponses("every node must answer every subquery"));
    }
    let field = enc.field();
    // node (t + 1) mod k has the zero row among the first k
    let quiet: Vec<usize> = (0..p.n)
        .filter(|&i| i >= p.k || retrieved_position(&p, i, t).is_none())
        .collect();
    debug_assert_eq!(quiet.len(), p.r);
    let psi_quiet = enc.psi().submatrix_rows(&quiet)?;
    let rhs: Vec<FieldElement> = quiet.iter().map(|&i| column[i]).collect();
    let interference = psi_quiet
        .solve(&Matrix::column_vector(field, &rhs)?)
        .map_err(|_| PirError::InvalidEncodingMatrix)?;
    let mut out = Vec::with_capacity(p.alpha);
    for i in 0..p.k {
        if let Some(s) = retrieved_position(&p, i, t) {
            let row = enc.psi().submatrix_rows(&[i])?;
            let leak = row.mul(&interference)?.get(0, 0);
            out.push((i, s, column[i] - leak));
        }
    }
    Ok(out)
}

/// Decodes record `f` (whichever it was) from the answers of all `n` nodes.
pub fn decode_record(answers: &[Answer], enc: &EncodingMatrix, cfg: &PirConfig) -> Result<Vec<FieldElement>, PirError> {
    cfg.require_constructible()?;
    let p = cfg.params;
    if answers.len() != p.n {
        return Err(PirError::IncompleteResponses("answers from all nodes are required"));
    }
    if answers.iter().any(|a| a.symbols.len() != cfg.d) {
        return Err(PirError::IncompleteResponses("every answer must carry d symbols"));
    }
    let field = enc.field();
    let mut shares: Vec<Vec<Option<FieldElement>>> = vec![vec![None; p.alpha]; p.k];
    for t in 0..cfg.d {
        let column: Vec<FieldElement> = answers.iter().map(|a| a.symbols[t]).collect();
        for (i, s, v) in decode_subquery(t, &column, enc, cfg)? {
            shares[i][s] = Some(v);
        }
    }
    let shares: Vec<Share> = shares
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            let row = row.into_iter().map(|x| x.unwrap_or(field.zero())).collect();
            (i, row)
        })
        .collect();
    let m = msr::recover(&shares, enc).map_err(PirError::CorruptResponses)?;
    m.to_record().map_err(PirError::CorruptResponses)
}

/// Checks `Qⁱ(U, f1) = Qⁱ(U + VⁱE^{f1} − VⁱE^{f2}, f2)` at every node.
///
/// `U ↦ U + Δᵢ` is a bijection, so under a uniform mask each node's query
/// has the same distribution whichever record is requested.
pub fn privacy_coupling_check(
    cfg: &PirConfig,
    patterns: &[PatternMatrix],
    f1: usize,
    f2: usize,
    u: &Matrix,
) -> bool {
    let check = || -> Result<bool, PirError> {
        let q1 = gen_queries(cfg, QueryMask::from_matrix(cfg, u.clone())?, patterns, f1)?;
        for (i, v) in patterns.iter().enumerate() {
            let shifted = u.add(&v.expand(cfg, f1)?)?.sub(&v.expand(cfg, f2)?)?;
            let q2 = gen_queries(cfg, QueryMask::from_matrix(cfg, shifted)?, patterns, f2)?;
            if q1[i] != q2[i] {
                return Ok(false);
            }
        }
        Ok(true)
    };
    check().unwrap_or(false)
}

/// Exact cost figures of a configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MetricsReport {
    /// Storage overhead `n / k`.
    pub so: Ratio<i64>,
    /// Download per desired symbol, `d·n / (k·α)`.
    pub cpop: Ratio<i64>,
    /// Repair download over node content, `r / (r − k + 1)`.
    pub rr: Ratio<i64>,
    /// `cPoP · (1 − r / (k·SO))`, at least 1 for any decodable scheme.
    pub tradeoff_product: Ratio<i64>,
    /// `cPoP − RR · d / k`, at least 1 for any decodable scheme.
    pub slack: Ratio<i64>,
}

impl MetricsReport {
    pub fn bounds_hold(&self) -> bool {
        let one = Ratio::from_integer(1);
        self.tradeoff_product >= one && self.slack >= one
    }
}

pub fn metrics_report(cfg: &PirConfig) -> MetricsReport {
    let p = cfg.params;
    let (n, k, r, alpha, d) = (p.n as i64, p.k as i64, p.r as i64, p.alpha as i64, cfg.d as i64);
    let so = Ratio::new(n, k);
    let cpop = Ratio::new(d * n, k * alpha);
    let rr = Ratio::new(r, r - k + 1);
    let one = Ratio::from_integer(1);
    let tradeoff_product = cpop * (one - Ratio::from_integer(r) / (Ratio::from_integer(k) * so));
    let slack = cpop - rr * Ratio::new(d, k);
    MetricsReport { so, cpop, rr, tradeoff_product, slack }
}

/// cPoP measured from a transcript: symbols downloaded over symbols wanted.
pub fn cpop_from_transcript(downloaded: usize, desired: usize) -> Ratio<i64> {
    Ratio::new(downloaded as i64, desired as i64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeCheck {
    /// Each subquery has exactly `r` interference-only nodes and their Ψ
    /// rows are invertible.
    InterferenceSolvable,
    /// The retrieved cells cover every share symbol of the first `k` nodes
    /// exactly once.
    RetrievalTiling,
    /// `k·α ≤ (n − r)·d`.
    EquationCount,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemeReport {
    pub results: Vec<(SchemeCheck, bool)>,
}

impl SchemeReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|(_, ok)| *ok)
    }

    pub fn failures(&self) -> Vec<SchemeCheck> {
        self.results.iter().filter(|(_, ok)| !ok).map(|(c, _)| *c).collect()
    }
}

/// Checks the decodability conditions of a pattern set.
pub fn verify_scheme(cfg: &PirConfig, enc: &EncodingMatrix, patterns: &[PatternMatrix]) -> SchemeReport {
    let p = cfg.params;
    let shaped = patterns.len() == p.n
        && patterns.iter().all(|v| {
            v.v.rows() == cfg.d
                && v.v.cols() == p.alpha
                && (0..cfg.d).all(|t| {
                    let row = v.v.row_residues(t);
                    row.iter().all(|&x| x <= 1) && row.iter().filter(|&&x| x == 1).count() <= 1
                })
        });

    let solvable = shaped
        && (0..cfg.d).all(|t| {
            let quiet = interference_nodes(patterns, t);
            quiet.len() == p.r
                && enc.psi().submatrix_rows(&quiet).map(|m| m.rank() == p.r).unwrap_or(false)
        });

    let tiling = shaped && {
        let mut hits = vec![0usize; p.n * p.alpha];
        for (i, v) in patterns.iter().enumerate() {
            for t in 0..cfg.d {
                if let Some(s) = v.selected(t) {
                    hits[i * p.alpha + s] += 1;
                }
            }
        }
        hits.iter().enumerate().all(|(cell, &h)| if cell < p.k * p.alpha { h == 1 } else { h == 0 })
    };

    let counting = p.k * p.alpha <= (p.n - p.r) * cfg.d;

    SchemeReport {
        results: vec![
            (SchemeCheck::InterferenceSolvable, solvable),
            (SchemeCheck::RetrievalTiling, tiling),
            (SchemeCheck::EquationCount, counting),
        ],
    }
}

/// Splits a symbol stream into `B`-symbol stripes, zero-padding the last.
/// An empty stream is one all-zero stripe.
pub fn split_stripes(symbols: &[FieldElement], field: Field, b: usize) -> Vec<Vec<FieldElement>> {
    if symbols.is_empty() {
        return vec![vec![field.zero(); b]];
    }
    symbols
        .chunks(b)
        .map(|c| {
            let mut s = c.to_vec();
            s.resize(b, field.zero());
            s
        })
        .collect()
}

/// `m · α` concatenated share row of one node for one stripe, given each
/// record's message matrix.
pub fn node_row(enc: &EncodingMatrix, node: usize, messages: &[MessageMatrix]) -> Result<Vec<FieldElement>, PirError> {
    let psi_i = enc.psi().submatrix_rows(&[node])?;
    let mut row = Vec::with_capacity(messages.len() * enc.params().alpha);
    for m in messages {
        row.extend(psi_i.mul(m.matrix())?.row(0));
    }
    Ok(row)
}
