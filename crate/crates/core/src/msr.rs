//! Product-matrix minimum storage regenerating codes with repair degree
//! `r = 2k − 2`.
//!
//! A record of `B = k(k−1)` symbols is packed into a message matrix
//! `M = [S₁; S₂]` of two symmetric `α × α` blocks (`α = k − 1`) and encoded
//! as `C = Ψ · M`, where `Ψ = [Φ | ΛΦ]` is `n × r`. Node `i` stores row `i`
//! of `C`. Any `k` rows determine `M`; a lost row is rebuilt from one symbol
//! (`β = 1`) sent by each of `r` helpers.
//!
//! Node indices in this module are zero-based.

use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use thiserror::Error;

use crate::field::{Field, FieldElement};
use crate::matrix::{Matrix, MatrixError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MsrError {
    #[error("invalid code parameters: {0}")]
    InvalidParams(&'static str),
    #[error("field too small: GF({q}) cannot host {n} nodes with distinct lambdas")]
    FieldTooSmall { q: u32, n: usize },
    #[error("lambda collision: nodes {0} and {1} have equal x^alpha")]
    LambdaCollision(usize, usize),
    #[error("rank deficiency: rows {0:?} are linearly dependent")]
    RankDeficiency(Vec<usize>),
    #[error("expected {expected} evaluation points, got {got}")]
    PointCount { expected: usize, got: usize },
    #[error("record has {got} symbols, expected {expected}")]
    RecordLength { expected: usize, got: usize },
    #[error("corrupt message matrix")]
    CorruptMessageMatrix,
    #[error("node {0} appears more than once")]
    RepeatedNode(usize),
    #[error("node index {index} out of range for n = {n}")]
    NodeOutOfRange { index: usize, n: usize },
    #[error("expected {expected} shares, got {got}")]
    WrongShareCount { expected: usize, got: usize },
    #[error("share has {got} symbols, expected {expected}")]
    ShareLength { expected: usize, got: usize },
    #[error("underdetermined: {equations} equations for {unknowns} unknowns")]
    Underdetermined { equations: usize, unknowns: usize },
    #[error("corrupt shares")]
    CorruptShares,
    #[error("helper {0} is the failed node")]
    HelperIsFailed(usize),
    #[error("invalid encoding matrix")]
    InvalidEncodingMatrix,
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// Above this node count the subset conditions are spot-checked instead of
/// enumerated.
pub const EXHAUSTIVE_CHECK_MAX_N: usize = 12;
/// Number of random subsets checked per condition when `n` is large.
pub const SPOT_CHECK_SUBSETS: usize = 256;

/// `(n, k, r, α, β, B)` of a product-matrix MSR code with `r = 2k − 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MsrParams {
    pub n: usize,
    pub k: usize,
    pub r: usize,
    pub alpha: usize,
    pub beta: usize,
    pub b: usize,
}

impl MsrParams {
    /// Derives `r = 2k−2, α = k−1, β = 1, B = k(k−1)` from `(n, k)`.
    pub fn new(n: usize, k: usize) -> Result<Self, MsrError> {
        if k < 2 {
            return Err(MsrError::InvalidParams("k must be at least 2"));
        }
        Self::from_tuple(n, k, 2 * k - 2, k - 1, 1, k * (k - 1))
    }

    /// The parameters used by the retrieval scheme: `n = 3k − 3`.
    pub fn for_retrieval(k: usize) -> Result<Self, MsrError> {
        if k < 2 {
            return Err(MsrError::InvalidParams("k must be at least 2"));
        }
        Self::new(3 * k - 3, k)
    }

    /// Validates an explicit tuple.
    pub fn from_tuple(n: usize, k: usize, r: usize, alpha: usize, beta: usize, b: usize) -> Result<Self, MsrError> {
        if k < 2 {
            return Err(MsrError::InvalidParams("k must be at least 2"));
        }
        if r != 2 * k - 2 {
            return Err(MsrError::InvalidParams("repair degree must be 2k-2"));
        }
        if alpha != k - 1 || beta != 1 || b != k * (k - 1) {
            return Err(MsrError::InvalidParams("expected alpha = k-1, beta = 1, B = k(k-1)"));
        }
        if n <= r {
            return Err(MsrError::InvalidParams("n must exceed the repair degree"));
        }
        // MSR point: alpha = B/k, beta = B/(k(r-k+1))
        if alpha * k != b || beta * k * (r - k + 1) != b {
            return Err(MsrError::InvalidParams("not at the MSR point"));
        }
        Ok(MsrParams { n, k, r, alpha, beta, b })
    }

    /// Number of independent symbols in each symmetric block.
    pub const fn half(&self) -> usize {
        self.b / 2
    }
}

/// `Ψ = [Φ | ΛΦ]` together with the data it was built from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodingMatrix {
    params: MsrParams,
    field: Field,
    points: Vec<FieldElement>,
    phi: Matrix,
    lambda: Vec<FieldElement>,
    psi: Matrix,
}

impl EncodingMatrix {
    /// Builds the Vandermonde-based encoding matrix on `points` (default
    /// `1, …, n`) with `λᵢ = xᵢ^α`, then checks that every `r`-row subset
    /// of Ψ and every `α`-row subset of Φ is invertible and that the λ's
    /// are distinct.
    pub fn build(params: MsrParams, field: Field, points: Option<&[FieldElement]>) -> Result<Self, MsrError> {
        let q = field.modulus();
        if (q as usize) <= params.n || distinct_powers(q, params.alpha) < params.n {
            return Err(MsrError::FieldTooSmall { q, n: params.n });
        }
        let points: Vec<FieldElement> = match points {
            Some(p) => p.to_vec(),
            None => (1..=params.n as u64).map(|i| field.element(i)).collect(),
        };
        if points.len() != params.n {
            return Err(MsrError::PointCount { expected: params.n, got: points.len() });
        }
        let phi = Matrix::vandermonde(field, &points, params.alpha)?;
        let lambda: Vec<FieldElement> = points.iter().map(|p| p.pow(params.alpha as u64)).collect();
        for j in 0..lambda.len() {
            if let Some(i) = lambda[..j].iter().position(|&l| l == lambda[j]) {
                return Err(MsrError::LambdaCollision(i, j));
            }
        }
        let psi = phi.hstack(&phi.scale_rows(&lambda)?)?;
        let enc = EncodingMatrix { params, field, points, phi, lambda, psi };
        enc.check_subsets(&enc.psi, params.r)?;
        enc.check_subsets(&enc.phi, params.alpha)?;
        Ok(enc)
    }

    fn check_subsets(&self, m: &Matrix, size: usize) -> Result<(), MsrError> {
        let n = self.params.n;
        let singular = |rows: &[usize]| -> Result<bool, MsrError> {
            Ok(m.submatrix_rows(rows)?.rank() < size)
        };
        if n <= EXHAUSTIVE_CHECK_MAX_N {
            let mut found = None;
            for_each_subset(n, size, |rows| {
                if found.is_none() && singular(rows).unwrap_or(true) {
                    found = Some(rows.to_vec());
                }
            });
            return match found {
                Some(rows) => Err(MsrError::RankDeficiency(rows)),
                None => Ok(()),
            };
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x504d_5352);
        for _ in 0..SPOT_CHECK_SUBSETS {
            let mut rows = random_subset(&mut rng, n, size);
            rows.sort_unstable();
            if singular(&rows)? {
                return Err(MsrError::RankDeficiency(rows));
            }
        }
        Ok(())
    }

    pub const fn params(&self) -> &MsrParams {
        &self.params
    }

    pub const fn field(&self) -> Field {
        self.field
    }

    pub fn points(&self) -> &[FieldElement] {
        &self.points
    }

    /// `n × α` Vandermonde block.
    pub const fn phi(&self) -> &Matrix {
        &self.phi
    }

    /// Diagonal of Λ.
    pub fn lambda(&self) -> &[FieldElement] {
        &self.lambda
    }

    /// `n × r` encoding matrix.
    pub const fn psi(&self) -> &Matrix {
        &self.psi
    }

    fn check_node(&self, index: usize) -> Result<(), MsrError> {
        if index >= self.params.n {
            return Err(MsrError::NodeOutOfRange { index, n: self.params.n });
        }
        Ok(())
    }
}

/// Number of distinct values `x^alpha` takes over the nonzero elements of
/// GF(q): `(q − 1) / gcd(alpha, q − 1)`.
fn distinct_powers(q: u32, alpha: usize) -> usize {
    let order = (q - 1) as usize;
    let (mut a, mut b) = (alpha.max(1), order);
    while b != 0 {
        (a, b) = (b, a % b);
    }
    order / a
}

/// Calls `f` with every `size`-subset of `0..n` in lexicographic order.
pub fn for_each_subset<F: FnMut(&[usize])>(n: usize, size: usize, mut f: F) {
    if size > n {
        return;
    }
    let mut idx: Vec<usize> = (0..size).collect();
    loop {
        f(&idx);
        let mut i = size;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + n - size {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..size {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn random_subset<R: RngCore>(rng: &mut R, n: usize, size: usize) -> Vec<usize> {
    let mut all: Vec<usize> = (0..n).collect();
    for i in 0..size {
        let j = i + (rng.next_u64() % (n - i) as u64) as usize;
        all.swap(i, j);
    }
    all.truncate(size);
    all
}

/// Position of symmetric entry `(a, b)` within the row-major upper triangle
/// of an `α × α` block.
fn upper_index(alpha: usize, a: usize, b: usize) -> usize {
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    // rows 0..a of the triangle hold a*alpha - a(a-1)/2 entries
    a * alpha - a * a.saturating_sub(1) / 2 + (b - a)
}

/// `M = [S₁; S₂]`, an `r × α` matrix with symmetric halves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageMatrix {
    m: Matrix,
    params: MsrParams,
}

impl MessageMatrix {
    /// Packs a record: the first `B/2` symbols fill the upper triangle of
    /// `S₁` row by row, the next `B/2` fill `S₂` the same way, and the lower
    /// triangles mirror them.
    pub fn from_record(record: &[FieldElement], params: &MsrParams) -> Result<Self, MsrError> {
        if record.len() != params.b {
            return Err(MsrError::RecordLength { expected: params.b, got: record.len() });
        }
        let field = record.first().map(|e| e.field()).ok_or(MsrError::RecordLength {
            expected: params.b,
            got: 0,
        })?;
        let alpha = params.alpha;
        let half = params.half();
        let mut entries = Vec::with_capacity(params.r * alpha);
        for h in 0..params.r {
            let (block, row) = (h / alpha, h % alpha);
            for c in 0..alpha {
                entries.push(record[block * half + upper_index(alpha, row, c)]);
            }
        }
        let m = Matrix::from_elements(field, params.r, alpha, &entries)?;
        Ok(MessageMatrix { m, params: *params })
    }

    /// Wraps an `r × α` matrix, rejecting asymmetric blocks.
    pub fn from_matrix(m: Matrix, params: &MsrParams) -> Result<Self, MsrError> {
        if m.rows() != params.r || m.cols() != params.alpha {
            return Err(MsrError::CorruptMessageMatrix);
        }
        let mm = MessageMatrix { m, params: *params };
        if !mm.s1().is_symmetric() || !mm.s2().is_symmetric() {
            return Err(MsrError::CorruptMessageMatrix);
        }
        Ok(mm)
    }

    /// Inverse of [`MessageMatrix::from_record`].
    pub fn to_record(&self) -> Result<Vec<FieldElement>, MsrError> {
        if !self.s1().is_symmetric() || !self.s2().is_symmetric() {
            return Err(MsrError::CorruptMessageMatrix);
        }
        let alpha = self.params.alpha;
        let mut out = Vec::with_capacity(self.params.b);
        for block in 0..2 {
            for a in 0..alpha {
                for b in a..alpha {
                    out.push(self.m.get(block * alpha + a, b));
                }
            }
        }
        Ok(out)
    }

    pub const fn matrix(&self) -> &Matrix {
        &self.m
    }

    pub fn s1(&self) -> Matrix {
        let rows: Vec<usize> = (0..self.params.alpha).collect();
        self.m.submatrix_rows(&rows).expect("rows in range")
    }

    pub fn s2(&self) -> Matrix {
        let rows: Vec<usize> = (self.params.alpha..self.params.r).collect();
        self.m.submatrix_rows(&rows).expect("rows in range")
    }

    pub const fn params(&self) -> &MsrParams {
        &self.params
    }
}

/// `C = Ψ · M`; row `i` is the share of node `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeMatrix {
    c: Matrix,
}

impl CodeMatrix {
    pub const fn matrix(&self) -> &Matrix {
        &self.c
    }

    pub fn share(&self, node: usize) -> Vec<FieldElement> {
        self.c.row(node)
    }

    pub fn node_count(&self) -> usize {
        self.c.rows()
    }
}

pub fn encode(m: &MessageMatrix, enc: &EncodingMatrix) -> Result<CodeMatrix, MsrError> {
    Ok(CodeMatrix { c: enc.psi.mul(&m.m)? })
}

/// `(node index, α symbols)`.
pub type Share = (usize, Vec<FieldElement>);

fn validate_shares(shares: &[Share], enc: &EncodingMatrix, expected: usize) -> Result<(), MsrError> {
    let p = &enc.params;
    for (i, (node, row)) in shares.iter().enumerate() {
        enc.check_node(*node)?;
        if shares[..i].iter().any(|(other, _)| other == node) {
            return Err(MsrError::RepeatedNode(*node));
        }
        if row.len() != p.alpha {
            return Err(MsrError::ShareLength { expected: p.alpha, got: row.len() });
        }
    }
    if shares.len() < expected {
        return Err(MsrError::Underdetermined {
            equations: shares.len() * p.alpha,
            unknowns: p.b,
        });
    }
    if shares.len() != expected {
        return Err(MsrError::WrongShareCount { expected, got: shares.len() });
    }
    Ok(())
}

/// Recovers `M` from the shares of exactly `k` distinct nodes.
///
/// With `K` the chosen nodes, `G = C_K Φ_Kᵀ = P + Λ_K Q` where
/// `P = Φ_K S₁ Φ_Kᵀ` and `Q = Φ_K S₂ Φ_Kᵀ` are symmetric. Each off-diagonal
/// pair `(G_ij, G_ji)` gives `P_ij` and `Q_ij` because `λ_i ≠ λ_j`. Row `i`
/// of `P` off the diagonal is `(Φ_i S₁) Φ_jᵀ` for the `α` other nodes, which
/// pins down `Φ_i S₁`; `α` such rows then give `S₁`. Same for `S₂`.
pub fn recover(shares: &[Share], enc: &EncodingMatrix) -> Result<MessageMatrix, MsrError> {
    let p = enc.params;
    validate_shares(shares, enc, p.k)?;
    let field = enc.field;
    let nodes: Vec<usize> = shares.iter().map(|(n, _)| *n).collect();
    let flat: Vec<FieldElement> = shares.iter().flat_map(|(_, row)| row.iter().copied()).collect();
    let c_k = Matrix::from_elements(field, p.k, p.alpha, &flat).map_err(|_| MsrError::CorruptShares)?;
    let phi_k = enc.phi.submatrix_rows(&nodes)?;
    let g = c_k.mul(&phi_k.transpose())?;
    let lam: Vec<FieldElement> = nodes.iter().map(|&n| enc.lambda[n]).collect();

    let mut pm = vec![vec![field.zero(); p.k]; p.k];
    let mut qm = vec![vec![field.zero(); p.k]; p.k];
    for i in 0..p.k {
        for j in i + 1..p.k {
            let (gij, gji) = (g.get(i, j), g.get(j, i));
            let qij = (gij - gji) * (lam[i] - lam[j]).inv().map_err(|_| MsrError::InvalidEncodingMatrix)?;
            let pij = gij - lam[i] * qij;
            pm[i][j] = pij;
            pm[j][i] = pij;
            qm[i][j] = qij;
            qm[j][i] = qij;
        }
    }

    // Φ_i S for every i in K, solved from the off-diagonal entries of row i.
    let rows_times = |vals: &[Vec<FieldElement>]| -> Result<Matrix, MsrError> {
        let mut out = Vec::with_capacity(p.k * p.alpha);
        for i in 0..p.k {
            let others: Vec<usize> = (0..p.k).filter(|&j| j != i).collect();
            let phi_o = phi_k.submatrix_rows(&others)?;
            let rhs: Vec<FieldElement> = others.iter().map(|&j| vals[i][j]).collect();
            let x = phi_o
                .solve(&Matrix::column_vector(field, &rhs)?)
                .map_err(|_| MsrError::InvalidEncodingMatrix)?;
            out.extend(x.col(0));
        }
        Ok(Matrix::from_elements(field, p.k, p.alpha, &out)?)
    };
    let phi_s1 = rows_times(&pm)?;
    let phi_s2 = rows_times(&qm)?;

    let first: Vec<usize> = (0..p.alpha).collect();
    let phi_a = phi_k.submatrix_rows(&first)?;
    let s1 = phi_a
        .solve(&phi_s1.submatrix_rows(&first)?)
        .map_err(|_| MsrError::InvalidEncodingMatrix)?;
    let s2 = phi_a
        .solve(&phi_s2.submatrix_rows(&first)?)
        .map_err(|_| MsrError::InvalidEncodingMatrix)?;
    let m = MessageMatrix::from_matrix(s1.vstack(&s2)?, &p).map_err(|_| MsrError::CorruptShares)?;

    if enc.psi.submatrix_rows(&nodes)?.mul(&m.m)? != c_k {
        return Err(MsrError::CorruptShares);
    }
    Ok(m)
}

/// Same contract as [`recover`], computed as one generic linear solve in the
/// `B` record symbols.
pub fn recover_oracle(shares: &[Share], enc: &EncodingMatrix) -> Result<MessageMatrix, MsrError> {
    let p = enc.params;
    validate_shares(shares, enc, p.k)?;
    let field = enc.field;
    let half = p.half();
    let eqs = p.k * p.alpha;
    let mut a = vec![field.zero(); eqs * p.b];
    let mut y = Vec::with_capacity(eqs);
    for (s, (node, row)) in shares.iter().enumerate() {
        for c in 0..p.alpha {
            let eq = s * p.alpha + c;
            for h in 0..p.r {
                let (block, mrow) = (h / p.alpha, h % p.alpha);
                let unknown = block * half + upper_index(p.alpha, mrow, c);
                a[eq * p.b + unknown] = a[eq * p.b + unknown] + enc.psi.get(*node, h);
            }
            y.push(row[c]);
        }
    }
    let a = Matrix::from_elements(field, eqs, p.b, &a)?;
    let y = Matrix::column_vector(field, &y)?;
    let x = a.solve(&y).map_err(|_| MsrError::CorruptShares)?;
    MessageMatrix::from_record(&x.col(0), &p)
}

/// The one symbol helper `helper` sends to regenerate node `failed`:
/// `C_helper · Φ_failedᵀ`.
pub fn repair_helper_symbol(
    helper: usize,
    helper_share: &[FieldElement],
    failed: usize,
    enc: &EncodingMatrix,
) -> Result<FieldElement, MsrError> {
    enc.check_node(helper)?;
    enc.check_node(failed)?;
    if helper == failed {
        return Err(MsrError::HelperIsFailed(helper));
    }
    if helper_share.len() != enc.params.alpha {
        return Err(MsrError::ShareLength { expected: enc.params.alpha, got: helper_share.len() });
    }
    let field = enc.field;
    let mut acc = field.zero();
    for (j, &s) in helper_share.iter().enumerate() {
        acc = acc.checked_add(s.checked_mul(enc.phi.get(failed, j)).map_err(MatrixError::from)?)
            .map_err(MatrixError::from)?;
    }
    Ok(acc)
}

/// Rebuilds the share of `failed` from the symbols of exactly `r` helpers.
///
/// The helpers' symbols are `Ψ_helpers · (M Φ_fᵀ)`, so one `r × r` solve
/// yields `S₁Φ_fᵀ` and `S₂Φ_fᵀ`; by symmetry these transpose to `Φ_f S₁`
/// and `Φ_f S₂`, and the share is `Φ_f S₁ + λ_f Φ_f S₂`.
pub fn repair_regenerate(
    failed: usize,
    helper_symbols: &[(usize, FieldElement)],
    enc: &EncodingMatrix,
) -> Result<Vec<FieldElement>, MsrError> {
    let p = enc.params;
    enc.check_node(failed)?;
    for (i, (h, _)) in helper_symbols.iter().enumerate() {
        enc.check_node(*h)?;
        if *h == failed {
            return Err(MsrError::HelperIsFailed(*h));
        }
        if helper_symbols[..i].iter().any(|(o, _)| o == h) {
            return Err(MsrError::RepeatedNode(*h));
        }
    }
    if helper_symbols.len() != p.r {
        return Err(MsrError::WrongShareCount { expected: p.r, got: helper_symbols.len() });
    }
    let field = enc.field;
    let helpers: Vec<usize> = helper_symbols.iter().map(|(h, _)| *h).collect();
    let symbols: Vec<FieldElement> = helper_symbols.iter().map(|(_, s)| *s).collect();
    let psi_rep = enc.psi.submatrix_rows(&helpers)?;
    let x = psi_rep
        .solve(&Matrix::column_vector(field, &symbols)?)
        .map_err(|_| MsrError::InvalidEncodingMatrix)?;
    let lam = enc.lambda[failed];
    Ok((0..p.alpha)
        .map(|j| x.get(j, 0) + lam * x.get(p.alpha + j, 0))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_chacha::ChaCha20Rng;

    fn gf(q: u32) -> Field {
        Field::new(q).unwrap()
    }

    fn example_enc() -> EncodingMatrix {
        EncodingMatrix::build(MsrParams::new(6, 3).unwrap(), gf(13), None).unwrap()
    }

    fn record(f: Field, v: &[u64]) -> Vec<FieldElement> {
        v.iter().map(|&x| f.element(x)).collect()
    }

    fn share_set(c: &CodeMatrix, nodes: &[usize]) -> Vec<Share> {
        nodes.iter().map(|&n| (n, c.share(n))).collect()
    }

    #[test]
    fn params_derivation_and_validation() {
        let p = MsrParams::new(6, 3).unwrap();
        assert_eq!((p.n, p.k, p.r, p.alpha, p.beta, p.b), (6, 3, 4, 2, 1, 6));
        assert_eq!(MsrParams::for_retrieval(5).unwrap().n, 12);
        assert!(MsrParams::new(4, 3).is_err());
        assert!(MsrParams::new(6, 1).is_err());
        assert!(MsrParams::from_tuple(6, 3, 4, 2, 2, 6).is_err());
        assert!(MsrParams::from_tuple(6, 3, 3, 2, 1, 6).is_err());
    }

    #[test]
    fn subsets_enumerate_binomially() {
        let mut count = 0;
        for_each_subset(6, 3, |_| count += 1);
        assert_eq!(count, 20);
        count = 0;
        for_each_subset(12, 8, |s| {
            assert!(s.windows(2).all(|w| w[0] < w[1]));
            count += 1
        });
        assert_eq!(count, 495);
        count = 0;
        for_each_subset(3, 0, |_| count += 1);
        assert_eq!(count, 1);
    }

    #[test]
    fn upper_triangle_positions() {
        assert_eq!(upper_index(2, 0, 0), 0);
        assert_eq!(upper_index(2, 0, 1), 1);
        assert_eq!(upper_index(2, 1, 1), 2);
        let mut seen = vec![];
        for a in 0..4 {
            for b in a..4 {
                seen.push(upper_index(4, a, b));
                assert_eq!(upper_index(4, a, b), upper_index(4, b, a));
            }
        }
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn encoding_matrix_matches_worked_example() {
        let enc = example_enc();
        for i in 0..6u64 {
            let want: Vec<u32> = (0..4).map(|e| ((i + 1).pow(e) % 13) as u32).collect();
            assert_eq!(enc.psi().row_residues(i as usize), &want[..]);
        }
        let lambda: Vec<u32> = enc.lambda().iter().map(|l| l.value()).collect();
        assert_eq!(lambda, [1, 4, 9, 3, 12, 10]);
        assert_eq!(
            EncodingMatrix::build(MsrParams::new(6, 3).unwrap(), gf(7), None),
            Err(MsrError::FieldTooSmall { q: 7, n: 6 })
        );
    }

    #[test]
    fn lambda_collision_is_reported() {
        // 1^2 = 12^2 = 1 in GF(13)
        let f = gf(13);
        let pts = record(f, &[1, 2, 3, 4, 5, 12]);
        assert_eq!(
            EncodingMatrix::build(MsrParams::new(6, 3).unwrap(), f, Some(&pts)),
            Err(MsrError::LambdaCollision(0, 5))
        );
        // x^4 takes only 3 nonzero values in GF(13): k = 5 needs a bigger field
        assert_eq!(
            EncodingMatrix::build(MsrParams::for_retrieval(5).unwrap(), f, None),
            Err(MsrError::FieldTooSmall { q: 13, n: 12 })
        );
        assert_eq!(distinct_powers(13, 2), 6);
        assert_eq!(distinct_powers(257, 3), 256);
        assert_eq!(distinct_powers(257, 4), 64);
    }

    #[test]
    fn message_matrix_layout() {
        let f = gf(13);
        let p = MsrParams::new(6, 3).unwrap();
        let m = MessageMatrix::from_record(&record(f, &[1, 2, 3, 4, 5, 6]), &p).unwrap();
        assert_eq!(m.matrix().residues(), &[1, 2, 2, 3, 4, 5, 5, 6]);
        assert_eq!(m.to_record().unwrap(), record(f, &[1, 2, 3, 4, 5, 6]));
        let z = MessageMatrix::from_record(&record(f, &[0; 6]), &p).unwrap();
        assert!(z.matrix().is_zero());
        assert_eq!(z.to_record().unwrap(), record(f, &[0; 6]));
        assert_eq!(
            MessageMatrix::from_record(&record(f, &[1; 5]), &p),
            Err(MsrError::RecordLength { expected: 6, got: 5 })
        );
        let bad = Matrix::from_values(f, 4, 2, [1, 2, 3, 3, 4, 5, 5, 6]).unwrap();
        assert_eq!(MessageMatrix::from_matrix(bad, &p), Err(MsrError::CorruptMessageMatrix));
    }

    #[test]
    fn encode_worked_example_shares() {
        let enc = example_enc();
        let f = enc.field();
        let m = MessageMatrix::from_record(&record(f, &[1, 2, 3, 4, 5, 6]), enc.params()).unwrap();
        let c = encode(&m, &enc).unwrap();
        assert_eq!(c.share(0), record(f, &[12, 3]));
        // x1+2x2+4x4+8x5 = 61 = 9, x2+2x3+4x5+8x6 = 76 = 11
        assert_eq!(c.share(1), record(f, &[9, 11]));
        let z = MessageMatrix::from_record(&record(f, &[0; 6]), enc.params()).unwrap();
        assert!(encode(&z, &enc).unwrap().matrix().is_zero());
    }

    #[test]
    fn recover_every_subset_of_worked_example() {
        let enc = example_enc();
        let f = enc.field();
        let m = MessageMatrix::from_record(&record(f, &[1, 2, 3, 4, 5, 6]), enc.params()).unwrap();
        let c = encode(&m, &enc).unwrap();
        let mut n = 0;
        for_each_subset(6, 3, |nodes| {
            assert_eq!(recover(&share_set(&c, nodes), &enc).unwrap(), m);
            assert_eq!(recover_oracle(&share_set(&c, nodes), &enc).unwrap(), m);
            n += 1;
        });
        assert_eq!(n, 20);
        let zeros: Vec<Share> = (0..3).map(|i| (i, vec![f.zero(); 2])).collect();
        assert!(recover(&zeros, &enc).unwrap().matrix().is_zero());
        assert!(recover_oracle(&zeros, &enc).unwrap().matrix().is_zero());
    }

    #[test]
    fn recover_error_paths() {
        let enc = example_enc();
        let f = enc.field();
        let m = MessageMatrix::from_record(&record(f, &[1, 2, 3, 4, 5, 6]), enc.params()).unwrap();
        let c = encode(&m, &enc).unwrap();
        assert_eq!(
            recover_oracle(&share_set(&c, &[0, 1]), &enc),
            Err(MsrError::Underdetermined { equations: 4, unknowns: 6 })
        );
        assert!(matches!(recover(&share_set(&c, &[0, 1]), &enc), Err(MsrError::Underdetermined { .. })));
        assert_eq!(recover(&share_set(&c, &[0, 1, 1]), &enc), Err(MsrError::RepeatedNode(1)));
        assert!(matches!(recover(&share_set(&c, &[0, 1, 2, 3]), &enc), Err(MsrError::WrongShareCount { .. })));
        assert!(matches!(recover(&[(9, vec![f.zero(); 2])], &enc), Err(MsrError::NodeOutOfRange { .. })));
    }

    #[test]
    fn helper_symbols_and_regeneration() {
        let enc = example_enc();
        let f = enc.field();
        let m = MessageMatrix::from_record(&record(f, &[1, 2, 3, 4, 5, 6]), enc.params()).unwrap();
        let c = encode(&m, &enc).unwrap();
        // C_2 · Φ_1ᵀ with Φ_1 = (1, 1): 9 + 11 = 20 = 7
        assert_eq!(repair_helper_symbol(1, &c.share(1), 0, &enc).unwrap(), f.element(7));
        assert_eq!(repair_helper_symbol(1, &[f.zero(); 2], 0, &enc).unwrap(), f.zero());
        assert_eq!(repair_helper_symbol(2, &c.share(2), 2, &enc), Err(MsrError::HelperIsFailed(2)));

        let regen = |failed: usize, helpers: &[usize]| {
            let syms: Vec<_> = helpers
                .iter()
                .map(|&h| (h, repair_helper_symbol(h, &c.share(h), failed, &enc).unwrap()))
                .collect();
            repair_regenerate(failed, &syms, &enc)
        };
        assert_eq!(regen(0, &[1, 2, 3, 4]).unwrap(), record(f, &[12, 3]));
        assert_eq!(regen(5, &[0, 1, 2, 3]).unwrap(), c.share(5));
        assert!(matches!(regen(0, &[1, 2, 3]), Err(MsrError::WrongShareCount { .. })));
        let mut syms: Vec<_> = [1, 2, 3]
            .iter()
            .map(|&h| (h, repair_helper_symbol(h, &c.share(h), 0, &enc).unwrap()))
            .collect();
        syms.push((0, f.zero()));
        assert_eq!(repair_regenerate(0, &syms, &enc), Err(MsrError::HelperIsFailed(0)));
        syms[3] = (1, f.zero());
        assert_eq!(repair_regenerate(0, &syms, &enc), Err(MsrError::RepeatedNode(1)));
    }

    #[test]
    fn exhaustive_repair_for_k3() {
        let enc = example_enc();
        let f = enc.field();
        let m = MessageMatrix::from_record(&record(f, &[7, 0, 12, 3, 9, 1]), enc.params()).unwrap();
        let c = encode(&m, &enc).unwrap();
        for failed in 0..6 {
            let others: Vec<usize> = (0..6).filter(|&i| i != failed).collect();
            for_each_subset(5, 4, |pick| {
                let syms: Vec<_> = pick
                    .iter()
                    .map(|&i| {
                        let h = others[i];
                        (h, repair_helper_symbol(h, &c.share(h), failed, &enc).unwrap())
                    })
                    .collect();
                assert_eq!(repair_regenerate(failed, &syms, &enc).unwrap(), c.share(failed));
            });
        }
    }

    #[test]
    fn larger_codes_build_over_gf257() {
        for k in 3..=6 {
            let p = MsrParams::for_retrieval(k).unwrap();
            let enc = EncodingMatrix::build(p, gf(257), None).unwrap();
            assert_eq!(enc.psi().rank(), p.r);
        }
    }

    fn arb_record(b: usize) -> impl Strategy<Value = Vec<u64>> {
        proptest::collection::vec(0u64..257, b)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn record_roundtrip(v in arb_record(20)) {
            let p = MsrParams::for_retrieval(5).unwrap();
            let rec = record(gf(257), &v);
            let m = MessageMatrix::from_record(&rec, &p).unwrap();
            prop_assert!(m.s1().is_symmetric() && m.s2().is_symmetric());
            prop_assert_eq!(m.to_record().unwrap(), rec);
        }

        #[test]
        fn encode_is_linear(a in arb_record(12), b in arb_record(12)) {
            let p = MsrParams::for_retrieval(4).unwrap();
            let enc = EncodingMatrix::build(p, gf(257), None).unwrap();
            let f = enc.field();
            let sum: Vec<u64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            let ma = MessageMatrix::from_record(&record(f, &a), &p).unwrap();
            let mb = MessageMatrix::from_record(&record(f, &b), &p).unwrap();
            let ms = MessageMatrix::from_record(&record(f, &sum), &p).unwrap();
            let lhs = encode(&ms, &enc).unwrap();
            let rhs = encode(&ma, &enc).unwrap().matrix().add(encode(&mb, &enc).unwrap().matrix()).unwrap();
            prop_assert_eq!(lhs.matrix(), &rhs);
        }

        #[test]
        fn structured_recovery_matches_oracle(seed in any::<u64>(), k in 3usize..=5) {
            let p = MsrParams::for_retrieval(k).unwrap();
            let enc = EncodingMatrix::build(p, gf(257), None).unwrap();
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let rec = enc.field().sample_uniform(&mut rng, p.b);
            let m = MessageMatrix::from_record(&rec, &p).unwrap();
            let c = encode(&m, &enc).unwrap();
            let mut nodes = random_subset(&mut rng, p.n, p.k);
            nodes.sort_unstable();
            let shares = share_set(&c, &nodes);
            let structured = recover(&shares, &enc).unwrap();
            prop_assert_eq!(&structured, &recover_oracle(&shares, &enc).unwrap());
            prop_assert_eq!(structured, m);
        }
    }
}
