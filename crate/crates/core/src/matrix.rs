//! Dense matrices over GF(q).
//!
//! Matrices are values: every operation returns a fresh matrix. Entries are
//! stored row-major as raw residues of the matrix's [`Field`].

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::field::{Field, FieldElement, FieldError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MatrixError {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("singular matrix (rank {rank} of {size})")]
    Singular { rank: usize, size: usize },
    #[error("degenerate points: evaluation points must be distinct and nonzero")]
    DegeneratePoints,
    #[error("row index {index} out of range for {len} rows")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("row index {0} selected twice")]
    DuplicateIndex(usize),
    #[error("expected {expected} entries, got {got}")]
    LengthMismatch { expected: usize, got: usize },
}

#[derive(Clone, PartialEq, Eq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<u32>,
    field: Field,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix<{:?}>{}x{} ", self.field, self.rows, self.cols)?;
        f.debug_list().entries(self.data.chunks(self.cols.max(1)).take(self.rows)).finish()
    }
}

/// Renders one bracketed row per line, e.g. `[1, 2, 4, 8]`.
impl fmt::Display for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.rows {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "[")?;
            for (j, v) in self.row_residues(i).iter().enumerate() {
                if j > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{v}")?;
            }
            write!(f, "]")?;
        }
        Ok(())
    }
}

impl Matrix {
    pub fn zeros(field: Field, rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0; rows * cols], field }
    }

    pub fn identity(field: Field, n: usize) -> Self {
        let mut m = Self::zeros(field, n, n);
        for i in 0..n {
            m.data[i * n + i] = 1;
        }
        m
    }

    /// Builds a matrix from integers, reducing each modulo q.
    pub fn from_values<I>(field: Field, rows: usize, cols: usize, values: I) -> Result<Self, MatrixError>
    where
        I: IntoIterator<Item = u64>,
    {
        let data: Vec<u32> = values.into_iter().map(|v| field.element(v).value()).collect();
        if data.len() != rows * cols {
            return Err(MatrixError::LengthMismatch { expected: rows * cols, got: data.len() });
        }
        Ok(Matrix { rows, cols, data, field })
    }

    pub fn from_elements(
        field: Field,
        rows: usize,
        cols: usize,
        entries: &[FieldElement],
    ) -> Result<Self, MatrixError> {
        if entries.len() != rows * cols {
            return Err(MatrixError::LengthMismatch { expected: rows * cols, got: entries.len() });
        }
        let data = entries.iter().map(|&e| field.residue(e)).collect::<Result<Vec<_>, _>>()?;
        Ok(Matrix { rows, cols, data, field })
    }

    pub fn from_fn<F>(field: Field, rows: usize, cols: usize, mut f: F) -> Self
    where
        F: FnMut(usize, usize) -> FieldElement,
    {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                let e = f(i, j);
                data.push(field.residue(e).expect("entry from a different field"));
            }
        }
        Matrix { rows, cols, data, field }
    }

    /// A single-row matrix.
    pub fn row_vector(field: Field, entries: &[FieldElement]) -> Result<Self, MatrixError> {
        Self::from_elements(field, 1, entries.len(), entries)
    }

    /// A single-column matrix.
    pub fn column_vector(field: Field, entries: &[FieldElement]) -> Result<Self, MatrixError> {
        Self::from_elements(field, entries.len(), 1, entries)
    }

    pub const fn rows(&self) -> usize {
        self.rows
    }

    pub const fn cols(&self) -> usize {
        self.cols
    }

    pub const fn field(&self) -> Field {
        self.field
    }

    pub fn get(&self, row: usize, col: usize) -> FieldElement {
        assert!(row < self.rows && col < self.cols, "index ({row}, {col}) out of range");
        self.field.wrap(self.data[row * self.cols + col])
    }

    /// Copy of this matrix with one entry replaced.
    pub fn with_entry(&self, row: usize, col: usize, value: FieldElement) -> Result<Self, MatrixError> {
        if row >= self.rows {
            return Err(MatrixError::IndexOutOfRange { index: row, len: self.rows });
        }
        if col >= self.cols {
            return Err(MatrixError::IndexOutOfRange { index: col, len: self.cols });
        }
        let mut out = self.clone();
        out.data[row * self.cols + col] = self.field.residue(value)?;
        Ok(out)
    }

    pub fn row(&self, row: usize) -> Vec<FieldElement> {
        self.row_residues(row).iter().map(|&v| self.field.wrap(v)).collect()
    }

    pub fn col(&self, col: usize) -> Vec<FieldElement> {
        (0..self.rows).map(|i| self.get(i, col)).collect()
    }

    /// Raw residues of one row.
    pub fn row_residues(&self, row: usize) -> &[u32] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    /// All residues, row-major.
    pub fn residues(&self) -> &[u32] {
        &self.data
    }

    pub fn elements(&self) -> Vec<FieldElement> {
        self.data.iter().map(|&v| self.field.wrap(v)).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..i).all(|j| self.data[i * self.cols + j] == self.data[j * self.cols + i]))
    }

    fn same_field(&self, other: &Matrix) -> Result<(), MatrixError> {
        if self.field != other.field {
            return Err(FieldError::IncompatibleFields(self.field.modulus(), other.field.modulus()).into());
        }
        Ok(())
    }

    fn same_shape(&self, other: &Matrix, op: &'static str) -> Result<(), MatrixError> {
        self.same_field(other)?;
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return Err(MatrixError::DimensionMismatch {
                op,
                left: (self.rows, self.cols),
                right: (other.rows, other.cols),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix, MatrixError> {
        self.same_shape(other, "add")?;
        let f = self.field;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f.add_raw(a, b)).collect();
        Ok(Matrix { data, ..*self })
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix, MatrixError> {
        self.same_shape(other, "sub")?;
        let f = self.field;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f.sub_raw(a, b)).collect();
        Ok(Matrix { data, ..*self })
    }

    pub fn scale(&self, s: FieldElement) -> Result<Matrix, MatrixError> {
        let s = self.field.residue(s)?;
        let f = self.field;
        let data = self.data.iter().map(|&a| f.mul_raw(a, s)).collect();
        Ok(Matrix { data, ..*self })
    }

    /// Exact product `self · other`.
    pub fn mul(&self, other: &Matrix) -> Result<Matrix, MatrixError> {
        self.same_field(other)?;
        if self.cols != other.rows {
            return Err(MatrixError::DimensionMismatch {
                op: "mul",
                left: (self.rows, self.cols),
                right: (other.rows, other.cols),
            });
        }
        let f = self.field;
        let q = u64::from(f.modulus());
        let mut data = vec![0u32; self.rows * other.cols];
        for i in 0..self.rows {
            let lhs = self.row_residues(i);
            for j in 0..other.cols {
                // reduce every step: q may be close to 2^32
                let mut acc = 0u64;
                for (t, &a) in lhs.iter().enumerate() {
                    acc = (acc + u64::from(a) * u64::from(other.data[t * other.cols + j])) % q;
                }
                data[i * other.cols + j] = acc as u32;
            }
        }
        Ok(Matrix { rows: self.rows, cols: other.cols, data, field: f })
    }

    pub fn transpose(&self) -> Matrix {
        let mut data = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                data.push(self.data[i * self.cols + j]);
            }
        }
        Matrix { rows: self.cols, cols: self.rows, data, field: self.field }
    }

    /// The selected rows, in the order given.
    pub fn submatrix_rows(&self, rows: &[usize]) -> Result<Matrix, MatrixError> {
        check_indices(rows, self.rows)?;
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            data.extend_from_slice(self.row_residues(r));
        }
        Ok(Matrix { rows: rows.len(), cols: self.cols, data, field: self.field })
    }

    /// The selected columns, in the order given.
    pub fn submatrix_cols(&self, cols: &[usize]) -> Result<Matrix, MatrixError> {
        check_indices(cols, self.cols)?;
        let mut data = Vec::with_capacity(self.rows * cols.len());
        for i in 0..self.rows {
            data.extend(cols.iter().map(|&c| self.data[i * self.cols + c]));
        }
        Ok(Matrix { rows: self.rows, cols: cols.len(), data, field: self.field })
    }

    /// `[self | other]`.
    pub fn hstack(&self, other: &Matrix) -> Result<Matrix, MatrixError> {
        self.same_field(other)?;
        if self.rows != other.rows {
            return Err(MatrixError::DimensionMismatch {
                op: "hstack",
                left: (self.rows, self.cols),
                right: (other.rows, other.cols),
            });
        }
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        for i in 0..self.rows {
            data.extend_from_slice(self.row_residues(i));
            data.extend_from_slice(other.row_residues(i));
        }
        Ok(Matrix { rows: self.rows, cols: self.cols + other.cols, data, field: self.field })
    }

    /// `[self; other]`.
    pub fn vstack(&self, other: &Matrix) -> Result<Matrix, MatrixError> {
        self.same_field(other)?;
        if self.cols != other.cols {
            return Err(MatrixError::DimensionMismatch {
                op: "vstack",
                left: (self.rows, self.cols),
                right: (other.rows, other.cols),
            });
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Matrix { rows: self.rows + other.rows, cols: self.cols, data, field: self.field })
    }

    /// `diag(d) · self`: scales row i by `d[i]`.
    pub fn scale_rows(&self, d: &[FieldElement]) -> Result<Matrix, MatrixError> {
        if d.len() != self.rows {
            return Err(MatrixError::LengthMismatch { expected: self.rows, got: d.len() });
        }
        let f = self.field;
        let mut out = self.clone();
        for (i, &s) in d.iter().enumerate() {
            let s = f.residue(s)?;
            for v in &mut out.data[i * self.cols..(i + 1) * self.cols] {
                *v = f.mul_raw(*v, s);
            }
        }
        Ok(out)
    }

    /// Row-reduces `self` in place to reduced row echelon form and returns
    /// the pivot columns. Pivots are the first nonzero entry in each column.
    fn reduce(&mut self, pivot_limit: usize) -> Vec<usize> {
        let f = self.field;
        let cols = self.cols;
        let mut pivots = Vec::new();
        let mut row = 0;
        for col in 0..pivot_limit.min(cols) {
            if row == self.rows {
                break;
            }
            let Some(p) = (row..self.rows).find(|&i| self.data[i * cols + col] != 0) else {
                continue;
            };
            if p != row {
                for j in 0..cols {
                    self.data.swap(p * cols + j, row * cols + j);
                }
            }
            let inv = f.inv_raw(self.data[row * cols + col]).expect("pivot is nonzero");
            for j in 0..cols {
                self.data[row * cols + j] = f.mul_raw(self.data[row * cols + j], inv);
            }
            for i in 0..self.rows {
                if i == row {
                    continue;
                }
                let factor = self.data[i * cols + col];
                if factor == 0 {
                    continue;
                }
                for j in 0..cols {
                    let t = f.mul_raw(factor, self.data[row * cols + j]);
                    self.data[i * cols + j] = f.sub_raw(self.data[i * cols + j], t);
                }
            }
            pivots.push(col);
            row += 1;
        }
        pivots
    }

    pub fn rank(&self) -> usize {
        let mut m = self.clone();
        m.reduce(self.cols).len()
    }

    /// Gauss–Jordan inverse. Fails with the rank found when singular.
    pub fn inverse(&self) -> Result<Matrix, MatrixError> {
        if self.rows != self.cols {
            return Err(MatrixError::DimensionMismatch {
                op: "inverse",
                left: (self.rows, self.cols),
                right: (self.cols, self.rows),
            });
        }
        let n = self.rows;
        let mut aug = self.hstack(&Matrix::identity(self.field, n))?;
        let pivots = aug.reduce(n);
        if pivots.len() < n {
            return Err(MatrixError::Singular { rank: pivots.len(), size: n });
        }
        aug.submatrix_cols(&(n..2 * n).collect::<Vec<_>>())
    }

    /// Solves `self · x = y` for square invertible `self`.
    pub fn solve(&self, y: &Matrix) -> Result<Matrix, MatrixError> {
        self.same_field(y)?;
        if self.rows != self.cols || y.rows != self.rows {
            return Err(MatrixError::DimensionMismatch {
                op: "solve",
                left: (self.rows, self.cols),
                right: (y.rows, y.cols),
            });
        }
        let n = self.rows;
        let mut aug = self.hstack(y)?;
        let pivots = aug.reduce(n);
        if pivots.len() < n {
            return Err(MatrixError::Singular { rank: pivots.len(), size: n });
        }
        aug.submatrix_cols(&(n..n + y.cols).collect::<Vec<_>>())
    }

    /// Row i is `(1, xᵢ, xᵢ², …, xᵢ^(cols−1))`. Points must be distinct and nonzero.
    pub fn vandermonde(field: Field, points: &[FieldElement], cols: usize) -> Result<Matrix, MatrixError> {
        let raw = points.iter().map(|&p| field.residue(p)).collect::<Result<Vec<_>, _>>()?;
        for (i, &p) in raw.iter().enumerate() {
            if p == 0 || raw[..i].contains(&p) {
                return Err(MatrixError::DegeneratePoints);
            }
        }
        let mut data = Vec::with_capacity(raw.len() * cols);
        for &p in &raw {
            let mut acc = 1u32;
            for _ in 0..cols {
                data.push(acc);
                acc = field.mul_raw(acc, p);
            }
        }
        Ok(Matrix { rows: raw.len(), cols, data, field })
    }
}

fn check_indices(indices: &[usize], len: usize) -> Result<(), MatrixError> {
    for (i, &idx) in indices.iter().enumerate() {
        if idx >= len {
            return Err(MatrixError::IndexOutOfRange { index: idx, len });
        }
        if indices[..i].contains(&idx) {
            return Err(MatrixError::DuplicateIndex(idx));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gf13() -> Field {
        Field::new(13).unwrap()
    }

    fn mat(rows: usize, cols: usize, v: &[u64]) -> Matrix {
        Matrix::from_values(gf13(), rows, cols, v.iter().copied()).unwrap()
    }

    fn psi13() -> Matrix {
        let pts: Vec<_> = (1..=6).map(|i| gf13().element(i)).collect();
        Matrix::vandermonde(gf13(), &pts, 4).unwrap()
    }

    #[test]
    fn vandermonde_matches_worked_example() {
        let psi = psi13();
        assert_eq!(psi.row_residues(2), &[1, 3, 9, 1]);
        assert_eq!(psi.row_residues(3), &[1, 4, 3, 12]);
        assert_eq!(psi.row_residues(5), &[1, 6, 10, 8]);
        let single = Matrix::vandermonde(gf13(), &[gf13().element(7)], 1).unwrap();
        assert_eq!(single, mat(1, 1, &[1]));
    }

    #[test]
    fn vandermonde_rejects_degenerate_points() {
        let f = gf13();
        let dup = [f.element(2), f.element(5), f.element(2)];
        assert_eq!(Matrix::vandermonde(f, &dup, 3), Err(MatrixError::DegeneratePoints));
        let zero = [f.element(0), f.element(1)];
        assert_eq!(Matrix::vandermonde(f, &zero, 2), Err(MatrixError::DegeneratePoints));
    }

    #[test]
    fn product_of_psi_and_message_matrix() {
        let m = mat(4, 2, &[1, 2, 2, 3, 4, 5, 5, 6]);
        let c = psi13().mul(&m).unwrap();
        // x1+x2+x4+x5 = 12, x2+x3+x5+x6 = 16 = 3
        assert_eq!(c.row_residues(0), &[12, 3]);
        assert!(Matrix::zeros(gf13(), 3, 6).mul(&psi13()).unwrap().is_zero());
        assert_eq!(Matrix::identity(gf13(), 6).mul(&psi13()).unwrap(), psi13());
    }

    #[test]
    fn mul_rejects_bad_shapes_and_fields() {
        let a = mat(2, 3, &[0; 6]);
        assert!(matches!(a.mul(&a), Err(MatrixError::DimensionMismatch { .. })));
        let other = Matrix::zeros(Field::new(17).unwrap(), 3, 3);
        assert!(matches!(a.mul(&other), Err(MatrixError::Field(_))));
    }

    #[test]
    fn inverse_of_interference_block() {
        let a = mat(4, 4, &[1, 2, 4, 8, 1, 4, 3, 12, 1, 5, 12, 8, 1, 6, 10, 8]);
        let inv = a.inverse().unwrap();
        let id = Matrix::identity(gf13(), 4);
        assert_eq!(inv.mul(&a).unwrap(), id);
        assert_eq!(a.mul(&inv).unwrap(), id);
        assert_eq!(psi13().submatrix_rows(&[1, 3, 4, 5]).unwrap(), a);
    }

    #[test]
    fn inverse_identity_and_singular() {
        let id = Matrix::identity(gf13(), 5);
        assert_eq!(id.inverse().unwrap(), id);
        let a = mat(3, 3, &[1, 2, 3, 4, 5, 6, 1, 2, 3]);
        assert_eq!(a.inverse(), Err(MatrixError::Singular { rank: 2, size: 3 }));
    }

    #[test]
    fn solve_cases() {
        let y = mat(3, 2, &[1, 2, 3, 4, 5, 6]);
        assert_eq!(Matrix::identity(gf13(), 3).solve(&y).unwrap(), y);
        let a = mat(3, 3, &[2, 1, 0, 1, 3, 1, 0, 1, 4]);
        assert!(a.solve(&Matrix::zeros(gf13(), 3, 1)).unwrap().is_zero());
        let x = a.solve(&y).unwrap();
        assert_eq!(a.mul(&x).unwrap(), y);
        let sing = mat(2, 2, &[1, 2, 2, 4]);
        assert!(matches!(sing.solve(&mat(2, 1, &[1, 1])), Err(MatrixError::Singular { .. })));
    }

    #[test]
    fn rank_cases() {
        assert_eq!(Matrix::identity(gf13(), 7).rank(), 7);
        assert_eq!(psi13().rank(), 4);
        assert_eq!(Matrix::zeros(gf13(), 4, 5).rank(), 0);
    }

    #[test]
    fn submatrix_selection() {
        let psi = psi13();
        assert_eq!(psi.submatrix_rows(&[0, 1, 2, 3, 4, 5]).unwrap(), psi);
        let empty = psi.submatrix_rows(&[]).unwrap();
        assert_eq!((empty.rows(), empty.cols()), (0, 4));
        assert_eq!(psi.submatrix_rows(&[6]), Err(MatrixError::IndexOutOfRange { index: 6, len: 6 }));
        assert_eq!(psi.submatrix_rows(&[1, 1]), Err(MatrixError::DuplicateIndex(1)));
    }

    #[test]
    fn vandermonde_rank_is_min_of_dims_over_gf13() {
        let f = gf13();
        // every subset of nonzero points, up to size 6 to keep it quick
        for mask in 1u32..(1 << 12) {
            if mask.count_ones() > 6 {
                continue;
            }
            let pts: Vec<_> = (0..12).filter(|b| mask >> b & 1 == 1).map(|b| f.element(b as u64 + 1)).collect();
            for cols in 1..=6 {
                let v = Matrix::vandermonde(f, &pts, cols).unwrap();
                assert_eq!(v.rank(), pts.len().min(cols));
            }
        }
    }

    fn arb_matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
        proptest::collection::vec(0u64..257, rows * cols)
            .prop_map(move |v| Matrix::from_values(Field::new(257).unwrap(), rows, cols, v).unwrap())
    }

    proptest! {
        #[test]
        fn mul_is_associative(a in arb_matrix(3, 4), b in arb_matrix(4, 2), c in arb_matrix(2, 5)) {
            let left = a.mul(&b).unwrap().mul(&c).unwrap();
            let right = a.mul(&b.mul(&c).unwrap()).unwrap();
            prop_assert_eq!(left, right);
        }

        #[test]
        fn inverse_when_reported_is_exact(a in arb_matrix(5, 5)) {
            match a.inverse() {
                Ok(inv) => {
                    let id = Matrix::identity(a.field(), 5);
                    prop_assert_eq!(inv.mul(&a).unwrap(), id.clone());
                    prop_assert_eq!(a.mul(&inv).unwrap(), id);
                }
                Err(MatrixError::Singular { rank, .. }) => prop_assert_eq!(rank, a.rank()),
                Err(e) => prop_assert!(false, "unexpected {e}"),
            }
        }

        #[test]
        fn solve_satisfies_system(a in arb_matrix(4, 4), y in arb_matrix(4, 3)) {
            if let Ok(x) = a.solve(&y) {
                prop_assert_eq!(a.mul(&x).unwrap(), y);
            } else {
                prop_assert!(a.rank() < 4);
            }
        }
    }
}
