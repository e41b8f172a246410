//! Arithmetic in the prime field GF(q).
//!
//! Elements carry the modulus they belong to, so mixing elements of two
//! different fields is caught instead of silently producing garbage. Bulk
//! code (the matrix kernel) works on raw `u32` residues through the
//! `*_raw` helpers on [`Field`] and only wraps values at the API boundary.

use alloc::vec::Vec;
use core::fmt;
use core::ops::{Add, Mul, Neg, Sub};

use rand_core::RngCore;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FieldError {
    #[error("modulus {0} is not a prime >= 3")]
    NotPrime(u32),
    #[error("incompatible fields: GF({0}) vs GF({1})")]
    IncompatibleFields(u32, u32),
    #[error("zero has no inverse")]
    ZeroInverse,
}

/// Binary operations accepted by [`Field::arith`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
}

/// The prime field GF(q), q ≥ 3.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Field {
    modulus: u32,
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GF({})", self.modulus)
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GF({})", self.modulus)
    }
}

fn is_prime(q: u32) -> bool {
    if q < 2 {
        return false;
    }
    if q.is_multiple_of(2) {
        return q == 2;
    }
    let q = u64::from(q);
    let mut d = 3u64;
    while d * d <= q {
        if q % d == 0 {
            return false;
        }
        d += 2;
    }
    true
}

impl Field {
    /// Builds GF(q). Fails unless `q` is a prime ≥ 3.
    pub fn new(modulus: u32) -> Result<Self, FieldError> {
        if modulus < 3 || !is_prime(modulus) {
            return Err(FieldError::NotPrime(modulus));
        }
        Ok(Field { modulus })
    }

    pub const fn modulus(&self) -> u32 {
        self.modulus
    }

    /// The element `value mod q`.
    pub fn element(&self, value: u64) -> FieldElement {
        FieldElement {
            value: (value % u64::from(self.modulus)) as u32,
            modulus: self.modulus,
        }
    }

    /// Reduces a signed integer, so `field.signed(-1)` is `q − 1`.
    pub fn signed(&self, value: i64) -> FieldElement {
        let q = i64::from(self.modulus);
        self.element(value.rem_euclid(q) as u64)
    }

    pub fn zero(&self) -> FieldElement {
        FieldElement { value: 0, modulus: self.modulus }
    }

    pub fn one(&self) -> FieldElement {
        FieldElement { value: 1, modulus: self.modulus }
    }

    /// Every element of the field in increasing order.
    pub fn elements(&self) -> impl Iterator<Item = FieldElement> + '_ {
        (0..self.modulus).map(move |v| FieldElement { value: v, modulus: self.modulus })
    }

    pub(crate) fn wrap(&self, raw: u32) -> FieldElement {
        debug_assert!(raw < self.modulus);
        FieldElement { value: raw, modulus: self.modulus }
    }

    /// Checks that `e` lives in this field and returns its residue.
    pub(crate) fn residue(&self, e: FieldElement) -> Result<u32, FieldError> {
        if e.modulus != self.modulus {
            return Err(FieldError::IncompatibleFields(self.modulus, e.modulus));
        }
        Ok(e.value)
    }

    #[inline]
    pub(crate) fn add_raw(&self, a: u32, b: u32) -> u32 {
        let s = u64::from(a) + u64::from(b);
        let q = u64::from(self.modulus);
        (if s >= q { s - q } else { s }) as u32
    }

    #[inline]
    pub(crate) fn sub_raw(&self, a: u32, b: u32) -> u32 {
        if a >= b {
            a - b
        } else {
            // a + q - b < q fits in u32 because q < 2^32
            (u64::from(a) + u64::from(self.modulus) - u64::from(b)) as u32
        }
    }

    #[inline]
    pub(crate) fn mul_raw(&self, a: u32, b: u32) -> u32 {
        (u64::from(a) * u64::from(b) % u64::from(self.modulus)) as u32
    }

    #[inline]
    pub(crate) fn neg_raw(&self, a: u32) -> u32 {
        if a == 0 {
            0
        } else {
            self.modulus - a
        }
    }

    pub(crate) fn pow_raw(&self, base: u32, mut exp: u64) -> u32 {
        let mut acc = 1u32;
        let mut b = base;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul_raw(acc, b);
            }
            b = self.mul_raw(b, b);
            exp >>= 1;
        }
        acc
    }

    /// Inverse via Fermat's little theorem.
    pub(crate) fn inv_raw(&self, a: u32) -> Option<u32> {
        if a == 0 {
            None
        } else {
            Some(self.pow_raw(a, u64::from(self.modulus) - 2))
        }
    }

    /// `a op b`, rejecting operands from other fields.
    pub fn arith(
        &self,
        op: ArithOp,
        a: FieldElement,
        b: FieldElement,
    ) -> Result<FieldElement, FieldError> {
        let (x, y) = (self.residue(a)?, self.residue(b)?);
        let v = match op {
            ArithOp::Add => self.add_raw(x, y),
            ArithOp::Sub => self.sub_raw(x, y),
            ArithOp::Mul => self.mul_raw(x, y),
        };
        Ok(self.wrap(v))
    }

    /// One uniform residue by rejection sampling on 32-bit words.
    pub(crate) fn sample_raw<R: RngCore + ?Sized>(&self, rng: &mut R) -> u32 {
        let q = u64::from(self.modulus);
        // largest multiple of q not exceeding 2^32
        let limit = (1u64 << 32) / q * q;
        loop {
            let x = u64::from(rng.next_u32());
            if x < limit {
                return (x % q) as u32;
            }
        }
    }

    /// `count` independent uniform elements. For a seeded generator the
    /// output is a pure function of (seed, count, q).
    pub fn sample_uniform<R: RngCore + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<FieldElement> {
        (0..count).map(|_| self.wrap(self.sample_raw(rng))).collect()
    }
}

/// A canonical residue in `[0, q)` tagged with its modulus.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct FieldElement {
    value: u32,
    modulus: u32,
}

impl fmt::Debug for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

impl FieldElement {
    pub const fn value(&self) -> u32 {
        self.value
    }

    pub fn field(&self) -> Field {
        Field { modulus: self.modulus }
    }

    pub const fn is_zero(&self) -> bool {
        self.value == 0
    }

    pub fn checked_add(self, rhs: Self) -> Result<Self, FieldError> {
        self.field().arith(ArithOp::Add, self, rhs)
    }

    pub fn checked_sub(self, rhs: Self) -> Result<Self, FieldError> {
        self.field().arith(ArithOp::Sub, self, rhs)
    }

    pub fn checked_mul(self, rhs: Self) -> Result<Self, FieldError> {
        self.field().arith(ArithOp::Mul, self, rhs)
    }

    pub fn inv(self) -> Result<Self, FieldError> {
        let field = self.field();
        field
            .inv_raw(self.value)
            .map(|v| field.wrap(v))
            .ok_or(FieldError::ZeroInverse)
    }

    /// `self^exp`, with `0^0 = 1`.
    pub fn pow(self, exp: u64) -> Self {
        let field = self.field();
        field.wrap(field.pow_raw(self.value, exp))
    }
}

// The operator impls panic on mixed fields; use the `checked_*` methods when
// the operands are not known to share a field.
impl Add for FieldElement {
    type Output = FieldElement;
    fn add(self, rhs: Self) -> Self {
        self.checked_add(rhs).expect("incompatible fields")
    }
}

impl Sub for FieldElement {
    type Output = FieldElement;
    fn sub(self, rhs: Self) -> Self {
        self.checked_sub(rhs).expect("incompatible fields")
    }
}

impl Mul for FieldElement {
    type Output = FieldElement;
    fn mul(self, rhs: Self) -> Self {
        self.checked_mul(rhs).expect("incompatible fields")
    }
}

impl Neg for FieldElement {
    type Output = FieldElement;
    fn neg(self) -> Self {
        let field = self.field();
        field.wrap(field.neg_raw(self.value))
    }
}
