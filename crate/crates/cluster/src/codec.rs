//! Payload bytes ↔ field symbols, and fixed-width symbol serialization.
//!
//! Each byte becomes `digits_per_byte(q)` base-q digits, least significant
//! first. For q ≥ 256 that is one symbol per byte.

use pmsr_core::{Field, FieldElement};

use crate::error::{ClusterError, Result};

/// Smallest `d` with `q^d ≥ 256`.
pub fn digits_per_byte(q: u32) -> usize {
    let mut d = 1;
    let mut span = u64::from(q);
    while span < 256 {
        span *= u64::from(q);
        d += 1;
    }
    d
}

pub fn bytes_to_symbols(field: Field, bytes: &[u8]) -> Vec<FieldElement> {
    let q = field.modulus();
    let d = digits_per_byte(q);
    let mut out = Vec::with_capacity(bytes.len() * d);
    for &b in bytes {
        let mut v = u32::from(b);
        for _ in 0..d {
            out.push(field.element(u64::from(v % q)));
            v /= q;
        }
    }
    out
}

/// Inverse of [`bytes_to_symbols`] for the first `len` bytes.
pub fn symbols_to_bytes(field: Field, symbols: &[FieldElement], len: usize) -> Result<Vec<u8>> {
    let q = u64::from(field.modulus());
    let d = digits_per_byte(field.modulus());
    if symbols.len() < len * d {
        return Err(ClusterError::Store(format!("{} symbols cannot hold {len} bytes", symbols.len())));
    }
    symbols
        .chunks(d)
        .take(len)
        .map(|digits| {
            let v = digits.iter().rev().fold(0u64, |acc, s| acc * q + u64::from(s.value()));
            u8::try_from(v).map_err(|_| ClusterError::Store(format!("symbol group {v} is not a byte")))
        })
        .collect()
}

/// Symbols needed to carry `len` payload bytes.
pub fn symbol_count(q: u32, len: usize) -> usize {
    len * digits_per_byte(q)
}

pub fn write_symbol(out: &mut Vec<u8>, value: u32, width: usize) {
    out.extend_from_slice(&value.to_le_bytes()[..width]);
}

pub fn read_symbol(field: Field, bytes: &[u8]) -> Result<FieldElement> {
    let mut buf = [0u8; 4];
    buf[..bytes.len()].copy_from_slice(bytes);
    let v = u32::from_le_bytes(buf);
    if v >= field.modulus() {
        return Err(ClusterError::BadFrame(format!("symbol {v} outside GF({})", field.modulus())));
    }
    Ok(field.element(u64::from(v)))
}
