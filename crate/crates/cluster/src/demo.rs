//! `pmsr demo example1`: the three-record system over GF(13) with the
//! (6, 3, 4, 2, 1, 6) code, printed step by step and checked against the
//! published matrices.

use std::fmt::Write as _;

use anyhow::{ensure, Result};
use num_rational::Ratio;
use pmsr_core::msr::encode;
use pmsr_core::pir::{
    build_patterns, decode_record, gen_queries, metrics_report, node_answer, node_row, retrieved_position,
};
use pmsr_core::{
    Answer, EncodingMatrix, Field, FieldElement, Matrix, MessageMatrix, MsrParams, PirConfig, QueryMask,
};
use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;

const Q: u32 = 13;
const RECORDS: usize = 3;

/// Ψ as printed, one row per node.
const PSI: [[u32; 4]; 6] = [
    [1, 1, 1, 1],
    [1, 2, 4, 8],
    [1, 3, 9, 1],
    [1, 4, 3, 12],
    [1, 5, 12, 8],
    [1, 6, 10, 8],
];

const V: [[u32; 6]; 3] = [[1, 0, 0, 1, 0, 0], [0, 0, 1, 0, 0, 1], [0, 1, 0, 0, 1, 0]];

const VE1: [[u32; 18]; 3] = [
    [1, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0],
    [0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0],
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemoOutcome {
    pub transcript: String,
    pub downloaded: usize,
    pub cpop: Ratio<i64>,
}

fn show(m: &Matrix, indent: &str) -> String {
    m.to_string().lines().map(|l| format!("{indent}{l}\n")).collect()
}

/// `x11 + 2x12 + 4x14 + 8x15` style linear form.
fn linear_form(coeffs: &[u32], var: impl Fn(usize) -> String) -> String {
    let terms: Vec<String> = coeffs
        .iter()
        .enumerate()
        .filter(|(_, &c)| c != 0)
        .map(|(l, &c)| if c == 1 { var(l) } else { format!("{c}{}", var(l)) })
        .collect();
    if terms.is_empty() {
        "0".into()
    } else {
        terms.join(" + ")
    }
}

/// Coefficients of node `i`'s symbol `j` in terms of one record's `B`
/// symbols, from the encodings of the unit records.
fn share_coefficients(enc: &EncodingMatrix, field: Field) -> Result<Vec<Vec<Vec<u32>>>> {
    let p = *enc.params();
    let mut coeffs = vec![vec![vec![0; p.b]; p.alpha]; p.n];
    for l in 0..p.b {
        let unit: Vec<FieldElement> = (0..p.b).map(|x| if x == l { field.one() } else { field.zero() }).collect();
        let code = encode(&MessageMatrix::from_record(&unit, &p)?, enc)?;
        for (i, node) in coeffs.iter_mut().enumerate() {
            for (j, sym) in code.share(i).iter().enumerate() {
                node[j][l] = sym.value();
            }
        }
    }
    Ok(coeffs)
}

/// Runs the demo; the transcript is returned rather than printed so tests
/// can inspect it. Any deviation from the published values is an error
/// naming the first mismatching quantity.
pub fn example1(seed: u64) -> Result<DemoOutcome> {
    let field = Field::new(Q)?;
    let params = MsrParams::for_retrieval(3)?;
    let cfg = PirConfig::new(params, RECORDS)?;
    let enc = EncodingMatrix::build(params, field, None)?;
    let patterns = build_patterns(&cfg, field);
    let mut out = String::new();
    let w = &mut out;

    let p = params;
    writeln!(w, "code (n, k, r, alpha, beta, B) = ({}, {}, {}, {}, {}, {}) over GF({Q}), {RECORDS} records",
        p.n, p.k, p.r, p.alpha, p.beta, p.b)?;
    writeln!(w, "\nPsi (row i belongs to node i):")?;
    w.push_str(&show(enc.psi(), "  "));
    for (i, want) in PSI.iter().enumerate() {
        ensure!(enc.psi().row_residues(i) == want.as_slice(), "Psi row {} is {:?}, expected {want:?}",
            i + 1, enc.psi().row_residues(i));
    }

    let coeffs = share_coefficients(&enc, field)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let db: Vec<Vec<FieldElement>> = (0..RECORDS).map(|_| field.sample_uniform(&mut rng, p.b)).collect();
    let messages = db
        .iter()
        .map(|r| MessageMatrix::from_record(r, &p))
        .collect::<Result<Vec<_>, _>>()?;
    let rows = (0..p.n).map(|i| node_row(&enc, i, &messages)).collect::<Result<Vec<_>, _>>()?;

    writeln!(w, "\nsample database:")?;
    for (a, rec) in db.iter().enumerate() {
        let vals: Vec<u32> = rec.iter().map(FieldElement::value).collect();
        writeln!(w, "  X{} = {vals:?}", a + 1)?;
    }
    writeln!(w, "\nnode contents:")?;
    for i in 0..p.n {
        writeln!(w, "  node {}:", i + 1)?;
        for a in 0..RECORDS {
            for j in 0..p.alpha {
                let form = linear_form(&coeffs[i][j], |l| format!("x{}{}", a + 1, l + 1));
                let value = rows[i][a * p.alpha + j];
                // evaluate the printed form directly as a cross-check
                let direct = coeffs[i][j]
                    .iter()
                    .zip(&db[a])
                    .fold(field.zero(), |acc, (&c, x)| acc + field.element(c.into()) * *x);
                ensure!(direct == value, "node {} record {} symbol {} does not match its formula", i + 1, a + 1, j + 1);
                writeln!(w, "    {form:<28} = {}", value.value())?;
            }
        }
    }

    writeln!(w, "\nretrieval patterns:")?;
    for (i, v) in patterns.iter().enumerate() {
        writeln!(w, "  V{}:", i + 1)?;
        w.push_str(&show(v.matrix(), "    "));
        let want: &[u32] = if i < V.len() { &V[i] } else { &[0; 6] };
        ensure!(v.matrix().residues() == want, "V{} is {:?}, expected {want:?}", i + 1, v.matrix().residues());
    }
    for (i, v) in patterns.iter().enumerate() {
        let ve = v.expand(&cfg, 0)?;
        writeln!(w, "  V{}E1:", i + 1)?;
        w.push_str(&show(&ve, "    "));
        let want: &[u32] = if i < VE1.len() { &VE1[i] } else { &[0; 18] };
        ensure!(ve.residues() == want, "V{}E1 is {:?}, expected {want:?}", i + 1, ve.residues());
    }

    let mask = QueryMask::random(&cfg, field, &mut rng);
    let u = mask.matrix().clone();
    writeln!(w, "\nrandom U (seed {seed}):")?;
    w.push_str(&show(&u, "  "));
    let queries = gen_queries(&cfg, mask, &patterns, 0)?;
    let answers: Vec<Answer> = queries
        .iter()
        .zip(&rows)
        .map(|(q, row)| node_answer(q, row))
        .collect::<Result<_, _>>()?;

    // interference terms computed from the database, to show the equations hold
    let u1 = u.row(0);
    let interference: Vec<FieldElement> = (0..2 * p.alpha)
        .map(|h| {
            messages
                .iter()
                .enumerate()
                .flat_map(|(a, msg)| {
                    let u1 = &u1;
                    msg.matrix().row(h).into_iter().enumerate().map(move |(s, x)| x * u1[a * p.alpha + s])
                })
                .fold(field.zero(), |acc, x| acc + x)
        })
        .collect();
    writeln!(w, "\nsubquery 1:")?;
    for i in 0..p.n {
        let psi = enc.psi().row_residues(i);
        let mut lhs = String::new();
        let mut value = field.zero();
        if let Some(s) = retrieved_position(&p, i, 0) {
            write!(lhs, "C1_{}{} + ", i + 1, s + 1)?;
            value = rows[i][s];
        }
        lhs.push_str(&linear_form(psi, |h| format!("I1_{}", h + 1)));
        for (h, &c) in psi.iter().enumerate() {
            value = value + field.element(c.into()) * interference[h];
        }
        let a = answers[i].symbols()[0];
        ensure!(value == a, "equation ({}) does not hold", i + 1);
        writeln!(w, "  {lhs:<40} = A{}1 = {:<3} ({})", i + 1, a.value(), i + 1)?;
    }
    let vals: Vec<u32> = interference.iter().map(FieldElement::value).collect();
    let quiet: Vec<usize> = (0..p.n).filter(|&i| retrieved_position(&p, i, 0).is_none()).collect();
    let names: Vec<String> = quiet.iter().map(|i| (i + 1).to_string()).collect();
    writeln!(w, "  interference-only equations from nodes {}:", names.join(", "))?;
    w.push_str(&show(&enc.psi().submatrix_rows(&quiet)?, "    "));
    writeln!(w, "  I1 = {vals:?}")?;

    let decoded = decode_record(&answers, &enc, &cfg)?;
    let got: Vec<u32> = decoded.iter().map(FieldElement::value).collect();
    writeln!(w, "\ndecoded X1 = {got:?}")?;
    ensure!(decoded == db[0], "decoded record differs from X1");
    let downloaded: usize = answers.iter().map(|a| a.symbols().len()).sum();
    writeln!(w, "downloaded {downloaded} symbols for a record of {} symbols", p.b)?;
    ensure!(downloaded == 18, "downloaded {downloaded} symbols, expected 18");
    let cpop = Ratio::new(downloaded as i64, p.b as i64);
    ensure!(cpop == metrics_report(&cfg).cpop, "measured cPoP {cpop} differs from dn/(k alpha)");
    writeln!(w, "cPoP = {cpop}")?;
    Ok(DemoOutcome { transcript: out, downloaded, cpop })
}
