use serde::Serialize;

use super::{CodeSet, Codeword};
use crate::error::{Error, Result};

/// Periodic cross-correlation of `a` against `b` cyclically shifted by `shift` chips:
/// the number of 1-chips of `a` that land on a 1-chip of `b`.
pub fn cross_correlation(a: &Codeword, b: &Codeword, shift: i64) -> Result<u32> {
    if a.length_chips() != b.length_chips() {
        return Err(Error::Validation(format!(
            "length mismatch: {} vs {} chips",
            a.length_chips(),
            b.length_chips()
        )));
    }
    let n = i64::from(a.length_chips());
    let shift = shift.rem_euclid(n);
    let hits = a
        .positions()
        .iter()
        .filter(|&&t| b.contains(((i64::from(t) + shift) % n) as u32))
        .count();
    Ok(hits as u32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub max_auto_sidelobe: u32,
    pub max_cross: u32,
    pub ok: bool,
}

/// Histogram of cyclic differences `(pb - pa) mod n`. Entry `d` equals the
/// correlation of `a` with `b` at shift `d`.
fn difference_histogram(a: &Codeword, b: &Codeword, hist: &mut [u32]) {
    let n = a.length_chips();
    hist.iter_mut().for_each(|h| *h = 0);
    for &pa in a.positions() {
        for &pb in b.positions() {
            hist[((pb + n - pa) % n) as usize] += 1;
        }
    }
}

/// Exhaustive check of the declared correlation bound over every shift and pair.
pub fn validate_code_set(cs: &CodeSet) -> Result<ValidationReport> {
    let n = cs.length_chips();
    if cs.is_empty() {
        return Err(Error::Validation("empty code set".into()));
    }
    if cs
        .codewords()
        .iter()
        .any(|c| c.length_chips() != n || c.weight() != cs.weight())
    {
        return Err(Error::Validation(
            "heterogeneous code set parameters".into(),
        ));
    }

    let mut hist = vec![0u32; n as usize];
    let mut max_auto_sidelobe = 0;
    for cw in cs.codewords() {
        difference_histogram(cw, cw, &mut hist);
        let side = hist.iter().skip(1).copied().max().unwrap_or(0);
        max_auto_sidelobe = max_auto_sidelobe.max(side);
    }

    let mut max_cross = 0;
    let words = cs.codewords();
    for (i, a) in words.iter().enumerate() {
        for b in &words[i + 1..] {
            difference_histogram(a, b, &mut hist);
            max_cross = max_cross.max(hist.iter().copied().max().unwrap_or(0));
        }
    }

    let lambda = cs.lambda_max();
    Ok(ValidationReport {
        max_auto_sidelobe,
        max_cross,
        ok: max_auto_sidelobe <= lambda && max_cross <= lambda,
    })
}
