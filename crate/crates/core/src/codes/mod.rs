//! Optical orthogonal codes for code-separated private networks.
//!
//! Each virtual PON is identified by one codeword of a validated [`CodeSet`].
//! This module builds such sets, checks their correlation bounds, evaluates a
//! simple multiple-access-interference model and maps the number of
//! private networks to a measured power-penalty table.

mod correlation;
mod mai;
mod ooc;
mod penalty;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use correlation::{cross_correlation, validate_code_set, ValidationReport};
pub use mai::mai_ber;
pub use ooc::{generate_ooc, johnson_bound};
pub use penalty::{feasibility_check, FeasibilityVerdict, Penalty, PenaltyTable};

/// A binary chip sequence of length `n`, stored as the sorted positions of its 1-chips.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Codeword {
    length_chips: u32,
    positions: Vec<u32>,
}

impl Codeword {
    /// Builds a codeword from arbitrary-order positions. Positions must be
    /// distinct, non-empty and inside `[0, length_chips)`.
    pub fn new(length_chips: u32, positions: impl IntoIterator<Item = u32>) -> Result<Self> {
        let mut positions: Vec<u32> = positions.into_iter().collect();
        positions.sort_unstable();
        if positions.is_empty() {
            return Err(Error::Validation("codeword must have weight >= 1".into()));
        }
        if positions.windows(2).any(|p| p[0] == p[1]) {
            return Err(Error::Validation(format!(
                "codeword positions must be distinct: {positions:?}"
            )));
        }
        if let Some(&p) = positions.iter().find(|&&p| p >= length_chips) {
            return Err(Error::Validation(format!(
                "position {p} outside [0, {length_chips})"
            )));
        }
        Ok(Codeword {
            length_chips,
            positions,
        })
    }

    pub fn length_chips(&self) -> u32 {
        self.length_chips
    }

    pub fn weight(&self) -> u32 {
        self.positions.len() as u32
    }

    pub fn positions(&self) -> &[u32] {
        &self.positions
    }

    pub(crate) fn contains(&self, chip: u32) -> bool {
        self.positions.binary_search(&chip).is_ok()
    }
}

/// A set of codewords sharing length and weight, with a declared correlation bound.
///
/// Construction only checks homogeneity; use [`validate_code_set`] for the
/// correlation bound.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeSet {
    length_chips: u32,
    weight: u32,
    lambda_max: u32,
    codewords: Vec<Codeword>,
}

impl CodeSet {
    pub fn new(
        length_chips: u32,
        weight: u32,
        lambda_max: u32,
        codewords: Vec<Codeword>,
    ) -> Result<Self> {
        if codewords.is_empty() {
            return Err(Error::Validation("code set must not be empty".into()));
        }
        for (i, cw) in codewords.iter().enumerate() {
            if cw.length_chips != length_chips || cw.weight() != weight {
                return Err(Error::Validation(format!(
                    "codeword {i} has (n={}, w={}), expected (n={length_chips}, w={weight})",
                    cw.length_chips,
                    cw.weight()
                )));
            }
        }
        Ok(CodeSet {
            length_chips,
            weight,
            lambda_max,
            codewords,
        })
    }

    pub fn length_chips(&self) -> u32 {
        self.length_chips
    }

    pub fn weight(&self) -> u32 {
        self.weight
    }

    pub fn lambda_max(&self) -> u32 {
        self.lambda_max
    }

    pub fn codewords(&self) -> &[Codeword] {
        &self.codewords
    }

    pub fn len(&self) -> usize {
        self.codewords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codewords.is_empty()
    }

    pub fn to_json(&self) -> CodeSetJson {
        CodeSetJson {
            n: self.length_chips,
            w: self.weight,
            lambda: self.lambda_max,
            codewords: self.codewords.iter().map(|c| c.positions.clone()).collect(),
        }
    }
}

/// Wire form used by the `codes` subcommand:
/// `{"n":…, "w":…, "lambda":…, "codewords":[[positions]…]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeSetJson {
    pub n: u32,
    pub w: u32,
    pub lambda: u32,
    pub codewords: Vec<Vec<u32>>,
}

impl TryFrom<CodeSetJson> for CodeSet {
    type Error = Error;

    fn try_from(raw: CodeSetJson) -> Result<Self> {
        let codewords = raw
            .codewords
            .into_iter()
            .map(|p| Codeword::new(raw.n, p))
            .collect::<Result<Vec<_>>>()?;
        CodeSet::new(raw.n, raw.w, raw.lambda, codewords)
    }
}
