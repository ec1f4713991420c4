use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};

/// Power penalty (dB, at a 1e-9 bit error rate) for a given number of
/// simultaneously active private networks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Penalty {
    Interval { lo_db: f64, hi_db: f64 },
    RequiresThresholder,
}

/// Measured penalty intervals keyed by private-network count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PenaltyTable {
    entries: BTreeMap<u32, (f64, f64)>,
    thresholder_threshold: u32,
    /// Flat penalty assumed once a thresholder removes MAI. Not a measured value.
    post_thresholder_penalty_db: f64,
}

impl Default for PenaltyTable {
    fn default() -> Self {
        PenaltyTable {
            entries: BTreeMap::from([(1, (0.0, 0.0)), (2, (4.0, 5.0)), (3, (8.0, 10.0))]),
            thresholder_threshold: 3,
            post_thresholder_penalty_db: 5.0,
        }
    }
}

impl PenaltyTable {
    /// Entries must cover `1..=thresholder_threshold`, start at `[0, 0]`, and
    /// be monotone non-decreasing.
    pub fn new(
        entries: BTreeMap<u32, (f64, f64)>,
        thresholder_threshold: u32,
        post_thresholder_penalty_db: f64,
    ) -> Result<Self> {
        if entries.get(&1) != Some(&(0.0, 0.0)) {
            return Err(Error::Validation(
                "penalty entry for 1 PN must be [0, 0]".into(),
            ));
        }
        let mut prev = (0.0, 0.0);
        for k in 1..=thresholder_threshold {
            let Some(&(lo, hi)) = entries.get(&k) else {
                return Err(Error::Validation(format!(
                    "missing penalty entry for {k} PNs"
                )));
            };
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(Error::Validation(format!(
                    "invalid interval [{lo}, {hi}] for {k} PNs"
                )));
            }
            if lo < prev.0 || hi < prev.1 {
                return Err(Error::Validation(format!("penalty for {k} PNs decreases")));
            }
            prev = (lo, hi);
        }
        if !post_thresholder_penalty_db.is_finite() || post_thresholder_penalty_db < 0.0 {
            return Err(Error::Validation(
                "post-thresholder penalty must be >= 0".into(),
            ));
        }
        Ok(PenaltyTable {
            entries,
            thresholder_threshold,
            post_thresholder_penalty_db,
        })
    }

    pub fn with_post_thresholder_penalty(mut self, db: f64) -> Result<Self> {
        if !db.is_finite() || db < 0.0 {
            return Err(Error::Validation(
                "post-thresholder penalty must be >= 0".into(),
            ));
        }
        self.post_thresholder_penalty_db = db;
        Ok(self)
    }

    pub fn thresholder_threshold(&self) -> u32 {
        self.thresholder_threshold
    }

    pub fn post_thresholder_penalty_db(&self) -> f64 {
        self.post_thresholder_penalty_db
    }

    pub fn penalty_interval(&self, pn_count: u32) -> Penalty {
        if pn_count > self.thresholder_threshold {
            return Penalty::RequiresThresholder;
        }
        // pn_count 0 is treated as a single network
        match self.entries.get(&pn_count.max(1)) {
            Some(&(lo_db, hi_db)) => Penalty::Interval { lo_db, hi_db },
            None => Penalty::RequiresThresholder,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum FeasibilityVerdict {
    Feasible {
        margin_db: f64,
    },
    /// Feasible only with a thresholder at the receiver; the margin assumes
    /// the configured post-thresholder penalty.
    RequiresThresholder {
        margin_db: f64,
    },
    /// `thresholder_required` marks counts above the table where the deficit
    /// is computed against the post-thresholder penalty.
    Infeasible {
        deficit_db: f64,
        thresholder_required: bool,
    },
}

impl FeasibilityVerdict {
    pub fn is_runnable(&self) -> bool {
        !matches!(self, FeasibilityVerdict::Infeasible { .. })
    }

    /// Signed margin in dB, negative when infeasible.
    pub fn margin_db(&self) -> f64 {
        match *self {
            FeasibilityVerdict::Feasible { margin_db }
            | FeasibilityVerdict::RequiresThresholder { margin_db } => margin_db,
            FeasibilityVerdict::Infeasible { deficit_db, .. } => -deficit_db,
        }
    }
}

/// Power-budget check for `pn_count` private networks sharing the tree.
pub fn feasibility_check(
    budget_db: f64,
    topology_losses_db: f64,
    pn_count: u32,
    thresholder_enabled: bool,
    table: &PenaltyTable,
) -> FeasibilityVerdict {
    let available = budget_db - topology_losses_db;
    match table.penalty_interval(pn_count) {
        Penalty::Interval { hi_db, .. } => {
            let margin = available - hi_db;
            if margin >= 0.0 {
                FeasibilityVerdict::Feasible { margin_db: margin }
            } else {
                FeasibilityVerdict::Infeasible {
                    deficit_db: -margin,
                    thresholder_required: false,
                }
            }
        }
        Penalty::RequiresThresholder => {
            let margin = available - table.post_thresholder_penalty_db;
            if thresholder_enabled && margin >= 0.0 {
                FeasibilityVerdict::RequiresThresholder { margin_db: margin }
            } else {
                FeasibilityVerdict::Infeasible {
                    deficit_db: (-margin).max(0.0),
                    thresholder_required: true,
                }
            }
        }
    }
}
