use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{CodeSet, Codeword};
use crate::error::{Error, Result};

/// Upper limit on the number of enumerated candidate codewords.
const MAX_CANDIDATES: usize = 1 << 22;
/// Upper limit on backtracking nodes before the search gives up.
const MAX_SEARCH_NODES: u64 = 20_000_000;

/// Johnson upper bound on the size of an (n, w, 1) optical orthogonal code.
pub fn johnson_bound(n: u32, w: u32, lambda: u32) -> Result<u32> {
    if lambda != 1 {
        return Err(Error::UnsupportedParameters(format!(
            "Johnson bound only implemented for lambda = 1, got {lambda}"
        )));
    }
    if w < 2 {
        return Err(Error::UnsupportedParameters(format!(
            "weight must be >= 2, got {w}"
        )));
    }
    if n <= w {
        return Err(Error::UnsupportedParameters(format!(
            "length {n} must exceed weight {w}"
        )));
    }
    Ok((n - 1) / (w * (w - 1)))
}

/// Builds `target_count` codewords of length `n` and weight `w` whose
/// auto- and cross-correlation sidelobes stay at or below `lambda`.
///
/// Candidates are the weight-`w` subsets containing chip 0, one per cyclic
/// class, visited in a seeded shuffle of lexicographic order. The first
/// branch of the depth-first search is plain first-fit greedy packing; when
/// greedy gets stuck the search backtracks, so the result is exact for small
/// parameters.
pub fn generate_ooc(
    n: u32,
    w: u32,
    lambda: u32,
    target_count: usize,
    seed: u64,
) -> Result<CodeSet> {
    if target_count == 0 {
        return Err(Error::UnsupportedParameters(
            "target_count must be >= 1".into(),
        ));
    }
    if w == 0 || n < w {
        return Err(Error::UnsupportedParameters(format!(
            "need 1 <= w <= n, got n={n}, w={w}"
        )));
    }
    let reachable = if lambda == 1 {
        let bound = johnson_bound(n, w, 1)? as usize;
        if bound == 0 {
            return Err(Error::CapacityExceeded {
                requested: target_count,
                found: 0,
            });
        }
        target_count.min(bound)
    } else {
        target_count
    };

    let mut candidates = canonical_candidates(n, w)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    candidates.shuffle(&mut rng);

    let found = if lambda == 1 {
        let mut search = DifferenceSearch::new(n, &candidates, reachable);
        search.run();
        search.best
    } else {
        let mut search = CorrelationSearch::new(n, lambda, &candidates, reachable);
        search.run();
        search.best
    };

    if found.len() < target_count {
        return Err(Error::CapacityExceeded {
            requested: target_count,
            found: found.len(),
        });
    }
    let codewords = found
        .into_iter()
        .map(|i| Codeword::new(n, candidates[i].iter().copied()))
        .collect::<Result<Vec<_>>>()?;
    CodeSet::new(n, w, lambda, codewords)
}

/// All weight-`w` subsets of `[0, n)` that contain 0 and are the
/// lexicographically smallest rotation of their cyclic class.
fn canonical_candidates(n: u32, w: u32) -> Result<Vec<Vec<u32>>> {
    let k = (w - 1) as usize;
    let pool = (n - 1) as usize;
    let total = binomial(pool, k);
    if total > MAX_CANDIDATES as f64 {
        return Err(Error::UnsupportedParameters(format!(
            "(n={n}, w={w}) yields {total:.0} candidates, above the {MAX_CANDIDATES} search limit"
        )));
    }

    let mut out = Vec::new();
    // combination of k indices from 1..n, in lexicographic order
    let mut idx: Vec<u32> = (1..=k as u32).collect();
    loop {
        let mut cand = Vec::with_capacity(w as usize);
        cand.push(0);
        cand.extend_from_slice(&idx);
        if is_canonical(n, &cand) {
            out.push(cand);
        }
        // advance
        let mut i = k;
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            if idx[i] < n - (k - i) as u32 {
                idx[i] += 1;
                for j in i + 1..k {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

fn is_canonical(n: u32, cand: &[u32]) -> bool {
    let mut rot = vec![0u32; cand.len()];
    for &pivot in &cand[1..] {
        for (r, &p) in rot.iter_mut().zip(cand) {
            *r = (p + n - pivot) % n;
        }
        rot.sort_unstable();
        if rot.as_slice() < cand {
            return false;
        }
    }
    true
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Cyclic differences `(b - a) mod n` over ordered pairs of distinct positions.
fn differences(n: u32, cand: &[u32]) -> Vec<u32> {
    let mut out = Vec::with_capacity(cand.len() * cand.len());
    for &a in cand {
        for &b in cand {
            if a != b {
                out.push((b + n - a) % n);
            }
        }
    }
    out
}

/// Depth-first packing for lambda = 1: a candidate fits iff its differences
/// are pairwise distinct and disjoint from every difference already used.
struct DifferenceSearch {
    /// Per-candidate difference list, `None` when the candidate repeats a
    /// difference internally.
    diffs: Vec<Option<Vec<u32>>>,
    used: Vec<bool>,
    target: usize,
    chosen: Vec<usize>,
    best: Vec<usize>,
    nodes: u64,
}

impl DifferenceSearch {
    fn new(n: u32, candidates: &[Vec<u32>], target: usize) -> Self {
        let diffs = candidates
            .iter()
            .map(|c| {
                let d = differences(n, c);
                let mut seen = vec![false; n as usize];
                d.iter()
                    .all(|&x| !std::mem::replace(&mut seen[x as usize], true))
                    .then_some(d)
            })
            .collect();
        DifferenceSearch {
            diffs,
            used: vec![false; n as usize],
            target,
            chosen: Vec::new(),
            best: Vec::new(),
            nodes: 0,
        }
    }

    fn run(&mut self) {
        self.descend(0);
    }

    /// Returns true once the target is reached or the node budget is spent.
    fn descend(&mut self, from: usize) -> bool {
        if self.chosen.len() > self.best.len() {
            self.best = self.chosen.clone();
        }
        if self.best.len() >= self.target {
            return true;
        }
        for i in from..self.diffs.len() {
            if self.chosen.len() + (self.diffs.len() - i) <= self.best.len() {
                return false;
            }
            self.nodes += 1;
            if self.nodes > MAX_SEARCH_NODES {
                return true;
            }
            let Some(d) = &self.diffs[i] else { continue };
            if d.iter().any(|&x| self.used[x as usize]) {
                continue;
            }
            for &x in d {
                self.used[x as usize] = true;
            }
            self.chosen.push(i);
            let done = self.descend(i + 1);
            self.chosen.pop();
            if let Some(d) = &self.diffs[i] {
                for &x in d {
                    self.used[x as usize] = false;
                }
            }
            if done {
                return true;
            }
        }
        false
    }
}

/// Depth-first packing for lambda > 1: a candidate fits iff the enlarged set
/// still meets the bound under an exhaustive correlation scan.
struct CorrelationSearch<'a> {
    n: u32,
    lambda: u32,
    candidates: &'a [Vec<u32>],
    auto_ok: Vec<bool>,
    target: usize,
    chosen: Vec<usize>,
    best: Vec<usize>,
    nodes: u64,
}

impl<'a> CorrelationSearch<'a> {
    fn new(n: u32, lambda: u32, candidates: &'a [Vec<u32>], target: usize) -> Self {
        let auto_ok = candidates
            .iter()
            .map(|c| max_correlation(n, c, c, true) <= lambda)
            .collect();
        CorrelationSearch {
            n,
            lambda,
            candidates,
            auto_ok,
            target,
            chosen: Vec::new(),
            best: Vec::new(),
            nodes: 0,
        }
    }

    fn run(&mut self) {
        self.descend(0);
    }

    fn fits(&self, i: usize) -> bool {
        self.auto_ok[i]
            && self.chosen.iter().all(|&j| {
                max_correlation(self.n, &self.candidates[i], &self.candidates[j], false)
                    <= self.lambda
            })
    }

    fn descend(&mut self, from: usize) -> bool {
        if self.chosen.len() > self.best.len() {
            self.best = self.chosen.clone();
        }
        if self.best.len() >= self.target {
            return true;
        }
        for i in from..self.candidates.len() {
            if self.chosen.len() + (self.candidates.len() - i) <= self.best.len() {
                return false;
            }
            self.nodes += 1;
            if self.nodes > MAX_SEARCH_NODES {
                return true;
            }
            if !self.fits(i) {
                continue;
            }
            self.chosen.push(i);
            let done = self.descend(i + 1);
            self.chosen.pop();
            if done {
                return true;
            }
        }
        false
    }
}

fn max_correlation(n: u32, a: &[u32], b: &[u32], skip_peak: bool) -> u32 {
    let mut hist = vec![0u32; n as usize];
    for &pa in a {
        for &pb in b {
            hist[((pb + n - pa) % n) as usize] += 1;
        }
    }
    let start = usize::from(skip_peak);
    hist[start..].iter().copied().max().unwrap_or(0)
}
