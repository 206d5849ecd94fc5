//! Search for pair sequences whose joint frequencies factorize by accident.
//!
//! A periodic pair sequence can have exactly factorizing joint frequencies
//! over its period while the two coordinates are produced by anything but
//! independent devices. Such sequences are event-independent as a matter of
//! counting, yet a place selection exposes the coupling: some subsequence no
//! longer factorizes. This module enumerates periodic pair sequences in a
//! fixed order and returns the first one that factorizes exactly over a full
//! period but shows a deviation of at least 1/10 under a built-in selection.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::collective::{Alphabet, Collective};
use crate::independence::{combine, joint_builtin_family};
use crate::rational::Frac;

/// Periods of the full sequence over which a candidate is materialized for
/// the selection check. 60 is divisible by every built-in stride, so stride
/// subsequences of a periodic candidate are themselves whole-period.
pub const EVAL_PERIODS: usize = 60;

/// Selections whose kept subsequence is shorter than this are not scored.
pub const MIN_KEPT: usize = 30;

/// Required factorization deviation under the breaking selection.
pub fn witness_deviation_bound() -> Frac {
    Frac::new(1, 10)
}

/// Hard cap on enumerated candidate sequences before the search refuses.
pub const SEQUENCE_BUDGET: u128 = 5_000_000;

const LEFT_LABELS: [&str; 4] = ["A", "B", "C", "D"];
const RIGHT_LABELS: [&str; 4] = ["X", "Y", "Z", "W"];

#[derive(Debug, Error, PartialEq)]
pub enum NumberplayError {
    #[error("alphabet sizes must be at least 2 (got {0} and {1})")]
    AlphabetTooSmall(usize, usize),
    #[error("search space exceeded: {0}")]
    SearchSpaceExceeded(String),
}

/// A periodic pair sequence that factorizes exactly over one period but
/// fails factorization under the named place selection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NumberplayWitness {
    pub left_alphabet: Vec<String>,
    pub right_alphabet: Vec<String>,
    pub period: usize,
    /// One period of the sequence as (left, right) label pairs.
    pub pairs: Vec<[String; 2]>,
    /// Exact joint frequencies over one period (all cells).
    pub period_joint: Vec<JointFrequency>,
    pub left_marginals: Vec<MarginalFrequency>,
    pub right_marginals: Vec<MarginalFrequency>,
    pub breaking_selection: String,
    /// Length of the materialized sequence the selection was applied to.
    pub evaluation_len: u64,
    pub kept_len: u64,
    pub deviation: Frac,
    pub deviation_value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JointFrequency {
    pub left: String,
    pub right: String,
    pub count: u64,
    pub frequency: Frac,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarginalFrequency {
    pub symbol: String,
    pub count: u64,
    pub frequency: Frac,
}

/// Exhaustive search over periodic pair sequences with alphabet sizes
/// `(left_size, right_size)` and period up to `max_period`.
///
/// Candidates are enumerated period by period, within a period in
/// lexicographic order of the pair-index digit string, and selections in
/// family order, so the returned witness is a deterministic function of the
/// bounds. Returns `Ok(None)` when every candidate within bounds either
/// fails exact factorization or survives all selections.
pub fn find_numberplay_counterexample(
    left_size: usize,
    right_size: usize,
    max_period: usize,
) -> Result<Option<NumberplayWitness>, NumberplayError> {
    if left_size < 2 || right_size < 2 {
        return Err(NumberplayError::AlphabetTooSmall(left_size, right_size));
    }
    if left_size > LEFT_LABELS.len() || right_size > RIGHT_LABELS.len() {
        return Err(NumberplayError::SearchSpaceExceeded(format!(
            "alphabet sizes up to {}x{} are supported",
            LEFT_LABELS.len(),
            RIGHT_LABELS.len()
        )));
    }
    if max_period > 24 {
        return Err(NumberplayError::SearchSpaceExceeded(
            "max period above 24 is not searchable at desk scale".into(),
        ));
    }

    let cells = (left_size * right_size) as u128;
    let mut examined: u128 = 0;
    let mut digits = Vec::new();
    for period in 1..=max_period {
        let total = cells.pow(period as u32);
        for v in 0..total {
            examined += 1;
            if examined > SEQUENCE_BUDGET {
                return Err(NumberplayError::SearchSpaceExceeded(format!(
                    "candidate budget of {SEQUENCE_BUDGET} sequences exhausted at period {period}"
                )));
            }
            decompose(v, cells as u64, period, &mut digits);
            if let Some(witness) = check_candidate(&digits, left_size, right_size, period) {
                return Ok(Some(witness));
            }
        }
    }
    Ok(None)
}

/// Big-endian base-`cells` digits of `v`, length `period`.
fn decompose(v: u128, cells: u64, period: usize, out: &mut Vec<u64>) {
    out.clear();
    out.resize(period, 0);
    let mut rest = v;
    for slot in out.iter_mut().rev() {
        *slot = (rest % cells as u128) as u64;
        rest /= cells as u128;
    }
}

fn check_candidate(
    digits: &[u64],
    left_size: usize,
    right_size: usize,
    period: usize,
) -> Option<NumberplayWitness> {
    // Exact factorization over one period: T * n(i,j) == n1(i) * n2(j).
    let mut joint = vec![0u64; left_size * right_size];
    for &d in digits {
        joint[d as usize] += 1;
    }
    let mut left_counts = vec![0u64; left_size];
    let mut right_counts = vec![0u64; right_size];
    for i in 0..left_size {
        for j in 0..right_size {
            left_counts[i] += joint[i * right_size + j];
            right_counts[j] += joint[i * right_size + j];
        }
    }
    let t = period as u64;
    for i in 0..left_size {
        for j in 0..right_size {
            if t * joint[i * right_size + j] != left_counts[i] * right_counts[j] {
                return None;
            }
        }
    }

    // Materialize EVAL_PERIODS repetitions and try the selection family.
    let left_alphabet = Alphabet::new(LEFT_LABELS[..left_size].to_vec()).unwrap();
    let right_alphabet = Alphabet::new(RIGHT_LABELS[..right_size].to_vec()).unwrap();
    let eval_len = period * EVAL_PERIODS;
    let mut s1 = Vec::with_capacity(eval_len);
    let mut s2 = Vec::with_capacity(eval_len);
    for rep in 0..eval_len {
        let d = digits[rep % period];
        s1.push((d / right_size as u64) as u32);
        s2.push((d % right_size as u64) as u32);
    }
    let c1 = Collective::new(left_alphabet.clone(), s1).unwrap();
    let c2 = Collective::new(right_alphabet.clone(), s2).unwrap();
    let cc = combine(&c1, &c2).unwrap();

    let bound = witness_deviation_bound();
    for sel in joint_builtin_family(&cc) {
        if sel.name == "full" {
            continue; // factorizes by construction
        }
        let mask = sel.keep_mask(&cc);
        let (deviation, kept) = masked_max_deviation(&cc, &mask, left_size, right_size);
        if kept < MIN_KEPT as u64 {
            continue;
        }
        if deviation >= bound {
            let pairs = digits
                .iter()
                .map(|&d| {
                    [
                        LEFT_LABELS[(d / right_size as u64) as usize].to_string(),
                        RIGHT_LABELS[(d % right_size as u64) as usize].to_string(),
                    ]
                })
                .collect();
            let period_joint = (0..left_size)
                .flat_map(|i| (0..right_size).map(move |j| (i, j)))
                .map(|(i, j)| JointFrequency {
                    left: LEFT_LABELS[i].to_string(),
                    right: RIGHT_LABELS[j].to_string(),
                    count: joint[i * right_size + j],
                    frequency: Frac::ratio(joint[i * right_size + j], t),
                })
                .collect();
            let left_marginals = left_counts
                .iter()
                .enumerate()
                .map(|(i, &c)| MarginalFrequency {
                    symbol: LEFT_LABELS[i].to_string(),
                    count: c,
                    frequency: Frac::ratio(c, t),
                })
                .collect();
            let right_marginals = right_counts
                .iter()
                .enumerate()
                .map(|(j, &c)| MarginalFrequency {
                    symbol: RIGHT_LABELS[j].to_string(),
                    count: c,
                    frequency: Frac::ratio(c, t),
                })
                .collect();
            return Some(NumberplayWitness {
                left_alphabet: left_alphabet.labels().to_vec(),
                right_alphabet: right_alphabet.labels().to_vec(),
                period,
                pairs,
                period_joint,
                left_marginals,
                right_marginals,
                breaking_selection: sel.name.clone(),
                evaluation_len: eval_len as u64,
                kept_len: kept,
                deviation,
                deviation_value: deviation.to_f64(),
            });
        }
    }
    None
}

/// Exact max joint-vs-product deviation of the masked subsequence.
fn masked_max_deviation(
    cc: &crate::independence::CombinedCollective,
    mask: &[bool],
    left_size: usize,
    right_size: usize,
) -> (Frac, u64) {
    let comps = cc.components();
    let (s1, s2) = (comps[0].samples(), comps[1].samples());
    let mut joint = vec![0u64; left_size * right_size];
    let mut kept = 0u64;
    for idx in 0..mask.len() {
        if mask[idx] {
            joint[s1[idx] as usize * right_size + s2[idx] as usize] += 1;
            kept += 1;
        }
    }
    if kept == 0 {
        return (Frac::ZERO, 0);
    }
    let mut left_counts = vec![0u64; left_size];
    let mut right_counts = vec![0u64; right_size];
    for i in 0..left_size {
        for j in 0..right_size {
            left_counts[i] += joint[i * right_size + j];
            right_counts[j] += joint[i * right_size + j];
        }
    }
    let mut max = Frac::ZERO;
    for i in 0..left_size {
        for j in 0..right_size {
            let dev = (Frac::ratio(joint[i * right_size + j], kept)
                - Frac::ratio(left_counts[i], kept) * Frac::ratio(right_counts[j], kept))
            .abs();
            if dev > max {
                max = dev;
            }
        }
    }
    (max, kept)
}

impl NumberplayWitness {
    /// Re-check the witness from its recorded data by direct counting:
    /// exact factorization over one period and the claimed deviation under
    /// the named selection on the materialized sequence.
    pub fn verify(&self) -> Result<(), String> {
        let left_alphabet = Alphabet::new(self.left_alphabet.clone()).map_err(|e| e.to_string())?;
        let right_alphabet =
            Alphabet::new(self.right_alphabet.clone()).map_err(|e| e.to_string())?;
        if self.pairs.len() != self.period {
            return Err("pair list does not match the declared period".into());
        }

        let t = self.period as u64;
        let k2 = right_alphabet.len();
        let mut joint = vec![0u64; left_alphabet.len() * k2];
        for p in &self.pairs {
            let i = left_alphabet
                .index_of(&p[0])
                .ok_or_else(|| format!("unknown left symbol {}", p[0]))?;
            let j = right_alphabet
                .index_of(&p[1])
                .ok_or_else(|| format!("unknown right symbol {}", p[1]))?;
            joint[i as usize * k2 + j as usize] += 1;
        }
        let mut left_counts = vec![0u64; left_alphabet.len()];
        let mut right_counts = vec![0u64; k2];
        for i in 0..left_alphabet.len() {
            for j in 0..k2 {
                left_counts[i] += joint[i * k2 + j];
                right_counts[j] += joint[i * k2 + j];
            }
        }
        for i in 0..left_alphabet.len() {
            for j in 0..k2 {
                if t * joint[i * k2 + j] != left_counts[i] * right_counts[j] {
                    return Err(format!(
                        "period frequencies do not factorize at ({}, {})",
                        left_alphabet.label(i as u32),
                        right_alphabet.label(j as u32)
                    ));
                }
            }
        }

        // Rebuild the materialized sequence and re-apply the named selection.
        let reps = self.evaluation_len as usize / self.period;
        if reps * self.period != self.evaluation_len as usize {
            return Err("evaluation length is not a whole number of periods".into());
        }
        let mut s1 = Vec::new();
        let mut s2 = Vec::new();
        for rep in 0..self.evaluation_len as usize {
            let p = &self.pairs[rep % self.period];
            s1.push(left_alphabet.index_of(&p[0]).unwrap());
            s2.push(right_alphabet.index_of(&p[1]).unwrap());
        }
        let c1 = Collective::new(left_alphabet.clone(), s1).unwrap();
        let c2 = Collective::new(right_alphabet.clone(), s2).unwrap();
        let cc = combine(&c1, &c2).map_err(|e| e.to_string())?;
        let family = joint_builtin_family(&cc);
        let sel = family
            .iter()
            .find(|s| s.name == self.breaking_selection)
            .ok_or_else(|| format!("unknown selection {}", self.breaking_selection))?;
        let mask = sel.keep_mask(&cc);
        let (deviation, kept) =
            masked_max_deviation(&cc, &mask, left_alphabet.len(), right_alphabet.len());
        if kept != self.kept_len {
            return Err(format!(
                "kept length mismatch: recorded {}, recounted {kept}",
                self.kept_len
            ));
        }
        if deviation != self.deviation {
            return Err(format!(
                "deviation mismatch: recorded {}, recounted {deviation}",
                self.deviation
            ));
        }
        if deviation < witness_deviation_bound() {
            return Err(format!("deviation {deviation} is below the 1/10 bound"));
        }
        Ok(())
    }
}
