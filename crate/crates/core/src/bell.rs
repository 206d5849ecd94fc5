//! Correlation estimates, the CHSH combination, and the conditional
//! factorability check.
//!
//! The factorability condition under test is that, conditional on the hidden
//! variable (a bin of it, at finite sample sizes) and the local settings, the
//! joint outcome frequency splits into the product of per-wing conditionals.
//! Models with deterministic per-wing responses satisfy it exactly at exact
//! lambda; the singlet outcome law does not satisfy it for any binning.

use serde::Serialize;
use thiserror::Error;

use crate::collective::{Alphabet, Collective};
use crate::epr::{lambda_bin, lambda_bin_label, parse_angle, Lambda, SettingSet, TrialLog};
use crate::independence::{
    combine, event_independence_test, IndependenceReport, IndependenceThresholds,
};
use crate::rational::Frac;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("the trial log is empty")]
    EmptyLog,
    #[error("no data at settings pair ({0}, {1})")]
    NoTrialsAtPair(String, String),
    #[error("missing settings pairs: {}", format_pairs(.0))]
    MissingPairs(Vec<(String, String)>),
    #[error("setting `{query}` is not in the {wing} set [{available}]")]
    UnknownSetting {
        wing: String,
        query: String,
        available: String,
    },
    #[error("lambda bin count must be at least 1")]
    BadBins,
}

fn format_pairs(pairs: &[(String, String)]) -> String {
    pairs
        .iter()
        .map(|(a, b)| format!("({a}, {b})"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// A setting referenced from outside the log: an angle (possibly in pi
/// notation) or a label.
#[derive(Debug, Clone, PartialEq)]
pub enum SettingQuery {
    Angle(f64),
    Label(String),
}

impl SettingQuery {
    /// Parse a query against the kind of setting set in use: angle syntax
    /// for angle sets, verbatim labels otherwise.
    pub fn parse(raw: &str, set: &SettingSet) -> Result<SettingQuery, String> {
        match set {
            SettingSet::Angles(_) => Ok(SettingQuery::Angle(parse_angle(raw)?)),
            SettingSet::Labels(_) => Ok(SettingQuery::Label(raw.to_string())),
        }
    }

    fn display(&self) -> String {
        match self {
            SettingQuery::Angle(a) => format!("{a}"),
            SettingQuery::Label(l) => l.clone(),
        }
    }
}

fn resolve_setting(
    set: &SettingSet,
    query: &SettingQuery,
    wing: &str,
) -> Result<u16, AnalysisError> {
    let found = match (set, query) {
        (SettingSet::Angles(v), SettingQuery::Angle(x)) => v.iter().position(|a| a == x),
        (SettingSet::Labels(v), SettingQuery::Label(l)) => v.iter().position(|s| s == l),
        _ => None,
    };
    found
        .map(|i| i as u16)
        .ok_or_else(|| AnalysisError::UnknownSetting {
            wing: wing.to_string(),
            query: query.display(),
            available: set.labels().join(", "),
        })
}

/// Mean outcome product at one settings pair.
#[derive(Debug, Clone, Serialize)]
pub struct CorrelationEstimate {
    pub left_setting: String,
    pub right_setting: String,
    /// Sum of outcome products; `e` is exactly this over `trials`.
    pub product_sum: i64,
    pub trials: u64,
    pub e: f64,
    /// sqrt((1 - E^2) / M); at most 1/sqrt(M).
    pub standard_error: f64,
}

/// Estimate E(a, b) over the trials recorded at exactly this settings pair.
pub fn correlation(
    log: &TrialLog,
    left: &SettingQuery,
    right: &SettingQuery,
) -> Result<CorrelationEstimate, AnalysisError> {
    if log.is_empty() {
        return Err(AnalysisError::EmptyLog);
    }
    let l = resolve_setting(&log.left_settings, left, "left")?;
    let r = resolve_setting(&log.right_settings, right, "right")?;
    correlation_at(log, l, r)
}

fn correlation_at(log: &TrialLog, l: u16, r: u16) -> Result<CorrelationEstimate, AnalysisError> {
    let mut product_sum: i64 = 0;
    let mut trials: u64 = 0;
    for t in &log.records {
        if t.left_setting == l && t.right_setting == r {
            product_sum += (t.left_outcome as i64) * (t.right_outcome as i64);
            trials += 1;
        }
    }
    if trials == 0 {
        return Err(AnalysisError::NoTrialsAtPair(
            log.left_settings.label(l),
            log.right_settings.label(r),
        ));
    }
    let e = product_sum as f64 / trials as f64;
    Ok(CorrelationEstimate {
        left_setting: log.left_settings.label(l),
        right_setting: log.right_settings.label(r),
        product_sum,
        trials,
        e,
        standard_error: ((1.0 - e * e).max(0.0) / trials as f64).sqrt(),
    })
}

/// The four correlations and their signed combination
/// S = E(a,b) - E(a,b') + E(a',b) + E(a',b').
#[derive(Debug, Clone, Serialize)]
pub struct ChshReport {
    pub e_ab: CorrelationEstimate,
    pub e_ab_prime: CorrelationEstimate,
    pub e_a_prime_b: CorrelationEstimate,
    pub e_a_prime_b_prime: CorrelationEstimate,
    pub s: f64,
    /// Root-sum-square of the four standard errors.
    pub standard_error: f64,
}

impl ChshReport {
    /// Recompute S from the four stored estimates.
    pub fn recompute_s(&self) -> f64 {
        self.e_ab.e - self.e_ab_prime.e + self.e_a_prime_b.e + self.e_a_prime_b_prime.e
    }
}

pub fn chsh(
    log: &TrialLog,
    a: &SettingQuery,
    a_prime: &SettingQuery,
    b: &SettingQuery,
    b_prime: &SettingQuery,
) -> Result<ChshReport, AnalysisError> {
    if log.is_empty() {
        return Err(AnalysisError::EmptyLog);
    }
    // A query that resolves to nothing in the log is a settings pair with
    // zero trials; it is reported among the missing pairs rather than as a
    // lookup failure, so a one-pair log names the three absent pairs.
    let ai = resolve_setting(&log.left_settings, a, "left").ok();
    let api = resolve_setting(&log.left_settings, a_prime, "left").ok();
    let bi = resolve_setting(&log.right_settings, b, "right").ok();
    let bpi = resolve_setting(&log.right_settings, b_prime, "right").ok();

    let left_display = |idx: Option<u16>, q: &SettingQuery| match idx {
        Some(i) => log.left_settings.label(i),
        None => q.display(),
    };
    let right_display = |idx: Option<u16>, q: &SettingQuery| match idx {
        Some(i) => log.right_settings.label(i),
        None => q.display(),
    };
    let wanted = [
        (ai, bi, a, b),
        (ai, bpi, a, b_prime),
        (api, bi, a_prime, b),
        (api, bpi, a_prime, b_prime),
    ];
    let mut missing = Vec::new();
    for (l, r, lq, rq) in &wanted {
        let present = match (l, r) {
            (Some(l), Some(r)) => log
                .records
                .iter()
                .any(|t| t.left_setting == *l && t.right_setting == *r),
            _ => false,
        };
        if !present {
            missing.push((left_display(*l, lq), right_display(*r, rq)));
        }
    }
    if !missing.is_empty() {
        return Err(AnalysisError::MissingPairs(missing));
    }

    let (ai, api, bi, bpi) = (ai.unwrap(), api.unwrap(), bi.unwrap(), bpi.unwrap());
    let e_ab = correlation_at(log, ai, bi)?;
    let e_ab_prime = correlation_at(log, ai, bpi)?;
    let e_a_prime_b = correlation_at(log, api, bi)?;
    let e_a_prime_b_prime = correlation_at(log, api, bpi)?;
    let s = e_ab.e - e_ab_prime.e + e_a_prime_b.e + e_a_prime_b_prime.e;
    let standard_error = (e_ab.standard_error.powi(2)
        + e_ab_prime.standard_error.powi(2)
        + e_a_prime_b.standard_error.powi(2)
        + e_a_prime_b_prime.standard_error.powi(2))
    .sqrt();
    Ok(ChshReport {
        e_ab,
        e_ab_prime,
        e_a_prime_b,
        e_a_prime_b_prime,
        s,
        standard_error,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorabilityVerdict {
    ConsistentWithFactorability,
    FactorabilityViolated,
    InsufficientData,
}

/// Per-(bin, settings pair, outcome pair) deviation
/// |f(A,B | a,b,bin) - f(A | a,bin) f(B | b,bin)|.
///
/// The per-wing conditionals pool over the other wing's setting, mirroring a
/// response that may depend on its own setting and the hidden variable only.
#[derive(Debug, Clone, Serialize)]
pub struct FactorabilityCell {
    pub bin: String,
    pub left_setting: String,
    pub right_setting: String,
    pub left_outcome: i8,
    pub right_outcome: i8,
    pub joint_trials: u64,
    pub deviation_exact: Frac,
    pub deviation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SkippedCell {
    pub bin: String,
    pub left_setting: String,
    pub right_setting: String,
    pub joint_trials: u64,
    pub min_required: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FactorabilityReport {
    /// Number of lambda bins ("exact" discrete values count as their own
    /// bins).
    pub lambda_bins: usize,
    pub binning: String,
    pub min_count: u64,
    pub cells: Vec<FactorabilityCell>,
    pub skipped: Vec<SkippedCell>,
    pub max_deviation_exact: Frac,
    pub max_deviation: f64,
    /// The qualifying cell achieving the maximum deviation.
    pub witness: Option<FactorabilityCell>,
    /// Verdict threshold: 3 * sqrt(0.25 / min_count).
    pub threshold: f64,
    pub verdict: FactorabilityVerdict,
}

/// Check the conditional factorization of outcomes given settings and a
/// lambda bin.
pub fn factorability_check(
    log: &TrialLog,
    bins: usize,
    min_count: u64,
) -> Result<FactorabilityReport, AnalysisError> {
    if log.is_empty() {
        return Err(AnalysisError::EmptyLog);
    }
    if bins == 0 {
        return Err(AnalysisError::BadBins);
    }
    let (nbins, binning, bin_labels): (usize, String, Vec<String>) = match &log.lambda_labels {
        Some(labels) => (
            labels.len(),
            "discrete lambda values".to_string(),
            labels.clone(),
        ),
        None => (
            bins,
            format!("{bins} equal-width bins on [0, 2pi)"),
            (0..bins).map(|b| lambda_bin_label(b, bins)).collect(),
        ),
    };
    let (nl, nr) = (log.left_settings.len(), log.right_settings.len());

    // joint[bin][l][r][outcome pair]; per-wing marginals pool the other wing.
    let mut joint = vec![0u64; nbins * nl * nr * 4];
    let mut left_marg = vec![0u64; nbins * nl * 2];
    let mut right_marg = vec![0u64; nbins * nr * 2];
    for t in &log.records {
        let bin = match t.lambda {
            Lambda::Angle(a) => lambda_bin(a, nbins),
            Lambda::Sym(s) => s as usize,
        };
        let (l, r) = (t.left_setting as usize, t.right_setting as usize);
        let ai = (t.left_outcome == 1) as usize;
        let bi = (t.right_outcome == 1) as usize;
        joint[((bin * nl + l) * nr + r) * 4 + ai * 2 + bi] += 1;
        left_marg[(bin * nl + l) * 2 + ai] += 1;
        right_marg[(bin * nr + r) * 2 + bi] += 1;
    }

    let mut cells = Vec::new();
    let mut skipped = Vec::new();
    let mut max_deviation_exact = Frac::ZERO;
    let mut witness: Option<FactorabilityCell> = None;
    for bin in 0..nbins {
        for l in 0..nl {
            for r in 0..nr {
                let base = ((bin * nl + l) * nr + r) * 4;
                let joint_trials: u64 = joint[base..base + 4].iter().sum();
                if joint_trials < min_count {
                    if joint_trials > 0 {
                        skipped.push(SkippedCell {
                            bin: bin_labels[bin].clone(),
                            left_setting: log.left_settings.label(l as u16),
                            right_setting: log.right_settings.label(r as u16),
                            joint_trials,
                            min_required: min_count,
                        });
                    }
                    continue;
                }
                let left_total: u64 = left_marg[(bin * nl + l) * 2..][..2].iter().sum();
                let right_total: u64 = right_marg[(bin * nr + r) * 2..][..2].iter().sum();
                for ai in 0..2usize {
                    for bi in 0..2usize {
                        let f_joint = Frac::ratio(joint[base + ai * 2 + bi], joint_trials);
                        let f_a = Frac::ratio(left_marg[(bin * nl + l) * 2 + ai], left_total);
                        let f_b = Frac::ratio(right_marg[(bin * nr + r) * 2 + bi], right_total);
                        let dev = (f_joint - f_a * f_b).abs();
                        let cell = FactorabilityCell {
                            bin: bin_labels[bin].clone(),
                            left_setting: log.left_settings.label(l as u16),
                            right_setting: log.right_settings.label(r as u16),
                            left_outcome: if ai == 1 { 1 } else { -1 },
                            right_outcome: if bi == 1 { 1 } else { -1 },
                            joint_trials,
                            deviation_exact: dev,
                            deviation: dev.to_f64(),
                        };
                        if dev > max_deviation_exact || witness.is_none() {
                            max_deviation_exact = dev;
                            witness = Some(cell.clone());
                        }
                        cells.push(cell);
                    }
                }
            }
        }
    }

    let threshold = 3.0 * (0.25 / min_count as f64).sqrt();
    let verdict = if cells.is_empty() {
        FactorabilityVerdict::InsufficientData
    } else if max_deviation_exact.to_f64() <= threshold {
        FactorabilityVerdict::ConsistentWithFactorability
    } else {
        FactorabilityVerdict::FactorabilityViolated
    };
    Ok(FactorabilityReport {
        lambda_bins: nbins,
        binning,
        min_count,
        max_deviation_exact,
        max_deviation: max_deviation_exact.to_f64(),
        witness: if cells.is_empty() { None } else { witness },
        cells,
        skipped,
        threshold,
        verdict,
    })
}

/// Flat CSV of per-cell deviations: bin, a, b, A, B, deviation.
pub fn factorability_csv(report: &FactorabilityReport) -> String {
    let mut out =
        String::from("bin,left_setting,right_setting,left_outcome,right_outcome,deviation\n");
    for c in &report.cells {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            c.bin, c.left_setting, c.right_setting, c.left_outcome, c.right_outcome, c.deviation
        ));
    }
    out
}

/// Test P(A,B | a,b) = P(A | a,b) P(B | a,b) on the outcomes at one settings
/// pair, hidden variable marginalized out.
pub fn unconditional_factorization(
    log: &TrialLog,
    left: &SettingQuery,
    right: &SettingQuery,
    thresholds: &IndependenceThresholds,
) -> Result<IndependenceReport, AnalysisError> {
    if log.is_empty() {
        return Err(AnalysisError::EmptyLog);
    }
    let l = resolve_setting(&log.left_settings, left, "left")?;
    let r = resolve_setting(&log.right_settings, right, "right")?;
    let outcome_alphabet = Alphabet::binary("-1", "+1");
    let mut left_samples = Vec::new();
    let mut right_samples = Vec::new();
    for t in &log.records {
        if t.left_setting == l && t.right_setting == r {
            left_samples.push((t.left_outcome == 1) as u32);
            right_samples.push((t.right_outcome == 1) as u32);
        }
    }
    if left_samples.is_empty() {
        return Err(AnalysisError::NoTrialsAtPair(
            log.left_settings.label(l),
            log.right_settings.label(r),
        ));
    }
    let lo = Collective::new(outcome_alphabet.clone(), left_samples).unwrap();
    let ro = Collective::new(outcome_alphabet, right_samples).unwrap();
    Ok(
        event_independence_test(&combine(&lo, &ro).unwrap(), thresholds)
            .expect("pairwise by construction"),
    )
}
