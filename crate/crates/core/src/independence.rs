//! Event independence vs collective independence.
//!
//! Event independence is a statement about numbers: joint frequencies
//! factorize into marginals. Collective independence is a statement about
//! devices: factorization must also survive every admissible place
//! selection, including rules that pick one component's positions based on
//! the other component's past. A pair sequence can satisfy the first and
//! fail the second; see [`crate::numberplay`] for the constructive search.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::collective::{Collective, SymbolId};
use crate::rational::Frac;
use crate::selection::{
    AfterSymbol, PlaceSelection, PrefixCountParity, SeededMask, Stride, MASK_SEED,
};

#[derive(Debug, Error, PartialEq)]
pub enum IndependenceError {
    #[error("components must have equal length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("combination requires at least one sample")]
    Empty,
    #[error("independence tests are pairwise: expected 2 components, got {0}")]
    NotPairwise(usize),
}

/// Index-aligned combination of equal-length collectives.
#[derive(Debug, Clone)]
pub struct CombinedCollective {
    components: Vec<Collective>,
}

/// Pair two collectives index by index.
pub fn combine(c1: &Collective, c2: &Collective) -> Result<CombinedCollective, IndependenceError> {
    if c1.len() != c2.len() {
        return Err(IndependenceError::LengthMismatch(c1.len(), c2.len()));
    }
    if c1.is_empty() {
        return Err(IndependenceError::Empty);
    }
    Ok(CombinedCollective {
        components: vec![c1.clone(), c2.clone()],
    })
}

impl CombinedCollective {
    pub fn len(&self) -> usize {
        self.components[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn components(&self) -> &[Collective] {
        &self.components
    }

    pub fn tuple_at(&self, index: usize) -> Vec<SymbolId> {
        self.components.iter().map(|c| c.samples()[index]).collect()
    }

    /// Restrict every component to the positions where `kept` is true.
    fn restrict(&self, kept: &[bool]) -> Option<CombinedCollective> {
        let components: Vec<Collective> = self
            .components
            .iter()
            .map(|c| {
                let samples: Vec<SymbolId> = c
                    .samples()
                    .iter()
                    .zip(kept)
                    .filter_map(|(&s, &k)| k.then_some(s))
                    .collect();
                Collective::with_shared_alphabet(c.shared_alphabet(), samples)
                    .expect("subsequence stays within the alphabet")
            })
            .collect();
        if components[0].is_empty() {
            None
        } else {
            Some(CombinedCollective { components })
        }
    }
}

/// Finite-sample decision bands for independence verdicts.
///
/// Deviations are compared against multiples of `sqrt(0.25 / N)`, the widest
/// possible binomial standard error at sample size N; the chi-square test of
/// independence supplies the complementary tail criterion.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct IndependenceThresholds {
    /// Dependent when max deviation exceeds this many sigma.
    pub dependent_sigma: f64,
    /// Independent requires max deviation below this many sigma.
    pub independent_sigma: f64,
    /// Dependent when the chi-square p-value falls below this.
    pub dependent_p_below: f64,
    /// Independent requires a chi-square p-value at or above this.
    pub independent_p_min: f64,
}

impl Default for IndependenceThresholds {
    fn default() -> Self {
        IndependenceThresholds {
            dependent_sigma: 3.0,
            independent_sigma: 1.0,
            dependent_p_below: 0.01,
            independent_p_min: 0.05,
        }
    }
}

impl IndependenceThresholds {
    fn rule_description(&self, n: u64) -> String {
        let scale = (0.25 / n as f64).sqrt();
        format!(
            "dependent if max|f12-f1*f2| > {:.3e} ({}*sqrt(0.25/N)) or p < {}; \
             independent if max < {:.3e} ({}*sqrt(0.25/N)) and p >= {}; else inconclusive",
            self.dependent_sigma * scale,
            self.dependent_sigma,
            self.dependent_p_below,
            self.independent_sigma * scale,
            self.independent_sigma,
            self.independent_p_min,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Independent,
    Dependent,
    Inconclusive,
}

/// Chi-square test of independence on the joint contingency table.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub degrees_of_freedom: u64,
    pub p_value: f64,
}

/// Joint-vs-product frequency deviations and the resulting verdict.
#[derive(Debug, Clone, Serialize)]
pub struct IndependenceReport {
    pub n: u64,
    pub row_symbols: Vec<String>,
    pub col_symbols: Vec<String>,
    pub joint_counts: Vec<Vec<u64>>,
    /// |f(s1,s2) - f(s1) f(s2)| per symbol pair.
    pub deviation_matrix: Vec<Vec<f64>>,
    pub max_deviation_exact: Frac,
    pub max_deviation: f64,
    pub chi_square: ChiSquare,
    pub thresholds: IndependenceThresholds,
    pub threshold_rule: String,
    pub verdict: Verdict,
}

/// Upper chi-square tail probability.
fn chi_square_p_value(statistic: f64, df: u64) -> f64 {
    if df == 0 {
        return 1.0;
    }
    let dist = ChiSquared::new(df as f64).expect("df >= 1");
    (1.0 - dist.cdf(statistic)).clamp(0.0, 1.0)
}

/// Test whether joint frequencies factorize into the product of marginals.
///
/// Pairwise only: errors unless the combination has exactly two components.
pub fn event_independence_test(
    cc: &CombinedCollective,
    thresholds: &IndependenceThresholds,
) -> Result<IndependenceReport, IndependenceError> {
    if cc.components.len() != 2 {
        return Err(IndependenceError::NotPairwise(cc.components.len()));
    }
    if cc.is_empty() {
        return Err(IndependenceError::Empty);
    }
    let (c1, c2) = (&cc.components[0], &cc.components[1]);
    let (k1, k2) = (c1.alphabet().len(), c2.alphabet().len());
    let n = cc.len() as u64;

    let mut joint = vec![vec![0u64; k2]; k1];
    for (&s1, &s2) in c1.samples().iter().zip(c2.samples()) {
        joint[s1 as usize][s2 as usize] += 1;
    }
    let row_counts: Vec<u64> = joint.iter().map(|r| r.iter().sum()).collect();
    let col_counts: Vec<u64> = (0..k2).map(|j| joint.iter().map(|r| r[j]).sum()).collect();

    // Deviations in exact arithmetic; the verdict compares the exact maximum.
    let mut deviation_matrix = vec![vec![0.0f64; k2]; k1];
    let mut max_deviation_exact = Frac::ZERO;
    for i in 0..k1 {
        for j in 0..k2 {
            let f12 = Frac::ratio(joint[i][j], n);
            let product = Frac::ratio(row_counts[i], n) * Frac::ratio(col_counts[j], n);
            let dev = (f12 - product).abs();
            deviation_matrix[i][j] = dev.to_f64();
            if dev > max_deviation_exact {
                max_deviation_exact = dev;
            }
        }
    }

    // Chi-square over cells with positive expected count; degrees of freedom
    // from the nonzero-marginal table.
    let mut statistic = 0.0f64;
    for i in 0..k1 {
        for j in 0..k2 {
            let expected = row_counts[i] as f64 * col_counts[j] as f64 / n as f64;
            if expected > 0.0 {
                let diff = joint[i][j] as f64 - expected;
                statistic += diff * diff / expected;
            }
        }
    }
    let rows_nonzero = row_counts.iter().filter(|&&c| c > 0).count() as u64;
    let cols_nonzero = col_counts.iter().filter(|&&c| c > 0).count() as u64;
    let degrees_of_freedom = rows_nonzero.saturating_sub(1) * cols_nonzero.saturating_sub(1);
    let p_value = chi_square_p_value(statistic, degrees_of_freedom);

    let scale = (0.25 / n as f64).sqrt();
    let max_deviation = max_deviation_exact.to_f64();
    let verdict = if max_deviation > thresholds.dependent_sigma * scale
        || p_value < thresholds.dependent_p_below
    {
        Verdict::Dependent
    } else if max_deviation < thresholds.independent_sigma * scale
        && p_value >= thresholds.independent_p_min
    {
        Verdict::Independent
    } else {
        Verdict::Inconclusive
    };

    Ok(IndependenceReport {
        n,
        row_symbols: c1.alphabet().labels().to_vec(),
        col_symbols: c2.alphabet().labels().to_vec(),
        joint_counts: joint,
        deviation_matrix,
        max_deviation_exact,
        max_deviation,
        chi_square: ChiSquare {
            statistic,
            degrees_of_freedom,
            p_value,
        },
        thresholds: *thresholds,
        threshold_rule: thresholds.rule_description(n),
        verdict,
    })
}

/// Exact maximum of |f(s1,s2) - f(s1) f(s2)| over all symbol pairs.
///
/// Zero exactly when the joint frequencies factorize in rational arithmetic.
pub fn dependence_metric(cc: &CombinedCollective) -> Result<Frac, IndependenceError> {
    if cc.components.len() != 2 {
        return Err(IndependenceError::NotPairwise(cc.components.len()));
    }
    if cc.is_empty() {
        return Err(IndependenceError::Empty);
    }
    let (c1, c2) = (&cc.components[0], &cc.components[1]);
    let n = cc.len() as u64;
    let mut joint = vec![vec![0u64; c2.alphabet().len()]; c1.alphabet().len()];
    for (&s1, &s2) in c1.samples().iter().zip(c2.samples()) {
        joint[s1 as usize][s2 as usize] += 1;
    }
    let row_counts: Vec<u64> = joint.iter().map(|r| r.iter().sum()).collect();
    let col_counts: Vec<u64> = (0..c2.alphabet().len())
        .map(|j| joint.iter().map(|r| r[j]).sum())
        .collect();
    let mut max = Frac::ZERO;
    for (i, row) in joint.iter().enumerate() {
        for (j, &count) in row.iter().enumerate() {
            let dev = (Frac::ratio(count, n)
                - Frac::ratio(row_counts[i], n) * Frac::ratio(col_counts[j], n))
            .abs();
            if dev > max {
                max = dev;
            }
        }
    }
    Ok(max)
}

/// A place selection applied to a pair sequence: the rule reads the prefix of
/// one designated component (data-independent rules read neither).
pub struct JointSelection {
    pub name: String,
    rule: Box<dyn PlaceSelection>,
    target: usize,
}

impl JointSelection {
    pub fn new(name: String, rule: Box<dyn PlaceSelection>, target: usize) -> Self {
        JointSelection { name, rule, target }
    }

    pub fn keep_mask(&self, cc: &CombinedCollective) -> Vec<bool> {
        let samples = cc.components[self.target].samples();
        (1..=samples.len())
            .map(|n| self.rule.keep(n, &samples[..n - 1]))
            .collect()
    }
}

/// The joint selection family for a pair sequence: the identity, the
/// data-independent built-ins, and for each component the prefix-reading
/// built-ins (after-symbol and parity). The after-symbol rules on component 2
/// are exactly the cross rules that select component-1 positions from the
/// other wing's past.
pub fn joint_builtin_family(cc: &CombinedCollective) -> Vec<JointSelection> {
    let mut family = vec![
        JointSelection::new("full".into(), Box::new(Stride::new(1, 0)), 0),
        JointSelection::new("stride(2,0)".into(), Box::new(Stride::new(2, 0)), 0),
        JointSelection::new("stride(3,0)".into(), Box::new(Stride::new(3, 0)), 0),
        JointSelection::new("stride(5,0)".into(), Box::new(Stride::new(5, 0)), 0),
    ];
    for (idx, comp) in cc.components.iter().enumerate() {
        let alphabet = comp.alphabet();
        for id in alphabet.ids() {
            let rule = AfterSymbol::new(alphabet, id);
            family.push(JointSelection::new(
                format!("{}@c{}", rule.name(), idx + 1),
                Box::new(rule),
                idx,
            ));
        }
        let parity = PrefixCountParity::new(alphabet, 0);
        family.push(JointSelection::new(
            format!("{}@c{}", parity.name(), idx + 1),
            Box::new(parity),
            idx,
        ));
    }
    family.push(JointSelection::new(
        format!("mask[{MASK_SEED:#x}]"),
        Box::new(SeededMask { seed: MASK_SEED }),
        0,
    ));
    family
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CollectiveVerdict {
    CollectiveIndependent,
    NotCollectiveIndependent,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelectionSubtest {
    pub selection: String,
    pub subsequence_len: u64,
    #[serde(flatten)]
    pub outcome: SubtestOutcome,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SubtestOutcome {
    Tested { report: Box<IndependenceReport> },
    Skipped { min_required: u64 },
}

/// Event independence plus stability of factorization under the joint
/// selection family.
#[derive(Debug, Clone, Serialize)]
pub struct CollectiveIndependenceReport {
    pub n: u64,
    pub min_subsequence: u64,
    pub subtests: Vec<SelectionSubtest>,
    pub verdict: CollectiveVerdict,
    /// First selection whose subtest came out dependent (or, failing that,
    /// inconclusive).
    pub breaking_selection: Option<String>,
}

/// Run the event test on the full pair sequence and on every subsequence
/// chosen by `family`; the pair is collective-independent only when every
/// evaluated subtest is independent.
pub fn collective_independence_test(
    cc: &CombinedCollective,
    family: &[JointSelection],
    min_subsequence: usize,
    thresholds: &IndependenceThresholds,
) -> Result<CollectiveIndependenceReport, IndependenceError> {
    if cc.components.len() != 2 {
        return Err(IndependenceError::NotPairwise(cc.components.len()));
    }
    if cc.is_empty() {
        return Err(IndependenceError::Empty);
    }
    let mut subtests = Vec::with_capacity(family.len());
    let mut first_dependent: Option<String> = None;
    let mut first_inconclusive: Option<String> = None;
    let mut all_independent = true;
    for sel in family {
        let mask = sel.keep_mask(cc);
        let kept = mask.iter().filter(|&&k| k).count();
        if kept < min_subsequence {
            subtests.push(SelectionSubtest {
                selection: sel.name.clone(),
                subsequence_len: kept as u64,
                outcome: SubtestOutcome::Skipped {
                    min_required: min_subsequence as u64,
                },
            });
            continue;
        }
        let sub = cc.restrict(&mask).expect("kept >= min_subsequence >= 1");
        let report = event_independence_test(&sub, thresholds)?;
        match report.verdict {
            Verdict::Independent => {}
            Verdict::Dependent => {
                all_independent = false;
                first_dependent.get_or_insert_with(|| sel.name.clone());
            }
            Verdict::Inconclusive => {
                all_independent = false;
                first_inconclusive.get_or_insert_with(|| sel.name.clone());
            }
        }
        subtests.push(SelectionSubtest {
            selection: sel.name.clone(),
            subsequence_len: kept as u64,
            outcome: SubtestOutcome::Tested {
                report: Box::new(report),
            },
        });
    }
    let (verdict, breaking_selection) = if all_independent {
        (CollectiveVerdict::CollectiveIndependent, None)
    } else if let Some(name) = first_dependent {
        (CollectiveVerdict::NotCollectiveIndependent, Some(name))
    } else {
        (CollectiveVerdict::Inconclusive, first_inconclusive)
    };
    Ok(CollectiveIndependenceReport {
        n: cc.len() as u64,
        min_subsequence: min_subsequence as u64,
        subtests,
        verdict,
        breaking_selection,
    })
}

/// Deviation matrix as CSV: one row per component-1 symbol, one column per
/// component-2 symbol.
pub fn deviation_matrix_csv(report: &IndependenceReport) -> String {
    let mut out = String::new();
    out.push_str("s1\\s2");
    for c in &report.col_symbols {
        out.push(',');
        out.push_str(&csv_escape(c));
    }
    out.push('\n');
    for (i, r) in report.row_symbols.iter().enumerate() {
        out.push_str(&csv_escape(r));
        for v in &report.deviation_matrix[i] {
            out.push(',');
            out.push_str(&format!("{v}"));
        }
        out.push('\n');
    }
    out
}

fn csv_escape(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collective::Alphabet;

    fn pair(labels1: &[&str], labels2: &[&str]) -> CombinedCollective {
        let c1 = Collective::from_labels(Alphabet::binary("A", "B"), labels1).unwrap();
        let c2 = Collective::from_labels(Alphabet::binary("X", "Y"), labels2).unwrap();
        combine(&c1, &c2).unwrap()
    }

    #[test]
    fn combine_pairs_index_by_index() {
        let cc = pair(&["A", "B"], &["X", "Y"]);
        assert_eq!(cc.tuple_at(0), vec![0, 0]);
        assert_eq!(cc.tuple_at(1), vec![1, 1]);
    }

    #[test]
    fn combine_rejects_length_mismatch() {
        let c1 = Collective::from_labels(Alphabet::binary("A", "B"), &["A"]).unwrap();
        let c2 = Collective::from_labels(Alphabet::binary("X", "Y"), &["X", "Y"]).unwrap();
        assert_eq!(
            combine(&c1, &c2).unwrap_err(),
            IndependenceError::LengthMismatch(1, 2)
        );
    }

    #[test]
    fn self_pairing_is_dependent() {
        let c =
            Collective::sample_iid(Alphabet::binary("A", "B"), &[0.5, 0.5], 100_000, 11).unwrap();
        let cc = combine(&c, &c).unwrap();
        let report = event_independence_test(&cc, &IndependenceThresholds::default()).unwrap();
        assert_eq!(report.verdict, Verdict::Dependent);
        // f(s,s) = f(s) while the product is f(s)^2: the gap is near 1/4.
        assert!((report.max_deviation - 0.25).abs() < 0.01);
    }

    #[test]
    fn independent_fair_coins_are_event_independent() {
        let c1 =
            Collective::sample_iid(Alphabet::binary("A", "B"), &[0.5, 0.5], 100_000, 101).unwrap();
        let c2 =
            Collective::sample_iid(Alphabet::binary("X", "Y"), &[0.5, 0.5], 100_000, 202).unwrap();
        let cc = combine(&c1, &c2).unwrap();
        let report = event_independence_test(&cc, &IndependenceThresholds::default()).unwrap();
        assert_eq!(report.verdict, Verdict::Independent, "{report:?}");
    }

    #[test]
    fn constant_components_are_independent_with_zero_deviation() {
        let cc = pair(&["A", "A", "A"], &["X", "X", "X"]);
        let report = event_independence_test(&cc, &IndependenceThresholds::default()).unwrap();
        assert_eq!(report.verdict, Verdict::Independent);
        assert_eq!(report.max_deviation_exact, Frac::ZERO);
        assert_eq!(report.chi_square.degrees_of_freedom, 0);
        assert_eq!(report.chi_square.p_value, 1.0);
    }

    #[test]
    fn anticorrelated_pair_metric_is_exactly_quarter() {
        let cc = pair(&["A", "B", "A", "B"], &["Y", "X", "Y", "X"]);
        assert_eq!(dependence_metric(&cc).unwrap(), Frac::new(1, 4));
    }

    #[test]
    fn constant_pair_metric_is_zero() {
        let cc = pair(&["A", "A"], &["X", "X"]);
        assert_eq!(dependence_metric(&cc).unwrap(), Frac::ZERO);
    }

    #[test]
    fn transposed_combination_gives_transposed_matrix_and_same_verdict() {
        let c1 = Collective::sample_iid(Alphabet::binary("A", "B"), &[0.3, 0.7], 5_000, 5).unwrap();
        let c2 = Collective::sample_iid(Alphabet::binary("X", "Y"), &[0.6, 0.4], 5_000, 6).unwrap();
        let thresholds = IndependenceThresholds::default();
        let r12 = event_independence_test(&combine(&c1, &c2).unwrap(), &thresholds).unwrap();
        let r21 = event_independence_test(&combine(&c2, &c1).unwrap(), &thresholds).unwrap();
        assert_eq!(r12.max_deviation_exact, r21.max_deviation_exact);
        assert_eq!(r12.verdict, r21.verdict);
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(r12.deviation_matrix[i][j], r21.deviation_matrix[j][i]);
            }
        }
    }

    #[test]
    fn chi_square_tail_matches_textbook_quantiles() {
        // 95th percentile of chi-square: 3.8415 at df=1, 5.9915 at df=2.
        assert!((chi_square_p_value(3.841458820694124, 1) - 0.05).abs() < 1e-9);
        assert!((chi_square_p_value(5.991464547107979, 2) - 0.05).abs() < 1e-9);
        assert_eq!(chi_square_p_value(0.0, 0), 1.0);
    }

    #[test]
    fn event_test_requires_exactly_two_components() {
        let c = Collective::from_labels(Alphabet::binary("A", "B"), &["A"]).unwrap();
        let cc = CombinedCollective {
            components: vec![c.clone(), c.clone(), c],
        };
        assert_eq!(
            event_independence_test(&cc, &IndependenceThresholds::default()).unwrap_err(),
            IndependenceError::NotPairwise(3)
        );
    }

    #[test]
    fn periodic_pair_event_independent_but_not_collective_independent() {
        // Period 4, each pair exactly once: joint frequencies factorize
        // exactly over any whole number of periods, but selecting positions
        // that follow an A leaves only (A,Y) and (B,X).
        let mut l1 = Vec::new();
        let mut l2 = Vec::new();
        for _ in 0..60 {
            l1.extend(["A", "A", "B", "B"]);
            l2.extend(["X", "Y", "X", "Y"]);
        }
        let c1 = Collective::from_labels(Alphabet::binary("A", "B"), &l1).unwrap();
        let c2 = Collective::from_labels(Alphabet::binary("X", "Y"), &l2).unwrap();
        let cc = combine(&c1, &c2).unwrap();

        assert_eq!(dependence_metric(&cc).unwrap(), Frac::ZERO);
        let thresholds = IndependenceThresholds::default();
        let full = event_independence_test(&cc, &thresholds).unwrap();
        assert_eq!(full.verdict, Verdict::Independent);

        let family = joint_builtin_family(&cc);
        let report = collective_independence_test(&cc, &family, 20, &thresholds).unwrap();
        assert_eq!(report.verdict, CollectiveVerdict::NotCollectiveIndependent);
        assert!(report.breaking_selection.is_some(), "{report:?}");
    }

    #[test]
    fn self_pair_fails_already_at_full_stage() {
        let c =
            Collective::sample_iid(Alphabet::binary("A", "B"), &[0.5, 0.5], 50_000, 31).unwrap();
        let cc = combine(&c, &c).unwrap();
        let family = joint_builtin_family(&cc);
        let report =
            collective_independence_test(&cc, &family, 100, &IndependenceThresholds::default())
                .unwrap();
        assert_eq!(report.verdict, CollectiveVerdict::NotCollectiveIndependent);
        assert_eq!(report.breaking_selection.as_deref(), Some("full"));
    }

    #[test]
    fn deviation_csv_has_row_and_column_labels() {
        let cc = pair(&["A", "B"], &["X", "Y"]);
        let report = event_independence_test(&cc, &IndependenceThresholds::default()).unwrap();
        let csv = deviation_matrix_csv(&report);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("s1\\s2,X,Y"));
        assert!(lines.next().unwrap().starts_with("A,"));
        assert!(lines.next().unwrap().starts_with("B,"));
    }
}
