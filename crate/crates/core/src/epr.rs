//! The EPR-Bohm trial scheme: a source of correlated pairs carrying a hidden
//! variable, two setting devices, and per-wing measurement outcomes.
//!
//! Each trial j draws a hidden variable, a setting per wing, and outcomes in
//! {-1, +1}, producing one [`TrialRecord`]. The setting choosers consume seed
//! streams disjoint from the hidden-variable stream, so setting freedom holds
//! by construction; any dependence between the wing collectives extracted
//! from the log has to come from the shared hidden variable, not from the
//! choosers.
//!
//! Every model in the catalog has an exact oracle: the angle models have
//! closed-form outcome laws, and the table models are exhaustively
//! enumerable ([`enumerate_trial_distribution`]).

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::collective::{Alphabet, Collective};
use crate::independence::{
    combine, event_independence_test, IndependenceReport, IndependenceThresholds,
};
use crate::rational::Frac;
use crate::seed::{self, stream, CHUNK_TRIALS};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("setting policy mismatch: {0}")]
    PolicyMismatch(String),
    #[error("at least one trial is required")]
    ZeroTrials,
    #[error("unknown projection field `{0}`")]
    UnknownField(String),
    #[error("lambda bin count must be at least 1")]
    BadLambdaBins,
    #[error("the trial log is empty")]
    EmptyLog,
    #[error("no trials at settings pair ({0}, {1})")]
    NoTrialsAtPair(String, String),
}

/// Hidden variable of one trial: an angle in [0, 2pi) or a symbol of a finite
/// alphabet, depending on the model backend.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lambda {
    Angle(f64),
    Sym(u32),
}

/// One round of the experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialRecord {
    /// 1-based trial index.
    pub index: u64,
    pub lambda: Lambda,
    /// Index into the left wing's setting set.
    pub left_setting: u16,
    pub right_setting: u16,
    pub left_outcome: i8,
    pub right_outcome: i8,
}

/// The finite set of settings available to one wing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SettingSet {
    /// Measurement angles in radians.
    Angles(Vec<f64>),
    /// Abstract labels (table-driven models).
    Labels(Vec<String>),
}

impl SettingSet {
    pub fn len(&self) -> usize {
        match self {
            SettingSet::Angles(v) => v.len(),
            SettingSet::Labels(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn label(&self, idx: u16) -> String {
        match self {
            SettingSet::Angles(v) => format!("{}", v[idx as usize]),
            SettingSet::Labels(v) => v[idx as usize].clone(),
        }
    }

    pub fn angle(&self, idx: u16) -> Option<f64> {
        match self {
            SettingSet::Angles(v) => Some(v[idx as usize]),
            SettingSet::Labels(_) => None,
        }
    }

    pub fn labels(&self) -> Vec<String> {
        (0..self.len() as u16).map(|i| self.label(i)).collect()
    }
}

/// How a wing picks its setting at each trial. The chooser sees only its own
/// seed stream and the trial position, never the hidden variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Chooser {
    /// Independent uniform choice over the setting set.
    Uniform,
    /// Always the setting at this index.
    Fixed(u16),
}

/// Setting device of one wing: its setting set plus the seeded chooser.
#[derive(Debug, Clone, PartialEq)]
pub struct SettingPolicy {
    pub set: SettingSet,
    pub chooser: Chooser,
}

impl SettingPolicy {
    pub fn uniform(set: SettingSet) -> Self {
        SettingPolicy {
            set,
            chooser: Chooser::Uniform,
        }
    }

    pub fn fixed(set: SettingSet, idx: u16) -> Self {
        SettingPolicy {
            set,
            chooser: Chooser::Fixed(idx),
        }
    }

    fn validate(&self, wing: &str) -> Result<(), ModelError> {
        if self.set.is_empty() {
            return Err(ModelError::PolicyMismatch(format!(
                "{wing} setting set is empty"
            )));
        }
        if let Chooser::Fixed(i) = self.chooser {
            if (i as usize) >= self.set.len() {
                return Err(ModelError::PolicyMismatch(format!(
                    "{wing} fixed setting index {i} out of range"
                )));
            }
        }
        Ok(())
    }

    fn choose(&self, rng: &mut ChaCha12Rng) -> u16 {
        match self.chooser {
            Chooser::Uniform => rng.random_range(0..self.set.len() as u16),
            Chooser::Fixed(i) => i,
        }
    }

    /// Exact choice probability of each setting, for enumeration.
    pub fn probabilities(&self) -> Vec<Frac> {
        match self.chooser {
            Chooser::Uniform => {
                vec![Frac::new(1, self.set.len() as i64); self.set.len()]
            }
            Chooser::Fixed(i) => (0..self.set.len())
                .map(|j| {
                    if j == i as usize {
                        Frac::ONE
                    } else {
                        Frac::ZERO
                    }
                })
                .collect(),
        }
    }
}

/// Per-wing response map (setting, lambda, noise draw) -> outcome.
///
/// The deterministic part is sign(cos(lambda - setting)), optionally negated;
/// with `flip_prob > 0` the sign is inverted using the wing's noise stream.
/// With `flip_prob == 0` the rule is deterministic and the noise draw is not
/// consumed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseRule {
    pub negate: bool,
    pub flip_prob: f64,
}

impl ResponseRule {
    pub fn sign_cosine() -> Self {
        ResponseRule {
            negate: false,
            flip_prob: 0.0,
        }
    }

    pub fn negated_sign_cosine() -> Self {
        ResponseRule {
            negate: true,
            flip_prob: 0.0,
        }
    }

    pub fn is_deterministic(&self) -> bool {
        self.flip_prob == 0.0
    }

    /// Outcome without noise (the deterministic part of the map).
    pub fn deterministic_outcome(&self, setting: f64, lambda: f64) -> i8 {
        let s = if (lambda - setting).cos() >= 0.0 {
            1
        } else {
            -1
        };
        if self.negate {
            -s
        } else {
            s
        }
    }

    fn respond(&self, setting: f64, lambda: f64, rng: &mut ChaCha12Rng) -> i8 {
        let out = self.deterministic_outcome(setting, lambda);
        if self.flip_prob > 0.0 && rng.random::<f64>() < self.flip_prob {
            -out
        } else {
            out
        }
    }
}

/// Joint outcome probabilities for one (left setting, right setting, lambda)
/// cell, in the order (+,+), (+,-), (-,+), (-,-).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeTable {
    pub pp: Frac,
    pub pm: Frac,
    pub mp: Frac,
    pub mm: Frac,
}

impl OutcomeTable {
    pub fn probs(&self) -> [Frac; 4] {
        [self.pp, self.pm, self.mp, self.mm]
    }

    /// Joint probability of the outcome pair.
    pub fn prob(&self, left: i8, right: i8) -> Frac {
        match (left, right) {
            (1, 1) => self.pp,
            (1, -1) => self.pm,
            (-1, 1) => self.mp,
            (-1, -1) => self.mm,
            _ => Frac::ZERO,
        }
    }

    /// True when the table factorizes into its own marginals exactly.
    pub fn factorizes(&self) -> bool {
        let a_plus = self.pp + self.pm;
        let b_plus = self.pp + self.mp;
        self.pp == a_plus * b_plus
    }
}

/// JSON-facing description of a table-driven model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscreteTableSpec {
    pub lambda_labels: Vec<String>,
    pub lambda_probs: Vec<Frac>,
    pub left_settings: Vec<String>,
    pub right_settings: Vec<String>,
    pub tables: Vec<TableEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableEntry {
    pub left: String,
    pub right: String,
    pub lambda: String,
    #[serde(flatten)]
    pub outcomes: OutcomeTable,
}

/// Lazily precomputed integer sampler for an exact rational distribution:
/// draws k uniform in [0, den) and walks the cumulative numerators.
#[derive(Debug, Clone)]
struct RationalSampler {
    cumulative: Vec<u64>,
    den: u64,
}

impl RationalSampler {
    fn build(probs: &[Frac], what: &str) -> Result<RationalSampler, ModelError> {
        let mut den: i64 = 1;
        for p in probs {
            if p.numer() < 0 {
                return Err(ModelError::InvalidModel(format!(
                    "{what}: probabilities must be nonnegative"
                )));
            }
            den = lcm_checked(den, p.denom()).ok_or_else(|| {
                ModelError::InvalidModel(format!("{what}: denominators too large"))
            })?;
        }
        let total: Frac = probs.iter().copied().sum();
        if total != Frac::ONE {
            return Err(ModelError::InvalidModel(format!(
                "{what}: probabilities sum to {total}, not 1"
            )));
        }
        let mut cumulative = Vec::with_capacity(probs.len());
        let mut acc: u64 = 0;
        for p in probs {
            acc += (p.numer() * (den / p.denom())) as u64;
            cumulative.push(acc);
        }
        Ok(RationalSampler {
            cumulative,
            den: den as u64,
        })
    }

    fn sample(&self, rng: &mut ChaCha12Rng) -> usize {
        let k = rng.random_range(0..self.den);
        self.cumulative.partition_point(|&c| c <= k)
    }
}

fn lcm_checked(a: i64, b: i64) -> Option<i64> {
    let g = gcd(a, b);
    let l = a.checked_mul(b / g)?;
    (l <= u32::MAX as i64).then_some(l)
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// A validated table-driven model over a finite lambda alphabet: tables are
/// indexed [left][right][lambda], probabilities checked to sum to 1 in exact
/// arithmetic, and integer samplers precompiled.
#[derive(Debug, Clone)]
pub struct DiscreteTableModel {
    spec: DiscreteTableSpec,
    lambda_sampler: RationalSampler,
    cell_samplers: Vec<RationalSampler>,
    cell_tables: Vec<OutcomeTable>,
}

impl DiscreteTableModel {
    pub fn from_spec(spec: DiscreteTableSpec) -> Result<Self, ModelError> {
        let nl = spec.lambda_labels.len();
        if nl == 0 {
            return Err(ModelError::InvalidModel("lambda alphabet is empty".into()));
        }
        for (i, l) in spec.lambda_labels.iter().enumerate() {
            if spec.lambda_labels[..i].contains(l) {
                return Err(ModelError::InvalidModel(format!(
                    "lambda label `{l}` repeats"
                )));
            }
        }
        if spec.lambda_probs.len() != nl {
            return Err(ModelError::InvalidModel(
                "lambda_probs length does not match lambda_labels".into(),
            ));
        }
        if spec.left_settings.is_empty() || spec.right_settings.is_empty() {
            return Err(ModelError::InvalidModel("setting lists are empty".into()));
        }
        let lambda_sampler = RationalSampler::build(&spec.lambda_probs, "lambda distribution")?;

        let (na, nb) = (spec.left_settings.len(), spec.right_settings.len());
        let mut cell_tables = vec![None; na * nb * nl];
        for entry in &spec.tables {
            let a = spec
                .left_settings
                .iter()
                .position(|s| s == &entry.left)
                .ok_or_else(|| {
                    ModelError::InvalidModel(format!("unknown left setting `{}`", entry.left))
                })?;
            let b = spec
                .right_settings
                .iter()
                .position(|s| s == &entry.right)
                .ok_or_else(|| {
                    ModelError::InvalidModel(format!("unknown right setting `{}`", entry.right))
                })?;
            let l = spec
                .lambda_labels
                .iter()
                .position(|s| s == &entry.lambda)
                .ok_or_else(|| {
                    ModelError::InvalidModel(format!("unknown lambda label `{}`", entry.lambda))
                })?;
            let idx = (a * nb + b) * nl + l;
            if cell_tables[idx].is_some() {
                return Err(ModelError::InvalidModel(format!(
                    "duplicate table for ({}, {}, {})",
                    entry.left, entry.right, entry.lambda
                )));
            }
            cell_tables[idx] = Some(entry.outcomes);
        }
        let cell_tables: Vec<OutcomeTable> = cell_tables
            .into_iter()
            .enumerate()
            .map(|(idx, t)| {
                t.ok_or_else(|| {
                    let l = idx % nl;
                    let b = (idx / nl) % nb;
                    let a = idx / (nl * nb);
                    ModelError::InvalidModel(format!(
                        "missing table for ({}, {}, {})",
                        spec.left_settings[a], spec.right_settings[b], spec.lambda_labels[l]
                    ))
                })
            })
            .collect::<Result<_, _>>()?;
        let cell_samplers = cell_tables
            .iter()
            .map(|t| RationalSampler::build(&t.probs(), "outcome table"))
            .collect::<Result<_, _>>()?;
        Ok(DiscreteTableModel {
            spec,
            lambda_sampler,
            cell_samplers,
            cell_tables,
        })
    }

    pub fn spec(&self) -> &DiscreteTableSpec {
        &self.spec
    }

    pub fn lambda_labels(&self) -> &[String] {
        &self.spec.lambda_labels
    }

    pub fn lambda_probs(&self) -> &[Frac] {
        &self.spec.lambda_probs
    }

    pub fn table(&self, a: usize, b: usize, l: usize) -> &OutcomeTable {
        let (nb, nl) = (
            self.spec.right_settings.len(),
            self.spec.lambda_labels.len(),
        );
        &self.cell_tables[(a * nb + b) * nl + l]
    }

    /// Whether some (a, b, lambda) table fails to factorize into its own
    /// marginals; a dependent-collectives model must have at least one.
    pub fn has_nonfactorizing_table(&self) -> bool {
        self.cell_tables.iter().any(|t| !t.factorizes())
    }

    fn cell_index(&self, a: u16, b: u16, l: u32) -> usize {
        let (nb, nl) = (
            self.spec.right_settings.len(),
            self.spec.lambda_labels.len(),
        );
        (a as usize * nb + b as usize) * nl + l as usize
    }
}

/// The hidden-variable model driving a run.
#[derive(Debug, Clone)]
pub enum SourceModel {
    /// Uniform angle lambda; per-wing responses, deterministic by default
    /// (left sign(cos), right negated).
    LocalDeterministic {
        left: ResponseRule,
        right: ResponseRule,
    },
    /// Joint outcome law P(A=a, B=b | x, y) = (1 - a b cos(x - y)) / 4 with
    /// exactly uniform marginals. The lambda stream is carried in the log but
    /// the outcome law does not read it: there is no local hidden-variable
    /// account of this law, which is the point of analyzing it.
    QuantumSinglet,
    /// Built-in table fixture whose joint conditionals do not factorize for
    /// one lambda value.
    DependentCollectives(DiscreteTableModel),
    /// User-supplied tables over a finite lambda alphabet.
    DiscreteTable(DiscreteTableModel),
}

impl SourceModel {
    pub fn local_deterministic() -> Self {
        SourceModel::LocalDeterministic {
            left: ResponseRule::sign_cosine(),
            right: ResponseRule::negated_sign_cosine(),
        }
    }

    /// The standard dependent-collectives fixture: two equiprobable lambda
    /// values; at `l0` the outcomes are perfectly anticorrelated coin flips
    /// (joint does not factorize, deviation 1/4), at `l1` they are
    /// independent fair coins.
    pub fn dependent_collectives_fixture() -> Self {
        let spec = DiscreteTableSpec {
            lambda_labels: vec!["l0".into(), "l1".into()],
            lambda_probs: vec![Frac::new(1, 2), Frac::new(1, 2)],
            left_settings: vec!["a0".into()],
            right_settings: vec!["b0".into()],
            tables: vec![
                TableEntry {
                    left: "a0".into(),
                    right: "b0".into(),
                    lambda: "l0".into(),
                    outcomes: OutcomeTable {
                        pp: Frac::ZERO,
                        pm: Frac::new(1, 2),
                        mp: Frac::new(1, 2),
                        mm: Frac::ZERO,
                    },
                },
                TableEntry {
                    left: "a0".into(),
                    right: "b0".into(),
                    lambda: "l1".into(),
                    outcomes: OutcomeTable {
                        pp: Frac::new(1, 4),
                        pm: Frac::new(1, 4),
                        mp: Frac::new(1, 4),
                        mm: Frac::new(1, 4),
                    },
                },
            ],
        };
        SourceModel::DependentCollectives(
            DiscreteTableModel::from_spec(spec).expect("fixture tables are valid"),
        )
    }

    /// Fair independent coin flips on both wings, lambda ignored.
    pub fn coin_flip_fixture() -> Self {
        let spec = DiscreteTableSpec {
            lambda_labels: vec!["l0".into()],
            lambda_probs: vec![Frac::ONE],
            left_settings: vec!["a0".into()],
            right_settings: vec!["b0".into()],
            tables: vec![TableEntry {
                left: "a0".into(),
                right: "b0".into(),
                lambda: "l0".into(),
                outcomes: OutcomeTable {
                    pp: Frac::new(1, 4),
                    pm: Frac::new(1, 4),
                    mp: Frac::new(1, 4),
                    mm: Frac::new(1, 4),
                },
            }],
        };
        SourceModel::DiscreteTable(
            DiscreteTableModel::from_spec(spec).expect("fixture tables are valid"),
        )
    }

    pub fn name(&self) -> &'static str {
        match self {
            SourceModel::LocalDeterministic { .. } => "local_deterministic",
            SourceModel::QuantumSinglet => "quantum_singlet",
            SourceModel::DependentCollectives(_) => "dependent_collectives",
            SourceModel::DiscreteTable(_) => "discrete_table",
        }
    }

    pub fn table_model(&self) -> Option<&DiscreteTableModel> {
        match self {
            SourceModel::DependentCollectives(m) | SourceModel::DiscreteTable(m) => Some(m),
            _ => None,
        }
    }

    fn uses_angles(&self) -> bool {
        matches!(
            self,
            SourceModel::LocalDeterministic { .. } | SourceModel::QuantumSinglet
        )
    }

    fn validate(&self, left: &SettingPolicy, right: &SettingPolicy) -> Result<(), ModelError> {
        left.validate("left")?;
        right.validate("right")?;
        if self.uses_angles() {
            if !matches!(left.set, SettingSet::Angles(_))
                || !matches!(right.set, SettingSet::Angles(_))
            {
                return Err(ModelError::PolicyMismatch(format!(
                    "{} requires angle setting sets",
                    self.name()
                )));
            }
            if let SourceModel::LocalDeterministic { left: l, right: r } = self {
                for rule in [l, r] {
                    if !(0.0..=1.0).contains(&rule.flip_prob) {
                        return Err(ModelError::InvalidModel(
                            "flip_prob must lie in [0, 1]".into(),
                        ));
                    }
                }
            }
        } else {
            let m = self.table_model().unwrap();
            let want_left = SettingSet::Labels(m.spec.left_settings.clone());
            let want_right = SettingSet::Labels(m.spec.right_settings.clone());
            if left.set != want_left || right.set != want_right {
                return Err(ModelError::PolicyMismatch(format!(
                    "{} requires the model's own setting labels",
                    self.name()
                )));
            }
        }
        Ok(())
    }

    fn sample_lambda(&self, rng: &mut ChaCha12Rng) -> Lambda {
        match self {
            SourceModel::LocalDeterministic { .. } | SourceModel::QuantumSinglet => {
                Lambda::Angle(rng.random::<f64>() * TAU)
            }
            SourceModel::DependentCollectives(m) | SourceModel::DiscreteTable(m) => {
                Lambda::Sym(m.lambda_sampler.sample(rng) as u32)
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn respond(
        &self,
        lambda: Lambda,
        left_idx: u16,
        right_idx: u16,
        left_set: &SettingSet,
        right_set: &SettingSet,
        left_noise: &mut ChaCha12Rng,
        right_noise: &mut ChaCha12Rng,
    ) -> (i8, i8) {
        match self {
            SourceModel::LocalDeterministic { left, right } => {
                let lam = match lambda {
                    Lambda::Angle(a) => a,
                    Lambda::Sym(_) => unreachable!("angle backend"),
                };
                let a = left.respond(left_set.angle(left_idx).unwrap(), lam, left_noise);
                let b = right.respond(right_set.angle(right_idx).unwrap(), lam, right_noise);
                (a, b)
            }
            SourceModel::QuantumSinglet => {
                let theta = left_set.angle(left_idx).unwrap() - right_set.angle(right_idx).unwrap();
                let a: i8 = if left_noise.random::<f64>() < 0.5 {
                    1
                } else {
                    -1
                };
                // P(B = -A) = (1 + cos(theta)) / 2 gives E[AB] = -cos(theta)
                // with both marginals exactly 1/2.
                let anti = right_noise.random::<f64>() < (1.0 + theta.cos()) / 2.0;
                (a, if anti { -a } else { a })
            }
            SourceModel::DependentCollectives(m) | SourceModel::DiscreteTable(m) => {
                let l = match lambda {
                    Lambda::Sym(l) => l,
                    Lambda::Angle(_) => unreachable!("discrete backend"),
                };
                // The joint outcome draw consumes the left noise stream.
                let cell = m.cell_index(left_idx, right_idx, l);
                match m.cell_samplers[cell].sample(left_noise) {
                    0 => (1, 1),
                    1 => (1, -1),
                    2 => (-1, 1),
                    _ => (-1, -1),
                }
            }
        }
    }
}

/// A generated (or loaded) sequence of trials plus the declared setting sets
/// and lambda alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialLog {
    pub model_name: String,
    pub master_seed: Option<u64>,
    /// `None` for the continuous (angle) lambda backend.
    pub lambda_labels: Option<Vec<String>>,
    pub left_settings: SettingSet,
    pub right_settings: SettingSet,
    pub records: Vec<TrialRecord>,
}

impl TrialLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn lambda_is_continuous(&self) -> bool {
        self.lambda_labels.is_none()
    }
}

/// Run the experiment: N trials, fully determined by the master seed.
///
/// Generation is chunked ([`CHUNK_TRIALS`] trials per chunk); each chunk
/// derives its own child seed per stream, so chunks are generated in
/// parallel and concatenated with results bit-identical to
/// [`run_experiment_sequential`].
pub fn run_experiment(
    model: &SourceModel,
    left: &SettingPolicy,
    right: &SettingPolicy,
    n: usize,
    master_seed: u64,
) -> Result<TrialLog, ModelError> {
    if n == 0 {
        return Err(ModelError::ZeroTrials);
    }
    model.validate(left, right)?;
    let chunks = n.div_ceil(CHUNK_TRIALS);
    let mut records = Vec::with_capacity(n);
    let chunk_records: Vec<Vec<TrialRecord>> = (0..chunks)
        .into_par_iter()
        .map(|chunk| generate_chunk(model, left, right, master_seed, chunk, n))
        .collect();
    for mut c in chunk_records {
        records.append(&mut c);
    }
    Ok(assemble_log(model, left, right, master_seed, records))
}

/// Reference sequential path: identical chunk protocol, no parallelism.
pub fn run_experiment_sequential(
    model: &SourceModel,
    left: &SettingPolicy,
    right: &SettingPolicy,
    n: usize,
    master_seed: u64,
) -> Result<TrialLog, ModelError> {
    if n == 0 {
        return Err(ModelError::ZeroTrials);
    }
    model.validate(left, right)?;
    let chunks = n.div_ceil(CHUNK_TRIALS);
    let mut records = Vec::with_capacity(n);
    for chunk in 0..chunks {
        records.extend(generate_chunk(model, left, right, master_seed, chunk, n));
    }
    Ok(assemble_log(model, left, right, master_seed, records))
}

fn assemble_log(
    model: &SourceModel,
    left: &SettingPolicy,
    right: &SettingPolicy,
    master_seed: u64,
    records: Vec<TrialRecord>,
) -> TrialLog {
    TrialLog {
        model_name: model.name().to_string(),
        master_seed: Some(master_seed),
        lambda_labels: model.table_model().map(|m| m.spec.lambda_labels.clone()),
        left_settings: left.set.clone(),
        right_settings: right.set.clone(),
        records,
    }
}

fn generate_chunk(
    model: &SourceModel,
    left: &SettingPolicy,
    right: &SettingPolicy,
    master_seed: u64,
    chunk: usize,
    n: usize,
) -> Vec<TrialRecord> {
    let start = chunk * CHUNK_TRIALS;
    let len = CHUNK_TRIALS.min(n - start);
    let chunk_id = chunk as u64;
    let mut lambda_rng = seed::stream_rng(master_seed, stream::LAMBDA, chunk_id);
    let mut left_rng = seed::stream_rng(master_seed, stream::LEFT_SETTING, chunk_id);
    let mut right_rng = seed::stream_rng(master_seed, stream::RIGHT_SETTING, chunk_id);
    let mut left_noise = seed::stream_rng(master_seed, stream::LEFT_NOISE, chunk_id);
    let mut right_noise = seed::stream_rng(master_seed, stream::RIGHT_NOISE, chunk_id);
    let mut records = Vec::with_capacity(len);
    for i in 0..len {
        let lambda = model.sample_lambda(&mut lambda_rng);
        let l = left.choose(&mut left_rng);
        let r = right.choose(&mut right_rng);
        let (a, b) = model.respond(
            lambda,
            l,
            r,
            &left.set,
            &right.set,
            &mut left_noise,
            &mut right_noise,
        );
        records.push(TrialRecord {
            index: (start + i + 1) as u64,
            lambda,
            left_setting: l,
            right_setting: r,
            left_outcome: a,
            right_outcome: b,
        });
    }
    records
}

/// Exhaustive enumeration of the trial distribution of a table model under
/// the given choosers: exact P(lambda, a, b, A, B) for every cell.
pub fn enumerate_trial_distribution(
    model: &DiscreteTableModel,
    left: &SettingPolicy,
    right: &SettingPolicy,
) -> Vec<EnumeratedCell> {
    let left_probs = left.probabilities();
    let right_probs = right.probabilities();
    let mut cells = Vec::new();
    for (a, a_label) in model.spec.left_settings.iter().enumerate() {
        for (b, b_label) in model.spec.right_settings.iter().enumerate() {
            for (l, l_label) in model.spec.lambda_labels.iter().enumerate() {
                let table = model.table(a, b, l);
                for (left_outcome, right_outcome) in [(1i8, 1i8), (1, -1), (-1, 1), (-1, -1)] {
                    let p = model.spec.lambda_probs[l]
                        * left_probs[a]
                        * right_probs[b]
                        * table.prob(left_outcome, right_outcome);
                    cells.push(EnumeratedCell {
                        lambda: l_label.clone(),
                        left_setting: a_label.clone(),
                        right_setting: b_label.clone(),
                        left_outcome,
                        right_outcome,
                        probability: p,
                    });
                }
            }
        }
    }
    cells
}

#[derive(Debug, Clone, Serialize)]
pub struct EnumeratedCell {
    pub lambda: String,
    pub left_setting: String,
    pub right_setting: String,
    pub left_outcome: i8,
    pub right_outcome: i8,
    pub probability: Frac,
}

/// Fields of a trial record that can be projected into a collective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjField {
    Lambda,
    LeftSetting,
    RightSetting,
    LeftOutcome,
    RightOutcome,
}

impl ProjField {
    pub fn parse(s: &str) -> Result<ProjField, ModelError> {
        match s {
            "lambda" => Ok(ProjField::Lambda),
            "left_setting" => Ok(ProjField::LeftSetting),
            "right_setting" => Ok(ProjField::RightSetting),
            "left_outcome" => Ok(ProjField::LeftOutcome),
            "right_outcome" => Ok(ProjField::RightOutcome),
            other => Err(ModelError::UnknownField(other.to_string())),
        }
    }
}

/// A tuple of trial fields to project, with the lambda binning used by the
/// continuous backend (discrete lambda values are their own bins).
#[derive(Debug, Clone)]
pub struct Projection {
    pub fields: Vec<ProjField>,
    pub lambda_bins: usize,
}

impl Projection {
    pub fn new(fields: Vec<ProjField>, lambda_bins: usize) -> Self {
        Projection {
            fields,
            lambda_bins,
        }
    }
}

/// Equal-width bin of an angle in [0, 2pi).
pub fn lambda_bin(angle: f64, bins: usize) -> usize {
    let frac = angle / TAU;
    ((frac * bins as f64) as usize).min(bins - 1)
}

/// Label of a lambda bin, zero-padded to the bin-count width.
pub fn lambda_bin_label(bin: usize, bins: usize) -> String {
    let width = (bins.max(2) - 1).to_string().len();
    format!("L{bin:0width$}")
}

fn field_labels(log: &TrialLog, field: ProjField, bins: usize) -> Vec<String> {
    match field {
        ProjField::Lambda => match &log.lambda_labels {
            Some(labels) => labels.clone(),
            None => (0..bins).map(|b| lambda_bin_label(b, bins)).collect(),
        },
        ProjField::LeftSetting => log.left_settings.labels(),
        ProjField::RightSetting => log.right_settings.labels(),
        ProjField::LeftOutcome | ProjField::RightOutcome => {
            vec!["-1".to_string(), "+1".to_string()]
        }
    }
}

fn field_value(record: &TrialRecord, field: ProjField, bins: usize) -> u32 {
    match field {
        ProjField::Lambda => match record.lambda {
            Lambda::Angle(a) => lambda_bin(a, bins) as u32,
            Lambda::Sym(s) => s,
        },
        ProjField::LeftSetting => record.left_setting as u32,
        ProjField::RightSetting => record.right_setting as u32,
        ProjField::LeftOutcome => (record.left_outcome == 1) as u32,
        ProjField::RightOutcome => (record.right_outcome == 1) as u32,
    }
}

/// Project trial fields into a collective over the product alphabet of the
/// projected fields, index-aligned with the log.
pub fn extract_collective(
    log: &TrialLog,
    projection: &Projection,
) -> Result<Collective, ModelError> {
    if projection.fields.is_empty() {
        return Err(ModelError::UnknownField("(empty projection)".into()));
    }
    if projection.lambda_bins == 0 {
        return Err(ModelError::BadLambdaBins);
    }
    if log.is_empty() {
        return Err(ModelError::EmptyLog);
    }
    let bins = projection.lambda_bins;
    let per_field: Vec<Vec<String>> = projection
        .fields
        .iter()
        .map(|&f| field_labels(log, f, bins))
        .collect();
    let mut labels = vec![String::new()];
    for fl in &per_field {
        let mut next = Vec::with_capacity(labels.len() * fl.len());
        for prefix in &labels {
            for l in fl {
                if prefix.is_empty() {
                    next.push(l.clone());
                } else {
                    next.push(format!("{prefix}|{l}"));
                }
            }
        }
        labels = next;
    }
    let alphabet = Arc::new(Alphabet::new(labels).expect("product labels are distinct"));
    let sizes: Vec<u32> = per_field.iter().map(|f| f.len() as u32).collect();
    let samples = log
        .records
        .iter()
        .map(|r| {
            let mut id = 0u32;
            for (i, &f) in projection.fields.iter().enumerate() {
                id = id * sizes[i] + field_value(r, f, bins);
            }
            id
        })
        .collect();
    Ok(Collective::with_shared_alphabet(alphabet, samples)
        .expect("field values stay within their alphabets"))
}

/// Independence check between each wing's setting collective and the
/// (binned) hidden-variable collective. With the built-in policies this must
/// come out independent: the choosers never see the lambda stream.
#[derive(Debug, Clone, Serialize)]
pub struct FreedomOfChoiceReport {
    pub lambda_bins: usize,
    pub left: IndependenceReport,
    pub right: IndependenceReport,
    pub both_independent: bool,
}

pub fn freedom_of_choice_check(
    log: &TrialLog,
    lambda_bins: usize,
    thresholds: &IndependenceThresholds,
) -> Result<FreedomOfChoiceReport, ModelError> {
    let lambda = extract_collective(log, &Projection::new(vec![ProjField::Lambda], lambda_bins))?;
    let left = extract_collective(
        log,
        &Projection::new(vec![ProjField::LeftSetting], lambda_bins),
    )?;
    let right = extract_collective(
        log,
        &Projection::new(vec![ProjField::RightSetting], lambda_bins),
    )?;
    let left_report = event_independence_test(&combine(&left, &lambda).unwrap(), thresholds)
        .expect("pairwise by construction");
    let right_report = event_independence_test(&combine(&right, &lambda).unwrap(), thresholds)
        .expect("pairwise by construction");
    let both = left_report.verdict == crate::independence::Verdict::Independent
        && right_report.verdict == crate::independence::Verdict::Independent;
    Ok(FreedomOfChoiceReport {
        lambda_bins,
        left: left_report,
        right: right_report,
        both_independent: both,
    })
}

/// Dependence of the wing collectives through the shared hidden variable.
///
/// `setting_lambda_pairs` tests the (setting, lambda) collective of one wing
/// against the other's: the shared lambda coordinate makes them dependent for
/// any model. `outcomes_overall` and `outcomes_by_settings` test the
/// outcome-only collectives, where dependence appears exactly when the model
/// couples the wings.
#[derive(Debug, Clone, Serialize)]
pub struct WingDependenceReport {
    pub lambda_bins: usize,
    pub setting_lambda_pairs: IndependenceReport,
    pub outcomes_overall: IndependenceReport,
    pub outcomes_by_settings: Vec<OutcomeDependenceAtPair>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OutcomeDependenceAtPair {
    pub left_setting: String,
    pub right_setting: String,
    pub trials: u64,
    pub dependence_metric: Frac,
    pub report: IndependenceReport,
}

pub fn wing_dependence_demo(
    log: &TrialLog,
    lambda_bins: usize,
    thresholds: &IndependenceThresholds,
) -> Result<WingDependenceReport, ModelError> {
    let left_pair = extract_collective(
        log,
        &Projection::new(vec![ProjField::LeftSetting, ProjField::Lambda], lambda_bins),
    )?;
    let right_pair = extract_collective(
        log,
        &Projection::new(
            vec![ProjField::RightSetting, ProjField::Lambda],
            lambda_bins,
        ),
    )?;
    let setting_lambda_pairs =
        event_independence_test(&combine(&left_pair, &right_pair).unwrap(), thresholds)
            .expect("pairwise by construction");

    let left_out = extract_collective(
        log,
        &Projection::new(vec![ProjField::LeftOutcome], lambda_bins),
    )?;
    let right_out = extract_collective(
        log,
        &Projection::new(vec![ProjField::RightOutcome], lambda_bins),
    )?;
    let outcomes_overall =
        event_independence_test(&combine(&left_out, &right_out).unwrap(), thresholds)
            .expect("pairwise by construction");

    let mut outcomes_by_settings = Vec::new();
    for l in 0..log.left_settings.len() as u16 {
        for r in 0..log.right_settings.len() as u16 {
            let kept: Vec<&TrialRecord> = log
                .records
                .iter()
                .filter(|t| t.left_setting == l && t.right_setting == r)
                .collect();
            if kept.is_empty() {
                continue;
            }
            let outcome_alphabet = Alphabet::binary("-1", "+1");
            let lo = Collective::new(
                outcome_alphabet.clone(),
                kept.iter().map(|t| (t.left_outcome == 1) as u32).collect(),
            )
            .unwrap();
            let ro = Collective::new(
                outcome_alphabet,
                kept.iter().map(|t| (t.right_outcome == 1) as u32).collect(),
            )
            .unwrap();
            let cc = combine(&lo, &ro).unwrap();
            let report = event_independence_test(&cc, thresholds).unwrap();
            let metric = crate::independence::dependence_metric(&cc).unwrap();
            outcomes_by_settings.push(OutcomeDependenceAtPair {
                left_setting: log.left_settings.label(l),
                right_setting: log.right_settings.label(r),
                trials: kept.len() as u64,
                dependence_metric: metric,
                report,
            });
        }
    }
    Ok(WingDependenceReport {
        lambda_bins,
        setting_lambda_pairs,
        outcomes_overall,
        outcomes_by_settings,
    })
}

/// Parse an angle given as a plain float or a multiple of pi, e.g. `0.25`,
/// `pi`, `pi/4`, `3pi/4`, `-pi/2`.
pub fn parse_angle(s: &str) -> Result<f64, String> {
    let t = s.trim();
    if let Some(pos) = t.find("pi") {
        let (coef_str, rest) = (&t[..pos], &t[pos + 2..]);
        let coef: f64 = match coef_str.trim() {
            "" => 1.0,
            "-" => -1.0,
            c => c
                .parse()
                .map_err(|_| format!("bad angle coefficient in `{s}`"))?,
        };
        let div: f64 = match rest.trim() {
            "" => 1.0,
            r => {
                let r = r
                    .strip_prefix('/')
                    .ok_or_else(|| format!("bad angle suffix in `{s}`"))?;
                let d: f64 = r
                    .trim()
                    .parse()
                    .map_err(|_| format!("bad divisor in `{s}`"))?;
                if d == 0.0 {
                    return Err(format!("zero divisor in `{s}`"));
                }
                d
            }
        };
        Ok(coef * PI / div)
    } else {
        t.parse().map_err(|_| format!("bad angle `{s}`"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::independence::Verdict;

    fn angle_policy(angles: Vec<f64>) -> SettingPolicy {
        SettingPolicy::uniform(SettingSet::Angles(angles))
    }

    fn table_policies(m: &DiscreteTableModel) -> (SettingPolicy, SettingPolicy) {
        (
            SettingPolicy::uniform(SettingSet::Labels(m.spec().left_settings.clone())),
            SettingPolicy::uniform(SettingSet::Labels(m.spec().right_settings.clone())),
        )
    }

    #[test]
    fn singlet_with_equal_settings_anticorrelates_every_trial() {
        let left = SettingPolicy::fixed(SettingSet::Angles(vec![1.1]), 0);
        let right = SettingPolicy::fixed(SettingSet::Angles(vec![1.1]), 0);
        let log = run_experiment(&SourceModel::QuantumSinglet, &left, &right, 20_000, 7).unwrap();
        assert!(log
            .records
            .iter()
            .all(|t| t.left_outcome == -t.right_outcome));
    }

    #[test]
    fn singlet_marginals_and_correlations_match_the_outcome_law() {
        let left = angle_policy(vec![0.0, std::f64::consts::FRAC_PI_2]);
        let right = angle_policy(vec![std::f64::consts::FRAC_PI_4, 2.0]);
        let n = 200_000;
        let log = run_experiment(&SourceModel::QuantumSinglet, &left, &right, n, 100).unwrap();
        for l in 0..2u16 {
            for r in 0..2u16 {
                let trials: Vec<&TrialRecord> = log
                    .records
                    .iter()
                    .filter(|t| t.left_setting == l && t.right_setting == r)
                    .collect();
                let m = trials.len() as f64;
                assert!(m > 0.0);
                let plus_left = trials.iter().filter(|t| t.left_outcome == 1).count() as f64 / m;
                let plus_right = trials.iter().filter(|t| t.right_outcome == 1).count() as f64 / m;
                let tol = 3.0 * (0.25 / m).sqrt();
                assert!((plus_left - 0.5).abs() <= tol, "left marginal {plus_left}");
                assert!(
                    (plus_right - 0.5).abs() <= tol,
                    "right marginal {plus_right}"
                );

                let e: f64 = trials
                    .iter()
                    .map(|t| (t.left_outcome as i32 * t.right_outcome as i32) as f64)
                    .sum::<f64>()
                    / m;
                let theta =
                    log.left_settings.angle(l).unwrap() - log.right_settings.angle(r).unwrap();
                let target = -theta.cos();
                assert!(
                    (e - target).abs() <= 4.0 * (1.0 / m).sqrt(),
                    "E({l},{r}) = {e}, want {target}"
                );
            }
        }
    }

    #[test]
    fn local_deterministic_matches_quadrature_sawtooth() {
        // Quadrature oracle over lambda for E[A B]; the closed sawtooth form
        // -(1 - 2|a-b|/pi) is itself validated against the integral.
        let a = 0.3;
        let b = 1.9;
        let grid = 400_000;
        let mut quad = 0.0;
        let rule_a = ResponseRule::sign_cosine();
        let rule_b = ResponseRule::negated_sign_cosine();
        for i in 0..grid {
            let lam = (i as f64 + 0.5) / grid as f64 * TAU;
            quad += (rule_a.deterministic_outcome(a, lam) as f64)
                * (rule_b.deterministic_outcome(b, lam) as f64);
        }
        quad /= grid as f64;
        let sawtooth = -(1.0 - 2.0 * (a - b).abs() / PI);
        assert!((quad - sawtooth).abs() < 1e-3, "quad {quad} vs {sawtooth}");

        let left = SettingPolicy::fixed(SettingSet::Angles(vec![a]), 0);
        let right = SettingPolicy::fixed(SettingSet::Angles(vec![b]), 0);
        let n = 200_000;
        let log =
            run_experiment(&SourceModel::local_deterministic(), &left, &right, n, 1234).unwrap();
        let e: f64 = log
            .records
            .iter()
            .map(|t| (t.left_outcome as i32 * t.right_outcome as i32) as f64)
            .sum::<f64>()
            / n as f64;
        assert!(
            (e - quad).abs() <= 4.0 * (1.0 / n as f64).sqrt(),
            "empirical {e} vs quadrature {quad}"
        );
    }

    #[test]
    fn single_lambda_deterministic_table_is_hand_computable() {
        // One lambda value, one setting per wing, outcome always (+1, -1).
        let spec = DiscreteTableSpec {
            lambda_labels: vec!["l0".into()],
            lambda_probs: vec![Frac::ONE],
            left_settings: vec!["a0".into()],
            right_settings: vec!["b0".into()],
            tables: vec![TableEntry {
                left: "a0".into(),
                right: "b0".into(),
                lambda: "l0".into(),
                outcomes: OutcomeTable {
                    pp: Frac::ZERO,
                    pm: Frac::ONE,
                    mp: Frac::ZERO,
                    mm: Frac::ZERO,
                },
            }],
        };
        let model = SourceModel::DiscreteTable(DiscreteTableModel::from_spec(spec).unwrap());
        let (left, right) = table_policies(model.table_model().unwrap());
        let log = run_experiment(&model, &left, &right, 10, 5).unwrap();
        for (i, t) in log.records.iter().enumerate() {
            assert_eq!(t.index, i as u64 + 1);
            assert_eq!(t.lambda, Lambda::Sym(0));
            assert_eq!((t.left_setting, t.right_setting), (0, 0));
            assert_eq!((t.left_outcome, t.right_outcome), (1, -1));
        }
    }

    #[test]
    fn invalid_tables_fail_before_any_trial() {
        let spec = DiscreteTableSpec {
            lambda_labels: vec!["l0".into()],
            lambda_probs: vec![Frac::new(1, 2)], // does not sum to 1
            left_settings: vec!["a0".into()],
            right_settings: vec!["b0".into()],
            tables: vec![TableEntry {
                left: "a0".into(),
                right: "b0".into(),
                lambda: "l0".into(),
                outcomes: OutcomeTable {
                    pp: Frac::ONE,
                    pm: Frac::ZERO,
                    mp: Frac::ZERO,
                    mm: Frac::ZERO,
                },
            }],
        };
        assert!(matches!(
            DiscreteTableModel::from_spec(spec),
            Err(ModelError::InvalidModel(_))
        ));

        let bad_cell = DiscreteTableSpec {
            lambda_labels: vec!["l0".into()],
            lambda_probs: vec![Frac::ONE],
            left_settings: vec!["a0".into()],
            right_settings: vec!["b0".into()],
            tables: vec![TableEntry {
                left: "a0".into(),
                right: "b0".into(),
                lambda: "l0".into(),
                outcomes: OutcomeTable {
                    pp: Frac::new(1, 3),
                    pm: Frac::new(1, 3),
                    mp: Frac::new(1, 3),
                    mm: Frac::new(1, 3),
                },
            }],
        };
        assert!(matches!(
            DiscreteTableModel::from_spec(bad_cell),
            Err(ModelError::InvalidModel(_))
        ));
    }

    #[test]
    fn same_seed_gives_identical_logs_and_parallel_matches_sequential() {
        let left = angle_policy(vec![0.0, 1.0]);
        let right = angle_policy(vec![0.5, 2.5]);
        let n = 3 * CHUNK_TRIALS + 17; // spans several chunks
        let model = SourceModel::QuantumSinglet;
        let a = run_experiment(&model, &left, &right, n, 42).unwrap();
        let b = run_experiment(&model, &left, &right, n, 42).unwrap();
        let c = run_experiment_sequential(&model, &left, &right, n, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        let d = run_experiment(&model, &left, &right, n, 43).unwrap();
        assert_ne!(a, d);
    }

    #[test]
    fn discrete_table_frequencies_match_enumeration() {
        let model = SourceModel::dependent_collectives_fixture();
        let tm = model.table_model().unwrap();
        let (left, right) = table_policies(tm);
        let n = 100_000;
        let log = run_experiment(&model, &left, &right, n, 2024).unwrap();
        let cells = enumerate_trial_distribution(tm, &left, &right);
        for cell in cells {
            let count = log
                .records
                .iter()
                .filter(|t| {
                    t.lambda
                        == Lambda::Sym(
                            tm.lambda_labels()
                                .iter()
                                .position(|l| *l == cell.lambda)
                                .unwrap() as u32,
                        )
                        && t.left_outcome == cell.left_outcome
                        && t.right_outcome == cell.right_outcome
                })
                .count() as f64;
            let p = cell.probability.to_f64();
            let freq = count / n as f64;
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            assert!(
                (freq - p).abs() <= 4.0 * sigma,
                "cell {cell:?}: freq {freq} vs p {p}"
            );
        }
    }

    #[test]
    fn extracted_outcome_frequencies_match_enumerated_marginals() {
        // frequency_estimate on the outcome-pair projection against the
        // enumeration oracle, marginalized over lambda.
        let model = SourceModel::dependent_collectives_fixture();
        let tm = model.table_model().unwrap();
        let (left, right) = table_policies(tm);
        let n = 100_000;
        let log = run_experiment(&model, &left, &right, n, 314).unwrap();
        let c = extract_collective(
            &log,
            &Projection::new(vec![ProjField::LeftOutcome, ProjField::RightOutcome], 1),
        )
        .unwrap();
        let est = c.frequency_estimate().unwrap();
        let cells = enumerate_trial_distribution(tm, &left, &right);
        for (a, b) in [(1i8, 1i8), (1, -1), (-1, 1), (-1, -1)] {
            let p: f64 = cells
                .iter()
                .filter(|c| c.left_outcome == a && c.right_outcome == b)
                .map(|c| c.probability.to_f64())
                .sum();
            let label = format!(
                "{}|{}",
                if a == 1 { "+1" } else { "-1" },
                if b == 1 { "+1" } else { "-1" }
            );
            let freq = est.frequency(&label).unwrap().to_f64();
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            assert!(
                (freq - p).abs() <= 4.0 * sigma,
                "cell {label}: {freq} vs enumerated {p}"
            );
        }
    }

    #[test]
    fn extraction_projects_fields_and_errors_on_unknown() {
        let model = SourceModel::coin_flip_fixture();
        let (left, right) = table_policies(model.table_model().unwrap());
        let log = run_experiment(&model, &left, &right, 100, 3).unwrap();
        let c = extract_collective(
            &log,
            &Projection::new(
                vec![
                    ProjField::LeftSetting,
                    ProjField::Lambda,
                    ProjField::RightSetting,
                ],
                64,
            ),
        )
        .unwrap();
        assert_eq!(c.len(), 100);
        assert_eq!(c.alphabet().len(), 1); // 1 setting x 1 lambda x 1 setting
        assert_eq!(c.label_at(0), "a0|l0|b0");

        assert_eq!(
            ProjField::parse("sideways").unwrap_err(),
            ModelError::UnknownField("sideways".into())
        );
    }

    #[test]
    fn constant_outcome_model_extracts_constant_collective() {
        let spec = DiscreteTableSpec {
            lambda_labels: vec!["l0".into()],
            lambda_probs: vec![Frac::ONE],
            left_settings: vec!["a0".into()],
            right_settings: vec!["b0".into()],
            tables: vec![TableEntry {
                left: "a0".into(),
                right: "b0".into(),
                lambda: "l0".into(),
                outcomes: OutcomeTable {
                    pp: Frac::ONE,
                    pm: Frac::ZERO,
                    mp: Frac::ZERO,
                    mm: Frac::ZERO,
                },
            }],
        };
        let model = SourceModel::DiscreteTable(DiscreteTableModel::from_spec(spec).unwrap());
        let (left, right) = table_policies(model.table_model().unwrap());
        let log = run_experiment(&model, &left, &right, 50, 1).unwrap();
        let c =
            extract_collective(&log, &Projection::new(vec![ProjField::LeftOutcome], 64)).unwrap();
        assert_eq!(c.relative_frequency("+1").unwrap(), Frac::ONE);
    }

    #[test]
    fn freedom_of_choice_holds_for_builtin_policies() {
        let left = angle_policy(vec![0.0, std::f64::consts::FRAC_PI_2]);
        let right = angle_policy(vec![std::f64::consts::FRAC_PI_4, 2.2]);
        let log =
            run_experiment(&SourceModel::QuantumSinglet, &left, &right, 100_000, 271820).unwrap();
        let report = freedom_of_choice_check(&log, 64, &IndependenceThresholds::default()).unwrap();
        assert!(
            report.both_independent,
            "left {:?} right {:?}",
            report.left.verdict, report.right.verdict
        );
    }

    #[test]
    fn adversarial_setting_rewrite_is_caught() {
        // Rewire the log so the left setting is a sign function of lambda;
        // the checker must flag dependence. The fixture law puts mass 1/K on
        // (setting 0, lower-half bin) versus a product of 1/(2K).
        let left = angle_policy(vec![0.0, std::f64::consts::FRAC_PI_2]);
        let right = angle_policy(vec![std::f64::consts::FRAC_PI_4, 2.2]);
        let mut log =
            run_experiment(&SourceModel::QuantumSinglet, &left, &right, 100_000, 13).unwrap();
        for t in &mut log.records {
            let angle = match t.lambda {
                Lambda::Angle(a) => a,
                Lambda::Sym(_) => unreachable!(),
            };
            t.left_setting = if angle < PI { 0 } else { 1 };
        }
        let report = freedom_of_choice_check(&log, 8, &IndependenceThresholds::default()).unwrap();
        assert_eq!(report.left.verdict, Verdict::Dependent);
        // Exact fixture law: deviation 1/(2K) per occupied cell.
        assert!((report.left.max_deviation - 1.0 / 16.0).abs() < 0.01);
        assert_eq!(report.right.verdict, Verdict::Independent);
    }

    #[test]
    fn single_setting_wing_is_trivially_independent() {
        let left = SettingPolicy::fixed(SettingSet::Angles(vec![0.7]), 0);
        let right = angle_policy(vec![0.1, 1.3]);
        let log = run_experiment(&SourceModel::QuantumSinglet, &left, &right, 20_000, 8).unwrap();
        let report = freedom_of_choice_check(&log, 16, &IndependenceThresholds::default()).unwrap();
        assert_eq!(report.left.verdict, Verdict::Independent);
        assert_eq!(report.left.max_deviation_exact, Frac::ZERO);
    }

    #[test]
    fn wing_dependence_shows_up_at_equal_settings() {
        let left = SettingPolicy::fixed(SettingSet::Angles(vec![0.4]), 0);
        let right = SettingPolicy::fixed(SettingSet::Angles(vec![0.4]), 0);
        let n = 100_000;
        let log = run_experiment(&SourceModel::QuantumSinglet, &left, &right, n, 555).unwrap();
        let report = wing_dependence_demo(&log, 64, &IndependenceThresholds::default()).unwrap();
        assert_eq!(report.setting_lambda_pairs.verdict, Verdict::Dependent);
        assert_eq!(report.outcomes_overall.verdict, Verdict::Dependent);
        let at_pair = &report.outcomes_by_settings[0];
        let sigma = (0.25 / at_pair.trials as f64).sqrt();
        assert!(
            (at_pair.dependence_metric.to_f64() - 0.25).abs() <= 4.0 * sigma,
            "metric {}",
            at_pair.dependence_metric
        );
    }

    #[test]
    fn lambda_ignoring_model_has_independent_wings() {
        let model = SourceModel::coin_flip_fixture();
        let (left, right) = table_policies(model.table_model().unwrap());
        let log = run_experiment(&model, &left, &right, 100_000, 909).unwrap();
        let report = wing_dependence_demo(&log, 8, &IndependenceThresholds::default()).unwrap();
        assert_eq!(report.outcomes_overall.verdict, Verdict::Independent);
    }

    #[test]
    fn dependent_collectives_metric_matches_enumeration() {
        // Pooled over the two lambda values: joint P(+,-) = 1/2*1/2 + 1/2*1/4
        // = 3/8, marginals are 1/2, so the pooled outcome deviation is 1/8.
        let model = SourceModel::dependent_collectives_fixture();
        let (left, right) = table_policies(model.table_model().unwrap());
        let n = 100_000;
        let log = run_experiment(&model, &left, &right, n, 77).unwrap();
        let report = wing_dependence_demo(&log, 8, &IndependenceThresholds::default()).unwrap();
        let metric = report.outcomes_by_settings[0].dependence_metric.to_f64();
        let sigma = (0.25 / n as f64).sqrt();
        assert!(
            (metric - 0.125).abs() <= 4.0 * sigma,
            "pooled metric {metric}"
        );
        assert_eq!(report.outcomes_overall.verdict, Verdict::Dependent);
    }

    #[test]
    fn zero_trials_and_policy_mismatch_are_rejected() {
        let left = angle_policy(vec![0.0]);
        let right = angle_policy(vec![0.0]);
        assert_eq!(
            run_experiment(&SourceModel::QuantumSinglet, &left, &right, 0, 1).unwrap_err(),
            ModelError::ZeroTrials
        );
        let labels = SettingPolicy::uniform(SettingSet::Labels(vec!["x".into()]));
        assert!(matches!(
            run_experiment(&SourceModel::QuantumSinglet, &labels, &right, 10, 1).unwrap_err(),
            ModelError::PolicyMismatch(_)
        ));
    }

    #[test]
    fn angles_parse_in_pi_notation() {
        assert_eq!(parse_angle("0").unwrap(), 0.0);
        assert_eq!(parse_angle("pi").unwrap(), PI);
        assert_eq!(parse_angle("pi/2").unwrap(), PI / 2.0);
        assert_eq!(parse_angle("3pi/4").unwrap(), 3.0 * PI / 4.0);
        assert_eq!(parse_angle("-pi/2").unwrap(), -PI / 2.0);
        assert_eq!(parse_angle("1.25").unwrap(), 1.25);
        assert!(parse_angle("pi/0").is_err());
        assert!(parse_angle("four").is_err());
    }
}
