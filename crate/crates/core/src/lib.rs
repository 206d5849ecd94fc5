//! Frequency-probability toolkit for the EPR-Bohm experiment.
//!
//! The crate models probability the way an experiment produces it: as
//! relative frequencies in finite sample sequences ("collectives"). On top of
//! that it builds
//!
//! - [`collective`]: sample sequences, exact frequency estimates, convergence
//!   traces, and prefix-measurable place selections with stability reports;
//! - [`independence`]: the operational split between event independence
//!   (joint frequencies factorize) and collective independence (factorization
//!   survives place selections, including cross-component rules);
//! - [`numberplay`]: an exhaustive search for periodic pair sequences that
//!   factorize by accident but break under a selection;
//! - [`epr`]: the trial scheme — a hidden-variable source, per-wing setting
//!   devices with seed streams disjoint from the source, and a catalog of
//!   outcome models (deterministic local responses, the singlet outcome law,
//!   and exactly enumerable table models);
//! - [`bell`]: correlation estimates, the CHSH combination, and the
//!   conditional factorability check with explicit lambda binning;
//! - [`logio`]: CSV round-tripping of trial logs and collectives.
//!
//! Every run is a pure function of its master seed: streams are derived by a
//! keyed hash per (seed, stream, chunk), so parallel and sequential
//! generation produce bit-identical logs.

pub mod bell;
pub mod collective;
pub mod epr;
pub mod independence;
pub mod logio;
pub mod numberplay;
pub mod rational;
pub mod seed;
pub mod selection;

pub use bell::{
    chsh, correlation, factorability_check, factorability_csv, unconditional_factorization,
    AnalysisError, ChshReport, CorrelationEstimate, FactorabilityReport, FactorabilityVerdict,
    SettingQuery,
};
pub use collective::{
    Alphabet, Collective, CollectiveError, ConvergenceTrace, FrequencyEstimate, SymbolId,
};
pub use epr::{
    enumerate_trial_distribution, extract_collective, freedom_of_choice_check, parse_angle,
    run_experiment, run_experiment_sequential, wing_dependence_demo, Chooser, DiscreteTableModel,
    DiscreteTableSpec, FreedomOfChoiceReport, Lambda, ModelError, OutcomeTable, ProjField,
    Projection, ResponseRule, SettingPolicy, SettingSet, SourceModel, TableEntry, TrialLog,
    TrialRecord, WingDependenceReport,
};
pub use independence::{
    collective_independence_test, combine, dependence_metric, deviation_matrix_csv,
    event_independence_test, joint_builtin_family, CollectiveIndependenceReport, CollectiveVerdict,
    CombinedCollective, IndependenceError, IndependenceReport, IndependenceThresholds,
    JointSelection, Verdict,
};
pub use logio::{
    log_to_csv_string, read_collective_csv, read_log_csv, write_collective_csv, write_log_csv,
    LogIoError,
};
pub use numberplay::{find_numberplay_counterexample, NumberplayError, NumberplayWitness};
pub use rational::Frac;
pub use selection::{
    apply_composed, apply_place_selection, builtin_family, stability_report, AfterSymbol,
    PlaceSelection, PrefixCountParity, SeededMask, StabilityReport, Stride,
};
