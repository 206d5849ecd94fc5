//! Place selections: prefix-measurable subsequence rules.
//!
//! A place selection decides, for each position `n`, whether to keep the
//! sample there, looking only at `n` and the samples strictly before it.
//! That restriction is enforced by the trait shape: [`PlaceSelection::keep`]
//! receives the prefix `x_1..x_{n-1}` and nothing else, so a rule cannot
//! peek at the value it is selecting. Frequency stability under a family of
//! such rules is the operational randomness check for a collective.

use serde::Serialize;

use crate::collective::{Alphabet, Collective, CollectiveError, SymbolId};
use crate::rational::Frac;
use crate::seed::splitmix64;

/// Fixed seed for the built-in data-independent mask rule.
pub const MASK_SEED: u64 = 0x5EED_BA5E;

/// A deterministic keep/skip rule over positions of a sample sequence.
///
/// `position` is 1-based; `prefix` holds the samples strictly before it.
pub trait PlaceSelection: Send + Sync {
    fn name(&self) -> String;
    fn keep(&self, position: usize, prefix: &[SymbolId]) -> bool;
}

/// Keep positions `n` with `(n - 1) % k == offset`. `stride(1, 0)` is the
/// identity selection.
#[derive(Debug, Clone)]
pub struct Stride {
    pub k: usize,
    pub offset: usize,
}

impl Stride {
    pub fn new(k: usize, offset: usize) -> Self {
        assert!(k >= 1 && offset < k, "stride requires k >= 1, offset < k");
        Stride { k, offset }
    }
}

impl PlaceSelection for Stride {
    fn name(&self) -> String {
        format!("stride({},{})", self.k, self.offset)
    }

    fn keep(&self, position: usize, _prefix: &[SymbolId]) -> bool {
        (position - 1) % self.k == self.offset
    }
}

/// Keep position `n` when the sample at `n - 1` equals the given symbol.
#[derive(Debug, Clone)]
pub struct AfterSymbol {
    pub symbol: SymbolId,
    pub label: String,
}

impl AfterSymbol {
    pub fn new(alphabet: &Alphabet, symbol: SymbolId) -> Self {
        AfterSymbol {
            symbol,
            label: alphabet.label(symbol).to_string(),
        }
    }
}

impl PlaceSelection for AfterSymbol {
    fn name(&self) -> String {
        format!("after[{}]", self.label)
    }

    fn keep(&self, _position: usize, prefix: &[SymbolId]) -> bool {
        prefix.last() == Some(&self.symbol)
    }
}

/// Keep position `n` when the designated symbol occurs an even number of
/// times in the prefix.
#[derive(Debug, Clone)]
pub struct PrefixCountParity {
    pub symbol: SymbolId,
    pub label: String,
}

impl PrefixCountParity {
    pub fn new(alphabet: &Alphabet, symbol: SymbolId) -> Self {
        PrefixCountParity {
            symbol,
            label: alphabet.label(symbol).to_string(),
        }
    }
}

impl PlaceSelection for PrefixCountParity {
    fn name(&self) -> String {
        format!("parity[{}]", self.label)
    }

    fn keep(&self, _position: usize, prefix: &[SymbolId]) -> bool {
        prefix.iter().filter(|&&s| s == self.symbol).count() % 2 == 0
    }
}

/// Seeded data-independent mask: keeps position `n` when a hash of
/// `(seed, n)` is even. Reads neither the prefix nor the value.
#[derive(Debug, Clone)]
pub struct SeededMask {
    pub seed: u64,
}

impl PlaceSelection for SeededMask {
    fn name(&self) -> String {
        format!("mask[{:#x}]", self.seed)
    }

    fn keep(&self, position: usize, _prefix: &[SymbolId]) -> bool {
        splitmix64(self.seed ^ position as u64) & 1 == 0
    }
}

/// The built-in selection family for an alphabet: strides for k in {2, 3, 5},
/// one after-symbol rule per symbol, prefix-count parity on the first symbol,
/// and the fixed seeded mask.
pub fn builtin_family(alphabet: &Alphabet) -> Vec<Box<dyn PlaceSelection>> {
    let mut family: Vec<Box<dyn PlaceSelection>> = vec![
        Box::new(Stride::new(2, 0)),
        Box::new(Stride::new(3, 0)),
        Box::new(Stride::new(5, 0)),
    ];
    for id in alphabet.ids() {
        family.push(Box::new(AfterSymbol::new(alphabet, id)));
    }
    family.push(Box::new(PrefixCountParity::new(alphabet, 0)));
    family.push(Box::new(SeededMask { seed: MASK_SEED }));
    family
}

/// Apply a place selection, returning the kept subsequence in original order
/// over the same alphabet.
pub fn apply_place_selection(c: &Collective, sel: &dyn PlaceSelection) -> Collective {
    let samples = c.samples();
    let mut kept = Vec::new();
    for n in 1..=samples.len() {
        if sel.keep(n, &samples[..n - 1]) {
            kept.push(samples[n - 1]);
        }
    }
    Collective::with_shared_alphabet(c.shared_alphabet(), kept)
        .expect("subsequence stays within the alphabet")
}

/// Apply `first` then `second` in a single pass: `second` sees the
/// subsequence selected by `first` as its own sequence (positions and prefix
/// are relative to the kept subsequence).
pub fn apply_composed(
    c: &Collective,
    first: &dyn PlaceSelection,
    second: &dyn PlaceSelection,
) -> Collective {
    let samples = c.samples();
    let mut inner: Vec<SymbolId> = Vec::new();
    let mut kept = Vec::new();
    for n in 1..=samples.len() {
        if first.keep(n, &samples[..n - 1]) {
            let value = samples[n - 1];
            if second.keep(inner.len() + 1, &inner) {
                kept.push(value);
            }
            inner.push(value);
        }
    }
    Collective::with_shared_alphabet(c.shared_alphabet(), kept)
        .expect("subsequence stays within the alphabet")
}

/// Frequency stability of a collective under a family of selections.
///
/// For each selection whose subsequence reaches `min_subseq` samples, the
/// report lists per-symbol |subsequence frequency - full frequency| against
/// the binomial tolerance `3 * sqrt(f (1 - f) / M)` where `f` is the full
/// frequency and `M` the subsequence length. Shorter subsequences are
/// reported as skipped, not scored.
pub fn stability_report(
    c: &Collective,
    selections: &[Box<dyn PlaceSelection>],
    min_subseq: usize,
) -> Result<StabilityReport, CollectiveError> {
    let full = c.frequency_estimate()?;
    let n = c.len() as u64;
    let mut entries = Vec::with_capacity(selections.len());
    let mut all_stable = true;
    for sel in selections {
        let sub = apply_place_selection(c, sel.as_ref());
        let m = sub.len() as u64;
        if (m as usize) < min_subseq {
            entries.push(StabilityEntry {
                selection: sel.name(),
                subsequence_len: m,
                status: StabilityStatus::Skipped {
                    min_required: min_subseq as u64,
                },
            });
            continue;
        }
        let sub_counts = sub.counts();
        let mut symbols = Vec::with_capacity(full.entries.len());
        let mut max_deviation = Frac::ZERO;
        let mut stable = true;
        for (id, entry) in full.entries.iter().enumerate() {
            let full_freq = Frac::ratio(entry.count, n);
            let sub_freq = Frac::ratio(sub_counts[id], m);
            let deviation = (sub_freq - full_freq).abs();
            let f = full_freq.to_f64();
            let tolerance = 3.0 * (f * (1.0 - f) / m as f64).sqrt();
            let within = deviation.to_f64() <= tolerance;
            stable &= within;
            if deviation > max_deviation {
                max_deviation = deviation;
            }
            symbols.push(SymbolStability {
                symbol: entry.symbol.clone(),
                full_frequency: full_freq.to_f64(),
                subsequence_frequency: sub_freq.to_f64(),
                deviation: deviation.to_f64(),
                tolerance,
                within,
            });
        }
        all_stable &= stable;
        entries.push(StabilityEntry {
            selection: sel.name(),
            subsequence_len: m,
            status: StabilityStatus::Evaluated {
                symbols,
                max_deviation_exact: max_deviation,
                max_deviation: max_deviation.to_f64(),
                stable,
            },
        });
    }
    Ok(StabilityReport {
        total_len: n,
        min_subseq: min_subseq as u64,
        entries,
        all_stable,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub total_len: u64,
    pub min_subseq: u64,
    pub entries: Vec<StabilityEntry>,
    pub all_stable: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityEntry {
    pub selection: String,
    pub subsequence_len: u64,
    #[serde(flatten)]
    pub status: StabilityStatus,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum StabilityStatus {
    Evaluated {
        symbols: Vec<SymbolStability>,
        max_deviation_exact: Frac,
        max_deviation: f64,
        stable: bool,
    },
    Skipped {
        min_required: u64,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct SymbolStability {
    pub symbol: String,
    pub full_frequency: f64,
    pub subsequence_frequency: f64,
    pub deviation: f64,
    pub tolerance: f64,
    pub within: bool,
}
