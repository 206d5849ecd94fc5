//! Finite sample sequences over a declared alphabet.
//!
//! A collective here is the finite, operational stand-in for a random
//! sequence: probability statements about it are relative frequencies of its
//! symbols, and every frequency is carried both as an exact count ratio and
//! as a floating value. Convergence toward a limit is replaced by prefix
//! traces with explicit binomial tolerances; randomness is probed through
//! place selections (see [`crate::selection`]).

use std::sync::Arc;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::rational::Frac;
use crate::seed;

/// Index of a symbol within its [`Alphabet`].
pub type SymbolId = u32;

#[derive(Debug, Error, PartialEq)]
pub enum CollectiveError {
    #[error("alphabet must contain at least one symbol")]
    EmptyAlphabet,
    #[error("alphabet symbols must be distinct: `{0}` repeats")]
    DuplicateSymbol(String),
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),
    #[error("sample at position {position} has id {id} outside the alphabet")]
    SampleOutOfRange { position: usize, id: SymbolId },
    #[error("undefined frequency: the collective is empty")]
    EmptyCollective,
    #[error("checkpoints must be nonempty, strictly increasing, and at most N={n}")]
    BadCheckpoints { n: usize },
    #[error("sampling weights must be nonnegative and sum to a positive value")]
    BadWeights,
}

/// Ordered finite set of distinct symbol labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet {
    labels: Vec<String>,
}

impl Alphabet {
    pub fn new<S: Into<String>, I: IntoIterator<Item = S>>(
        labels: I,
    ) -> Result<Self, CollectiveError> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(CollectiveError::EmptyAlphabet);
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(CollectiveError::DuplicateSymbol(l.clone()));
            }
        }
        Ok(Alphabet { labels })
    }

    /// Two-symbol convenience alphabet.
    pub fn binary(a: &str, b: &str) -> Alphabet {
        Alphabet::new([a, b]).expect("distinct labels")
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false // size >= 1 by construction
    }

    pub fn label(&self, id: SymbolId) -> &str {
        &self.labels[id as usize]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<SymbolId> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| i as u32)
    }

    pub fn ids(&self) -> impl Iterator<Item = SymbolId> {
        0..self.labels.len() as u32
    }
}

/// A finite labeled sample sequence over an [`Alphabet`].
///
/// Immutable after construction; cheap to share (the alphabet is behind an
/// `Arc`, selections copy only the kept ids).
#[derive(Debug, Clone, PartialEq)]
pub struct Collective {
    alphabet: Arc<Alphabet>,
    samples: Vec<SymbolId>,
}

impl Collective {
    pub fn new(alphabet: Alphabet, samples: Vec<SymbolId>) -> Result<Self, CollectiveError> {
        Self::with_shared_alphabet(Arc::new(alphabet), samples)
    }

    pub fn with_shared_alphabet(
        alphabet: Arc<Alphabet>,
        samples: Vec<SymbolId>,
    ) -> Result<Self, CollectiveError> {
        let k = alphabet.len() as u32;
        for (i, &id) in samples.iter().enumerate() {
            if id >= k {
                return Err(CollectiveError::SampleOutOfRange {
                    position: i + 1,
                    id,
                });
            }
        }
        Ok(Collective { alphabet, samples })
    }

    /// Build from labels, resolving each against the alphabet.
    pub fn from_labels<S: AsRef<str>>(
        alphabet: Alphabet,
        labels: &[S],
    ) -> Result<Self, CollectiveError> {
        let alphabet = Arc::new(alphabet);
        let samples = labels
            .iter()
            .map(|l| {
                alphabet
                    .index_of(l.as_ref())
                    .ok_or_else(|| CollectiveError::UnknownSymbol(l.as_ref().to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Collective { alphabet, samples })
    }

    /// Seeded i.i.d. collective with the given per-symbol weights.
    pub fn sample_iid(
        alphabet: Alphabet,
        weights: &[f64],
        n: usize,
        seed: u64,
    ) -> Result<Self, CollectiveError> {
        if weights.len() != alphabet.len()
            || weights.iter().any(|w| !w.is_finite() || *w < 0.0)
            || weights.iter().sum::<f64>() <= 0.0
        {
            return Err(CollectiveError::BadWeights);
        }
        let total: f64 = weights.iter().sum();
        let mut rng = seed::stream_rng(seed, "collective/iid", 0);
        let samples = (0..n)
            .map(|_| {
                let mut u = rng.random::<f64>() * total;
                let mut id = 0u32;
                for (i, w) in weights.iter().enumerate() {
                    if u < *w || i == weights.len() - 1 {
                        id = i as u32;
                        break;
                    }
                    u -= w;
                }
                id
            })
            .collect();
        Ok(Collective {
            alphabet: Arc::new(alphabet),
            samples,
        })
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn shared_alphabet(&self) -> Arc<Alphabet> {
        Arc::clone(&self.alphabet)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[SymbolId] {
        &self.samples
    }

    pub fn label_at(&self, index: usize) -> &str {
        self.alphabet.label(self.samples[index])
    }

    /// Per-symbol counts over the whole sequence.
    pub fn counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.alphabet.len()];
        for &id in &self.samples {
            counts[id as usize] += 1;
        }
        counts
    }

    /// Exact relative frequency of `symbol`.
    ///
    /// Errors on an empty collective (the frequency is undefined, not 0) and
    /// on symbols outside the alphabet.
    pub fn relative_frequency(&self, symbol: &str) -> Result<Frac, CollectiveError> {
        if self.samples.is_empty() {
            return Err(CollectiveError::EmptyCollective);
        }
        let id = self
            .alphabet
            .index_of(symbol)
            .ok_or_else(|| CollectiveError::UnknownSymbol(symbol.to_string()))?;
        let count = self.samples.iter().filter(|&&s| s == id).count() as u64;
        Ok(Frac::ratio(count, self.samples.len() as u64))
    }

    /// Counts and frequencies for every symbol of the alphabet.
    pub fn frequency_estimate(&self) -> Result<FrequencyEstimate, CollectiveError> {
        if self.samples.is_empty() {
            return Err(CollectiveError::EmptyCollective);
        }
        let counts = self.counts();
        let n = self.samples.len() as u64;
        let entries = self
            .alphabet
            .labels()
            .iter()
            .zip(&counts)
            .map(|(label, &count)| {
                let exact = Frac::ratio(count, n);
                FrequencyEntry {
                    symbol: label.clone(),
                    count,
                    exact,
                    value: exact.to_f64(),
                }
            })
            .collect();
        Ok(FrequencyEstimate { total: n, entries })
    }

    /// Exact prefix frequencies of `symbol` at each checkpoint.
    pub fn convergence_trace(
        &self,
        symbol: &str,
        checkpoints: &[usize],
    ) -> Result<ConvergenceTrace, CollectiveError> {
        let id = self
            .alphabet
            .index_of(symbol)
            .ok_or_else(|| CollectiveError::UnknownSymbol(symbol.to_string()))?;
        let n = self.samples.len();
        let increasing = checkpoints.windows(2).all(|w| w[0] < w[1]);
        if checkpoints.is_empty()
            || !increasing
            || checkpoints[0] == 0
            || *checkpoints.last().unwrap() > n
        {
            return Err(CollectiveError::BadCheckpoints { n });
        }
        let mut points = Vec::with_capacity(checkpoints.len());
        let mut count = 0u64;
        let mut pos = 0usize;
        for &cp in checkpoints {
            while pos < cp {
                if self.samples[pos] == id {
                    count += 1;
                }
                pos += 1;
            }
            let exact = Frac::ratio(count, cp as u64);
            points.push(TracePoint {
                checkpoint: cp,
                count,
                exact,
                value: exact.to_f64(),
            });
        }
        Ok(ConvergenceTrace {
            symbol: symbol.to_string(),
            points,
        })
    }
}

/// Per-symbol counts and exact frequencies of a collective.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencyEstimate {
    pub total: u64,
    pub entries: Vec<FrequencyEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencyEntry {
    pub symbol: String,
    pub count: u64,
    pub exact: Frac,
    pub value: f64,
}

impl FrequencyEstimate {
    pub fn frequency(&self, symbol: &str) -> Option<Frac> {
        self.entries
            .iter()
            .find(|e| e.symbol == symbol)
            .map(|e| e.exact)
    }

    pub fn count(&self, symbol: &str) -> Option<u64> {
        self.entries
            .iter()
            .find(|e| e.symbol == symbol)
            .map(|e| e.count)
    }
}

/// Running prefix frequency of one symbol at increasing sample sizes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTrace {
    pub symbol: String,
    pub points: Vec<TracePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TracePoint {
    pub checkpoint: usize,
    pub count: u64,
    pub exact: Frac,
    pub value: f64,
}
