//! Value types shared by every module: symbols, vocabularies, log-space
//! probabilities, alignments and utterances.

use std::fmt;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An index into a [`Vocabulary`]. Id 0 is the blank; ids `1..=V` are labels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Symbol(pub u32);

impl Symbol {
    pub const BLANK: Symbol = Symbol(0);

    pub fn label(id: u32) -> Symbol {
        debug_assert!(id >= 1, "label ids start at 1");
        Symbol(id)
    }

    pub fn is_blank(self) -> bool {
        self.0 == 0
    }

    pub fn id(self) -> u32 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Convenience for building label sequences in tests and examples.
pub fn labels(ids: &[u32]) -> Vec<Symbol> {
    ids.iter().map(|&i| Symbol(i)).collect()
}

/// A closed label inventory of `num_labels` non-blank labels plus one blank.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Vocabulary {
    num_labels: usize,
}

impl Vocabulary {
    pub fn new(num_labels: usize) -> Result<Self> {
        if num_labels == 0 {
            return Err(Error::Config("vocabulary needs at least one label".into()));
        }
        Ok(Vocabulary { num_labels })
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    /// Labels plus blank.
    pub fn size(&self) -> usize {
        self.num_labels + 1
    }

    pub fn labels(&self) -> impl Iterator<Item = Symbol> {
        (1..=self.num_labels as u32).map(Symbol)
    }

    pub fn symbols(&self) -> impl Iterator<Item = Symbol> {
        (0..=self.num_labels as u32).map(Symbol)
    }

    pub fn contains(&self, s: Symbol) -> bool {
        s.index() <= self.num_labels
    }

    pub fn check(&self, s: Symbol) -> Result<()> {
        if self.contains(s) {
            Ok(())
        } else {
            Err(Error::InvalidSymbol {
                id: s.0,
                num_labels: self.num_labels,
            })
        }
    }

    /// Validates a label sequence: every id in `1..=V`.
    pub fn check_labels(&self, seq: &[Symbol]) -> Result<()> {
        for &s in seq {
            self.check(s)?;
            if s.is_blank() {
                return Err(Error::InvalidSymbol {
                    id: 0,
                    num_labels: self.num_labels,
                });
            }
        }
        Ok(())
    }

    /// All label sequences of length `0..=max_len`, shortest first, then
    /// lexicographic.
    pub fn sequences_up_to(&self, max_len: usize) -> Vec<Vec<Symbol>> {
        let mut out = vec![Vec::new()];
        let mut layer: Vec<Vec<Symbol>> = vec![Vec::new()];
        for _ in 0..max_len {
            let mut next = Vec::with_capacity(layer.len() * self.num_labels);
            for prefix in &layer {
                for s in self.labels() {
                    let mut w = prefix.clone();
                    w.push(s);
                    next.push(w);
                }
            }
            out.extend(next.iter().cloned());
            layer = next;
        }
        out
    }
}

/// A natural-log probability. `-inf` is probability zero.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LogProb(pub f64);

impl LogProb {
    pub const ZERO: LogProb = LogProb(f64::NEG_INFINITY);
    pub const ONE: LogProb = LogProb(0.0);

    pub fn from_prob(p: f64) -> LogProb {
        LogProb(p.ln())
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn prob(self) -> f64 {
        self.0.exp()
    }

    pub fn is_zero(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }

    pub fn log_add(self, other: LogProb) -> LogProb {
        LogProb(log_add(self.0, other.0))
    }
}

impl std::ops::Add for LogProb {
    type Output = LogProb;

    /// Log-space multiplication; `-inf` is absorbing.
    fn add(self, rhs: LogProb) -> LogProb {
        LogProb(log_mul(self.0, rhs.0))
    }
}

/// `ln(exp(a) + exp(b))` without overflow; `-inf` is the identity.
pub fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Log-space product with `-inf` absorbing (never produces NaN from `-inf + inf`).
pub fn log_mul(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY || b == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        a + b
    }
}

/// Log-sum-exp over a slice.
pub fn log_sum(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Number of valid alignments of `u` labels to `t` frames: interleavings of
/// `t` blanks and `u` labels that end in a blank, i.e. `C(t + u - 1, u)`.
pub fn count_alignments(frames: usize, num_labels: usize) -> Result<BigUint> {
    if frames == 0 {
        return Err(Error::Config("alignment needs at least one frame".into()));
    }
    let n = frames + num_labels - 1;
    let k = num_labels.min(n - num_labels);
    let mut acc = BigUint::from(1u32);
    for i in 0..k {
        acc *= BigUint::from(n - i);
        acc /= BigUint::from(i + 1);
    }
    Ok(acc)
}

/// One move in an alignment shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Step {
    Blank,
    Label,
}

/// A realized alignment `(s, t)`.
///
/// `times[i]` is the 1-based frame symbol `i` is attached to: a blank's time
/// is the frame it consumes and a label's time is the frame being read when it
/// is emitted (the frame consumed by the next blank). Equivalently,
/// `times[i] = 1 + (blanks before i)`. The last symbol is always the blank
/// that consumes frame `T`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Alignment {
    pub symbols: Vec<Symbol>,
    pub times: Vec<usize>,
}

impl Alignment {
    /// Places the labels of `transcript` into `shape`.
    pub fn from_shape(shape: &[Step], transcript: &[Symbol]) -> Result<Alignment> {
        let n_labels = shape.iter().filter(|s| **s == Step::Label).count();
        if n_labels != transcript.len() {
            return Err(Error::InvalidAlignment(format!(
                "shape has {n_labels} label slots, transcript has {}",
                transcript.len()
            )));
        }
        let mut symbols = Vec::with_capacity(shape.len());
        let mut times = Vec::with_capacity(shape.len());
        let mut labels = transcript.iter();
        let mut blanks = 0;
        for step in shape {
            times.push(blanks + 1);
            match step {
                Step::Blank => {
                    symbols.push(Symbol::BLANK);
                    blanks += 1;
                }
                Step::Label => symbols.push(*labels.next().expect("counted above")),
            }
        }
        let a = Alignment { symbols, times };
        a.validate(blanks)?;
        Ok(a)
    }

    pub fn frames(&self) -> usize {
        self.symbols.iter().filter(|s| s.is_blank()).count()
    }

    pub fn transcript(&self) -> Vec<Symbol> {
        self.symbols.iter().copied().filter(|s| !s.is_blank()).collect()
    }

    pub fn shape(&self) -> Vec<Step> {
        self.symbols
            .iter()
            .map(|s| if s.is_blank() { Step::Blank } else { Step::Label })
            .collect()
    }

    pub fn validate(&self, frames: usize) -> Result<()> {
        if self.symbols.len() != self.times.len() {
            return Err(Error::InvalidAlignment("symbols and times differ in length".into()));
        }
        match self.symbols.last() {
            Some(s) if s.is_blank() => {}
            _ => return Err(Error::InvalidAlignment("must end with a blank".into())),
        }
        let mut blanks = 0;
        for (s, &t) in self.symbols.iter().zip(&self.times) {
            if t != blanks + 1 || t > frames {
                return Err(Error::InvalidAlignment(format!(
                    "time {t} inconsistent with {blanks} preceding blanks"
                )));
            }
            if s.is_blank() {
                blanks += 1;
            }
        }
        if blanks != frames {
            return Err(Error::InvalidAlignment(format!(
                "{blanks} blanks for {frames} frames"
            )));
        }
        Ok(())
    }
}

/// Which of the two domains a piece of data comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Source,
    Target,
}

/// Discrete acoustic observation id.
pub type Observation = u32;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Utterance {
    pub frames: Vec<Observation>,
    pub transcript: Vec<Symbol>,
    pub domain: Domain,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_add_identity_and_halves() {
        assert_eq!(log_add(-1.25, f64::NEG_INFINITY), -1.25);
        assert_eq!(log_add(f64::NEG_INFINITY, -1.25), -1.25);
        assert_eq!(log_add(f64::NEG_INFINITY, f64::NEG_INFINITY), f64::NEG_INFINITY);
        assert!(log_add(0.5f64.ln(), 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn log_add_matches_direct_sum() {
        let direct = (0.3f64 + 0.2).ln();
        assert!((log_add(0.3f64.ln(), 0.2f64.ln()) - direct).abs() < 1e-12);
    }

    #[test]
    fn log_mul_absorbs() {
        assert_eq!(log_mul(f64::NEG_INFINITY, 3.0), f64::NEG_INFINITY);
        assert_eq!((LogProb::ZERO + LogProb(-0.5)).0, f64::NEG_INFINITY);
    }

    #[test]
    fn alignment_counts() {
        assert_eq!(count_alignments(1, 0).unwrap(), BigUint::from(1u32));
        assert_eq!(count_alignments(2, 1).unwrap(), BigUint::from(2u32));
        assert_eq!(count_alignments(4, 2).unwrap(), BigUint::from(10u32));
        assert!(count_alignments(0, 2).is_err());
        // C(1099, 100) needs more than 128 bits
        assert!(count_alignments(1000, 100).unwrap().bits() > 128);
    }

    #[test]
    fn alignment_from_shape() {
        let a = Alignment::from_shape(
            &[Step::Label, Step::Blank, Step::Label, Step::Label, Step::Blank],
            &labels(&[3, 1, 2]),
        )
        .unwrap();
        assert_eq!(a.times, vec![1, 1, 2, 2, 2]);
        assert_eq!(a.transcript(), labels(&[3, 1, 2]));
        assert_eq!(a.frames(), 2);
        assert!(Alignment::from_shape(&[Step::Blank, Step::Label], &labels(&[1])).is_err());
    }

    #[test]
    fn sequences_enumerated_in_order() {
        let v = Vocabulary::new(2).unwrap();
        let seqs = v.sequences_up_to(2);
        assert_eq!(seqs.len(), 1 + 2 + 4);
        assert_eq!(seqs[0], vec![]);
        assert_eq!(seqs[3], labels(&[1, 1]));
    }
}
