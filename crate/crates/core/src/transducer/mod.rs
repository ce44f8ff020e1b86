//! The per-step posterior interface of a transducer and the alignment-lattice
//! computations built on it.
//!
//! A lattice node `(t, u)` means `t` frames consumed and the first `u` labels
//! emitted. A label move keeps `t`; a blank move consumes one frame. Scorers
//! are only queried with `t < T`: the blank that consumes frame `T` ends every
//! path, so the result of a lattice pass is the value accumulated at `(T, U)`.

mod oracle;
mod table;

use std::borrow::Cow;

pub use oracle::OracleTransducer;
pub use table::{TableScorer, UniformScorer};

use crate::error::{Error, Result};
use crate::types::{log_add, log_mul, Alignment, Observation, Step, Symbol, Vocabulary};
use crate::LogProb;

/// A source of normalized per-step posteriors `P(s_{i+1} | X, t_i, s_{1:i})`.
///
/// Distributions are `V + 1` log-probabilities indexed by symbol id, blank
/// first.
pub trait StepScorer: Send + Sync {
    fn vocab(&self) -> Vocabulary;

    /// Distribution over blank and labels after consuming `t` frames of
    /// `frames` and emitting `history`. Fails for `t >= frames.len()`.
    fn step_posterior(&self, frames: &[Observation], t: usize, history: &[Symbol]) -> Result<Vec<f64>>;

    /// Fixes the observation sequence for a run of queries. Implementations
    /// with per-utterance precomputation override this.
    fn bind<'a>(&'a self, frames: &'a [Observation]) -> Result<Box<dyn BoundScorer + 'a>> {
        Ok(Box::new(Unbound {
            step: move |t: usize, h: &[Symbol]| self.step_posterior(frames, t, h),
            frames: frames.len(),
        }))
    }
}

/// A scorer with its observation sequence fixed.
pub trait BoundScorer {
    fn frames(&self) -> usize;
    fn step(&self, t: usize, history: &[Symbol]) -> Result<Cow<'_, [f64]>>;
}

struct Unbound<F> {
    step: F,
    frames: usize,
}

impl<F> BoundScorer for Unbound<F>
where
    F: Fn(usize, &[Symbol]) -> Result<Vec<f64>>,
{
    fn frames(&self) -> usize {
        self.frames
    }

    fn step(&self, t: usize, history: &[Symbol]) -> Result<Cow<'_, [f64]>> {
        (self.step)(t, history).map(Cow::Owned)
    }
}

pub(crate) fn check_time(t: usize, frames: usize) -> Result<()> {
    if t >= frames {
        Err(Error::AllFramesConsumed { t, frames })
    } else {
        Ok(())
    }
}

/// Step posterior as a symbol-indexed vector of `LogProb`s.
pub fn step_posterior(
    scorer: &dyn StepScorer,
    frames: &[Observation],
    t: usize,
    history: &[Symbol],
) -> Result<Vec<LogProb>> {
    check_time(t, frames.len())?;
    Ok(scorer
        .step_posterior(frames, t, history)?
        .into_iter()
        .map(LogProb)
        .collect())
}

/// How paths reaching the same lattice node combine.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Semiring {
    /// log-add: sum over alignments.
    Sum,
    /// max: best alignment.
    Max,
}

impl Semiring {
    pub fn plus(self, a: f64, b: f64) -> f64 {
        match self {
            Semiring::Sum => log_add(a, b),
            Semiring::Max => {
                if b > a {
                    b
                } else {
                    a
                }
            }
        }
    }
}

/// Runs the `(t, u)` lattice for transcript `w`.
///
/// `weight(u, symbol, base)` turns the scorer's log-probability `base` for
/// `symbol` emitted after `w[..u]` into the transition weight. Nodes that no
/// path reaches are never queried.
pub fn lattice_pass<F>(bound: &dyn BoundScorer, w: &[Symbol], semiring: Semiring, mut weight: F) -> Result<f64>
where
    F: FnMut(usize, Symbol, f64) -> Result<f64>,
{
    let t_len = bound.frames();
    if t_len == 0 {
        return Err(Error::Config("utterance has no frames".into()));
    }
    let u_len = w.len();
    let mut alpha = vec![vec![f64::NEG_INFINITY; u_len + 1]; t_len + 1];
    alpha[0][0] = 0.0;
    for t in 0..t_len {
        for u in 0..=u_len {
            let a = alpha[t][u];
            if a == f64::NEG_INFINITY {
                continue;
            }
            let dist = bound.step(t, &w[..u])?;
            if u < u_len {
                let s = w[u];
                let x = log_mul(a, weight(u, s, dist[s.index()])?);
                alpha[t][u + 1] = semiring.plus(alpha[t][u + 1], x);
            }
            let x = log_mul(a, weight(u, Symbol::BLANK, dist[0])?);
            alpha[t + 1][u] = semiring.plus(alpha[t + 1][u], x);
        }
    }
    Ok(alpha[t_len][u_len])
}

/// `log P(W | X)`: sum over every valid alignment, by the forward algorithm.
pub fn sequence_posterior(scorer: &dyn StepScorer, frames: &[Observation], w: &[Symbol]) -> Result<LogProb> {
    scorer.vocab().check_labels(w)?;
    let bound = scorer.bind(frames)?;
    lattice_pass(bound.as_ref(), w, Semiring::Sum, |_, _, base| Ok(base)).map(LogProb)
}

/// Best single alignment's log-probability.
pub fn viterbi_sequence_score(scorer: &dyn StepScorer, frames: &[Observation], w: &[Symbol]) -> Result<LogProb> {
    scorer.vocab().check_labels(w)?;
    let bound = scorer.bind(frames)?;
    lattice_pass(bound.as_ref(), w, Semiring::Max, |_, _, base| Ok(base)).map(LogProb)
}

const MAX_ENUM_FRAMES: usize = 8;
const MAX_ENUM_LABELS: usize = 5;

/// Every interleaving of `frames` blanks and `num_labels` labels that ends in
/// a blank. Limited to `frames <= 8`, `num_labels <= 5`.
pub fn enumerate_alignments(frames: usize, num_labels: usize) -> Result<Vec<Vec<Step>>> {
    if frames > MAX_ENUM_FRAMES || num_labels > MAX_ENUM_LABELS {
        return Err(Error::EnumerationBound(format!(
            "alignment enumeration needs T <= {MAX_ENUM_FRAMES} and U <= {MAX_ENUM_LABELS} (have T = {frames}, U = {num_labels})"
        )));
    }
    if frames == 0 {
        return Err(Error::Config("alignment needs at least one frame".into()));
    }
    fn rec(blanks: usize, labels: usize, prefix: &mut Vec<Step>, out: &mut Vec<Vec<Step>>) {
        if blanks == 0 && labels == 0 {
            let mut shape = prefix.clone();
            shape.push(Step::Blank);
            out.push(shape);
            return;
        }
        if labels > 0 {
            prefix.push(Step::Label);
            rec(blanks, labels - 1, prefix, out);
            prefix.pop();
        }
        if blanks > 0 {
            prefix.push(Step::Blank);
            rec(blanks - 1, labels, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(frames - 1, num_labels, &mut Vec::new(), &mut out);
    Ok(out)
}

/// Log-probability of one alignment: the product of its step factors.
pub fn alignment_log_prob(scorer: &dyn StepScorer, frames: &[Observation], alignment: &Alignment) -> Result<LogProb> {
    alignment.validate(frames.len())?;
    let mut total = 0.0;
    let mut t = 0;
    let mut history = Vec::new();
    for &s in &alignment.symbols {
        let dist = scorer.step_posterior(frames, t, &history)?;
        total = log_mul(total, dist[s.index()]);
        if s.is_blank() {
            t += 1;
        } else {
            history.push(s);
        }
    }
    Ok(LogProb(total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{count_alignments, labels};

    #[test]
    fn enumeration_counts() {
        assert_eq!(enumerate_alignments(1, 0).unwrap(), vec![vec![Step::Blank]]);
        assert_eq!(enumerate_alignments(2, 1).unwrap().len(), 2);
        assert_eq!(enumerate_alignments(3, 2).unwrap().len(), 6);
        for t in 1..=6 {
            for u in 0..=4 {
                let n = enumerate_alignments(t, u).unwrap().len();
                assert_eq!(count_alignments(t, u).unwrap(), n.into());
            }
        }
        assert!(matches!(enumerate_alignments(9, 1), Err(Error::EnumerationBound(_))));
        assert!(matches!(enumerate_alignments(3, 6), Err(Error::EnumerationBound(_))));
    }

    #[test]
    fn every_shape_is_a_valid_alignment() {
        for shape in enumerate_alignments(4, 3).unwrap() {
            let a = Alignment::from_shape(&shape, &labels(&[1, 2, 1])).unwrap();
            a.validate(4).unwrap();
        }
    }

    #[test]
    fn uniform_single_path() {
        let v = Vocabulary::new(3).unwrap();
        let sc = UniformScorer::new(v);
        let lp = sequence_posterior(&sc, &[0], &[]).unwrap();
        assert!((lp.0 - 0.25f64.ln()).abs() < 1e-15);
        let vit = viterbi_sequence_score(&sc, &[0], &[]).unwrap();
        assert_eq!(vit, lp);
    }

    #[test]
    fn step_posterior_rejects_exhausted_audio() {
        let sc = UniformScorer::new(Vocabulary::new(2).unwrap());
        assert!(matches!(
            step_posterior(&sc, &[0, 0], 2, &[]),
            Err(Error::AllFramesConsumed { t: 2, frames: 2 })
        ));
        let d = step_posterior(&sc, &[0, 0], 1, &labels(&[1])).unwrap();
        assert_eq!(d.len(), 3);
        assert!(d.iter().all(|x| (x.0 - (1.0f64 / 3.0).ln()).abs() < 1e-15));
    }
}
