//! Frame-synchronous beam search over the transducer lattice.
//!
//! At each frame every surviving hypothesis may emit up to
//! `max_expansions_per_frame` labels (scored with the fused step score), and
//! every hypothesis reached this way then emits the blank that consumes the
//! frame. Hypotheses with identical label sequences at the same frame are
//! merged, by max (best alignment) unless [`MergeMode::LogAdd`] is chosen.
//! A hypothesis is complete once the blank for the last frame is emitted.

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{finalization_bonus, fuse_with_rows, FusionConfig, FusionLms, FusionMode};
use crate::transducer::StepScorer;
use crate::types::{log_add, Observation, Symbol, Utterance};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeMode {
    #[default]
    Max,
    LogAdd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeamConfig {
    pub beam_size: usize,
    pub max_expansions_per_frame: usize,
    pub nbest: usize,
    #[serde(default)]
    pub merge: MergeMode,
}

impl BeamConfig {
    pub fn new(beam_size: usize, max_expansions_per_frame: usize, nbest: usize) -> Self {
        BeamConfig {
            beam_size,
            max_expansions_per_frame,
            nbest,
            merge: MergeMode::Max,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.beam_size == 0 || self.max_expansions_per_frame == 0 || self.nbest == 0 {
            return Err(Error::Config("beam_size, max_expansions_per_frame and nbest must be >= 1".into()));
        }
        if self.nbest > self.beam_size {
            return Err(Error::Config(format!(
                "nbest {} exceeds beam_size {}",
                self.nbest, self.beam_size
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    pub labels: Vec<Symbol>,
    pub score: f64,
    pub frames_consumed: usize,
}

/// Best first; equal scores put the shorter, then lexicographically smaller,
/// label sequence first.
fn rank(a: &(Vec<Symbol>, f64), b: &(Vec<Symbol>, f64)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.0.len().cmp(&b.0.len()))
        .then_with(|| a.0.cmp(&b.0))
}

struct Pool {
    merge: MergeMode,
    index: HashMap<Vec<Symbol>, usize>,
    items: Vec<(Vec<Symbol>, f64)>,
}

impl Pool {
    fn new(merge: MergeMode) -> Self {
        Pool {
            merge,
            index: HashMap::new(),
            items: Vec::new(),
        }
    }

    fn add(&mut self, labels: Vec<Symbol>, score: f64) {
        if score == f64::NEG_INFINITY {
            return;
        }
        match self.index.get(&labels) {
            Some(&i) => {
                let cur = &mut self.items[i].1;
                *cur = match self.merge {
                    MergeMode::Max => cur.max(score),
                    MergeMode::LogAdd => log_add(*cur, score),
                };
            }
            None => {
                self.index.insert(labels.clone(), self.items.len());
                self.items.push((labels, score));
            }
        }
    }

    fn into_pruned(self, beam: usize) -> Vec<(Vec<Symbol>, f64)> {
        let mut items = self.items;
        items.sort_by(rank);
        items.truncate(beam);
        items
    }
}

/// Decodes one utterance; returns up to `nbest` complete hypotheses, best
/// first.
pub fn beam_search(
    scorer: &dyn StepScorer,
    lms: &FusionLms<'_>,
    fusion: &FusionConfig,
    beam: &BeamConfig,
    frames: &[Observation],
) -> Result<Vec<Hypothesis>> {
    beam.check()?;
    fusion.check_for_search(lms)?;
    if frames.is_empty() {
        return Err(Error::Config("utterance has no frames".into()));
    }
    let vocab = scorer.vocab();
    let target = if fusion.mode == FusionMode::None { None } else { lms.target };
    let source = if fusion.mode == FusionMode::DensityRatio { lms.source } else { None };
    let bound = scorer.bind(frames)?;

    let mut current: Vec<(Vec<Symbol>, f64)> = vec![(Vec::new(), 0.0)];
    for t in 0..frames.len() {
        let mut pool = Pool::new(beam.merge);
        for (h, s) in &current {
            pool.add(h.clone(), *s);
        }
        let mut layer = current;
        for _ in 0..beam.max_expansions_per_frame {
            let mut next = Pool::new(beam.merge);
            for (h, score) in &layer {
                let dist = bound.step(t, h)?;
                let t_row = target.map(|lm| lm.next_log_probs(h));
                let s_row = source.map(|lm| lm.next_log_probs(h));
                for s in vocab.labels() {
                    let f = fuse_with_rows(dist[s.index()], s, h, t_row, s_row, fusion)?;
                    if f.total == f64::NEG_INFINITY {
                        continue;
                    }
                    let mut ext = Vec::with_capacity(h.len() + 1);
                    ext.extend_from_slice(h);
                    ext.push(s);
                    next.add(ext, score + f.total);
                }
            }
            if next.items.is_empty() {
                break;
            }
            layer = next.into_pruned(beam.beam_size);
            for (h, s) in &layer {
                pool.add(h.clone(), *s);
            }
        }
        let mut advanced = Pool::new(beam.merge);
        for (h, score) in pool.into_pruned(beam.beam_size) {
            let blank = bound.step(t, &h)?[0];
            advanced.add(h, score + blank);
        }
        current = advanced.into_pruned(beam.beam_size);
    }

    let mut finished = Vec::with_capacity(current.len());
    for (h, score) in current {
        let bonus = finalization_bonus(&h, lms, fusion)?;
        let total = score + bonus;
        if total > f64::NEG_INFINITY {
            finished.push((h, total));
        }
    }
    finished.sort_by(rank);
    finished.truncate(beam.nbest);
    Ok(finished
        .into_iter()
        .map(|(labels, score)| Hypothesis {
            labels,
            score,
            frames_consumed: frames.len(),
        })
        .collect())
}

/// Top-1 transcript for every utterance (empty when nothing survives).
pub fn decode_corpus(
    scorer: &dyn StepScorer,
    lms: &FusionLms<'_>,
    fusion: &FusionConfig,
    beam: &BeamConfig,
    utterances: &[Utterance],
) -> Result<Vec<Vec<Symbol>>> {
    utterances
        .iter()
        .map(|u| {
            beam_search(scorer, lms, fusion, beam, &u.frames)
                .map(|mut hyps| if hyps.is_empty() { Vec::new() } else { hyps.swap_remove(0).labels })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::train_ngram;
    use crate::synthworld::{streams, SynthWorld};
    use crate::transducer::{OracleTransducer, UniformScorer};
    use crate::types::{labels, Domain, Vocabulary};

    #[test]
    fn rank_breaks_ties_by_length_then_ids() {
        let mut v = [
            (labels(&[2]), -1.0),
            (labels(&[1, 1]), -1.0),
            (labels(&[1]), -1.0),
            (labels(&[3]), -0.5),
        ];
        v.sort_by(rank);
        assert_eq!(
            v.iter().map(|x| x.0.clone()).collect::<Vec<_>>(),
            vec![labels(&[3]), labels(&[1]), labels(&[2]), labels(&[1, 1])]
        );
    }

    #[test]
    fn uniform_scorer_prefers_empty() {
        let sc = UniformScorer::new(Vocabulary::new(2).unwrap());
        let hyps = beam_search(
            &sc,
            &FusionLms::empty(),
            &FusionConfig::none(0.0),
            &BeamConfig::new(4, 2, 3),
            &[0, 0],
        )
        .unwrap();
        assert_eq!(hyps[0].labels, vec![]);
        assert!((hyps[0].score - 2.0 * (1.0f64 / 3.0).ln()).abs() < 1e-12);
        assert_eq!(hyps.len(), 3);
        // a large beta flips the preference towards emitting labels
        let hyps = beam_search(
            &sc,
            &FusionLms::empty(),
            &FusionConfig::none(5.0),
            &BeamConfig::new(64, 2, 1),
            &[0, 0],
        )
        .unwrap();
        assert_eq!(hyps[0].labels.len(), 4);
    }

    #[test]
    fn bad_beam_config() {
        let sc = UniformScorer::new(Vocabulary::new(2).unwrap());
        let r = beam_search(&sc, &FusionLms::empty(), &FusionConfig::none(0.0), &BeamConfig::new(2, 1, 3), &[0]);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn ratio_of_identical_lms_is_a_no_op() {
        let w = SynthWorld::default_world(7);
        let o = OracleTransducer::new(&w, Domain::Source);
        let text: Vec<_> = w
            .sample_many(Domain::Source, streams::USER, 200)
            .into_iter()
            .map(|u| u.transcript)
            .collect();
        let lm = train_ngram(&text, 2, 0.5, w.vocab()).unwrap();
        let lms = FusionLms::new(&lm, Some(&lm));
        let beam = BeamConfig::new(8, 3, 4);
        for u in w.sample_many(Domain::Target, streams::USER + 1, 20) {
            let a = beam_search(&o, &lms, &FusionConfig::density_ratio(0.6, 0.6, 0.2), &beam, &u.frames).unwrap();
            let b = beam_search(&o, &lms, &FusionConfig::none(0.2), &beam, &u.frames).unwrap();
            assert_eq!(a, b);
        }
    }
}
