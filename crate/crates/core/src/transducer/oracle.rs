use std::borrow::Cow;
use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use super::{check_time, BoundScorer, StepScorer};
use crate::error::{Error, Result};
use crate::lm::TableLM;
use crate::synthworld::{AcousticChannel, SynthWorld};
use crate::types::{Domain, Observation, Symbol, Vocabulary};

/// A transducer whose step posteriors are the exact conditionals of one
/// domain of a [`SynthWorld`].
///
/// The world's joint over `(W, segmentation, X)` is mapped onto transducer
/// alignments by emitting each label at the first frame of its segment and
/// then consuming the segment with blanks (the empty transcript is all
/// blanks). Conditioning on the full `X`, the step posterior at node
/// `(t, history)` is the fraction of the joint mass passing through that
/// node which leaves by each symbol. The chain built from these conditionals
/// reaches the terminal node `(T, W)` with probability exactly `P(W | X)`, so
/// summing its alignment posteriors recovers the world's posterior.
///
/// Nodes no joint mass reaches (including every history longer than `l_max`)
/// put all their probability on blank. Per-utterance tables are memoized
/// behind a lock and shared between threads.
#[derive(Debug)]
pub struct OracleTransducer {
    vocab: Vocabulary,
    l_max: usize,
    domain: Domain,
    prior: TableLM,
    channel: AcousticChannel,
    offsets: Vec<usize>,
    cache: RwLock<HashMap<Vec<Observation>, Arc<OracleTable>>>,
}

#[derive(Debug)]
struct OracleTable {
    frames: usize,
    n_prefix: usize,
    // [t * n_prefix + prefix] -> V + 1 log-probs
    dists: Vec<Vec<f64>>,
}

impl Clone for OracleTransducer {
    fn clone(&self) -> Self {
        let cache = self.cache.read().expect("oracle cache poisoned").clone();
        OracleTransducer {
            vocab: self.vocab,
            l_max: self.l_max,
            domain: self.domain,
            prior: self.prior.clone(),
            channel: self.channel.clone(),
            offsets: self.offsets.clone(),
            cache: RwLock::new(cache),
        }
    }
}

impl OracleTransducer {
    pub fn new(world: &SynthWorld, domain: Domain) -> Self {
        let v = world.vocab().num_labels();
        let mut offsets = vec![0];
        let mut width = 1;
        for _ in 0..=world.l_max() {
            offsets.push(offsets.last().unwrap() + width);
            width *= v;
        }
        OracleTransducer {
            vocab: world.vocab(),
            l_max: world.l_max(),
            domain,
            prior: world.prior(domain).clone(),
            channel: world.channel().clone(),
            offsets,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn clear_cache(&self) {
        self.cache.write().expect("oracle cache poisoned").clear();
    }

    fn n_prefix(&self) -> usize {
        self.offsets[self.l_max + 1]
    }

    /// Index of `history` in the prefix tree, `None` if longer than `l_max`.
    fn prefix_index(&self, history: &[Symbol]) -> Result<Option<usize>> {
        if history.len() > self.l_max {
            self.vocab.check_labels(history)?;
            return Ok(None);
        }
        let v = self.vocab.num_labels();
        let mut idx = 0;
        for &s in history {
            if s.is_blank() || s.index() > v {
                return Err(Error::InvalidSymbol {
                    id: s.0,
                    num_labels: v,
                });
            }
            idx = idx * v + (s.index() - 1);
        }
        Ok(Some(self.offsets[history.len()] + idx))
    }

    fn prefix_of(&self, idx: usize) -> Vec<Symbol> {
        let len = self.offsets.iter().rposition(|&o| o <= idx).unwrap();
        let v = self.vocab.num_labels();
        let mut rest = idx - self.offsets[len];
        let mut out = vec![Symbol::BLANK; len];
        for slot in out.iter_mut().rev() {
            *slot = Symbol((rest % v) as u32 + 1);
            rest /= v;
        }
        out
    }

    fn child(&self, idx: usize, len: usize, s: Symbol) -> usize {
        let v = self.vocab.num_labels();
        self.offsets[len + 1] + (idx - self.offsets[len]) * v + (s.index() - 1)
    }

    fn table(&self, frames: &[Observation]) -> Arc<OracleTable> {
        if let Some(t) = self.cache.read().expect("oracle cache poisoned").get(frames) {
            return Arc::clone(t);
        }
        let table = Arc::new(self.build(frames));
        self.cache
            .write()
            .expect("oracle cache poisoned")
            .entry(frames.to_vec())
            .or_insert(table)
            .clone()
    }

    fn build(&self, frames: &[Observation]) -> OracleTable {
        let t_len = frames.len();
        let n_prefix = self.n_prefix();
        let v = self.vocab.num_labels();
        let segs = self.channel.segments(frames);
        let d_max = segs.d_max();
        let prefixes: Vec<Vec<Symbol>> = (0..n_prefix).map(|i| self.prefix_of(i)).collect();

        // forward[h][t]: segmentations of h covering exactly frames 0..t
        let mut forward = vec![vec![0.0; t_len + 1]; n_prefix];
        forward[0][0] = 1.0;
        for idx in 0..self.offsets[self.l_max] {
            let len = prefixes[idx].len();
            for s in self.vocab.labels() {
                let c = self.child(idx, len, s);
                for a in 0..t_len {
                    let fa = forward[idx][a];
                    if fa == 0.0 {
                        continue;
                    }
                    for b in a + 1..=(a + d_max).min(t_len) {
                        forward[c][b] += fa * segs.get(s.index(), a, b);
                    }
                }
            }
        }

        // completion[h][t]: joint mass of every continuation of a completed
        // prefix h (h non-empty) whose segments cover frames t..T
        let mut completion = vec![vec![0.0; t_len + 1]; n_prefix];
        for idx in (1..n_prefix).rev() {
            let len = prefixes[idx].len();
            completion[idx][t_len] = self.prior.prob(&prefixes[idx]);
            if len == self.l_max {
                continue;
            }
            for t in 0..t_len {
                let mut acc = 0.0;
                for s in self.vocab.labels() {
                    let c = self.child(idx, len, s);
                    for b in t + 1..=(t + d_max).min(t_len) {
                        acc += segs.get(s.index(), t, b) * completion[c][b];
                    }
                }
                completion[idx][t] = acc;
            }
        }

        let silence = self.prior.prob(&[]) * segs.get(0, 0, t_len);
        let mut dists = Vec::with_capacity(t_len * n_prefix);
        let mut flows = vec![0.0; v + 1];
        for t in 0..t_len {
            for idx in 0..n_prefix {
                let h = &prefixes[idx];
                let len = h.len();
                flows.iter_mut().for_each(|f| *f = 0.0);
                if len < self.l_max && forward[idx][t] > 0.0 {
                    for s in self.vocab.labels() {
                        let c = self.child(idx, len, s);
                        let out: f64 = (t + 1..=(t + d_max).min(t_len))
                            .map(|b| segs.get(s.index(), t, b) * completion[c][b])
                            .sum();
                        flows[s.index()] = forward[idx][t] * out;
                    }
                }
                flows[0] = if len == 0 {
                    silence
                } else {
                    let parent = self.prefix_index(&h[..len - 1]).unwrap().unwrap();
                    let last = h[len - 1].index();
                    let mut acc = 0.0;
                    for a in t.saturating_sub(d_max - 1)..=t {
                        let fa = forward[parent][a];
                        if fa == 0.0 {
                            continue;
                        }
                        for b in t + 1..=(a + d_max).min(t_len) {
                            acc += fa * segs.get(last, a, b) * completion[idx][b];
                        }
                    }
                    acc
                };
                let total: f64 = flows.iter().sum();
                let dist = if total > 0.0 {
                    flows.iter().map(|f| (f / total).ln()).collect()
                } else {
                    let mut d = vec![f64::NEG_INFINITY; v + 1];
                    d[0] = 0.0;
                    d
                };
                dists.push(dist);
            }
        }
        OracleTable {
            frames: t_len,
            n_prefix,
            dists,
        }
    }

    fn blank_only(&self) -> Vec<f64> {
        let mut d = vec![f64::NEG_INFINITY; self.vocab.size()];
        d[0] = 0.0;
        d
    }
}

impl StepScorer for OracleTransducer {
    fn vocab(&self) -> Vocabulary {
        self.vocab
    }

    fn step_posterior(&self, frames: &[Observation], t: usize, history: &[Symbol]) -> Result<Vec<f64>> {
        check_time(t, frames.len())?;
        match self.prefix_index(history)? {
            Some(idx) => {
                let table = self.table(frames);
                Ok(table.dists[t * table.n_prefix + idx].clone())
            }
            None => Ok(self.blank_only()),
        }
    }

    fn bind<'a>(&'a self, frames: &'a [Observation]) -> Result<Box<dyn BoundScorer + 'a>> {
        Ok(Box::new(BoundOracle {
            oracle: self,
            table: self.table(frames),
            blank_only: self.blank_only(),
        }))
    }
}

struct BoundOracle<'a> {
    oracle: &'a OracleTransducer,
    table: Arc<OracleTable>,
    blank_only: Vec<f64>,
}

impl BoundScorer for BoundOracle<'_> {
    fn frames(&self) -> usize {
        self.table.frames
    }

    fn step(&self, t: usize, history: &[Symbol]) -> Result<Cow<'_, [f64]>> {
        check_time(t, self.table.frames)?;
        Ok(match self.oracle.prefix_index(history)? {
            Some(idx) => Cow::Borrowed(&self.table.dists[t * self.table.n_prefix + idx]),
            None => Cow::Borrowed(&self.blank_only),
        })
    }
}
