use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use super::{check_time, StepScorer};
use crate::error::{Error, Result};
use crate::types::{Observation, Symbol, Vocabulary};

/// Test double: every symbol gets `1 / (V + 1)` at every step.
#[derive(Clone, Debug)]
pub struct UniformScorer {
    vocab: Vocabulary,
}

impl UniformScorer {
    pub fn new(vocab: Vocabulary) -> Self {
        UniformScorer { vocab }
    }
}

impl StepScorer for UniformScorer {
    fn vocab(&self) -> Vocabulary {
        self.vocab
    }

    fn step_posterior(&self, frames: &[Observation], t: usize, _history: &[Symbol]) -> Result<Vec<f64>> {
        check_time(t, frames.len())?;
        Ok(vec![-(self.vocab.size() as f64).ln(); self.vocab.size()])
    }
}

/// Explicit per-`(t, history)` distributions for a fixed utterance length.
/// The frame contents are ignored; only their count must match.
///
/// Text format: a `tablescorer <V> <T>` header, then one line per entry:
/// `<t> <history length> <history ids...> <p_blank> <p_1> ... <p_V>`, with
/// probabilities written to 17 significant digits.
#[derive(Clone, Debug, PartialEq)]
pub struct TableScorer {
    vocab: Vocabulary,
    frames: usize,
    probs: BTreeMap<(usize, Vec<Symbol>), Vec<f64>>,
    logs: BTreeMap<(usize, Vec<Symbol>), Vec<f64>>,
}

impl TableScorer {
    pub fn new(
        vocab: Vocabulary,
        frames: usize,
        entries: impl IntoIterator<Item = ((usize, Vec<Symbol>), Vec<f64>)>,
    ) -> Result<Self> {
        let mut probs = BTreeMap::new();
        for ((t, history), dist) in entries {
            check_time(t, frames)?;
            vocab.check_labels(&history)?;
            if dist.len() != vocab.size() {
                return Err(Error::Config(format!(
                    "distribution at t = {t} has {} entries, expected {}",
                    dist.len(),
                    vocab.size()
                )));
            }
            let sum: f64 = dist.iter().sum();
            if dist.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-10 {
                return Err(Error::Config(format!("distribution at t = {t} sums to {sum}")));
            }
            probs.insert((t, history), dist);
        }
        let logs = probs
            .iter()
            .map(|(k, d)| (k.clone(), d.iter().map(|p| p.ln()).collect()))
            .collect();
        Ok(TableScorer {
            vocab,
            frames,
            probs,
            logs,
        })
    }

    /// Random distributions for every `t < frames` and every history of up
    /// to `max_history` labels.
    pub fn random<R: Rng + ?Sized>(vocab: Vocabulary, frames: usize, max_history: usize, rng: &mut R) -> Self {
        let mut entries = Vec::new();
        for t in 0..frames {
            for h in vocab.sequences_up_to(max_history) {
                let weights: Vec<f64> = (0..vocab.size()).map(|_| rng.gen_range(0.05..1.0)).collect();
                let total: f64 = weights.iter().sum();
                entries.push(((t, h), weights.iter().map(|w| w / total).collect()));
            }
        }
        TableScorer::new(vocab, frames, entries).expect("generated rows are normalized")
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("tablescorer {} {}\n", self.vocab.num_labels(), self.frames);
        for ((t, h), dist) in &self.probs {
            let _ = write!(out, "{t} {}", h.len());
            for s in h {
                let _ = write!(out, " {s}");
            }
            for p in dist {
                let _ = write!(out, " {p:.16e}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse("tablescorer", 1, "missing header"))?;
        let f: Vec<&str> = header.split_whitespace().collect();
        if f.len() != 3 || f[0] != "tablescorer" {
            return Err(Error::parse("tablescorer", 1, "expected `tablescorer <V> <T>`"));
        }
        let v: usize = f[1]
            .parse()
            .map_err(|_| Error::parse("tablescorer", 1, "bad V"))?;
        let frames: usize = f[2]
            .parse()
            .map_err(|_| Error::parse("tablescorer", 1, "bad T"))?;
        let vocab = Vocabulary::new(v).map_err(|_| Error::parse("tablescorer", 1, "V must be >= 1"))?;
        let mut entries = Vec::new();
        for (i, line) in lines {
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            let bad = |m: &str| Error::parse("tablescorer", lineno, m.to_string());
            if toks.len() < 2 {
                return Err(bad("truncated line"));
            }
            let t: usize = toks[0].parse().map_err(|_| bad("bad t"))?;
            let n: usize = toks[1].parse().map_err(|_| bad("bad history length"))?;
            if toks.len() != 2 + n + vocab.size() {
                return Err(bad("wrong number of fields"));
            }
            let history = toks[2..2 + n]
                .iter()
                .map(|x| x.parse::<u32>().map(Symbol))
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| bad("bad history id"))?;
            let dist = toks[2 + n..]
                .iter()
                .map(|x| x.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| bad("bad probability"))?;
            entries.push(((t, history), dist));
        }
        TableScorer::new(vocab, frames, entries).map_err(|e| Error::parse("tablescorer", 0, e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

impl StepScorer for TableScorer {
    fn vocab(&self) -> Vocabulary {
        self.vocab
    }

    fn step_posterior(&self, frames: &[Observation], t: usize, history: &[Symbol]) -> Result<Vec<f64>> {
        if frames.len() != self.frames {
            return Err(Error::Config(format!(
                "table scorer built for {} frames, got {}",
                self.frames,
                frames.len()
            )));
        }
        check_time(t, frames.len())?;
        self.logs
            .get(&(t, history.to_vec()))
            .cloned()
            .ok_or_else(|| Error::MissingTableEntry {
                t,
                history: history.iter().map(|s| s.0).collect(),
            })
    }
}
