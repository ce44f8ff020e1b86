//! Symbol-level language models `P(s_{i+1} | s_{1:i})` over labels plus an
//! explicit end-of-sequence token.
//!
//! Next-token distributions are laid out as `V + 1` log-probabilities: index
//! `i < V` holds label `i + 1` and index `V` holds end-of-sequence. Blank is
//! never in the support.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{log_mul, Symbol, Vocabulary};
use crate::LogProb;

/// Boundary marker used to pad n-gram histories.
pub const BOUNDARY_ID: i32 = -1;
/// End-of-sequence id in the serialized n-gram format.
pub const EOS_ID: i32 = -2;

/// A next-token query: a label or end-of-sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LmToken {
    Label(Symbol),
    Eos,
}

pub trait LanguageModel: Send + Sync {
    fn vocab(&self) -> Vocabulary;

    /// Log-probabilities of every label followed by end-of-sequence.
    /// `history` must not contain blanks; it is not validated here.
    fn next_log_probs(&self, history: &[Symbol]) -> &[f64];

    /// True when no label or end-of-sequence ever gets probability zero.
    fn is_zero_free(&self) -> bool;

    fn log_prob(&self, next: LmToken, history: &[Symbol]) -> Result<LogProb> {
        let vocab = self.vocab();
        vocab.check_labels(history).map_err(|e| match e {
            Error::InvalidSymbol { id: 0, .. } => Error::BlankInLm,
            other => other,
        })?;
        let idx = match next {
            LmToken::Eos => vocab.num_labels(),
            LmToken::Label(s) if s.is_blank() => return Err(Error::BlankInLm),
            LmToken::Label(s) => {
                vocab.check(s)?;
                s.index() - 1
            }
        };
        Ok(LogProb(self.next_log_probs(history)[idx]))
    }

    /// Sum of conditional log-probabilities over `w` plus the end-of-sequence term.
    fn sequence_logprob(&self, w: &[Symbol]) -> LogProb {
        let v = self.vocab().num_labels();
        let mut total = 0.0;
        for i in 0..w.len() {
            total = log_mul(total, self.next_log_probs(&w[..i])[w[i].index() - 1]);
        }
        LogProb(log_mul(total, self.next_log_probs(w)[v]))
    }
}

fn token_index(vocab: &Vocabulary, id: i32) -> Option<usize> {
    if id == EOS_ID {
        Some(vocab.num_labels())
    } else if id >= 1 && (id as usize) <= vocab.num_labels() {
        Some(id as usize - 1)
    } else {
        None
    }
}

fn index_token(vocab: &Vocabulary, idx: usize) -> i32 {
    if idx == vocab.num_labels() {
        EOS_ID
    } else {
        idx as i32 + 1
    }
}

/// Add-k smoothed n-gram model:
/// `P(s | h) = (count(h, s) + k) / (count(h) + k (V + 1))`.
///
/// Histories are the last `order - 1` tokens, left-padded with the boundary
/// marker. A history never seen in training gets the uniform distribution,
/// which is what the formula gives for `k > 0` and a fallback for `k = 0`.
#[derive(Clone, Debug)]
pub struct NGramLM {
    order: usize,
    vocab: Vocabulary,
    add_k: f64,
    counts: BTreeMap<Vec<i32>, Vec<u64>>,
    dists: HashMap<Vec<i32>, Vec<f64>>,
    uniform: Vec<f64>,
}

impl NGramLM {
    fn from_counts(
        order: usize,
        vocab: Vocabulary,
        add_k: f64,
        counts: BTreeMap<Vec<i32>, Vec<u64>>,
    ) -> Result<Self> {
        if order == 0 {
            return Err(Error::Config("n-gram order must be at least 1".into()));
        }
        if !(add_k >= 0.0 && add_k.is_finite()) {
            return Err(Error::Config(format!("add_k must be finite and >= 0, got {add_k}")));
        }
        let n_out = vocab.num_labels() + 1;
        let uniform = vec![-(n_out as f64).ln(); n_out];
        let dists = counts
            .iter()
            .map(|(h, row)| {
                let total: u64 = row.iter().sum();
                let denom = total as f64 + add_k * n_out as f64;
                let dist = if denom > 0.0 {
                    row.iter()
                        .map(|&c| ((c as f64 + add_k) / denom).ln())
                        .collect()
                } else {
                    uniform.clone()
                };
                (h.clone(), dist)
            })
            .collect();
        Ok(NGramLM {
            order,
            vocab,
            add_k,
            counts,
            dists,
            uniform,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn add_k(&self) -> f64 {
        self.add_k
    }

    fn history_key(&self, history: &[Symbol]) -> Vec<i32> {
        let n = self.order - 1;
        let mut key = vec![BOUNDARY_ID; n.saturating_sub(history.len())];
        let start = history.len().saturating_sub(n);
        key.extend(history[start..].iter().map(|s| s.0 as i32));
        key
    }

    /// Serializes as `ngram <order> <V> <add_k>` followed by one
    /// `<history ids> <next id> <count>` line per nonzero count.
    pub fn to_text(&self) -> String {
        let mut out = format!("ngram {} {} {}\n", self.order, self.vocab.num_labels(), self.add_k);
        for (h, row) in &self.counts {
            for (idx, &c) in row.iter().enumerate() {
                if c == 0 {
                    continue;
                }
                for id in h {
                    let _ = write!(out, "{id} ");
                }
                let _ = writeln!(out, "{} {c}", index_token(&self.vocab, idx));
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse("ngram", 1, "missing header"))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 || fields[0] != "ngram" {
            return Err(Error::parse("ngram", 1, "expected `ngram <order> <V> <add_k>`"));
        }
        let order: usize = fields[1]
            .parse()
            .map_err(|_| Error::parse("ngram", 1, "bad order"))?;
        let v: usize = fields[2]
            .parse()
            .map_err(|_| Error::parse("ngram", 1, "bad vocabulary size"))?;
        let add_k: f64 = fields[3]
            .parse()
            .map_err(|_| Error::parse("ngram", 1, "bad add_k"))?;
        if order == 0 {
            return Err(Error::parse("ngram", 1, "order must be at least 1"));
        }
        let vocab = Vocabulary::new(v).map_err(|_| Error::parse("ngram", 1, "V must be >= 1"))?;
        let mut counts: BTreeMap<Vec<i32>, Vec<u64>> = BTreeMap::new();
        for (i, line) in lines {
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let ids: Vec<i64> = line
                .split_whitespace()
                .map(|t| t.parse::<i64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::parse("ngram", lineno, "non-integer field"))?;
            if ids.len() != order + 1 {
                return Err(Error::parse(
                    "ngram",
                    lineno,
                    format!("expected {} fields, found {}", order + 1, ids.len()),
                ));
            }
            let hist: Vec<i32> = ids[..order - 1].iter().map(|&x| x as i32).collect();
            if hist
                .iter()
                .any(|&x| x != BOUNDARY_ID && !(x >= 1 && x as usize <= v))
            {
                return Err(Error::parse("ngram", lineno, "bad history id"));
            }
            let idx = token_index(&vocab, ids[order - 1] as i32)
                .ok_or_else(|| Error::parse("ngram", lineno, "bad next-token id"))?;
            let count = u64::try_from(ids[order])
                .map_err(|_| Error::parse("ngram", lineno, "negative count"))?;
            counts.entry(hist).or_insert_with(|| vec![0; v + 1])[idx] += count;
        }
        NGramLM::from_counts(order, vocab, add_k, counts)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

impl LanguageModel for NGramLM {
    fn vocab(&self) -> Vocabulary {
        self.vocab
    }

    fn next_log_probs(&self, history: &[Symbol]) -> &[f64] {
        if self.order == 1 {
            return self.dists.get(&Vec::new()).unwrap_or(&self.uniform);
        }
        self.dists
            .get(&self.history_key(history))
            .unwrap_or(&self.uniform)
    }

    fn is_zero_free(&self) -> bool {
        self.add_k > 0.0
    }
}

/// Maximum-likelihood counts with add-k smoothing over labels and
/// end-of-sequence. Deterministic for a given corpus order.
pub fn train_ngram(
    corpus: &[Vec<Symbol>],
    order: usize,
    add_k: f64,
    vocab: Vocabulary,
) -> Result<NGramLM> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if order == 0 {
        return Err(Error::Config("n-gram order must be at least 1".into()));
    }
    let n_out = vocab.num_labels() + 1;
    let mut counts: BTreeMap<Vec<i32>, Vec<u64>> = BTreeMap::new();
    for w in corpus {
        vocab.check_labels(w)?;
        let mut padded: Vec<i32> = vec![BOUNDARY_ID; order - 1];
        padded.extend(w.iter().map(|s| s.0 as i32));
        padded.push(EOS_ID);
        for pos in (order - 1)..padded.len() {
            let hist = padded[pos + 1 - order..pos].to_vec();
            let idx = token_index(&vocab, padded[pos]).expect("validated above");
            counts.entry(hist).or_insert_with(|| vec![0; n_out])[idx] += 1;
        }
    }
    NGramLM::from_counts(order, vocab, add_k, counts)
}

/// An explicit distribution over complete label sequences. Conditionals are
/// exact marginalizations of the table.
#[derive(Clone, Debug)]
pub struct TableLM {
    vocab: Vocabulary,
    max_len: usize,
    table: BTreeMap<Vec<Symbol>, f64>,
    dists: HashMap<Vec<Symbol>, Vec<f64>>,
    uniform: Vec<f64>,
}

impl TableLM {
    /// Entries must sum to one within `1e-9`; zero entries are dropped.
    pub fn new(vocab: Vocabulary, entries: impl IntoIterator<Item = (Vec<Symbol>, f64)>) -> Result<Self> {
        let mut table = BTreeMap::new();
        for (w, p) in entries {
            vocab.check_labels(&w)?;
            if !(p >= 0.0 && p.is_finite()) {
                return Err(Error::Config(format!("table probability {p} for {w:?}")));
            }
            if p > 0.0 {
                *table.entry(w).or_insert(0.0) += p;
            }
        }
        let total: f64 = table.values().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("table sums to {total}, not 1")));
        }
        let max_len = table.keys().map(Vec::len).max().unwrap_or(0);

        let mut mass: HashMap<Vec<Symbol>, f64> = HashMap::new();
        for (w, &p) in &table {
            for k in 0..=w.len() {
                *mass.entry(w[..k].to_vec()).or_insert(0.0) += p;
            }
        }
        let v = vocab.num_labels();
        let dists = mass
            .iter()
            .map(|(h, &m)| {
                let mut dist = Vec::with_capacity(v + 1);
                let mut ext = h.clone();
                ext.push(Symbol::BLANK);
                for s in vocab.labels() {
                    *ext.last_mut().unwrap() = s;
                    let ms = mass.get(&ext).copied().unwrap_or(0.0);
                    dist.push((ms / m).ln());
                }
                let end = table.get(h).copied().unwrap_or(0.0);
                dist.push((end / m).ln());
                (h.clone(), dist)
            })
            .collect();
        Ok(TableLM {
            vocab,
            max_len,
            table,
            dists,
            uniform: vec![-((v + 1) as f64).ln(); v + 1],
        })
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn prob(&self, w: &[Symbol]) -> f64 {
        self.table.get(w).copied().unwrap_or(0.0)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&Vec<Symbol>, f64)> {
        self.table.iter().map(|(w, &p)| (w, p))
    }
}

impl LanguageModel for TableLM {
    fn vocab(&self) -> Vocabulary {
        self.vocab
    }

    /// Zero-mass histories get the uniform distribution.
    fn next_log_probs(&self, history: &[Symbol]) -> &[f64] {
        self.dists.get(history).unwrap_or(&self.uniform)
    }

    fn is_zero_free(&self) -> bool {
        self.dists
            .values()
            .all(|d| d.iter().all(|&x| x > f64::NEG_INFINITY))
    }

    fn sequence_logprob(&self, w: &[Symbol]) -> LogProb {
        LogProb(self.prob(w).ln())
    }
}

/// The first zero-probability event hit while scoring a corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct ZeroEvent {
    pub utterance: usize,
    pub position: usize,
    pub token: LmToken,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerplexityReport {
    pub perplexity: f64,
    pub total_log_prob: f64,
    /// Labels plus one end-of-sequence per utterance.
    pub tokens: usize,
    pub first_zero: Option<ZeroEvent>,
}

/// `exp(-total log-prob / tokens)` with one end-of-sequence token per
/// utterance. A zero-probability event yields `+inf` and is reported.
pub fn perplexity(lm: &dyn LanguageModel, corpus: &[Vec<Symbol>]) -> Result<PerplexityReport> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let v = lm.vocab().num_labels();
    let mut total = 0.0;
    let mut tokens = 0;
    let mut first_zero = None;
    for (u, w) in corpus.iter().enumerate() {
        lm.vocab().check_labels(w)?;
        for pos in 0..=w.len() {
            let (idx, token) = if pos < w.len() {
                (w[pos].index() - 1, LmToken::Label(w[pos]))
            } else {
                (v, LmToken::Eos)
            };
            let lp = lm.next_log_probs(&w[..pos])[idx];
            if lp == f64::NEG_INFINITY && first_zero.is_none() {
                first_zero = Some(ZeroEvent {
                    utterance: u,
                    position: pos,
                    token,
                });
            }
            total = log_mul(total, lp);
            tokens += 1;
        }
    }
    let perplexity = if first_zero.is_some() {
        f64::INFINITY
    } else {
        (-total / tokens as f64).exp()
    };
    Ok(PerplexityReport {
        perplexity,
        total_log_prob: total,
        tokens,
        first_zero,
    })
}
