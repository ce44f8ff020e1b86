//! An exactly solvable two-domain generative world.
//!
//! Each domain has its own prior over label sequences of length at most
//! `l_max`; both share one acoustic channel. A transcript `W` is rendered by
//! giving every label a segment of `1..=d_max` frames and drawing one
//! observation per frame. The empty transcript is rendered as a single
//! silence segment with its own duration and emission rows. Every quantity of
//! the noisy-channel model (`p(X|W)`, `P(W|X)`, `p(X)`) is computed exactly.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::TableLM;
use crate::types::{Domain, Observation, Symbol, Utterance, Vocabulary};

pub const WORLD_SCHEMA: u32 = 1;

const ROW_TOLERANCE: f64 = 1e-9;

/// Random-stream purposes. Every experiment derives its generators from the
/// world seed through [`rng_stream`], one stream per purpose.
pub mod streams {
    pub const SOURCE_TRAIN: u64 = 1;
    pub const TARGET_TEXT: u64 = 2;
    pub const TARGET_DEV: u64 = 3;
    pub const TARGET_EVAL: u64 = 4;
    pub const SOURCE_EVAL: u64 = 5;
    /// Streams at or above this value are free for tests and examples.
    pub const USER: u64 = 1 << 16;
}

/// `ChaCha8Rng` seeded with `seed`, switched to stream `stream`.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws an index from weights that sum to one.
pub(crate) fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last_nonzero = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_nonzero = i;
            if u < acc {
                return i;
            }
        }
    }
    last_nonzero
}

fn check_row(row: &[f64], len: usize, what: &str) -> Result<()> {
    if row.len() != len {
        return Err(Error::Config(format!("{what}: expected {len} entries, got {}", row.len())));
    }
    if row.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
        return Err(Error::Config(format!("{what}: entries must be finite and >= 0")));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_TOLERANCE {
        return Err(Error::Config(format!("{what}: sums to {sum}")));
    }
    Ok(())
}

/// Channel parameters as written in a world file. Label rows are listed in
/// label order `1..=V`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub emission: Vec<Vec<f64>>,
    pub duration: Vec<Vec<f64>>,
    pub silence_emission: Vec<f64>,
    pub silence_duration: Vec<f64>,
}

/// Shared acoustic channel. Unit 0 is silence, units `1..=V` are labels.
#[derive(Clone, Debug, PartialEq)]
pub struct AcousticChannel {
    obs_alphabet: usize,
    d_max: usize,
    noise_floor: f64,
    emission: Vec<Vec<f64>>,
    duration: Vec<Vec<f64>>,
    frame_probs: Vec<Vec<f64>>,
}

impl AcousticChannel {
    pub fn new(
        vocab: Vocabulary,
        obs_alphabet: usize,
        d_max: usize,
        noise_floor: f64,
        spec: &ChannelSpec,
    ) -> Result<Self> {
        if obs_alphabet == 0 || d_max == 0 {
            return Err(Error::Config("obs_alphabet and d_max must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&noise_floor) {
            return Err(Error::Config(format!("noise_floor {noise_floor} outside [0, 1]")));
        }
        let v = vocab.num_labels();
        if spec.emission.len() != v || spec.duration.len() != v {
            return Err(Error::Config(format!("channel needs {v} emission and duration rows")));
        }
        let mut emission = vec![spec.silence_emission.clone()];
        emission.extend(spec.emission.iter().cloned());
        let mut duration = vec![spec.silence_duration.clone()];
        duration.extend(spec.duration.iter().cloned());
        for (unit, (e, d)) in emission.iter().zip(&duration).enumerate() {
            check_row(e, obs_alphabet, &format!("emission row {unit}"))?;
            check_row(d, d_max, &format!("duration row {unit}"))?;
        }
        let floor = noise_floor / obs_alphabet as f64;
        let frame_probs = emission
            .iter()
            .map(|row| row.iter().map(|&e| (1.0 - noise_floor) * e + floor).collect())
            .collect();
        Ok(AcousticChannel {
            obs_alphabet,
            d_max,
            noise_floor,
            emission,
            duration,
            frame_probs,
        })
    }

    pub fn obs_alphabet(&self) -> usize {
        self.obs_alphabet
    }

    pub fn d_max(&self) -> usize {
        self.d_max
    }

    pub fn noise_floor(&self) -> f64 {
        self.noise_floor
    }

    /// Per-frame observation probability of `unit` after noise mixing.
    pub fn frame_prob(&self, unit: usize, obs: Observation) -> f64 {
        self.frame_probs[unit]
            .get(obs as usize)
            .copied()
            .unwrap_or(0.0)
    }

    /// Probability that `unit` lasts `d` frames.
    pub fn duration_prob(&self, unit: usize, d: usize) -> f64 {
        if d == 0 || d > self.d_max {
            0.0
        } else {
            self.duration[unit][d - 1]
        }
    }

    pub fn to_spec(&self) -> ChannelSpec {
        ChannelSpec {
            emission: self.emission[1..].to_vec(),
            duration: self.duration[1..].to_vec(),
            silence_emission: self.emission[0].clone(),
            silence_duration: self.duration[0].clone(),
        }
    }

    /// Segment likelihoods for one observation sequence.
    pub fn segments(&self, frames: &[Observation]) -> SegmentTable {
        SegmentTable::new(self, frames)
    }

    fn sample_segment<R: Rng + ?Sized>(&self, unit: usize, rng: &mut R, out: &mut Vec<Observation>) {
        let d = sample_index(&self.duration[unit], rng) + 1;
        for _ in 0..d {
            let obs = if rng.gen::<f64>() < self.noise_floor {
                rng.gen_range(0..self.obs_alphabet)
            } else {
                sample_index(&self.emission[unit], rng)
            };
            out.push(obs as Observation);
        }
    }
}

/// `seg(unit, a, b) = P(duration = b - a) * prod_{f in a..b} p(x_f | unit)` for
/// 0-based half-open frame ranges.
#[derive(Clone, Debug)]
pub struct SegmentTable {
    frames: usize,
    d_max: usize,
    // [unit][start][d - 1]
    values: Vec<Vec<Vec<f64>>>,
}

impl SegmentTable {
    fn new(channel: &AcousticChannel, frames: &[Observation]) -> Self {
        let t_len = frames.len();
        let values = (0..channel.emission.len())
            .map(|unit| {
                (0..t_len)
                    .map(|start| {
                        let mut acc = 1.0;
                        (1..=channel.d_max)
                            .map(|d| {
                                if start + d > t_len {
                                    return 0.0;
                                }
                                acc *= channel.frame_prob(unit, frames[start + d - 1]);
                                acc * channel.duration_prob(unit, d)
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        SegmentTable {
            frames: t_len,
            d_max: channel.d_max,
            values,
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn d_max(&self) -> usize {
        self.d_max
    }

    pub fn get(&self, unit: usize, start: usize, end: usize) -> f64 {
        if end <= start || end - start > self.d_max || end > self.frames {
            return 0.0;
        }
        self.values[unit][start][end - start - 1]
    }

    /// `p(X | W)` summed over all segmentations.
    pub fn likelihood(&self, w: &[Symbol]) -> f64 {
        let t_len = self.frames;
        if w.is_empty() {
            return self.get(0, 0, t_len);
        }
        let mut prev = vec![0.0; t_len + 1];
        prev[0] = 1.0;
        for s in w {
            let mut cur = vec![0.0; t_len + 1];
            for end in 1..=t_len {
                let lo = end.saturating_sub(self.d_max);
                cur[end] = (lo..end)
                    .map(|start| prev[start] * self.get(s.index(), start, end))
                    .sum();
            }
            prev = cur;
        }
        prev[t_len]
    }
}

/// A domain prior given either as an explicit table or as a bigram block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PriorSpec {
    /// `initial` and each `transition` row hold `V + 1` probabilities: labels
    /// `1..=V` then end-of-sequence. Sequences are cut at `l_max`, where
    /// termination is forced.
    Bigram {
        initial: Vec<f64>,
        transition: Vec<Vec<f64>>,
    },
    Table { entries: Vec<TableEntry> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub labels: Vec<u32>,
    pub prob: f64,
}

impl PriorSpec {
    pub fn to_table(&self, vocab: Vocabulary, l_max: usize) -> Result<TableLM> {
        let v = vocab.num_labels();
        match self {
            PriorSpec::Bigram {
                initial,
                transition,
            } => {
                check_row(initial, v + 1, "bigram initial row")?;
                if transition.len() != v {
                    return Err(Error::Config(format!("bigram needs {v} transition rows")));
                }
                for (i, row) in transition.iter().enumerate() {
                    check_row(row, v + 1, &format!("bigram transition row {}", i + 1))?;
                }
                let entries = vocab.sequences_up_to(l_max).into_iter().map(|w| {
                    let mut p = 1.0;
                    let mut row = initial;
                    for s in &w {
                        p *= row[s.index() - 1];
                        row = &transition[s.index() - 1];
                    }
                    if w.len() < l_max {
                        p *= row[v];
                    }
                    (w, p)
                });
                TableLM::new(vocab, entries.collect::<Vec<_>>())
            }
            PriorSpec::Table { entries } => {
                let entries: Vec<_> = entries
                    .iter()
                    .map(|e| (e.labels.iter().map(|&i| Symbol(i)).collect::<Vec<_>>(), e.prob))
                    .collect();
                if let Some((w, _)) = entries.iter().find(|(w, _)| w.len() > l_max) {
                    return Err(Error::Config(format!("table entry {w:?} longer than l_max")));
                }
                TableLM::new(vocab, entries)
            }
        }
    }

    pub fn from_table(table: &TableLM) -> PriorSpec {
        PriorSpec::Table {
            entries: table
                .entries()
                .map(|(w, p)| TableEntry {
                    labels: w.iter().map(|s| s.0).collect(),
                    prob: p,
                })
                .collect(),
        }
    }
}

/// A domain prior: its parameter block plus the exact sequence table.
#[derive(Clone, Debug)]
pub struct DomainPrior {
    spec: PriorSpec,
    table: TableLM,
}

impl DomainPrior {
    pub fn new(spec: PriorSpec, vocab: Vocabulary, l_max: usize) -> Result<Self> {
        let table = spec.to_table(vocab, l_max)?;
        Ok(DomainPrior { spec, table })
    }

    pub fn spec(&self) -> &PriorSpec {
        &self.spec
    }

    pub fn table(&self) -> &TableLM {
        &self.table
    }
}

/// The world file layout (`"schema": 1`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldFile {
    pub schema: u32,
    pub vocab_size: usize,
    pub obs_alphabet: usize,
    pub l_max: usize,
    pub d_max: usize,
    pub noise_floor: f64,
    pub channel: ChannelSpec,
    pub source_prior: PriorSpec,
    pub target_prior: PriorSpec,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct SynthWorld {
    vocab: Vocabulary,
    l_max: usize,
    channel: AcousticChannel,
    source: DomainPrior,
    target: DomainPrior,
    seed: u64,
}

/// Exact posterior over every transcript of length `<= l_max`.
#[derive(Clone, Debug)]
pub struct Posterior {
    /// `(W, P(W | X))`, shortest transcripts first, then lexicographic.
    pub entries: Vec<(Vec<Symbol>, f64)>,
    /// `log p(X)` under the domain.
    pub log_evidence: f64,
}

impl Posterior {
    pub fn prob(&self, w: &[Symbol]) -> f64 {
        self.entries
            .iter()
            .find(|(x, _)| x.as_slice() == w)
            .map(|(_, p)| *p)
            .unwrap_or(0.0)
    }

    pub fn argmax(&self) -> &[Symbol] {
        let mut best = &self.entries[0];
        for e in &self.entries[1..] {
            if e.1 > best.1 {
                best = e;
            }
        }
        &best.0
    }
}

impl SynthWorld {
    pub fn from_file(file: &WorldFile) -> Result<Self> {
        if file.schema != WORLD_SCHEMA {
            return Err(Error::Config(format!(
                "unsupported world schema {} (expected {WORLD_SCHEMA})",
                file.schema
            )));
        }
        let vocab = Vocabulary::new(file.vocab_size)?;
        let channel = AcousticChannel::new(
            vocab,
            file.obs_alphabet,
            file.d_max,
            file.noise_floor,
            &file.channel,
        )?;
        Ok(SynthWorld {
            vocab,
            l_max: file.l_max,
            channel,
            source: DomainPrior::new(file.source_prior.clone(), vocab, file.l_max)?,
            target: DomainPrior::new(file.target_prior.clone(), vocab, file.l_max)?,
            seed: file.seed,
        })
    }

    pub fn to_file(&self) -> WorldFile {
        WorldFile {
            schema: WORLD_SCHEMA,
            vocab_size: self.vocab.num_labels(),
            obs_alphabet: self.channel.obs_alphabet,
            l_max: self.l_max,
            d_max: self.channel.d_max,
            noise_floor: self.channel.noise_floor,
            channel: self.channel.to_spec(),
            source_prior: self.source.spec.clone(),
            target_prior: self.target.spec.clone(),
            seed: self.seed,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: WorldFile = serde_json::from_str(&text)?;
        Self::from_file(&file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_file())?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    /// Four labels, six observations, transcripts of up to three labels,
    /// segments of one or two frames and a 0.1 noise floor. The source prior
    /// prefers labels 1 and 2, the target prior prefers 3 and 4 with its own
    /// bigram structure. Labels 1/3 and 2/4 share an ambiguous observation.
    pub fn default_world(seed: u64) -> SynthWorld {
        let file = WorldFile {
            schema: WORLD_SCHEMA,
            vocab_size: 4,
            obs_alphabet: 6,
            l_max: 3,
            d_max: 2,
            noise_floor: 0.1,
            channel: ChannelSpec {
                emission: vec![
                    vec![0.5, 0.05, 0.0, 0.0, 0.45, 0.0],
                    vec![0.05, 0.5, 0.0, 0.0, 0.0, 0.45],
                    vec![0.0, 0.0, 0.5, 0.05, 0.45, 0.0],
                    vec![0.0, 0.0, 0.05, 0.5, 0.0, 0.45],
                ],
                duration: vec![vec![0.6, 0.4]; 4],
                silence_emission: vec![0.1, 0.1, 0.1, 0.1, 0.3, 0.3],
                silence_duration: vec![0.5, 0.5],
            },
            source_prior: PriorSpec::Bigram {
                initial: vec![0.35, 0.35, 0.1, 0.1, 0.1],
                transition: vec![
                    vec![0.2, 0.35, 0.1, 0.05, 0.3],
                    vec![0.35, 0.2, 0.05, 0.1, 0.3],
                    vec![0.3, 0.3, 0.05, 0.05, 0.3],
                    vec![0.3, 0.3, 0.05, 0.05, 0.3],
                ],
            },
            target_prior: PriorSpec::Bigram {
                initial: vec![0.1, 0.1, 0.35, 0.35, 0.1],
                transition: vec![
                    vec![0.05, 0.05, 0.3, 0.3, 0.3],
                    vec![0.05, 0.05, 0.3, 0.3, 0.3],
                    vec![0.05, 0.1, 0.1, 0.45, 0.3],
                    vec![0.1, 0.05, 0.45, 0.1, 0.3],
                ],
            },
            seed,
        };
        SynthWorld::from_file(&file).expect("default world is valid")
    }

    /// One observation per label (label `i` emits observation `i`, silence
    /// emits 0), every segment one frame long, no noise. Three labels and
    /// transcripts of up to three labels; the posterior of every sample is a
    /// point mass on its transcript.
    pub fn deterministic(seed: u64) -> SynthWorld {
        let v = 3;
        let mut emission = vec![vec![0.0; v + 1]; v];
        for (i, row) in emission.iter_mut().enumerate() {
            row[i + 1] = 1.0;
        }
        let mut silence = vec![0.0; v + 1];
        silence[0] = 1.0;
        let file = WorldFile {
            schema: WORLD_SCHEMA,
            vocab_size: v,
            obs_alphabet: v + 1,
            l_max: 3,
            d_max: 1,
            noise_floor: 0.0,
            channel: ChannelSpec {
                emission,
                duration: vec![vec![1.0]; v],
                silence_emission: silence,
                silence_duration: vec![1.0],
            },
            source_prior: PriorSpec::Bigram {
                initial: vec![0.3, 0.3, 0.3, 0.1],
                transition: vec![vec![0.2, 0.2, 0.2, 0.4]; 3],
            },
            target_prior: PriorSpec::Bigram {
                initial: vec![0.1, 0.2, 0.6, 0.1],
                transition: vec![vec![0.1, 0.1, 0.5, 0.3]; 3],
            },
            seed,
        };
        SynthWorld::from_file(&file).expect("deterministic world is valid")
    }

    /// A world whose source prior is the per-sequence mixture
    /// `(1 - alpha) P_source + alpha P_target`. The channel and target prior
    /// are unchanged.
    pub fn mixture_world(&self, alpha: f64) -> Result<SynthWorld> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Config(format!("mixture weight {alpha} outside [0, 1]")));
        }
        let source = if alpha == 0.0 {
            self.source.clone()
        } else if alpha == 1.0 {
            self.target.clone()
        } else {
            let mut entries: std::collections::BTreeMap<Vec<Symbol>, f64> = Default::default();
            for (w, p) in self.source.table.entries() {
                *entries.entry(w.clone()).or_insert(0.0) += (1.0 - alpha) * p;
            }
            for (w, p) in self.target.table.entries() {
                *entries.entry(w.clone()).or_insert(0.0) += alpha * p;
            }
            let table = TableLM::new(self.vocab, entries)?;
            DomainPrior {
                spec: PriorSpec::from_table(&table),
                table,
            }
        };
        Ok(SynthWorld {
            source,
            ..self.clone()
        })
    }

    pub fn vocab(&self) -> Vocabulary {
        self.vocab
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The same world with every sampling stream re-rooted at `seed`.
    pub fn with_seed(mut self, seed: u64) -> SynthWorld {
        self.seed = seed;
        self
    }

    pub fn channel(&self) -> &AcousticChannel {
        &self.channel
    }

    pub fn prior(&self, domain: Domain) -> &TableLM {
        match domain {
            Domain::Source => &self.source.table,
            Domain::Target => &self.target.table,
        }
    }

    /// Generator for `stream` derived from the world seed.
    pub fn stream(&self, stream: u64) -> ChaCha8Rng {
        rng_stream(self.seed, stream)
    }

    /// Draws `W` from the domain prior, then a duration and per-frame
    /// observations for each label (or one silence segment when `W` is empty).
    pub fn sample_utterance<R: Rng + ?Sized>(&self, domain: Domain, rng: &mut R) -> Utterance {
        let prior = self.prior(domain);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut transcript = None;
        let mut last = None;
        for (w, p) in prior.entries() {
            acc += p;
            last = Some(w);
            if u < acc {
                transcript = Some(w.clone());
                break;
            }
        }
        let transcript = transcript.unwrap_or_else(|| last.expect("non-empty prior").clone());
        let mut frames = Vec::new();
        if transcript.is_empty() {
            self.channel.sample_segment(0, rng, &mut frames);
        }
        for s in &transcript {
            self.channel.sample_segment(s.index(), rng, &mut frames);
        }
        Utterance {
            frames,
            transcript,
            domain,
        }
    }

    pub fn sample_many(&self, domain: Domain, stream: u64, n: usize) -> Vec<Utterance> {
        let mut rng = self.stream(stream);
        (0..n).map(|_| self.sample_utterance(domain, &mut rng)).collect()
    }

    /// `log p(X | W)`, exact over all segmentations; `-inf` when infeasible.
    pub fn true_likelihood(&self, frames: &[Observation], w: &[Symbol]) -> f64 {
        self.channel.segments(frames).likelihood(w).ln()
    }

    fn check_enumeration_bound(&self) -> Result<()> {
        if self.vocab.num_labels() > 6 || self.l_max > 4 {
            return Err(Error::EnumerationBound(format!(
                "posterior enumeration needs V <= 6 and l_max <= 4 (have V = {}, l_max = {})",
                self.vocab.num_labels(),
                self.l_max
            )));
        }
        Ok(())
    }

    /// `P(W | X) = p(X | W) P(W) / p(X)` for every `W` with `|W| <= l_max`.
    pub fn true_posterior(&self, domain: Domain, frames: &[Observation]) -> Result<Posterior> {
        self.check_enumeration_bound()?;
        let segs = self.channel.segments(frames);
        let prior = self.prior(domain);
        let joint: Vec<(Vec<Symbol>, f64)> = self
            .vocab
            .sequences_up_to(self.l_max)
            .into_iter()
            .map(|w| {
                let p = segs.likelihood(&w) * prior.prob(&w);
                (w, p)
            })
            .collect();
        let evidence: f64 = joint.iter().map(|(_, p)| p).sum();
        if evidence <= 0.0 {
            return Err(Error::Config(format!(
                "observation sequence {frames:?} has zero probability in this world"
            )));
        }
        Ok(Posterior {
            entries: joint.into_iter().map(|(w, p)| (w, p / evidence)).collect(),
            log_evidence: evidence.ln(),
        })
    }

    /// `log p(X)` under `domain`.
    pub fn log_evidence(&self, domain: Domain, frames: &[Observation]) -> Result<f64> {
        Ok(self.true_posterior(domain, frames)?.log_evidence)
    }

    /// `log k(X) = log p_source(X) - log p_target(X)`; the same for every hypothesis.
    pub fn log_marginal_ratio(&self, frames: &[Observation]) -> Result<f64> {
        Ok(self.log_evidence(Domain::Source, frames)? - self.log_evidence(Domain::Target, frames)?)
    }

    /// Both sides of the scaled-likelihood identity
    /// `p(X | W) = p(X) P(W | X) / P(W)`: returns
    /// `(log p(X) + log P(W|X) - log P(W), log p(X | W))`, or `None` when the
    /// prior gives `W` no mass.
    pub fn scaled_likelihood_identity(
        &self,
        domain: Domain,
        frames: &[Observation],
        w: &[Symbol],
    ) -> Result<Option<(f64, f64)>> {
        let prior = self.prior(domain).prob(w);
        if prior == 0.0 {
            return Ok(None);
        }
        let post = self.true_posterior(domain, frames)?;
        let lhs = post.log_evidence + post.prob(w).ln() - prior.ln();
        let rhs = self.true_likelihood(frames, w);
        Ok(Some((lhs, rhs)))
    }
}
