//! Per-step score fusion: none, shallow fusion, and density ratio.
//!
//! For a label emission the fused score is
//!
//! ```text
//! log P(s | X, t, h) + λτ log Pτ(s | h) - λψ log Pψ(s | h) + β
//! ```
//!
//! where the source-LM term is present only in density-ratio mode and both LM
//! terms are absent in mode `none`. Blank emissions always keep the
//! unmodified transducer score.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::LanguageModel;
use crate::transducer::{lattice_pass, Semiring, StepScorer};
use crate::types::{log_mul, Observation, Symbol};
use crate::LogProb;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    None,
    Shallow,
    DensityRatio,
}

impl FusionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FusionMode::None => "none",
            FusionMode::Shallow => "shallow",
            FusionMode::DensityRatio => "density_ratio",
        }
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(FusionMode::None),
            "shallow" => Ok(FusionMode::Shallow),
            "density_ratio" => Ok(FusionMode::DensityRatio),
            other => Err(Error::Config(format!(
                "unknown fusion mode `{other}` (expected none|shallow|density_ratio)"
            ))),
        }
    }
}

/// Scales and reward of the fused decoding score. Shallow fusion uses
/// `lambda_tau` as its single LM scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub mode: FusionMode,
    pub lambda_tau: f64,
    pub lambda_psi: f64,
    pub beta: f64,
    #[serde(default)]
    pub include_eos_at_finalization: bool,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig::none(0.0)
    }
}

impl FusionConfig {
    pub fn none(beta: f64) -> Self {
        FusionConfig {
            mode: FusionMode::None,
            lambda_tau: 0.0,
            lambda_psi: 0.0,
            beta,
            include_eos_at_finalization: false,
        }
    }

    pub fn shallow(lambda: f64, beta: f64) -> Self {
        FusionConfig {
            mode: FusionMode::Shallow,
            lambda_tau: lambda,
            lambda_psi: 0.0,
            beta,
            include_eos_at_finalization: false,
        }
    }

    pub fn density_ratio(lambda_tau: f64, lambda_psi: f64, beta: f64) -> Self {
        FusionConfig {
            mode: FusionMode::DensityRatio,
            lambda_tau,
            lambda_psi,
            beta,
            include_eos_at_finalization: false,
        }
    }

    pub fn with_eos(mut self, on: bool) -> Self {
        self.include_eos_at_finalization = on;
        self
    }

    /// The target scale in use (0 in mode `none`).
    pub fn effective_lambda_tau(&self) -> f64 {
        match self.mode {
            FusionMode::None => 0.0,
            _ => self.lambda_tau,
        }
    }

    /// The source scale in use (non-zero only in density-ratio mode).
    pub fn effective_lambda_psi(&self) -> f64 {
        match self.mode {
            FusionMode::DensityRatio => self.lambda_psi,
            _ => 0.0,
        }
    }

    /// Scales must be finite and non-negative, the reward finite.
    pub fn check_scales(&self) -> Result<()> {
        for (name, x) in [("lambda_tau", self.lambda_tau), ("lambda_psi", self.lambda_psi)] {
            if !(x >= 0.0 && x.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {x}")));
            }
        }
        if !self.beta.is_finite() {
            return Err(Error::Config(format!("beta must be finite, got {}", self.beta)));
        }
        Ok(())
    }

    /// Checks scales and that the LMs this mode needs are present and agree
    /// on the vocabulary.
    pub fn check(&self, lms: &FusionLms<'_>) -> Result<()> {
        self.check_scales()?;
        if self.mode != FusionMode::None && lms.target.is_none() {
            return Err(Error::Config(format!("{} fusion requires a target-domain LM", self.mode)));
        }
        if self.mode == FusionMode::DensityRatio && lms.source.is_none() {
            return Err(Error::MissingSourceLm);
        }
        if let (Some(t), Some(s)) = (lms.target, lms.source) {
            if t.vocab() != s.vocab() {
                return Err(Error::VocabularyMismatch(format!(
                    "target LM has {} labels, source LM has {}",
                    t.vocab().num_labels(),
                    s.vocab().num_labels()
                )));
            }
        }
        Ok(())
    }

    /// [`check`](Self::check) plus the search-time requirement that a
    /// density-ratio source LM never assigns zero probability.
    pub fn check_for_search(&self, lms: &FusionLms<'_>) -> Result<()> {
        self.check(lms)?;
        if self.effective_lambda_psi() > 0.0 && lms.source.is_some_and(|s| !s.is_zero_free()) {
            return Err(Error::SourceLmNotZeroFree);
        }
        Ok(())
    }
}

/// The external LMs available to fusion.
#[derive(Clone, Copy, Default)]
pub struct FusionLms<'a> {
    pub target: Option<&'a dyn LanguageModel>,
    pub source: Option<&'a dyn LanguageModel>,
}

impl<'a> FusionLms<'a> {
    pub fn new(target: &'a dyn LanguageModel, source: Option<&'a dyn LanguageModel>) -> Self {
        FusionLms {
            target: Some(target),
            source,
        }
    }

    pub fn empty() -> Self {
        FusionLms::default()
    }
}

/// One fused step score and its parts. `target_lm` and `source_lm` are the
/// signed contributions (`+λτ log Pτ`, `-λψ log Pψ`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FusedStepScore {
    pub total: f64,
    pub base: f64,
    pub target_lm: f64,
    pub source_lm: f64,
    pub beta: f64,
}

impl FusedStepScore {
    fn unfused(base: f64) -> Self {
        FusedStepScore {
            total: base,
            base,
            target_lm: 0.0,
            source_lm: 0.0,
            beta: 0.0,
        }
    }
}

/// `scale * lp`, with a zero scale switching the term off even when `lp`
/// is `-inf`.
fn scaled(scale: f64, lp: f64) -> f64 {
    if scale == 0.0 {
        0.0
    } else {
        scale * lp
    }
}

/// Fuses one step given the LMs' next-token rows for the current history
/// (label `s` at index `s - 1`). This is the decoder's inner loop.
pub(crate) fn fuse_with_rows(
    base: f64,
    symbol: Symbol,
    history: &[Symbol],
    target_row: Option<&[f64]>,
    source_row: Option<&[f64]>,
    config: &FusionConfig,
) -> Result<FusedStepScore> {
    if symbol.is_blank() || base == f64::NEG_INFINITY {
        return Ok(FusedStepScore::unfused(base));
    }
    let idx = symbol.index() - 1;
    let lt = config.effective_lambda_tau();
    let lp = config.effective_lambda_psi();
    let target_lm = match target_row {
        Some(row) if lt != 0.0 => scaled(lt, row[idx]),
        _ => 0.0,
    };
    let source_lm = match source_row {
        Some(row) if lp != 0.0 => -scaled(lp, row[idx]),
        _ => 0.0,
    };
    if target_lm == f64::NEG_INFINITY {
        return Ok(FusedStepScore {
            total: f64::NEG_INFINITY,
            base,
            target_lm,
            source_lm: 0.0,
            beta: config.beta,
        });
    }
    if source_lm == f64::INFINITY {
        return Err(Error::ZeroSourceMass {
            label: symbol.0,
            history: history.iter().map(|s| s.0).collect(),
        });
    }
    Ok(FusedStepScore {
        total: base + (target_lm + source_lm) + config.beta,
        base,
        target_lm,
        source_lm,
        beta: config.beta,
    })
}

/// Fused decoding score of emitting `symbol` after `history`, where `base`
/// is the transducer's log-probability for it.
pub fn fused_step_score(
    base: LogProb,
    symbol: Symbol,
    history: &[Symbol],
    lms: &FusionLms<'_>,
    config: &FusionConfig,
) -> Result<FusedStepScore> {
    config.check(lms)?;
    if symbol.is_blank() {
        return Ok(FusedStepScore::unfused(base.0));
    }
    let target_row = match (config.mode, lms.target) {
        (FusionMode::None, _) => None,
        (_, Some(lm)) => {
            lm.log_prob(crate::lm::LmToken::Label(symbol), history)?;
            Some(lm.next_log_probs(history))
        }
        (_, None) => None,
    };
    let source_row = match (config.mode, lms.source) {
        (FusionMode::DensityRatio, Some(lm)) => Some(lm.next_log_probs(history)),
        _ => None,
    };
    fuse_with_rows(base.0, symbol, history, target_row, source_row, config)
}

/// `log [Pτ(s|h) / Pψ(s|h) · P(s|X,t,h)]`. Not normalized over symbols.
pub fn pseudo_posterior(
    base: LogProb,
    symbol: Symbol,
    history: &[Symbol],
    target: &dyn LanguageModel,
    source: &dyn LanguageModel,
) -> Result<LogProb> {
    if symbol.is_blank() {
        return Err(Error::Config("pseudo-posterior is defined for labels only".into()));
    }
    let cfg = FusionConfig::density_ratio(1.0, 1.0, 0.0);
    let lms = FusionLms::new(target, Some(source));
    fused_step_score(base, symbol, history, &lms, &cfg).map(|s| LogProb(s.total))
}

/// End-of-sequence bonus applied to a finished hypothesis when
/// `include_eos_at_finalization` is set; zero otherwise.
pub fn finalization_bonus(labels: &[Symbol], lms: &FusionLms<'_>, config: &FusionConfig) -> Result<f64> {
    if !config.include_eos_at_finalization || config.mode == FusionMode::None {
        return Ok(0.0);
    }
    let eos = |lm: &dyn LanguageModel| lm.next_log_probs(labels)[lm.vocab().num_labels()];
    let t = lms.target.map_or(0.0, |lm| scaled(config.effective_lambda_tau(), eos(lm)));
    let s = match lms.source {
        Some(lm) if config.mode == FusionMode::DensityRatio => -scaled(config.effective_lambda_psi(), eos(lm)),
        _ => 0.0,
    };
    if t == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    if s == f64::INFINITY {
        return Err(Error::ZeroSourceMass {
            label: 0,
            history: labels.iter().map(|s| s.0).collect(),
        });
    }
    Ok(t + s)
}

/// Best-alignment fused score of `w`: the Viterbi lattice with every
/// transition scored by [`fused_step_score`], plus the optional
/// end-of-sequence bonus.
pub fn sequence_fused_score(
    scorer: &dyn StepScorer,
    lms: &FusionLms<'_>,
    config: &FusionConfig,
    frames: &[Observation],
    w: &[Symbol],
) -> Result<f64> {
    sequence_fused_score_with(scorer, lms, config, frames, w, Semiring::Max)
}

/// [`sequence_fused_score`] with a choice of semiring; `Semiring::Sum` sums
/// the fused scores over alignments.
pub fn sequence_fused_score_with(
    scorer: &dyn StepScorer,
    lms: &FusionLms<'_>,
    config: &FusionConfig,
    frames: &[Observation],
    w: &[Symbol],
    semiring: Semiring,
) -> Result<f64> {
    config.check(lms)?;
    scorer.vocab().check_labels(w)?;
    let bound = scorer.bind(frames)?;
    let target = if config.mode == FusionMode::None { None } else { lms.target };
    let source = if config.mode == FusionMode::DensityRatio { lms.source } else { None };
    let score = lattice_pass(bound.as_ref(), w, semiring, |u, s, base| {
        let h = &w[..u];
        fuse_with_rows(
            base,
            s,
            h,
            target.map(|lm| lm.next_log_probs(h)),
            source.map(|lm| lm.next_log_probs(h)),
            config,
        )
        .map(|f| f.total)
    })?;
    Ok(log_mul(score, finalization_bonus(w, lms, config)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{train_ngram, TableLM};
    use crate::types::{labels, Vocabulary};

    fn table_pair() -> (TableLM, TableLM) {
        let v = Vocabulary::new(2).unwrap();
        // P(1 | start) = 0.4 under tau, 0.2 under psi
        let tau = TableLM::new(v, vec![(labels(&[1]), 0.4), (labels(&[2]), 0.6)]).unwrap();
        let psi = TableLM::new(v, vec![(labels(&[1]), 0.2), (labels(&[2]), 0.8)]).unwrap();
        (tau, psi)
    }

    #[test]
    fn blank_is_never_modified() {
        let (tau, psi) = table_pair();
        let lms = FusionLms::new(&tau, Some(&psi));
        for cfg in [
            FusionConfig::none(0.7),
            FusionConfig::shallow(0.3, 0.6),
            FusionConfig::density_ratio(0.5, 0.6, -0.1),
        ] {
            let f = fused_step_score(LogProb(-0.9), Symbol::BLANK, &[], &lms, &cfg).unwrap();
            assert_eq!(f.total, -0.9);
            assert_eq!((f.target_lm, f.source_lm, f.beta), (0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn density_ratio_arithmetic() {
        let (tau, psi) = table_pair();
        let lms = FusionLms::new(&tau, Some(&psi));
        let cfg = FusionConfig::density_ratio(1.0, 1.0, 0.0);
        let f = fused_step_score(LogProb(0.5f64.ln()), Symbol(1), &[], &lms, &cfg).unwrap();
        assert!(f.total.abs() < 1e-15);
        let parts = f.base + f.target_lm + f.source_lm + f.beta;
        assert!((parts - f.total).abs() < 1e-12);
    }

    #[test]
    fn shallow_fusion_operating_point() {
        let (tau, _) = table_pair();
        let lms = FusionLms::new(&tau, None);
        let cfg = FusionConfig::shallow(0.3, 0.6);
        let f = fused_step_score(LogProb(0.5f64.ln()), Symbol(1), &[], &lms, &cfg).unwrap();
        assert!((f.total - (-0.3680)).abs() < 1e-4, "{}", f.total);
    }

    #[test]
    fn mode_none_adds_beta_only() {
        let (tau, psi) = table_pair();
        let lms = FusionLms::new(&tau, Some(&psi));
        let f = fused_step_score(LogProb(-1.0), Symbol(2), &[], &lms, &FusionConfig::none(0.25)).unwrap();
        assert_eq!(f.total, -0.75);
    }

    #[test]
    fn identical_lms_cancel() {
        let v = Vocabulary::new(3).unwrap();
        let lm = train_ngram(&[labels(&[1, 2]), labels(&[3])], 2, 0.5, v).unwrap();
        let lms = FusionLms::new(&lm, Some(&lm));
        for base in [-0.1, -1.7, -13.25] {
            for s in 1..=3 {
                let p = pseudo_posterior(LogProb(base), Symbol(s), &labels(&[1]), &lm, &lm).unwrap();
                assert_eq!(p.0, base);
                let dr = fused_step_score(LogProb(base), Symbol(s), &labels(&[2]), &lms, &FusionConfig::density_ratio(0.7, 0.7, 0.3)).unwrap();
                let none = fused_step_score(LogProb(base), Symbol(s), &labels(&[2]), &lms, &FusionConfig::none(0.3)).unwrap();
                assert_eq!(dr.total.to_bits(), none.total.to_bits());
            }
        }
    }

    #[test]
    fn zero_source_mass_is_reported() {
        let v = Vocabulary::new(2).unwrap();
        let tau = TableLM::new(v, vec![(labels(&[1]), 0.5), (labels(&[2]), 0.5)]).unwrap();
        let psi = TableLM::new(v, vec![(labels(&[2]), 1.0)]).unwrap();
        let err = pseudo_posterior(LogProb(-1.0), Symbol(1), &[], &tau, &psi).unwrap_err();
        assert!(matches!(err, Error::ZeroSourceMass { label: 1, .. }));
        let lms = FusionLms::new(&tau, Some(&psi));
        assert!(matches!(
            FusionConfig::density_ratio(1.0, 1.0, 0.0).check_for_search(&lms),
            Err(Error::SourceLmNotZeroFree)
        ));
    }

    #[test]
    fn density_ratio_needs_source() {
        let (tau, _) = table_pair();
        let lms = FusionLms::new(&tau, None);
        assert!(matches!(
            fused_step_score(LogProb(-1.0), Symbol(1), &[], &lms, &FusionConfig::density_ratio(1.0, 1.0, 0.0)),
            Err(Error::MissingSourceLm)
        ));
    }

    #[test]
    fn zero_scale_ignores_impossible_tokens() {
        let v = Vocabulary::new(2).unwrap();
        let tau = TableLM::new(v, vec![(labels(&[2]), 1.0)]).unwrap();
        let lms = FusionLms::new(&tau, Some(&tau));
        let f = fused_step_score(LogProb(-1.0), Symbol(1), &[], &lms, &FusionConfig::density_ratio(0.0, 0.0, 0.1)).unwrap();
        assert_eq!(f.total, -1.0 + 0.1);
    }

    #[test]
    fn mode_parsing() {
        for m in [FusionMode::None, FusionMode::Shallow, FusionMode::DensityRatio] {
            assert_eq!(m.as_str().parse::<FusionMode>().unwrap(), m);
        }
        assert!("deep".parse::<FusionMode>().is_err());
    }
}
