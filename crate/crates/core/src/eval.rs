//! Word error rate with a deletion/insertion/substitution split, and the
//! scale/reward grid sweeps used to tune fusion on a dev set.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::decoder::{decode_corpus, BeamConfig};
use crate::error::{Error, Result};
use crate::fusion::{FusionConfig, FusionLms, FusionMode};
use crate::transducer::StepScorer;
use crate::types::{Symbol, Utterance};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditCounts {
    pub ref_tokens: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub substitutions: usize,
}

impl EditCounts {
    pub fn errors(&self) -> usize {
        self.deletions + self.insertions + self.substitutions
    }

    fn add(&mut self, other: &EditCounts) {
        self.ref_tokens += other.ref_tokens;
        self.deletions += other.deletions;
        self.insertions += other.insertions;
        self.substitutions += other.substitutions;
    }
}

/// Error rates over `ref_tokens`. With an empty reference the rates are
/// taken over a denominator of 1 and `empty_reference` is set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WerBreakdown {
    pub wer: f64,
    pub del_rate: f64,
    pub ins_rate: f64,
    pub sub_rate: f64,
    pub counts: EditCounts,
    pub empty_reference: bool,
}

impl WerBreakdown {
    pub fn from_counts(counts: EditCounts) -> Self {
        let denom = counts.ref_tokens.max(1) as f64;
        let del_rate = counts.deletions as f64 / denom;
        let ins_rate = counts.insertions as f64 / denom;
        let sub_rate = counts.substitutions as f64 / denom;
        WerBreakdown {
            wer: counts.errors() as f64 / denom,
            del_rate,
            ins_rate,
            sub_rate,
            counts,
            empty_reference: counts.ref_tokens == 0,
        }
    }
}

/// Minimum edit distance alignment with unit costs. Among minimum-cost
/// alignments the split is fixed by back-pointer priority: diagonal (match or
/// substitution), then up (deletion), then left (insertion).
pub fn edit_counts(reference: &[Symbol], hypothesis: &[Symbol]) -> EditCounts {
    let n = reference.len();
    let m = hypothesis.len();
    let mut d = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=m {
        d[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = d[i - 1][j - 1] + usize::from(reference[i - 1] != hypothesis[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    let mut counts = EditCounts {
        ref_tokens: n,
        ..Default::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 {
            let mismatch = reference[i - 1] != hypothesis[j - 1];
            if d[i][j] == d[i - 1][j - 1] + usize::from(mismatch) {
                counts.substitutions += usize::from(mismatch);
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && d[i][j] == d[i - 1][j] + 1 {
            counts.deletions += 1;
            i -= 1;
        } else {
            counts.insertions += 1;
            j -= 1;
        }
    }
    counts
}

pub fn wer(reference: &[Symbol], hypothesis: &[Symbol]) -> WerBreakdown {
    WerBreakdown::from_counts(edit_counts(reference, hypothesis))
}

/// Pooled WER: total errors over total reference tokens.
pub fn corpus_wer<'a, I>(pairs: I) -> Result<WerBreakdown>
where
    I: IntoIterator<Item = (&'a [Symbol], &'a [Symbol])>,
{
    let mut total = EditCounts::default();
    for (r, h) in pairs {
        total.add(&edit_counts(r, h));
    }
    if total.ref_tokens == 0 {
        return Err(Error::EmptyReferences);
    }
    Ok(WerBreakdown::from_counts(total))
}

/// Decodes `data` and scores the top-1 hypotheses.
pub fn evaluate(
    scorer: &dyn StepScorer,
    lms: &FusionLms<'_>,
    fusion: &FusionConfig,
    beam: &BeamConfig,
    data: &[Utterance],
) -> Result<(Vec<Vec<Symbol>>, WerBreakdown)> {
    let hyps = decode_corpus(scorer, lms, fusion, beam, data)?;
    let breakdown = corpus_wer(
        data.iter()
            .zip(&hyps)
            .map(|(u, h)| (u.transcript.as_slice(), h.as_slice())),
    )?;
    Ok((hyps, breakdown))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepAxis {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub config: FusionConfig,
    pub breakdown: WerBreakdown,
}

/// A two-axis grid of dev-set results. Cells are stored row-major: the first
/// axis is the outer loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub mode: FusionMode,
    pub axes: [SweepAxis; 2],
    pub cells: Vec<SweepCell>,
    pub argmin: usize,
}

pub const SWEEP_CSV_HEADER: &str = "mode,lambda_psi,lambda_tau,beta,wer,del,ins,sub,n_ref_tokens";

fn csv_row(cell: &SweepCell) -> String {
    let c = &cell.config;
    let b = &cell.breakdown;
    format!(
        "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
        c.mode,
        c.effective_lambda_psi(),
        c.effective_lambda_tau(),
        c.beta,
        b.wer,
        b.del_rate,
        b.ins_rate,
        b.sub_rate,
        b.counts.ref_tokens
    )
}

impl SweepResult {
    fn new(mode: FusionMode, axes: [SweepAxis; 2], cells: Vec<SweepCell>) -> Result<Self> {
        let (n0, n1) = (axes[0].values.len(), axes[1].values.len());
        if cells.len() != n0 * n1 || cells.is_empty() {
            return Err(Error::Config("sweep grid is not fully populated".into()));
        }
        // fewest errors, then smallest first-axis value, then smallest second
        let key = |i: usize| {
            (
                cells[i].breakdown.counts.errors(),
                axes[0].values[i / n1],
                axes[1].values[i % n1],
            )
        };
        let argmin = (0..cells.len())
            .min_by(|&a, &b| key(a).partial_cmp(&key(b)).expect("finite grid values"))
            .unwrap();
        Ok(SweepResult {
            mode,
            axes,
            cells,
            argmin,
        })
    }

    pub fn best(&self) -> &SweepCell {
        &self.cells[self.argmin]
    }

    pub fn cell(&self, i0: usize, i1: usize) -> &SweepCell {
        &self.cells[i0 * self.axes[1].values.len() + i1]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(SWEEP_CSV_HEADER);
        out.push('\n');
        for cell in &self.cells {
            out.push_str(&csv_row(cell));
            out.push('\n');
        }
        let _ = writeln!(out, "# argmin,{}", csv_row(self.best()));
        out
    }
}

fn check_grid(name: &str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Config(format!("{name} grid is empty")));
    }
    if grid.iter().any(|x| !x.is_finite()) {
        return Err(Error::Config(format!("{name} grid has non-finite values")));
    }
    Ok(())
}

/// Joint sweep of one LM scale and the label reward. In density-ratio mode
/// the scale is shared: `λψ = λτ = λ`.
#[allow(clippy::too_many_arguments)]
pub fn sweep_lambda_beta(
    dev: &[Utterance],
    scorer: &dyn StepScorer,
    lms: &FusionLms<'_>,
    mode: FusionMode,
    lambda_grid: &[f64],
    beta_grid: &[f64],
    beam: &BeamConfig,
    include_eos: bool,
) -> Result<SweepResult> {
    check_grid("lambda", lambda_grid)?;
    check_grid("beta", beta_grid)?;
    let mut cells = Vec::with_capacity(lambda_grid.len() * beta_grid.len());
    for &lambda in lambda_grid {
        for &beta in beta_grid {
            let config = match mode {
                FusionMode::None => FusionConfig::none(beta),
                FusionMode::Shallow => FusionConfig::shallow(lambda, beta),
                FusionMode::DensityRatio => FusionConfig::density_ratio(lambda, lambda, beta),
            }
            .with_eos(include_eos);
            let (_, breakdown) = evaluate(scorer, lms, &config, beam, dev)?;
            cells.push(SweepCell { config, breakdown });
        }
    }
    SweepResult::new(
        mode,
        [
            SweepAxis {
                name: "lambda".into(),
                values: lambda_grid.to_vec(),
            },
            SweepAxis {
                name: "beta".into(),
                values: beta_grid.to_vec(),
            },
        ],
        cells,
    )
}

/// Density-ratio sweep over independent source and target scales at a fixed
/// label reward.
#[allow(clippy::too_many_arguments)]
pub fn sweep_lambda_pair(
    dev: &[Utterance],
    scorer: &dyn StepScorer,
    lms: &FusionLms<'_>,
    beta: f64,
    lambda_psi_grid: &[f64],
    lambda_tau_grid: &[f64],
    beam: &BeamConfig,
    include_eos: bool,
) -> Result<SweepResult> {
    check_grid("lambda_psi", lambda_psi_grid)?;
    check_grid("lambda_tau", lambda_tau_grid)?;
    let mut cells = Vec::with_capacity(lambda_psi_grid.len() * lambda_tau_grid.len());
    for &lp in lambda_psi_grid {
        for &lt in lambda_tau_grid {
            let config = FusionConfig::density_ratio(lt, lp, beta).with_eos(include_eos);
            let (_, breakdown) = evaluate(scorer, lms, &config, beam, dev)?;
            cells.push(SweepCell { config, breakdown });
        }
    }
    SweepResult::new(
        FusionMode::DensityRatio,
        [
            SweepAxis {
                name: "lambda_psi".into(),
                values: lambda_psi_grid.to_vec(),
            },
            SweepAxis {
                name: "lambda_tau".into(),
                values: lambda_tau_grid.to_vec(),
            },
        ],
        cells,
    )
}

/// Cells whose WER is within `(1 + slack)` of the grid minimum.
#[derive(Clone, Debug, PartialEq)]
pub struct SweetSpot {
    pub min_wer: f64,
    pub cells: usize,
    /// For each axis, the number of its grid values that have at least one
    /// qualifying cell.
    pub widths: Vec<(String, usize)>,
}

impl SweetSpot {
    pub fn width(&self, axis: &str) -> Option<usize> {
        self.widths.iter().find(|(n, _)| n == axis).map(|(_, w)| *w)
    }
}

pub fn sweet_spot_width(result: &SweepResult, slack: f64) -> SweetSpot {
    let min_wer = result.best().breakdown.wer;
    let threshold = (1.0 + slack) * min_wer;
    let n1 = result.axes[1].values.len();
    let inside: Vec<usize> = (0..result.cells.len())
        .filter(|&i| result.cells[i].breakdown.wer <= threshold + 1e-12)
        .collect();
    let width = |axis: usize| {
        let mut hit = vec![false; result.axes[axis].values.len()];
        for &i in &inside {
            hit[if axis == 0 { i / n1 } else { i % n1 }] = true;
        }
        hit.iter().filter(|h| **h).count()
    };
    SweetSpot {
        min_wer,
        cells: inside.len(),
        widths: vec![
            (result.axes[0].name.clone(), width(0)),
            (result.axes[1].name.clone(), width(1)),
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::labels;

    #[test]
    fn identical_sequences() {
        let w = wer(&labels(&[1, 2, 3]), &labels(&[1, 2, 3]));
        assert_eq!(w.wer, 0.0);
        assert_eq!(w.counts.errors(), 0);
    }

    #[test]
    fn single_deletion() {
        let w = wer(&labels(&[1, 2, 3]), &labels(&[1, 3]));
        assert_eq!(w.counts.deletions, 1);
        assert_eq!(w.counts.errors(), 1);
        assert!((w.wer - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn substitution_and_insertion() {
        let w = wer(&labels(&[1, 2, 3]), &labels(&[4, 2, 5, 3]));
        assert_eq!(w.counts.substitutions, 1);
        assert_eq!(w.counts.insertions, 1);
        assert_eq!(w.counts.deletions, 0);
        assert!((w.wer - 2.0 / 3.0).abs() < 1e-15);
        assert!((w.del_rate + w.ins_rate + w.sub_rate - w.wer).abs() < 1e-12);
    }

    #[test]
    fn substitution_preferred_over_del_ins() {
        let c = edit_counts(&labels(&[1]), &labels(&[2]));
        assert_eq!((c.substitutions, c.deletions, c.insertions), (1, 0, 0));
    }

    #[test]
    fn empty_reference_policy() {
        let w = wer(&[], &labels(&[1, 2]));
        assert!(w.empty_reference);
        assert_eq!(w.counts.ref_tokens, 0);
        assert_eq!(w.wer, 2.0);
        assert_eq!(w.counts.insertions, 2);
        assert_eq!(wer(&[], &[]).wer, 0.0);
    }

    #[test]
    fn corpus_pooling() {
        let a_ref = labels(&[1, 2]);
        let a_hyp = labels(&[1]);
        let b_ref = labels(&[1, 2, 3, 4]);
        let pairs = vec![(a_ref.as_slice(), a_hyp.as_slice()), (b_ref.as_slice(), b_ref.as_slice())];
        let pooled = corpus_wer(pairs.clone()).unwrap();
        assert!((pooled.wer - 1.0 / 6.0).abs() < 1e-15);
        let mean = pairs.iter().map(|(r, h)| wer(r, h).wer).sum::<f64>() / 2.0;
        assert!((mean - 0.25).abs() < 1e-15);
        assert!((pooled.wer - mean).abs() > 0.05);
        let doubled = corpus_wer(vec![pairs[0], pairs[0]]).unwrap();
        assert_eq!(doubled.wer, corpus_wer(vec![pairs[0]]).unwrap().wer);
        let empty: Vec<Symbol> = vec![];
        assert!(matches!(
            corpus_wer(vec![(empty.as_slice(), a_hyp.as_slice())]),
            Err(Error::EmptyReferences)
        ));
    }

    fn grid(wers: &[&[usize]]) -> SweepResult {
        let n0 = wers.len();
        let n1 = wers[0].len();
        let mut cells = Vec::new();
        for (i, row) in wers.iter().enumerate() {
            for (j, &e) in row.iter().enumerate() {
                cells.push(SweepCell {
                    config: FusionConfig::shallow(i as f64, j as f64),
                    breakdown: WerBreakdown::from_counts(EditCounts {
                        ref_tokens: 100,
                        substitutions: e,
                        ..Default::default()
                    }),
                });
            }
        }
        SweepResult::new(
            FusionMode::Shallow,
            [
                SweepAxis { name: "lambda".into(), values: (0..n0).map(|x| x as f64).collect() },
                SweepAxis { name: "beta".into(), values: (0..n1).map(|x| x as f64).collect() },
            ],
            cells,
        )
        .unwrap()
    }

    #[test]
    fn sweet_spot_counts() {
        let flat = grid(&[&[5, 5], &[5, 5]]);
        assert_eq!(sweet_spot_width(&flat, 0.0).cells, 4);
        assert_eq!(flat.argmin, 0);
        let bowl = grid(&[&[9, 6, 9], &[6, 2, 6], &[9, 6, 9]]);
        let s = sweet_spot_width(&bowl, 0.0);
        assert_eq!(s.cells, 1);
        assert_eq!(s.width("lambda"), Some(1));
        assert_eq!(bowl.argmin, 4);
        let s = sweet_spot_width(&bowl, 2.0);
        assert_eq!((s.cells, s.width("lambda"), s.width("beta")), (5, Some(3), Some(3)));
    }

    #[test]
    fn csv_layout() {
        let g = grid(&[&[3, 2]]);
        let csv = g.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], SWEEP_CSV_HEADER);
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[2], "shallow,0.000000,0.000000,1.000000,0.020000,0.000000,0.000000,0.020000,100");
        assert_eq!(lines[3], format!("# argmin,{}", lines[2]));
    }
}
