//! Density-ratio fusion with the exact priors turns a source-domain posterior
//! into the target-domain posterior, up to one normalizer per utterance.

use fusionlab::fusion::{sequence_fused_score_with, FusionConfig, FusionLms};
use fusionlab::synthworld::{streams, SynthWorld};
use fusionlab::transducer::{OracleTransducer, Semiring};
use fusionlab::{log_add, Domain};

fn main() -> fusionlab::Result<()> {
    let world = SynthWorld::default_world(1);
    let oracle = OracleTransducer::new(&world, Domain::Source);
    let lms = FusionLms::new(world.prior(Domain::Target), Some(world.prior(Domain::Source)));
    let config = FusionConfig::density_ratio(1.0, 1.0, 0.0).with_eos(true);
    let hyps = world.vocab().sequences_up_to(world.l_max());

    let mut worst: f64 = 0.0;
    for u in world.sample_many(Domain::Target, streams::USER, 50) {
        let scores = hyps
            .iter()
            .map(|w| sequence_fused_score_with(&oracle, &lms, &config, &u.frames, w, Semiring::Sum))
            .collect::<fusionlab::Result<Vec<f64>>>()?;
        let norm = scores.iter().fold(f64::NEG_INFINITY, |a, &b| log_add(a, b));
        let truth = world.true_posterior(Domain::Target, &u.frames)?;
        for (w, s) in hyps.iter().zip(&scores) {
            worst = worst.max(((s - norm).exp() - truth.prob(w)).abs());
        }
    }
    println!("{} hypotheses per utterance, 50 utterances", hyps.len());
    println!("max |recovered - true target posterior| = {worst:.3e}");
    Ok(())
}
