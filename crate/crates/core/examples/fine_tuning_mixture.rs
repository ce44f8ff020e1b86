//! A source model partly adapted to the target domain: the scorer's prior is
//! a mixture of the two domain priors. Fusion gains shrink as adaptation grows.

use fusionlab::decoder::BeamConfig;
use fusionlab::eval::{evaluate, sweep_lambda_beta};
use fusionlab::fusion::{FusionLms, FusionMode};
use fusionlab::lm::train_ngram;
use fusionlab::synthworld::{streams, SynthWorld};
use fusionlab::transducer::OracleTransducer;
use fusionlab::{Domain, Symbol};

fn main() -> fusionlab::Result<()> {
    let world = SynthWorld::default_world(6);
    let text = |d, s| -> Vec<Vec<Symbol>> { world.sample_many(d, s, 5_000).into_iter().map(|u| u.transcript).collect() };
    let tau = train_ngram(&text(Domain::Target, streams::TARGET_TEXT), 2, 0.5, world.vocab())?;
    let psi = train_ngram(&text(Domain::Source, streams::SOURCE_TRAIN), 2, 0.5, world.vocab())?;
    let lms = FusionLms::new(&tau, Some(&psi));
    let dev = world.sample_many(Domain::Target, streams::TARGET_DEV, 300);
    let eval = world.sample_many(Domain::Target, streams::TARGET_EVAL, 300);
    let beam = BeamConfig::new(8, 3, 1);
    let lambdas: Vec<f64> = (0..=5).map(|i| i as f64 * 0.2).collect();
    let betas: Vec<f64> = (-2..=3).map(|i| i as f64 * 0.1).collect();

    println!("{:>5} {:>10} {:>10} {:>14}", "alpha", "none", "shallow", "density_ratio");
    for alpha in [0.0, 0.25, 0.5, 1.0] {
        let adapted = world.mixture_world(alpha)?;
        let scorer = OracleTransducer::new(&adapted, Domain::Source);
        let mut row = Vec::new();
        for (mode, grid) in [
            (FusionMode::None, vec![0.0]),
            (FusionMode::Shallow, lambdas.clone()),
            (FusionMode::DensityRatio, lambdas.clone()),
        ] {
            let best = sweep_lambda_beta(&dev, &scorer, &lms, mode, &grid, &betas, &beam, false)?.best().config;
            row.push(evaluate(&scorer, &lms, &best, &beam, &eval)?.1.wer * 100.0);
        }
        println!("{alpha:>5.2} {:>9.2}% {:>9.2}% {:>13.2}%", row[0], row[1], row[2]);
    }
    Ok(())
}
