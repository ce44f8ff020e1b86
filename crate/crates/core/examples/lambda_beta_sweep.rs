//! Dev-set grid search over the LM scale and label reward, printed as CSV.

use fusionlab::decoder::BeamConfig;
use fusionlab::eval::{sweep_lambda_beta, sweet_spot_width};
use fusionlab::fusion::{FusionLms, FusionMode};
use fusionlab::lm::train_ngram;
use fusionlab::synthworld::{streams, SynthWorld};
use fusionlab::transducer::OracleTransducer;
use fusionlab::{Domain, Symbol};

fn main() -> fusionlab::Result<()> {
    let world = SynthWorld::default_world(5);
    let text = |d, s| -> Vec<Vec<Symbol>> { world.sample_many(d, s, 5_000).into_iter().map(|u| u.transcript).collect() };
    let tau = train_ngram(&text(Domain::Target, streams::TARGET_TEXT), 2, 0.5, world.vocab())?;
    let psi = train_ngram(&text(Domain::Source, streams::SOURCE_TRAIN), 2, 0.5, world.vocab())?;
    let lms = FusionLms::new(&tau, Some(&psi));
    let oracle = OracleTransducer::new(&world, Domain::Source);
    let dev = world.sample_many(Domain::Target, streams::TARGET_DEV, 300);
    let lambdas: Vec<f64> = (0..=5).map(|i| i as f64 * 0.2).collect();
    let betas: Vec<f64> = (-2..=3).map(|i| i as f64 * 0.1).collect();

    for mode in [FusionMode::Shallow, FusionMode::DensityRatio] {
        let sweep = sweep_lambda_beta(&dev, &oracle, &lms, mode, &lambdas, &betas, &BeamConfig::new(8, 3, 1), false)?;
        print!("{}", sweep.to_csv());
        let spot = sweet_spot_width(&sweep, 0.05);
        println!("# {mode}: {} cells within 5% of the best, lambda width {:?}\n", spot.cells, spot.width("lambda"));
    }
    Ok(())
}
