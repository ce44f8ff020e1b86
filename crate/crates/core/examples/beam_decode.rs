//! N-best lists from the frame-synchronous beam search under each fusion mode.

use fusionlab::decoder::{beam_search, BeamConfig};
use fusionlab::fusion::{FusionConfig, FusionLms};
use fusionlab::lm::train_ngram;
use fusionlab::synthworld::{streams, SynthWorld};
use fusionlab::transducer::OracleTransducer;
use fusionlab::{dataset::format_transcript, Domain, Symbol};

fn main() -> fusionlab::Result<()> {
    let world = SynthWorld::default_world(4);
    let text = |d, s| -> Vec<Vec<Symbol>> { world.sample_many(d, s, 5_000).into_iter().map(|u| u.transcript).collect() };
    let tau = train_ngram(&text(Domain::Target, streams::TARGET_TEXT), 2, 0.5, world.vocab())?;
    let psi = train_ngram(&text(Domain::Source, streams::SOURCE_TRAIN), 2, 0.5, world.vocab())?;
    let lms = FusionLms::new(&tau, Some(&psi));
    let oracle = OracleTransducer::new(&world, Domain::Source);
    let beam = BeamConfig::new(8, 3, 3);

    for u in world.sample_many(Domain::Target, streams::USER, 3) {
        println!("frames {:?}  reference [{}]", u.frames, format_transcript(&u.transcript));
        for (label, cfg) in [
            ("none", FusionConfig::none(0.0)),
            ("shallow", FusionConfig::shallow(0.4, 0.1)),
            ("density_ratio", FusionConfig::density_ratio(0.8, 0.8, 0.0)),
        ] {
            for (rank, h) in beam_search(&oracle, &lms, &cfg, &beam, &u.frames)?.iter().enumerate() {
                println!("  {label:<14} #{} {:>9.4}  [{}]", rank + 1, h.score, format_transcript(&h.labels));
            }
        }
    }
    Ok(())
}
