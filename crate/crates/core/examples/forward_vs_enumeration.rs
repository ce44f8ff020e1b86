//! The lattice forward pass against an explicit sum over every alignment.

use fusionlab::synthworld::{streams, SynthWorld};
use fusionlab::transducer::{alignment_log_prob, enumerate_alignments, sequence_posterior, OracleTransducer};
use fusionlab::{Alignment, Domain};

fn main() -> fusionlab::Result<()> {
    let world = SynthWorld::default_world(2);
    let oracle = OracleTransducer::new(&world, Domain::Source);
    let u = world
        .sample_many(Domain::Source, streams::USER, 100)
        .into_iter()
        .find(|u| (3..=6).contains(&u.frames.len()))
        .expect("a short utterance");
    println!("frames: {:?}", u.frames);
    println!("{:>10} {:>8} {:>14} {:>14}", "W", "paths", "forward", "enumerated");
    for w in world.vocab().sequences_up_to(3) {
        let shapes = enumerate_alignments(u.frames.len(), w.len())?;
        let mut total = 0.0;
        for shape in &shapes {
            total += alignment_log_prob(&oracle, &u.frames, &Alignment::from_shape(shape, &w)?)?.0.exp();
        }
        let forward = sequence_posterior(&oracle, &u.frames, &w)?.prob();
        let ids: Vec<String> = w.iter().map(|s| s.0.to_string()).collect();
        println!("{:>10} {:>8} {:>14.6e} {:>14.6e}", ids.join(" "), shapes.len(), forward, total);
    }
    Ok(())
}
