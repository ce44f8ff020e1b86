//! Add-k n-gram LMs trained on each domain, scored on target-domain text.

use fusionlab::lm::{perplexity, train_ngram};
use fusionlab::synthworld::{streams, SynthWorld};
use fusionlab::{Domain, Symbol};

fn main() -> fusionlab::Result<()> {
    let world = SynthWorld::default_world(3);
    let text = |d, s, n| -> Vec<Vec<Symbol>> { world.sample_many(d, s, n).into_iter().map(|u| u.transcript).collect() };
    let source = text(Domain::Source, streams::SOURCE_TRAIN, 10_000);
    let target = text(Domain::Target, streams::TARGET_TEXT, 10_000);
    let test = text(Domain::Target, streams::TARGET_EVAL, 2_000);

    println!("{:>5} {:>6} {:>12} {:>12}", "order", "add_k", "source LM", "target LM");
    for order in 1..=3 {
        for add_k in [0.1, 0.5, 1.0] {
            let src = perplexity(&train_ngram(&source, order, add_k, world.vocab())?, &test)?;
            let tgt = perplexity(&train_ngram(&target, order, add_k, world.vocab())?, &test)?;
            println!("{order:>5} {add_k:>6.1} {:>12.4} {:>12.4}", src.perplexity, tgt.perplexity);
        }
    }
    let exact = perplexity(world.prior(Domain::Target), &test)?;
    println!("true target prior: {:.4}", exact.perplexity);
    Ok(())
}
