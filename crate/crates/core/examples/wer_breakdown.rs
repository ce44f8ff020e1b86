//! Word error rate with its deletion, insertion and substitution parts.

use fusionlab::eval::{corpus_wer, wer};
use fusionlab::labels;

fn main() -> fusionlab::Result<()> {
    let pairs = [
        (labels(&[1, 2, 3]), labels(&[4, 2, 5, 3])),
        (labels(&[1, 1, 2]), labels(&[1, 2])),
        (labels(&[3, 4]), labels(&[3, 4])),
        (labels(&[]), labels(&[2])),
    ];
    println!("{:>10} {:>10} {:>6} {:>4} {:>4} {:>4}", "ref", "hyp", "wer", "del", "ins", "sub");
    for (r, h) in &pairs {
        let w = wer(r, h);
        let fmt = |x: &[fusionlab::Symbol]| x.iter().map(|s| s.0.to_string()).collect::<Vec<_>>().join(" ");
        println!(
            "{:>10} {:>10} {:>6.3} {:>4} {:>4} {:>4}",
            fmt(r),
            fmt(h),
            w.wer,
            w.counts.deletions,
            w.counts.insertions,
            w.counts.substitutions
        );
    }
    let total = corpus_wer(pairs.iter().map(|(r, h)| (r.as_slice(), h.as_slice())))?;
    println!(
        "corpus: wer {:.4} = del {:.4} + ins {:.4} + sub {:.4} over {} reference labels",
        total.wer, total.del_rate, total.ins_rate, total.sub_rate, total.counts.ref_tokens
    );
    Ok(())
}
