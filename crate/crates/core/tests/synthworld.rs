use fusionlab::synthworld::{streams, PriorSpec, SynthWorld, TableEntry};
use fusionlab::{labels, Domain, Symbol};

/// Expected count of each label per transcript under a prior table, and the
/// variance of that per-transcript count.
fn label_moments(world: &SynthWorld, domain: Domain) -> Vec<(f64, f64)> {
    let v = world.vocab().num_labels();
    let mut out = vec![(0.0, 0.0); v];
    for (w, p) in world.prior(domain).entries() {
        for (s, slot) in out.iter_mut().enumerate() {
            let c = w.iter().filter(|x| x.index() == s + 1).count() as f64;
            slot.0 += p * c;
            slot.1 += p * c * c;
        }
    }
    out.into_iter().map(|(m, m2)| (m, m2 - m * m)).collect()
}

#[test]
fn label_counts_match_prior_within_three_standard_errors() {
    let world = SynthWorld::default_world(31);
    let n = 10_000;
    for (domain, stream) in [(Domain::Source, streams::SOURCE_TRAIN), (Domain::Target, streams::TARGET_TEXT)] {
        let data = world.sample_many(domain, stream, n);
        for (s, (mean, var)) in label_moments(&world, domain).into_iter().enumerate() {
            let observed = data
                .iter()
                .map(|u| u.transcript.iter().filter(|x| x.index() == s + 1).count())
                .sum::<usize>() as f64
                / n as f64;
            let se = (var / n as f64).sqrt();
            assert!((observed - mean).abs() <= 3.0 * se, "{domain:?} label {}: {observed} vs {mean} ± {se}", s + 1);
        }
    }
}

#[test]
fn likelihood_is_shared_between_domains() {
    let world = SynthWorld::default_world(32);
    for u in world.sample_many(Domain::Source, streams::USER, 100) {
        for w in world.vocab().sequences_up_to(3) {
            let (_, a) = world.scaled_likelihood_identity(Domain::Source, &u.frames, &w).unwrap().unwrap();
            let (_, b) = world.scaled_likelihood_identity(Domain::Target, &u.frames, &w).unwrap().unwrap();
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}

#[test]
fn marginal_ratio_is_hypothesis_independent() {
    let world = SynthWorld::default_world(33);
    for u in world.sample_many(Domain::Target, streams::USER, 40) {
        let log_k = world.log_marginal_ratio(&u.frames).unwrap();
        let src = world.true_posterior(Domain::Source, &u.frames).unwrap();
        let tgt = world.true_posterior(Domain::Target, &u.frames).unwrap();
        for (w, p_src) in &src.entries {
            let p_tgt = tgt.prob(w);
            if *p_src == 0.0 || p_tgt == 0.0 {
                continue;
            }
            // P_src(W|X) p_src(X) / P_src(W) = P_tgt(W|X) p_tgt(X) / P_tgt(W)
            let implied = (p_tgt / p_src).ln() + (world.prior(Domain::Source).prob(w) / world.prior(Domain::Target).prob(w)).ln();
            assert!((implied - log_k).abs() < 1e-9, "{w:?}: {implied} vs {log_k}");
        }
    }
}

#[test]
fn posterior_normalizes_over_random_observations() {
    let world = SynthWorld::default_world(34);
    for d in [Domain::Source, Domain::Target] {
        for u in world.sample_many(d, streams::USER + 1, 200) {
            let post = world.true_posterior(d, &u.frames).unwrap();
            let total: f64 = post.entries.iter().map(|e| e.1).sum();
            assert!((total - 1.0).abs() < 1e-10);
            let direct: f64 = world
                .vocab()
                .sequences_up_to(3)
                .iter()
                .map(|w| world.true_likelihood(&u.frames, w).exp() * world.prior(d).prob(w))
                .sum();
            assert!((direct.ln() - post.log_evidence).abs() < 1e-10);
        }
    }
}

#[test]
fn mixture_of_disjoint_priors_halves_each_sequence() {
    let mut file = SynthWorld::default_world(35).to_file();
    let table = |entries: &[(&[u32], f64)]| PriorSpec::Table {
        entries: entries.iter().map(|(l, p)| TableEntry { labels: l.to_vec(), prob: *p }).collect(),
    };
    file.source_prior = table(&[(&[1], 0.5), (&[1, 2], 0.5)]);
    file.target_prior = table(&[(&[3], 0.25), (&[4, 4, 3], 0.75)]);
    let world = SynthWorld::from_file(&file).unwrap();
    let mixed = world.mixture_world(0.5).unwrap();
    let src = mixed.prior(Domain::Source);
    for (w, p) in [(labels(&[1]), 0.25), (labels(&[1, 2]), 0.25), (labels(&[3]), 0.125), (labels(&[4, 4, 3]), 0.375)] {
        assert!((src.prob(&w) - p).abs() < 1e-15);
    }
    assert_eq!(src.prob(&[Symbol(2)]), 0.0);
    for (w, p) in world.prior(Domain::Target).entries() {
        assert_eq!(mixed.prior(Domain::Target).prob(w), p);
    }
}

#[test]
fn world_files_are_rejected_when_invalid() {
    let mut file = SynthWorld::default_world(36).to_file();
    file.schema = 2;
    assert!(SynthWorld::from_file(&file).is_err());
    let mut file = SynthWorld::default_world(36).to_file();
    file.channel.emission[0][0] += 0.1;
    assert!(SynthWorld::from_file(&file).is_err());
}
