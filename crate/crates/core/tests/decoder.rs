use fusionlab::decoder::{beam_search, decode_corpus, BeamConfig, MergeMode};
use fusionlab::eval::corpus_wer;
use fusionlab::fusion::{sequence_fused_score, sequence_fused_score_with, FusionConfig, FusionLms};
use fusionlab::lm::{train_ngram, NGramLM};
use fusionlab::synthworld::{streams, ChannelSpec, PriorSpec, SynthWorld, WorldFile, WORLD_SCHEMA};
use fusionlab::transducer::{OracleTransducer, Semiring};
use fusionlab::{Domain, Symbol};

/// Three labels, four observations, noisy and ambiguous.
fn tiny_world() -> SynthWorld {
    SynthWorld::from_file(&WorldFile {
        schema: WORLD_SCHEMA,
        vocab_size: 3,
        obs_alphabet: 4,
        l_max: 3,
        d_max: 2,
        noise_floor: 0.2,
        channel: ChannelSpec {
            emission: vec![
                vec![0.1, 0.6, 0.3, 0.0],
                vec![0.0, 0.3, 0.6, 0.1],
                vec![0.1, 0.0, 0.3, 0.6],
            ],
            duration: vec![vec![0.7, 0.3], vec![0.5, 0.5], vec![0.3, 0.7]],
            silence_emission: vec![0.7, 0.1, 0.1, 0.1],
            silence_duration: vec![0.5, 0.5],
        },
        source_prior: PriorSpec::Bigram {
            initial: vec![0.5, 0.2, 0.2, 0.1],
            transition: vec![vec![0.3, 0.3, 0.1, 0.3]; 3],
        },
        target_prior: PriorSpec::Bigram {
            initial: vec![0.1, 0.3, 0.5, 0.1],
            transition: vec![vec![0.1, 0.2, 0.4, 0.3]; 3],
        },
        seed: 3,
    })
    .unwrap()
}

fn lms_for(world: &SynthWorld) -> (NGramLM, NGramLM) {
    let text = |d, s| -> Vec<Vec<Symbol>> { world.sample_many(d, s, 500).into_iter().map(|u| u.transcript).collect() };
    (
        train_ngram(&text(Domain::Target, streams::TARGET_TEXT), 2, 0.5, world.vocab()).unwrap(),
        train_ngram(&text(Domain::Source, streams::SOURCE_TRAIN), 2, 0.5, world.vocab()).unwrap(),
    )
}

fn configs() -> Vec<FusionConfig> {
    vec![
        FusionConfig::none(0.0),
        FusionConfig::none(-0.3),
        FusionConfig::shallow(0.4, 0.5),
        FusionConfig::density_ratio(0.5, 0.5, 0.0),
        FusionConfig::density_ratio(0.8, 0.3, 0.2).with_eos(true),
    ]
}

#[test]
fn deterministic_world_decodes_perfectly() {
    let world = SynthWorld::deterministic(4);
    let oracle = OracleTransducer::new(&world, Domain::Source);
    let data = world.sample_many(Domain::Source, streams::USER, 50);
    for u in &data {
        let expected: Vec<u32> = if u.transcript.is_empty() {
            vec![0]
        } else {
            u.transcript.iter().map(|s| s.0).collect()
        };
        assert_eq!(u.frames, expected);
    }
    let hyps = decode_corpus(&oracle, &FusionLms::empty(), &FusionConfig::none(0.0), &BeamConfig::new(4, 3, 1), &data)
        .unwrap();
    let w = corpus_wer(data.iter().zip(&hyps).map(|(u, h)| (u.transcript.as_slice(), h.as_slice()))).unwrap();
    assert_eq!(w.counts.errors(), 0);
}

#[test]
fn saturated_beam_matches_exhaustive_argmax() {
    let world = tiny_world();
    let oracle = OracleTransducer::new(&world, Domain::Source);
    let (tau, psi) = lms_for(&world);
    let lms = FusionLms::new(&tau, Some(&psi));
    let hyps = world.vocab().sequences_up_to(3);
    let beam = BeamConfig::new(hyps.len(), 3, 1);
    let data: Vec<_> = world
        .sample_many(Domain::Target, streams::USER, 200)
        .into_iter()
        .filter(|u| u.frames.len() <= 5)
        .take(50)
        .collect();
    assert_eq!(data.len(), 50);
    for u in &data {
        for cfg in configs() {
            let best = hyps
                .iter()
                .map(|w| sequence_fused_score(&oracle, &lms, &cfg, &u.frames, w).unwrap())
                .fold(f64::NEG_INFINITY, f64::max);
            let top = &beam_search(&oracle, &lms, &cfg, &beam, &u.frames).unwrap()[0];
            assert!((top.score - best).abs() <= 1e-9, "{cfg:?}: {} vs {best}", top.score);
            let own = sequence_fused_score(&oracle, &lms, &cfg, &u.frames, &top.labels).unwrap();
            assert!((own - top.score).abs() <= 1e-9);
        }
    }
}

#[test]
fn log_add_merge_sums_alignments_at_saturation() {
    let world = tiny_world();
    let oracle = OracleTransducer::new(&world, Domain::Source);
    let (tau, psi) = lms_for(&world);
    let lms = FusionLms::new(&tau, Some(&psi));
    let hyps = world.vocab().sequences_up_to(3);
    let mut beam = BeamConfig::new(hyps.len(), 3, hyps.len());
    beam.merge = MergeMode::LogAdd;
    for u in world.sample_many(Domain::Target, streams::USER + 1, 20) {
        let cfg = FusionConfig::density_ratio(0.6, 0.4, 0.1);
        for h in beam_search(&oracle, &lms, &cfg, &beam, &u.frames).unwrap() {
            let summed = sequence_fused_score_with(&oracle, &lms, &cfg, &u.frames, &h.labels, Semiring::Sum).unwrap();
            assert!((h.score - summed).abs() <= 1e-9, "{:?}: {} vs {summed}", h.labels, h.score);
        }
    }
}

#[test]
fn top_score_is_monotone_in_beam_size() {
    let world = SynthWorld::default_world(12);
    let oracle = OracleTransducer::new(&world, Domain::Source);
    let (tau, psi) = lms_for(&world);
    let lms = FusionLms::new(&tau, Some(&psi));
    for u in world.sample_many(Domain::Target, streams::USER + 2, 50) {
        for cfg in configs() {
            let mut prev = f64::NEG_INFINITY;
            for size in [1, 2, 4, 8, 16] {
                let top = beam_search(&oracle, &lms, &cfg, &BeamConfig::new(size, 3, 1), &u.frames).unwrap();
                let score = top.first().map_or(f64::NEG_INFINITY, |h| h.score);
                assert!(score >= prev - 1e-12, "beam {size}: {score} < {prev} for {cfg:?}");
                prev = score;
            }
        }
    }
}

#[test]
fn larger_reward_never_shortens_output() {
    let world = SynthWorld::default_world(13);
    let oracle = OracleTransducer::new(&world, Domain::Source);
    let (tau, psi) = lms_for(&world);
    let lms = FusionLms::new(&tau, Some(&psi));
    let data = world.sample_many(Domain::Target, streams::USER + 3, 100);
    let beam = BeamConfig::new(8, 3, 1);
    let betas = [-1.0, -0.5, -0.2, 0.0, 0.2, 0.5, 1.0];
    for make in [
        FusionConfig::none as fn(f64) -> FusionConfig,
        |b| FusionConfig::shallow(0.4, b),
        |b| FusionConfig::density_ratio(0.5, 0.5, b),
    ] {
        let lengths: Vec<usize> = betas
            .iter()
            .map(|&b| {
                decode_corpus(&oracle, &lms, &make(b), &beam, &data)
                    .unwrap()
                    .iter()
                    .map(Vec::len)
                    .sum()
            })
            .collect();
        assert!(lengths.windows(2).all(|p| p[0] <= p[1]), "{lengths:?}");
    }
}

#[test]
fn search_is_deterministic_including_ties() {
    let world = SynthWorld::default_world(14);
    let oracle = OracleTransducer::new(&world, Domain::Source);
    let (tau, psi) = lms_for(&world);
    let lms = FusionLms::new(&tau, Some(&psi));
    let beam = BeamConfig::new(6, 2, 4);
    for u in world.sample_many(Domain::Target, streams::USER + 4, 30) {
        let cfg = FusionConfig::density_ratio(0.3, 0.2, 0.1);
        let a = beam_search(&oracle, &lms, &cfg, &beam, &u.frames).unwrap();
        let fresh = OracleTransducer::new(&world, Domain::Source);
        let b = beam_search(&fresh, &lms, &cfg, &beam, &u.frames).unwrap();
        assert_eq!(a, b);
        assert!(a.windows(2).all(|p| p[0].score >= p[1].score));
    }
}

#[test]
fn density_ratio_with_one_lm_reproduces_unfused_nbest() {
    let world = SynthWorld::default_world(15);
    let oracle = OracleTransducer::new(&world, Domain::Source);
    let (tau, _) = lms_for(&world);
    let lms = FusionLms::new(&tau, Some(&tau));
    let beam = BeamConfig::new(8, 3, 5);
    for u in world.sample_many(Domain::Target, streams::USER + 5, 30) {
        let a = beam_search(&oracle, &lms, &FusionConfig::density_ratio(0.7, 0.7, -0.2), &beam, &u.frames).unwrap();
        let b = beam_search(&oracle, &lms, &FusionConfig::none(-0.2), &beam, &u.frames).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn table_lm_source_is_rejected_in_search() {
    let world = SynthWorld::default_world(16);
    let oracle = OracleTransducer::new(&world, Domain::Source);
    let lms = FusionLms::new(world.prior(Domain::Target), Some(world.prior(Domain::Source)));
    let u = &world.sample_many(Domain::Target, streams::USER, 1)[0];
    let r = beam_search(&oracle, &lms, &FusionConfig::density_ratio(0.5, 0.5, 0.0), &BeamConfig::new(4, 3, 1), &u.frames);
    assert!(matches!(r, Err(fusionlab::Error::SourceLmNotZeroFree)));
    let zero_k = train_ngram(&[vec![Symbol(1)]], 2, 0.0, world.vocab()).unwrap();
    let lms = FusionLms::new(&zero_k, Some(&zero_k));
    let r = beam_search(&oracle, &lms, &FusionConfig::density_ratio(0.5, 0.5, 0.0), &BeamConfig::new(4, 3, 1), &u.frames);
    assert!(matches!(r, Err(fusionlab::Error::SourceLmNotZeroFree)));
}
