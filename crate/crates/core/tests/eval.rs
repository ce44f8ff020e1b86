use fusionlab::decoder::BeamConfig;
use fusionlab::eval::{corpus_wer, edit_counts, evaluate, sweep_lambda_beta, sweep_lambda_pair, wer, SWEEP_CSV_HEADER};
use fusionlab::fusion::{FusionConfig, FusionLms, FusionMode};
use fusionlab::lm::{train_ngram, NGramLM};
use fusionlab::synthworld::{rng_stream, streams, SynthWorld};
use fusionlab::transducer::OracleTransducer;
use fusionlab::{labels, Domain, Symbol, Utterance};
use rand::Rng;

struct Fixture {
    world: SynthWorld,
    dev: Vec<Utterance>,
    tau: NGramLM,
    psi: NGramLM,
}

fn fixture(seed: u64) -> Fixture {
    let world = SynthWorld::default_world(seed);
    let text = |d, s| -> Vec<Vec<Symbol>> { world.sample_many(d, s, 2000).into_iter().map(|u| u.transcript).collect() };
    let tau = train_ngram(&text(Domain::Target, streams::TARGET_TEXT), 2, 0.5, world.vocab()).unwrap();
    let psi = train_ngram(&text(Domain::Source, streams::SOURCE_TRAIN), 2, 0.5, world.vocab()).unwrap();
    let dev = world.sample_many(Domain::Target, streams::TARGET_DEV, 60);
    Fixture { world, dev, tau, psi }
}

/// Edit distance by plain recursion over the three edit operations.
fn brute_distance(a: &[Symbol], b: &[Symbol]) -> usize {
    match (a.split_first(), b.split_first()) {
        (None, _) => b.len(),
        (_, None) => a.len(),
        (Some((x, ra)), Some((y, rb))) => {
            let diag = brute_distance(ra, rb) + usize::from(x != y);
            diag.min(brute_distance(ra, b) + 1).min(brute_distance(a, rb) + 1)
        }
    }
}

#[test]
fn worked_example_breakdown() {
    let w = wer(&labels(&[1, 2, 3]), &labels(&[4, 2, 5, 3]));
    assert_eq!((w.counts.substitutions, w.counts.insertions, w.counts.deletions), (1, 1, 0));
    assert!((w.wer - 2.0 / 3.0).abs() < 1e-15);
}

#[test]
fn edit_counts_agree_with_exhaustive_distance() {
    let mut rng = rng_stream(5, 9);
    for _ in 0..500 {
        let mut draw = || -> Vec<Symbol> { (0..rng.gen_range(0..=6)).map(|_| Symbol(rng.gen_range(1..=3))).collect() };
        let (a, b) = (draw(), draw());
        let c = edit_counts(&a, &b);
        assert_eq!(c.errors(), brute_distance(&a, &b), "{a:?} / {b:?}");
        assert_eq!(c.ref_tokens, a.len());
        assert!(c.deletions + c.substitutions <= a.len());
        assert_eq!(a.len() + c.insertions, b.len() + c.deletions);
    }
}

#[test]
fn one_point_sweep_matches_direct_decode() {
    let f = fixture(51);
    let oracle = OracleTransducer::new(&f.world, Domain::Source);
    let lms = FusionLms::new(&f.tau, Some(&f.psi));
    let beam = BeamConfig::new(6, 3, 1);
    let sweep = sweep_lambda_beta(&f.dev, &oracle, &lms, FusionMode::None, &[0.0], &[0.2], &beam, false).unwrap();
    let (_, direct) = evaluate(&oracle, &lms, &FusionConfig::none(0.2), &beam, &f.dev).unwrap();
    assert_eq!(sweep.cells.len(), 1);
    assert_eq!(sweep.best().breakdown, direct);
}

#[test]
fn zero_scale_columns_reduce_to_unfused() {
    let f = fixture(52);
    let oracle = OracleTransducer::new(&f.world, Domain::Source);
    let lms = FusionLms::new(&f.tau, Some(&f.psi));
    let beam = BeamConfig::new(6, 3, 1);
    let betas = [-0.3, 0.0, 0.3];
    let none = sweep_lambda_beta(&f.dev, &oracle, &lms, FusionMode::None, &[0.0], &betas, &beam, false).unwrap();
    let shallow = sweep_lambda_beta(&f.dev, &oracle, &lms, FusionMode::Shallow, &[0.0, 0.5], &betas, &beam, false).unwrap();
    let dr = sweep_lambda_beta(&f.dev, &oracle, &lms, FusionMode::DensityRatio, &[0.0, 0.5], &betas, &beam, false).unwrap();
    for j in 0..betas.len() {
        assert_eq!(shallow.cell(0, j).breakdown, none.cell(0, j).breakdown);
        assert_eq!(dr.cell(0, j).breakdown, none.cell(0, j).breakdown);
    }
}

#[test]
fn pair_sweep_diagonal_is_the_tied_sweep() {
    let f = fixture(53);
    let oracle = OracleTransducer::new(&f.world, Domain::Source);
    let lms = FusionLms::new(&f.tau, Some(&f.psi));
    let beam = BeamConfig::new(6, 3, 1);
    let grid = [0.0, 0.4, 0.8];
    let pair = sweep_lambda_pair(&f.dev, &oracle, &lms, -0.1, &grid, &grid, &beam, false).unwrap();
    let tied = sweep_lambda_beta(&f.dev, &oracle, &lms, FusionMode::DensityRatio, &grid, &[-0.1], &beam, false).unwrap();
    for i in 0..grid.len() {
        assert_eq!(pair.cell(i, i).breakdown, tied.cell(i, 0).breakdown);
    }
    let none = evaluate(&oracle, &lms, &FusionConfig::none(-0.1), &beam, &f.dev).unwrap().1;
    assert_eq!(pair.cell(0, 0).breakdown, none);
}

#[test]
fn argmin_is_a_minimum_error_cell() {
    let f = fixture(54);
    let oracle = OracleTransducer::new(&f.world, Domain::Source);
    let lms = FusionLms::new(&f.tau, Some(&f.psi));
    let beam = BeamConfig::new(4, 3, 1);
    let sweep =
        sweep_lambda_beta(&f.dev, &oracle, &lms, FusionMode::Shallow, &[0.0, 0.3, 0.6], &[-0.2, 0.0, 0.2], &beam, false)
            .unwrap();
    let min = sweep.cells.iter().map(|c| c.breakdown.counts.errors()).min().unwrap();
    assert_eq!(sweep.best().breakdown.counts.errors(), min);
    let first = sweep.cells.iter().position(|c| c.breakdown.counts.errors() == min).unwrap();
    assert_eq!(sweep.argmin, first);
}

#[test]
fn sweep_csv_is_reproducible() {
    let run = || {
        let f = fixture(55);
        let oracle = OracleTransducer::new(&f.world, Domain::Source);
        let lms = FusionLms::new(&f.tau, Some(&f.psi));
        sweep_lambda_beta(&f.dev, &oracle, &lms, FusionMode::DensityRatio, &[0.2, 0.6], &[0.0, 0.1], &BeamConfig::new(4, 2, 1), false)
            .unwrap()
            .to_csv()
    };
    let csv = run();
    assert_eq!(csv, run());
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], SWEEP_CSV_HEADER);
    assert_eq!(lines.len(), 1 + 4 + 1);
    assert!(lines[5].starts_with("# argmin,density_ratio,"));
}

#[test]
fn evaluate_reports_pooled_corpus_wer() {
    let f = fixture(56);
    let oracle = OracleTransducer::new(&f.world, Domain::Source);
    let lms = FusionLms::new(&f.tau, Some(&f.psi));
    let (hyps, breakdown) = evaluate(&oracle, &lms, &FusionConfig::shallow(0.3, 0.1), &BeamConfig::new(4, 3, 1), &f.dev).unwrap();
    let (mut errors, mut refs) = (0, 0);
    for (u, h) in f.dev.iter().zip(&hyps) {
        errors += brute_distance(&u.transcript, h);
        refs += u.transcript.len();
    }
    assert!((breakdown.wer - errors as f64 / refs as f64).abs() < 1e-12);
    let again = corpus_wer(f.dev.iter().zip(&hyps).map(|(u, h)| (u.transcript.as_slice(), h.as_slice()))).unwrap();
    assert_eq!(again, breakdown);
}
