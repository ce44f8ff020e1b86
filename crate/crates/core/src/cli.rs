//! The `fusionlab` command line: generate data from a world, train n-gram
//! LMs, measure perplexity, decode, sweep fusion scales on dev, and report.
//!
//! Exit codes: 0 success, 2 configuration or validation error (including
//! missing input files), 3 malformed data, 4 internal error. Failures are
//! also written to stderr as one JSON object per line.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{ArgAction, Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::dataset::{self, Role};
use crate::decoder::{beam_search, BeamConfig, MergeMode};
use crate::error::{Error, Result};
use crate::eval::{corpus_wer, sweep_lambda_beta, sweep_lambda_pair, SweepResult, WerBreakdown};
use crate::fusion::{FusionConfig, FusionLms, FusionMode};
use crate::lm::{perplexity, train_ngram, LanguageModel, NGramLM};
use crate::synthworld::{streams, SynthWorld};
use crate::transducer::{OracleTransducer, StepScorer, TableScorer};
use crate::types::{Domain, Symbol, Utterance, Vocabulary};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sizes {
    pub source_train: usize,
    pub target_text: usize,
    pub dev: usize,
    pub eval: usize,
}

impl Default for Sizes {
    fn default() -> Self {
        Sizes {
            source_train: 10_000,
            target_text: 10_000,
            dev: 1_000,
            eval: 1_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmSettings {
    pub order: usize,
    pub add_k: f64,
}

impl Default for LmSettings {
    fn default() -> Self {
        LmSettings { order: 2, add_k: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSettings {
    pub lambda_grid: Vec<f64>,
    pub beta_grid: Vec<f64>,
    pub lambda_psi_grid: Vec<f64>,
    pub lambda_tau_grid: Vec<f64>,
    /// Label reward held fixed in the two-scale sweep.
    pub pair_beta: f64,
}

fn tenths(from: i32, to: i32) -> Vec<f64> {
    (from..=to).map(|i| i as f64 / 10.0).collect()
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            lambda_grid: tenths(0, 10),
            beta_grid: tenths(-4, 6),
            lambda_psi_grid: tenths(0, 10),
            lambda_tau_grid: tenths(0, 10),
            pair_beta: -0.1,
        }
    }
}

/// Everything needed to re-run an experiment. Relative paths are resolved
/// against the directory of the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// World file; the built-in default world when absent.
    pub world: Option<PathBuf>,
    pub sizes: Sizes,
    pub lm: LmSettings,
    pub fusion: FusionConfig,
    pub beam: BeamConfig,
    pub sweep: SweepSettings,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            world: None,
            sizes: Sizes::default(),
            lm: LmSettings::default(),
            fusion: FusionConfig::default(),
            beam: BeamConfig::new(8, 3, 1),
            sweep: SweepSettings::default(),
            seed: 0,
            out: PathBuf::from("runs"),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(w) = &config.world {
            if w.is_relative() {
                config.world = Some(base.join(w));
            }
        }
        if config.out.is_relative() {
            config.out = base.join(&config.out);
        }
        Ok(config)
    }

    /// Checks sizes, settings and that referenced files exist.
    pub fn validate(&self) -> Result<()> {
        if let Some(w) = &self.world {
            if !w.is_file() {
                return Err(Error::Config(format!("world file {} does not exist", w.display())));
            }
        }
        let s = &self.sizes;
        if s.source_train == 0 || s.target_text == 0 || s.dev == 0 || s.eval == 0 {
            return Err(Error::Config("dataset sizes must be >= 1".into()));
        }
        if self.lm.order == 0 || !(self.lm.add_k >= 0.0 && self.lm.add_k.is_finite()) {
            return Err(Error::Config("lm.order must be >= 1 and lm.add_k finite and >= 0".into()));
        }
        self.beam.check()?;
        self.fusion.check_scales()?;
        let g = &self.sweep;
        for (name, grid) in [
            ("lambda_grid", &g.lambda_grid),
            ("beta_grid", &g.beta_grid),
            ("lambda_psi_grid", &g.lambda_psi_grid),
            ("lambda_tau_grid", &g.lambda_tau_grid),
        ] {
            if grid.is_empty() || grid.iter().any(|x| !x.is_finite()) {
                return Err(Error::Config(format!("sweep.{name} must be non-empty and finite")));
            }
        }
        Ok(())
    }

    pub fn load_world(&self) -> Result<SynthWorld> {
        let world = match &self.world {
            Some(p) => SynthWorld::load(p).map_err(|e| match e {
                Error::Json(j) => Error::Config(format!("{}: {j}", p.display())),
                other => other,
            })?,
            None => SynthWorld::default_world(self.seed),
        };
        Ok(world.with_seed(self.seed))
    }
}

#[derive(Debug, Parser)]
#[command(name = "fusionlab", version, about = "Transducer decoding with external LM fusion")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample source training pairs, target text, and target dev/eval sets.
    Generate,
    /// Train an add-k n-gram LM on a transcript corpus.
    TrainLm(TrainLmArgs),
    /// Perplexity of an LM on a corpus.
    Ppl(PplArgs),
    /// Decode a paired dataset and score it.
    Decode(DecodeArgs),
    /// Grid-search fusion scales on a dev set.
    Sweep(SweepArgs),
    /// Summarize decode runs as a comparison table.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct TrainLmArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long)]
    pub add_k: Option<f64>,
    /// Label count; taken from the world when absent.
    #[arg(long)]
    pub vocab_size: Option<usize>,
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Args)]
pub struct PplArgs {
    #[arg(long)]
    pub lm: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Args, Default)]
pub struct FusionArgs {
    /// Load fusion settings from a sweep's operating_point.json.
    #[arg(long)]
    pub operating_point: Option<PathBuf>,
    #[arg(long)]
    pub fusion: Option<FusionMode>,
    #[arg(long)]
    pub lambda_tau: Option<f64>,
    #[arg(long)]
    pub lambda_psi: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub beta: Option<f64>,
    #[arg(long, action = ArgAction::Set)]
    pub eos_final: Option<bool>,
}

#[derive(Debug, Args, Default)]
pub struct BeamArgs {
    #[arg(long)]
    pub beam_size: Option<usize>,
    #[arg(long)]
    pub max_expansions: Option<usize>,
    #[arg(long)]
    pub nbest: Option<usize>,
    #[arg(long, value_parser = parse_merge)]
    pub merge: Option<MergeMode>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// `oracle`, `mixture:ALPHA` or `table:PATH`.
    #[arg(long, default_value = "oracle")]
    pub scorer: String,
    /// World file, overriding the config.
    #[arg(long)]
    pub world: Option<PathBuf>,
    #[arg(long)]
    pub lm_target: Option<PathBuf>,
    #[arg(long)]
    pub lm_source: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    /// Paired dataset; defaults to the generated eval set.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub fusion: FusionArgs,
    #[command(flatten)]
    pub beam: BeamArgs,
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Paired dev dataset; defaults to the generated dev set.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value = "density_ratio")]
    pub mode: FusionMode,
    /// Sweep (lambda_psi, lambda_tau) at a fixed beta instead of (lambda, beta).
    #[arg(long)]
    pub pair: bool,
    #[arg(long, value_parser = parse_grid)]
    pub lambda_grid: Option<Grid>,
    #[arg(long, value_parser = parse_grid, allow_hyphen_values = true)]
    pub beta_grid: Option<Grid>,
    #[arg(long, value_parser = parse_grid)]
    pub lambda_psi_grid: Option<Grid>,
    #[arg(long, value_parser = parse_grid)]
    pub lambda_tau_grid: Option<Grid>,
    #[arg(long, allow_negative_numbers = true)]
    pub beta: Option<f64>,
    #[arg(long, action = ArgAction::Set)]
    pub eos_final: Option<bool>,
    #[command(flatten)]
    pub beam: BeamArgs,
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory of decode runs; defaults to `<out>/decode`.
    #[arg(long)]
    pub runs: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grid(pub Vec<f64>);

fn parse_grid(s: &str) -> std::result::Result<Grid, String> {
    s.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| format!("bad grid value `{x}`")))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map(Grid)
}

fn parse_merge(s: &str) -> std::result::Result<MergeMode, String> {
    match s {
        "max" => Ok(MergeMode::Max),
        "log_add" => Ok(MergeMode::LogAdd),
        _ => Err(format!("unknown merge mode `{s}` (expected max|log_add)")),
    }
}

impl clap::builder::ValueParserFactory for FusionMode {
    type Parser = FusionModeParser;
    fn value_parser() -> Self::Parser {
        FusionModeParser
    }
}

#[derive(Clone)]
pub struct FusionModeParser;

impl clap::builder::TypedValueParser for FusionModeParser {
    type Value = FusionMode;

    fn parse_ref(
        &self,
        cmd: &clap::Command,
        arg: Option<&clap::Arg>,
        value: &std::ffi::OsStr,
    ) -> std::result::Result<FusionMode, clap::Error> {
        let s = value.to_str().unwrap_or("");
        s.parse().map_err(|e: Error| {
            let mut err = clap::Error::new(clap::error::ErrorKind::InvalidValue).with_cmd(cmd);
            if let Some(a) = arg {
                err.insert(
                    clap::error::ContextKind::InvalidArg,
                    clap::error::ContextValue::String(a.to_string()),
                );
            }
            err.insert(
                clap::error::ContextKind::InvalidValue,
                clap::error::ContextValue::String(format!("{s} ({e})")),
            );
            err
        })
    }
}

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_)
        | Error::Io { .. }
        | Error::VocabularyMismatch(_)
        | Error::MissingSourceLm
        | Error::SourceLmNotZeroFree
        | Error::EnumerationBound(_) => 2,
        Error::Parse { .. }
        | Error::Json(_)
        | Error::EmptyCorpus
        | Error::EmptyReferences
        | Error::InvalidSymbol { .. }
        | Error::BlankInLm
        | Error::ZeroSourceMass { .. }
        | Error::MissingTableEntry { .. } => 3,
        Error::AllFramesConsumed { .. } | Error::InvalidAlignment(_) => 4,
    }
}

fn error_kind(err: &Error) -> &'static str {
    match exit_code(err) {
        2 => "config",
        3 => "data",
        _ => "internal",
    }
}

/// Runs the CLI on `args` (including the program name) and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let argv: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(&cli, &argv) {
        Ok(()) => 0,
        Err(e) => {
            let code = exit_code(&e);
            let line = serde_json::json!({
                "error": error_kind(&e),
                "exit_code": code,
                "message": e.to_string(),
            });
            eprintln!("{line}");
            code
        }
    }
}

/// Resolved settings shared by every subcommand.
struct Context {
    config: ExperimentConfig,
    out: PathBuf,
    argv: Vec<String>,
    started: Instant,
}

impl Context {
    fn new(common: &Common, argv: &[String]) -> Result<Self> {
        let mut config = match &common.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = common.seed {
            config.seed = seed;
        }
        if let Some(out) = &common.out {
            config.out = out.clone();
        }
        config.validate()?;
        Ok(Context {
            out: config.out.clone(),
            config,
            argv: argv.to_vec(),
            started: Instant::now(),
        })
    }

    fn dir(&self, sub: &str) -> Result<PathBuf> {
        let d = self.out.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        Ok(d)
    }

    fn manifest(&self, path: &Path, command: &str, inputs: &[&Path], outputs: &[&Path]) -> Result<()> {
        let paths = |xs: &[&Path]| xs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>();
        let m = serde_json::json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "argv": self.argv,
            "seed": self.config.seed,
            "config": self.config,
            "inputs": paths(inputs),
            "outputs": paths(outputs),
            "wall_time_secs": self.started.elapsed().as_secs_f64(),
        });
        write_file(path, &(serde_json::to_string_pretty(&m)? + "\n"))
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "file not found")))
    }
}

fn execute(cli: &Cli, argv: &[String]) -> Result<()> {
    let ctx = Context::new(&cli.common, argv)?;
    match &cli.command {
        Command::Generate => cmd_generate(&ctx),
        Command::TrainLm(a) => cmd_train_lm(&ctx, a),
        Command::Ppl(a) => cmd_ppl(&ctx, a),
        Command::Decode(a) => cmd_decode(&ctx, a),
        Command::Sweep(a) => cmd_sweep(&ctx, a),
        Command::Report(a) => cmd_report(&ctx, a),
    }
}

fn cmd_generate(ctx: &Context) -> Result<()> {
    let world = ctx.config.load_world()?;
    let sizes = &ctx.config.sizes;
    let dir = ctx.dir("data")?;
    let text = |u: Vec<Utterance>| u.into_iter().map(|u| u.transcript).collect::<Vec<_>>();
    let paths: Vec<PathBuf> = [Role::SourceTrain, Role::TargetText, Role::Dev, Role::Eval]
        .iter()
        .map(|r| dir.join(r.file_name()))
        .collect();
    dataset::write_paired(&paths[0], &world.sample_many(Domain::Source, streams::SOURCE_TRAIN, sizes.source_train))?;
    dataset::write_text(&paths[1], &text(world.sample_many(Domain::Target, streams::TARGET_TEXT, sizes.target_text)))?;
    dataset::write_paired(&paths[2], &world.sample_many(Domain::Target, streams::TARGET_DEV, sizes.dev))?;
    dataset::write_paired(&paths[3], &world.sample_many(Domain::Target, streams::TARGET_EVAL, sizes.eval))?;
    let world_path = dir.join("world.json");
    world.save(&world_path)?;
    let mut outputs: Vec<&Path> = paths.iter().map(PathBuf::as_path).collect();
    outputs.push(&world_path);
    let inputs: Vec<&Path> = ctx.config.world.iter().map(PathBuf::as_path).collect();
    ctx.manifest(&dir.join("manifest.json"), "generate", &inputs, &outputs)?;
    println!("wrote {} files to {}", outputs.len(), dir.display());
    Ok(())
}

fn cmd_train_lm(ctx: &Context, a: &TrainLmArgs) -> Result<()> {
    require_file(&a.corpus)?;
    let corpus = dataset::read_text(&a.corpus)?;
    let vocab = match a.vocab_size {
        Some(v) => Vocabulary::new(v)?,
        None => ctx.config.load_world()?.vocab(),
    };
    let order = a.order.unwrap_or(ctx.config.lm.order);
    let add_k = a.add_k.unwrap_or(ctx.config.lm.add_k);
    let lm = train_ngram(&corpus, order, add_k, vocab)?;
    let name = a.name.clone().unwrap_or_else(|| match Role::from_path(&a.corpus) {
        Some(Role::SourceTrain) => "source".into(),
        Some(Role::TargetText) => "target".into(),
        _ => stem(&a.corpus),
    });
    let dir = ctx.dir("lm")?;
    let path = dir.join(format!("{name}.lm"));
    lm.save(&path)?;
    ctx.manifest(&dir.join(format!("{name}.manifest.json")), "train-lm", &[&a.corpus], &[&path])?;
    println!("wrote {}", path.display());
    Ok(())
}

fn stem(p: &Path) -> String {
    p.file_stem().map_or_else(|| "run".into(), |s| s.to_string_lossy().into_owned())
}

fn load_lm(path: &Path) -> Result<NGramLM> {
    require_file(path)?;
    NGramLM::load(path)
}

fn cmd_ppl(ctx: &Context, a: &PplArgs) -> Result<()> {
    let lm = load_lm(&a.lm)?;
    require_file(&a.corpus)?;
    let corpus = dataset::read_text(&a.corpus)?;
    let r = perplexity(&lm, &corpus)?;
    let report = serde_json::json!({
        "lm": a.lm.display().to_string(),
        "corpus": a.corpus.display().to_string(),
        "perplexity": r.perplexity.is_finite().then_some(r.perplexity),
        "total_log_prob": r.total_log_prob.is_finite().then_some(r.total_log_prob),
        "tokens": r.tokens,
        "first_zero": r.first_zero.map(|z| serde_json::json!({
            "utterance": z.utterance,
            "position": z.position,
        })),
    });
    let name = a.name.clone().unwrap_or_else(|| format!("{}__{}", stem(&a.lm), stem(&a.corpus)));
    let dir = ctx.dir("ppl")?;
    let path = dir.join(format!("{name}.json"));
    let text = serde_json::to_string_pretty(&report)? + "\n";
    write_file(&path, &text)?;
    print!("{text}");
    Ok(())
}

/// Scorer, LMs and world resolved from model flags.
struct Model {
    scorer: Box<dyn StepScorer>,
    target: Option<NGramLM>,
    source: Option<NGramLM>,
    world: Option<SynthWorld>,
    inputs: Vec<PathBuf>,
}

impl Model {
    fn lms(&self) -> FusionLms<'_> {
        FusionLms {
            target: self.target.as_ref().map(|l| l as &dyn LanguageModel),
            source: self.source.as_ref().map(|l| l as &dyn LanguageModel),
        }
    }

    fn load(ctx: &Context, a: &ModelArgs, mode: FusionMode) -> Result<Model> {
        let mut inputs = Vec::new();
        let world_config = match &a.world {
            Some(p) => ExperimentConfig {
                world: Some(p.clone()),
                ..ctx.config.clone()
            },
            None => ctx.config.clone(),
        };
        let mut world = None;
        let scorer: Box<dyn StepScorer> = if a.scorer == "oracle" {
            let w = world_config.load_world()?;
            let o = OracleTransducer::new(&w, Domain::Source);
            world = Some(w);
            Box::new(o)
        } else if let Some(alpha) = a.scorer.strip_prefix("mixture:") {
            let alpha: f64 = alpha
                .parse()
                .map_err(|_| Error::Config(format!("bad mixture weight `{alpha}`")))?;
            let w = world_config.load_world()?;
            let o = OracleTransducer::new(&w.mixture_world(alpha)?, Domain::Source);
            world = Some(w);
            Box::new(o)
        } else if let Some(path) = a.scorer.strip_prefix("table:") {
            let path = PathBuf::from(path);
            require_file(&path)?;
            let t = TableScorer::load(&path)?;
            inputs.push(path);
            Box::new(t)
        } else {
            return Err(Error::Config(format!(
                "unknown scorer `{}` (expected oracle, mixture:ALPHA or table:PATH)",
                a.scorer
            )));
        };
        if let Some(w) = &world_config.world {
            inputs.push(w.clone());
        }
        let lm_dir = ctx.out.join("lm");
        let mut load = |given: &Option<PathBuf>, default: &str, needed: bool| -> Result<Option<NGramLM>> {
            let path = match given {
                Some(p) => p.clone(),
                None if needed => lm_dir.join(default),
                None => return Ok(None),
            };
            let lm = load_lm(&path)?;
            inputs.push(path);
            Ok(Some(lm))
        };
        let target = load(&a.lm_target, "target.lm", mode != FusionMode::None)?;
        let source = load(&a.lm_source, "source.lm", mode == FusionMode::DensityRatio)?;
        let vocab = scorer.vocab();
        for (name, lm) in [("target", &target), ("source", &source)] {
            if let Some(lm) = lm {
                if lm.vocab() != vocab {
                    return Err(Error::VocabularyMismatch(format!(
                        "{name} LM has {} labels, scorer has {}",
                        lm.vocab().num_labels(),
                        vocab.num_labels()
                    )));
                }
            }
        }
        Ok(Model {
            scorer,
            target,
            source,
            world,
            inputs,
        })
    }

    /// Rejects datasets whose ids fall outside the scorer's vocabulary or
    /// the world's observation alphabet, before anything is decoded.
    fn check_data(&self, data: &[Utterance]) -> Result<()> {
        let vocab = self.scorer.vocab();
        let alphabet = self.world.as_ref().map(|w| w.channel().obs_alphabet());
        for (i, u) in data.iter().enumerate() {
            if let Some(s) = u.transcript.iter().find(|s| !vocab.contains(**s)) {
                return Err(Error::VocabularyMismatch(format!(
                    "utterance {} has label {} but the scorer has {} labels",
                    i + 1,
                    s.0,
                    vocab.num_labels()
                )));
            }
            if let (Some(a), Some(x)) = (alphabet, u.frames.iter().max()) {
                if *x as usize >= a {
                    return Err(Error::VocabularyMismatch(format!(
                        "utterance {} has observation {x} but the world alphabet has {a}",
                        i + 1
                    )));
                }
            }
        }
        Ok(())
    }
}

fn resolve_beam(base: &BeamConfig, a: &BeamArgs) -> Result<BeamConfig> {
    let beam = BeamConfig {
        beam_size: a.beam_size.unwrap_or(base.beam_size),
        max_expansions_per_frame: a.max_expansions.unwrap_or(base.max_expansions_per_frame),
        nbest: a.nbest.unwrap_or(base.nbest),
        merge: a.merge.unwrap_or(base.merge),
    };
    beam.check()?;
    Ok(beam)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub fusion: FusionConfig,
    pub dev: WerBreakdown,
    pub sweep: String,
}

fn resolve_fusion(base: &FusionConfig, a: &FusionArgs) -> Result<FusionConfig> {
    let mut f = match &a.operating_point {
        Some(p) => {
            require_file(p)?;
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str::<OperatingPoint>(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
                .fusion
        }
        None => *base,
    };
    if let Some(m) = a.fusion {
        f.mode = m;
    }
    if let Some(x) = a.lambda_tau {
        f.lambda_tau = x;
    }
    if let Some(x) = a.lambda_psi {
        f.lambda_psi = x;
    }
    if let Some(x) = a.beta {
        f.beta = x;
    }
    if let Some(x) = a.eos_final {
        f.include_eos_at_finalization = x;
    }
    Ok(f)
}

/// Which row of the comparison table a fusion setting belongs to.
pub fn method_label(config: &FusionConfig) -> &'static str {
    match config.mode {
        FusionMode::None => "baseline",
        FusionMode::Shallow => "shallow",
        FusionMode::DensityRatio if config.lambda_psi == config.lambda_tau => "density_ratio_tied",
        FusionMode::DensityRatio => "density_ratio_free",
    }
}

const METHOD_ORDER: [&str; 4] = ["baseline", "shallow", "density_ratio_tied", "density_ratio_free"];

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecodeSummary {
    pub name: String,
    pub data: String,
    pub scorer: String,
    pub fusion: FusionConfig,
    pub beam: BeamConfig,
    pub utterances: usize,
    pub breakdown: WerBreakdown,
}

pub const SUMMARY_CSV_HEADER: &str = "name,method,mode,lambda_psi,lambda_tau,beta,wer,del,ins,sub,n_ref_tokens";

fn summary_csv_row(s: &DecodeSummary) -> String {
    let f = &s.fusion;
    let b = &s.breakdown;
    format!(
        "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
        s.name,
        method_label(f),
        f.mode,
        f.effective_lambda_psi(),
        f.effective_lambda_tau(),
        f.beta,
        b.wer,
        b.del_rate,
        b.ins_rate,
        b.sub_rate,
        b.counts.ref_tokens
    )
}

fn read_data(path: &Path) -> Result<Vec<Utterance>> {
    require_file(path)?;
    let domain = Role::from_path(path).map_or(Domain::Target, Role::domain);
    let data = dataset::read_paired(path, domain)?;
    if data.is_empty() {
        return Err(Error::parse("dataset", 0, "no utterances"));
    }
    Ok(data)
}

fn cmd_decode(ctx: &Context, a: &DecodeArgs) -> Result<()> {
    let data_path = a
        .data
        .clone()
        .unwrap_or_else(|| ctx.out.join("data").join(Role::Eval.file_name()));
    let fusion = resolve_fusion(&ctx.config.fusion, &a.fusion)?;
    let beam = resolve_beam(&ctx.config.beam, &a.beam)?;
    let data = read_data(&data_path)?;
    let model = Model::load(ctx, &a.model, fusion.mode)?;
    let lms = model.lms();
    fusion.check_for_search(&lms)?;
    model.check_data(&data)?;

    let mut hyps_text = String::new();
    let mut nbest_text = String::new();
    let mut hyps: Vec<Vec<Symbol>> = Vec::with_capacity(data.len());
    for (i, u) in data.iter().enumerate() {
        let list = beam_search(model.scorer.as_ref(), &lms, &fusion, &beam, &u.frames)?;
        for (rank, h) in list.iter().enumerate() {
            let _ = writeln!(
                nbest_text,
                "{}\t{}\t{:.6}\t{}",
                i + 1,
                rank + 1,
                h.score,
                dataset::format_transcript(&h.labels)
            );
        }
        let best = list.into_iter().next().map(|h| h.labels).unwrap_or_default();
        hyps_text.push_str(&dataset::format_transcript(&best));
        hyps_text.push('\n');
        hyps.push(best);
    }
    let breakdown = corpus_wer(
        data.iter()
            .zip(&hyps)
            .map(|(u, h)| (u.transcript.as_slice(), h.as_slice())),
    )?;
    let name = a.name.clone().unwrap_or_else(|| method_label(&fusion).to_string());
    let summary = DecodeSummary {
        name: name.clone(),
        data: data_path.display().to_string(),
        scorer: a.model.scorer.clone(),
        fusion,
        beam,
        utterances: data.len(),
        breakdown,
    };
    let dir = ctx.dir(&format!("decode/{name}"))?;
    let paths = ["hyps.txt", "nbest.tsv", "summary.json", "summary.csv"].map(|f| dir.join(f));
    write_file(&paths[0], &hyps_text)?;
    write_file(&paths[1], &nbest_text)?;
    write_file(&paths[2], &(serde_json::to_string_pretty(&summary)? + "\n"))?;
    let row = summary_csv_row(&summary);
    write_file(&paths[3], &format!("{SUMMARY_CSV_HEADER}\n{row}\n"))?;
    let mut inputs: Vec<&Path> = vec![&data_path];
    inputs.extend(model.inputs.iter().map(PathBuf::as_path));
    let outputs: Vec<&Path> = paths.iter().map(PathBuf::as_path).collect();
    ctx.manifest(&dir.join("manifest.json"), "decode", &inputs, &outputs)?;
    println!("{SUMMARY_CSV_HEADER}\n{row}");
    Ok(())
}

fn cmd_sweep(ctx: &Context, a: &SweepArgs) -> Result<()> {
    let data_path = a
        .data
        .clone()
        .unwrap_or_else(|| ctx.out.join("data").join(Role::Dev.file_name()));
    if let Some(role) = Role::from_path(&data_path) {
        if role != Role::Dev {
            return Err(Error::Config(format!(
                "sweeps tune on dev data only; {} is tagged {role:?}",
                data_path.display()
            )));
        }
    }
    let mode = if a.pair { FusionMode::DensityRatio } else { a.mode };
    let beam = resolve_beam(&ctx.config.beam, &a.beam)?;
    let eos = a.eos_final.unwrap_or(ctx.config.fusion.include_eos_at_finalization);
    let data = read_data(&data_path)?;
    let model = Model::load(ctx, &a.model, mode)?;
    let lms = model.lms();
    model.check_data(&data)?;
    let g = &ctx.config.sweep;
    let pick = |flag: &Option<Grid>, default: &Vec<f64>| flag.as_ref().map_or_else(|| default.clone(), |x| x.0.clone());
    let result: SweepResult = if a.pair {
        sweep_lambda_pair(
            &data,
            model.scorer.as_ref(),
            &lms,
            a.beta.unwrap_or(g.pair_beta),
            &pick(&a.lambda_psi_grid, &g.lambda_psi_grid),
            &pick(&a.lambda_tau_grid, &g.lambda_tau_grid),
            &beam,
            eos,
        )?
    } else {
        let lambdas = if mode == FusionMode::None {
            vec![0.0]
        } else {
            pick(&a.lambda_grid, &g.lambda_grid)
        };
        sweep_lambda_beta(
            &data,
            model.scorer.as_ref(),
            &lms,
            mode,
            &lambdas,
            &pick(&a.beta_grid, &g.beta_grid),
            &beam,
            eos,
        )?
    };
    let name = a.name.clone().unwrap_or_else(|| {
        if a.pair {
            "density_ratio_pair".into()
        } else {
            mode.to_string()
        }
    });
    let dir = ctx.dir(&format!("sweep/{name}"))?;
    let csv_path = dir.join("sweep.csv");
    let op_path = dir.join("operating_point.json");
    write_file(&csv_path, &result.to_csv())?;
    let best = result.best();
    let op = OperatingPoint {
        fusion: best.config,
        dev: best.breakdown,
        sweep: name.clone(),
    };
    write_file(&op_path, &(serde_json::to_string_pretty(&op)? + "\n"))?;
    let mut inputs: Vec<&Path> = vec![&data_path];
    inputs.extend(model.inputs.iter().map(PathBuf::as_path));
    ctx.manifest(&dir.join("manifest.json"), "sweep", &inputs, &[&csv_path, &op_path])?;
    println!("{}", result.to_csv().lines().last().unwrap_or_default());
    Ok(())
}

/// One row of the comparison table, copied verbatim from a run's summary.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub fields: Vec<String>,
}

impl ReportRow {
    fn field(&self, header: &str) -> &str {
        let i = SUMMARY_CSV_HEADER.split(',').position(|h| h == header).expect("known column");
        &self.fields[i]
    }
}

/// Reads every `<runs>/<name>/summary.csv` and orders the rows baseline,
/// shallow, density ratio with tied scales, density ratio with free scales
/// (then by run name).
pub fn collect_report(runs: &Path) -> Result<Vec<ReportRow>> {
    let entries = std::fs::read_dir(runs).map_err(|e| Error::io(runs, e))?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    let missing: Vec<String> = dirs
        .iter()
        .filter(|d| !d.join("summary.csv").is_file())
        .map(|d| stem(d))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Config(format!("incomplete runs (no summary.csv): {}", missing.join(", "))));
    }
    if dirs.is_empty() {
        return Err(Error::Config(format!(
            "no runs under {}; expected any of: {}",
            runs.display(),
            METHOD_ORDER.join(", ")
        )));
    }
    let mut rows = Vec::new();
    for d in &dirs {
        let path = d.join("summary.csv");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut lines = text.lines();
        if lines.next() != Some(SUMMARY_CSV_HEADER) {
            return Err(Error::parse("summary.csv", 1, format!("unexpected header in {}", path.display())));
        }
        for (i, line) in lines.enumerate() {
            let fields: Vec<String> = line.split(',').map(str::to_string).collect();
            if fields.len() != SUMMARY_CSV_HEADER.split(',').count() {
                return Err(Error::parse("summary.csv", i + 2, "wrong number of fields"));
            }
            rows.push(ReportRow { fields });
        }
    }
    let order = |r: &ReportRow| METHOD_ORDER.iter().position(|m| *m == r.field("method")).unwrap_or(METHOD_ORDER.len());
    rows.sort_by(|a, b| order(a).cmp(&order(b)).then_with(|| a.field("name").cmp(b.field("name"))));
    Ok(rows)
}

pub const REPORT_CSV_HEADER: &str = "method,name,wer,del,ins,sub,lambda_tau,lambda_psi,beta";

fn cmd_report(ctx: &Context, a: &ReportArgs) -> Result<()> {
    let runs = a.runs.clone().unwrap_or_else(|| ctx.out.join("decode"));
    let rows = collect_report(&runs)?;
    let cols: Vec<&str> = REPORT_CSV_HEADER.split(',').collect();
    let mut csv = String::from(REPORT_CSV_HEADER);
    csv.push('\n');
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| cols.iter().map(|c| r.field(c).to_string()).collect())
        .collect();
    for r in &table {
        csv.push_str(&r.join(","));
        csv.push('\n');
    }
    let widths: Vec<usize> = (0..cols.len())
        .map(|i| table.iter().map(|r| r[i].len()).chain([cols[i].len()]).max().unwrap_or(0))
        .collect();
    let mut text = String::new();
    for r in std::iter::once(cols.iter().map(|s| s.to_string()).collect::<Vec<_>>()).chain(table.iter().cloned()) {
        let cells: Vec<String> = r.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        text.push_str(cells.join("  ").trim_end());
        text.push('\n');
    }
    let absent: Vec<&str> = METHOD_ORDER
        .iter()
        .copied()
        .filter(|m| !rows.iter().any(|r| r.field("method") == *m))
        .collect();
    if !absent.is_empty() {
        let _ = writeln!(text, "not run: {}", absent.join(", "));
    }
    std::fs::create_dir_all(&ctx.out).map_err(|e| Error::io(&ctx.out, e))?;
    let csv_path = ctx.out.join("report.csv");
    let txt_path = ctx.out.join("report.txt");
    write_file(&csv_path, &csv)?;
    write_file(&txt_path, &text)?;
    print!("{text}");
    Ok(())
}
