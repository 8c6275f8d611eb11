use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use phrase_critic::critic::Checkpoint;
use phrase_critic::grounding::ImageRecord;
use phrase_critic::jsonl;
use phrase_critic::pipeline::synth::{generate, SynthSpec};
use phrase_critic::pipeline::{
    chunk_lines, evaluate, flip_sentence, holdout_split, load_candidates, load_images, rank_candidates, run_train,
    score_candidates, GrounderKind, RunConfig,
};
use phrase_critic::ranker::{ExplanationCandidate, RankedRecord};
use phrase_critic::{CriticModel, Error, Lexicon, Result, SeededRng};

#[derive(Debug, Parser)]
#[command(name = "phrase-critic", version, about = "Rerank generated explanations by grounded attribute phrases")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Run configuration (TOML). Relative paths inside resolve against its directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Weight of the fluency score when ranking.
    #[arg(long, global = true)]
    lambda: Option<f64>,
    /// Grounder backend: `file` or `synthetic`.
    #[arg(long, global = true)]
    grounder: Option<GrounderKind>,
    /// Groundings file for the file grounder.
    #[arg(long, global = true)]
    groundings: Option<PathBuf>,
    #[arg(long, global = true)]
    lexicon: Option<PathBuf>,
    /// Output file (a directory for `synth-gen`). Defaults to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract attribute phrases, one record per input line.
    Chunk(TextInput),
    /// Draw a flipped-attribute negative for each input line.
    Flip(TextInput),
    /// Write a seeded synthetic benchmark and a matching run.toml.
    SynthGen(SynthArgs),
    /// Train a critic and write a checkpoint plus per-epoch losses.
    Train(TrainArgs),
    /// Critic relevance of every candidate, in input order.
    Score(DataArgs),
    /// Rank each image's candidates by relevance plus fluency.
    Rank(DataArgs),
    /// Top-1 attribute relevance of a ranking against a fluency-only baseline.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
struct TextInput {
    /// Text file with one sentence per line.
    file: Option<PathBuf>,
    #[arg(long, conflicts_with = "file")]
    sentence: Option<String>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    train_images: Option<usize>,
    #[arg(long)]
    test_images: Option<usize>,
    #[arg(long)]
    candidates: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    images: Option<PathBuf>,
    /// Held-out images; without it a seeded share of `--images` is held out.
    #[arg(long)]
    holdout: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Loss history output; defaults to `<checkpoint stem>.history.jsonl`.
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DataArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long)]
    candidates: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Ranked output produced by `rank`.
    ranked: PathBuf,
    #[arg(long)]
    images: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) | Error::State(_) | Error::CheckpointIncompatible(_) => 2,
        Error::NumericFailure(_) => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

struct Ctx {
    config: RunConfig,
    lexicon: Lexicon,
    out: Option<PathBuf>,
}

fn resolve(base: Option<&Path>, p: &mut Option<PathBuf>) {
    if let (Some(base), Some(path)) = (base, p.as_mut()) {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

fn load_context(g: Global) -> Result<Ctx> {
    let mut config = match &g.config {
        Some(path) => {
            let mut c = RunConfig::load(path)?;
            let base = path.parent();
            for p in [
                &mut c.paths.images,
                &mut c.paths.candidates,
                &mut c.paths.lexicon,
                &mut c.paths.holdout_images,
                &mut c.paths.checkpoint,
                &mut c.paths.out,
                &mut c.grounder.groundings,
            ] {
                resolve(base, p);
            }
            c
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = g.seed {
        config.seed = seed;
    }
    if let Some(lambda) = g.lambda {
        config.rank.lambda = lambda;
    }
    if let Some(kind) = g.grounder {
        config.grounder.kind = kind;
    }
    if g.groundings.is_some() {
        config.grounder.groundings = g.groundings;
    }
    if g.lexicon.is_some() {
        config.paths.lexicon = g.lexicon;
    }
    config.validate()?;
    let lexicon = match &config.paths.lexicon {
        Some(p) => Lexicon::load(p)?,
        None => Lexicon::default(),
    };
    let out = g.out.or_else(|| config.paths.out.clone());
    Ok(Ctx { config, lexicon, out })
}

fn read_text(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|source| Error::Io { path: path.into(), source })?;
    String::from_utf8(bytes).map_err(|e| {
        let line = e.as_bytes()[..e.utf8_error().valid_up_to()].iter().filter(|&&b| b == b'\n').count() + 1;
        Error::Format { path: path.into(), line, message: "invalid UTF-8".into() }
    })
}

fn input_text(input: &TextInput) -> Result<String> {
    match (&input.sentence, &input.file) {
        (Some(s), _) => Ok(s.clone()),
        (None, Some(path)) => read_text(path),
        (None, None) => Err(Error::InvalidArgument("give a FILE or --sentence".into())),
    }
}

fn emit_jsonl<T: Serialize>(out: Option<&Path>, records: &[T]) -> Result<()> {
    match out {
        Some(path) => jsonl::write_jsonl(path, records),
        None => write_stdout(&jsonl::to_jsonl_string(records)),
    }
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("report serializes") + "\n";
    match out {
        Some(path) => fs::write(path, text).map_err(|source| Error::Io { path: path.into(), source }),
        None => write_stdout(&text),
    }
}

fn write_stdout(text: &str) -> Result<()> {
    let mut stdout = io::stdout().lock();
    match stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(Error::Io { path: "<stdout>".into(), source: e }),
        _ => Ok(()),
    }
}

fn required(p: Option<&PathBuf>, what: &str) -> Result<PathBuf> {
    p.cloned()
        .ok_or_else(|| Error::InvalidArgument(format!("no {what} given (flag or [paths] in the config)")))
}

/// Images plus held-out images, the set every image id may refer to.
fn all_images(ctx: &Ctx, images: Option<&PathBuf>) -> Result<Vec<ImageRecord>> {
    let path = required(images.or(ctx.config.paths.images.as_ref()), "images file")?;
    let mut out = load_images(&path, &ctx.lexicon)?;
    if images.is_none() {
        if let Some(h) = &ctx.config.paths.holdout_images {
            out.extend(load_images(h, &ctx.lexicon)?);
        }
    }
    Ok(out)
}

fn load_model(ctx: &Ctx, path: Option<&PathBuf>) -> Result<CriticModel> {
    let path = required(path.or(ctx.config.paths.checkpoint.as_ref()), "checkpoint")?;
    let ckpt = Checkpoint::load(&path)?;
    if ckpt.dims != ctx.config.dims {
        return Err(Error::CheckpointIncompatible(format!(
            "checkpoint dims {:?} differ from configured dims {:?}",
            ckpt.dims, ctx.config.dims
        )));
    }
    ckpt.to_model()
}

fn load_data(ctx: &Ctx, args: &DataArgs) -> Result<(Vec<ImageRecord>, Vec<ExplanationCandidate>)> {
    let images = all_images(ctx, args.images.as_ref())?;
    let path = required(args.candidates.as_ref().or(ctx.config.paths.candidates.as_ref()), "candidates file")?;
    let by_image = load_candidates(&path, &images)?;
    let candidates = images
        .iter()
        .filter_map(|i| by_image.get(&i.image_id))
        .flatten()
        .cloned()
        .collect();
    Ok((images, candidates))
}

fn run(cli: Cli) -> Result<()> {
    let ctx = load_context(cli.global)?;
    let out = ctx.out.as_deref();
    match cli.command {
        Command::Chunk(input) => emit_jsonl(out, &chunk_lines(&input_text(&input)?, &ctx.lexicon)),
        Command::Flip(input) => {
            let text = input_text(&input)?;
            let mut rng = SeededRng::new(ctx.config.seed).derive("flip");
            let records = text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(|l| flip_sentence(l, &ctx.lexicon, &ctx.config.train.flip, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            emit_jsonl(out, &records)
        }
        Command::SynthGen(args) => synth_gen(&ctx, args),
        Command::Train(args) => train(&ctx, args),
        Command::Score(args) => {
            let model = load_model(&ctx, args.checkpoint.as_ref())?;
            let (images, candidates) = load_data(&ctx, &args)?;
            let grounder = ctx.config.build_grounder(&images)?;
            emit_jsonl(out, &score_candidates(&candidates, &model, &grounder, &ctx.lexicon)?)
        }
        Command::Rank(args) => {
            let model = load_model(&ctx, args.checkpoint.as_ref())?;
            let (images, candidates) = load_data(&ctx, &args)?;
            let grounder = ctx.config.build_grounder(&images)?;
            emit_jsonl(out, &rank_candidates(&candidates, &model, &grounder, &ctx.lexicon, &ctx.config.rank)?)
        }
        Command::Eval(args) => {
            let images = all_images(&ctx, args.images.as_ref())?;
            let records: Vec<RankedRecord> = jsonl::read_jsonl(&args.ranked)?;
            emit_json(out, &evaluate(&records, &images, &ctx.lexicon)?)
        }
    }
}

fn synth_gen(ctx: &Ctx, args: SynthArgs) -> Result<()> {
    let dir = required(ctx.out.as_ref(), "output directory (--out)")?;
    let defaults = SynthSpec::default();
    let spec = SynthSpec {
        seed: ctx.config.seed,
        train_images: args.train_images.unwrap_or(defaults.train_images),
        test_images: args.test_images.unwrap_or(defaults.test_images),
        candidates_per_image: args.candidates.unwrap_or(defaults.candidates_per_image),
        ..defaults
    };
    let bench = generate(&spec, &ctx.lexicon)?;
    bench.write(&dir, &ctx.config.grounder.synthetic)?;

    let mut config = ctx.config.clone();
    config.paths.images = Some("train_images.jsonl".into());
    config.paths.holdout_images = Some("test_images.jsonl".into());
    config.paths.candidates = Some("candidates.jsonl".into());
    config.paths.lexicon = Some("lexicon.toml".into());
    config.paths.checkpoint = Some("critic.json".into());
    config.paths.out = None;
    config.grounder.groundings = Some("groundings.jsonl".into());
    let path = dir.join("run.toml");
    fs::write(&path, config.to_toml()).map_err(|source| Error::Io { path, source })?;
    eprintln!(
        "wrote {} train images, {} test images and {} candidates to {}",
        bench.train.len(),
        bench.test.len(),
        bench.candidates.len(),
        dir.display()
    );
    Ok(())
}

fn train(ctx: &Ctx, args: TrainArgs) -> Result<()> {
    let mut config = ctx.config.clone();
    if let Some(epochs) = args.epochs {
        config.train.epochs = epochs;
        config.validate()?;
    }
    let images_path = required(args.images.as_ref().or(config.paths.images.as_ref()), "images file")?;
    let images = load_images(&images_path, &ctx.lexicon)?;
    let holdout_path = args.holdout.as_ref().or(if args.images.is_some() {
        None
    } else {
        config.paths.holdout_images.as_ref()
    });
    let (train_set, holdout) = match holdout_path {
        Some(p) => (images, load_images(p, &ctx.lexicon)?),
        None => holdout_split(&images, config.holdout_fraction, config.seed)?,
    };
    let everything: Vec<ImageRecord> = train_set.iter().chain(&holdout).cloned().collect();
    let grounder = config.build_grounder(&everything)?;
    let (model, history, report) = run_train(&config, &train_set, &holdout, &grounder, &ctx.lexicon)?;

    let ckpt_path = ctx
        .out
        .clone()
        .or_else(|| config.paths.checkpoint.clone())
        .unwrap_or_else(|| "critic.json".into());
    Checkpoint::from_model(&model, config.seed).save(&ckpt_path)?;
    let history_path = args.history.unwrap_or_else(|| ckpt_path.with_extension("history.jsonl"));
    jsonl::write_jsonl(&history_path, &history)?;
    emit_json(None, &report)
}
