//! Command-line front end: corpus generation and augmentation, training,
//! evaluation, sweeps, and plot-data export.
//!
//! Exit codes: 0 success, 2 usage error, 1 runtime failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use twgrpo::env::{self, TaskSpec};
use twgrpo::objectives::Variant;
use twgrpo::policy::PolicyParams;
use twgrpo::qai;
use twgrpo::rewards::{self, RewardScheme};
use twgrpo::run::{self, RunManifest};
use twgrpo::sweep;
use twgrpo::trainer::{self, Optimizer, TrainConfig};
use twgrpo::vocab::Vocab;
use twgrpo::weighting::{PositionMask, WeightMode};
use twgrpo::Error;

#[derive(Parser)]
#[command(name = "twgrpo", version, about = "Group-relative policy optimization lab")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic multi-choice QA corpus.
    Gen(GenArgs),
    /// Invert single-choice records into multi-answer ones.
    Augment(AugmentArgs),
    /// Train a policy and write a run directory.
    Train(TrainArgs),
    /// Greedy-decode a checkpoint over a corpus split.
    Eval(EvalArgs),
    /// Run a preset group across seeds.
    Sweep(SweepArgs),
    /// Flatten run metrics into one tidy CSV.
    ExportPlots(ExportArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 32)]
    train: usize,
    #[arg(long, default_value_t = 16)]
    eval: usize,
    #[arg(long, default_value_t = 4)]
    n_options: usize,
    #[arg(long, default_value_t = 3)]
    feature_dim: usize,
    #[arg(long, default_value_t = 1)]
    rule_seed: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Force exactly one correct option per record.
    #[arg(long)]
    single_choice: bool,
}

#[derive(Args)]
struct AugmentArgs {
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = qai::DEFAULT_INVERT_PROB)]
    invert_prob: f64,
    #[arg(long, default_value_t = qai::DEFAULT_DROP_PROB)]
    drop_prob: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, required_unless_present = "from_manifest")]
    corpus: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Named starting configuration; see `sweep` groups for the grid.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// TOML file with TrainConfig fields; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Reproduce a previous run from its manifest.
    #[arg(long)]
    from_manifest: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

/// Individual flags win over preset, config file, and manifest.
#[derive(Args)]
struct Overrides {
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    prompts_per_step: Option<usize>,
    #[arg(long)]
    group_size: Option<usize>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    optimizer: Option<String>,
    /// grpo, grpo_prime, or tw_grpo.
    #[arg(long)]
    objective: Option<String>,
    /// fixed or soft.
    #[arg(long)]
    reward: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    /// scale or offset.
    #[arg(long)]
    weight_mode: Option<String>,
    /// none, padding_only, content_only, or all.
    #[arg(long)]
    position_mask: Option<String>,
    #[arg(long)]
    clip_eps: Option<f64>,
    #[arg(long)]
    kl_beta: Option<f64>,
    #[arg(long)]
    format_bonus: Option<f64>,
    #[arg(long)]
    format_prior: Option<f64>,
    #[arg(long)]
    eval_every: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Path to a params.txt checkpoint file.
    #[arg(long)]
    params: PathBuf,
    /// train or eval.
    #[arg(long, default_value = "eval")]
    split: String,
    #[arg(long, default_value_t = twgrpo::policy::DEFAULT_MAX_LEN)]
    max_len: usize,
}

#[derive(Args)]
struct SweepArgs {
    /// One of the named groups; run with a bogus name to list them.
    #[arg(long)]
    group: String,
    /// Comma list (1,2,3) or inclusive range (1..5).
    #[arg(long)]
    seeds: String,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    jobs: usize,
    #[arg(long)]
    steps: Option<u64>,
}

#[derive(Args)]
struct ExportArgs {
    /// Directory tree containing run directories.
    #[arg(long)]
    runs: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn parse_seeds(spec: &str) -> Result<Vec<u64>, Error> {
    let spec = spec.trim();
    if let Some((lo, hi)) = spec.split_once("..") {
        let lo: u64 = lo
            .trim()
            .parse()
            .map_err(|e| Error::Config(format!("bad seed range start: {e}")))?;
        let hi: u64 = hi
            .trim()
            .parse()
            .map_err(|e| Error::Config(format!("bad seed range end: {e}")))?;
        if hi < lo {
            return Err(Error::Config(format!("empty seed range {spec:?}")));
        }
        return Ok((lo..=hi).collect());
    }
    let seeds: Result<Vec<u64>, _> = spec.split(',').map(|s| s.trim().parse()).collect();
    let seeds = seeds.map_err(|e| Error::Config(format!("bad seeds list {spec:?}: {e}")))?;
    if seeds.is_empty() {
        return Err(Error::Config("seeds list must be nonempty".into()));
    }
    Ok(seeds)
}

fn apply_overrides(mut cfg: TrainConfig, o: &Overrides) -> Result<TrainConfig, Error> {
    if let Some(v) = o.steps {
        cfg.steps = v;
    }
    if let Some(v) = o.seed {
        cfg.seed = v;
    }
    if let Some(v) = o.prompts_per_step {
        cfg.prompts_per_step = v;
    }
    if let Some(v) = o.group_size {
        cfg.group_size = v;
    }
    if let Some(v) = o.temperature {
        cfg.temperature = v;
    }
    if let Some(v) = o.max_len {
        cfg.max_len = v;
    }
    if let Some(v) = o.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = &o.optimizer {
        cfg.optimizer = v.parse::<Optimizer>()?;
    }
    if let Some(v) = &o.objective {
        cfg.objective.variant = v.parse::<Variant>()?;
    }
    if let Some(v) = &o.reward {
        cfg.reward_scheme = match v.as_str() {
            "fixed" => RewardScheme::Fixed,
            "soft" => RewardScheme::Soft,
            other => {
                return Err(Error::Config(format!(
                    "unknown reward {other:?}; expected fixed or soft"
                )))
            }
        };
    }
    if let Some(v) = o.alpha {
        cfg.objective.weight_config.alpha = v;
    }
    if let Some(v) = &o.weight_mode {
        cfg.objective.weight_config.mode = match v.as_str() {
            "scale" => WeightMode::Scale,
            "offset" => WeightMode::Offset,
            other => {
                return Err(Error::Config(format!(
                    "unknown weight mode {other:?}; expected scale or offset"
                )))
            }
        };
    }
    if let Some(v) = &o.position_mask {
        cfg.objective.weight_config.position_mask = match v.as_str() {
            "none" => PositionMask::None,
            "padding_only" => PositionMask::PaddingOnly,
            "content_only" => PositionMask::ContentOnly,
            "all" => PositionMask::All,
            other => {
                return Err(Error::Config(format!(
                    "unknown position mask {other:?}; expected none, padding_only, content_only, or all"
                )))
            }
        };
    }
    if let Some(v) = o.clip_eps {
        cfg.objective.clip_eps = v;
    }
    if let Some(v) = o.kl_beta {
        cfg.objective.kl_beta = v;
    }
    if let Some(v) = o.format_bonus {
        cfg.format_bonus = v;
    }
    if let Some(v) = o.format_prior {
        cfg.format_prior = v;
    }
    if let Some(v) = o.eval_every {
        cfg.eval_every = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_gen(args: &GenArgs) -> Result<(), Error> {
    let spec = TaskSpec {
        n_options: args.n_options,
        feature_dim: args.feature_dim,
        rule_seed: args.rule_seed,
        train: args.train,
        eval: args.eval,
        single_choice: args.single_choice,
    };
    let records = env::generate_corpus(&spec, args.seed)?;
    qai::save_corpus(&args.out, &records)?;
    let multi = records.iter().filter(|r| r.correct.len() >= 2).count();
    println!(
        "wrote {} records ({} train, {} eval, {multi} multi-correct) to {}",
        records.len(),
        args.train,
        args.eval,
        args.out.display()
    );
    Ok(())
}

fn cmd_augment(args: &AugmentArgs) -> Result<(), Error> {
    let records = qai::load_corpus(&args.input)?;
    let out = qai::augment_dataset(&records, args.invert_prob, args.drop_prob, args.seed)?;
    qai::save_corpus(&args.out, &out)?;
    let inverted = out
        .iter()
        .filter(|r| r.provenance == qai::Provenance::Inverted)
        .count();
    println!(
        "wrote {} records ({inverted} inverted) to {}",
        out.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<(), Error> {
    let manifest = if let Some(manifest_path) = &args.from_manifest {
        let mut manifest = RunManifest::load(manifest_path)?;
        manifest.config = apply_overrides(manifest.config, &args.overrides)?;
        if let Some(corpus) = &args.corpus {
            manifest = RunManifest::new(corpus, manifest.preset.clone(), manifest.config)?;
        }
        manifest
    } else {
        let base = if let Some(name) = &args.preset {
            trainer::preset(name)?
        } else if let Some(path) = &args.config {
            let text = std::fs::read_to_string(path)?;
            toml::from_str(&text)
                .map_err(|e| Error::Config(format!("malformed config {path:?}: {e}")))?
        } else {
            TrainConfig::default()
        };
        let config = apply_overrides(base, &args.overrides)?;
        let corpus = args.corpus.as_ref().expect("clap enforces corpus");
        RunManifest::new(corpus, args.preset.clone(), config)?
    };
    let rows = run::execute_run(&args.out, &manifest)?;
    if let Some(last) = rows.last() {
        println!(
            "finished {} steps: accuracy {:.1}%, soft accuracy {:.1}% ({})",
            manifest.config.steps,
            last.eval_accuracy,
            last.eval_soft_accuracy,
            args.out.display()
        );
    }
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<(), Error> {
    let records = qai::load_corpus(&args.corpus)?;
    let split: Vec<&qai::QARecord> = match args.split.as_str() {
        "train" => env::train_split(&records),
        "eval" => env::eval_split(&records),
        other => {
            return Err(Error::Config(format!(
                "unknown split {other:?}; expected train or eval"
            )))
        }
    };
    if split.is_empty() {
        return Err(Error::Config(format!("split {:?} is empty", args.split)));
    }
    let params = PolicyParams::load_from_path(&args.params)?;
    let vocab = Vocab::standard();
    let mut predictions = Vec::new();
    let mut truths = Vec::new();
    let mut exact = 0usize;
    for rec in &split {
        let prompt = env::encode_prompt(rec, &vocab);
        let ids = params.decode_greedy(&prompt, args.max_len, vocab.eos())?;
        let parsed = rewards::parse_answer(&vocab.render(&ids));
        if parsed.as_ref() == Some(&rec.correct) {
            exact += 1;
        }
        predictions.push(parsed);
        truths.push(rec.correct.clone());
    }
    let accuracy = 100.0 * exact as f64 / split.len() as f64;
    let soft = rewards::soft_accuracy_metric(&predictions, &truths)?;
    println!(
        "{} split ({} records): accuracy {accuracy:.2}%, soft accuracy {soft:.2}%",
        args.split,
        split.len()
    );
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), Error> {
    let seeds = parse_seeds(&args.seeds)?;
    let runs = sweep::run_sweep(
        &args.group,
        &seeds,
        &args.corpus,
        &args.out,
        args.jobs,
        args.steps,
    )?;
    println!(
        "{} runs complete; summary at {}",
        runs.len(),
        args.out.join(sweep::SUMMARY_FILE).display()
    );
    Ok(())
}

fn cmd_export(args: &ExportArgs) -> Result<(), Error> {
    sweep::export_plots(&args.runs, &args.out)?;
    let lines = std::fs::read_to_string(&args.out)?.lines().count();
    println!("wrote {} rows to {}", lines.saturating_sub(1), args.out.display());
    Ok(())
}

/// Configuration mistakes are usage errors (exit 2); everything else that
/// fails is a runtime failure (exit 1).
fn exit_code_for(err: &Error) -> ExitCode {
    match err {
        Error::Config(_) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Gen(args) => cmd_gen(args),
        Cmd::Augment(args) => cmd_augment(args),
        Cmd::Train(args) => cmd_train(args),
        Cmd::Eval(args) => cmd_eval(args),
        Cmd::Sweep(args) => cmd_sweep(args),
        Cmd::ExportPlots(args) => cmd_export(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}
