//! Command-line driver for every pipeline stage.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use usersim_core::data::io::{format_embeddings, format_logs, read_text, write_text};
use usersim_core::data::{ingest_logs, synth_world, Corpus, Dataset, SynthConfig};
use usersim_core::env::{popular_policy, random_policy, FeedbackMode, ResetSource, Simulator};
use usersim_core::eval::{
    baseline_gru, baseline_lr, baseline_random, eval_discriminator, eval_generator, write_report, BaselineConfig,
    Report,
};
use usersim_core::training::{
    apply_variant, load_checkpoint, pretrain, save_checkpoint, sweep, train, Checkpoint, EnvBundle, SweepParam,
    TrainConfig, Variant,
};
use usersim_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "usersim",
    version,
    about = "Train and run an adversarial user-feedback simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Full,
    V1,
    V2,
    V3,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Full => Variant::Full,
            VariantArg::V1 => Variant::ThreeClass,
            VariantArg::V2 => Variant::Beta0,
            VariantArg::V3 => Variant::NoGan,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ParamArg {
    #[value(name = "N")]
    N,
    Lambda,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Argmax,
    Sample,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Random,
    Popular,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic log and embedding file from a planted user model.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out_logs: PathBuf,
        #[arg(long)]
        out_embeddings: PathBuf,
    },
    /// Parse logs and embeddings, filter rare items and write a dataset.
    Ingest {
        #[arg(long)]
        logs: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long, default_value_t = 5)]
        min_count: usize,
        /// State length; sessions shorter than n + 1 events are dropped.
        #[arg(long, default_value_t = 20)]
        n: usize,
        /// Number of feedback classes.
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pre-train the generator and discriminator only.
    Pretrain {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pre-train and run the adversarial rounds.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_enum)]
        variant: Option<VariantArg>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Feedback-prediction F1 and AUC of a checkpoint's discriminator.
    EvalDisc {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Also fit and score the Random, LR and GRU baselines.
        #[arg(long)]
        baselines: bool,
    },
    /// MAP and NDCG@k of a checkpoint's generator.
    EvalGen {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value_t = 40)]
        k: usize,
        #[arg(long)]
        report: PathBuf,
    },
    /// Retrain for each value of N or lambda and report test AUC.
    Sweep {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        param: ParamArg,
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Vec<f64>,
        #[arg(long)]
        report: PathBuf,
    },
    /// Roll out a baseline policy against a trained simulator.
    Simulate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long)]
        episodes: usize,
        #[arg(long)]
        horizon: usize,
        #[arg(long, value_enum)]
        policy: PolicyArg,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        report: PathBuf,
    },
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<TrainConfig> {
    let mut config = TrainConfig::from_kv(&read_text(path)?)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    Ok(config)
}

fn load_dataset(path: &Path, config: &TrainConfig) -> Result<Dataset> {
    Dataset::new(Corpus::load(path)?, config.n, config.k, config.reward_map()?)
}

fn write_checkpoint(trained: &usersim_core::training::Trained, dataset: &Dataset, out: &Path) -> Result<()> {
    let ckpt = Checkpoint::from_trained(trained, Some(EnvBundle::from_dataset(dataset)));
    save_checkpoint(&ckpt, out)?;
    log::info!("wrote {} (round {})", out.display(), ckpt.round);
    Ok(())
}

/// Writes the report file and echoes it; a closed stdout is not an error.
fn emit(path: &Path, report: &Report) -> Result<()> {
    write_report(path, report)?;
    let _ = writeln!(std::io::stdout(), "{}", report.to_json());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            config,
            seed,
            out_logs,
            out_embeddings,
        } => {
            let synth = SynthConfig::from_kv(&read_text(&config)?)?;
            let (corpus, _) = synth_world(&synth, seed)?;
            write_text(&out_logs, &format_logs(&corpus.catalog, &corpus.sessions))?;
            write_text(&out_embeddings, &format_embeddings(&corpus.catalog))?;
        }
        Command::Ingest {
            logs,
            embeddings,
            min_count,
            n,
            k,
            out,
        } => {
            let (corpus, report) = ingest_logs(&logs, &embeddings, min_count, n, k)?;
            for w in &report.warnings {
                log::warn!("{w}");
            }
            log::info!(
                "{} sessions, {} items; removed {} items, {} events, {} sessions",
                corpus.sessions.len(),
                corpus.catalog.len(),
                report.removed_items,
                report.removed_events,
                report.dropped_sessions
            );
            corpus.save(&out)?;
        }
        Command::Pretrain {
            dataset,
            config,
            seed,
            out,
        } => {
            let config = load_config(&config, Some(seed))?;
            let (config, _) = apply_variant(&config, config.variant)?;
            let data = load_dataset(&dataset, &config)?;
            write_checkpoint(&pretrain(&data, &config)?, &data, &out)?;
        }
        Command::Train {
            dataset,
            config,
            seed,
            variant,
            out,
        } => {
            let config = load_config(&config, Some(seed))?;
            let variant = match variant.map(Variant::from) {
                Some(v) if config.variant != Variant::Full && v != config.variant => {
                    return Err(Error::config(format!(
                        "--variant {} conflicts with variant={} in the config file",
                        v.tag(),
                        config.variant.tag()
                    )))
                }
                Some(v) => v,
                None => config.variant,
            };
            let (config, _) = apply_variant(&config, variant)?;
            let data = load_dataset(&dataset, &config)?;
            write_checkpoint(&train(&data, &config)?, &data, &out)?;
        }
        Command::EvalDisc {
            dataset,
            ckpt,
            report,
            baselines,
        } => {
            let ckpt = load_checkpoint(&ckpt)?;
            let data = load_dataset(&dataset, &ckpt.config)?;
            let test = data.test();
            let m = eval_discriminator(&test, &ckpt.discriminator, data.catalog())?;
            let mut metrics = json!({ "discriminator": m });
            if baselines {
                let cfg = BaselineConfig {
                    seed: ckpt.config.seed,
                    ..BaselineConfig::default()
                };
                let train = data.train();
                let k = ckpt.config.k;
                metrics["random"] = json!(baseline_random(&test, k, cfg.seed)?);
                metrics["lr"] = json!(baseline_lr(&train, &test, data.catalog(), k, &cfg)?);
                metrics["gru"] = json!(baseline_gru(&train, &test, data.catalog(), ckpt.config.dims(), &cfg)?);
            }
            let r = Report::new("eval-disc", Some(ckpt.config.hash()), metrics);
            emit(&report, &r)?;
        }
        Command::EvalGen {
            dataset,
            ckpt,
            k,
            report,
        } => {
            let ckpt = load_checkpoint(&ckpt)?;
            let data = load_dataset(&dataset, &ckpt.config)?;
            let m = eval_generator(&data.test(), &ckpt.generator, data.catalog(), k)?;
            let r = Report::new("eval-gen", Some(ckpt.config.hash()), json!(m));
            emit(&report, &r)?;
        }
        Command::Sweep {
            dataset,
            config,
            param,
            values,
            report,
        } => {
            let config = load_config(&config, None)?;
            let (config, _) = apply_variant(&config, config.variant)?;
            let corpus = Corpus::load(&dataset)?;
            let param = match param {
                ParamArg::N => SweepParam::N,
                ParamArg::Lambda => SweepParam::Lambda,
            };
            let points = sweep(&corpus, &config, param, &values)?;
            let best = points
                .iter()
                .filter_map(|p| p.auc.map(|a| (p.value, a)))
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(v, _)| v);
            let claim = match param {
                SweepParam::Lambda => "reference claim: AUC peaks at lambda = 0.3",
                SweepParam::N => "reference claim: longer histories improve AUC",
            };
            let r = Report::new(
                "sweep",
                Some(config.hash()),
                json!({ "param": param.to_string(), "points": points, "best_value": best }),
            )
            .with_note(claim);
            emit(&report, &r)?;
        }
        Command::Simulate {
            ckpt,
            mode,
            episodes,
            horizon,
            policy,
            seed,
            report,
        } => {
            if episodes == 0 {
                return Err(Error::config("episodes must be >= 1"));
            }
            let ckpt = load_checkpoint(&ckpt)?;
            let mode = match mode {
                ModeArg::Argmax => FeedbackMode::Argmax,
                ModeArg::Sample => FeedbackMode::Sample,
            };
            let sim = Simulator::from_checkpoint(&ckpt, mode, seed)?;
            let popularity = ckpt
                .environment
                .as_ref()
                .map(|e| e.popularity.clone())
                .unwrap_or_default();
            let mut totals = Vec::with_capacity(episodes);
            let mut positives = 0usize;
            for episode in 0..episodes as u64 {
                let start = sim.reset(ResetSource::Sampled, episode)?;
                let t = match policy {
                    PolicyArg::Random => {
                        sim.rollout(start, random_policy(sim.catalog().len(), seed ^ episode), horizon)?
                    }
                    PolicyArg::Popular => sim.rollout(start, popular_policy(&popularity), horizon)?,
                };
                positives += t.steps.iter().filter(|s| s.feedback.is_positive(ckpt.config.k)).count();
                totals.push(t.total_reward);
            }
            let mean = totals.iter().sum::<f64>() / episodes as f64;
            let metrics = json!({
                "episodes": episodes,
                "horizon": horizon,
                "mean_return": mean,
                "positive_rate": positives as f64 / (episodes * horizon) as f64,
            });
            let r = Report::new("simulate", Some(ckpt.config.hash()), metrics).with_trace(json!({ "returns": totals }));
            emit(&report, &r)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
