//! The `treff` command-line driver.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use treff_core::episodes::{EvalSetup, EvalSummary, Method, MethodConfig};
use treff_core::synthgen::{self, SynthConfig};
use treff_core::{
    treff, zsl_logits, AdapterParams, FitObjective, FslScores, PhiSign, Sharpness, TrainConfig,
    ZeroShotHead,
};

use crate::dataset::{identity_labels, load_audio, load_head, load_support};
use crate::eval::{evaluate_parallel, shot_curve_parallel};
use crate::format::write_embeddings;
use crate::manifest::RunManifest;
use crate::params::save_params;
use crate::report;

/// An invalid combination of arguments; reported with exit status 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn usage(e: impl std::fmt::Display) -> anyhow::Error {
    UsageError(e.to_string()).into()
}

#[derive(Debug, Parser)]
#[command(
    name = "treff",
    version,
    about = "Few-shot audio classification over frozen embeddings"
)]
pub struct Cli {
    /// Worker threads for episode evaluation (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic clustered dataset.
    Synth(SynthArgs),
    /// Zero-shot predictions for every audio row.
    Zeroshot(ZeroshotArgs),
    /// Episodic evaluation of one method.
    Eval(EvalArgs),
    /// Accuracy against shot count for one or more methods.
    Curve(CurveArgs),
    /// Fit an adapter on a labeled support file.
    Finetune(FinetuneArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Zsl,
    TreffFree,
    TreffFt,
    TipFree,
    TipFt,
    Proto,
    Match,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Zsl => Method::Zsl,
            MethodArg::TreffFree => Method::TreffFree,
            MethodArg::TreffFt => Method::TreffFt,
            MethodArg::TipFree => Method::TipFree,
            MethodArg::TipFt => Method::TipFt,
            MethodArg::Proto => Method::Proto,
            MethodArg::Match => Method::Match,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PhiSignArg {
    Corrected,
    Paper,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FslArg {
    Logits,
    Probabilities,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ObjectiveArg {
    Fused,
    FewShotOnly,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 50)]
    pub classes: usize,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long, default_value_t = 40)]
    pub per_class: usize,
    /// Cluster concentration; audio noise variance is 1/kappa.
    #[arg(long, default_value_t = 200.0)]
    pub kappa: f64,
    /// Variance of the noise added to class centres for text embeddings.
    #[arg(long, default_value_t = 0.14)]
    pub text_noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory; receives audio.treff, text.treff, centers.treff and manifest.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ZeroshotArgs {
    #[arg(long)]
    pub audio: PathBuf,
    #[arg(long)]
    pub text: PathBuf,
    #[arg(long, default_value_t = ZeroShotHead::DEFAULT_TAU)]
    pub tau: f64,
    /// JSON output path (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Settings shared by every scoring method.
#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, default_value_t = ZeroShotHead::DEFAULT_TAU)]
    pub tau: f64,
    /// Sharpness of the adapter's affinity scaling.
    #[arg(long, default_value_t = Sharpness::DEFAULT_B)]
    pub b: f64,
    /// Sharpness of the cache baseline's affinity scaling.
    #[arg(long, default_value_t = Sharpness::DEFAULT_B)]
    pub beta: f64,
    #[arg(long, value_enum, default_value_t = PhiSignArg::Corrected)]
    pub phi_sign: PhiSignArg,
    /// Initial weight of the few-shot term.
    #[arg(long, default_value_t = AdapterParams::DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = FslArg::Logits)]
    pub fsl_scores: FslArg,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Exclude each support example from its own cache during fine-tuning.
    #[arg(long)]
    pub no_self: bool,
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Fused)]
    pub objective: ObjectiveArg,
    /// L2-normalise embeddings before computing prototypes.
    #[arg(long)]
    pub proto_normalize: bool,
}

#[derive(Debug, Args)]
pub struct EpisodeArgs {
    #[arg(long)]
    pub audio: PathBuf,
    #[arg(long)]
    pub text: PathBuf,
    #[arg(long)]
    pub n_way: usize,
    #[arg(long)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub queries_per_class: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_enum)]
    pub method: MethodArg,
    #[arg(long)]
    pub k_shot: usize,
    #[command(flatten)]
    pub episode: EpisodeArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// JSON output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write a one-row CSV summary here.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    #[arg(long, value_enum, value_delimiter = ',', required = true)]
    pub method: Vec<MethodArg>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16")]
    pub shots: Vec<usize>,
    #[command(flatten)]
    pub episode: EpisodeArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// CSV output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write full summaries with the manifest as JSON here.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    #[arg(long)]
    pub support: PathBuf,
    #[arg(long)]
    pub text: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Parameter file; a JSON sidecar is written next to it.
    #[arg(long)]
    pub out: PathBuf,
    /// Training report as JSON (default: `<out>.report.json`).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

impl ModelArgs {
    fn sign(&self) -> PhiSign {
        match self.phi_sign {
            PhiSignArg::Corrected => PhiSign::Corrected,
            PhiSignArg::Paper => PhiSign::Paper,
        }
    }

    fn train(&self, seed: u64) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            epochs: self.epochs,
            learning_rate: self.lr,
            include_self: !self.no_self,
            objective: match self.objective {
                ObjectiveArg::Fused => FitObjective::Fused,
                ObjectiveArg::FewShotOnly => FitObjective::FewShotOnly,
            },
            seed,
            ..TrainConfig::default()
        };
        cfg.validate().map_err(usage)?;
        Ok(cfg)
    }

    fn method_config(&self, method: Method, seed: u64) -> Result<MethodConfig> {
        if !self.alpha.is_finite() {
            return Err(usage("--alpha must be finite"));
        }
        Ok(MethodConfig {
            method,
            phi: Sharpness::with_sign(self.b, self.sign()).map_err(usage)?,
            tip_beta: Sharpness::with_sign(self.beta, self.sign()).map_err(usage)?,
            fsl: match self.fsl_scores {
                FslArg::Logits => FslScores::Logits,
                FslArg::Probabilities => FslScores::Probabilities,
            },
            alpha: self.alpha,
            train: self.train(seed)?,
            proto_normalize: self.proto_normalize,
        })
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau.is_finite() && tau >= 0.0 {
        Ok(())
    } else {
        Err(usage("--tau must be finite and non-negative"))
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn manifest(
    command: &str,
    seed: u64,
    config: serde_json::Value,
    inputs: &[&Path],
) -> Result<RunManifest> {
    let mut m = RunManifest::new(command, seed, config);
    for p in inputs {
        m.add_input(p)
            .with_context(|| format!("hashing {}", p.display()))?;
    }
    Ok(m)
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    match cli.threads {
        Some(0) => Err(usage("--threads must be positive")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()?
            .install(|| dispatch(cli.command)),
        None => dispatch(cli.command),
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Zeroshot(a) => zeroshot(a),
        Command::Eval(a) => eval(a),
        Command::Curve(a) => curve(a),
        Command::Finetune(a) => finetune(a),
    }
}

fn synth(a: SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        n_classes: a.classes,
        dim: a.dim,
        per_class: a.per_class,
        kappa: a.kappa,
        text_noise: a.text_noise,
        seed: a.seed,
    };
    cfg.validate().map_err(usage)?;
    let data = synthgen::generate(&cfg)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let audio = &data.audio;
    let ids = identity_labels(&data.text);
    write_embeddings(
        a.out.join("audio.treff"),
        audio.embeddings(),
        Some(audio.labels()),
        Some(audio.vocab()),
    )?;
    write_embeddings(
        a.out.join("text.treff"),
        &data.text,
        Some(&ids),
        Some(data.vocab()),
    )?;
    write_embeddings(
        a.out.join("centers.treff"),
        &data.centers,
        Some(&ids),
        Some(data.vocab()),
    )?;
    let m = RunManifest::new("synth", a.seed, serde_json::to_value(&cfg)?);
    write_json(&a.out.join("manifest.json"), &m)
}

#[derive(Serialize)]
struct Prediction {
    predicted: usize,
    predicted_name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<usize>,
}

fn zeroshot(a: ZeroshotArgs) -> Result<()> {
    check_tau(a.tau)?;
    let audio = load_audio(&a.audio)?;
    let head = load_head(&a.text, a.tau, audio.vocab.as_ref())?;
    if let Some(v) = &audio.vocab {
        if v != head.vocab() {
            anyhow::bail!("audio and text files name different classes");
        }
    }
    let pred = zsl_logits(&head, &audio.set)?.argmax_rows();
    let accuracy = audio
        .labels
        .as_ref()
        .map(|l| treff_core::episodes::accuracy(&pred, l));
    let predictions: Vec<Prediction> = pred
        .iter()
        .enumerate()
        .map(|(i, &p)| Prediction {
            predicted: p,
            predicted_name: head.vocab().names()[p].clone(),
            label: audio.labels.as_ref().map(|l| l[i]),
        })
        .collect();
    let m = manifest("zeroshot", 0, json!({ "tau": a.tau }), &[&a.audio, &a.text])?;
    let out = json!({ "manifest": m, "accuracy": accuracy, "predictions": predictions });
    match a.out {
        Some(p) => write_json(&p, &out),
        None => {
            println!("{}", serde_json::to_string_pretty(&out)?);
            Ok(())
        }
    }
}

fn setup(e: &EpisodeArgs, k_shot: usize) -> Result<EvalSetup> {
    if e.n_way == 0 || e.episodes == 0 || e.queries_per_class == 0 {
        return Err(usage(
            "--n-way, --episodes and --queries-per-class must be positive",
        ));
    }
    Ok(EvalSetup {
        queries_per_class: e.queries_per_class,
        ..EvalSetup::new(e.n_way, k_shot, e.episodes, e.seed)
    })
}

fn eval(a: EvalArgs) -> Result<()> {
    check_tau(a.model.tau)?;
    let cfg = a.model.method_config(a.method.into(), a.episode.seed)?;
    let setup = setup(&a.episode, a.k_shot)?;
    let dataset = load_support(&a.episode.audio)?;
    let head = load_head(&a.episode.text, a.model.tau, Some(dataset.vocab()))?;
    let summary = evaluate_parallel(&cfg, &dataset, &head, &setup)?;
    let config = json!({ "method": cfg, "setup": setup, "tau": a.model.tau });
    let m = manifest(
        "eval",
        setup.base_seed,
        config,
        &[&a.episode.audio, &a.episode.text],
    )?;
    if let Some(p) = &a.csv {
        fs::write(p, report::to_csv_string(std::slice::from_ref(&summary)))
            .with_context(|| format!("writing {}", p.display()))?;
    }
    write_json(&a.out, &json!({ "manifest": m, "summary": summary }))
}

fn curve(a: CurveArgs) -> Result<()> {
    check_tau(a.model.tau)?;
    if a.shots.contains(&0) {
        return Err(usage("--shots must be positive"));
    }
    let mut shots = a.shots.clone();
    shots.sort_unstable();
    shots.dedup();
    let configs = a
        .method
        .iter()
        .map(|&m| a.model.method_config(m.into(), a.episode.seed))
        .collect::<Result<Vec<_>>>()?;
    let base = setup(&a.episode, shots[0])?;
    let dataset = load_support(&a.episode.audio)?;
    let head = load_head(&a.episode.text, a.model.tau, Some(dataset.vocab()))?;
    let mut summaries: Vec<EvalSummary> = Vec::new();
    for cfg in &configs {
        summaries.extend(shot_curve_parallel(cfg, &dataset, &head, &base, &shots)?);
    }
    fs::write(&a.out, report::to_csv_string(&summaries))
        .with_context(|| format!("writing {}", a.out.display()))?;
    if let Some(p) = &a.json {
        let config =
            json!({ "methods": configs, "setup": base, "shots": shots, "tau": a.model.tau });
        let m = manifest(
            "curve",
            base.base_seed,
            config,
            &[&a.episode.audio, &a.episode.text],
        )?;
        write_json(p, &json!({ "manifest": m, "summaries": summaries }))?;
    }
    Ok(())
}

fn finetune(a: FinetuneArgs) -> Result<()> {
    check_tau(a.model.tau)?;
    let cfg = a.model.method_config(Method::TreffFt, a.seed)?;
    let support = load_support(&a.support)?;
    let head = load_head(&a.text, a.model.tau, Some(support.vocab()))?;
    let mut init = AdapterParams::identity(support.dim())
        .with_sharpness(cfg.phi)
        .with_fsl_scores(cfg.fsl);
    init.alpha = cfg.alpha;
    let fit = treff::finetune_adapter(init, &head, &support, &cfg.train)?;
    if fit.degenerate_support {
        eprintln!("warning: support covers fewer than two classes");
    }
    save_params(&a.out, &fit.final_params)?;
    let report_path = a.report.unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".report.json");
        PathBuf::from(p)
    });
    let config = json!({ "method": cfg, "tau": a.model.tau });
    let m = manifest("finetune", a.seed, config, &[&a.support, &a.text])?;
    let report = json!({
        "manifest": m,
        "loss_per_epoch": fit.loss_per_epoch,
        "final_loss": fit.final_loss,
        "alpha": fit.final_params.alpha,
        "degenerate_support": fit.degenerate_support,
    });
    write_json(&report_path, &report)
}
