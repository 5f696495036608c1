use std::path::PathBuf;

use anyhow::{bail, Context};
use cce_core::harness::Method;
use cce_core::scenarios::{Companion, ScenarioSpec};
use cce_core::{OptimConfig, SvmConfig};
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "cce", version, about = "Explain classifier mistakes with conceptual counterfactuals")]
pub struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads for scenario-level parallelism (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn concept vectors from positive/negative embedding files.
    LearnBank(LearnBankArgs),
    /// Explain each sample of an embedding file.
    Explain(ExplainArgs),
    /// One shared explanation for all samples of an embedding file.
    ExplainBatch(ExplainArgs),
    /// Rank concepts by the label logit's directional derivative.
    BaselineCss(BaselineArgs),
    /// Rank concepts by the probability gain of adding each one alone.
    BaselineUnivariate(BaselineArgs),
    /// Generate a synthetic confounded world and write its files.
    GenScenario(GenScenarioArgs),
    /// Score explanation methods over a suite of synthetic worlds.
    RunSuite(RunSuiteArgs),
    /// Rebuild a suite summary from recorded rankings.
    ExportReport(ExportReportArgs),
}

#[derive(Debug, Args)]
pub struct LearnBankArgs {
    /// JSON list of {name, positives, negatives}; paths are relative to it.
    #[arg(long)]
    pub concepts: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Minimum held-out accuracy for a concept to be kept.
    #[arg(long, default_value_t = cce_core::concept_bank::DEFAULT_ACCURACY_THRESHOLD)]
    pub threshold: f64,
    /// Held-out fraction per class.
    #[arg(long, default_value_t = cce_core::concept_bank::DEFAULT_SPLIT_FRACTION)]
    pub split: f64,
    #[arg(long, default_value_t = SvmConfig::default().lambda)]
    pub lambda: f64,
    #[arg(long, default_value_t = SvmConfig::default().epochs)]
    pub epochs: usize,
}

#[derive(Debug, Args)]
pub struct ModelInputs {
    /// Head JSON.
    #[arg(long)]
    pub head: PathBuf,
    /// Bank JSON.
    #[arg(long)]
    pub bank: PathBuf,
    /// Embedding file with a label sidecar.
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Only this row of the embedding file.
    #[arg(long)]
    pub index: Option<usize>,
    /// Concepts listed per sample.
    #[arg(long, default_value_t = 10)]
    pub top_k: usize,
    /// Output file (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub inputs: ModelInputs,
    #[command(flatten)]
    pub optim: OptimArgs,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub inputs: ModelInputs,
}

#[derive(Debug, Args)]
pub struct OptimArgs {
    /// L1 weight.
    #[arg(long, default_value_t = OptimConfig::default().alpha)]
    pub alpha: f64,
    /// L2 weight.
    #[arg(long, default_value_t = OptimConfig::default().beta)]
    pub beta: f64,
    #[arg(long, default_value_t = OptimConfig::default().step_size)]
    pub step_size: f64,
    #[arg(long, default_value_t = OptimConfig::default().max_steps)]
    pub max_steps: usize,
    #[arg(long, default_value_t = OptimConfig::default().momentum)]
    pub momentum: f64,
    #[arg(long, default_value_t = OptimConfig::default().momentum2)]
    pub momentum2: f64,
    #[arg(long, default_value_t = OptimConfig::default().epsilon)]
    pub epsilon: f64,
}

impl OptimArgs {
    pub fn config(&self) -> cce_core::Result<OptimConfig> {
        let cfg = OptimConfig {
            alpha: self.alpha,
            beta: self.beta,
            step_size: self.step_size,
            max_steps: self.max_steps,
            momentum: self.momentum,
            momentum2: self.momentum2,
            epsilon: self.epsilon,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Scenario settings: an optional JSON spec, then per-field overrides.
#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// ScenarioSpec JSON; missing fields take defaults.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub num_classes: Option<usize>,
    #[arg(long)]
    pub num_concepts: Option<usize>,
    #[arg(long)]
    pub confounded_class: Option<usize>,
    #[arg(long)]
    pub confounded_concept: Option<usize>,
    #[arg(long)]
    pub severity: Option<f64>,
    #[arg(long)]
    pub train_per_class: Option<usize>,
    #[arg(long)]
    pub ood_test_count: Option<usize>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    #[arg(long)]
    pub background_rate: Option<f64>,
    #[arg(long)]
    pub concept_strength: Option<f64>,
    #[arg(long)]
    pub attribute_strength: Option<f64>,
    #[arg(long)]
    pub prototype_scale: Option<f64>,
    #[arg(long)]
    pub attributes_per_class: Option<usize>,
    #[arg(long)]
    pub examples_per_concept: Option<usize>,
    #[arg(long)]
    pub head_epochs: Option<usize>,
    #[arg(long)]
    pub head_learning_rate: Option<f64>,
    /// Give the look-alike class its own attributes.
    #[arg(long)]
    pub no_lookalike: bool,
    /// Concept built at a cosine from the confounder, as INDEX:COSINE.
    #[arg(long, value_parser = parse_companion)]
    pub companion: Option<Companion>,
}

fn parse_companion(s: &str) -> Result<Companion, String> {
    let (i, c) = s.split_once(':').ok_or("expected INDEX:COSINE")?;
    Ok(Companion {
        concept: i.parse().map_err(|e| format!("bad index: {e}"))?,
        cosine: c.parse().map_err(|e| format!("bad cosine: {e}"))?,
    })
}

impl ScenarioArgs {
    pub fn spec(&self, seed: u64) -> anyhow::Result<ScenarioSpec> {
        let mut s = match &self.spec {
            Some(p) => {
                let text = std::fs::read(p).with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_slice(&text).map_err(cce_core::CceError::from)?
            }
            None => ScenarioSpec::default(),
        };
        s.seed = seed;
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { s.$f = v; } )* };
        }
        set!(
            dim,
            num_classes,
            num_concepts,
            confounded_class,
            confounded_concept,
            severity,
            train_per_class,
            ood_test_count,
            noise_sigma,
            background_rate,
            concept_strength,
            attribute_strength,
            prototype_scale,
            attributes_per_class,
            examples_per_concept,
            head_epochs,
            head_learning_rate
        );
        if self.no_lookalike {
            s.lookalike = false;
        }
        if self.companion.is_some() {
            s.companion = self.companion;
        }
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Args)]
pub struct GenScenarioArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Directory for the world's files.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunSuiteArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    /// Number of scenarios; seeds run from --seed upward.
    #[arg(long, default_value_t = 20)]
    pub scenarios: usize,
    /// Comma-separated subset of cce, cce_univariate, css, random, control.
    #[arg(long, value_delimiter = ',', default_value = "cce,cce_univariate,css,random,control")]
    pub methods: Vec<String>,
    /// Summary JSON (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Recorded rankings for later replay.
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// Tab-separated summary table.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Also run a CCE severity sweep over these severities.
    #[arg(long, value_delimiter = ',')]
    pub sweep: Vec<f64>,
}

impl RunSuiteArgs {
    pub fn methods(&self) -> cce_core::Result<Vec<Method>> {
        self.methods.iter().map(|m| m.trim().parse()).collect()
    }
}

#[derive(Debug, Args)]
pub struct ExportReportArgs {
    /// Records written by run-suite --records.
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub table: Option<PathBuf>,
}

pub fn check_top_k(k: usize) -> anyhow::Result<()> {
    if k == 0 {
        bail!(cce_core::CceError::InvalidInput("--top-k must be at least 1".into()));
    }
    Ok(())
}
