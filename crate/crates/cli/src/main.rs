//! `aspect-select`: simulate data, estimate rewards, select aspects, run the
//! evaluation pipeline and the verification experiments.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use aspect_select::data::{write_dataset, DatasetSchema};
use aspect_select::dgp::{
    oracle_conditional_mean, oracle_optimal_subset, oracle_residual_split, oracle_reward, sample, DgpSpec, Preset,
};
use aspect_select::pipeline::{
    bias_scaling_experiment, coverage_experiment, reward_table, run_pipeline, to_json, DataSource, Perturbation,
    PipelineConfig,
};
use aspect_select::reward_linear::{asymptotic_variance, reward_linear_nonadaptive};
use aspect_select::reward_np::{estimate_reward_np_with_folds, NpConfig, SecondStage};
use aspect_select::regression::make_folds;
use aspect_select::selection::{fit_rule, LearnedRule, RuleConfig, RuleId};
use aspect_select::{ContextMap, Dataset, Subset};

#[derive(Parser)]
#[command(name = "aspect-select", version, about = "Budgeted selection of human aspect evaluations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a dataset from a synthetic design and write it as CSV with a
    /// schema sidecar.
    Simulate(SimulateArgs),
    /// Reward of every subset up to a size.
    Rewards(RewardsArgs),
    /// Subset chosen by a rule on a whole dataset.
    Select(SelectArgs),
    /// Train/test evaluation of a rule against baselines.
    Pipeline(PipelineArgs),
    /// Metric-versus-budget table for several rules.
    Table(TableArgs),
    /// Bias of the pseudo-outcome reward under a perturbed first stage.
    BiasScaling(BiasArgs),
    /// Coverage of the delta-method interval for the linear reward.
    Coverage(CoverageArgs),
    /// Population quantities of a synthetic design.
    Oracle(OracleArgs),
}

#[derive(Args, Clone)]
struct SpecArgs {
    /// Shipped design: symmetric, planted-pair, single-informative,
    /// biased-ai, heteroskedastic.
    #[arg(long, conflicts_with = "dgp")]
    preset: Option<String>,
    /// Design file (TOML).
    #[arg(long)]
    dgp: Option<PathBuf>,
    /// Aspect count for a preset.
    #[arg(long, default_value_t = 10)]
    aspects: usize,
}

impl SpecArgs {
    fn spec(&self) -> Result<DgpSpec> {
        match (&self.preset, &self.dgp) {
            (Some(p), None) => Ok(p.parse::<Preset>()?.build(self.aspects)?),
            (None, Some(path)) => Ok(DgpSpec::load(path)?),
            _ => bail!("give one of --preset or --dgp"),
        }
    }
}

#[derive(Args, Clone)]
struct DataArgs {
    /// CSV dataset with a `.schema.toml` sidecar.
    #[arg(long, conflicts_with_all = ["preset", "dgp"])]
    data: Option<PathBuf>,
    #[command(flatten)]
    spec: SpecArgs,
    /// Rows to simulate for --preset or --dgp.
    #[arg(long)]
    n: Option<usize>,
}

impl DataArgs {
    fn source(&self) -> DataSource {
        DataSource {
            dataset: self.data.clone(),
            dgp: self.spec.dgp.clone(),
            preset: self.spec.preset.clone(),
            aspects: self.spec.preset.as_ref().map(|_| self.spec.aspects),
            n: self.n,
        }
    }

    fn load(&self, seed: u64) -> Result<Dataset> {
        Ok(self.source().load(seed)?)
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    spec: SpecArgs,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: u64,
    /// Output CSV; the schema goes next to it.
    #[arg(long)]
    out: PathBuf,
    /// Also write the design to this TOML file.
    #[arg(long)]
    save_spec: Option<PathBuf>,
}

#[derive(Args)]
struct RewardsArgs {
    #[command(flatten)]
    data: DataArgs,
    /// linear, np or np-adaptive.
    #[arg(long, default_value = "linear")]
    estimator: String,
    /// Largest subset size to evaluate.
    #[arg(long, default_value_t = 1)]
    max_size: usize,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Inner cross-fitting folds.
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Confidence level of delta-method intervals (linear, lambda 0).
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    rule: String,
    #[arg(long)]
    n_sel: usize,
    #[arg(long, default_value_t = 1.0)]
    lambda_reward: f64,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long)]
    agreement_proxy: bool,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    /// Pipeline configuration (TOML). Flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    rule: Option<String>,
    #[arg(long)]
    n_sel: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    lambda_reward: Option<f64>,
    #[arg(long)]
    lambda_imp: Option<f64>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    k_out: Option<usize>,
    #[arg(long)]
    test_fraction: Option<f64>,
    #[arg(long)]
    n_splits: Option<usize>,
    #[arg(long)]
    adaptive: bool,
    #[arg(long)]
    agreement_proxy: bool,
    /// Record wall-clock runtime in the report.
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TableArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Comma-separated rule ids.
    #[arg(long, value_delimiter = ',', default_value = "singleton-linear,greedy-linear,bruteforce-linear")]
    rules: Vec<String>,
    /// Comma-separated budgets; defaults to 0..=J.
    #[arg(long, value_delimiter = ',')]
    budgets: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    n_splits: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BiasArgs {
    #[command(flatten)]
    spec: SpecArgs,
    /// Queried aspects, e.g. `0,3`; empty for none.
    #[arg(long, default_value = "0")]
    subset: String,
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.2,0.4")]
    deltas: Vec<f64>,
    #[arg(long, default_value_t = 200)]
    replications: usize,
    #[arg(long, default_value_t = 2000)]
    n: usize,
    /// Scale of the perturbation direction.
    #[arg(long, default_value_t = Perturbation::default().scale)]
    scale: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CoverageArgs {
    #[command(flatten)]
    spec: SpecArgs,
    #[arg(long, default_value = "0")]
    subset: String,
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 1000)]
    replications: usize,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    spec: SpecArgs,
    /// Report reward, decomposition and conditional mean for this subset.
    #[arg(long)]
    subset: Option<String>,
    /// Report the optimal subset of this size.
    #[arg(long)]
    n_sel: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_subset(text: &str, aspects: usize) -> Result<Subset> {
    let idx = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>().with_context(|| format!("bad aspect index `{s}`")))
        .collect::<Result<Vec<_>>>()?;
    Ok(Subset::new(idx, aspects)?)
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn simulate(args: SimulateArgs) -> Result<ExitCode> {
    let spec = args.spec.spec()?;
    let ds = sample(&spec, args.n, args.seed)?;
    let schema = DatasetSchema::for_dataset(&ds);
    write_dataset(&args.out, &ds, &schema)?;
    schema.save(DatasetSchema::sidecar_path(&args.out))?;
    if let Some(path) = args.save_spec {
        spec.save(path)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn rewards(args: RewardsArgs) -> Result<ExitCode> {
    let ds = args.data.load(args.seed)?;
    let subsets = Subset::all_up_to(ds.aspects(), args.max_size);
    let mut rows = Vec::new();
    match args.estimator.as_str() {
        "linear" => {
            for pi in &subsets {
                let est = reward_linear_nonadaptive(&ds, pi, args.lambda)?;
                let mut row = json!({ "subset": pi, "reward": est.value });
                if args.lambda == 0.0 {
                    let v = asymptotic_variance(&ds, pi, 0.0, args.level)?;
                    row["std_error"] = json!(v.std_error);
                    row["ci_low"] = json!(v.ci_low);
                    row["ci_high"] = json!(v.ci_high);
                }
                rows.push(row);
            }
        }
        "np" | "np-adaptive" => {
            let cfg = NpConfig {
                folds: args.folds,
                lambda: args.lambda,
                second_stage: SecondStage::Ridge { lambda: args.lambda },
                adaptive: args.estimator == "np-adaptive",
                context: ContextMap::Identity,
                seed: args.seed,
            };
            let folds = make_folds(ds.n(), cfg.folds, cfg.seed)?;
            for pi in &subsets {
                rows.push(serde_json::to_value(estimate_reward_np_with_folds(&ds, pi, &folds, &cfg)?)?);
            }
        }
        other => bail!("unknown estimator `{other}` (expected linear, np or np-adaptive)"),
    }
    let report = json!({ "estimator": args.estimator, "lambda": args.lambda, "seed": args.seed, "rewards": rows });
    emit(&to_json(&report)?, args.out.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

fn select(args: SelectArgs) -> Result<ExitCode> {
    let ds = args.data.load(args.seed)?;
    let rule: RuleId = args.rule.parse()?;
    let cfg = RuleConfig {
        lambda_reward: args.lambda_reward,
        np: NpConfig {
            folds: args.folds,
            seed: args.seed,
            ..NpConfig::default()
        },
        agreement_proxy: args.agreement_proxy,
    };
    let learned = fit_rule(rule, &ds, args.n_sel, &cfg)?;
    let value = match &learned {
        LearnedRule::Fixed { result } => serde_json::to_value(result)?,
        _ => {
            let mut counts = std::collections::BTreeMap::<String, usize>::new();
            for s in learned.select_rows(&ds)? {
                *counts.entry(s.to_string()).or_default() += 1;
            }
            json!({ "rule": rule, "adaptive": true, "row_selections": counts })
        }
    };
    emit(&to_json(&value)?, args.out.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

fn pipeline_config(args: &PipelineArgs) -> Result<PipelineConfig> {
    let has_flag_source = args.data.data.is_some() || args.data.spec.preset.is_some() || args.data.spec.dgp.is_some();
    let mut cfg = match &args.config {
        Some(path) => PipelineConfig::load(path)?,
        None => {
            let (Some(rule), Some(n_sel), Some(seed)) = (&args.rule, args.n_sel, args.seed) else {
                bail!("without --config, --rule, --n-sel and --seed are required");
            };
            PipelineConfig::new(rule.parse()?, n_sel, seed, args.data.source())
        }
    };
    if args.config.is_some() && has_flag_source {
        cfg.data = args.data.source();
    } else if let Some(n) = args.data.n {
        cfg.data.n = Some(n);
    }
    if let Some(r) = &args.rule {
        cfg.rule = r.parse()?;
    }
    macro_rules! set {
        ($($field:ident),*) => {$(if let Some(v) = args.$field { cfg.$field = v; })*};
    }
    set!(n_sel, seed, lambda, lambda_reward, lambda_imp, folds, k_out, test_fraction, n_splits);
    cfg.adaptive |= args.adaptive;
    cfg.agreement_proxy |= args.agreement_proxy;
    cfg.validate()?;
    Ok(cfg)
}

fn pipeline(args: PipelineArgs) -> Result<ExitCode> {
    let cfg = pipeline_config(&args)?;
    let report = run_pipeline(&cfg, args.timing)?;
    emit(&report.to_json()?, args.out.as_deref())?;
    if report.complete {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("incomplete splits: {:?}", report.incomplete_splits);
        Ok(ExitCode::FAILURE)
    }
}

fn table(args: TableArgs) -> Result<ExitCode> {
    let ds = args.data.load(args.seed)?;
    let rules = args.rules.iter().map(|r| r.parse()).collect::<Result<Vec<RuleId>, _>>()?;
    let budgets = if args.budgets.is_empty() {
        (0..=ds.aspects()).collect()
    } else {
        args.budgets.clone()
    };
    let base = PipelineConfig {
        n_splits: args.n_splits,
        ..PipelineConfig::new(rules[0], 0, args.seed, args.data.source())
    };
    let t = reward_table(&ds, &rules, &budgets, &base)?;
    emit(&to_json(&t)?, args.out.as_deref())?;
    Ok(if t.rows.iter().all(|r| r.completed_splits == args.n_splits) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn bias(args: BiasArgs) -> Result<ExitCode> {
    let spec = args.spec.spec()?;
    let pi = parse_subset(&args.subset, spec.aspects())?;
    let r = bias_scaling_experiment(
        &spec,
        &pi,
        &args.deltas,
        args.replications,
        args.n,
        args.seed,
        Perturbation { scale: args.scale },
    )?;
    emit(&to_json(&r)?, args.out.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

fn coverage(args: CoverageArgs) -> Result<ExitCode> {
    let spec = args.spec.spec()?;
    let pi = parse_subset(&args.subset, spec.aspects())?;
    let r = coverage_experiment(&spec, &pi, args.n, args.replications, args.level, args.seed)?;
    emit(&to_json(&r)?, args.out.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

fn oracle(args: OracleArgs) -> Result<ExitCode> {
    let spec = args.spec.spec()?;
    let mut out = json!({ "aspects": spec.aspects(), "mean_y": spec.mean_y(), "second_moment_y": spec.second_moment_y() });
    if let Some(text) = &args.subset {
        let pi = parse_subset(text, spec.aspects())?;
        let (a_term, h_term) = oracle_residual_split(&spec, &pi)?;
        out["subset"] = json!(pi);
        out["reward"] = json!(oracle_reward(&spec, &pi)?);
        out["explained_by_ai"] = json!(a_term);
        out["explained_by_human_residual"] = json!(h_term);
        out["conditional_mean"] = serde_json::to_value(oracle_conditional_mean(&spec, &pi)?)?;
    }
    if let Some(k) = args.n_sel {
        let best = oracle_optimal_subset(&spec, k)?;
        out["optimal_subset"] = json!(best);
        out["optimal_reward"] = json!(oracle_reward(&spec, &best)?);
    }
    emit(&to_json(&out)?, args.out.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Rewards(a) => rewards(a),
        Command::Select(a) => select(a),
        Command::Pipeline(a) => pipeline(a),
        Command::Table(a) => table(a),
        Command::BiasScaling(a) => bias(a),
        Command::Coverage(a) => coverage(a),
        Command::Oracle(a) => oracle(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
