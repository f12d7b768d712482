use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Args;
use corpusmix_core::mixture::{
    fit_regression, optimize_mixture, plan_stage2, sample_mixtures, validate_plan, Objective,
    OptimizeConfig, PlanValidation, RidgeModel, DEFAULT_PLAN_TOLERANCE,
};
use corpusmix_core::report::{fmt_billions, plan_csv, plan_table, plan_table_with_tolerance};
use corpusmix_core::{BudgetPlan, MixtureRegressor, MixtureWeights, ProxyObservation};

use crate::commands::exit_for;
use crate::jsonl;

/// Prior files hold non-negative masses per key (raw token counts work);
/// they are normalized onto the simplex on read.
fn read_prior(path: &Path) -> Result<MixtureWeights> {
    let text = fs::read_to_string(path).with_context(|| format!("read {}", path.display()))?;
    let masses: BTreeMap<String, f64> =
        serde_json::from_str(&text).with_context(|| format!("parse prior {}", path.display()))?;
    Ok(MixtureWeights::normalized(masses)?)
}

fn read_plan(path: &Path) -> Result<BudgetPlan> {
    let text = fs::read_to_string(path).with_context(|| format!("read {}", path.display()))?;
    Ok(toml::from_str(&text).with_context(|| format!("parse plan {}", path.display()))?)
}

#[derive(Args)]
pub struct MixtureSampleArgs {
    /// Prior masses per key (JSON object); normalized before sampling.
    #[arg(long)]
    prior: PathBuf,

    /// Number of mixtures to draw.
    #[arg(short = 'n', long, default_value_t = 1000)]
    count: usize,

    /// Dirichlet concentration multiplying the prior.
    #[arg(long, default_value_t = 1.0)]
    concentration: f64,

    #[arg(long, default_value_t = 42)]
    seed: u64,

    /// Sampled mixtures, one JSON object per line.
    #[arg(long)]
    out: PathBuf,
}

pub fn run_sample(args: MixtureSampleArgs) -> Result<ExitCode> {
    let prior = read_prior(&args.prior)?;
    let samples = sample_mixtures(args.count, &prior, args.concentration, args.seed)?;
    jsonl::write_records(&args.out, &samples)?;
    println!(
        "sampled {} mixtures over {} keys to {}",
        samples.len(),
        prior.len(),
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

#[derive(Args)]
pub struct MixtureFitArgs {
    /// Proxy observations: one JSON record per run with weights + losses maps.
    #[arg(long)]
    observations: PathBuf,

    /// Ridge penalty on the log-loss regression.
    #[arg(long, default_value_t = 1e-4)]
    lambda: f64,

    /// Fitted per-language model (JSON).
    #[arg(long)]
    out: PathBuf,
}

pub fn run_fit(args: MixtureFitArgs, fail_fast: bool) -> Result<ExitCode> {
    let (observations, bad_lines): (Vec<ProxyObservation>, usize) =
        jsonl::read_records(&args.observations, fail_fast)?;
    let fit = fit_regression(&observations, args.lambda)?;
    fs::write(&args.out, serde_json::to_string_pretty(&fit.model)?)
        .with_context(|| format!("write {}", args.out.display()))?;
    println!("fit {} languages from {} observations", fit.residuals.len(), observations.len());
    for (language, rms) in &fit.residuals {
        println!("  {language}: rms log-loss residual {rms:.6}");
    }
    Ok(exit_for(bad_lines))
}

#[derive(Args)]
pub struct MixtureOptimizeArgs {
    /// Fitted regression model (JSON from mixture-fit).
    #[arg(long)]
    model: PathBuf,

    /// Prior masses for the candidate sampler (JSON object).
    #[arg(long)]
    prior: PathBuf,

    /// log-sum, log-of-sum, or neg-sum-loss.
    #[arg(long, default_value = "log-sum")]
    objective: String,

    /// Dirichlet candidates to evaluate (prior and uniform are always added).
    #[arg(long, default_value_t = 100_000)]
    candidates: usize,

    /// Dirichlet concentration multiplying the prior.
    #[arg(long, default_value_t = 1.0)]
    concentration: f64,

    #[arg(long, default_value_t = 42)]
    seed: u64,

    /// Best mixture found (JSON object).
    #[arg(long)]
    out: PathBuf,
}

pub fn run_optimize(args: MixtureOptimizeArgs) -> Result<ExitCode> {
    let objective = match Objective::parse(&args.objective) {
        Some(o) => o,
        None => bail!(
            "unknown objective `{}`; expected log-sum, log-of-sum, or neg-sum-loss",
            args.objective
        ),
    };
    let text = fs::read_to_string(&args.model).with_context(|| format!("read {}", args.model.display()))?;
    let model: RidgeModel =
        serde_json::from_str(&text).with_context(|| format!("parse model {}", args.model.display()))?;
    let prior = read_prior(&args.prior)?;

    let config = OptimizeConfig {
        m_candidates: args.candidates,
        concentration: args.concentration,
        objective,
        seed: args.seed,
    };
    let outcome = optimize_mixture(&MixtureRegressor::Ridge(model), &prior, &config)?;
    fs::write(&args.out, serde_json::to_string_pretty(&outcome.best)?)
        .with_context(|| format!("write {}", args.out.display()))?;
    println!(
        "best of {} candidates: objective {:.6}, written to {}",
        outcome.candidates_evaluated,
        outcome.objective_value,
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn parse_row(raw: &str) -> Result<(String, f64)> {
    let Some((label, value)) = raw.rsplit_once('=') else {
        bail!("row `{raw}` is not label=billions");
    };
    let billions: f64 = value.parse().with_context(|| format!("row `{raw}`: bad number"))?;
    Ok((label.to_string(), billions))
}

#[derive(Args)]
pub struct BudgetPlanArgs {
    #[arg(long, default_value_t = 1)]
    stage: u8,

    /// The total the plan claims, in billions of tokens.
    #[arg(long)]
    declared_total: f64,

    /// Plan row as label=billions; repeatable, order preserved.
    #[arg(long = "row")]
    rows: Vec<String>,

    /// Replay row placed ahead of the language rows (stage 2 only).
    #[arg(long = "replay")]
    replay: Vec<String>,

    /// Build rows from a mixture file (JSON object) instead of --row,
    /// scaling each weight by the declared total.
    #[arg(long)]
    weights: Option<PathBuf>,

    /// Plan file (TOML).
    #[arg(long)]
    out: PathBuf,
}

pub fn run_budget_plan(args: BudgetPlanArgs) -> Result<ExitCode> {
    let rows: Vec<(String, f64)> = match &args.weights {
        Some(path) => {
            if !args.rows.is_empty() {
                bail!("--weights and --row are mutually exclusive");
            }
            let mixture = read_prior(path)?;
            mixture
                .weights
                .iter()
                .map(|(k, &w)| (k.clone(), w * args.declared_total))
                .collect()
        }
        None => args.rows.iter().map(|r| parse_row(r)).collect::<Result<_>>()?,
    };
    if rows.is_empty() {
        bail!("no rows: pass --row label=billions or --weights <file>");
    }

    let plan = if args.replay.is_empty() {
        BudgetPlan::new(args.stage, rows, args.declared_total)?
    } else {
        if args.stage != 2 {
            bail!("--replay rows describe a stage-2 plan; pass --stage 2");
        }
        let replay: Vec<(String, f64)> =
            args.replay.iter().map(|r| parse_row(r)).collect::<Result<_>>()?;
        plan_stage2(args.declared_total, replay, rows)?
    };

    fs::write(&args.out, toml::to_string_pretty(&plan)?)
        .with_context(|| format!("write {}", args.out.display()))?;
    print!("{}", plan_table(&plan));
    Ok(ExitCode::SUCCESS)
}

#[derive(Args)]
pub struct BudgetValidateArgs {
    /// Plan file (TOML from budget-plan).
    #[arg(long)]
    plan: PathBuf,

    /// Allowed |declared - computed| gap in billions.
    #[arg(long, default_value_t = DEFAULT_PLAN_TOLERANCE)]
    tolerance: f64,

    /// Exit nonzero when the declared total mismatches the row sum.
    #[arg(long)]
    strict: bool,

    /// Emit lossless CSV instead of the aligned table.
    #[arg(long)]
    csv: bool,
}

fn validation_line(v: &PlanValidation) -> String {
    if v.ok {
        format!(
            "validation: ok (rows sum to {}B, declared {}B)",
            fmt_billions(v.computed_total),
            fmt_billions(v.declared_total)
        )
    } else {
        format!(
            "validation: MISMATCH (rows sum to {}B, declared {}B, delta {}B)",
            fmt_billions(v.computed_total),
            fmt_billions(v.declared_total),
            fmt_billions(v.delta)
        )
    }
}

pub fn run_budget_validate(args: BudgetValidateArgs) -> Result<ExitCode> {
    let plan = read_plan(&args.plan)?;
    let validation = validate_plan(&plan, args.tolerance);
    if args.csv {
        print!("{}", plan_csv(&plan));
    } else {
        print!("{}", plan_table_with_tolerance(&plan, args.tolerance));
    }
    println!("{}", validation_line(&validation));
    if args.strict && !validation.ok {
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}
