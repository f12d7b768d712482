//! corpusmix: corpus curation and data-mixture planning from the command line.

use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

mod commands;
mod jsonl;

use commands::{classify, clean, dedup, mixture, pipeline, posttrain, report};

#[derive(Parser)]
#[command(
    name = "corpusmix",
    version,
    about = "Corpus curation and data-mixture planning for multilingual LLM training"
)]
struct Cli {
    /// Cap the number of worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    /// Abort on the first malformed input line instead of collecting errors.
    #[arg(long, global = true)]
    fail_fast: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rule-based cleaning, URL dedup, and frequent-line removal
    Clean(clean::CleanArgs),
    /// MinHash/LSH near-duplicate (or hash-exact) removal
    Dedup(dedup::DedupArgs),
    /// Train the binary quality classifier
    QualityTrain(classify::QualityTrainArgs),
    /// Keep the top fraction of documents by quality score
    QualityFilter(classify::QualityFilterArgs),
    /// Train the language-identification classifier
    LangidTrain(classify::LangidTrainArgs),
    /// Predict a language per document
    LangidPredict(classify::LangidPredictArgs),
    /// Draw candidate mixtures from a Dirichlet around a prior
    MixtureSample(mixture::MixtureSampleArgs),
    /// Fit the per-language loss regression from proxy observations
    MixtureFit(mixture::MixtureFitArgs),
    /// Search the simplex for the best predicted mixture
    MixtureOptimize(mixture::MixtureOptimizeArgs),
    /// Assemble a staged token-budget plan file
    BudgetPlan(mixture::BudgetPlanArgs),
    /// Check a plan's row sum against its declared total
    BudgetValidate(mixture::BudgetValidateArgs),
    /// Check conversation transcripts against the chat format rules
    SftVerify(posttrain::SftVerifyArgs),
    /// Near-dedup conversations within each language
    SftDedup(posttrain::SftDedupArgs),
    /// Percentile-score and greedily select instructions under quotas
    SftSelect(posttrain::SftSelectArgs),
    /// Build chosen/rejected preference pairs from sampled responses
    PrefBuild(posttrain::PrefBuildArgs),
    /// Render stats, plans, distributions, or manifests as table/CSV
    Report(report::ReportArgs),
    /// Run the layered cleaning pipeline from a config file
    Pipeline(pipeline::PipelineArgs),
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    let fail_fast = cli.fail_fast;
    match cli.command {
        Command::Clean(args) => clean::run(args, fail_fast),
        Command::Dedup(args) => dedup::run(args, fail_fast),
        Command::QualityTrain(args) => classify::run_quality_train(args, fail_fast),
        Command::QualityFilter(args) => classify::run_quality_filter(args, fail_fast),
        Command::LangidTrain(args) => classify::run_langid_train(args, fail_fast),
        Command::LangidPredict(args) => classify::run_langid_predict(args, fail_fast),
        Command::MixtureSample(args) => mixture::run_sample(args),
        Command::MixtureFit(args) => mixture::run_fit(args, fail_fast),
        Command::MixtureOptimize(args) => mixture::run_optimize(args),
        Command::BudgetPlan(args) => mixture::run_budget_plan(args),
        Command::BudgetValidate(args) => mixture::run_budget_validate(args),
        Command::SftVerify(args) => posttrain::run_verify(args, fail_fast),
        Command::SftDedup(args) => posttrain::run_dedup(args, fail_fast),
        Command::SftSelect(args) => posttrain::run_select(args, fail_fast),
        Command::PrefBuild(args) => posttrain::run_pref_build(args, fail_fast),
        Command::Report(args) => report::run(args, fail_fast),
        Command::Pipeline(args) => pipeline::run(args, fail_fast),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.jobs > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
