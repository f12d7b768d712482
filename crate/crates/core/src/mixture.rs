//! Data-mixture optimization and token-budget planning.
//!
//! The optimization loop mirrors the regression-over-proxy-runs recipe:
//! sample many mixtures from a Dirichlet around a prior, observe (or predict)
//! per-language losses, fit a per-language ridge regressor of log-loss on the
//! mixture weights, then pick the best of a large candidate pool under the
//! chosen objective. Budget plans account staged token allocations and are
//! validated against their declared totals.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_distr::{Distribution, Gamma};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::derive_subseed;

#[derive(Debug, Error)]
pub enum MixtureError {
    #[error("weights are not a simplex: {0}")]
    NotASimplex(String),
    #[error("mixture key sets disagree: {0}")]
    KeyMismatch(String),
    #[error("need at least {need} observations, have {have}")]
    InsufficientObservations { have: usize, need: usize },
    #[error("loss for `{language}` is {value}; losses must be positive and finite")]
    BadLoss { language: String, value: f64 },
    #[error("ridge system is singular; use a positive regularization strength")]
    SingularSystem,
    #[error("objective is non-finite at every candidate")]
    NoFiniteCandidate,
    #[error("duplicate plan row label `{0}`")]
    DuplicateLabel(String),
    #[error("plan row `{label}` has negative tokens {billions}")]
    NegativeTokens { label: String, billions: f64 },
}

const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// A point on the mixture simplex: non-negative weights per language or
/// domain key, summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MixtureWeights {
    pub weights: BTreeMap<String, f64>,
}

impl MixtureWeights {
    pub fn new(weights: BTreeMap<String, f64>) -> Result<Self, MixtureError> {
        let w = MixtureWeights { weights };
        w.validate()?;
        Ok(w)
    }

    /// Normalize arbitrary non-negative masses (e.g. token counts) into
    /// simplex weights.
    pub fn normalized<K: Into<String>, I: IntoIterator<Item = (K, f64)>>(
        masses: I,
    ) -> Result<Self, MixtureError> {
        let weights: BTreeMap<String, f64> = masses.into_iter().map(|(k, v)| (k.into(), v)).collect();
        let sum: f64 = weights.values().sum();
        if !(sum > 0.0) || !sum.is_finite() {
            return Err(MixtureError::NotASimplex(format!("mass sum {sum}")));
        }
        MixtureWeights::new(weights.into_iter().map(|(k, v)| (k, v / sum)).collect())
    }

    pub fn uniform<'a, I: IntoIterator<Item = &'a str>>(keys: I) -> Self {
        let keys: Vec<&str> = keys.into_iter().collect();
        let w = 1.0 / keys.len() as f64;
        MixtureWeights {
            weights: keys.into_iter().map(|k| (k.to_string(), w)).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), MixtureError> {
        if self.weights.is_empty() {
            return Err(MixtureError::NotASimplex("no keys".to_string()));
        }
        for (k, &v) in &self.weights {
            if !v.is_finite() || v < 0.0 {
                return Err(MixtureError::NotASimplex(format!("weight {k} = {v}")));
            }
        }
        let sum: f64 = self.weights.values().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(MixtureError::NotASimplex(format!("sum {sum}")));
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> f64 {
        self.weights.get(key).copied().unwrap_or(0.0)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.weights.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Largest absolute per-key difference. Keys absent on one side count as
    /// weight zero there.
    pub fn linf_distance(&self, other: &MixtureWeights) -> f64 {
        let keys: BTreeSet<&str> = self.keys().chain(other.keys()).collect();
        keys.into_iter()
            .map(|k| (self.get(k) - other.get(k)).abs())
            .fold(0.0, f64::max)
    }

    pub fn l1_distance(&self, other: &MixtureWeights) -> f64 {
        let keys: BTreeSet<&str> = self.keys().chain(other.keys()).collect();
        keys.into_iter().map(|k| (self.get(k) - other.get(k)).abs()).sum()
    }
}

/// One proxy run: the mixture it trained on, and the per-language losses it
/// reached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyObservation {
    pub weights: MixtureWeights,
    pub losses: BTreeMap<String, f64>,
}

/// Deterministic Dirichlet(concentration x prior) draws. Keys with zero prior
/// mass stay exactly zero in every sample.
pub fn sample_mixtures(
    n: usize,
    prior: &MixtureWeights,
    concentration: f64,
    seed: u64,
) -> Result<Vec<MixtureWeights>, MixtureError> {
    assert!(n >= 1, "need at least one sample");
    assert!(concentration > 0.0, "concentration must be positive");
    prior.validate()?;

    let mut rng = ChaCha20Rng::seed_from_u64(derive_subseed(seed, "dirichlet-mixtures"));
    let gammas: BTreeMap<&str, Option<Gamma<f64>>> = prior
        .weights
        .iter()
        .map(|(k, &p)| {
            let alpha = concentration * p;
            let g = (alpha > 0.0).then(|| Gamma::new(alpha, 1.0).expect("positive shape"));
            (k.as_str(), g)
        })
        .collect();

    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let mut draw: BTreeMap<String, f64> = BTreeMap::new();
        let mut sum = 0.0;
        for (k, g) in &gammas {
            let v = match g {
                Some(g) => g.sample(&mut rng),
                None => 0.0,
            };
            sum += v;
            draw.insert(k.to_string(), v);
        }
        if sum > 0.0 {
            for v in draw.values_mut() {
                *v /= sum;
            }
            samples.push(MixtureWeights { weights: draw });
        } else {
            // Every gamma underflowed (possible at extremely small shapes).
            samples.push(prior.clone());
        }
    }
    Ok(samples)
}

/// Per-language linear model of log-loss on the weight vector. No intercept:
/// weights sum to one, so a constant column would be collinear with the
/// design and the system rank-deficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub keys: Vec<String>,
    /// language -> coefficient per key, in `keys` order.
    pub coefficients: BTreeMap<String, Vec<f64>>,
    pub lambda: f64,
}

impl RidgeModel {
    pub fn predict_losses(&self, w: &MixtureWeights) -> BTreeMap<String, f64> {
        self.coefficients
            .iter()
            .map(|(lang, beta)| {
                let log_loss: f64 = self
                    .keys
                    .iter()
                    .zip(beta)
                    .map(|(k, b)| b * w.get(k))
                    .sum();
                (lang.clone(), log_loss.exp())
            })
            .collect()
    }
}

/// Predicts per-language losses for a mixture: either a fitted ridge model or
/// a caller-supplied synthetic oracle used for testing the optimizer.
#[derive(Clone)]
pub enum MixtureRegressor {
    Ridge(RidgeModel),
    Synthetic(Arc<dyn Fn(&MixtureWeights) -> BTreeMap<String, f64> + Send + Sync>),
}

impl fmt::Debug for MixtureRegressor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MixtureRegressor::Ridge(m) => f.debug_tuple("Ridge").field(m).finish(),
            MixtureRegressor::Synthetic(_) => f.write_str("Synthetic(..)"),
        }
    }
}

impl MixtureRegressor {
    pub fn synthetic<F>(f: F) -> Self
    where
        F: Fn(&MixtureWeights) -> BTreeMap<String, f64> + Send + Sync + 'static,
    {
        MixtureRegressor::Synthetic(Arc::new(f))
    }

    pub fn predict_losses(&self, w: &MixtureWeights) -> BTreeMap<String, f64> {
        match self {
            MixtureRegressor::Ridge(m) => m.predict_losses(w),
            MixtureRegressor::Synthetic(f) => f(w),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RidgeFit {
    pub model: RidgeModel,
    /// Root-mean-square residual of log-loss per language.
    pub residuals: BTreeMap<String, f64>,
}

/// Fit one ridge regression of ln(loss) per language. `lambda` of zero is
/// permitted but fails on rank-deficient designs.
pub fn fit_regression(observations: &[ProxyObservation], lambda: f64) -> Result<RidgeFit, MixtureError> {
    let first = observations
        .first()
        .ok_or(MixtureError::InsufficientObservations { have: 0, need: 1 })?;
    let keys: Vec<String> = first.weights.keys().map(str::to_string).collect();
    let languages: Vec<String> = first.losses.keys().cloned().collect();
    let need = keys.len() + 1;
    if observations.len() < need {
        return Err(MixtureError::InsufficientObservations {
            have: observations.len(),
            need,
        });
    }
    for obs in observations {
        obs.weights.validate()?;
        let obs_keys: Vec<&str> = obs.weights.keys().collect();
        if obs_keys != keys.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(MixtureError::KeyMismatch(format!(
                "expected {:?}, found {:?}",
                keys, obs_keys
            )));
        }
        for (lang, &loss) in &obs.losses {
            if !loss.is_finite() || loss <= 0.0 {
                return Err(MixtureError::BadLoss {
                    language: lang.clone(),
                    value: loss,
                });
            }
        }
        let obs_langs: Vec<&String> = obs.losses.keys().collect();
        if obs_langs.len() != languages.len() || obs_langs.iter().zip(&languages).any(|(a, b)| *a != b) {
            return Err(MixtureError::KeyMismatch("loss language sets differ".to_string()));
        }
    }

    let n = observations.len();
    let k = keys.len();
    let x = DMatrix::from_fn(n, k, |i, j| observations[i].weights.get(&keys[j]));
    let xtx = x.transpose() * &x;
    let system = &xtx + DMatrix::identity(k, k) * lambda;
    let lu = system.lu();

    let mut coefficients = BTreeMap::new();
    let mut residuals = BTreeMap::new();
    for lang in &languages {
        let y = DVector::from_fn(n, |i, _| observations[i].losses[lang].ln());
        let xty = x.transpose() * &y;
        let beta = lu.solve(&xty).ok_or(MixtureError::SingularSystem)?;
        let resid = &x * &beta - &y;
        let rms = (resid.norm_squared() / n as f64).sqrt();
        coefficients.insert(lang.clone(), beta.iter().copied().collect());
        residuals.insert(lang.clone(), rms);
    }
    Ok(RidgeFit {
        model: RidgeModel {
            keys,
            coefficients,
            lambda,
        },
        residuals,
    })
}

/// How predicted per-language losses are folded into one scalar to maximize.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    /// Sum over languages of log(1 / loss). The default reading of
    /// "maximizing the log sum".
    #[default]
    LogSum,
    /// log of the sum over languages of 1 / loss. The alternative reading.
    LogOfSum,
    /// Negative total loss.
    NegSumLoss,
}

impl Objective {
    pub fn evaluate(&self, losses: &BTreeMap<String, f64>) -> f64 {
        match self {
            Objective::LogSum => losses.values().map(|&l| (1.0 / l).ln()).sum(),
            Objective::LogOfSum => losses.values().map(|&l| 1.0 / l).sum::<f64>().ln(),
            Objective::NegSumLoss => -losses.values().sum::<f64>(),
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "log-sum" => Some(Objective::LogSum),
            "log-of-sum" => Some(Objective::LogOfSum),
            "neg-sum-loss" => Some(Objective::NegSumLoss),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizeConfig {
    pub m_candidates: usize,
    pub concentration: f64,
    pub objective: Objective,
    pub seed: u64,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        OptimizeConfig {
            m_candidates: 100_000,
            concentration: 1.0,
            objective: Objective::LogSum,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizeOutcome {
    pub best: MixtureWeights,
    pub objective_value: f64,
    pub candidates_evaluated: usize,
}

/// Best of `m_candidates` Dirichlet draws plus the prior and the uniform
/// mixture, which are always in the pool. Ties break to the earliest
/// candidate.
pub fn optimize_mixture(
    regressor: &MixtureRegressor,
    prior: &MixtureWeights,
    config: &OptimizeConfig,
) -> Result<OptimizeOutcome, MixtureError> {
    let mut candidates = sample_mixtures(config.m_candidates, prior, config.concentration, config.seed)?;
    candidates.push(prior.clone());
    candidates.push(MixtureWeights::uniform(prior.keys()));

    let scored: Vec<f64> = candidates
        .par_iter()
        .map(|w| {
            let v = config.objective.evaluate(&regressor.predict_losses(w));
            if v.is_finite() {
                v
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();

    let mut best_idx = None;
    let mut best_val = f64::NEG_INFINITY;
    for (i, &v) in scored.iter().enumerate() {
        if v > best_val {
            best_val = v;
            best_idx = Some(i);
        }
    }
    let best_idx = best_idx.filter(|_| best_val.is_finite()).ok_or(MixtureError::NoFiniteCandidate)?;
    Ok(OptimizeOutcome {
        best: candidates[best_idx].clone(),
        objective_value: best_val,
        candidates_evaluated: candidates.len(),
    })
}

/// One line of a staged token budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRow {
    pub label: String,
    pub billions: f64,
}

/// A staged token allocation with the total its source declares. The
/// computed row sum and the declared total are kept separate on purpose:
/// published tables do not always add up, and the validator's job is to say
/// so rather than paper over it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetPlan {
    pub stage: u8,
    pub rows: Vec<PlanRow>,
    pub declared_total: f64,
}

impl BudgetPlan {
    pub fn new(stage: u8, rows: Vec<(String, f64)>, declared_total: f64) -> Result<Self, MixtureError> {
        let mut seen = BTreeSet::new();
        for (label, billions) in &rows {
            if !seen.insert(label.clone()) {
                return Err(MixtureError::DuplicateLabel(label.clone()));
            }
            if *billions < 0.0 {
                return Err(MixtureError::NegativeTokens {
                    label: label.clone(),
                    billions: *billions,
                });
            }
        }
        Ok(BudgetPlan {
            stage,
            rows: rows
                .into_iter()
                .map(|(label, billions)| PlanRow { label, billions })
                .collect(),
            declared_total,
        })
    }

    pub fn computed_total(&self) -> f64 {
        self.rows.iter().map(|r| r.billions).sum()
    }
}

/// Assemble a stage-2 plan: replay rows first, then the high-quality
/// per-language rows.
pub fn plan_stage2(
    declared_total: f64,
    replay: Vec<(String, f64)>,
    rows: Vec<(String, f64)>,
) -> Result<BudgetPlan, MixtureError> {
    let mut all = replay;
    all.extend(rows);
    BudgetPlan::new(2, all, declared_total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanValidation {
    pub computed_total: f64,
    pub declared_total: f64,
    pub delta: f64,
    pub ok: bool,
}

pub const DEFAULT_PLAN_TOLERANCE: f64 = 0.01;

/// Compare the row sum against the declared total.
pub fn validate_plan(plan: &BudgetPlan, tolerance_billions: f64) -> PlanValidation {
    let computed_total = plan.computed_total();
    let delta = plan.declared_total - computed_total;
    PlanValidation {
        computed_total,
        declared_total: plan.declared_total,
        delta,
        ok: delta.abs() <= tolerance_billions,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftDirection {
    Up,
    Down,
    Flat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shift {
    pub before: f64,
    pub after: f64,
    pub delta: f64,
    pub direction: ShiftDirection,
}

const FLAT_TOLERANCE: f64 = 1e-6;

/// Per-key up/down/flat classification between two mixtures over the same
/// keys.
pub fn mixture_shift_report(
    before: &MixtureWeights,
    after: &MixtureWeights,
) -> Result<BTreeMap<String, Shift>, MixtureError> {
    let before_keys: Vec<&str> = before.keys().collect();
    let after_keys: Vec<&str> = after.keys().collect();
    if before_keys != after_keys {
        return Err(MixtureError::KeyMismatch(format!(
            "before {:?} vs after {:?}",
            before_keys, after_keys
        )));
    }
    Ok(before
        .weights
        .iter()
        .map(|(k, &b)| {
            let a = after.get(k);
            let delta = a - b;
            let direction = if delta.abs() < FLAT_TOLERANCE {
                ShiftDirection::Flat
            } else if delta > 0.0 {
                ShiftDirection::Up
            } else {
                ShiftDirection::Down
            };
            (
                k.clone(),
                Shift {
                    before: b,
                    after: a,
                    delta,
                    direction,
                },
            )
        })
        .collect())
}
