//! Cost-minimal ensemble design under a failure tolerance.
//!
//! The search is exhaustive over model subsets (up to `max_k` models) and a
//! shared per-model sample count M (up to `max_m`). Each configuration's
//! failure probability comes from exact enumeration when Σ M fits under the
//! enumeration ceiling and from the Hoeffding bound otherwise; the plan
//! records which one certified it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::riskmodel::{
    effective_sample_size, failure_probability_exact_with_ceiling, hoeffding_bound, ModelErrorProfile, RiskError,
    RiskParameters, DEFAULT_ENUMERATION_CEILING,
};

/// One sample per model at each of these temperatures.
pub const DEFAULT_LADDER: [f64; 4] = [0.0, 0.25, 0.5, 0.75];

const COST_TIE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("invalid catalog: {0}")]
    InvalidCatalog(String),
    #[error("invalid planning parameters: {0}")]
    InvalidParameters(String),
    #[error("infeasible: {reason}")]
    Infeasible {
        reason: String,
        /// Lowest failure probability reached within the limits, if any
        /// configuration could be evaluated.
        best: Option<Box<Configuration>>,
    },
    #[error(transparent)]
    Risk(#[from] RiskError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCatalogEntry {
    pub model_id: String,
    /// Abstract cost units per call.
    pub cost: f64,
    pub mu: f64,
    pub rho: f64,
    #[serde(default = "default_ladder")]
    pub temperatures: Vec<f64>,
}

fn default_ladder() -> Vec<f64> {
    DEFAULT_LADDER.to_vec()
}

impl ModelCatalogEntry {
    pub fn new(model_id: impl Into<String>, cost: f64, mu: f64, rho: f64) -> Self {
        Self {
            model_id: model_id.into(),
            cost,
            mu,
            rho,
            temperatures: default_ladder(),
        }
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        let bad = |msg: String| Err(PlanError::InvalidCatalog(format!("{}: {msg}", self.model_id)));
        if !(self.cost >= 0.0 && self.cost.is_finite()) {
            return bad(format!("cost must be >= 0, got {}", self.cost));
        }
        if let Err(e) = ModelErrorProfile::new(self.mu, self.rho, 1) {
            return bad(e.to_string());
        }
        if self.temperatures.is_empty() {
            return bad("temperature ladder is empty".into());
        }
        for (i, t) in self.temperatures.iter().enumerate() {
            if !(0.0..=2.0).contains(t) {
                return bad(format!("temperature {t} outside [0, 2]"));
            }
            if self.temperatures[..i].contains(t) {
                return bad(format!("temperature {t} repeated in ladder"));
            }
        }
        Ok(())
    }

    fn profile(&self, samples: u32) -> ModelErrorProfile {
        ModelErrorProfile::new(self.mu, self.rho, samples).expect("validated catalog entry")
    }
}

/// Temperatures for `m` samples drawn from `ladder`: the ladder itself when
/// the lengths match, evenly spaced rungs when M is shorter, and M evenly
/// spaced distinct values over the ladder's range when M is longer, so no
/// temperature (in particular 0) is requested twice.
pub fn assign_temperatures(ladder: &[f64], m: u32) -> Vec<f64> {
    let len = ladder.len();
    let m = m as usize;
    if len == 0 {
        return vec![0.0; m];
    }
    if m <= len {
        return (0..m).map(|j| ladder[j * len / m]).collect();
    }
    let lo = ladder.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = ladder.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        hi = (lo + 0.25 * (m - 1) as f64).min(2.0);
    }
    let span = (m - 1) as f64;
    (0..m).map(|j| lo + (hi - lo) * j as f64 / span).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BoundSource {
    #[default]
    Exact,
    Hoeffding,
}

/// How a configuration's failure probability is certified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Certification {
    /// Exact enumeration when within the ceiling, Hoeffding otherwise.
    #[default]
    ExactWhenEnumerable,
    /// Always the Hoeffding design bound.
    Hoeffding,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanLimits {
    pub max_k: usize,
    pub max_m: u32,
    pub enumeration_ceiling: u32,
    pub certification: Certification,
}

impl Default for PlanLimits {
    fn default() -> Self {
        Self {
            max_k: 8,
            max_m: 8,
            enumeration_ceiling: DEFAULT_ENUMERATION_CEILING,
            certification: Certification::ExactWhenEnumerable,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSchedule {
    pub model_id: String,
    pub temperatures: Vec<f64>,
}

/// A model subset with a shared sample count, and its evaluated risk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub models: Vec<String>,
    pub samples_per_model: u32,
    pub total_samples: u32,
    pub total_cost: f64,
    pub p_fail: f64,
    pub bound_source: BoundSource,
    pub schedule: Vec<ModelSchedule>,
}

impl Configuration {
    /// Total order used for selection: cost, then N, then model ids.
    fn cheaper_than(&self, other: &Configuration) -> bool {
        let scale = self.total_cost.abs().max(other.total_cost.abs()).max(1.0);
        if (self.total_cost - other.total_cost).abs() > COST_TIE * scale {
            return self.total_cost < other.total_cost;
        }
        if self.total_samples != other.total_samples {
            return self.total_samples < other.total_samples;
        }
        self.models < other.models
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsemblePlan {
    #[serde(flatten)]
    pub configuration: Configuration,
    pub tau: f64,
    pub epsilon: f64,
    pub feasible: bool,
}

impl EnsemblePlan {
    pub fn k(&self) -> usize {
        self.configuration.models.len()
    }

    pub fn m(&self) -> u32 {
        self.configuration.samples_per_model
    }
}

fn validate_catalog(catalog: &[ModelCatalogEntry]) -> Result<Vec<ModelCatalogEntry>, PlanError> {
    if catalog.is_empty() {
        return Err(PlanError::InvalidCatalog("catalog is empty".into()));
    }
    let mut sorted = catalog.to_vec();
    sorted.sort_by(|a, b| a.model_id.cmp(&b.model_id));
    for w in sorted.windows(2) {
        if w[0].model_id == w[1].model_id {
            return Err(PlanError::InvalidCatalog(format!("duplicate model id {}", w[0].model_id)));
        }
    }
    for e in &sorted {
        e.validate()?;
    }
    Ok(sorted)
}

fn validate_limits(tau: f64, limits: &PlanLimits) -> Result<(), PlanError> {
    if !(0.5..=1.0).contains(&tau) {
        return Err(PlanError::InvalidParameters(format!("tau must lie in [0.5, 1], got {tau}")));
    }
    if limits.max_k == 0 || limits.max_m == 0 {
        return Err(PlanError::InvalidParameters("max_k and max_m must be >= 1".into()));
    }
    Ok(())
}

/// Evaluates one (subset, M). `None` when τ ≤ μ̄ for the subset.
pub fn evaluate_configuration(
    models: &[&ModelCatalogEntry],
    m: u32,
    tau: f64,
    limits: &PlanLimits,
) -> Result<Option<Configuration>, PlanError> {
    let k = models.len() as u32;
    let mu_bar = models.iter().map(|e| e.mu).sum::<f64>() / f64::from(k);
    if tau <= mu_bar {
        return Ok(None);
    }
    let n = k * m;
    let use_exact = limits.certification == Certification::ExactWhenEnumerable && n <= limits.enumeration_ceiling;
    let (p_fail, bound_source) = if use_exact {
        let params = RiskParameters::new(models.iter().map(|e| e.profile(m)).collect(), tau, 0.5)?;
        (
            failure_probability_exact_with_ceiling(&params, limits.enumeration_ceiling)?,
            BoundSource::Exact,
        )
    } else {
        let rho_bar = models.iter().map(|e| e.rho).sum::<f64>() / f64::from(k);
        (
            hoeffding_bound(effective_sample_size(k, m, rho_bar), tau, mu_bar)?,
            BoundSource::Hoeffding,
        )
    };
    Ok(Some(Configuration {
        models: models.iter().map(|e| e.model_id.clone()).collect(),
        samples_per_model: m,
        total_samples: n,
        total_cost: models.iter().map(|e| e.cost).sum::<f64>() * f64::from(m),
        p_fail,
        bound_source,
        schedule: models
            .iter()
            .map(|e| ModelSchedule {
                model_id: e.model_id.clone(),
                temperatures: assign_temperatures(&e.temperatures, m),
            })
            .collect(),
    }))
}

fn subsets(n: usize, max_k: usize) -> Vec<Vec<usize>> {
    fn extend(start: usize, n: usize, max_k: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        for i in start..n {
            current.push(i);
            out.push(current.clone());
            if current.len() < max_k {
                extend(i + 1, n, max_k, current, out);
            }
            current.pop();
        }
    }
    let mut out = Vec::new();
    extend(0, n, max_k, &mut Vec::new(), &mut out);
    out
}

/// Every evaluable configuration within the limits, in a deterministic order.
pub fn enumerate_configurations(
    catalog: &[ModelCatalogEntry],
    tau: f64,
    limits: &PlanLimits,
) -> Result<Vec<Configuration>, PlanError> {
    let catalog = validate_catalog(catalog)?;
    validate_limits(tau, limits)?;
    let per_subset: Vec<Vec<Configuration>> = subsets(catalog.len(), limits.max_k)
        .into_par_iter()
        .map(|idx| {
            let models: Vec<&ModelCatalogEntry> = idx.iter().map(|&i| &catalog[i]).collect();
            let mut out = Vec::new();
            for m in 1..=limits.max_m {
                match evaluate_configuration(&models, m, tau, limits)? {
                    Some(c) => out.push(c),
                    None => break,
                }
            }
            Ok(out)
        })
        .collect::<Result<_, PlanError>>()?;
    Ok(per_subset.into_iter().flatten().collect())
}

/// Cheapest configuration whose failure probability is at most ε.
pub fn plan(catalog: &[ModelCatalogEntry], tau: f64, epsilon: f64, limits: &PlanLimits) -> Result<EnsemblePlan, PlanError> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(PlanError::InvalidParameters(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    let configs = enumerate_configurations(catalog, tau, limits)?;
    let best_risk = configs
        .iter()
        .min_by(|a, b| a.p_fail.total_cmp(&b.p_fail))
        .cloned();
    let chosen = configs
        .into_iter()
        .filter(|c| c.p_fail <= epsilon)
        .fold(None::<Configuration>, |best, c| match best {
            Some(b) if !c.cheaper_than(&b) => Some(b),
            _ => Some(c),
        });
    match chosen {
        Some(configuration) => Ok(EnsemblePlan {
            configuration,
            tau,
            epsilon,
            feasible: true,
        }),
        None => {
            let reason = match &best_risk {
                None => format!(
                    "tau = {tau} does not exceed the mean error rate of any model subset; no bound applies"
                ),
                Some(b) => format!(
                    "lowest failure probability within max_k = {}, max_m = {} is {:.3e} (K = {}, M = {}), above epsilon = {epsilon:e}",
                    limits.max_k,
                    limits.max_m,
                    b.p_fail,
                    b.models.len(),
                    b.samples_per_model
                ),
            };
            Err(PlanError::Infeasible {
                reason,
                best: best_risk.map(Box::new),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub budget: f64,
    /// Cost of the chosen configuration; absent when nothing is affordable.
    pub cost: Option<f64>,
    pub p_fail: f64,
    pub configuration: Option<Configuration>,
}

/// Lowest achievable failure probability at each budget.
pub fn pareto_frontier(
    catalog: &[ModelCatalogEntry],
    tau: f64,
    budgets: &[f64],
    limits: &PlanLimits,
) -> Result<Vec<FrontierPoint>, PlanError> {
    if budgets.is_empty() {
        return Err(PlanError::InvalidParameters("budget grid is empty".into()));
    }
    let configs = enumerate_configurations(catalog, tau, limits)?;
    Ok(budgets
        .iter()
        .map(|&budget| {
            let best = configs
                .iter()
                .filter(|c| c.total_cost <= budget)
                .fold(None::<&Configuration>, |best, c| match best {
                    Some(b) if c.p_fail > b.p_fail || (c.p_fail == b.p_fail && !c.cheaper_than(b)) => Some(b),
                    _ => Some(c),
                });
            match best {
                Some(c) => FrontierPoint {
                    budget,
                    cost: Some(c.total_cost),
                    p_fail: c.p_fail,
                    configuration: Some(c.clone()),
                },
                None => FrontierPoint {
                    budget,
                    cost: None,
                    p_fail: 1.0,
                    configuration: None,
                },
            }
        })
        .collect())
}
