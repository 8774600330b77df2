//! Python bindings: `import humbr_py`.

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use humbr::consensus::{self, Candidate, CandidatePool, DEFAULT_ALPHA, DEFAULT_TAU};
use humbr::embedding::{provider_from_config, EmbeddingProviderConfig};
use humbr::planner::{self, Certification, Configuration, ModelCatalogEntry, PlanError, PlanLimits};
use humbr::records;
use humbr::riskmodel::{self, ModelErrorProfile, RiskParameters, DEFAULT_ENUMERATION_CEILING};
use humbr::textsim;

create_exception!(humbr_py, HumbrError, PyException, "Raised for invalid inputs or failed operations.");
create_exception!(humbr_py, InfeasibleError, HumbrError, "No configuration meets the failure tolerance.");

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    HumbrError::new_err(e.to_string())
}

#[pyfunction]
fn tokenize(text: &str) -> Vec<String> {
    textsim::tokenize(text).into_tokens()
}

#[pyfunction]
fn rouge_l(a: &str, b: &str) -> f64 {
    textsim::rouge_l(&textsim::tokenize(a), &textsim::tokenize(b))
}

/// Outcome of consensus selection over one pool.
#[pyclass(frozen, get_all, skip_from_py_object, module = "humbr_py")]
#[derive(Clone)]
struct Selection {
    selected_index: Option<usize>,
    selected_text: Option<String>,
    scores: Vec<f64>,
    winner_score: Option<f64>,
    tau: f64,
    alpha: f64,
}

#[pymethods]
impl Selection {
    #[getter]
    fn abstained(&self) -> bool {
        self.selected_index.is_none()
    }

    fn __repr__(&self) -> String {
        match self.selected_index {
            Some(i) => format!("Selection(index={i}, score={:.4})", self.winner_score.unwrap_or(f64::NAN)),
            None => format!("Selection(abstain, max_score={:.4})", self.scores.iter().copied().fold(0.0, f64::max)),
        }
    }
}

#[pyfunction]
#[pyo3(signature = (texts, model_ids=None, alpha=DEFAULT_ALPHA, tau=DEFAULT_TAU, embedding_endpoint="deterministic-test", embedding_model="fnv-hash", credential_env=None, dim=1024, seed=0))]
#[allow(clippy::too_many_arguments)]
fn select(
    py: Python<'_>,
    texts: Vec<String>,
    model_ids: Option<Vec<String>>,
    alpha: f64,
    tau: f64,
    embedding_endpoint: &str,
    embedding_model: &str,
    credential_env: Option<String>,
    dim: usize,
    seed: u64,
) -> PyResult<Selection> {
    let ids = model_ids.unwrap_or_else(|| vec!["unknown".to_string(); texts.len()]);
    if ids.len() != texts.len() {
        return Err(PyValueError::new_err("model_ids must match texts in length"));
    }
    let candidates: Vec<Candidate> = texts
        .iter()
        .zip(ids)
        .map(|(t, m)| Candidate::new(t.clone(), m, 0.0))
        .collect();
    let pool = CandidatePool::new("python", candidates).map_err(err)?;
    let cfg = EmbeddingProviderConfig {
        endpoint: embedding_endpoint.to_string(),
        model: embedding_model.to_string(),
        credential_env,
        dim,
        seed,
        ..Default::default()
    };
    let embedder = provider_from_config(&cfg).map_err(err)?;
    let result = py.detach(|| consensus::select(&pool, alpha, tau, embedder.as_ref())).map_err(err)?;
    let index = result.verdict.selected();
    Ok(Selection {
        selected_index: index,
        selected_text: index.map(|i| texts[i].clone()),
        scores: result.scores,
        winner_score: result.winner_score,
        tau,
        alpha,
    })
}

#[pyfunction]
fn beta_binomial_pmf(z: u32, m: u32, mu: f64, rho: f64) -> PyResult<f64> {
    riskmodel::beta_binomial_pmf(z, m, mu, rho).map_err(err)
}

fn risk_params(profiles: Vec<(f64, f64, u32)>, tau: f64, epsilon: f64) -> PyResult<RiskParameters> {
    let profiles = profiles
        .into_iter()
        .map(|(mu, rho, m)| ModelErrorProfile::new(mu, rho, m))
        .collect::<Result<Vec<_>, _>>()
        .map_err(err)?;
    RiskParameters::new(profiles, tau, epsilon).map_err(err)
}

/// Exact P(fraction of divergent samples ≥ τ) for `(mu, rho, samples)` profiles.
#[pyfunction]
#[pyo3(signature = (profiles, tau, ceiling=DEFAULT_ENUMERATION_CEILING))]
fn failure_probability_exact(profiles: Vec<(f64, f64, u32)>, tau: f64, ceiling: u32) -> PyResult<f64> {
    let params = risk_params(profiles, tau, 0.5)?;
    riskmodel::failure_probability_exact_with_ceiling(&params, ceiling).map_err(err)
}

#[pyclass(frozen, get_all, skip_from_py_object, module = "humbr_py")]
#[derive(Clone)]
struct MonteCarloEstimate {
    estimate: f64,
    std_error: f64,
    trials: u64,
    failures: u64,
    seed: u64,
}

#[pymethods]
impl MonteCarloEstimate {
    fn __repr__(&self) -> String {
        format!("MonteCarloEstimate(estimate={:.3e}, std_error={:.3e}, trials={})", self.estimate, self.std_error, self.trials)
    }
}

#[pyfunction]
#[pyo3(signature = (profiles, tau, trials=100_000, seed=0))]
fn failure_probability_mc(
    py: Python<'_>,
    profiles: Vec<(f64, f64, u32)>,
    tau: f64,
    trials: u64,
    seed: u64,
) -> PyResult<MonteCarloEstimate> {
    let params = risk_params(profiles, tau, 0.5)?;
    let mc = py.detach(|| riskmodel::failure_probability_mc(&params, trials, seed)).map_err(err)?;
    Ok(MonteCarloEstimate {
        estimate: mc.estimate,
        std_error: mc.std_error,
        trials: mc.trials,
        failures: mc.failures,
        seed: mc.seed,
    })
}

#[pyfunction]
fn effective_sample_size(k: u32, m: u32, rho_bar: f64) -> f64 {
    riskmodel::effective_sample_size(k, m, rho_bar)
}

#[pyfunction]
fn hoeffding_bound(n_eff: f64, tau: f64, mu_bar: f64) -> PyResult<f64> {
    riskmodel::hoeffding_bound(n_eff, tau, mu_bar).map_err(err)
}

/// Smallest M per model meeting the tolerance, or None when no M does.
#[pyfunction]
fn required_samples(k: u32, tau: f64, mu_bar: f64, rho_bar: f64, epsilon: f64) -> PyResult<Option<u32>> {
    Ok(riskmodel::required_samples(k, tau, mu_bar, rho_bar, epsilon).map_err(err)?.samples())
}

/// A priced ensemble configuration.
#[pyclass(frozen, get_all, skip_from_py_object, module = "humbr_py")]
#[derive(Clone)]
struct Plan {
    models: Vec<String>,
    samples_per_model: u32,
    total_samples: u32,
    total_cost: f64,
    p_fail: f64,
    bound_source: String,
    temperatures: Vec<Vec<f64>>,
}

impl From<&Configuration> for Plan {
    fn from(c: &Configuration) -> Self {
        Plan {
            models: c.models.clone(),
            samples_per_model: c.samples_per_model,
            total_samples: c.total_samples,
            total_cost: c.total_cost,
            p_fail: c.p_fail,
            bound_source: records::to_line(&c.bound_source).trim_matches('"').to_string(),
            temperatures: c.schedule.iter().map(|s| s.temperatures.clone()).collect(),
        }
    }
}

#[pymethods]
impl Plan {
    fn __repr__(&self) -> String {
        format!(
            "Plan(models={:?}, M={}, cost={}, p_fail={:.3e}, bound={})",
            self.models, self.samples_per_model, self.total_cost, self.p_fail, self.bound_source
        )
    }
}

fn catalog_entries(catalog: Vec<(String, f64, f64, f64)>) -> Vec<ModelCatalogEntry> {
    catalog
        .into_iter()
        .map(|(id, cost, mu, rho)| ModelCatalogEntry::new(id, cost, mu, rho))
        .collect()
}

fn limits(max_k: usize, max_m: u32, bound: &str, ceiling: u32) -> PyResult<PlanLimits> {
    let certification = match bound {
        "exact" => Certification::ExactWhenEnumerable,
        "hoeffding" => Certification::Hoeffding,
        other => return Err(PyValueError::new_err(format!("bound must be 'exact' or 'hoeffding', got {other:?}"))),
    };
    Ok(PlanLimits {
        max_k,
        max_m,
        enumeration_ceiling: ceiling,
        certification,
    })
}

/// Cheapest configuration from `(model_id, cost, mu, rho)` entries with
/// failure probability at most `epsilon`.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (catalog, tau, epsilon, max_k=8, max_m=8, bound="exact", ceiling=DEFAULT_ENUMERATION_CEILING))]
fn plan(
    py: Python<'_>,
    catalog: Vec<(String, f64, f64, f64)>,
    tau: f64,
    epsilon: f64,
    max_k: usize,
    max_m: u32,
    bound: &str,
    ceiling: u32,
) -> PyResult<Plan> {
    let limits = limits(max_k, max_m, bound, ceiling)?;
    let catalog = catalog_entries(catalog);
    match py.detach(|| planner::plan(&catalog, tau, epsilon, &limits)) {
        Ok(p) => Ok(Plan::from(&p.configuration)),
        Err(PlanError::Infeasible { reason, .. }) => Err(InfeasibleError::new_err(reason)),
        Err(e) => Err(err(e)),
    }
}

#[pyclass(frozen, get_all, skip_from_py_object, module = "humbr_py")]
#[derive(Clone)]
struct FrontierPoint {
    budget: f64,
    cost: Option<f64>,
    p_fail: f64,
    plan: Option<Plan>,
}

#[pymethods]
impl FrontierPoint {
    fn __repr__(&self) -> String {
        format!("FrontierPoint(budget={}, cost={:?}, p_fail={:.3e})", self.budget, self.cost, self.p_fail)
    }
}

#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (catalog, tau, budgets, max_k=8, max_m=8, bound="exact", ceiling=DEFAULT_ENUMERATION_CEILING))]
fn pareto_frontier(
    py: Python<'_>,
    catalog: Vec<(String, f64, f64, f64)>,
    tau: f64,
    budgets: Vec<f64>,
    max_k: usize,
    max_m: u32,
    bound: &str,
    ceiling: u32,
) -> PyResult<Vec<FrontierPoint>> {
    let limits = limits(max_k, max_m, bound, ceiling)?;
    let catalog = catalog_entries(catalog);
    let points = py
        .detach(|| planner::pareto_frontier(&catalog, tau, &budgets, &limits))
        .map_err(err)?;
    Ok(points
        .iter()
        .map(|p| FrontierPoint {
            budget: p.budget,
            cost: p.cost,
            p_fail: p.p_fail,
            plan: p.configuration.as_ref().map(Plan::from),
        })
        .collect())
}

#[pymodule]
fn humbr_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("HumbrError", m.py().get_type::<HumbrError>())?;
    m.add("InfeasibleError", m.py().get_type::<InfeasibleError>())?;
    m.add("DEFAULT_ALPHA", DEFAULT_ALPHA)?;
    m.add("DEFAULT_TAU", DEFAULT_TAU)?;
    m.add_class::<Selection>()?;
    m.add_class::<MonteCarloEstimate>()?;
    m.add_class::<Plan>()?;
    m.add_class::<FrontierPoint>()?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(rouge_l, m)?)?;
    m.add_function(wrap_pyfunction!(select, m)?)?;
    m.add_function(wrap_pyfunction!(beta_binomial_pmf, m)?)?;
    m.add_function(wrap_pyfunction!(failure_probability_exact, m)?)?;
    m.add_function(wrap_pyfunction!(failure_probability_mc, m)?)?;
    m.add_function(wrap_pyfunction!(effective_sample_size, m)?)?;
    m.add_function(wrap_pyfunction!(hoeffding_bound, m)?)?;
    m.add_function(wrap_pyfunction!(required_samples, m)?)?;
    m.add_function(wrap_pyfunction!(plan, m)?)?;
    m.add_function(wrap_pyfunction!(pareto_frontier, m)?)?;
    Ok(())
}
