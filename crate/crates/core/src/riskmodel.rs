//! Failure-probability machinery for correlated ensembles.
//!
//! Each model k draws a latent error rate `πₖ ~ Beta(a, b)` and then emits
//! `Zₖ ~ Binomial(Mₖ, πₖ)` divergent samples, with `a = μ(1/ρ − 1)` and
//! `b = (1 − μ)(1/ρ − 1)`. The ensemble fails when the divergent share
//! `ΣZₖ / N` reaches τ.
//!
//! The exact probability convolves the per-model marginals over the total
//! count, all in log space. The ratio of Beta functions in the marginal is
//! evaluated as a ratio of rising factorials, `Σ ln(a + i)`, which equals the
//! log-gamma difference exactly for integer offsets and stays accurate when
//! `a` is huge (ρ → 0).
//!
//! Monte Carlo sampling uses ChaCha8 (`rand_chacha`), seeded with
//! `seed_from_u64(seed)`, one independent stream per fixed-size chunk of
//! trials, so results are identical across platforms and thread counts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// ρ is clamped to this value; the parameterization is singular at ρ = 1.
pub const RHO_MAX: f64 = 1.0 - 1e-9;
/// Below this ρ the marginal is taken to be exactly Binomial(M, μ).
pub const RHO_BINOMIAL_LIMIT: f64 = 1e-12;
/// Default cap on Σ Mₖ for exact enumeration.
pub const DEFAULT_ENUMERATION_CEILING: u32 = 256;
pub const MIN_MC_TRIALS: u64 = 1000;

const MC_CHUNK: u64 = 1 << 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RiskError {
    #[error("parameter out of domain: {0}")]
    Domain(String),
    #[error("{total} total samples exceed the enumeration ceiling of {ceiling}; use Monte Carlo")]
    EnumerationCeilingExceeded { total: u32, ceiling: u32 },
    #[error("threshold {tau} does not exceed mean error rate {mu_bar}; the bound is vacuous")]
    InfeasibleThreshold { tau: f64, mu_bar: f64 },
    #[error("Monte Carlo needs at least {MIN_MC_TRIALS} trials, got {0}")]
    TooFewTrials(u64),
}

fn domain(msg: impl Into<String>) -> RiskError {
    RiskError::Domain(msg.into())
}

/// Error profile of one model sampled `samples` times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelErrorProfile {
    pub mu: f64,
    pub rho: f64,
    pub samples: u32,
}

impl ModelErrorProfile {
    /// Validates the profile; ρ in [1 − 1e-9, 1) is clamped to `RHO_MAX`.
    pub fn new(mu: f64, rho: f64, samples: u32) -> Result<Self, RiskError> {
        if !(mu > 0.0 && mu < 1.0) {
            return Err(domain(format!("mu must lie in (0, 1), got {mu}")));
        }
        if !(0.0..1.0).contains(&rho) {
            return Err(domain(format!("rho must lie in [0, 1), got {rho}")));
        }
        if samples == 0 {
            return Err(domain("samples per model must be >= 1"));
        }
        Ok(Self {
            mu,
            rho: rho.min(RHO_MAX),
            samples,
        })
    }

    fn beta_shape(&self) -> Option<(f64, f64)> {
        if self.rho < RHO_BINOMIAL_LIMIT {
            None
        } else {
            let c = 1.0 / self.rho - 1.0;
            Some((self.mu * c, (1.0 - self.mu) * c))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskParameters {
    pub profiles: Vec<ModelErrorProfile>,
    pub tau: f64,
    pub epsilon: f64,
}

impl RiskParameters {
    pub fn new(profiles: Vec<ModelErrorProfile>, tau: f64, epsilon: f64) -> Result<Self, RiskError> {
        if profiles.is_empty() {
            return Err(domain("at least one model profile is required"));
        }
        if !(0.5..=1.0).contains(&tau) {
            return Err(domain(format!("tau must lie in [0.5, 1], got {tau}")));
        }
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(domain(format!("epsilon must lie in (0, 1), got {epsilon}")));
        }
        Ok(Self { profiles, tau, epsilon })
    }

    /// K identical models with M samples each.
    pub fn homogeneous(k: usize, m: u32, mu: f64, rho: f64, tau: f64, epsilon: f64) -> Result<Self, RiskError> {
        if k == 0 {
            return Err(domain("K must be >= 1"));
        }
        let p = ModelErrorProfile::new(mu, rho, m)?;
        Self::new(vec![p; k], tau, epsilon)
    }

    pub fn total_samples(&self) -> u32 {
        self.profiles.iter().map(|p| p.samples).sum()
    }

    /// Sample-weighted mean error rate.
    pub fn mu_bar(&self) -> f64 {
        let n = self.total_samples() as f64;
        self.profiles.iter().map(|p| p.mu * p.samples as f64).sum::<f64>() / n
    }

    /// Sample-weighted mean correlation.
    pub fn rho_bar(&self) -> f64 {
        let n = self.total_samples() as f64;
        self.profiles.iter().map(|p| p.rho * p.samples as f64).sum::<f64>() / n
    }
}

fn ln_choose(n: u32, k: u32) -> f64 {
    let k = k.min(n - k);
    (1..=k).map(|i| ((n - k + i) as f64 / i as f64).ln()).sum()
}

/// ln Γ(x + n) − ln Γ(x)
fn ln_rising(x: f64, n: u32) -> f64 {
    (0..n).map(|i| (x + i as f64).ln()).sum()
}

fn validate_pmf_args(z: u32, m: u32, mu: f64, rho: f64) -> Result<(), RiskError> {
    if z > m {
        return Err(domain(format!("z = {z} exceeds M = {m}")));
    }
    ModelErrorProfile::new(mu, rho, m.max(1)).map(|_| ())
}

fn ln_pmf_unchecked(z: u32, m: u32, mu: f64, rho: f64) -> f64 {
    let rho = rho.min(RHO_MAX);
    let lc = ln_choose(m, z);
    if rho < RHO_BINOMIAL_LIMIT {
        return lc + z as f64 * mu.ln() + (m - z) as f64 * (-mu).ln_1p();
    }
    let c = 1.0 / rho - 1.0;
    let (a, b) = (mu * c, (1.0 - mu) * c);
    lc + ln_rising(a, z) + ln_rising(b, m - z) - ln_rising(c, m)
}

/// Natural log of the Beta-Binomial pmf at `z`.
pub fn ln_beta_binomial_pmf(z: u32, m: u32, mu: f64, rho: f64) -> Result<f64, RiskError> {
    validate_pmf_args(z, m, mu, rho)?;
    Ok(ln_pmf_unchecked(z, m, mu, rho))
}

/// P(Z = z) for `Z ~ BetaBinomial(M, μ, ρ)`; exact Binomial(M, μ) when
/// ρ < 1e-12.
pub fn beta_binomial_pmf(z: u32, m: u32, mu: f64, rho: f64) -> Result<f64, RiskError> {
    ln_beta_binomial_pmf(z, m, mu, rho).map(f64::exp)
}

fn ln_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

fn ln_sum_exp(xs: &[f64]) -> f64 {
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + xs.iter().map(|x| (x - hi).exp()).sum::<f64>().ln()
}

/// Smallest divergent count t with t/N ≥ τ, treating τN within 1e-9 of an
/// integer as that integer.
pub fn failure_count_threshold(tau: f64, n: u32) -> u32 {
    let x = tau * n as f64;
    let r = x.round();
    let t = if (x - r).abs() <= 1e-9 { r } else { x.ceil() };
    t.max(0.0) as u32
}

/// Log pmf of the total divergent count Σ Zₖ.
pub fn ln_total_count_distribution(profiles: &[ModelErrorProfile]) -> Vec<f64> {
    let mut acc = vec![0.0];
    for p in profiles {
        let single: Vec<f64> = (0..=p.samples)
            .map(|z| ln_pmf_unchecked(z, p.samples, p.mu, p.rho))
            .collect();
        let mut next = vec![f64::NEG_INFINITY; acc.len() + single.len() - 1];
        for (i, la) in acc.iter().enumerate() {
            for (z, lz) in single.iter().enumerate() {
                next[i + z] = ln_add(next[i + z], la + lz);
            }
        }
        acc = next;
    }
    acc
}

pub fn failure_probability_exact(params: &RiskParameters) -> Result<f64, RiskError> {
    failure_probability_exact_with_ceiling(params, DEFAULT_ENUMERATION_CEILING)
}

/// P(ΣZₖ / N ≥ τ), by convolving the per-model marginals over the total
/// divergent count. Costs O(K·M·N).
pub fn failure_probability_exact_with_ceiling(params: &RiskParameters, ceiling: u32) -> Result<f64, RiskError> {
    let n = params.total_samples();
    if n > ceiling {
        return Err(RiskError::EnumerationCeilingExceeded { total: n, ceiling });
    }
    let dist = ln_total_count_distribution(&params.profiles);
    let t = failure_count_threshold(params.tau, n) as usize;
    if t >= dist.len() {
        return Ok(0.0);
    }
    Ok(ln_sum_exp(&dist[t..]).exp().clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub trials: u64,
    pub failures: u64,
    pub seed: u64,
}

enum LatentRate {
    Fixed(f64),
    Beta(Beta<f64>),
}

/// Simulates the hierarchy directly: draw πₖ, then Zₖ, and count trials that
/// land in the failure region.
pub fn failure_probability_mc(params: &RiskParameters, trials: u64, seed: u64) -> Result<MonteCarloEstimate, RiskError> {
    if trials < MIN_MC_TRIALS {
        return Err(RiskError::TooFewTrials(trials));
    }
    let latent: Vec<(LatentRate, u64)> = params
        .profiles
        .iter()
        .map(|p| {
            let rate = match p.beta_shape() {
                None => LatentRate::Fixed(p.mu),
                Some((a, b)) => LatentRate::Beta(Beta::new(a, b).map_err(|e| domain(e.to_string()))?),
            };
            Ok((rate, u64::from(p.samples)))
        })
        .collect::<Result<_, RiskError>>()?;
    let threshold = u64::from(failure_count_threshold(params.tau, params.total_samples()));

    let chunks = trials.div_ceil(MC_CHUNK);
    let failures: u64 = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk);
            let count = MC_CHUNK.min(trials - chunk * MC_CHUNK);
            (0..count)
                .filter(|_| simulate_total(&latent, &mut rng) >= threshold)
                .count() as u64
        })
        .sum();

    let p = failures as f64 / trials as f64;
    Ok(MonteCarloEstimate {
        estimate: p,
        std_error: (p * (1.0 - p) / trials as f64).sqrt(),
        trials,
        failures,
        seed,
    })
}

fn simulate_total<R: Rng>(latent: &[(LatentRate, u64)], rng: &mut R) -> u64 {
    latent
        .iter()
        .map(|(rate, m)| {
            let pi = match rate {
                LatentRate::Fixed(p) => *p,
                LatentRate::Beta(beta) => beta.sample(rng),
            };
            // p is a valid probability by construction
            Binomial::new(*m, pi.clamp(0.0, 1.0)).expect("probability in [0, 1]").sample(rng)
        })
        .sum()
}

/// KM / (1 + (M − 1)ρ̄).
pub fn effective_sample_size(k: u32, m: u32, rho_bar: f64) -> f64 {
    let (k, m) = (f64::from(k), f64::from(m));
    k * m / (1.0 + (m - 1.0) * rho_bar)
}

/// exp(−2·N_eff·(τ − μ̄)²), clamped to [0, 1].
pub fn hoeffding_bound(n_eff: f64, tau: f64, mu_bar: f64) -> Result<f64, RiskError> {
    if tau <= mu_bar {
        return Err(RiskError::InfeasibleThreshold { tau, mu_bar });
    }
    if n_eff.is_nan() || n_eff < 0.0 {
        return Err(domain(format!("N_eff must be >= 0, got {n_eff}")));
    }
    let gap = tau - mu_bar;
    Ok((-2.0 * n_eff * gap * gap).exp().clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleRequirement {
    Samples(u32),
    /// No finite M satisfies the bound at this K and ρ̄.
    Infeasible,
}

impl SampleRequirement {
    pub fn samples(self) -> Option<u32> {
        match self {
            SampleRequirement::Samples(m) => Some(m),
            SampleRequirement::Infeasible => None,
        }
    }
}

/// Right-hand side of the design inequality
/// `M ≥ ln(1/ε)(1 − ρ̄) / (2K(τ − μ̄)² − ρ̄ ln(1/ε))`; `None` when the
/// denominator is not positive.
pub fn required_samples_bound(k: u32, tau: f64, mu_bar: f64, rho_bar: f64, epsilon: f64) -> Result<Option<f64>, RiskError> {
    if tau <= mu_bar {
        return Err(RiskError::InfeasibleThreshold { tau, mu_bar });
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(domain(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if !(0.0..=1.0).contains(&rho_bar) {
        return Err(domain(format!("rho_bar must lie in [0, 1], got {rho_bar}")));
    }
    if k == 0 {
        return Err(domain("K must be >= 1"));
    }
    let log_inv = (1.0 / epsilon).ln();
    let gap = tau - mu_bar;
    let denom = 2.0 * f64::from(k) * gap * gap - rho_bar * log_inv;
    if denom <= 0.0 {
        return Ok(None);
    }
    Ok(Some(log_inv * (1.0 - rho_bar) / denom))
}

/// Smallest M ≥ 1 meeting the design inequality.
pub fn required_samples(k: u32, tau: f64, mu_bar: f64, rho_bar: f64, epsilon: f64) -> Result<SampleRequirement, RiskError> {
    let Some(bound) = required_samples_bound(k, tau, mu_bar, rho_bar, epsilon)? else {
        return Ok(SampleRequirement::Infeasible);
    };
    if bound > f64::from(u32::MAX) {
        return Ok(SampleRequirement::Infeasible);
    }
    let mut m = ((bound - 1e-12).ceil() as u32).max(1);
    // guard against rounding at an exact boundary
    while hoeffding_bound(effective_sample_size(k, m, rho_bar), tau, mu_bar)? > epsilon {
        m += 1;
    }
    Ok(SampleRequirement::Samples(m))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureEstimate {
    pub exact: Option<f64>,
    /// Hoeffding bound; 1.0 when τ ≤ μ̄.
    pub hoeffding: f64,
    pub monte_carlo: Option<MonteCarloEstimate>,
    pub n: u32,
    pub n_eff: f64,
    pub mu_bar: f64,
    pub rho_bar: f64,
}

/// Exact (when within `ceiling`), Hoeffding and optional Monte Carlo side by
/// side. ρ̄ defaults to the sample-weighted mean of the profiles.
pub fn estimate_failure(
    params: &RiskParameters,
    rho_bar: Option<f64>,
    ceiling: u32,
    monte_carlo: Option<(u64, u64)>,
) -> Result<FailureEstimate, RiskError> {
    let n = params.total_samples();
    let k = params.profiles.len() as f64;
    let rho_bar = rho_bar.unwrap_or_else(|| params.rho_bar());
    let mu_bar = params.mu_bar();
    let m_bar = f64::from(n) / k;
    let n_eff = f64::from(n) / (1.0 + (m_bar - 1.0) * rho_bar);
    let exact = match failure_probability_exact_with_ceiling(params, ceiling) {
        Ok(p) => Some(p),
        Err(RiskError::EnumerationCeilingExceeded { .. }) => None,
        Err(e) => return Err(e),
    };
    let hoeffding = match hoeffding_bound(n_eff, params.tau, mu_bar) {
        Ok(b) => b,
        Err(RiskError::InfeasibleThreshold { .. }) => 1.0,
        Err(e) => return Err(e),
    };
    let monte_carlo = monte_carlo
        .map(|(trials, seed)| failure_probability_mc(params, trials, seed))
        .transpose()?;
    Ok(FailureEstimate {
        exact,
        hoeffding,
        monte_carlo,
        n,
        n_eff,
        mu_bar,
        rho_bar,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binomial_pmf(z: u32, m: u32, mu: f64) -> f64 {
        let mut c = 1.0;
        for i in 0..z {
            c = c * f64::from(m - i) / f64::from(i + 1);
        }
        c * mu.powi(z as i32) * (1.0 - mu).powi((m - z) as i32)
    }

    /// Full product-lattice sum over every z vector, the literal form of the
    /// failure probability.
    fn lattice_failure(params: &RiskParameters) -> f64 {
        let n = params.total_samples();
        let t = failure_count_threshold(params.tau, n);
        let mut total = 0.0;
        let mut z = vec![0u32; params.profiles.len()];
        loop {
            if z.iter().sum::<u32>() >= t {
                total += params
                    .profiles
                    .iter()
                    .zip(&z)
                    .map(|(p, &zk)| beta_binomial_pmf(zk, p.samples, p.mu, p.rho).unwrap())
                    .product::<f64>();
            }
            let mut i = 0;
            loop {
                if i == z.len() {
                    return total;
                }
                z[i] += 1;
                if z[i] <= params.profiles[i].samples {
                    break;
                }
                z[i] = 0;
                i += 1;
            }
        }
    }

    #[test]
    fn pmf_examples() {
        let p = beta_binomial_pmf(0, 4, 0.1, 0.0).unwrap();
        assert!((p - 0.6561).abs() < 1e-15);
        let p = beta_binomial_pmf(0, 4, 0.1, 1e-13).unwrap();
        assert!((p - 0.6561).abs() < 1e-15);
        // rising factorial form: 0.1·1.1·2.1·3.1 / (1·2·3·4)
        let p = beta_binomial_pmf(4, 4, 0.1, 0.5).unwrap();
        assert!((p - 0.0298375).abs() < 1e-15);
    }

    #[test]
    fn pmf_domain_errors() {
        assert!(beta_binomial_pmf(5, 4, 0.1, 0.5).is_err());
        assert!(beta_binomial_pmf(1, 4, 0.0, 0.5).is_err());
        assert!(beta_binomial_pmf(1, 4, 1.0, 0.5).is_err());
        assert!(beta_binomial_pmf(1, 4, 0.1, 1.0).is_err());
        assert!(beta_binomial_pmf(1, 4, 0.1, -0.1).is_err());
        assert!(beta_binomial_pmf(1, 4, f64::NAN, 0.1).is_err());
    }

    #[test]
    fn rho_clamped_near_one() {
        let p = ModelErrorProfile::new(0.2, 1.0 - 1e-12, 3).unwrap();
        assert_eq!(p.rho, RHO_MAX);
        // all-or-nothing limit: mass concentrates at 0 and M in proportion 1−μ : μ
        let p0 = beta_binomial_pmf(0, 3, 0.2, 1.0 - 1e-12).unwrap();
        let p3 = beta_binomial_pmf(3, 3, 0.2, 1.0 - 1e-12).unwrap();
        assert!((p0 - 0.8).abs() < 1e-6 && (p3 - 0.2).abs() < 1e-6);
    }

    #[test]
    fn pmf_normalization_and_binomial_limit_small_grid() {
        for m in [1, 2, 5, 17] {
            for mu in [0.01, 0.3, 0.9] {
                for rho in [0.0, 1e-10, 0.05, 0.5, 0.95] {
                    let s: f64 = (0..=m).map(|z| beta_binomial_pmf(z, m, mu, rho).unwrap()).sum();
                    assert!((s - 1.0).abs() < 1e-12, "m={m} mu={mu} rho={rho} sum={s}");
                }
                for z in 0..=m {
                    let d = beta_binomial_pmf(z, m, mu, 1e-10).unwrap() - binomial_pmf(z, m, mu);
                    assert!(d.abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn count_threshold_boundaries() {
        assert_eq!(failure_count_threshold(0.7, 16), 12);
        assert_eq!(failure_count_threshold(0.7, 10), 7);
        assert_eq!(failure_count_threshold(0.5, 4), 2);
        assert_eq!(failure_count_threshold(1.0, 6), 6);
        assert_eq!(failure_count_threshold(0.55, 20), 11);
    }

    #[test]
    fn exact_matches_lattice() {
        let params = RiskParameters::new(
            vec![
                ModelErrorProfile::new(0.1, 0.5, 3).unwrap(),
                ModelErrorProfile::new(0.3, 0.0, 2).unwrap(),
                ModelErrorProfile::new(0.2, 0.2, 4).unwrap(),
            ],
            0.6,
            1e-3,
        )
        .unwrap();
        let exact = failure_probability_exact(&params).unwrap();
        let lattice = lattice_failure(&params);
        assert!((exact - lattice).abs() <= 1e-14 * lattice.max(1e-300) + 1e-18, "{exact} vs {lattice}");
    }

    #[test]
    fn exact_tau_one_is_all_divergent() {
        let params = RiskParameters::new(
            vec![
                ModelErrorProfile::new(0.1, 0.5, 3).unwrap(),
                ModelErrorProfile::new(0.4, 0.1, 2).unwrap(),
            ],
            1.0,
            1e-3,
        )
        .unwrap();
        let expected = beta_binomial_pmf(3, 3, 0.1, 0.5).unwrap() * beta_binomial_pmf(2, 2, 0.4, 0.1).unwrap();
        let got = failure_probability_exact(&params).unwrap();
        assert!((got - expected).abs() < 1e-15 * expected.max(1.0));
    }

    #[test]
    fn illustrative_orders_of_magnitude() {
        let indep = failure_probability_exact(&RiskParameters::homogeneous(4, 4, 0.1, 1e-10, 0.7, 1e-4).unwrap()).unwrap();
        let corr = failure_probability_exact(&RiskParameters::homogeneous(4, 4, 0.1, 0.5, 0.7, 1e-4).unwrap()).unwrap();
        assert!((indep / 1e-8).log10().abs() <= 1.0, "{indep}");
        assert!((corr / 1e-4).log10().abs() <= 1.0, "{corr}");
    }

    #[test]
    fn ceiling_enforced() {
        let params = RiskParameters::homogeneous(3, 100, 0.1, 0.2, 0.7, 1e-4).unwrap();
        assert_eq!(
            failure_probability_exact(&params),
            Err(RiskError::EnumerationCeilingExceeded { total: 300, ceiling: 256 })
        );
        assert!(failure_probability_exact_with_ceiling(&params, 300).is_ok());
    }

    #[test]
    fn mc_examples() {
        let tiny = RiskParameters::homogeneous(2, 3, 1e-6, 0.0, 0.7, 1e-4).unwrap();
        assert_eq!(failure_probability_mc(&tiny, 10_000, 7).unwrap().estimate, 0.0);

        let params = RiskParameters::new(
            vec![
                ModelErrorProfile::new(0.2, 0.3, 3).unwrap(),
                ModelErrorProfile::new(0.25, 0.1, 3).unwrap(),
            ],
            0.5,
            1e-2,
        )
        .unwrap();
        let exact = failure_probability_exact(&params).unwrap();
        let a = failure_probability_mc(&params, 200_000, 11).unwrap();
        let b = failure_probability_mc(&params, 200_000, 11).unwrap();
        assert_eq!(a, b);
        assert!((a.estimate - exact).abs() <= 3.0 * a.std_error, "{a:?} vs {exact}");
        let c = failure_probability_mc(&params, 200_000, 12).unwrap();
        assert_ne!(a.failures, c.failures);
        assert_eq!(failure_probability_mc(&params, 999, 1), Err(RiskError::TooFewTrials(999)));
    }

    #[test]
    fn n_eff_examples() {
        assert_eq!(effective_sample_size(4, 4, 0.0), 16.0);
        assert_eq!(effective_sample_size(4, 4, 1.0), 4.0);
        assert!((effective_sample_size(4, 4, 0.5) - 6.4).abs() < 1e-12);
    }

    #[test]
    fn hoeffding_examples() {
        let b = hoeffding_bound(16.0, 0.7, 0.1).unwrap();
        assert!((b - (-11.52f64).exp()).abs() < 1e-18);
        assert!((b - 9.9e-6).abs() < 0.05e-6);
        assert_eq!(hoeffding_bound(0.0, 0.7, 0.1).unwrap(), 1.0);
        let narrow = hoeffding_bound(10.0, 0.4, 0.2).unwrap().ln();
        let wide = hoeffding_bound(10.0, 0.6, 0.2).unwrap().ln();
        assert!((wide / narrow - 4.0).abs() < 1e-12);
        assert!(matches!(hoeffding_bound(10.0, 0.1, 0.1), Err(RiskError::InfeasibleThreshold { .. })));
    }

    #[test]
    fn required_samples_examples() {
        let bound = required_samples_bound(4, 0.7, 0.1, 0.0, 1e-4).unwrap().unwrap();
        assert!((bound - 3.198).abs() < 1e-3);
        assert_eq!(required_samples(4, 0.7, 0.1, 0.0, 1e-4).unwrap(), SampleRequirement::Samples(4));
        assert_eq!(required_samples(4, 0.7, 0.1, 0.5, 1e-4).unwrap(), SampleRequirement::Infeasible);
        assert_eq!(required_samples(4, 0.7, 0.1, 0.3, 0.9).unwrap(), SampleRequirement::Samples(1));
        assert!(required_samples(4, 0.1, 0.1, 0.0, 0.1).is_err());
    }

    #[test]
    fn required_samples_reverifies() {
        for k in 1..=6 {
            for &(tau, mu) in &[(0.7, 0.1), (0.6, 0.3), (0.9, 0.05), (0.55, 0.2)] {
                for &rho in &[0.0, 0.05, 0.2] {
                    for &eps in &[1e-2, 1e-4, 1e-6] {
                        if let SampleRequirement::Samples(m) = required_samples(k, tau, mu, rho, eps).unwrap() {
                            let b = hoeffding_bound(effective_sample_size(k, m, rho), tau, mu).unwrap();
                            assert!(b <= eps);
                            if m > 1 {
                                let prev = hoeffding_bound(effective_sample_size(k, m - 1, rho), tau, mu).unwrap();
                                assert!(prev > eps, "M not minimal: k={k} tau={tau} mu={mu} rho={rho} eps={eps}");
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn estimate_side_by_side() {
        let params = RiskParameters::homogeneous(4, 4, 0.1, 0.0, 0.7, 1e-4).unwrap();
        let est = estimate_failure(&params, None, DEFAULT_ENUMERATION_CEILING, Some((10_000, 3))).unwrap();
        assert_eq!(est.n, 16);
        assert_eq!(est.n_eff, 16.0);
        assert!(est.exact.unwrap() < est.hoeffding);
        assert!(est.monte_carlo.is_some());
        let big = RiskParameters::homogeneous(3, 100, 0.1, 0.2, 0.7, 1e-4).unwrap();
        assert_eq!(estimate_failure(&big, None, 256, None).unwrap().exact, None);
    }

    #[test]
    fn monotone_in_tau_and_mu() {
        let taus = [0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
        for &rho in &[0.0, 0.3] {
            let mut prev = f64::INFINITY;
            for &tau in &taus {
                let p = failure_probability_exact(&RiskParameters::homogeneous(3, 4, 0.2, rho, tau, 0.1).unwrap()).unwrap();
                assert!(p <= prev * (1.0 + 1e-12));
                prev = p;
            }
            let mut prev = 0.0;
            for &mu in &[0.05, 0.1, 0.2, 0.4, 0.6] {
                let p = failure_probability_exact(&RiskParameters::homogeneous(3, 4, mu, rho, 0.7, 0.1).unwrap()).unwrap();
                assert!(p >= prev * (1.0 - 1e-12));
                prev = p;
            }
        }
    }
}
