//! Hybrid-utility MBR selection over a candidate pool.
//!
//! Every pair of candidates is scored with
//! `α·max(0, cos(φ(cᵢ), φ(cⱼ))) + (1−α)·ROUGE-L(cᵢ, cⱼ)`; each candidate's
//! consensus score is its mean utility against the rest of the pool, and the
//! highest-scoring candidate is returned unless its score falls below the
//! threshold τ, in which case the pool abstains.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{cosine, Embedder, EmbeddingError, EmbeddingVector};
use crate::textsim::{rouge_l, tokenize, TokenSequence};

/// α used when none is configured.
pub const DEFAULT_ALPHA: f64 = 0.6;
/// α of the production preset.
pub const PRODUCTION_ALPHA: f64 = 0.65;
/// τ used when none is configured.
pub const DEFAULT_TAU: f64 = 0.8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConsensusError {
    #[error("pool has {0} candidate(s); consensus needs at least 2")]
    PoolTooSmall(usize),
    #[error("no embedding for candidate {0}")]
    MissingEmbedding(usize),
    #[error("embedding failed for candidates {indices:?}: {source}")]
    Embedding {
        indices: Vec<usize>,
        #[source]
        source: EmbeddingError,
    },
    #[error("alpha must lie in [0, 1], got {0}")]
    InvalidAlpha(f64),
    #[error("tau must lie in [0, 1], got {0}")]
    InvalidTau(f64),
    #[error("invalid candidate pool: {0}")]
    InvalidPool(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub text: String,
    pub model_id: String,
    pub temperature: f64,
}

impl Candidate {
    pub fn new(text: impl Into<String>, model_id: impl Into<String>, temperature: f64) -> Self {
        Self {
            text: text.into(),
            model_id: model_id.into(),
            temperature,
        }
    }
}

/// Candidates generated for one prompt. A candidate's index is its position.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePool {
    prompt_id: String,
    candidates: Vec<Candidate>,
}

impl CandidatePool {
    pub fn new(prompt_id: impl Into<String>, candidates: Vec<Candidate>) -> Result<Self, ConsensusError> {
        if candidates.is_empty() {
            return Err(ConsensusError::InvalidPool("pool is empty".into()));
        }
        for (i, c) in candidates.iter().enumerate() {
            if !(0.0..=2.0).contains(&c.temperature) {
                return Err(ConsensusError::InvalidPool(format!(
                    "candidate {i} has temperature {} outside [0, 2]",
                    c.temperature
                )));
            }
        }
        Ok(Self {
            prompt_id: prompt_id.into(),
            candidates,
        })
    }

    /// Pool of bare texts attributed to a single anonymous model.
    pub fn from_texts<S: AsRef<str>>(prompt_id: impl Into<String>, texts: &[S]) -> Result<Self, ConsensusError> {
        Self::new(
            prompt_id,
            texts
                .iter()
                .map(|t| Candidate::new(t.as_ref(), "unknown", 0.0))
                .collect(),
        )
    }

    pub fn prompt_id(&self) -> &str {
        &self.prompt_id
    }

    pub fn candidates(&self) -> &[Candidate] {
        &self.candidates
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.candidates.iter().map(|c| c.text.as_str()).collect()
    }

    pub fn model_ids(&self) -> Vec<&str> {
        self.candidates.iter().map(|c| c.model_id.as_str()).collect()
    }
}

fn check_alpha(alpha: f64) -> Result<(), ConsensusError> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(ConsensusError::InvalidAlpha(alpha))
    }
}

fn check_tau(tau: f64) -> Result<(), ConsensusError> {
    if (0.0..=1.0).contains(&tau) {
        Ok(())
    } else {
        Err(ConsensusError::InvalidTau(tau))
    }
}

/// Mixes a semantic and a lexical similarity. Negative cosine is clamped to 0.
pub fn mix_utility(alpha: f64, semantic: f64, lexical: f64) -> f64 {
    (alpha * semantic.max(0.0) + (1.0 - alpha) * lexical).clamp(0.0, 1.0)
}

fn pair_utility(
    alpha: f64,
    tokens: (&TokenSequence, &TokenSequence),
    embeddings: (&EmbeddingVector, &EmbeddingVector),
) -> Result<f64, EmbeddingError> {
    let semantic = cosine(embeddings.0, embeddings.1)?;
    Ok(mix_utility(alpha, semantic, rouge_l(tokens.0, tokens.1)))
}

/// Hybrid utility between candidates `i` and `j` of `pool`, given one
/// embedding per candidate (indexed like the pool).
pub fn hybrid_utility(
    pool: &CandidatePool,
    i: usize,
    j: usize,
    alpha: f64,
    embeddings: &[EmbeddingVector],
) -> Result<f64, ConsensusError> {
    check_alpha(alpha)?;
    let n = pool.len();
    if i >= n || j >= n {
        return Err(ConsensusError::InvalidPool(format!("index out of range for pool of {n}")));
    }
    if i == j {
        return Err(ConsensusError::InvalidPool("utility of a candidate with itself is undefined".into()));
    }
    let ei = embeddings.get(i).ok_or(ConsensusError::MissingEmbedding(i))?;
    let ej = embeddings.get(j).ok_or(ConsensusError::MissingEmbedding(j))?;
    let ti = tokenize(&pool.candidates[i].text);
    let tj = tokenize(&pool.candidates[j].text);
    pair_utility(alpha, (&ti, &tj), (ei, ej)).map_err(|source| ConsensusError::Embedding {
        indices: vec![i, j],
        source,
    })
}

/// Symmetric N×N pairwise utilities with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityMatrix {
    n: usize,
    values: Vec<f64>,
    alpha: f64,
}

impl UtilityMatrix {
    /// Builds a matrix from row-major values. Used by callers that compute
    /// utilities elsewhere.
    pub fn from_values(n: usize, values: Vec<f64>, alpha: f64) -> Result<Self, ConsensusError> {
        check_alpha(alpha)?;
        if values.len() != n * n {
            return Err(ConsensusError::InvalidPool(format!(
                "expected {} matrix entries, got {}",
                n * n,
                values.len()
            )));
        }
        for i in 0..n {
            for j in 0..n {
                let v = values[i * n + j];
                if i == j && v != 0.0 {
                    return Err(ConsensusError::InvalidPool("diagonal must be zero".into()));
                }
                if !(0.0..=1.0).contains(&v) || (v - values[j * n + i]).abs() > 1e-9 {
                    return Err(ConsensusError::InvalidPool(format!("entry ({i},{j}) = {v} breaks range or symmetry")));
                }
            }
        }
        Ok(Self { n, values, alpha })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }
}

/// Embeds the whole pool in one batch, then scores each unordered pair once.
pub fn build_utility_matrix(
    pool: &CandidatePool,
    alpha: f64,
    embedder: &dyn Embedder,
) -> Result<UtilityMatrix, ConsensusError> {
    check_alpha(alpha)?;
    let n = pool.len();
    if n < 2 {
        return Err(ConsensusError::PoolTooSmall(n));
    }
    let embeddings = embedder.embed_batch(&pool.texts()).map_err(|source| {
        let indices = match &source {
            EmbeddingError::ZeroVector { index } => vec![*index],
            _ => (0..n).collect(),
        };
        ConsensusError::Embedding { indices, source }
    })?;
    if embeddings.len() != n {
        return Err(ConsensusError::MissingEmbedding(embeddings.len().min(n)));
    }
    let tokens: Vec<TokenSequence> = pool.candidates.iter().map(|c| tokenize(&c.text)).collect();

    let upper: Vec<(usize, usize, f64)> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| ((i + 1)..n).map(move |j| (i, j)))
        .map(|(i, j)| {
            pair_utility(alpha, (&tokens[i], &tokens[j]), (&embeddings[i], &embeddings[j]))
                .map(|u| (i, j, u))
                .map_err(|source| ConsensusError::Embedding {
                    indices: vec![i, j],
                    source,
                })
        })
        .collect::<Result<_, _>>()?;

    let mut values = vec![0.0; n * n];
    for (i, j, u) in upper {
        values[i * n + j] = u;
        values[j * n + i] = u;
    }
    Ok(UtilityMatrix { n, values, alpha })
}

/// Row means over off-diagonal entries.
///
/// Entries are summed in ascending order, so candidates whose rows hold the
/// same multiset of utilities (duplicated texts) get bit-identical scores and
/// ties resolve by index rather than by rounding noise.
pub fn consensus_scores(u: &UtilityMatrix) -> Result<Vec<f64>, ConsensusError> {
    let n = u.n;
    if n < 2 {
        return Err(ConsensusError::PoolTooSmall(n));
    }
    Ok((0..n)
        .map(|i| {
            let mut row: Vec<f64> = u
                .row(i)
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, v)| *v)
                .collect();
            row.sort_by(f64::total_cmp);
            (row.iter().sum::<f64>() / (n - 1) as f64).clamp(0.0, 1.0)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Selected(usize),
    Abstain,
}

impl Verdict {
    pub fn selected(self) -> Option<usize> {
        match self {
            Verdict::Selected(k) => Some(k),
            Verdict::Abstain => None,
        }
    }

    pub fn is_abstain(self) -> bool {
        matches!(self, Verdict::Abstain)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusResult {
    pub verdict: Verdict,
    pub scores: Vec<f64>,
    pub threshold: f64,
    /// Score of the selected candidate; absent on abstention.
    pub winner_score: Option<f64>,
}

impl ConsensusResult {
    /// Applies the consensus gate to precomputed scores. Ties go to the
    /// lowest index.
    pub fn from_scores(scores: Vec<f64>, tau: f64) -> Result<Self, ConsensusError> {
        check_tau(tau)?;
        if scores.len() < 2 {
            return Err(ConsensusError::PoolTooSmall(scores.len()));
        }
        let mut best = 0;
        for (i, s) in scores.iter().enumerate().skip(1) {
            if *s > scores[best] {
                best = i;
            }
        }
        let top = scores[best];
        let (verdict, winner_score) = if top >= tau {
            (Verdict::Selected(best), Some(top))
        } else {
            (Verdict::Abstain, None)
        };
        Ok(Self {
            verdict,
            scores,
            threshold: tau,
            winner_score,
        })
    }

    pub fn n(&self) -> usize {
        self.scores.len()
    }

    pub fn max_score(&self) -> f64 {
        self.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Runs the full selection: embed, build utilities, score, gate.
pub fn select(
    pool: &CandidatePool,
    alpha: f64,
    tau: f64,
    embedder: &dyn Embedder,
) -> Result<ConsensusResult, ConsensusError> {
    check_tau(tau)?;
    let u = build_utility_matrix(pool, alpha, embedder)?;
    ConsensusResult::from_scores(consensus_scores(&u)?, tau)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDivergence {
    /// Mean of (1 − Sᵢ) over the model's candidates.
    pub divergence: f64,
    pub samples: usize,
    pub pools: usize,
    /// Fraction of the model's candidates scoring below τ.
    pub mu_hat: f64,
    /// Within-pool correlation of the divergence indicator; absent when no
    /// pool held two samples of the model or the indicator never varied.
    pub rho_hat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub models: BTreeMap<String, ModelDivergence>,
    /// Models for which ρ̂ could not be estimated.
    pub insufficient_data: Vec<String>,
}

#[derive(Debug, Default, Clone)]
struct ModelTally {
    divergence_sum: f64,
    samples: usize,
    diverged: usize,
    pools: usize,
    // double-entry pair sums of the binary indicator; x and y marginals coincide
    pairs: f64,
    pair_sum: f64,
    pair_cross: f64,
}

/// Streams (model ids, scores, τ) records into a [`DivergenceReport`].
#[derive(Debug, Default, Clone)]
pub struct DivergenceAccumulator {
    tallies: BTreeMap<String, ModelTally>,
}

impl DivergenceAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add<S: AsRef<str>>(&mut self, model_ids: &[S], scores: &[f64], tau: f64) -> Result<(), ConsensusError> {
        if model_ids.len() != scores.len() {
            return Err(ConsensusError::InvalidPool(format!(
                "{} model ids for {} scores",
                model_ids.len(),
                scores.len()
            )));
        }
        let mut per_model: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for (m, s) in model_ids.iter().zip(scores) {
            per_model.entry(m.as_ref()).or_default().push(*s);
        }
        for (model, model_scores) in per_model {
            let t = self.tallies.entry(model.to_string()).or_default();
            t.pools += 1;
            let flags: Vec<f64> = model_scores.iter().map(|s| if *s < tau { 1.0 } else { 0.0 }).collect();
            for (s, x) in model_scores.iter().zip(&flags) {
                t.divergence_sum += (1.0 - s).clamp(0.0, 1.0);
                t.samples += 1;
                t.diverged += *x as usize;
            }
            let m = flags.len() as f64;
            if flags.len() >= 2 {
                let ones: f64 = flags.iter().sum();
                // ordered pairs (i, j), i ≠ j
                t.pairs += m * (m - 1.0);
                t.pair_sum += ones * (m - 1.0);
                t.pair_cross += ones * (ones - 1.0);
            }
        }
        Ok(())
    }

    pub fn add_result(&mut self, pool: &CandidatePool, result: &ConsensusResult) -> Result<(), ConsensusError> {
        self.add(&pool.model_ids(), &result.scores, result.threshold)
    }

    pub fn report(&self) -> DivergenceReport {
        let mut models = BTreeMap::new();
        let mut insufficient_data = Vec::new();
        for (id, t) in &self.tallies {
            let rho_hat = if t.pairs > 0.0 {
                let n = t.pairs;
                let var = n * t.pair_sum - t.pair_sum * t.pair_sum;
                if var > 0.0 {
                    Some(((n * t.pair_cross - t.pair_sum * t.pair_sum) / var).clamp(0.0, 1.0))
                } else {
                    None
                }
            } else {
                None
            };
            if rho_hat.is_none() {
                insufficient_data.push(id.clone());
            }
            models.insert(
                id.clone(),
                ModelDivergence {
                    divergence: t.divergence_sum / t.samples as f64,
                    samples: t.samples,
                    pools: t.pools,
                    mu_hat: t.diverged as f64 / t.samples as f64,
                    rho_hat,
                },
            );
        }
        DivergenceReport {
            models,
            insufficient_data,
        }
    }
}

pub fn divergence_report(results: &[(CandidatePool, ConsensusResult)]) -> Result<DivergenceReport, ConsensusError> {
    if results.is_empty() {
        return Err(ConsensusError::InvalidPool("divergence report needs at least one result".into()));
    }
    let mut acc = DivergenceAccumulator::new();
    for (pool, result) in results {
        acc.add_result(pool, result)?;
    }
    Ok(acc.report())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::DeterministicEmbedder;

    const A: &str = "paris is the capital of france";
    const B: &str = "berlin hosts many museums";

    fn aab() -> CandidatePool {
        CandidatePool::from_texts("q", &[A, A, B]).unwrap()
    }

    fn emb() -> DeterministicEmbedder {
        DeterministicEmbedder::default()
    }

    #[test]
    fn fixture_is_orthogonal() {
        let e = emb();
        let v = e.embed_batch(&[A, B]).unwrap();
        assert_eq!(cosine(&v[0], &v[1]).unwrap(), 0.0);
    }

    #[test]
    fn mix_examples() {
        assert!((mix_utility(0.6, 0.5, 0.0) - 0.30).abs() < 1e-12);
        assert!((mix_utility(0.6, 0.9, 0.5) - 0.74).abs() < 1e-12);
        assert_eq!(mix_utility(0.6, -0.8, 0.5), 0.2);
    }

    #[test]
    fn hybrid_identical_texts() {
        let pool = aab();
        let v = emb().embed_batch(&pool.texts()).unwrap();
        for alpha in [0.0, 0.3, 0.6, 1.0] {
            assert!((hybrid_utility(&pool, 0, 1, alpha, &v).unwrap() - 1.0).abs() < 1e-12);
        }
        assert_eq!(
            hybrid_utility(&pool, 0, 2, 0.6, &v[..2]),
            Err(ConsensusError::MissingEmbedding(2))
        );
        assert!(hybrid_utility(&pool, 1, 1, 0.6, &v).is_err());
        assert_eq!(hybrid_utility(&pool, 0, 1, 1.5, &v), Err(ConsensusError::InvalidAlpha(1.5)));
    }

    #[test]
    fn matrix_for_aab() {
        let u = build_utility_matrix(&aab(), 0.6, &emb()).unwrap();
        assert_eq!(u.get(0, 0), 0.0);
        assert!((u.get(0, 1) - 1.0).abs() < 1e-12);
        assert_eq!(u.get(0, 2), 0.0);
        assert_eq!(u.get(1, 2), 0.0);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(u.get(i, j), u.get(j, i));
            }
        }
        let s = consensus_scores(&u).unwrap();
        assert!((s[0] - 0.5).abs() < 1e-12 && (s[1] - 0.5).abs() < 1e-12);
        assert_eq!(s[2], 0.0);
    }

    #[test]
    fn two_identical_texts() {
        let pool = CandidatePool::from_texts("q", &[A, A]).unwrap();
        let u = build_utility_matrix(&pool, 0.6, &emb()).unwrap();
        assert!((u.get(0, 1) - 1.0).abs() < 1e-12);
        assert!((u.get(1, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scores_examples() {
        let u = UtilityMatrix::from_values(2, vec![0.0, 0.37, 0.37, 0.0], 0.6).unwrap();
        assert_eq!(consensus_scores(&u).unwrap(), vec![0.37, 0.37]);
        let pool = CandidatePool::from_texts("q", &[A; 5]).unwrap();
        let r = select(&pool, 0.6, 1.0, &emb()).unwrap();
        assert!(r.scores.iter().all(|s| (s - 1.0).abs() < 1e-12));
        assert!(UtilityMatrix::from_values(2, vec![0.0, 0.3, 0.4, 0.0], 0.6).is_err());
        assert!(UtilityMatrix::from_values(2, vec![0.1, 0.3, 0.3, 0.0], 0.6).is_err());
    }

    #[test]
    fn select_examples() {
        let r = select(&aab(), 0.6, 0.0, &emb()).unwrap();
        assert_eq!(r.verdict, Verdict::Selected(0));
        assert!((r.winner_score.unwrap() - 0.5).abs() < 1e-12);
        let r = select(&aab(), 0.6, 0.8, &emb()).unwrap();
        assert_eq!(r.verdict, Verdict::Abstain);
        assert_eq!(r.winner_score, None);
        assert_eq!(r.threshold, 0.8);
    }

    #[test]
    fn select_errors() {
        let single = CandidatePool::from_texts("q", &[A]).unwrap();
        assert_eq!(select(&single, 0.6, 0.5, &emb()), Err(ConsensusError::PoolTooSmall(1)));
        assert_eq!(select(&aab(), 0.6, 1.2, &emb()), Err(ConsensusError::InvalidTau(1.2)));
        let blank = CandidatePool::from_texts("q", &[A, "   "]).unwrap();
        match select(&blank, 0.6, 0.5, &emb()) {
            Err(ConsensusError::Embedding { indices, .. }) => assert_eq!(indices, vec![1]),
            other => panic!("unexpected {other:?}"),
        }
        assert!(CandidatePool::new("q", vec![]).is_err());
        assert!(CandidatePool::new("q", vec![Candidate::new("x", "m", 2.5)]).is_err());
    }

    #[test]
    fn tie_goes_to_lowest_index() {
        let r = ConsensusResult::from_scores(vec![0.2, 0.7, 0.7, 0.1], 0.5).unwrap();
        assert_eq!(r.verdict, Verdict::Selected(1));
        let r = ConsensusResult::from_scores(vec![0.4, 0.4], 0.4).unwrap();
        assert_eq!(r.verdict, Verdict::Selected(0));
    }

    #[test]
    fn duplicate_rows_score_identically() {
        let texts = ["x y z", "a b c d", "q r", "a b c d", "a b x"];
        let pool = CandidatePool::from_texts("q", &texts).unwrap();
        let u = build_utility_matrix(&pool, 0.6, &emb()).unwrap();
        let s = consensus_scores(&u).unwrap();
        assert_eq!(s[1].to_bits(), s[3].to_bits());
    }

    fn pool_with_models(prompt: &str, entries: &[(&str, &str)]) -> CandidatePool {
        CandidatePool::new(
            prompt,
            entries.iter().map(|(t, m)| Candidate::new(*t, *m, 0.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn divergence_all_identical() {
        let pool = pool_with_models("p", &[(A, "m1"), (A, "m1"), (A, "m2")]);
        let result = select(&pool, 0.6, 0.8, &emb()).unwrap();
        let report = divergence_report(&[(pool, result)]).unwrap();
        for m in report.models.values() {
            assert!(m.divergence.abs() < 1e-12);
            assert_eq!(m.mu_hat, 0.0);
        }
        // indicator never varies, so ρ̂ cannot be estimated
        assert_eq!(report.insufficient_data, vec!["m1".to_string(), "m2".to_string()]);
    }

    #[test]
    fn divergence_always_diverging_model() {
        let mut acc = DivergenceAccumulator::new();
        acc.add(&["good", "good", "bad", "bad"], &[0.9, 0.9, 0.1, 0.2], 0.5).unwrap();
        acc.add(&["good", "good", "bad", "bad"], &[0.8, 0.95, 0.3, 0.05], 0.5).unwrap();
        let report = acc.report();
        assert_eq!(report.models["bad"].mu_hat, 1.0);
        assert_eq!(report.models["good"].mu_hat, 0.0);
        assert!((report.models["bad"].divergence - (0.9 + 0.8 + 0.7 + 0.95) / 4.0).abs() < 1e-12);
        assert_eq!(report.models["bad"].samples, 4);
        assert_eq!(report.models["bad"].pools, 2);
    }

    #[test]
    fn divergence_correlated_pairs() {
        // Pool 1: both of k's samples diverge. Pool 2: neither does.
        // Double-entry pairs (1,1),(1,1),(0,0),(0,0) give Pearson r = 1.
        let mut acc = DivergenceAccumulator::new();
        acc.add(&["k", "k", "o"], &[0.1, 0.2, 0.9], 0.5).unwrap();
        acc.add(&["k", "k", "o"], &[0.9, 0.7, 0.9], 0.5).unwrap();
        let r = acc.report();
        assert_eq!(r.models["k"].rho_hat, Some(1.0));
        assert_eq!(r.models["k"].mu_hat, 0.5);
        assert!(r.insufficient_data.contains(&"o".to_string()));

        // Anti-correlated within pool clamps to 0.
        let mut acc = DivergenceAccumulator::new();
        acc.add(&["k", "k"], &[0.1, 0.9], 0.5).unwrap();
        acc.add(&["k", "k"], &[0.9, 0.1], 0.5).unwrap();
        assert_eq!(acc.report().models["k"].rho_hat, Some(0.0));
    }

    #[test]
    fn divergence_requires_results() {
        assert!(divergence_report(&[]).is_err());
        let mut acc = DivergenceAccumulator::new();
        assert!(acc.add(&["a"], &[0.1, 0.2], 0.5).is_err());
    }
}
