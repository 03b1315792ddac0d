//! Oracle estimator, support posterior weights and exact MMSE/MAP.
//!
//! For a support `S` with Gaussian coefficients the measurement is Gaussian
//! with covariance `C_S = sigma_alpha^2 D_S D_S^T + sigma_nu^2 I`. Everything
//! is evaluated through `Q_S = I / sigma_alpha^2 + D_S^T D_S / sigma_nu^2`,
//! which is only `|S| x |S|`:
//!
//! * `y^T C_S^{-1} y = ||y||^2 / sigma_nu^2 - ||L^{-1} D_S^T y||^2 / sigma_nu^4`
//! * `log det C_S = 2n log sigma_nu + 2|S| log sigma_alpha + log det Q_S`
//!
//! where `L` is the Cholesky factor of `Q_S`. Gaussian normalizing constants
//! (powers of `2 pi`) are dropped throughout since only ratios matter.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::linalg::{self, backward_substitute, cholesky_in_place, forward_substitute};
use crate::model::{for_each_support, CoefficientModel, Dictionary, PriorSpec, SupportSet};

/// Unnormalized log posterior `log P(y|S) + log P(S)` of one support.
#[derive(Clone, Debug, PartialEq)]
pub struct SupportWeight {
    pub support: SupportSet,
    pub log_weight: f64,
}

/// `Q_S` and its Cholesky factor for one support.
pub struct OracleContext<'a> {
    dict: &'a Dictionary,
    model: CoefficientModel,
    support: SupportSet,
    q: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    log_det_q: f64,
}

impl<'a> OracleContext<'a> {
    pub fn new(dict: &'a Dictionary, model: CoefficientModel, support: SupportSet) -> Result<Self> {
        support.check_range(dict.m())?;
        let k = support.len();
        let gram = dict.gram();
        let idx = support.indices();
        let inv_a2 = 1.0 / (model.sigma_alpha * model.sigma_alpha);
        let inv_n2 = 1.0 / (model.sigma_nu * model.sigma_nu);
        let q = DMatrix::from_fn(k, k, |r, c| gram[(idx[r], idx[c])] * inv_n2 + if r == c { inv_a2 } else { 0.0 });
        let chol =
            Cholesky::new(q.clone()).ok_or_else(|| Error::InvalidArgument("Q_S is not positive definite".into()))?;
        let log_det_q = chol.l_dirty().diagonal().iter().take(k).map(|v| 2.0 * v.ln()).sum();
        Ok(Self { dict, model, support, q, chol, log_det_q })
    }

    pub fn support(&self) -> &SupportSet {
        &self.support
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn log_det_q(&self) -> f64 {
        self.log_det_q
    }

    /// `log det C_S` through the `Q_S` identity.
    pub fn log_det_c(&self) -> f64 {
        let n = self.dict.n() as f64;
        let k = self.support.len() as f64;
        2.0 * n * self.model.sigma_nu.ln() + 2.0 * k * self.model.sigma_alpha.ln() + self.log_det_q
    }

    fn projected(&self, y: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.support.len(),
            self.support.indices().iter().map(|&i| linalg::dot(self.dict.atom(i), y.as_slice())),
        )
    }

    /// Conditional mean of `alpha` given `y` and this support; zero elsewhere.
    pub fn estimate(&self, y: &DVector<f64>) -> DVector<f64> {
        let coeffs = self.chol.solve(&self.projected(y)) / (self.model.sigma_nu * self.model.sigma_nu);
        scatter(self.dict.m(), &self.support, coeffs.as_slice())
    }

    /// `-1/2 log det C_S - 1/2 y^T C_S^{-1} y`.
    pub fn log_likelihood(&self, y: &DVector<f64>) -> f64 {
        let mut z = self.projected(y);
        self.chol.l_dirty().solve_lower_triangular_mut(&mut z);
        let s2 = self.model.sigma_nu * self.model.sigma_nu;
        let quad = y.norm_squared() / s2 - z.norm_squared() / (s2 * s2);
        -0.5 * self.log_det_c() - 0.5 * quad
    }
}

pub(crate) fn scatter(m: usize, support: &SupportSet, values: &[f64]) -> DVector<f64> {
    let mut out = DVector::zeros(m);
    for (&i, &v) in support.indices().iter().zip(values) {
        out[i] = v;
    }
    out
}

pub fn oracle_estimate(
    dict: &Dictionary,
    model: CoefficientModel,
    support: &SupportSet,
    y: &DVector<f64>,
) -> Result<DVector<f64>> {
    dict.check_signal(y)?;
    Ok(OracleContext::new(dict, model, support.clone())?.estimate(y))
}

/// Least-squares projection of `y` onto `span(D_S)`; atoms numerically
/// dependent on earlier ones in the support receive 0.
pub fn ls_estimate(dict: &Dictionary, support: &SupportSet, y: &DVector<f64>) -> Result<DVector<f64>> {
    dict.check_signal(y)?;
    support.check_range(dict.m())?;
    let fit = linalg::least_squares(dict, support.indices(), y.as_slice());
    Ok(scatter(dict.m(), support, &fit.coeffs))
}

pub fn log_support_weight(
    dict: &Dictionary,
    prior: &PriorSpec,
    support: &SupportSet,
    y: &DVector<f64>,
) -> Result<SupportWeight> {
    dict.check_signal(y)?;
    prior.check_atoms(dict.m())?;
    let ctx = OracleContext::new(dict, prior.coefficient_model(), support.clone())?;
    Ok(SupportWeight {
        support: support.clone(),
        log_weight: ctx.log_likelihood(y) + prior.log_prior(support, dict.m()),
    })
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Normalized weights from log weights; all-`-inf` input yields all zeros.
pub fn softmax(log_weights: &[f64]) -> Vec<f64> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return vec![0.0; log_weights.len()];
    }
    let w: Vec<f64> = log_weights.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// Reusable per-signal scorer working on `beta = D^T y` and raw scratch
/// buffers, so scoring a support costs `O(|S|^3)` and allocates nothing.
pub(crate) struct SupportScorer<'a> {
    gram: &'a DMatrix<f64>,
    beta: Vec<f64>,
    y_norm_sq: f64,
    n: usize,
    inv_a2: f64,
    inv_n2: f64,
    ln_sigma_alpha: f64,
    ln_sigma_nu: f64,
    l: Vec<f64>,
    z: Vec<f64>,
}

impl<'a> SupportScorer<'a> {
    pub(crate) fn new(dict: &'a Dictionary, model: CoefficientModel, y: &DVector<f64>) -> Self {
        Self {
            gram: dict.gram(),
            beta: dict.correlations(y).as_slice().to_vec(),
            y_norm_sq: y.norm_squared(),
            n: dict.n(),
            inv_a2: 1.0 / (model.sigma_alpha * model.sigma_alpha),
            inv_n2: 1.0 / (model.sigma_nu * model.sigma_nu),
            ln_sigma_alpha: model.sigma_alpha.ln(),
            ln_sigma_nu: model.sigma_nu.ln(),
            l: Vec::new(),
            z: Vec::new(),
        }
    }

    /// Log likelihood `-1/2 log det C_S - 1/2 y^T C_S^{-1} y`; leaves the
    /// Cholesky factor and `L^{-1} D_S^T y` in scratch for [`Self::oracle_into`].
    pub(crate) fn log_likelihood(&mut self, idx: &[usize]) -> f64 {
        let k = idx.len();
        self.l.clear();
        self.l.resize(k * k, 0.0);
        for r in 0..k {
            for c in 0..=r {
                let v = self.gram[(idx[r], idx[c])] * self.inv_n2 + if r == c { self.inv_a2 } else { 0.0 };
                self.l[r * k + c] = v;
                self.l[c * k + r] = v;
            }
        }
        let log_det_q = cholesky_in_place(&mut self.l, k).expect("Q_S is positive definite");
        self.z.clear();
        self.z.extend(idx.iter().map(|&i| self.beta[i]));
        forward_substitute(&self.l, k, &mut self.z);
        let zz = linalg::norm_sq(&self.z);
        let quad = self.y_norm_sq * self.inv_n2 - zz * self.inv_n2 * self.inv_n2;
        let log_det_c = 2.0 * self.n as f64 * self.ln_sigma_nu + 2.0 * k as f64 * self.ln_sigma_alpha + log_det_q;
        -0.5 * log_det_c - 0.5 * quad
    }

    /// Oracle coefficients for the support last passed to `log_likelihood`.
    pub(crate) fn oracle_into(&self, out: &mut Vec<f64>) {
        let k = self.z.len();
        out.clear();
        out.extend_from_slice(&self.z);
        backward_substitute(&self.l, k, out);
        for v in out.iter_mut() {
            *v *= self.inv_n2;
        }
    }
}

/// Posterior-weighted combination of oracle estimates; supports are visited
/// in the order given and the result depends only on that sequence.
struct WeightedSum {
    m: usize,
    log_weights: Vec<f64>,
    indices: Vec<usize>,
    coeffs: Vec<f64>,
    offsets: Vec<usize>,
}

impl WeightedSum {
    fn new(m: usize) -> Self {
        Self { m, log_weights: Vec::new(), indices: Vec::new(), coeffs: Vec::new(), offsets: vec![0] }
    }

    fn push(&mut self, log_weight: f64, idx: &[usize], coeffs: &[f64]) {
        self.log_weights.push(log_weight);
        self.indices.extend_from_slice(idx);
        self.coeffs.extend_from_slice(coeffs);
        self.offsets.push(self.indices.len());
    }

    fn finish(self) -> Result<DVector<f64>> {
        if self.log_weights.is_empty() {
            return Err(Error::NoSupports);
        }
        let weights = softmax(&self.log_weights);
        let mut out = DVector::zeros(self.m);
        for (s, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for p in self.offsets[s]..self.offsets[s + 1] {
                out[self.indices[p]] += w * self.coeffs[p];
            }
        }
        Ok(out)
    }
}

/// Exact MMSE estimate: the posterior-weighted average of oracle estimates
/// over every support with positive prior probability.
pub fn exhaustive_mmse(dict: &Dictionary, prior: &PriorSpec, y: &DVector<f64>) -> Result<DVector<f64>> {
    dict.check_signal(y)?;
    let m = dict.m();
    let mut scorer = SupportScorer::new(dict, prior.coefficient_model(), y);
    let mut sum = WeightedSum::new(m);
    let mut coeffs = Vec::new();
    for_each_support(prior, m, |idx| {
        let ll = scorer.log_likelihood(idx);
        scorer.oracle_into(&mut coeffs);
        sum.push(ll + prior.log_prior_indices(idx, m), idx, &coeffs);
    })?;
    sum.finish()
}

/// Posterior-weighted average restricted to `supports`. Duplicates are
/// merged and the set is visited in canonical order, so passing all of
/// `Omega` reproduces [`exhaustive_mmse`] bit for bit.
pub fn weighted_average_over_set(
    dict: &Dictionary,
    prior: &PriorSpec,
    y: &DVector<f64>,
    supports: &[SupportSet],
) -> Result<DVector<f64>> {
    dict.check_signal(y)?;
    prior.check_atoms(dict.m())?;
    let mut set: Vec<&SupportSet> = supports.iter().collect();
    set.sort();
    set.dedup();
    let m = dict.m();
    let mut scorer = SupportScorer::new(dict, prior.coefficient_model(), y);
    let mut sum = WeightedSum::new(m);
    let mut coeffs = Vec::new();
    for s in set {
        s.check_range(m)?;
        let log_prior = prior.log_prior(s, m);
        if log_prior == f64::NEG_INFINITY {
            continue;
        }
        let ll = scorer.log_likelihood(s.indices());
        scorer.oracle_into(&mut coeffs);
        sum.push(ll + log_prior, s.indices(), &coeffs);
    }
    sum.finish()
}

/// Normalized posterior `P(S|y)` over the given supports (in the given order).
pub fn support_posterior(
    dict: &Dictionary,
    prior: &PriorSpec,
    y: &DVector<f64>,
    supports: &[SupportSet],
) -> Result<Vec<f64>> {
    dict.check_signal(y)?;
    prior.check_atoms(dict.m())?;
    if supports.is_empty() {
        return Err(Error::NoSupports);
    }
    let mut scorer = SupportScorer::new(dict, prior.coefficient_model(), y);
    let mut log_w = Vec::with_capacity(supports.len());
    for s in supports {
        s.check_range(dict.m())?;
        log_w.push(scorer.log_likelihood(s.indices()) + prior.log_prior(s, dict.m()));
    }
    Ok(softmax(&log_w))
}

/// MAP support over `Omega` by brute force on the log posterior, with the
/// oracle estimate on it. Ties go to the lexicographically first support.
pub fn exhaustive_map(dict: &Dictionary, prior: &PriorSpec, y: &DVector<f64>) -> Result<(SupportSet, DVector<f64>)> {
    dict.check_signal(y)?;
    let m = dict.m();
    let mut scorer = SupportScorer::new(dict, prior.coefficient_model(), y);
    let bernoulli = matches!(prior.support_prior, crate::model::SupportPrior::IndependentBernoulli(_));
    let mut best: Option<(f64, Vec<usize>)> = None;
    for_each_support(prior, m, |idx| {
        let mut score = scorer.log_likelihood(idx);
        // the uniform prior term of a fixed cardinality is a shared constant
        if bernoulli {
            score += prior.log_prior_indices(idx, m);
        }
        match &best {
            Some((b, _)) if score <= *b => {}
            _ => best = Some((score, idx.to_vec())),
        }
    })?;
    let (_, idx) = best.ok_or(Error::NoSupports)?;
    let support = SupportSet::new(idx);
    let mut est_scorer = SupportScorer::new(dict, prior.coefficient_model(), y);
    est_scorer.log_likelihood(support.indices());
    let mut coeffs = Vec::new();
    est_scorer.oracle_into(&mut coeffs);
    let estimate = scatter(m, &support, &coeffs);
    Ok((support, estimate))
}
