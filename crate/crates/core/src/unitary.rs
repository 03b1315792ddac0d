//! Closed-form estimators for orthonormal dictionaries.
//!
//! With `D` unitary the problem decouples over the correlations
//! `beta = D^T y`. Each entry is active with probability `p_i` and then
//! `beta_i ~ N(0, sigma_alpha^2 + sigma_nu^2)`. The MAP estimator is a hard
//! threshold at `lambda_MAP` followed by the Wiener factor `c^2`, the MMSE
//! estimator is a smooth shrinkage, and SR with hard thresholding converges
//! to a Q-function weighted shrinkage whose parameters can be tuned with
//! Stein's unbiased risk estimate.

use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};

/// Standard normal tail probability `P(Z > x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Parameters of the Bernoulli-Gaussian model on a unitary dictionary.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitaryModel {
    pub sigma_alpha: f64,
    pub sigma_nu: f64,
    /// Either one shared activity probability or one per atom.
    p: Vec<f64>,
}

impl UnitaryModel {
    pub fn new(sigma_alpha: f64, sigma_nu: f64, p: f64) -> Result<Self> {
        Self::with_probabilities(sigma_alpha, sigma_nu, vec![p])
    }

    pub fn with_probabilities(sigma_alpha: f64, sigma_nu: f64, p: Vec<f64>) -> Result<Self> {
        if !(sigma_alpha > 0.0 && sigma_alpha.is_finite() && sigma_nu > 0.0 && sigma_nu.is_finite()) {
            return invalid("sigma_alpha and sigma_nu must be positive and finite");
        }
        if p.is_empty() {
            return invalid("need at least one activity probability");
        }
        let model = Self { sigma_alpha, sigma_nu, p };
        let root = (1.0 - model.c_squared()).sqrt();
        for &pi in &model.p {
            if !(pi > 0.0 && pi < 1.0) {
                return invalid(format!("activity probability {pi} outside (0, 1)"));
            }
            let ratio = (1.0 - pi) / (pi * root);
            if ratio <= 1.0 {
                return Err(Error::ThresholdUndefined(format!(
                    "(1 - p) / (p sqrt(1 - c^2)) = {ratio:.6} <= 1 for p = {pi}; the prior is too dense \
                     for a hard-threshold MAP rule"
                )));
            }
        }
        Ok(model)
    }

    pub fn p(&self, i: usize) -> f64 {
        if self.p.len() == 1 {
            self.p[0]
        } else {
            self.p[i]
        }
    }

    pub fn c_squared(&self) -> f64 {
        let a2 = self.sigma_alpha * self.sigma_alpha;
        a2 / (a2 + self.sigma_nu * self.sigma_nu)
    }

    /// `(sqrt(2) sigma_nu / c) sqrt(log((1 - p_i) / (p_i sqrt(1 - c^2))))`.
    pub fn lambda_map(&self, i: usize) -> f64 {
        let c2 = self.c_squared();
        let p = self.p(i);
        let ratio = (1.0 - p) / (p * (1.0 - c2).sqrt());
        2f64.sqrt() * self.sigma_nu / c2.sqrt() * ratio.ln().sqrt()
    }

    /// Log odds of activity given `beta_i`.
    fn activity_logit(&self, beta: f64, i: usize) -> f64 {
        let c2 = self.c_squared();
        let p = self.p(i);
        c2 * beta * beta / (2.0 * self.sigma_nu * self.sigma_nu) + (p / (1.0 - p)).ln() + 0.5 * (1.0 - c2).ln()
    }
}

fn logistic(g: f64) -> f64 {
    if g >= 0.0 {
        1.0 / (1.0 + (-g).exp())
    } else {
        let e = g.exp();
        e / (1.0 + e)
    }
}

/// MMSE shrinkage `psi(beta)` for atom 0 (or the shared probability).
pub fn mmse_shrinkage(beta: f64, model: &UnitaryModel) -> f64 {
    mmse_shrinkage_at(beta, model, 0)
}

/// MMSE shrinkage for atom `i`: posterior activity probability times the
/// Wiener estimate `c^2 beta`.
pub fn mmse_shrinkage_at(beta: f64, model: &UnitaryModel, i: usize) -> f64 {
    logistic(model.activity_logit(beta, i)) * model.c_squared() * beta
}

/// Mean over `n ~ N(0, sigma_n^2)` of the subtractive hard threshold
/// `c^2 beta 1{|beta + n| >= lambda}`:
/// `[Q((lambda + beta)/sigma_n) + Q((lambda - beta)/sigma_n)] c^2 beta`.
/// With `sigma_n = 0` this is the plain hard threshold.
pub fn subtractive_hard_threshold_mean(beta: f64, lambda: f64, sigma_n: f64, c_squared: f64) -> f64 {
    selection_probability(beta, lambda, sigma_n) * c_squared * beta
}

/// `P(|beta + n| >= lambda)` for `n ~ N(0, sigma_n^2)`.
fn selection_probability(beta: f64, lambda: f64, sigma_n: f64) -> f64 {
    if sigma_n <= 0.0 {
        return if beta.abs() >= lambda { 1.0 } else { 0.0 };
    }
    q_function((lambda + beta) / sigma_n) + q_function((lambda - beta) / sigma_n)
}

/// Expected SURE of the subtractive hard-threshold SR estimator,
/// `sum_i h_i^2 - 2 h_i beta_i + 2 sigma_nu^2 h_i'`, with `h_i` the
/// closed-form mean above. In expectation it equals the squared error minus
/// `||alpha||^2`, so only differences between parameter choices matter.
pub fn sure_objective(beta: &[f64], lambda: f64, sigma_n: f64, model: &UnitaryModel) -> f64 {
    let c2 = model.c_squared();
    let s2 = model.sigma_nu * model.sigma_nu;
    beta.iter()
        .map(|&b| {
            let q = selection_probability(b, lambda, sigma_n);
            let h = c2 * b * q;
            let dq = if sigma_n > 0.0 {
                (normal_pdf((lambda - b) / sigma_n) - normal_pdf((lambda + b) / sigma_n)) / sigma_n
            } else {
                0.0
            };
            let dh = c2 * q + c2 * b * dq;
            h * h - 2.0 * h * b + 2.0 * s2 * dh
        })
        .sum()
}

/// Rectangular `(lambda, sigma_n)` search grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SureGrid {
    pub lambdas: Vec<f64>,
    pub sigma_ns: Vec<f64>,
}

impl SureGrid {
    /// 30 linear thresholds on `[0, 3 lambda_MAP]` and 30 log-spaced noise
    /// levels on `[0.05 sigma_nu, 5 sigma_nu]`.
    pub fn default_for(model: &UnitaryModel) -> Self {
        let lmax = 3.0 * model.lambda_map(0);
        let lambdas = linspace(0.0, lmax, 30);
        let sigma_ns = logspace(0.05 * model.sigma_nu, 5.0 * model.sigma_nu, 30);
        Self { lambdas, sigma_ns }
    }
}

pub fn linspace(a: f64, b: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![a];
    }
    (0..count).map(|i| a + (b - a) * i as f64 / (count - 1) as f64).collect()
}

pub fn logspace(a: f64, b: f64, count: usize) -> Vec<f64> {
    linspace(a.ln(), b.ln(), count).into_iter().map(f64::exp).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SureChoice {
    pub lambda: f64,
    pub sigma_n: f64,
    pub objective: f64,
}

/// Grid minimizer of [`sure_objective`]; ties go to the smaller `sigma_n`,
/// then the smaller `lambda`.
pub fn tune_sure(beta: &[f64], model: &UnitaryModel, grid: &SureGrid) -> Result<SureChoice> {
    if grid.lambdas.is_empty() || grid.sigma_ns.is_empty() {
        return invalid("SURE grid must be nonempty");
    }
    let mut lambdas = grid.lambdas.clone();
    let mut sigmas = grid.sigma_ns.clone();
    lambdas.sort_by(f64::total_cmp);
    sigmas.sort_by(f64::total_cmp);
    let mut best: Option<SureChoice> = None;
    for &sigma_n in &sigmas {
        for &lambda in &lambdas {
            let objective = sure_objective(beta, lambda, sigma_n, model);
            if best.is_none_or(|b| objective < b.objective) {
                best = Some(SureChoice { lambda, sigma_n, objective });
            }
        }
    }
    Ok(best.expect("grid is nonempty"))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SigmaAlphaEstimate {
    pub sigma_alpha: f64,
    /// The moment equation went negative and was clamped to zero.
    pub clamped: bool,
}

/// Method-of-moments estimate of `sigma_alpha` from unitary correlations:
/// `E ||beta||^2 / m = p sigma_alpha^2 + sigma_nu^2`, solved for
/// `sigma_alpha` with the activity rate `p` assumed known.
pub fn estimate_sigma_alpha(beta: &[f64], sigma_nu: f64, p: f64) -> Result<SigmaAlphaEstimate> {
    if beta.is_empty() {
        return invalid("need at least one coefficient");
    }
    if !(p > 0.0 && p <= 1.0) {
        return invalid(format!("activity rate {p} outside (0, 1]"));
    }
    if !(sigma_nu >= 0.0) {
        return invalid("sigma_nu must be >= 0");
    }
    let energy = beta.iter().map(|b| b * b).sum::<f64>() / beta.len() as f64;
    let moment = (energy - sigma_nu * sigma_nu) / p;
    if moment <= 0.0 {
        return Ok(SigmaAlphaEstimate { sigma_alpha: 0.0, clamped: true });
    }
    Ok(SigmaAlphaEstimate { sigma_alpha: moment.sqrt(), clamped: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RngSeed;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn q_function_values() {
        assert_eq!(q_function(0.0), 0.5);
        for x in [0.5, 1.0, 2.0] {
            assert!((q_function(-x) - (1.0 - q_function(x))).abs() < 1e-15);
        }
        // Simpson rule on the density from 1.6449 to 12 as an independent oracle
        let (a, b, steps) = (1.6449f64, 12.0f64, 20_000);
        let h = (b - a) / steps as f64;
        let mut acc = normal_pdf(a) + normal_pdf(b);
        for k in 1..steps {
            acc += normal_pdf(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        let tail = acc * h / 3.0;
        assert!((q_function(1.6449) - tail).abs() < 1e-12);
        assert!((q_function(1.6449) - 0.05).abs() < 1e-4);
    }

    #[test]
    fn lambda_map_requires_sparse_prior() {
        assert!(matches!(UnitaryModel::new(1.0, 0.2, 0.9), Err(Error::ThresholdUndefined(_))));
        let m = UnitaryModel::new(1.0, 0.2, 0.05).unwrap();
        let c2 = m.c_squared();
        let expected = (2.0f64).sqrt() * 0.2 / c2.sqrt() * ((0.95 / (0.05 * (1.0 - c2).sqrt())).ln()).sqrt();
        assert!((m.lambda_map(0) - expected).abs() < 1e-15);
    }

    #[test]
    fn shrinkage_limits() {
        let m = UnitaryModel::new(1.0, 0.2, 0.05).unwrap();
        assert_eq!(mmse_shrinkage(0.0, &m), 0.0);
        let big = 50.0;
        assert!((mmse_shrinkage(big, &m) / (m.c_squared() * big) - 1.0).abs() < 1e-12);
        // far past the overflow point of the printed form
        assert!(mmse_shrinkage(1e4, &m).is_finite());
    }

    #[test]
    fn shrinkage_matches_printed_formula() {
        let m = UnitaryModel::new(1.0, 0.2, 0.05).unwrap();
        let (c2, p, s2) = (m.c_squared(), 0.05, 0.04);
        for beta in [0.5, -0.3, 0.8, 1.2] {
            let e = (c2 * beta * beta / (2.0 * s2)).exp() * p / (1.0 - p) * (1.0 - c2).sqrt();
            let printed = e / (1.0 + e) * c2 * beta;
            assert!((mmse_shrinkage(beta, &m) - printed).abs() < 1e-12);
        }
    }

    #[test]
    fn subtractive_mean_limits() {
        assert_eq!(subtractive_hard_threshold_mean(0.0, 0.4, 0.2, 0.96), 0.0);
        assert!((subtractive_hard_threshold_mean(0.9, 0.4, 1e-6, 0.96) - 0.96 * 0.9).abs() < 1e-12);
        assert_eq!(subtractive_hard_threshold_mean(0.3, 0.4, 0.0, 0.96), 0.0);
        assert_eq!(subtractive_hard_threshold_mean(0.5, 0.4, 0.0, 0.96), 0.96 * 0.5);
    }

    #[test]
    fn subtractive_mean_matches_monte_carlo() {
        let (beta, lambda, sigma_n, c2) = (0.3, 0.4, 0.2, 0.96);
        let mut rng = RngSeed::new(5, 0).rng();
        let draws = 1_000_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..draws {
            let n: f64 = rng.sample(StandardNormal);
            let v = if (beta + sigma_n * n).abs() >= lambda { c2 * beta } else { 0.0 };
            sum += v;
            sum_sq += v * v;
        }
        let mean = sum / draws as f64;
        let se = ((sum_sq / draws as f64 - mean * mean) / draws as f64).sqrt();
        let closed = subtractive_hard_threshold_mean(beta, lambda, sigma_n, c2);
        assert!((mean - closed).abs() < 3.0 * se, "{mean} vs {closed} (se {se})");
    }

    #[test]
    fn sure_vanishes_for_infinite_threshold() {
        let m = UnitaryModel::new(1.0, 0.2, 0.05).unwrap();
        let beta = [0.3, -1.2, 0.05, 2.0];
        assert!(sure_objective(&beta, 1e6, 0.3, &m).abs() < 1e-300);
    }

    #[test]
    fn sure_derivative_matches_finite_difference() {
        let m = UnitaryModel::new(1.0, 0.2, 0.05).unwrap();
        let (lambda, sigma_n, c2) = (0.5, 0.15, m.c_squared());
        for b in [-0.7, -0.2, 0.1, 0.45, 0.9] {
            let h = |x: f64| subtractive_hard_threshold_mean(x, lambda, sigma_n, c2);
            let step = 1e-6;
            let fd = (h(b + step) - h(b - step)) / (2.0 * step);
            let s = sure_objective(&[b], lambda, sigma_n, &m);
            let hb = h(b);
            let analytic = (s - hb * hb + 2.0 * hb * b) / (2.0 * 0.04);
            assert!((fd - analytic).abs() < 1e-6, "beta {b}: {fd} vs {analytic}");
        }
    }

    #[test]
    fn single_point_grid() {
        let m = UnitaryModel::new(1.0, 0.2, 0.05).unwrap();
        let g = SureGrid { lambdas: vec![0.3], sigma_ns: vec![0.1] };
        let c = tune_sure(&[0.1, 0.5], &m, &g).unwrap();
        assert_eq!((c.lambda, c.sigma_n), (0.3, 0.1));
        assert!(tune_sure(&[0.1], &m, &SureGrid { lambdas: vec![], sigma_ns: vec![0.1] }).is_err());
    }

    #[test]
    fn default_grid_shape() {
        let m = UnitaryModel::new(1.0, 0.2, 0.01).unwrap();
        let g = SureGrid::default_for(&m);
        assert_eq!(g.lambdas.len(), 30);
        assert_eq!(g.sigma_ns.len(), 30);
        assert!((g.sigma_ns[0] - 0.01).abs() < 1e-15);
        assert!((g.sigma_ns[29] - 1.0).abs() < 1e-12);
        assert!((g.lambdas[29] - 3.0 * m.lambda_map(0)).abs() < 1e-12);
    }

    #[test]
    fn sigma_alpha_zero_input() {
        let e = estimate_sigma_alpha(&[0.0; 10], 0.2, 0.05).unwrap();
        assert_eq!(e.sigma_alpha, 0.0);
        assert!(e.clamped);
    }

    proptest! {
        #[test]
        fn estimators_are_odd(beta in -5.0f64..5.0, lambda in 0.0f64..2.0, sigma_n in 0.01f64..2.0) {
            let m = UnitaryModel::new(1.0, 0.2, 0.05).unwrap();
            prop_assert!((mmse_shrinkage(beta, &m) + mmse_shrinkage(-beta, &m)).abs() < 1e-12);
            let c2 = m.c_squared();
            let a = subtractive_hard_threshold_mean(beta, lambda, sigma_n, c2);
            let b = subtractive_hard_threshold_mean(-beta, lambda, sigma_n, c2);
            prop_assert!((a + b).abs() < 1e-12);
        }

        #[test]
        fn shrinkage_factors_are_probabilities(beta in -5.0f64..5.0, lambda in 0.0f64..2.0, sigma_n in 0.01f64..2.0) {
            prop_assume!(beta != 0.0);
            let m = UnitaryModel::new(1.0, 0.2, 0.05).unwrap();
            let c2 = m.c_squared();
            let r = mmse_shrinkage(beta, &m) / (c2 * beta);
            prop_assert!((0.0..=1.0).contains(&r));
            let q = subtractive_hard_threshold_mean(beta, lambda, sigma_n, c2) / (c2 * beta);
            prop_assert!((0.0..=1.0 + 1e-15).contains(&q));
        }
    }
}
