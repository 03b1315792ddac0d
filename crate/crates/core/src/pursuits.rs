//! Support-recovery algorithms used as the nonlinear stage inside SR.
//!
//! Ties are always broken towards the lowest atom index.

use nalgebra::DVector;

use crate::bayes;
use crate::error::{invalid, Result};
use crate::linalg::{self, argmax_abs, correlate_into, IncrementalQr};
use crate::model::{Dictionary, PriorSpec, SupportSet};

/// Relative magnitude below which a basis-pursuit coefficient is treated
/// as zero when extracting its support.
pub const SUPPORT_THRESHOLD: f64 = 1e-4;

const BP_TOL: f64 = 1e-8;
const BP_MAX_ITERS: usize = 10_000;
const BP_MAX_BISECTIONS: usize = 30;
const BP_LAMBDA_FLOOR: f64 = 1e-6;
const BP_BAND: f64 = 0.05;
const SP_MAX_ITERS: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StoppingRule {
    /// Stop once `L` atoms are selected.
    Cardinality(usize),
    /// Stop once the residual norm is at most `epsilon`.
    ResidualBound(f64),
}

impl StoppingRule {
    fn validate(&self) -> Result<()> {
        match *self {
            StoppingRule::Cardinality(0) => invalid("cardinality stopping rule needs L >= 1"),
            StoppingRule::ResidualBound(eps) if !(eps >= 0.0 && eps.is_finite()) => {
                invalid(format!("residual bound must be finite and >= 0, got {eps}"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PursuitResult {
    pub alpha_tilde: DVector<f64>,
    pub support: SupportSet,
    pub iterations: usize,
    pub residual_norm: f64,
    /// The bisection budget ran out before the residual hit its target band.
    pub approximate: bool,
    /// `alpha_tilde` is a shrunk (penalized) solution rather than a
    /// least-squares refit on its support.
    pub penalized: bool,
}

impl PursuitResult {
    fn empty(m: usize, residual_norm: f64) -> Self {
        Self {
            alpha_tilde: DVector::zeros(m),
            support: SupportSet::empty(),
            iterations: 0,
            residual_norm,
            approximate: false,
            penalized: false,
        }
    }
}

/// Support of a penalized solution: entries above `SUPPORT_THRESHOLD`
/// times the largest magnitude.
pub fn thresholded_support(alpha: &DVector<f64>) -> SupportSet {
    let max = alpha.amax();
    if max == 0.0 {
        return SupportSet::empty();
    }
    let tau = SUPPORT_THRESHOLD * max;
    SupportSet::new(alpha.iter().enumerate().filter(|(_, v)| v.abs() > tau).map(|(i, _)| i).collect())
}

fn residual_norm(dict: &Dictionary, y: &DVector<f64>, alpha: &DVector<f64>) -> f64 {
    (y - dict.synthesize(alpha)).norm()
}

/// Orthogonal matching pursuit with least-squares refits.
pub fn omp(y: &DVector<f64>, dict: &Dictionary, stop: StoppingRule) -> Result<PursuitResult> {
    dict.check_signal(y)?;
    stop.validate()?;
    let (n, m) = (dict.n(), dict.m());
    let y_norm = y.norm();
    let done = |size: usize, res: f64| match stop {
        StoppingRule::Cardinality(l) => size >= l,
        StoppingRule::ResidualBound(eps) => res <= eps,
    };
    if y_norm == 0.0 || done(0, y_norm) {
        return Ok(PursuitResult::empty(m, y_norm));
    }
    let max_atoms = n.min(m);
    let mut qr = IncrementalQr::new(n);
    let mut selected: Vec<usize> = Vec::new();
    let mut blocked = vec![false; m];
    let mut residual = y.as_slice().to_vec();
    let mut corr = vec![0.0; m];
    let mut res_norm = y_norm;
    while selected.len() < max_atoms && !done(selected.len(), res_norm) {
        correlate_into(dict, &residual, &mut corr);
        let Some(i) = argmax_abs(&corr, |j| blocked[j]) else { break };
        if corr[i] == 0.0 {
            break;
        }
        blocked[i] = true;
        if !qr.push(dict.atom(i)) {
            // dependent on the current selection; it stays excluded
            continue;
        }
        selected.push(i);
        qr.deflate_last(&mut residual);
        res_norm = linalg::norm_sq(&residual).sqrt();
    }
    let coeffs = qr.solve(y.as_slice());
    let mut alpha = DVector::zeros(m);
    for (&i, &v) in selected.iter().zip(&coeffs) {
        alpha[i] = v;
    }
    let iterations = selected.len();
    Ok(PursuitResult {
        residual_norm: residual_norm(dict, y, &alpha),
        alpha_tilde: alpha,
        support: SupportSet::new(selected),
        iterations,
        approximate: false,
        penalized: false,
    })
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Solves `min 1/2 ||y - D a||^2 + lambda ||a||_1` by FISTA with gradient
/// restarts, starting from `start`. Returns the iterate and iteration count.
pub fn lasso_fista(beta: &[f64], dict: &Dictionary, lambda: f64, start: &[f64]) -> (Vec<f64>, usize) {
    let m = dict.m();
    let gram = dict.gram();
    let lip = dict.op_norm_sq();
    let step = 1.0 / lip;
    let thresh = lambda * step;
    let mut x = start.to_vec();
    let mut x_prev = x.clone();
    let mut z = x.clone();
    let mut grad = vec![0.0; m];
    let mut t = 1.0_f64;
    for iter in 1..=BP_MAX_ITERS {
        // grad = G z - beta
        for (i, g) in grad.iter_mut().enumerate() {
            let col = &gram.as_slice()[i * m..(i + 1) * m];
            *g = linalg::dot(col, &z) - beta[i];
        }
        x_prev.copy_from_slice(&x);
        for i in 0..m {
            x[i] = soft_threshold(z[i] - step * grad[i], thresh);
        }
        let mut change_sq = 0.0;
        let mut restart_dot = 0.0;
        for i in 0..m {
            let d = x[i] - x_prev[i];
            change_sq += d * d;
            restart_dot += (z[i] - x[i]) * d;
        }
        if change_sq.sqrt() < BP_TOL {
            return (x, iter);
        }
        if restart_dot > 0.0 {
            // momentum is pointing uphill; reset it
            t = 1.0;
            z.copy_from_slice(&x);
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let w = (t - 1.0) / t_next;
        for i in 0..m {
            z[i] = x[i] + w * (x[i] - x_prev[i]);
        }
        t = t_next;
    }
    (x, BP_MAX_ITERS)
}

/// Basis pursuit denoising `min ||a||_1 s.t. ||y - D a|| <= epsilon`, solved
/// through its penalized form with the penalty found by bisection on a log
/// scale so that the residual lands within 5% of `epsilon`.
pub fn basis_pursuit(y: &DVector<f64>, dict: &Dictionary, epsilon: f64) -> Result<PursuitResult> {
    dict.check_signal(y)?;
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return invalid(format!("epsilon must be finite and >= 0, got {epsilon}"));
    }
    let m = dict.m();
    let y_norm = y.norm();
    if y_norm <= epsilon || y_norm == 0.0 {
        let mut out = PursuitResult::empty(m, y_norm);
        out.penalized = true;
        return Ok(out);
    }
    let beta = dict.correlations(y);
    let beta = beta.as_slice();
    let lambda_max = beta.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
    let (lo_target, hi_target) = ((1.0 - BP_BAND) * epsilon, (1.0 + BP_BAND) * epsilon);

    let mut total_iters = 0;
    let mut solve = |lambda: f64, start: &[f64]| {
        let (x, it) = lasso_fista(beta, dict, lambda, start);
        total_iters += it;
        let alpha = DVector::from_vec(x);
        let res = residual_norm(dict, y, &alpha);
        (alpha, res)
    };

    let finish = |alpha: DVector<f64>, res: f64, approximate: bool, iters: usize| PursuitResult {
        support: thresholded_support(&alpha),
        alpha_tilde: alpha,
        iterations: iters,
        residual_norm: res,
        approximate,
        penalized: true,
    };

    // The residual grows with lambda. Bracket the target on a log-lambda
    // scale: `hi` starts at lambda_max (zero solution, residual ||y||) and
    // `lo` at the floor, whose residual is only computed if it is needed.
    let floor = (BP_LAMBDA_FLOOR * lambda_max).ln();
    let (mut lo, mut hi) = (floor, lambda_max.ln());
    let mut res_lo: Option<f64> = None;
    let mut res_hi = y_norm;
    let mut alpha_lo: Option<DVector<f64>> = None;
    let mut alpha_hi = DVector::zeros(m);
    // slope of log residual against log lambda from the last two points above target
    let mut prev_hi: Option<(f64, f64)> = None;
    let mut best: Option<(f64, DVector<f64>, f64)> = None;
    let n = dict.n() as f64;
    for step in 0..BP_MAX_BISECTIONS {
        let mid = match res_lo {
            Some(rl) if step % 3 != 2 => {
                let (a, b, t) = (rl.max(f64::MIN_POSITIVE).ln(), res_hi.ln(), epsilon.max(f64::MIN_POSITIVE).ln());
                lo + ((t - a) / (b - a)).clamp(0.05, 0.95) * (hi - lo)
            }
            Some(_) => 0.5 * (lo + hi),
            None => {
                let guess = match prev_hi {
                    // a noise-like residual of norm eps correlates with the atoms
                    // at about eps * sqrt(2 ln m / n)
                    None => (epsilon * (2.0 * (m as f64).ln() / n).sqrt()).max(f64::MIN_POSITIVE).ln(),
                    Some((l0, r0)) => {
                        let slope = ((res_hi.ln() - r0.ln()) / (hi - l0)).max(0.1);
                        hi - (res_hi.ln() - epsilon.max(f64::MIN_POSITIVE).ln()) / slope
                    }
                };
                guess.clamp(floor, hi - std::f64::consts::LN_2)
            }
        };
        let warm = match &alpha_lo {
            Some(a) if (mid - lo) < (hi - mid) => a.clone(),
            _ => alpha_hi.clone(),
        };
        let (a, r) = solve(mid.exp(), warm.as_slice());
        let gap = (r - epsilon).abs();
        if best.as_ref().is_none_or(|(g, _, _)| gap < *g) {
            best = Some((gap, a.clone(), r));
        }
        if r >= lo_target && r <= hi_target {
            return Ok(finish(a, r, false, total_iters));
        }
        if r < epsilon {
            lo = mid;
            res_lo = Some(r);
            alpha_lo = Some(a);
        } else {
            if mid <= floor {
                // even the weakest penalty leaves the residual above the bound
                return Ok(finish(a, r, false, total_iters));
            }
            prev_hi = Some((hi, res_hi));
            hi = mid;
            res_hi = r;
            alpha_hi = a;
        }
    }
    let (_, a, r) = best.expect("at least one bisection step");
    Ok(finish(a, r, true, total_iters))
}

/// Indices of the `count` largest `|v_i|` among `candidates`, ties to the
/// lower index, returned sorted.
fn largest(v: &[f64], candidates: &[usize], count: usize) -> Vec<usize> {
    let mut order: Vec<usize> = candidates.to_vec();
    order.sort_by(|&a, &b| v[b].abs().total_cmp(&v[a].abs()).then(a.cmp(&b)));
    order.truncate(count);
    order.sort_unstable();
    order
}

/// Subspace pursuit for an `L`-sparse approximation.
pub fn subspace_pursuit(y: &DVector<f64>, dict: &Dictionary, sparsity: usize) -> Result<PursuitResult> {
    dict.check_signal(y)?;
    let (n, m) = (dict.n(), dict.m());
    if sparsity == 0 || sparsity > n || sparsity > m {
        return invalid(format!("subspace pursuit needs 1 <= L <= min(n, m), got L = {sparsity}"));
    }
    let all: Vec<usize> = (0..m).collect();
    let mut qr = IncrementalQr::new(n);
    let mut corr = vec![0.0; m];
    correlate_into(dict, y.as_slice(), &mut corr);
    let mut support = largest(&corr, &all, sparsity);
    let mut fit = linalg::least_squares_with(&mut qr, dict, &support, y.as_slice());
    let mut res_norm = linalg::norm_sq(&fit.residual).sqrt();
    let mut iterations = 0;
    let mut in_support = vec![false; m];
    while iterations < SP_MAX_ITERS {
        iterations += 1;
        correlate_into(dict, &fit.residual, &mut corr);
        in_support.iter_mut().for_each(|f| *f = false);
        support.iter().for_each(|&i| in_support[i] = true);
        let outside: Vec<usize> = (0..m).filter(|&i| !in_support[i]).collect();
        let mut merged = support.clone();
        merged.extend(largest(&corr, &outside, sparsity));
        merged.sort_unstable();
        let wide = linalg::least_squares_with(&mut qr, dict, &merged, y.as_slice());
        let mut wide_coeffs = vec![0.0; m];
        for (&i, &c) in merged.iter().zip(&wide.coeffs) {
            wide_coeffs[i] = c;
        }
        let candidate = largest(&wide_coeffs, &merged, sparsity);
        let cand_fit = linalg::least_squares_with(&mut qr, dict, &candidate, y.as_slice());
        let cand_norm = linalg::norm_sq(&cand_fit.residual).sqrt();
        if cand_norm >= res_norm {
            break;
        }
        support = candidate;
        fit = cand_fit;
        res_norm = cand_norm;
    }
    let mut alpha = DVector::zeros(m);
    for (&i, &c) in support.iter().zip(&fit.coeffs) {
        alpha[i] = c;
    }
    Ok(PursuitResult {
        residual_norm: residual_norm(dict, y, &alpha),
        alpha_tilde: alpha,
        support: SupportSet::new(support),
        iterations,
        approximate: false,
        penalized: false,
    })
}

/// MAP support by brute force over every support the prior allows.
pub fn exhaustive_map_support(y: &DVector<f64>, dict: &Dictionary, prior: &PriorSpec) -> Result<SupportSet> {
    Ok(bayes::exhaustive_map(dict, prior, y)?.0)
}

/// `{argmax_i |d_i^T y|}`, the MAP support for one-atom signals.
pub fn single_atom_map(y: &DVector<f64>, dict: &Dictionary) -> Result<SupportSet> {
    dict.check_signal(y)?;
    let beta = dict.correlations(y);
    Ok(SupportSet::singleton(argmax_abs(beta.as_slice(), |_| false).unwrap_or(0)))
}

/// Elementwise `c^2 beta_i 1{|beta_i| >= lambda}`. The reported residual is
/// `||beta - alpha||`, which equals the signal residual for unitary `D`.
pub fn unitary_hard_threshold(beta: &DVector<f64>, lambda: f64, c_squared: f64) -> Result<PursuitResult> {
    if !(lambda >= 0.0) {
        return invalid(format!("threshold must be >= 0, got {lambda}"));
    }
    if !(c_squared > 0.0 && c_squared < 1.0) {
        return invalid(format!("c^2 must lie in (0, 1), got {c_squared}"));
    }
    let alpha = beta.map(|b| if b.abs() >= lambda { c_squared * b } else { 0.0 });
    let support = SupportSet::new((0..beta.len()).filter(|&i| beta[i].abs() >= lambda).collect());
    Ok(PursuitResult {
        residual_norm: (beta - &alpha).norm(),
        alpha_tilde: alpha,
        support,
        iterations: 1,
        approximate: false,
        penalized: true,
    })
}

/// A pursuit together with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum Pursuit {
    Omp(StoppingRule),
    BasisPursuit {
        epsilon: f64,
    },
    Subspace {
        sparsity: usize,
    },
    /// Single-atom MAP: pick the atom best correlated with the input.
    MatchedFilter,
    HardThreshold {
        lambda: f64,
        c_squared: f64,
    },
}

impl Pursuit {
    pub fn name(&self) -> &'static str {
        match self {
            Pursuit::Omp(_) => "omp",
            Pursuit::BasisPursuit { .. } => "bp",
            Pursuit::Subspace { .. } => "sp",
            Pursuit::MatchedFilter => "mf",
            Pursuit::HardThreshold { .. } => "ht",
        }
    }

    pub fn run(&self, y: &DVector<f64>, dict: &Dictionary) -> Result<PursuitResult> {
        match self {
            Pursuit::Omp(stop) => omp(y, dict, *stop),
            Pursuit::BasisPursuit { epsilon } => basis_pursuit(y, dict, *epsilon),
            Pursuit::Subspace { sparsity } => subspace_pursuit(y, dict, *sparsity),
            Pursuit::MatchedFilter => {
                dict.check_signal(y)?;
                self.run_on_correlations(&dict.correlations(y)).map(|mut r| {
                    r.residual_norm = residual_norm(dict, y, &r.alpha_tilde);
                    r
                })
            }
            Pursuit::HardThreshold { lambda, c_squared } => {
                dict.check_signal(y)?;
                unitary_hard_threshold(&dict.correlations(y), *lambda, *c_squared)
            }
        }
    }

    /// Whether the pursuit only looks at `D^T y`, so SR noise may be added
    /// to the correlations directly.
    pub fn works_on_correlations(&self) -> bool {
        matches!(self, Pursuit::MatchedFilter | Pursuit::HardThreshold { .. })
    }

    pub fn run_on_correlations(&self, beta: &DVector<f64>) -> Result<PursuitResult> {
        match self {
            Pursuit::MatchedFilter => {
                let i = argmax_abs(beta.as_slice(), |_| false).unwrap_or(0);
                let mut alpha = DVector::zeros(beta.len());
                if !beta.is_empty() {
                    alpha[i] = beta[i];
                }
                Ok(PursuitResult {
                    residual_norm: (beta - &alpha).norm(),
                    alpha_tilde: alpha,
                    support: SupportSet::singleton(i),
                    iterations: 1,
                    approximate: false,
                    penalized: false,
                })
            }
            Pursuit::HardThreshold { lambda, c_squared } => unitary_hard_threshold(beta, *lambda, *c_squared),
            other => invalid(format!("pursuit `{}` needs the signal, not its correlations", other.name())),
        }
    }

    /// Copy with residual bounds multiplied by `factor`.
    pub(crate) fn scale_residual_bound(&self, factor: f64) -> Pursuit {
        match self {
            Pursuit::Omp(StoppingRule::ResidualBound(eps)) => Pursuit::Omp(StoppingRule::ResidualBound(eps * factor)),
            Pursuit::BasisPursuit { epsilon } => Pursuit::BasisPursuit { epsilon: epsilon * factor },
            other => other.clone(),
        }
    }
}
