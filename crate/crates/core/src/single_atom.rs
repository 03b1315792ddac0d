//! One-atom signals: support-selection probabilities of the matched-filter
//! SR process, its asymptotic estimator, and histogram comparisons with the
//! MMSE support posterior.
//!
//! With representation-domain noise `n ~ N(0, sigma_n^2 I_m)` the selected
//! atom is `argmax_j |beta_j + n_j|`, so
//!
//! ```text
//! P(S = i) = int_0^inf f_i(t) prod_{j != i} P(|beta_j + n_j| < t) dt
//! ```
//!
//! where `f_i` is the density of `|beta_i + n_i|`.

use std::fmt;
use std::io::Write;

use nalgebra::DVector;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::bayes::{self, SupportScorer};
use crate::error::{invalid, Error, Result};
use crate::experiments::{mean_and_stderr, mse};
use crate::model::{CoefficientModel, Dictionary, PriorSpec, RngSeed, SupportPrior, SupportSet};
use crate::pursuits::Pursuit;
use crate::quadrature::GaussLegendre;
use crate::sr::{general_sr, Averaging, NoiseDomain, SrConfig, SrNoiseSpec};
use crate::unitary::{normal_pdf, q_function};

/// Absolute tolerance between successive panel refinements.
pub const QUADRATURE_TOL: f64 = 1e-6;
/// Floor applied to both histograms in [`kl_divergence`].
pub const KL_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HistogramSource {
    SrEmpirical,
    SrIntegral,
    MmsePosterior,
    MapDegenerate,
}

impl fmt::Display for HistogramSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HistogramSource::SrEmpirical => "sr_empirical",
            HistogramSource::SrIntegral => "sr_integral",
            HistogramSource::MmsePosterior => "mmse_posterior",
            HistogramSource::MapDegenerate => "map_degenerate",
        })
    }
}

/// One probability per atom.
#[derive(Clone, Debug, PartialEq)]
pub struct SupportHistogram {
    pub weights: Vec<f64>,
    pub source: HistogramSource,
}

impl SupportHistogram {
    /// Frequencies of singleton supports among `supports`. Empty supports
    /// count towards `K` but towards no atom.
    pub fn from_supports(m: usize, supports: &[SupportSet]) -> Result<Self> {
        if supports.is_empty() {
            return Err(Error::NoSupports);
        }
        let mut counts = vec![0usize; m];
        for s in supports {
            if s.len() > 1 {
                return invalid(format!("support {s} is not a singleton"));
            }
            if let Some(&i) = s.indices().first() {
                if i >= m {
                    return invalid(format!("atom {i} out of range for m = {m}"));
                }
                counts[i] += 1;
            }
        }
        let k = supports.len() as f64;
        let weights = counts.into_iter().map(|c| c as f64 / k).collect();
        Ok(Self { weights, source: HistogramSource::SrEmpirical })
    }

    pub fn point_mass(m: usize, atom: usize) -> Self {
        let mut weights = vec![0.0; m];
        weights[atom] = 1.0;
        Self { weights, source: HistogramSource::MapDegenerate }
    }

    /// Entrywise mean of histograms sharing a source.
    pub fn average(hists: &[SupportHistogram]) -> Result<Self> {
        let first = hists.first().ok_or(Error::NoSupports)?;
        let m = first.weights.len();
        let mut weights = vec![0.0; m];
        for h in hists {
            if h.weights.len() != m {
                return Err(Error::DimensionMismatch { expected: m, got: h.weights.len() });
            }
            for (w, v) in weights.iter_mut().zip(&h.weights) {
                *w += v;
            }
        }
        let count = hists.len() as f64;
        weights.iter_mut().for_each(|w| *w /= count);
        Ok(Self { weights, source: first.source })
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &w) in self.weights.iter().enumerate() {
            if w > self.weights[best] {
                best = i;
            }
        }
        best
    }

    /// `atom_index,weight,source` rows without a header.
    pub fn write_rows<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        for (i, w) in self.weights.iter().enumerate() {
            writeln!(out, "{i},{w},{}", self.source)?;
        }
        Ok(())
    }
}

/// Header of the histogram CSV.
pub const HISTOGRAM_HEADER: &str = "atom_index,weight,source";

/// Selection probabilities for every atom.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionProbabilities {
    pub probabilities: Vec<f64>,
    /// False when two refinements still differed by more than the tolerance.
    pub converged: bool,
    /// Largest change between the last two refinements.
    pub change: f64,
}

impl SelectionProbabilities {
    pub fn histogram(&self) -> SupportHistogram {
        SupportHistogram { weights: self.probabilities.clone(), source: HistogramSource::SrIntegral }
    }
}

/// `P(|b + n| < t)` for `n ~ N(0, s^2)`, accurate in both tails.
fn inside_probability(b: f64, t: f64, s: f64) -> f64 {
    let lo = (-t - b) / s;
    let hi = (t - b) / s;
    if lo >= 0.0 {
        q_function(lo) - q_function(hi)
    } else if hi <= 0.0 {
        q_function(-hi) - q_function(-lo)
    } else {
        1.0 - q_function(-lo) - q_function(hi)
    }
}

/// One pass of the composite rule on `[0, t_max]` with the given panel
/// count, for all atoms at once.
fn selection_pass(beta: &[f64], s: f64, t_max: f64, panels: usize) -> Vec<f64> {
    let m = beta.len();
    let rule = GaussLegendre::points32();
    let h = t_max / panels as f64;
    let mut totals = vec![0.0; m];
    let mut inside = vec![0.0; m];
    let mut suffix = vec![1.0; m + 1];
    for k in 0..panels {
        let mid = (k as f64 + 0.5) * h;
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            let t = mid + 0.5 * h * x;
            for (p, &b) in inside.iter_mut().zip(beta) {
                *p = inside_probability(b, t, s);
            }
            // leave-one-out products without dividing by near-zero factors
            for j in (0..m).rev() {
                suffix[j] = suffix[j + 1] * inside[j];
            }
            let mut prefix = 1.0;
            for i in 0..m {
                let others = prefix * suffix[i + 1];
                prefix *= inside[i];
                if others == 0.0 {
                    continue;
                }
                let b = beta[i];
                let density = (normal_pdf((t + b) / s) + normal_pdf((t - b) / s)) / s;
                totals[i] += 0.5 * h * w * density * others;
            }
        }
    }
    totals
}

/// Probabilities that matched-filter SR with representation-domain noise
/// of level `sigma_n` selects each atom, given correlations `beta`.
pub fn selection_probabilities_from_correlations(beta: &[f64], sigma_n: f64) -> Result<SelectionProbabilities> {
    if !(sigma_n > 0.0 && sigma_n.is_finite()) {
        return invalid(format!("sigma_n must be positive, got {sigma_n}"));
    }
    if beta.is_empty() {
        return invalid("need at least one atom");
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return invalid("correlations must be finite");
    }
    if beta.len() == 1 {
        return Ok(SelectionProbabilities { probabilities: vec![1.0], converged: true, change: 0.0 });
    }
    let t_max = beta.iter().fold(0.0f64, |a, b| a.max(b.abs())) + 10.0 * sigma_n;
    let base = (t_max / (0.5 * sigma_n)).ceil().max(1.0) as usize;
    let mut prev = selection_pass(beta, sigma_n, t_max, base);
    let mut change = f64::INFINITY;
    for refine in 1..=2 {
        let next = selection_pass(beta, sigma_n, t_max, base << refine);
        change = prev.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prev = next;
        if change <= QUADRATURE_TOL {
            break;
        }
    }
    Ok(SelectionProbabilities { probabilities: prev, converged: change <= QUADRATURE_TOL, change })
}

/// [`selection_probabilities_from_correlations`] for `beta = D^T y`.
pub fn sr_support_probabilities(y: &DVector<f64>, dict: &Dictionary, sigma_n: f64) -> Result<SelectionProbabilities> {
    dict.check_signal(y)?;
    selection_probabilities_from_correlations(dict.correlations(y).as_slice(), sigma_n)
}

/// Probability that atom `i` is selected, with the convergence flag.
pub fn sr_support_probability(y: &DVector<f64>, dict: &Dictionary, atom: usize, sigma_n: f64) -> Result<(f64, bool)> {
    if atom >= dict.m() {
        return invalid(format!("atom {atom} out of range for m = {}", dict.m()));
    }
    let all = sr_support_probabilities(y, dict, sigma_n)?;
    Ok((all.probabilities[atom], all.converged))
}

/// Limit of general SR with oracle averaging as `K -> inf`:
/// `c^2 beta_i P(S = i)` entrywise.
pub fn single_atom_asymptotic_estimate(
    y: &DVector<f64>,
    dict: &Dictionary,
    sigma_n: f64,
    model: CoefficientModel,
) -> Result<(DVector<f64>, bool)> {
    dict.check_signal(y)?;
    let beta = dict.correlations(y);
    let probs = selection_probabilities_from_correlations(beta.as_slice(), sigma_n)?;
    let c2 = model.c_squared();
    let est = DVector::from_iterator(dict.m(), beta.iter().zip(&probs.probabilities).map(|(b, p)| c2 * b * p));
    Ok((est, probs.converged))
}

/// Posterior over the `m` singleton supports.
pub fn mmse_support_histogram(y: &DVector<f64>, dict: &Dictionary, prior: &PriorSpec) -> Result<SupportHistogram> {
    if prior.support_prior != SupportPrior::FixedCardinality(1) {
        return invalid("the singleton posterior needs a cardinality-one prior");
    }
    dict.check_signal(y)?;
    let mut scorer = SupportScorer::new(dict, prior.coefficient_model(), y);
    let logs: Vec<f64> = (0..dict.m()).map(|i| scorer.log_likelihood(&[i])).collect();
    Ok(SupportHistogram { weights: bayes::softmax(&logs), source: HistogramSource::MmsePosterior })
}

/// `sum_i p_i log(p_i / q_i)` with both floored at [`KL_FLOOR`] and
/// `0 log 0 = 0`.
pub fn kl_divergence(p: &SupportHistogram, q: &SupportHistogram) -> Result<f64> {
    if p.weights.len() != q.weights.len() {
        return Err(Error::DimensionMismatch { expected: p.weights.len(), got: q.weights.len() });
    }
    Ok(p.weights
        .iter()
        .zip(&q.weights)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(&pi, &qi)| {
            let pi = pi.max(KL_FLOOR);
            pi * (pi / qi.max(KL_FLOOR)).ln()
        })
        .sum())
}

/// A one-atom signal on `atom` with `N(0, sigma_alpha^2)` coefficient.
pub fn sample_single_atom_signal(
    dict: &Dictionary,
    model: CoefficientModel,
    atom: usize,
    seed: RngSeed,
) -> Result<(DVector<f64>, DVector<f64>)> {
    if atom >= dict.m() {
        return invalid(format!("atom {atom} out of range for m = {}", dict.m()));
    }
    let mut rng = seed.rng();
    let coef = Normal::new(0.0, model.sigma_alpha).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let noise = Normal::new(0.0, model.sigma_nu).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut alpha = DVector::zeros(dict.m());
    alpha[atom] = coef.sample(&mut rng);
    let mut y = dict.synthesize(&alpha);
    for v in y.iter_mut() {
        *v += noise.sample(&mut rng);
    }
    Ok((alpha, y))
}

/// MSE curves of matched-filter general SR with the noise added to the
/// signal and to the correlations.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainEquivalence {
    pub sigma_ns: Vec<f64>,
    /// `(mean, standard error)` per grid point.
    pub signal_domain: Vec<(f64, f64)>,
    pub representation_domain: Vec<(f64, f64)>,
}

impl DomainEquivalence {
    pub const HEADER: &'static str =
        "sigma_n,signal_mse_mean,signal_mse_stderr,representation_mse_mean,representation_mse_stderr";

    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "{}", Self::HEADER)?;
        for (sn, (a, b)) in self.sigma_ns.iter().zip(self.signal_domain.iter().zip(&self.representation_domain)) {
            writeln!(out, "{sn},{:e},{:e},{:e},{:e}", a.0, a.1, b.0, b.1)?;
        }
        Ok(())
    }

    /// Largest `|a - b| / max(a, b)` over the grid.
    pub fn max_relative_gap(&self) -> f64 {
        self.signal_domain
            .iter()
            .zip(&self.representation_domain)
            .map(|(a, b)| {
                let top = a.0.max(b.0);
                if top == 0.0 {
                    0.0
                } else {
                    (a.0 - b.0).abs() / top
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Runs both noise domains on the same one-atom signals (random atoms).
pub fn domain_equivalence_experiment(
    dict: &Dictionary,
    model: CoefficientModel,
    sigma_ns: &[f64],
    trials: usize,
    iterations: usize,
    seed: u64,
) -> Result<DomainEquivalence> {
    if sigma_ns.is_empty() || trials == 0 {
        return invalid("need a nonempty grid and at least one trial");
    }
    let prior = PriorSpec::fixed(1, model.sigma_alpha, model.sigma_nu)?;
    let signals: Vec<_> = (0..trials)
        .map(|t| crate::model::sample_signal(dict, &prior, RngSeed::new(seed, 1).child(t as u64)))
        .collect::<Result<_>>()?;
    let mut signal_domain = Vec::with_capacity(sigma_ns.len());
    let mut representation_domain = Vec::with_capacity(sigma_ns.len());
    for (g, &sn) in sigma_ns.iter().enumerate() {
        let errors: Vec<(f64, f64)> = signals
            .par_iter()
            .enumerate()
            .map(|(t, s)| {
                let sr_seed = RngSeed::new(seed, 2).child((g * trials + t) as u64);
                let run = |domain| -> Result<f64> {
                    let cfg = SrConfig {
                        noise: SrNoiseSpec::gaussian(sn).in_domain(domain),
                        iterations,
                        pursuit: Pursuit::MatchedFilter,
                        averaging: Averaging::OracleMean,
                        seed: sr_seed,
                    };
                    let est = general_sr(&s.y, dict, Some(model), &cfg)?.estimate;
                    mse(&est, &s.alpha)
                };
                Ok((run(NoiseDomain::Signal)?, run(NoiseDomain::Representation)?))
            })
            .collect::<Result<_>>()?;
        let (a, b): (Vec<f64>, Vec<f64>) = errors.into_iter().unzip();
        signal_domain.push(mean_and_stderr(&a));
        representation_domain.push(mean_and_stderr(&b));
    }
    Ok(DomainEquivalence { sigma_ns: sigma_ns.to_vec(), signal_domain, representation_domain })
}

/// Settings of a histogram study over an SR noise grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SupportStudyConfig {
    pub model: CoefficientModel,
    pub sigma_ns: Vec<f64>,
    /// Signals per grid point; each is active on `atom`.
    pub trials: usize,
    pub iterations: usize,
    pub atom: usize,
    /// Also evaluate the selection-probability integral (slower).
    pub with_integral: bool,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SupportStudyRow {
    pub sigma_n: f64,
    /// Mean empirical SR weight on the true atom.
    pub success_empirical: f64,
    /// Mean integral weight on the true atom, if computed.
    pub success_integral: Option<f64>,
    /// Mean MMSE posterior weight on the true atom.
    pub success_mmse: f64,
    /// `D_KL(averaged SR histogram || averaged MMSE histogram)`.
    pub kl: f64,
    pub sr_mse: (f64, f64),
    pub mmse_mse: (f64, f64),
    /// False if any integral failed to reach the tolerance.
    pub integral_converged: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SupportStudy {
    pub rows: Vec<SupportStudyRow>,
    pub sr_histograms: Vec<SupportHistogram>,
    pub mmse_histogram: SupportHistogram,
    pub integral_histograms: Vec<Option<SupportHistogram>>,
}

impl SupportStudy {
    pub const HEADER: &'static str = "sigma_n,success_empirical,success_integral,success_mmse,kl,sr_mse_mean,\
                                      sr_mse_stderr,mmse_mse_mean,mmse_mse_stderr,integral_converged";

    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "{}", Self::HEADER)?;
        for r in &self.rows {
            let integral = r.success_integral.map(|v| v.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.sigma_n,
                r.success_empirical,
                integral,
                r.success_mmse,
                r.kl,
                r.sr_mse.0,
                r.sr_mse.1,
                r.mmse_mse.0,
                r.mmse_mse.1,
                r.integral_converged
            )?;
        }
        Ok(())
    }

    pub fn write_histograms<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "sigma_n,{HISTOGRAM_HEADER}")?;
        let mut emit = |sn: String, h: &SupportHistogram| -> std::io::Result<()> {
            for (i, w) in h.weights.iter().enumerate() {
                writeln!(out, "{sn},{i},{w},{}", h.source)?;
            }
            Ok(())
        };
        emit(String::new(), &self.mmse_histogram)?;
        for (k, row) in self.rows.iter().enumerate() {
            emit(row.sigma_n.to_string(), &self.sr_histograms[k])?;
            if let Some(h) = &self.integral_histograms[k] {
                emit(row.sigma_n.to_string(), h)?;
            }
        }
        Ok(())
    }

    /// Grid index minimising the KL divergence.
    pub fn kl_argmin(&self) -> usize {
        argmin(self.rows.iter().map(|r| r.kl))
    }

    /// Grid index minimising the SR MSE.
    pub fn mse_argmin(&self) -> usize {
        argmin(self.rows.iter().map(|r| r.sr_mse.0))
    }
}

fn argmin(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best.0
}

struct TrialOutcome {
    sr_hist: SupportHistogram,
    integral: Option<SelectionProbabilities>,
    sr_mse: f64,
}

/// SR and MMSE support histograms for one-atom signals on a fixed atom,
/// with representation-domain noise and matched-filter pursuit.
pub fn support_study(dict: &Dictionary, cfg: &SupportStudyConfig) -> Result<SupportStudy> {
    if cfg.sigma_ns.is_empty() || cfg.trials == 0 || cfg.iterations == 0 {
        return invalid("need a nonempty grid, trials and iterations");
    }
    let m = dict.m();
    let prior = PriorSpec::fixed(1, cfg.model.sigma_alpha, cfg.model.sigma_nu)?;
    // the same signals at every grid point so the curves are comparable
    let signals: Vec<(DVector<f64>, DVector<f64>)> = (0..cfg.trials)
        .map(|t| sample_single_atom_signal(dict, cfg.model, cfg.atom, RngSeed::new(cfg.seed, 1).child(t as u64)))
        .collect::<Result<_>>()?;
    let mut mmse_hists = Vec::with_capacity(cfg.trials);
    let mut mmse_errors = Vec::with_capacity(cfg.trials);
    for (alpha, y) in &signals {
        mmse_hists.push(mmse_support_histogram(y, dict, &prior)?);
        mmse_errors.push(mse(&bayes::exhaustive_mmse(dict, &prior, y)?, alpha)?);
    }
    let mmse_histogram = SupportHistogram::average(&mmse_hists)?;
    let success_mmse = mmse_histogram.weights[cfg.atom];
    let mmse_mse = mean_and_stderr(&mmse_errors);

    let mut rows = Vec::with_capacity(cfg.sigma_ns.len());
    let mut sr_histograms = Vec::with_capacity(cfg.sigma_ns.len());
    let mut integral_histograms = Vec::with_capacity(cfg.sigma_ns.len());
    for (g, &sn) in cfg.sigma_ns.iter().enumerate() {
        let outcomes: Vec<TrialOutcome> = signals
            .par_iter()
            .enumerate()
            .map(|(t, (alpha, y))| {
                let sr_cfg = SrConfig {
                    noise: SrNoiseSpec::gaussian(sn).in_domain(NoiseDomain::Representation),
                    iterations: cfg.iterations,
                    pursuit: Pursuit::MatchedFilter,
                    averaging: Averaging::OracleMean,
                    seed: RngSeed::new(cfg.seed, 2).child((g * cfg.trials + t) as u64),
                };
                let report = general_sr(y, dict, Some(cfg.model), &sr_cfg)?;
                let sr_hist = SupportHistogram::from_supports(m, &report.per_iteration_supports)?;
                let integral =
                    if cfg.with_integral && sn > 0.0 { Some(sr_support_probabilities(y, dict, sn)?) } else { None };
                Ok(TrialOutcome { sr_hist, integral, sr_mse: mse(&report.estimate, alpha)? })
            })
            .collect::<Result<_>>()?;
        let hists: Vec<SupportHistogram> = outcomes.iter().map(|o| o.sr_hist.clone()).collect();
        let sr_hist = SupportHistogram::average(&hists)?;
        let integral_hist = if outcomes.iter().all(|o| o.integral.is_some()) {
            let ih: Vec<SupportHistogram> = outcomes.iter().map(|o| o.integral.as_ref().unwrap().histogram()).collect();
            Some(SupportHistogram::average(&ih)?)
        } else {
            None
        };
        let errors: Vec<f64> = outcomes.iter().map(|o| o.sr_mse).collect();
        rows.push(SupportStudyRow {
            sigma_n: sn,
            success_empirical: sr_hist.weights[cfg.atom],
            success_integral: integral_hist.as_ref().map(|h| h.weights[cfg.atom]),
            success_mmse,
            kl: kl_divergence(&sr_hist, &mmse_histogram)?,
            sr_mse: mean_and_stderr(&errors),
            mmse_mse,
            integral_converged: outcomes.iter().all(|o| o.integral.as_ref().is_none_or(|p| p.converged)),
        });
        sr_histograms.push(sr_hist);
        integral_histograms.push(integral_hist);
    }
    Ok(SupportStudy { rows, sr_histograms, mmse_histogram, integral_histograms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_random_dictionary, make_unitary_dictionary};
    use crate::sr::sample_sr_noise;
    use crate::sr::SrNoise;
    use proptest::prelude::*;

    fn setup() -> (Dictionary, DVector<f64>) {
        let d = make_random_dictionary(25, 50, RngSeed::new(11, 0)).unwrap();
        let model = CoefficientModel::new(1.0, 0.2).unwrap();
        let (_, y) = sample_single_atom_signal(&d, model, 3, RngSeed::new(12, 0)).unwrap();
        (d, y)
    }

    #[test]
    fn interval_probability_matches_direct_form() {
        for &(b, t, s) in &[(0.0, 1.0, 1.0), (2.0, 0.5, 0.3), (-1.0, 3.0, 0.5), (8.0, 1.0, 0.5)] {
            let direct = 1.0 - q_function((t - b) / s) - q_function((t + b) / s);
            assert!((inside_probability(b, t, s) - direct).abs() < 1e-14);
        }
        // far tail keeps relative accuracy where the direct form cancels
        let p = inside_probability(12.0, 1.0, 1.0);
        let expected = q_function(11.0) - q_function(13.0);
        assert!(p > 0.0 && ((p - expected) / expected).abs() < 1e-10);
    }

    #[test]
    fn one_atom_is_certain() {
        let p = selection_probabilities_from_correlations(&[0.7], 0.3).unwrap();
        assert_eq!(p.probabilities, vec![1.0]);
    }

    #[test]
    fn zero_signal_is_uniform() {
        let d = make_random_dictionary(10, 20, RngSeed::new(4, 0)).unwrap();
        let p = sr_support_probabilities(&DVector::zeros(10), &d, 0.4).unwrap();
        assert!(p.converged);
        for v in &p.probabilities {
            assert!((v - 0.05).abs() < 1e-6);
        }
    }

    #[test]
    fn probabilities_sum_to_one_and_are_sign_invariant() {
        let (d, y) = setup();
        for sn in [0.05, 0.2, 0.6, 2.0] {
            let p = sr_support_probabilities(&y, &d, sn).unwrap();
            assert!(p.converged, "sigma_n {sn}: change {}", p.change);
            assert!((p.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-3);
            let q = sr_support_probabilities(&(-&y), &d, sn).unwrap();
            for (a, b) in p.probabilities.iter().zip(&q.probabilities) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn integral_matches_simulated_selection() {
        let (d, y) = setup();
        let beta = d.correlations(&y);
        let sn = 0.3;
        let p = sr_support_probabilities(&y, &d, sn).unwrap();
        let draws = 20_000;
        let mut counts = vec![0usize; d.m()];
        let mut rng = RngSeed::new(13, 0).rng();
        for _ in 0..draws {
            let e = sample_sr_noise(SrNoise::Gaussian { sigma_n: sn }, d.m(), &mut rng);
            let best = (0..d.m()).max_by(|&a, &b| (beta[a] + e[a]).abs().total_cmp(&(beta[b] + e[b]).abs())).unwrap();
            counts[best] += 1;
        }
        for (c, q) in counts.iter().zip(&p.probabilities) {
            let f = *c as f64 / draws as f64;
            let se = (q * (1.0 - q) / draws as f64).sqrt();
            assert!((f - q).abs() <= 4.0 * se + 1e-3, "empirical {f} vs integral {q}");
        }
    }

    #[test]
    fn asymptotic_estimate_limits() {
        let (d, y) = setup();
        let model = CoefficientModel::new(1.0, 0.2).unwrap();
        let beta = d.correlations(&y);
        let c2 = model.c_squared();
        let (wide, _) = single_atom_asymptotic_estimate(&y, &d, 1e3, model).unwrap();
        for i in 0..d.m() {
            assert!((wide[i] - c2 * beta[i] / d.m() as f64).abs() < 1e-4);
        }
        // dominant correlation and small noise: the estimate sits on one atom
        let mut alpha = DVector::zeros(d.m());
        alpha[7] = 3.0;
        let y2 = d.synthesize(&alpha);
        let (sharp, ok) = single_atom_asymptotic_estimate(&y2, &d, 0.01, model).unwrap();
        assert!(ok);
        assert!((sharp[7] - c2 * 3.0).abs() < 1e-9);
        assert!(sharp.iter().enumerate().filter(|(i, _)| *i != 7).all(|(_, v)| v.abs() < 1e-9));
    }

    #[test]
    fn mmse_histogram_on_unitary_dictionary() {
        let d = make_unitary_dictionary(8, RngSeed::new(5, 0)).unwrap();
        let prior = PriorSpec::fixed(1, 1.0, 0.3).unwrap();
        let (_, y) = sample_single_atom_signal(&d, prior.coefficient_model(), 2, RngSeed::new(6, 0)).unwrap();
        let h = mmse_support_histogram(&y, &d, &prior).unwrap();
        // orthonormal atoms: weights proportional to exp(c^2 beta_i^2 / (2 sigma_nu^2))
        let beta = d.correlations(&y);
        let c2 = prior.c_squared();
        let raw: Vec<f64> = beta.iter().map(|b| (c2 * b * b / (2.0 * 0.09)).exp()).collect();
        let total: f64 = raw.iter().sum();
        for (w, r) in h.weights.iter().zip(&raw) {
            assert!((w - r / total).abs() < 1e-12);
        }
        let flat = mmse_support_histogram(&DVector::zeros(8), &d, &prior).unwrap();
        assert!(flat.weights.iter().all(|w| (w - 0.125).abs() < 1e-15));
        let map = crate::pursuits::single_atom_map(&y, &d).unwrap();
        assert_eq!(map.indices(), &[h.argmax()]);
    }

    #[test]
    fn mmse_histogram_needs_single_atom_prior() {
        let d = make_random_dictionary(5, 8, RngSeed::new(1, 0)).unwrap();
        let prior = PriorSpec::fixed(2, 1.0, 0.3).unwrap();
        assert!(mmse_support_histogram(&DVector::zeros(5), &d, &prior).is_err());
    }

    #[test]
    fn kl_basics() {
        let p = SupportHistogram { weights: vec![0.5, 0.5, 0.0], source: HistogramSource::SrEmpirical };
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
        let q = SupportHistogram { weights: vec![0.25, 0.25, 0.5], source: HistogramSource::MmsePosterior };
        assert!((kl_divergence(&p, &q).unwrap() - 2.0f64.ln()).abs() < 1e-15);
        // floor keeps the divergence finite
        let r = SupportHistogram { weights: vec![1.0, 0.0, 0.0], source: HistogramSource::MmsePosterior };
        assert!(kl_divergence(&q, &r).unwrap().is_finite());
        let short = SupportHistogram { weights: vec![1.0], source: HistogramSource::MmsePosterior };
        assert!(kl_divergence(&p, &short).is_err());
    }

    proptest! {
        #[test]
        fn kl_is_nonnegative(a in prop::collection::vec(0.0f64..1.0, 5), b in prop::collection::vec(0.01f64..1.0, 5)) {
            let sa: f64 = a.iter().sum();
            prop_assume!(sa > 1e-6);
            let sb: f64 = b.iter().sum();
            let p = SupportHistogram { weights: a.iter().map(|v| v / sa).collect(), source: HistogramSource::SrEmpirical };
            let q = SupportHistogram { weights: b.iter().map(|v| v / sb).collect(), source: HistogramSource::MmsePosterior };
            prop_assert!(kl_divergence(&p, &q).unwrap() >= -1e-12);
        }
    }

    #[test]
    fn empirical_histogram_counts() {
        let s = vec![SupportSet::singleton(1), SupportSet::singleton(1), SupportSet::empty(), SupportSet::singleton(0)];
        let h = SupportHistogram::from_supports(3, &s).unwrap();
        assert_eq!(h.weights, vec![0.25, 0.5, 0.0]);
        assert!(SupportHistogram::from_supports(3, &[SupportSet::new(vec![0, 1])]).is_err());
        let mut buf = Vec::new();
        SupportHistogram::point_mass(2, 1).write_rows(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "0,0,map_degenerate\n1,1,map_degenerate\n");
    }

    #[test]
    fn zero_sr_noise_gives_identical_domains() {
        let d = make_random_dictionary(10, 20, RngSeed::new(2, 0)).unwrap();
        let model = CoefficientModel::new(1.0, 0.2).unwrap();
        let r = domain_equivalence_experiment(&d, model, &[0.0], 20, 3, 9).unwrap();
        assert_eq!(r.signal_domain, r.representation_domain);
    }

    #[test]
    fn unitary_domains_share_noise_law() {
        // D^T n is white for orthonormal D, so both curves estimate the same quantity
        let d = make_unitary_dictionary(16, RngSeed::new(3, 0)).unwrap();
        let model = CoefficientModel::new(1.0, 0.2).unwrap();
        let r = domain_equivalence_experiment(&d, model, &[0.1, 0.3], 400, 50, 10).unwrap();
        for (a, b) in r.signal_domain.iter().zip(&r.representation_domain) {
            assert!((a.0 - b.0).abs() <= 3.0 * (a.1 * a.1 + b.1 * b.1).sqrt(), "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn study_at_zero_noise_is_map_point_mass() {
        let d = make_random_dictionary(10, 20, RngSeed::new(8, 0)).unwrap();
        let model = CoefficientModel::new(1.0, 0.2).unwrap();
        let cfg = SupportStudyConfig {
            model,
            sigma_ns: vec![0.0, 0.3],
            trials: 1,
            iterations: 20,
            atom: 4,
            with_integral: true,
            seed: 3,
        };
        let study = support_study(&d, &cfg).unwrap();
        let (_, y) = sample_single_atom_signal(&d, model, 4, RngSeed::new(3, 1).child(0)).unwrap();
        let map = crate::pursuits::single_atom_map(&y, &d).unwrap().indices()[0];
        assert_eq!(
            study.sr_histograms[0],
            SupportHistogram { source: HistogramSource::SrEmpirical, ..SupportHistogram::point_mass(20, map) }
        );
        assert!(study.integral_histograms[0].is_none());
        assert!(study.integral_histograms[1].is_some());
        let mut buf = Vec::new();
        study.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
    }
}
