//! Stochastic-resonance estimators.
//!
//! Both algorithms run a pursuit `K` times on randomly perturbed copies of
//! the measurement and collect the recovered supports. They differ in how
//! the supports are combined:
//!
//! * [`prior_based_sr`] keeps the *set* of distinct supports and weights each
//!   one by its posterior probability (multiplicity is ignored);
//! * [`general_sr`] averages the per-iteration estimates, so a support counts
//!   as often as it was recovered. Each estimate is computed on the original,
//!   unperturbed measurement.
//!
//! Iteration `k` draws its noise from `seed.child(k)`, so the result does not
//! depend on how iterations are scheduled across threads.

use std::collections::BTreeMap;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{StandardNormal, Uniform};
use rayon::prelude::*;

use crate::bayes::{self, OracleContext};
use crate::error::{invalid, Error, Result};
use crate::model::{CoefficientModel, Dictionary, PriorSpec, RngSeed, SupportSet};
use crate::pursuits::Pursuit;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseDomain {
    /// Added to `y` (length `n`).
    Signal,
    /// Added to the correlations `D^T y` (length `m`).
    Representation,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SrNoise {
    Gaussian {
        sigma_n: f64,
    },
    /// Zero-mean uniform with standard deviation `sigma_n`, i.e. half-width
    /// `sqrt(3) sigma_n`.
    Uniform {
        sigma_n: f64,
    },
    /// Keep each measurement independently with probability `keep`.
    BernoulliMask {
        keep: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SrNoiseSpec {
    pub noise: SrNoise,
    pub domain: NoiseDomain,
}

impl SrNoiseSpec {
    pub fn gaussian(sigma_n: f64) -> Self {
        Self { noise: SrNoise::Gaussian { sigma_n }, domain: NoiseDomain::Signal }
    }

    pub fn uniform(sigma_n: f64) -> Self {
        Self { noise: SrNoise::Uniform { sigma_n }, domain: NoiseDomain::Signal }
    }

    pub fn bernoulli(keep: f64) -> Self {
        Self { noise: SrNoise::BernoulliMask { keep }, domain: NoiseDomain::Signal }
    }

    pub fn in_domain(mut self, domain: NoiseDomain) -> Self {
        self.domain = domain;
        self
    }

    fn validate(&self) -> Result<()> {
        match self.noise {
            SrNoise::Gaussian { sigma_n } | SrNoise::Uniform { sigma_n } => {
                if !(sigma_n >= 0.0 && sigma_n.is_finite()) {
                    return invalid(format!("SR noise level must be finite and >= 0, got {sigma_n}"));
                }
            }
            SrNoise::BernoulliMask { keep } => {
                if !(keep > 0.0 && keep <= 1.0) {
                    return invalid(format!("keep probability must lie in (0, 1], got {keep}"));
                }
                if self.domain != NoiseDomain::Signal {
                    return invalid("multiplicative mask noise only acts on the signal");
                }
            }
        }
        Ok(())
    }
}

/// Draws one additive noise vector (or a 0/1 mask) of length `dim`.
pub fn sample_sr_noise<R: Rng>(noise: SrNoise, dim: usize, rng: &mut R) -> Vec<f64> {
    match noise {
        SrNoise::Gaussian { sigma_n } => {
            if sigma_n == 0.0 {
                return vec![0.0; dim];
            }
            (0..dim).map(|_| sigma_n * rng.sample::<f64, _>(StandardNormal)).collect()
        }
        SrNoise::Uniform { sigma_n } => {
            if sigma_n == 0.0 {
                return vec![0.0; dim];
            }
            let r = 3f64.sqrt() * sigma_n;
            let dist = Uniform::new_inclusive(-r, r).expect("finite positive half-width");
            (0..dim).map(|_| rng.sample(dist)).collect()
        }
        SrNoise::BernoulliMask { keep } => (0..dim).map(|_| if rng.random_bool(keep) { 1.0 } else { 0.0 }).collect(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Averaging {
    /// Posterior weights over the distinct supports (prior-based SR).
    PosteriorWeighted,
    /// Mean of oracle estimates on the recovered supports.
    OracleMean,
    /// Mean of least-squares estimates on the recovered supports.
    LsMean,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SrConfig {
    pub noise: SrNoiseSpec,
    pub iterations: usize,
    pub pursuit: Pursuit,
    pub averaging: Averaging,
    pub seed: RngSeed,
}

impl SrConfig {
    fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return invalid("SR needs at least one iteration");
        }
        self.noise.validate()?;
        if self.noise.domain == NoiseDomain::Representation && !self.pursuit.works_on_correlations() {
            return invalid(format!(
                "representation-domain noise needs a correlation-based pursuit, not `{}`",
                self.pursuit.name()
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SrRunReport {
    pub estimate: DVector<f64>,
    /// How often each support was recovered; counts sum to `K`.
    pub support_counts: BTreeMap<SupportSet, usize>,
    pub distinct_supports: usize,
    pub per_iteration_supports: Vec<SupportSet>,
    /// Iterations whose support has zero prior probability (prior-based SR only).
    pub skipped: usize,
    /// Measurements seen by the pursuit, summed over iterations.
    pub rows_used: usize,
}

struct Recovered {
    support: SupportSet,
    rows: usize,
}

fn recover_support(
    y: &DVector<f64>,
    beta: &DVector<f64>,
    dict: &Dictionary,
    cfg: &SrConfig,
    k: usize,
) -> Result<Recovered> {
    let mut rng = cfg.seed.child(k as u64).rng();
    let n = dict.n();
    match (cfg.noise.noise, cfg.noise.domain) {
        (SrNoise::BernoulliMask { keep }, _) => {
            let mask = sample_sr_noise(cfg.noise.noise, n, &mut rng);
            let rows: Vec<usize> = (0..n).filter(|&i| mask[i] != 0.0).collect();
            if rows.is_empty() {
                return Ok(Recovered { support: SupportSet::empty(), rows: 0 });
            }
            if rows.len() == n {
                let support = cfg.pursuit.run(y, dict)?.support;
                return Ok(Recovered { support, rows: n });
            }
            let sub = dict.subsample_rows(&rows);
            let y_sub = DVector::from_iterator(rows.len(), rows.iter().map(|&i| y[i]));
            let pursuit = cfg.pursuit.scale_residual_bound(keep.sqrt());
            let support = pursuit.run(&y_sub, &sub)?.support;
            Ok(Recovered { support, rows: rows.len() })
        }
        (noise, NoiseDomain::Signal) => {
            let e = sample_sr_noise(noise, n, &mut rng);
            let perturbed = y + DVector::from_vec(e);
            Ok(Recovered { support: cfg.pursuit.run(&perturbed, dict)?.support, rows: n })
        }
        (noise, NoiseDomain::Representation) => {
            let e = sample_sr_noise(noise, dict.m(), &mut rng);
            let perturbed = beta + DVector::from_vec(e);
            Ok(Recovered { support: cfg.pursuit.run_on_correlations(&perturbed)?.support, rows: n })
        }
    }
}

struct Collected {
    per_iteration: Vec<SupportSet>,
    counts: BTreeMap<SupportSet, usize>,
    rows_used: usize,
}

fn collect_supports(y: &DVector<f64>, dict: &Dictionary, cfg: &SrConfig) -> Result<Collected> {
    dict.check_signal(y)?;
    cfg.validate()?;
    let beta = dict.correlations(y);
    let recovered: Vec<Recovered> = (0..cfg.iterations)
        .into_par_iter()
        .with_min_len(8)
        .map(|k| recover_support(y, &beta, dict, cfg, k))
        .collect::<Result<_>>()?;
    let mut counts = BTreeMap::new();
    let mut rows_used = 0;
    for r in &recovered {
        *counts.entry(r.support.clone()).or_insert(0) += 1;
        rows_used += r.rows;
    }
    let per_iteration = recovered.into_iter().map(|r| r.support).collect();
    Ok(Collected { per_iteration, counts, rows_used })
}

/// Prior-based SR: posterior-weighted average over the distinct supports
/// recovered across `K` perturbed pursuits.
pub fn prior_based_sr(y: &DVector<f64>, dict: &Dictionary, prior: &PriorSpec, cfg: &SrConfig) -> Result<SrRunReport> {
    if cfg.averaging != Averaging::PosteriorWeighted {
        return invalid("prior-based SR uses posterior weighting");
    }
    prior.check_atoms(dict.m())?;
    let collected = collect_supports(y, dict, cfg)?;
    let mut skipped = 0;
    let mut kept = Vec::with_capacity(collected.counts.len());
    for (s, &c) in &collected.counts {
        if prior.log_prior(s, dict.m()) == f64::NEG_INFINITY {
            skipped += c;
        } else {
            kept.push(s.clone());
        }
    }
    let estimate = bayes::weighted_average_over_set(dict, prior, y, &kept)?;
    Ok(SrRunReport {
        estimate,
        distinct_supports: collected.counts.len(),
        support_counts: collected.counts,
        per_iteration_supports: collected.per_iteration,
        skipped,
        rows_used: collected.rows_used,
    })
}

/// General SR: the mean over iterations of the oracle (or least-squares)
/// estimate on each recovered support, evaluated on the original `y`.
pub fn general_sr(
    y: &DVector<f64>,
    dict: &Dictionary,
    model: Option<CoefficientModel>,
    cfg: &SrConfig,
) -> Result<SrRunReport> {
    let oracle_model = match (cfg.averaging, model) {
        (Averaging::PosteriorWeighted, _) => return invalid("general SR averages oracle or LS estimates"),
        (Averaging::OracleMean, None) => {
            return Err(Error::InvalidArgument("oracle averaging needs sigma_alpha and sigma_nu".into()))
        }
        (Averaging::OracleMean, Some(m)) => Some(m),
        (Averaging::LsMean, _) => None,
    };
    let collected = collect_supports(y, dict, cfg)?;
    let estimate = average_with_multiplicity(y, dict, oracle_model, &collected.counts, cfg.iterations)?;
    Ok(SrRunReport {
        estimate,
        distinct_supports: collected.counts.len(),
        support_counts: collected.counts,
        per_iteration_supports: collected.per_iteration,
        skipped: 0,
        rows_used: collected.rows_used,
    })
}

/// `(1/K) sum_S count_S * estimate_S`, each distinct support solved once.
pub(crate) fn average_with_multiplicity(
    y: &DVector<f64>,
    dict: &Dictionary,
    oracle_model: Option<CoefficientModel>,
    counts: &BTreeMap<SupportSet, usize>,
    iterations: usize,
) -> Result<DVector<f64>> {
    let mut sum = DVector::zeros(dict.m());
    for (s, &c) in counts {
        if s.is_empty() {
            continue;
        }
        let est = match oracle_model {
            Some(m) => OracleContext::new(dict, m, s.clone())?.estimate(y),
            None => bayes::ls_estimate(dict, s, y)?,
        };
        for &i in s.indices() {
            sum[i] += c as f64 * est[i];
        }
    }
    Ok(sum / iterations as f64)
}
