//! Seeded Monte-Carlo sweeps over estimators, CSV output, SURE tuning and
//! the image denoising demo.
//!
//! Seed streams: the dictionary uses stream 0 of the base seed; signal `t`
//! at grid point `g` uses stream 1 (then `child(g).child(t)`), its SR run
//! stream 2, and held-out searches streams 3 and 4. Trials run in parallel
//! and are reduced in index order, so results do not depend on the thread
//! count.

pub mod config;
pub mod image;
pub mod sure;

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;

pub use config::{
    DictionarySpec, EpsilonSetting, EstimatorSpec, ExperimentConfig, LambdaSetting, NoiseKind, PriorKind, PursuitKind,
    Refit, SingleAtomStudy, SweepVar,
};

use crate::bayes;
use crate::error::{invalid, Error, Result};
use crate::model::{
    make_random_dictionary, make_unitary_dictionary, sample_signal, Dictionary, PriorSpec, RngSeed, SparseSignal,
    SupportPrior, MAX_ENUMERATED_SUPPORTS,
};
use crate::pursuits::{Pursuit, StoppingRule};
use crate::sr::{general_sr, prior_based_sr, Averaging, NoiseDomain, SrConfig, SrNoiseSpec};
use crate::unitary::{self, UnitaryModel};

/// Mean squared error over entries.
pub fn mse(estimate: &DVector<f64>, truth: &DVector<f64>) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::DimensionMismatch { expected: truth.len(), got: estimate.len() });
    }
    if truth.is_empty() {
        return invalid("cannot average over zero entries");
    }
    Ok((estimate - truth).norm_squared() / truth.len() as f64)
}

/// PSNR in dB for 8-bit data; `+inf` when the inputs are identical.
pub fn psnr(image: &[f64], reference: &[f64]) -> Result<f64> {
    if image.len() != reference.len() {
        return Err(Error::DimensionMismatch { expected: reference.len(), got: image.len() });
    }
    if image.is_empty() {
        return invalid("cannot compare empty images");
    }
    let err = image.iter().zip(reference).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / image.len() as f64;
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (255.0 * 255.0 / err).log10())
}

/// Sample mean and standard error of the mean.
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// One estimator at one grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveRow {
    pub sweep_value: f64,
    pub estimator: String,
    pub mse_mean: f64,
    pub mse_stderr: f64,
    pub trials: usize,
    pub signal_mse_mean: f64,
    pub signal_mse_stderr: f64,
    /// SR noise level used (SR estimators only).
    pub sigma_n: Option<f64>,
    /// Residual bound used (bound-driven pursuits only).
    pub epsilon: Option<f64>,
    /// Mean measurements seen per SR iteration.
    pub rows_per_iteration: Option<f64>,
    /// Per-trial representation errors, kept for paired comparisons.
    pub samples: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurveResult {
    pub scenario: String,
    pub sweep: String,
    pub rows: Vec<CurveRow>,
    /// Estimators left out, with the reason.
    pub absent: Vec<(String, String)>,
    pub config_hash: u64,
    pub wall_seconds: f64,
}

pub const CSV_HEADER: &str = "sweep_value,estimator,mse_mean,mse_stderr,trials,signal_mse_mean,signal_mse_stderr,\
                              sigma_n,epsilon,rows_per_iteration";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl CurveResult {
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        self.write_rows(out)
    }

    pub(crate) fn write_rows<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.sweep_value,
                r.estimator,
                r.mse_mean,
                r.mse_stderr,
                r.trials,
                r.signal_mse_mean,
                r.signal_mse_stderr,
                opt(r.sigma_n),
                opt(r.epsilon),
                opt(r.rows_per_iteration)
            )?;
        }
        Ok(())
    }

    pub fn csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("CSV is ASCII")
    }

    /// Run metadata as `key = value` lines.
    pub fn write_meta<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "scenario = {}", self.scenario)?;
        writeln!(out, "sweep = {}", self.sweep)?;
        writeln!(out, "config_hash = {:016x}", self.config_hash)?;
        writeln!(out, "wall_seconds = {:.3}", self.wall_seconds)?;
        for (name, why) in &self.absent {
            writeln!(out, "absent = {name}: {why}")?;
        }
        Ok(())
    }

    pub fn curve(&self, estimator: &str) -> Vec<&CurveRow> {
        self.rows.iter().filter(|r| r.estimator == estimator).collect()
    }

    pub fn row(&self, estimator: &str, sweep_value: f64) -> Option<&CurveRow> {
        self.rows.iter().find(|r| r.estimator == estimator && r.sweep_value == sweep_value)
    }

    /// Grid point with the lowest mean error for `estimator`.
    pub fn best(&self, estimator: &str) -> Option<&CurveRow> {
        self.curve(estimator).into_iter().fold(None, |best: Option<&CurveRow>, r| match best {
            Some(b) if b.mse_mean <= r.mse_mean => Some(b),
            _ => Some(r),
        })
    }
}

/// Mean and standard error of the per-trial difference `a - b`. Both rows
/// must come from the same grid point so the trials are paired.
pub fn paired_difference(a: &CurveRow, b: &CurveRow) -> Result<(f64, f64)> {
    if a.samples.len() != b.samples.len() || a.samples.is_empty() {
        return invalid("paired rows need the same nonzero number of trials");
    }
    let diffs: Vec<f64> = a.samples.iter().zip(&b.samples).map(|(x, y)| x - y).collect();
    Ok(mean_and_stderr(&diffs))
}

/// Dictionary described by the config, drawn from seed stream 0.
pub fn build_dictionary(cfg: &ExperimentConfig) -> Result<Dictionary> {
    let seed = RngSeed::new(cfg.seed, 0);
    match cfg.dictionary {
        DictionarySpec::Random => make_random_dictionary(cfg.n, cfg.m, seed),
        DictionarySpec::Unitary => make_unitary_dictionary(cfg.n, seed),
        DictionarySpec::OvercompleteDct => image::overcomplete_dct(8, 16),
    }
}

/// Everything that may change between grid points.
#[derive(Clone, Debug)]
struct Point {
    value: f64,
    prior: PriorSpec,
    k: usize,
    sigma_n: f64,
    p_mask: f64,
    epsilon: Option<f64>,
    sparsity: usize,
}

/// Parameters resolved for one estimator at one grid point.
#[derive(Clone, Copy, Debug, Default)]
struct Setting {
    sigma_n: Option<f64>,
    epsilon: Option<f64>,
    lambda: Option<f64>,
}

fn point_for(cfg: &ExperimentConfig, value: Option<f64>) -> Result<Point> {
    let mut card = cfg.cardinality;
    let mut sigma_nu = cfg.sigma_nu;
    let mut k = cfg.k;
    let mut sigma_n = cfg.sigma_n;
    let mut p_mask = cfg.p_mask;
    let mut epsilon = match cfg.epsilon {
        EpsilonSetting::Fixed(e) => Some(e),
        EpsilonSetting::Auto => None,
    };
    if let (Some(var), Some(v)) = (cfg.sweep, value) {
        match var {
            SweepVar::SigmaN => sigma_n = v,
            SweepVar::K => k = v as usize,
            SweepVar::Cardinality => card = v as usize,
            SweepVar::Epsilon => epsilon = Some(v),
            SweepVar::PMask => p_mask = v,
            SweepVar::SigmaNu => sigma_nu = v,
        }
    }
    let prior = match cfg.prior {
        PriorKind::Fixed => PriorSpec::fixed(card, cfg.sigma_alpha, sigma_nu)?,
        PriorKind::Bernoulli => PriorSpec::bernoulli(cfg.m, cfg.p, cfg.sigma_alpha, sigma_nu)?,
    };
    Ok(Point {
        value: value.unwrap_or(0.0),
        prior,
        k,
        sigma_n,
        p_mask,
        epsilon,
        sparsity: cfg.sparsity.unwrap_or(card),
    })
}

fn uses_epsilon(cfg: &ExperimentConfig, pursuit: PursuitKind) -> bool {
    pursuit == PursuitKind::Bp || (pursuit == PursuitKind::Omp && cfg.omp_residual_stop)
}

/// Activity probability implied by the prior.
fn activity(prior: &PriorSpec, m: usize) -> f64 {
    match &prior.support_prior {
        SupportPrior::FixedCardinality(c) => *c as f64 / m as f64,
        SupportPrior::IndependentBernoulli(p) => p.iter().sum::<f64>() / p.len() as f64,
    }
}

fn unitary_model(prior: &PriorSpec, m: usize) -> Result<UnitaryModel> {
    UnitaryModel::new(prior.sigma_alpha, prior.sigma_nu, activity(prior, m))
}

fn make_pursuit(kind: PursuitKind, cfg: &ExperimentConfig, point: &Point, set: &Setting) -> Result<Pursuit> {
    let eps = || set.epsilon.ok_or_else(|| Error::InvalidArgument("residual bound not resolved".into()));
    Ok(match kind {
        PursuitKind::Omp if cfg.omp_residual_stop => Pursuit::Omp(StoppingRule::ResidualBound(eps()?)),
        PursuitKind::Omp => Pursuit::Omp(StoppingRule::Cardinality(point.sparsity)),
        PursuitKind::Bp => Pursuit::BasisPursuit { epsilon: eps()? },
        PursuitKind::Sp => Pursuit::Subspace { sparsity: point.sparsity },
        PursuitKind::Mf => Pursuit::MatchedFilter,
        PursuitKind::Ht => Pursuit::HardThreshold {
            lambda: set.lambda.ok_or_else(|| Error::InvalidArgument("threshold not resolved".into()))?,
            c_squared: point.prior.c_squared(),
        },
    })
}

fn noise_spec(noise: NoiseKind, domain: NoiseDomain, sigma_n: f64, p_mask: f64) -> SrNoiseSpec {
    match noise {
        NoiseKind::Gaussian => SrNoiseSpec::gaussian(sigma_n),
        NoiseKind::Uniform => SrNoiseSpec::uniform(sigma_n),
        NoiseKind::Bernoulli => SrNoiseSpec::bernoulli(p_mask),
    }
    .in_domain(domain)
}

struct Outcome {
    alpha: DVector<f64>,
    rows_per_iteration: Option<f64>,
}

#[allow(clippy::too_many_arguments)]
fn run_estimator(
    cfg: &ExperimentConfig,
    dict: &Dictionary,
    point: &Point,
    est: &EstimatorSpec,
    set: &Setting,
    y: &DVector<f64>,
    sr_seed: RngSeed,
) -> Result<Outcome> {
    let model = point.prior.coefficient_model();
    let plain = |alpha| Ok(Outcome { alpha, rows_per_iteration: None });
    let sr_setup =
        |pursuit: PursuitKind, noise: NoiseKind, domain: NoiseDomain, averaging: Averaging| -> Result<SrConfig> {
            let sigma_n = set.sigma_n.unwrap_or(point.sigma_n);
            let mut p = make_pursuit(pursuit, cfg, point, set)?;
            if cfg.inflate_sr_epsilon && noise != NoiseKind::Bernoulli && point.prior.sigma_nu > 0.0 {
                let ratio = sigma_n / point.prior.sigma_nu;
                p = p.scale_residual_bound((1.0 + ratio * ratio).sqrt());
            }
            Ok(SrConfig {
                noise: noise_spec(noise, domain, sigma_n, point.p_mask),
                iterations: point.k,
                pursuit: p,
                averaging,
                seed: sr_seed,
            })
        };
    match est {
        EstimatorSpec::Plain { pursuit, refit } => {
            let res = make_pursuit(*pursuit, cfg, point, set)?.run(y, dict)?;
            plain(match refit {
                Refit::Raw => res.alpha_tilde,
                Refit::Ls => bayes::ls_estimate(dict, &res.support, y)?,
                Refit::Oracle => bayes::oracle_estimate(dict, model, &res.support, y)?,
            })
        }
        EstimatorSpec::Map => plain(bayes::exhaustive_map(dict, &point.prior, y)?.1),
        EstimatorSpec::Mmse => plain(bayes::exhaustive_mmse(dict, &point.prior, y)?),
        EstimatorSpec::MmseShrinkage => {
            let um = unitary_model(&point.prior, dict.m())?;
            plain(dict.correlations(y).map(|b| unitary::mmse_shrinkage(b, &um)))
        }
        EstimatorSpec::SrAsymptotic => {
            let lambda = set.lambda.ok_or_else(|| Error::InvalidArgument("threshold not resolved".into()))?;
            let sigma_n = set.sigma_n.unwrap_or(point.sigma_n);
            let c2 = model.c_squared();
            plain(dict.correlations(y).map(|b| unitary::subtractive_hard_threshold_mean(b, lambda, sigma_n, c2)))
        }
        EstimatorSpec::PriorBasedSr { pursuit, noise, domain } => {
            let sr = sr_setup(*pursuit, *noise, *domain, Averaging::PosteriorWeighted)?;
            let report = prior_based_sr(y, dict, &point.prior, &sr)?;
            Ok(Outcome { alpha: report.estimate, rows_per_iteration: Some(report.rows_used as f64 / point.k as f64) })
        }
        EstimatorSpec::GeneralSr { pursuit, refit, noise, domain } => {
            let averaging = match refit {
                Refit::Ls => Averaging::LsMean,
                _ => Averaging::OracleMean,
            };
            let sr = sr_setup(*pursuit, *noise, *domain, averaging)?;
            let report = general_sr(y, dict, Some(model), &sr)?;
            Ok(Outcome { alpha: report.estimate, rows_per_iteration: Some(report.rows_used as f64 / point.k as f64) })
        }
    }
}

/// Reason an estimator cannot run on this configuration, if any.
fn infeasibility(est: &EstimatorSpec, dict: &Dictionary, point: &Point) -> Option<String> {
    match est {
        EstimatorSpec::Map | EstimatorSpec::Mmse => {
            let count = point.prior.support_count(dict.m());
            (count > MAX_ENUMERATED_SUPPORTS)
                .then(|| format!("{count} supports exceed the enumeration limit {MAX_ENUMERATED_SUPPORTS}"))
        }
        EstimatorSpec::MmseShrinkage | EstimatorSpec::SrAsymptotic => {
            if dict.kind() != crate::model::DictionaryKind::Unitary {
                Some("closed forms need a unitary dictionary".into())
            } else {
                unitary_model(&point.prior, dict.m()).err().map(|e| e.to_string())
            }
        }
        _ => None,
    }
}

struct Batch {
    signals: Vec<SparseSignal>,
    sr_seeds: Vec<RngSeed>,
}

fn batch(dict: &Dictionary, prior: &PriorSpec, seed: u64, signal_stream: u64, g: usize, count: usize) -> Result<Batch> {
    let signals = (0..count)
        .map(|t| sample_signal(dict, prior, RngSeed::new(seed, signal_stream).child(g as u64).child(t as u64)))
        .collect::<Result<_>>()?;
    let sr_seeds = (0..count).map(|t| RngSeed::new(seed, signal_stream + 1).child(g as u64).child(t as u64)).collect();
    Ok(Batch { signals, sr_seeds })
}

/// Per-trial `(representation error, signal error, rows per iteration)`.
fn evaluate(
    cfg: &ExperimentConfig,
    dict: &Dictionary,
    point: &Point,
    est: &EstimatorSpec,
    set: &Setting,
    b: &Batch,
) -> Result<Vec<(f64, f64, Option<f64>)>> {
    b.signals
        .par_iter()
        .zip(b.sr_seeds.par_iter())
        .map(|(s, seed)| {
            let out = run_estimator(cfg, dict, point, est, set, &s.y, *seed)?;
            let rep = mse(&out.alpha, &s.alpha)?;
            let sig = mse(&dict.synthesize(&out.alpha), &s.x)?;
            Ok((rep, sig, out.rows_per_iteration))
        })
        .collect()
}

fn mean_error(
    cfg: &ExperimentConfig,
    dict: &Dictionary,
    point: &Point,
    est: &EstimatorSpec,
    set: &Setting,
    b: &Batch,
) -> Result<f64> {
    let errs = evaluate(cfg, dict, point, est, set, b)?;
    Ok(errs.iter().map(|e| e.0).sum::<f64>() / errs.len() as f64)
}

/// First candidate with the lowest held-out error.
fn search<F: FnMut(f64) -> Result<f64>>(candidates: &[f64], mut score: F) -> Result<f64> {
    let mut best = (candidates[0], f64::INFINITY);
    for &c in candidates {
        let s = score(c)?;
        if s < best.1 {
            best = (c, s);
        }
    }
    Ok(best.0)
}

struct Resolver<'a> {
    cfg: &'a ExperimentConfig,
    dict: &'a Dictionary,
    point: &'a Point,
    holdout: Option<Batch>,
    g: usize,
    eps_cache: BTreeMap<(PursuitKind, Refit), f64>,
}

impl<'a> Resolver<'a> {
    fn holdout(&mut self) -> Result<&Batch> {
        if self.holdout.is_none() {
            if self.cfg.holdout_trials == 0 {
                return invalid("held-out searches need holdout_trials >= 1");
            }
            self.holdout =
                Some(batch(self.dict, &self.point.prior, self.cfg.seed, 3, self.g, self.cfg.holdout_trials)?);
        }
        Ok(self.holdout.as_ref().unwrap())
    }

    fn epsilon(&mut self, pursuit: PursuitKind, refit: Refit) -> Result<f64> {
        if let Some(e) = self.point.epsilon {
            return Ok(e);
        }
        if let Some(&e) = self.eps_cache.get(&(pursuit, refit)) {
            return Ok(e);
        }
        let scale = self.point.prior.sigma_nu * (self.cfg.n as f64).sqrt();
        let candidates: Vec<f64> = self.cfg.epsilon_factors.iter().map(|f| f * scale).collect();
        let (cfg, dict, point) = (self.cfg, self.dict, self.point);
        let plain = EstimatorSpec::Plain { pursuit, refit };
        let hold = self.holdout()?;
        let best = search(&candidates, |e| {
            let set = Setting { epsilon: Some(e), ..Setting::default() };
            mean_error(cfg, dict, point, &plain, &set, hold)
        })?;
        self.eps_cache.insert((pursuit, refit), best);
        Ok(best)
    }

    fn resolve(&mut self, est: &EstimatorSpec) -> Result<Setting> {
        let mut set = Setting::default();
        if let Some(p) = est.pursuit() {
            if uses_epsilon(self.cfg, p) {
                set.epsilon = Some(self.epsilon(p, est.tuning_refit())?);
            }
        }
        let needs_lambda = est.pursuit() == Some(PursuitKind::Ht) || *est == EstimatorSpec::SrAsymptotic;
        if needs_lambda {
            set.lambda = Some(match self.cfg.lambda {
                LambdaSetting::Fixed(l) => l,
                LambdaSetting::Map => unitary_model(&self.point.prior, self.dict.m())?.lambda_map(0),
            });
        }
        let noisy = est.is_sr() || *est == EstimatorSpec::SrAsymptotic;
        let mask = matches!(
            est,
            EstimatorSpec::PriorBasedSr { noise: NoiseKind::Bernoulli, .. }
                | EstimatorSpec::GeneralSr { noise: NoiseKind::Bernoulli, .. }
        );
        if noisy && !mask {
            set.sigma_n = Some(self.point.sigma_n);
            if self.cfg.sweep != Some(SweepVar::SigmaN) && !self.cfg.inner_sigma_n.is_empty() {
                let (cfg, dict, point) = (self.cfg, self.dict, self.point);
                let candidates = cfg.inner_sigma_n.clone();
                let hold = self.holdout()?;
                let best = search(&candidates, |sn| {
                    let trial = Setting { sigma_n: Some(sn), ..set };
                    mean_error(cfg, dict, point, est, &trial, hold)
                })?;
                set.sigma_n = Some(best);
            }
        }
        Ok(set)
    }
}

/// MSE of every configured estimator at every grid point.
pub fn run_mse_sweep(cfg: &ExperimentConfig) -> Result<CurveResult> {
    cfg.validate()?;
    cfg.require_estimators()?;
    let start = Instant::now();
    let dict = build_dictionary(cfg)?;
    let values: Vec<Option<f64>> = match cfg.sweep {
        Some(_) => cfg.grid.iter().map(|&v| Some(v)).collect(),
        None => vec![None],
    };
    let mut rows = Vec::new();
    let mut absent: Vec<(String, String)> = Vec::new();
    for (g, value) in values.into_iter().enumerate() {
        let point = point_for(cfg, value)?;
        let main = batch(&dict, &point.prior, cfg.seed, 1, g, cfg.trials)?;
        let mut resolver = Resolver { cfg, dict: &dict, point: &point, holdout: None, g, eps_cache: BTreeMap::new() };
        for (name, est) in &cfg.estimators {
            if let Some(why) = infeasibility(est, &dict, &point) {
                if !absent.iter().any(|(n, _)| n == name) {
                    absent.push((name.clone(), why));
                }
                continue;
            }
            let set = resolver.resolve(est)?;
            let errs = evaluate(cfg, &dict, &point, est, &set, &main)?;
            let rep: Vec<f64> = errs.iter().map(|e| e.0).collect();
            let sig: Vec<f64> = errs.iter().map(|e| e.1).collect();
            let (mse_mean, mse_stderr) = mean_and_stderr(&rep);
            let (signal_mse_mean, signal_mse_stderr) = mean_and_stderr(&sig);
            let rows_per_iteration =
                errs[0].2.map(|_| errs.iter().filter_map(|e| e.2).sum::<f64>() / errs.len() as f64);
            rows.push(CurveRow {
                sweep_value: point.value,
                estimator: name.clone(),
                mse_mean,
                mse_stderr,
                trials: cfg.trials,
                signal_mse_mean,
                signal_mse_stderr,
                sigma_n: set.sigma_n,
                epsilon: set.epsilon,
                rows_per_iteration,
                samples: rep,
            });
        }
    }
    Ok(CurveResult {
        scenario: cfg.scenario.clone(),
        sweep: cfg.sweep.map(|s| s.as_str().to_string()).unwrap_or_else(|| "none".into()),
        rows,
        absent,
        config_hash: cfg.fingerprint(),
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Cardinality sweep; SR noise levels come from the held-out search over
/// `inner_sigma_n`.
pub fn run_cardinality_sweep(cfg: &ExperimentConfig) -> Result<CurveResult> {
    if cfg.sweep != Some(SweepVar::Cardinality) {
        return Err(Error::InvalidArgument("a cardinality sweep needs `sweep = cardinality`".into()));
    }
    if cfg.estimators.iter().any(|(_, e)| e.is_sr()) && cfg.inner_sigma_n.is_empty() {
        return Err(Error::MissingKey("inner_sigma_n".into()));
    }
    run_mse_sweep(cfg)
}

/// Mask-noise curve over keep probabilities next to the Gaussian-noise
/// curve of the same estimators.
#[derive(Clone, Debug, PartialEq)]
pub struct BernoulliComparison {
    pub mask: CurveResult,
    pub gaussian: CurveResult,
}

impl BernoulliComparison {
    /// `(mask token, Gaussian token)` pairs.
    pub fn pairs(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = Vec::new();
        for r in &self.mask.rows {
            if !out.iter().any(|(m, _)| *m == r.estimator) {
                out.push((r.estimator.clone(), gaussian_token(&r.estimator)));
            }
        }
        out
    }

    /// Best mask MSE divided by best Gaussian MSE for each pair.
    pub fn optimal_ratios(&self) -> Vec<(String, f64)> {
        self.pairs()
            .into_iter()
            .filter_map(|(m, g)| {
                let a = self.mask.best(&m)?;
                let b = self.gaussian.best(&g)?;
                Some((m, a.mse_mean / b.mse_mean))
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        self.mask.write_rows(out)?;
        self.gaussian.write_rows(out)
    }
}

fn gaussian_token(token: &str) -> String {
    token.replace("bernoulli", "gaussian")
}

pub fn run_bernoulli_sweep(cfg: &ExperimentConfig) -> Result<BernoulliComparison> {
    if cfg.sweep != Some(SweepVar::PMask) {
        return Err(Error::InvalidArgument("a mask sweep needs `sweep = p_mask`".into()));
    }
    if cfg.baseline_sigma_n.is_empty() {
        return Err(Error::MissingKey("baseline_sigma_n".into()));
    }
    let masked: Vec<(String, EstimatorSpec)> = cfg
        .estimators
        .iter()
        .filter(|(_, e)| {
            matches!(
                e,
                EstimatorSpec::PriorBasedSr { noise: NoiseKind::Bernoulli, .. }
                    | EstimatorSpec::GeneralSr { noise: NoiseKind::Bernoulli, .. }
            )
        })
        .cloned()
        .collect();
    if masked.is_empty() {
        return Err(Error::InvalidArgument("no estimator uses mask noise".into()));
    }
    let mask_cfg = ExperimentConfig { estimators: masked.clone(), ..cfg.clone() };
    let baseline = masked
        .iter()
        .map(|(name, _)| {
            let token = gaussian_token(name);
            EstimatorSpec::parse(&token).map(|e| (token, e)).map_err(Error::InvalidArgument)
        })
        .collect::<Result<_>>()?;
    let gauss_cfg = ExperimentConfig {
        estimators: baseline,
        sweep: Some(SweepVar::SigmaN),
        grid: cfg.baseline_sigma_n.clone(),
        ..cfg.clone()
    };
    Ok(BernoulliComparison { mask: run_mse_sweep(&mask_cfg)?, gaussian: run_mse_sweep(&gauss_cfg)? })
}
