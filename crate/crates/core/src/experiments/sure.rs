//! SURE tuning of the asymptotic SR estimator on a unitary dictionary.
//!
//! `(lambda, sigma_n)` is chosen by minimizing SURE pooled over a held-out
//! batch (stream 3), then the closed-form estimators are scored on fresh
//! test signals (stream 1).

use std::io::Write;

use rayon::prelude::*;

use super::config::{DictionarySpec, ExperimentConfig, PriorKind};
use super::{build_dictionary, mean_and_stderr};
use crate::error::{invalid, Result};
use crate::model::{sample_signal, Dictionary, PriorSpec, RngSeed};
use crate::unitary::{
    linspace, mmse_shrinkage, subtractive_hard_threshold_mean, sure_objective, tune_sure, SureChoice, SureGrid,
    UnitaryModel,
};

/// SURE and true error of one grid cell, both per entry on the tuning batch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SureCell {
    pub lambda: f64,
    pub sigma_n: f64,
    /// `(sum SURE + ||alpha||^2) / entries`, an unbiased MSE estimate.
    pub sure_mse: f64,
    pub mse: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SureEstimate {
    pub estimator: &'static str,
    pub mse_mean: f64,
    pub mse_stderr: f64,
    /// Threshold and SR noise used; `None` for MMSE shrinkage.
    pub lambda: Option<f64>,
    pub sigma_n: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SureStudy {
    pub lambda_map: f64,
    pub choice: SureChoice,
    pub cells: Vec<SureCell>,
    /// Test-set errors of MMSE shrinkage, MAP hard thresholding and the
    /// tuned SR limit.
    pub estimates: Vec<SureEstimate>,
    pub trials: usize,
    pub c_squared: f64,
}

impl SureStudy {
    pub const GRID_HEADER: &'static str = "lambda,sigma_n,sure_mse,mse";
    pub const HEADER: &'static str = "estimator,mse_mean,mse_stderr,trials,lambda,sigma_n";
    pub const SHRINKAGE_HEADER: &'static str = "beta,mmse_shrinkage,map_hard_threshold,sr_asymptotic";

    pub fn write_grid<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "{}", Self::GRID_HEADER)?;
        for c in &self.cells {
            writeln!(out, "{},{},{:e},{:e}", c.lambda, c.sigma_n, c.sure_mse, c.mse)?;
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "{}", Self::HEADER)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for e in &self.estimates {
            writeln!(
                out,
                "{},{:e},{:e},{},{},{}",
                e.estimator,
                e.mse_mean,
                e.mse_stderr,
                self.trials,
                opt(e.lambda),
                opt(e.sigma_n)
            )?;
        }
        Ok(())
    }

    /// The three shrinkage curves on `beta` in `[-range, range]`.
    pub fn write_shrinkage<W: Write>(&self, model: &UnitaryModel, range: f64, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "{}", Self::SHRINKAGE_HEADER)?;
        let c2 = self.c_squared;
        for b in linspace(-range, range, 301) {
            writeln!(
                out,
                "{},{:e},{:e},{:e}",
                b,
                mmse_shrinkage(b, model),
                subtractive_hard_threshold_mean(b, self.lambda_map, 0.0, c2),
                subtractive_hard_threshold_mean(b, self.choice.lambda, self.choice.sigma_n, c2)
            )?;
        }
        Ok(())
    }

    pub fn estimate(&self, name: &str) -> Option<&SureEstimate> {
        self.estimates.iter().find(|e| e.estimator == name)
    }
}

struct Batch {
    betas: Vec<Vec<f64>>,
    alphas: Vec<Vec<f64>>,
}

fn batch(dict: &Dictionary, prior: &PriorSpec, seed: RngSeed, trials: usize) -> Result<Batch> {
    let signals = (0..trials)
        .into_par_iter()
        .map(|t| sample_signal(dict, prior, seed.child(t as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Batch {
        betas: signals.iter().map(|s| dict.correlations(&s.y).iter().copied().collect()).collect(),
        alphas: signals.iter().map(|s| s.alpha.iter().copied().collect()).collect(),
    })
}

/// Per-signal MSE of an entrywise estimator.
fn errors(b: &Batch, f: impl Fn(f64) -> f64 + Sync) -> Vec<f64> {
    b.betas
        .par_iter()
        .zip(&b.alphas)
        .map(|(beta, alpha)| beta.iter().zip(alpha).map(|(x, a)| (f(*x) - a).powi(2)).sum::<f64>() / beta.len() as f64)
        .collect()
}

pub fn run_sure_study(cfg: &ExperimentConfig) -> Result<SureStudy> {
    if cfg.dictionary != DictionarySpec::Unitary || cfg.prior != PriorKind::Bernoulli {
        return invalid("SURE tuning needs `dictionary = unitary` and `prior = bernoulli`");
    }
    if cfg.holdout_trials == 0 {
        return invalid("SURE tuning needs holdout_trials >= 1");
    }
    let dict = build_dictionary(cfg)?;
    let m = dict.m();
    let prior = PriorSpec::bernoulli(m, cfg.p, cfg.sigma_alpha, cfg.sigma_nu)?;
    let model = UnitaryModel::new(cfg.sigma_alpha, cfg.sigma_nu, cfg.p)?;
    let c2 = model.c_squared();
    let grid = SureGrid::default_for(&model);

    let tuning = batch(&dict, &prior, RngSeed::new(cfg.seed, 3), cfg.holdout_trials)?;
    let pooled: Vec<f64> = tuning.betas.concat();
    let choice = tune_sure(&pooled, &model, &grid)?;

    let entries = pooled.len() as f64;
    let energy: f64 = tuning.alphas.iter().flatten().map(|a| a * a).sum();
    let pairs: Vec<(f64, f64)> =
        grid.sigma_ns.iter().flat_map(|&s| grid.lambdas.iter().map(move |&l| (l, s))).collect();
    let cells = pairs
        .par_iter()
        .map(|&(lambda, sigma_n)| {
            let sure = sure_objective(&pooled, lambda, sigma_n, &model);
            let mse = errors(&tuning, |b| subtractive_hard_threshold_mean(b, lambda, sigma_n, c2)).iter().sum::<f64>()
                / tuning.betas.len() as f64;
            SureCell { lambda, sigma_n, sure_mse: (sure + energy) / entries, mse }
        })
        .collect();

    let test = batch(&dict, &prior, RngSeed::new(cfg.seed, 1).child(0), cfg.trials)?;
    let lambda_map = model.lambda_map(0);
    let score = |estimator, lambda, sigma_n, errs: Vec<f64>| {
        let (mse_mean, mse_stderr) = mean_and_stderr(&errs);
        SureEstimate { estimator, mse_mean, mse_stderr, lambda, sigma_n }
    };
    let estimates = vec![
        score("mmse_shrinkage", None, None, errors(&test, |b| mmse_shrinkage(b, &model))),
        score(
            "map",
            Some(lambda_map),
            Some(0.0),
            errors(&test, |b| subtractive_hard_threshold_mean(b, lambda_map, 0.0, c2)),
        ),
        score(
            "sr_asymptotic",
            Some(choice.lambda),
            Some(choice.sigma_n),
            errors(&test, |b| subtractive_hard_threshold_mean(b, choice.lambda, choice.sigma_n, c2)),
        ),
    ];
    Ok(SureStudy { lambda_map, choice, cells, estimates, trials: cfg.trials, c_squared: c2 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(trials: usize, holdout: usize) -> ExperimentConfig {
        ExperimentConfig::parse(&format!(
            "n = 20\nm = 20\ndictionary = unitary\nprior = bernoulli\np = 0.1\n\
             trials = {trials}\nholdout_trials = {holdout}\n"
        ))
        .unwrap()
    }

    #[test]
    fn rejects_overcomplete_setups() {
        let cfg = ExperimentConfig::parse("n = 10\nm = 20\nprior = bernoulli\n").unwrap();
        assert!(run_sure_study(&cfg).is_err());
    }

    #[test]
    fn choice_is_the_grid_minimum() {
        let s = run_sure_study(&small(50, 200)).unwrap();
        assert_eq!(s.cells.len(), 900);
        let best = s.cells.iter().map(|c| c.sure_mse).fold(f64::INFINITY, f64::min);
        let chosen = s.cells.iter().find(|c| c.lambda == s.choice.lambda && c.sigma_n == s.choice.sigma_n).unwrap();
        assert!((chosen.sure_mse - best).abs() <= 1e-12 * best.abs());
    }

    #[test]
    fn tuned_sr_sits_between_mmse_and_map() {
        let s = run_sure_study(&small(2000, 500)).unwrap();
        let get = |n| s.estimate(n).unwrap().mse_mean;
        assert!(get("mmse_shrinkage") <= get("sr_asymptotic"));
        assert!(get("sr_asymptotic") < get("map"));
    }

    #[test]
    fn writers_emit_one_line_per_row() {
        let s = run_sure_study(&small(10, 20)).unwrap();
        let mut a = Vec::new();
        s.write_grid(&mut a).unwrap();
        assert_eq!(String::from_utf8(a).unwrap().lines().count(), 901);
        let mut b = Vec::new();
        s.write_csv(&mut b).unwrap();
        assert_eq!(String::from_utf8(b).unwrap().lines().count(), 4);
        let model = UnitaryModel::new(1.0, 0.2, 0.1).unwrap();
        let mut c = Vec::new();
        s.write_shrinkage(&model, 1.5, &mut c).unwrap();
        assert_eq!(String::from_utf8(c).unwrap().lines().count(), 302);
    }
}
