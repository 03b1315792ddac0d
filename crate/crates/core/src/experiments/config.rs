//! `key = value` experiment descriptions.
//!
//! One setting per line; `#` starts a comment; blank lines are ignored.
//! Lists are comma separated. Unknown keys are rejected with their line
//! number so typos do not silently fall back to defaults.
//!
//! ```text
//! scenario = fig1
//! n = 50
//! m = 100
//! cardinality = 1
//! sigma_nu = 0.2
//! estimators = map, mmse, alg1:omp
//! sweep = sigma_n
//! grid = 0.1, 0.2, 0.3, 0.4, 0.5, 0.6
//! k = 100
//! trials = 10000
//! seed = 1
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::sr::NoiseDomain;

/// Every key the parser accepts, with its meaning.
pub const KEYS: &[(&str, &str)] = &[
    ("scenario", "name used for output files"),
    ("n", "signal dimension"),
    ("m", "number of atoms"),
    ("dictionary", "random | unitary | odct (image patches)"),
    ("prior", "fixed | bernoulli"),
    ("cardinality", "nonzeros per signal for the fixed prior"),
    ("p", "activity probability for the Bernoulli prior"),
    ("sigma_alpha", "coefficient standard deviation"),
    ("sigma_nu", "measurement noise standard deviation"),
    ("estimators", "comma separated estimator tokens"),
    ("pursuit_stop", "cardinality | residual (OMP stopping rule)"),
    ("sparsity", "L for subspace pursuit and cardinality-stopped OMP (default: cardinality)"),
    ("epsilon", "residual bound, a number or `auto` (held-out search)"),
    ("epsilon_factors", "multiples of sigma_nu sqrt(n) searched by epsilon = auto"),
    ("sr_epsilon", "fixed | inflate (scale the bound by sqrt(1 + sigma_n^2 / sigma_nu^2) inside SR)"),
    ("lambda", "hard threshold, a number or `map`"),
    ("k", "SR iterations"),
    ("sigma_n", "SR noise level"),
    ("p_mask", "keep probability of multiplicative mask noise"),
    ("sweep", "sigma_n | k | cardinality | epsilon | p_mask | sigma_nu"),
    ("grid", "values of the swept variable"),
    ("inner_sigma_n", "SR noise levels searched on held-out trials at each grid point"),
    ("baseline_sigma_n", "Gaussian SR noise levels compared against mask noise"),
    ("trials", "Monte-Carlo signals per grid point"),
    ("holdout_trials", "signals used for held-out parameter searches"),
    ("seed", "base random seed"),
    ("threads", "worker threads (results do not depend on it)"),
    ("atom", "index of the active atom in single-atom studies"),
    ("study", "support | domains (single-atom histogram study or noise-domain comparison)"),
    ("integral", "yes | no (also evaluate the selection-probability integral)"),
    ("image", "path of an 8-bit binary PGM image"),
    ("patch_sparsity", "candidate L values for image denoising"),
    ("tune_fraction", "fraction of patches used to tune image parameters"),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DictionarySpec {
    Random,
    Unitary,
    OvercompleteDct,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PriorKind {
    Fixed,
    Bernoulli,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PursuitKind {
    Omp,
    Bp,
    Sp,
    Mf,
    Ht,
}

impl PursuitKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PursuitKind::Omp => "omp",
            PursuitKind::Bp => "bp",
            PursuitKind::Sp => "sp",
            PursuitKind::Mf => "mf",
            PursuitKind::Ht => "ht",
        }
    }
}

impl FromStr for PursuitKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "omp" => Ok(PursuitKind::Omp),
            "bp" => Ok(PursuitKind::Bp),
            "sp" => Ok(PursuitKind::Sp),
            "mf" => Ok(PursuitKind::Mf),
            "ht" => Ok(PursuitKind::Ht),
            other => Err(format!("unknown pursuit `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NoiseKind {
    Gaussian,
    Uniform,
    Bernoulli,
}

/// How a plain pursuit's output is turned into coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Refit {
    /// The pursuit's own coefficients.
    Raw,
    Ls,
    Oracle,
}

#[derive(Clone, Debug, PartialEq)]
pub enum EstimatorSpec {
    Plain {
        pursuit: PursuitKind,
        refit: Refit,
    },
    /// Exhaustive MAP support with the oracle on it.
    Map,
    /// Exhaustive MMSE.
    Mmse,
    /// Closed-form MMSE shrinkage (unitary dictionaries).
    MmseShrinkage,
    /// Closed-form limit of hard-threshold SR (unitary dictionaries).
    SrAsymptotic,
    PriorBasedSr {
        pursuit: PursuitKind,
        noise: NoiseKind,
        domain: NoiseDomain,
    },
    GeneralSr {
        pursuit: PursuitKind,
        refit: Refit,
        noise: NoiseKind,
        domain: NoiseDomain,
    },
}

impl EstimatorSpec {
    pub fn parse(token: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = token.split(':').collect();
        let pursuit = |i: usize| -> std::result::Result<PursuitKind, String> {
            parts.get(i).ok_or_else(|| format!("estimator `{token}` needs a pursuit"))?.parse()
        };
        let noise_and_domain = |from: usize| -> std::result::Result<(NoiseKind, NoiseDomain), String> {
            let mut noise = NoiseKind::Gaussian;
            let mut domain = NoiseDomain::Signal;
            for p in parts.iter().skip(from) {
                match *p {
                    "gaussian" => noise = NoiseKind::Gaussian,
                    "uniform" => noise = NoiseKind::Uniform,
                    "bernoulli" => noise = NoiseKind::Bernoulli,
                    "signal" => domain = NoiseDomain::Signal,
                    "rep" => domain = NoiseDomain::Representation,
                    other => return Err(format!("unknown SR option `{other}` in `{token}`")),
                }
            }
            Ok((noise, domain))
        };
        let exact = |len: usize| {
            if parts.len() == len {
                Ok(())
            } else {
                Err(format!("malformed estimator `{token}`"))
            }
        };
        match parts[0] {
            "plain" | "plain_ls" => exact(2).and(Ok(EstimatorSpec::Plain { pursuit: pursuit(1)?, refit: Refit::Ls })),
            "plain_oracle" => exact(2).and(Ok(EstimatorSpec::Plain { pursuit: pursuit(1)?, refit: Refit::Oracle })),
            "plain_raw" => exact(2).and(Ok(EstimatorSpec::Plain { pursuit: pursuit(1)?, refit: Refit::Raw })),
            "map" => exact(1).and(Ok(EstimatorSpec::Map)),
            "mmse" => exact(1).and(Ok(EstimatorSpec::Mmse)),
            "mmse_shrinkage" => exact(1).and(Ok(EstimatorSpec::MmseShrinkage)),
            "sr_asymptotic" => exact(1).and(Ok(EstimatorSpec::SrAsymptotic)),
            "alg1" => {
                let (noise, domain) = noise_and_domain(2)?;
                Ok(EstimatorSpec::PriorBasedSr { pursuit: pursuit(1)?, noise, domain })
            }
            "sr_oracle" | "sr_ls" => {
                let refit = if parts[0] == "sr_ls" { Refit::Ls } else { Refit::Oracle };
                let (noise, domain) = noise_and_domain(2)?;
                Ok(EstimatorSpec::GeneralSr { pursuit: pursuit(1)?, refit, noise, domain })
            }
            other => Err(format!("unknown estimator `{other}`")),
        }
    }

    pub fn pursuit(&self) -> Option<PursuitKind> {
        match self {
            EstimatorSpec::Plain { pursuit, .. }
            | EstimatorSpec::PriorBasedSr { pursuit, .. }
            | EstimatorSpec::GeneralSr { pursuit, .. } => Some(*pursuit),
            _ => None,
        }
    }

    pub fn is_sr(&self) -> bool {
        matches!(self, EstimatorSpec::PriorBasedSr { .. } | EstimatorSpec::GeneralSr { .. })
    }

    /// Coefficient refit used when tuning this estimator's residual bound.
    pub(crate) fn tuning_refit(&self) -> Refit {
        match self {
            EstimatorSpec::Plain { refit, .. } | EstimatorSpec::GeneralSr { refit, .. } => *refit,
            _ => Refit::Oracle,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepVar {
    SigmaN,
    K,
    Cardinality,
    Epsilon,
    PMask,
    SigmaNu,
}

impl SweepVar {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepVar::SigmaN => "sigma_n",
            SweepVar::K => "k",
            SweepVar::Cardinality => "cardinality",
            SweepVar::Epsilon => "epsilon",
            SweepVar::PMask => "p_mask",
            SweepVar::SigmaNu => "sigma_nu",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EpsilonSetting {
    Fixed(f64),
    Auto,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SingleAtomStudy {
    Support,
    Domains,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LambdaSetting {
    Fixed(f64),
    Map,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: String,
    pub n: usize,
    pub m: usize,
    pub dictionary: DictionarySpec,
    pub prior: PriorKind,
    pub cardinality: usize,
    pub p: f64,
    pub sigma_alpha: f64,
    pub sigma_nu: f64,
    pub estimators: Vec<(String, EstimatorSpec)>,
    pub omp_residual_stop: bool,
    pub sparsity: Option<usize>,
    pub epsilon: EpsilonSetting,
    pub epsilon_factors: Vec<f64>,
    pub inflate_sr_epsilon: bool,
    pub lambda: LambdaSetting,
    pub k: usize,
    pub sigma_n: f64,
    pub p_mask: f64,
    pub sweep: Option<SweepVar>,
    pub grid: Vec<f64>,
    pub inner_sigma_n: Vec<f64>,
    pub baseline_sigma_n: Vec<f64>,
    pub trials: usize,
    pub holdout_trials: usize,
    pub seed: u64,
    pub threads: Option<usize>,
    pub atom: usize,
    pub study: SingleAtomStudy,
    pub integral: bool,
    pub image: Option<String>,
    pub patch_sparsity: Vec<usize>,
    pub tune_fraction: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: "experiment".into(),
            n: 50,
            m: 100,
            dictionary: DictionarySpec::Random,
            prior: PriorKind::Fixed,
            cardinality: 1,
            p: 0.05,
            sigma_alpha: 1.0,
            sigma_nu: 0.2,
            estimators: Vec::new(),
            omp_residual_stop: false,
            sparsity: None,
            epsilon: EpsilonSetting::Auto,
            epsilon_factors: vec![0.6, 0.8, 1.0, 1.2, 1.4, 1.7, 2.0],
            inflate_sr_epsilon: false,
            lambda: LambdaSetting::Map,
            k: 100,
            sigma_n: 0.2,
            p_mask: 1.0,
            sweep: None,
            grid: Vec::new(),
            inner_sigma_n: Vec::new(),
            baseline_sigma_n: Vec::new(),
            trials: 1000,
            holdout_trials: 200,
            seed: 1,
            threads: None,
            atom: 0,
            study: SingleAtomStudy::Support,
            integral: false,
            image: None,
            patch_sparsity: (4..=16).collect(),
            tune_fraction: 0.05,
        }
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn parse_num<T: FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value.parse().map_err(|_| parse_err(line, format!("`{key}` expects a number, got `{value}`")))
}

fn parse_list<T: FromStr>(key: &str, value: &str, line: usize) -> Result<Vec<T>> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| parse_num(key, s, line)).collect()
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut seen = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| parse_err(line, format!("expected `key = value`, got `{content}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.iter().any(|(k, _)| *k == key) {
                return Err(Error::UnknownKey { key: key.to_string(), line });
            }
            if let Some(prev) = seen.insert(key.to_string(), line) {
                return Err(parse_err(line, format!("`{key}` already set on line {prev}")));
            }
            cfg.set(key, value, line)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        Self::parse(&text)
    }

    fn set(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        match key {
            "scenario" => {
                if value.is_empty() || !value.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                    return Err(parse_err(line, "scenario must be a plain file-name stem"));
                }
                self.scenario = value.to_string();
            }
            "n" => self.n = parse_num(key, value, line)?,
            "m" => self.m = parse_num(key, value, line)?,
            "dictionary" => {
                self.dictionary = match value {
                    "random" => DictionarySpec::Random,
                    "unitary" => DictionarySpec::Unitary,
                    "odct" => DictionarySpec::OvercompleteDct,
                    other => return Err(parse_err(line, format!("unknown dictionary `{other}`"))),
                }
            }
            "prior" => {
                self.prior = match value {
                    "fixed" => PriorKind::Fixed,
                    "bernoulli" => PriorKind::Bernoulli,
                    other => return Err(parse_err(line, format!("unknown prior `{other}`"))),
                }
            }
            "cardinality" => self.cardinality = parse_num(key, value, line)?,
            "p" => self.p = parse_num(key, value, line)?,
            "sigma_alpha" => self.sigma_alpha = parse_num(key, value, line)?,
            "sigma_nu" => self.sigma_nu = parse_num(key, value, line)?,
            "estimators" => {
                self.estimators = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|t| EstimatorSpec::parse(t).map(|e| (t.to_string(), e)).map_err(|m| parse_err(line, m)))
                    .collect::<Result<_>>()?
            }
            "pursuit_stop" => {
                self.omp_residual_stop = match value {
                    "cardinality" => false,
                    "residual" => true,
                    other => return Err(parse_err(line, format!("unknown stopping rule `{other}`"))),
                }
            }
            "sparsity" => self.sparsity = Some(parse_num(key, value, line)?),
            "epsilon" => {
                self.epsilon = if value == "auto" {
                    EpsilonSetting::Auto
                } else {
                    EpsilonSetting::Fixed(parse_num(key, value, line)?)
                }
            }
            "epsilon_factors" => self.epsilon_factors = parse_list(key, value, line)?,
            "sr_epsilon" => {
                self.inflate_sr_epsilon = match value {
                    "fixed" => false,
                    "inflate" => true,
                    other => return Err(parse_err(line, format!("unknown sr_epsilon `{other}`"))),
                }
            }
            "lambda" => {
                self.lambda =
                    if value == "map" { LambdaSetting::Map } else { LambdaSetting::Fixed(parse_num(key, value, line)?) }
            }
            "k" => self.k = parse_num(key, value, line)?,
            "sigma_n" => self.sigma_n = parse_num(key, value, line)?,
            "p_mask" => self.p_mask = parse_num(key, value, line)?,
            "sweep" => {
                self.sweep = Some(match value {
                    "sigma_n" => SweepVar::SigmaN,
                    "k" => SweepVar::K,
                    "cardinality" => SweepVar::Cardinality,
                    "epsilon" => SweepVar::Epsilon,
                    "p_mask" => SweepVar::PMask,
                    "sigma_nu" => SweepVar::SigmaNu,
                    other => return Err(parse_err(line, format!("unknown sweep variable `{other}`"))),
                })
            }
            "grid" => self.grid = parse_list(key, value, line)?,
            "inner_sigma_n" => self.inner_sigma_n = parse_list(key, value, line)?,
            "baseline_sigma_n" => self.baseline_sigma_n = parse_list(key, value, line)?,
            "trials" => self.trials = parse_num(key, value, line)?,
            "holdout_trials" => self.holdout_trials = parse_num(key, value, line)?,
            "seed" => self.seed = parse_num(key, value, line)?,
            "threads" => self.threads = Some(parse_num(key, value, line)?),
            "atom" => self.atom = parse_num(key, value, line)?,
            "study" => {
                self.study = match value {
                    "support" => SingleAtomStudy::Support,
                    "domains" => SingleAtomStudy::Domains,
                    other => return Err(parse_err(line, format!("unknown study `{other}`"))),
                }
            }
            "integral" => {
                self.integral = match value {
                    "yes" => true,
                    "no" => false,
                    other => return Err(parse_err(line, format!("`integral` expects yes or no, got `{other}`"))),
                }
            }
            "image" => self.image = Some(value.to_string()),
            "patch_sparsity" => self.patch_sparsity = parse_list(key, value, line)?,
            "tune_fraction" => self.tune_fraction = parse_num(key, value, line)?,
            _ => unreachable!("key list checked above"),
        }
        Ok(())
    }

    /// Structural checks that do not need the dictionary.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n == 0 || self.m == 0 {
            return bad("n and m must be at least 1".into());
        }
        if self.prior == PriorKind::Fixed && (self.cardinality == 0 || self.cardinality > self.m) {
            return bad(format!("cardinality must lie in [1, m], got {}", self.cardinality));
        }
        if !(self.sigma_alpha > 0.0) || !(self.sigma_nu >= 0.0) {
            return bad("sigma_alpha must be > 0 and sigma_nu >= 0".into());
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.sweep.is_some() && self.grid.is_empty() {
            return bad("a sweep needs a nonempty grid".into());
        }
        if let Some(SweepVar::Cardinality) = self.sweep {
            if self.grid.iter().any(|&g| g < 1.0 || g.fract() != 0.0 || g as usize > self.m) {
                return bad("cardinality grid values must be integers in [1, m]".into());
            }
        }
        if let Some(SweepVar::K) = self.sweep {
            if self.grid.iter().any(|&g| g < 1.0 || g.fract() != 0.0) {
                return bad("k grid values must be positive integers".into());
            }
        }
        if self.epsilon_factors.is_empty() {
            return bad("epsilon_factors must be nonempty".into());
        }
        if self.dictionary == DictionarySpec::Unitary && self.n != self.m {
            return bad("a unitary dictionary needs n = m".into());
        }
        Ok(())
    }

    pub fn require_estimators(&self) -> Result<()> {
        if self.estimators.is_empty() {
            return Err(Error::MissingKey("estimators".into()));
        }
        Ok(())
    }

    /// FNV-1a hash of the canonical rendering, recorded next to results.
    pub fn fingerprint(&self) -> u64 {
        let text = self.to_string();
        text.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
    }
}

fn join<T: fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scenario = {}", self.scenario)?;
        writeln!(f, "n = {}", self.n)?;
        writeln!(f, "m = {}", self.m)?;
        let dict = match self.dictionary {
            DictionarySpec::Random => "random",
            DictionarySpec::Unitary => "unitary",
            DictionarySpec::OvercompleteDct => "odct",
        };
        writeln!(f, "dictionary = {dict}")?;
        writeln!(f, "prior = {}", if self.prior == PriorKind::Fixed { "fixed" } else { "bernoulli" })?;
        writeln!(f, "cardinality = {}", self.cardinality)?;
        writeln!(f, "p = {}", self.p)?;
        writeln!(f, "sigma_alpha = {}", self.sigma_alpha)?;
        writeln!(f, "sigma_nu = {}", self.sigma_nu)?;
        let names: Vec<&str> = self.estimators.iter().map(|(n, _)| n.as_str()).collect();
        writeln!(f, "estimators = {}", names.join(", "))?;
        writeln!(f, "pursuit_stop = {}", if self.omp_residual_stop { "residual" } else { "cardinality" })?;
        if let Some(l) = self.sparsity {
            writeln!(f, "sparsity = {l}")?;
        }
        match self.epsilon {
            EpsilonSetting::Auto => writeln!(f, "epsilon = auto")?,
            EpsilonSetting::Fixed(e) => writeln!(f, "epsilon = {e}")?,
        }
        writeln!(f, "epsilon_factors = {}", join(&self.epsilon_factors))?;
        writeln!(f, "sr_epsilon = {}", if self.inflate_sr_epsilon { "inflate" } else { "fixed" })?;
        match self.lambda {
            LambdaSetting::Map => writeln!(f, "lambda = map")?,
            LambdaSetting::Fixed(l) => writeln!(f, "lambda = {l}")?,
        }
        writeln!(f, "k = {}", self.k)?;
        writeln!(f, "sigma_n = {}", self.sigma_n)?;
        writeln!(f, "p_mask = {}", self.p_mask)?;
        if let Some(s) = self.sweep {
            writeln!(f, "sweep = {}", s.as_str())?;
            writeln!(f, "grid = {}", join(&self.grid))?;
        }
        if !self.inner_sigma_n.is_empty() {
            writeln!(f, "inner_sigma_n = {}", join(&self.inner_sigma_n))?;
        }
        if !self.baseline_sigma_n.is_empty() {
            writeln!(f, "baseline_sigma_n = {}", join(&self.baseline_sigma_n))?;
        }
        writeln!(f, "trials = {}", self.trials)?;
        writeln!(f, "holdout_trials = {}", self.holdout_trials)?;
        writeln!(f, "seed = {}", self.seed)?;
        writeln!(f, "atom = {}", self.atom)?;
        let study = if self.study == SingleAtomStudy::Support { "support" } else { "domains" };
        writeln!(f, "study = {study}")?;
        writeln!(f, "integral = {}", if self.integral { "yes" } else { "no" })?;
        if let Some(img) = &self.image {
            writeln!(f, "image = {img}")?;
        }
        writeln!(f, "patch_sparsity = {}", join(&self.patch_sparsity))?;
        writeln!(f, "tune_fraction = {}", self.tune_fraction)
    }
}
