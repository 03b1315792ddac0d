//! Generative sparse model: dictionaries, support priors, signal synthesis
//! and the seeded random streams every experiment draws from.
//!
//! A signal is produced by drawing a support `S` from the support prior,
//! drawing the coefficients on `S` i.i.d. from `N(0, sigma_alpha^2)`,
//! synthesizing `x = D alpha` and observing `y = x + nu` with white
//! Gaussian `nu ~ N(0, sigma_nu^2 I)`.

use std::fmt;
use std::io::{BufRead, Write};
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};

/// Largest support family the exhaustive routines will enumerate.
pub const MAX_ENUMERATED_SUPPORTS: u128 = 1_000_000;

const UNIT_NORM_TOL: f64 = 1e-12;
const UNITARY_TOL: f64 = 1e-10;

/// Deterministic random stream identifier.
///
/// Equal `(seed, stream)` pairs always produce the same sample sequence, no
/// matter which thread draws from them. Nested experiments derive child
/// streams with [`RngSeed::child`] so that e.g. SR iteration `k` of trial `t`
/// owns an independent stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RngSeed {
    pub seed: u64,
    pub stream: u64,
}

impl RngSeed {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }

    /// Independent sub-stream number `index` of this stream.
    pub fn child(&self, index: u64) -> RngSeed {
        RngSeed {
            seed: splitmix64(self.seed ^ splitmix64(self.stream.wrapping_add(0x9e37_79b9_7f4a_7c15))),
            stream: index,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DictionaryKind {
    Overcomplete,
    Unitary,
    Arbitrary,
}

impl DictionaryKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            DictionaryKind::Overcomplete => "overcomplete",
            DictionaryKind::Unitary => "unitary",
            DictionaryKind::Arbitrary => "arbitrary",
        }
    }
}

impl fmt::Display for DictionaryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DictionaryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "overcomplete" => Ok(DictionaryKind::Overcomplete),
            "unitary" => Ok(DictionaryKind::Unitary),
            "arbitrary" => Ok(DictionaryKind::Arbitrary),
            other => invalid(format!("unknown dictionary kind `{other}`")),
        }
    }
}

/// Synthesis operator `D` (n x m) with unit-norm columns.
#[derive(Clone, Debug)]
pub struct Dictionary {
    atoms: DMatrix<f64>,
    kind: DictionaryKind,
    gram: OnceLock<DMatrix<f64>>,
    op_norm_sq: OnceLock<f64>,
}

impl Dictionary {
    /// Normalizes every column and infers the kind: `Overcomplete` when
    /// `m > n`, `Unitary` when square and orthonormal, else `Arbitrary`.
    pub fn from_matrix(atoms: DMatrix<f64>) -> Result<Self> {
        let atoms = normalize_columns(atoms)?;
        let (n, m) = atoms.shape();
        let kind = if m > n {
            DictionaryKind::Overcomplete
        } else if m == n && unitary_deviation(&atoms) < UNITARY_TOL {
            DictionaryKind::Unitary
        } else {
            DictionaryKind::Arbitrary
        };
        Ok(Self::assemble(atoms, kind))
    }

    /// Like [`Dictionary::from_matrix`] but with an explicit kind, which is
    /// verified (a `Unitary` tag requires `D^T D = I` within 1e-10).
    pub fn with_kind(atoms: DMatrix<f64>, kind: DictionaryKind) -> Result<Self> {
        let atoms = normalize_columns(atoms)?;
        let (n, m) = atoms.shape();
        match kind {
            DictionaryKind::Unitary => {
                if n != m {
                    return invalid(format!("unitary dictionary must be square, got {n}x{m}"));
                }
                let dev = unitary_deviation(&atoms);
                if dev >= UNITARY_TOL {
                    return Err(Error::NotUnitary(dev));
                }
            }
            DictionaryKind::Overcomplete if m <= n => {
                return invalid(format!("overcomplete dictionary needs m > n, got {n}x{m}"));
            }
            _ => {}
        }
        Ok(Self::assemble(atoms, kind))
    }

    /// Row-subsampled copy used by multiplicative mask noise. Columns that
    /// vanish on the kept rows stay zero instead of failing normalization.
    pub(crate) fn subsample_rows(&self, rows: &[usize]) -> Dictionary {
        let m = self.m();
        let mut sub = DMatrix::zeros(rows.len(), m);
        for j in 0..m {
            let col = self.atom(j);
            let mut norm_sq = 0.0;
            for (r, &row) in rows.iter().enumerate() {
                sub[(r, j)] = col[row];
                norm_sq += col[row] * col[row];
            }
            if norm_sq > 0.0 {
                let inv = 1.0 / norm_sq.sqrt();
                for r in 0..rows.len() {
                    sub[(r, j)] *= inv;
                }
            }
        }
        Self::assemble(sub, DictionaryKind::Arbitrary)
    }

    fn assemble(atoms: DMatrix<f64>, kind: DictionaryKind) -> Self {
        Self { atoms, kind, gram: OnceLock::new(), op_norm_sq: OnceLock::new() }
    }

    pub fn n(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn m(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn kind(&self) -> DictionaryKind {
        self.kind
    }

    pub fn atoms(&self) -> &DMatrix<f64> {
        &self.atoms
    }

    /// Column `i` as a contiguous slice.
    pub fn atom(&self, i: usize) -> &[f64] {
        let n = self.n();
        &self.atoms.as_slice()[i * n..(i + 1) * n]
    }

    /// `D^T D`, computed on first use.
    pub fn gram(&self) -> &DMatrix<f64> {
        self.gram.get_or_init(|| self.atoms.tr_mul(&self.atoms))
    }

    /// Squared spectral norm `||D||_2^2`, computed on first use.
    pub fn op_norm_sq(&self) -> f64 {
        *self.op_norm_sq.get_or_init(|| {
            let gram = self.gram().clone();
            nalgebra::SymmetricEigen::new(gram).eigenvalues.iter().fold(0.0_f64, |acc, &v| acc.max(v))
        })
    }

    /// `D^T y`.
    pub fn correlations(&self, y: &DVector<f64>) -> DVector<f64> {
        self.atoms.tr_mul(y)
    }

    /// `D alpha`.
    pub fn synthesize(&self, alpha: &DVector<f64>) -> DVector<f64> {
        &self.atoms * alpha
    }

    /// Columns indexed by `support`, in support order.
    pub fn subdictionary(&self, support: &SupportSet) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, support.len(), |r, c| self.atoms[(r, support.indices()[c])])
    }

    pub(crate) fn check_signal(&self, y: &DVector<f64>) -> Result<()> {
        if y.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), got: y.len() });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return invalid("signal contains non-finite entries");
        }
        Ok(())
    }

    /// Plain-text form: a `n m kind` header followed by `n` rows of `m`
    /// decimals printed with 17 significant digits.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{} {} {}", self.n(), self.m(), self.kind)?;
        for r in 0..self.n() {
            let row: Vec<String> = (0..self.m()).map(|c| format!("{:.16e}", self.atoms[(r, c)])).collect();
            writeln!(out, "{}", row.join(" "))?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::Parse { line: 1, message: "empty dictionary file".into() })?;
        let header = header?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::Parse { line: 1, message: "expected header `n m kind`".into() });
        }
        let parse_dim =
            |s: &str| s.parse::<usize>().map_err(|_| Error::Parse { line: 1, message: format!("bad dimension `{s}`") });
        let n = parse_dim(fields[0])?;
        let m = parse_dim(fields[1])?;
        let kind: DictionaryKind =
            fields[2].parse().map_err(|_| Error::Parse { line: 1, message: format!("bad kind `{}`", fields[2]) })?;
        let mut atoms = DMatrix::zeros(n, m);
        let mut row = 0;
        for (idx, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            if row == n {
                return Err(Error::Parse { line: idx + 1, message: "too many rows".into() });
            }
            let values: Vec<&str> = line.split_whitespace().collect();
            if values.len() != m {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("expected {m} values, found {}", values.len()),
                });
            }
            for (c, v) in values.iter().enumerate() {
                atoms[(row, c)] =
                    v.parse().map_err(|_| Error::Parse { line: idx + 1, message: format!("bad number `{v}`") })?;
            }
            row += 1;
        }
        if row != n {
            return Err(Error::Parse { line: row + 2, message: format!("expected {n} rows, found {row}") });
        }
        Dictionary::with_kind(atoms, kind)
    }
}

fn normalize_columns(mut atoms: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, m) = atoms.shape();
    if n == 0 || m == 0 {
        return invalid("dictionary needs n >= 1 and m >= 1");
    }
    for mut col in atoms.column_iter_mut() {
        let norm = col.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return invalid("dictionary has a zero or non-finite column");
        }
        // leave already-normalized columns bit-exact so text round trips are lossless
        if (norm - 1.0).abs() > 4.0 * f64::EPSILON {
            col /= norm;
        }
    }
    Ok(atoms)
}

fn unitary_deviation(atoms: &DMatrix<f64>) -> f64 {
    let gram = atoms.tr_mul(atoms);
    let n = gram.nrows();
    (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| (gram[(i, j)] - if i == j { 1.0 } else { 0.0 }).abs())
        .fold(0.0, f64::max)
}

/// Random Gaussian dictionary with normalized columns.
pub fn make_random_dictionary(n: usize, m: usize, seed: RngSeed) -> Result<Dictionary> {
    if n == 0 || m == 0 {
        return invalid("dictionary needs n >= 1 and m >= 1");
    }
    let mut rng = seed.rng();
    let mut atoms = DMatrix::zeros(n, m);
    for j in 0..m {
        loop {
            let mut norm_sq = 0.0;
            for i in 0..n {
                let v: f64 = rng.sample(StandardNormal);
                atoms[(i, j)] = v;
                norm_sq += v * v;
            }
            if norm_sq > 0.0 {
                break;
            }
        }
    }
    let atoms = normalize_columns(atoms)?;
    debug_assert!(atoms.column_iter().all(|c| (c.norm() - 1.0).abs() < UNIT_NORM_TOL));
    let kind = if m > n { DictionaryKind::Overcomplete } else { DictionaryKind::Arbitrary };
    Ok(Dictionary::assemble(atoms, kind))
}

/// Random orthonormal dictionary from the QR factorization of a Gaussian
/// matrix (columns sign-corrected so the draw is Haar distributed).
pub fn make_unitary_dictionary(n: usize, seed: RngSeed) -> Result<Dictionary> {
    if n == 0 {
        return invalid("dictionary needs n >= 1");
    }
    let mut rng = seed.rng();
    let gaussian = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = gaussian.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Dictionary::with_kind(q, DictionaryKind::Unitary)
}

/// Ordered set of atom indices, kept sorted so set equality is list equality.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SupportSet(Vec<usize>);

impl SupportSet {
    /// Sorts and deduplicates.
    pub fn new(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        SupportSet(indices)
    }

    pub fn empty() -> Self {
        SupportSet(Vec::new())
    }

    pub fn singleton(i: usize) -> Self {
        SupportSet(vec![i])
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    pub(crate) fn check_range(&self, m: usize) -> Result<()> {
        match self.0.last() {
            Some(&last) if last >= m => invalid(format!("support index {last} out of range for m = {m}")),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for SupportSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|i| i.to_string()).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SupportPrior {
    /// Exactly `M` atoms, uniform over all `C(m, M)` supports.
    FixedCardinality(usize),
    /// Atom `i` active independently with probability `p[i]`.
    IndependentBernoulli(Vec<f64>),
}

/// Coefficient and noise scales; all the oracle estimator needs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoefficientModel {
    pub sigma_alpha: f64,
    pub sigma_nu: f64,
}

impl CoefficientModel {
    pub fn new(sigma_alpha: f64, sigma_nu: f64) -> Result<Self> {
        if !(sigma_alpha > 0.0 && sigma_alpha.is_finite()) || !(sigma_nu > 0.0 && sigma_nu.is_finite()) {
            return invalid("sigma_alpha and sigma_nu must be positive and finite");
        }
        Ok(Self { sigma_alpha, sigma_nu })
    }

    /// Wiener factor `sigma_alpha^2 / (sigma_alpha^2 + sigma_nu^2)`.
    pub fn c_squared(&self) -> f64 {
        let a2 = self.sigma_alpha * self.sigma_alpha;
        a2 / (a2 + self.sigma_nu * self.sigma_nu)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PriorSpec {
    pub support_prior: SupportPrior,
    pub sigma_alpha: f64,
    pub sigma_nu: f64,
}

impl PriorSpec {
    pub fn new(support_prior: SupportPrior, sigma_alpha: f64, sigma_nu: f64) -> Result<Self> {
        CoefficientModel::new(sigma_alpha, sigma_nu)?;
        match &support_prior {
            SupportPrior::FixedCardinality(0) => return invalid("cardinality must be at least 1"),
            SupportPrior::IndependentBernoulli(p) => {
                if p.is_empty() {
                    return invalid("Bernoulli prior needs at least one probability");
                }
                if let Some(bad) = p.iter().find(|&&v| !(v > 0.0 && v < 1.0)) {
                    return invalid(format!("Bernoulli probability {bad} outside (0, 1)"));
                }
            }
            _ => {}
        }
        Ok(Self { support_prior, sigma_alpha, sigma_nu })
    }

    pub fn fixed(cardinality: usize, sigma_alpha: f64, sigma_nu: f64) -> Result<Self> {
        Self::new(SupportPrior::FixedCardinality(cardinality), sigma_alpha, sigma_nu)
    }

    pub fn bernoulli(m: usize, p: f64, sigma_alpha: f64, sigma_nu: f64) -> Result<Self> {
        Self::new(SupportPrior::IndependentBernoulli(vec![p; m]), sigma_alpha, sigma_nu)
    }

    pub fn coefficient_model(&self) -> CoefficientModel {
        CoefficientModel { sigma_alpha: self.sigma_alpha, sigma_nu: self.sigma_nu }
    }

    pub fn c_squared(&self) -> f64 {
        self.coefficient_model().c_squared()
    }

    /// Checks that the prior is defined for a dictionary with `m` atoms.
    pub fn check_atoms(&self, m: usize) -> Result<()> {
        match &self.support_prior {
            SupportPrior::FixedCardinality(card) if *card > m => invalid(format!("cardinality {card} exceeds m = {m}")),
            SupportPrior::IndependentBernoulli(p) if p.len() != m => {
                Err(Error::DimensionMismatch { expected: m, got: p.len() })
            }
            _ => Ok(()),
        }
    }

    /// `|Omega|`, saturating at `u128::MAX`.
    pub fn support_count(&self, m: usize) -> u128 {
        match &self.support_prior {
            SupportPrior::FixedCardinality(card) => binomial(m, *card),
            SupportPrior::IndependentBernoulli(_) => {
                if m >= 128 {
                    u128::MAX
                } else {
                    1u128 << m
                }
            }
        }
    }

    /// `log P(S)`; `-inf` for supports outside `Omega`.
    pub fn log_prior(&self, support: &SupportSet, m: usize) -> f64 {
        self.log_prior_indices(support.indices(), m)
    }

    pub(crate) fn log_prior_indices(&self, support: &[usize], m: usize) -> f64 {
        match &self.support_prior {
            SupportPrior::FixedCardinality(card) => {
                if support.len() == *card {
                    -ln_binomial(m, *card)
                } else {
                    f64::NEG_INFINITY
                }
            }
            SupportPrior::IndependentBernoulli(p) => {
                let mut total: f64 = p.iter().map(|&pi| (1.0 - pi).ln()).sum();
                for &i in support {
                    total += p[i].ln() - (1.0 - p[i]).ln();
                }
                total
            }
        }
    }
}

pub(crate) fn binomial(m: usize, k: usize) -> u128 {
    if k > m {
        return 0;
    }
    let k = k.min(m - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((m - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

pub(crate) fn ln_binomial(m: usize, k: usize) -> f64 {
    (0..k).map(|i| ((m - i) as f64).ln() - ((i + 1) as f64).ln()).sum()
}

/// A sampled representation with its clean and noisy signals.
#[derive(Clone, Debug)]
pub struct SparseSignal {
    pub alpha: DVector<f64>,
    pub support: SupportSet,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
}

pub fn sample_signal(dict: &Dictionary, prior: &PriorSpec, seed: RngSeed) -> Result<SparseSignal> {
    prior.check_atoms(dict.m())?;
    let mut rng = seed.rng();
    let m = dict.m();
    let support = match &prior.support_prior {
        SupportPrior::FixedCardinality(card) => SupportSet::new(index::sample(&mut rng, m, *card).into_vec()),
        SupportPrior::IndependentBernoulli(p) => SupportSet::new((0..m).filter(|&i| rng.random_bool(p[i])).collect()),
    };
    let mut alpha = DVector::zeros(m);
    for &i in support.indices() {
        let z: f64 = rng.sample(StandardNormal);
        alpha[i] = prior.sigma_alpha * z;
    }
    let x = dict.synthesize(&alpha);
    let y = DVector::from_fn(dict.n(), |i, _| x[i] + prior.sigma_nu * rng.sample::<f64, _>(StandardNormal));
    Ok(SparseSignal { alpha, support, x, y })
}

fn check_enumerable(prior: &PriorSpec, m: usize) -> Result<()> {
    prior.check_atoms(m)?;
    let count = prior.support_count(m);
    if count > MAX_ENUMERATED_SUPPORTS {
        return Err(Error::TooLarge { count, limit: MAX_ENUMERATED_SUPPORTS });
    }
    Ok(())
}

/// All supports with positive prior probability, in lexicographic order.
pub fn enumerate_supports(prior: &PriorSpec, m: usize) -> Result<Vec<SupportSet>> {
    let mut out = Vec::new();
    for_each_support(prior, m, |s| out.push(SupportSet(s.to_vec())))?;
    Ok(out)
}

/// Visits `Omega` in lexicographic order without allocating per support.
pub(crate) fn for_each_support<F: FnMut(&[usize])>(prior: &PriorSpec, m: usize, mut visit: F) -> Result<()> {
    check_enumerable(prior, m)?;
    match &prior.support_prior {
        SupportPrior::FixedCardinality(card) => {
            let k = *card;
            let mut idx: Vec<usize> = (0..k).collect();
            loop {
                visit(&idx);
                // rightmost position that can still be incremented
                let Some(pos) = (0..k).rev().find(|&p| idx[p] < m - k + p) else {
                    return Ok(());
                };
                idx[pos] += 1;
                for q in pos + 1..k {
                    idx[q] = idx[q - 1] + 1;
                }
            }
        }
        SupportPrior::IndependentBernoulli(_) => {
            // preorder depth-first walk of the subset tree is lexicographic
            let mut stack: Vec<usize> = Vec::with_capacity(m);
            visit(&stack);
            loop {
                let start = stack.last().map_or(0, |&l| l + 1);
                if start < m {
                    stack.push(start);
                    visit(&stack);
                    continue;
                }
                loop {
                    match stack.pop() {
                        None => return Ok(()),
                        Some(x) if x + 1 < m => {
                            stack.push(x + 1);
                            visit(&stack);
                            break;
                        }
                        Some(_) => {}
                    }
                }
            }
        }
    }
}
