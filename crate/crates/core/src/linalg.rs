//! Small dense kernels shared by the pursuits and the Bayesian estimators.

use crate::model::Dictionary;

/// Columns whose orthogonal remainder falls below this are treated as
/// linearly dependent on the ones already accepted.
pub(crate) const RANK_TOL: f64 = 1e-10;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// `out[i] = d_i^T v` for every atom.
pub(crate) fn correlate_into(dict: &Dictionary, v: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = dot(dict.atom(i), v);
    }
}

/// Lowest index attaining `max |v_i|` among indices not excluded.
pub(crate) fn argmax_abs<F: Fn(usize) -> bool>(v: &[f64], excluded: F) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &x) in v.iter().enumerate() {
        if excluded(i) {
            continue;
        }
        let a = x.abs();
        match best {
            Some((_, b)) if a <= b => {}
            _ => best = Some((i, a)),
        }
    }
    best.map(|(i, _)| i)
}

/// Thin QR factorization grown one column at a time by Gram-Schmidt with a
/// second re-orthogonalization pass.
#[derive(Clone, Debug)]
pub(crate) struct IncrementalQr {
    n: usize,
    q: Vec<f64>,
    /// Upper-triangular factor, column `j` stored as `r[j][0..=j]`.
    r: Vec<Vec<f64>>,
    work: Vec<f64>,
}

impl IncrementalQr {
    pub(crate) fn new(n: usize) -> Self {
        Self { n, q: Vec::new(), r: Vec::new(), work: vec![0.0; n] }
    }

    pub(crate) fn clear(&mut self) {
        self.q.clear();
        self.r.clear();
    }

    pub(crate) fn rank(&self) -> usize {
        self.r.len()
    }

    fn q_col(&self, j: usize) -> &[f64] {
        &self.q[j * self.n..(j + 1) * self.n]
    }

    /// Appends `col`; returns false (and leaves the factorization unchanged)
    /// when it is numerically dependent on the existing columns.
    pub(crate) fn push(&mut self, col: &[f64]) -> bool {
        let k = self.rank();
        let scale = norm_sq(col).sqrt();
        if scale == 0.0 {
            return false;
        }
        self.work.copy_from_slice(col);
        let mut coeffs = vec![0.0; k + 1];
        for _pass in 0..2 {
            for j in 0..k {
                let qj = &self.q[j * self.n..(j + 1) * self.n];
                let c = dot(qj, &self.work);
                coeffs[j] += c;
                for (w, q) in self.work.iter_mut().zip(qj) {
                    *w -= c * q;
                }
            }
        }
        let rho = norm_sq(&self.work).sqrt();
        if rho <= RANK_TOL * scale {
            return false;
        }
        coeffs[k] = rho;
        let inv = 1.0 / rho;
        self.q.extend(self.work.iter().map(|w| w * inv));
        self.r.push(coeffs);
        true
    }

    /// Removes the projection of `v` onto the newest basis vector.
    pub(crate) fn deflate_last(&self, v: &mut [f64]) {
        let k = self.rank();
        if k == 0 {
            return;
        }
        let q = self.q_col(k - 1);
        let c = dot(q, v);
        for (x, qi) in v.iter_mut().zip(q) {
            *x -= c * qi;
        }
    }

    /// Coefficients `x` minimizing `||A x - y||` for the accepted columns.
    pub(crate) fn solve(&self, y: &[f64]) -> Vec<f64> {
        let k = self.rank();
        let mut x: Vec<f64> = (0..k).map(|j| dot(self.q_col(j), y)).collect();
        for j in (0..k).rev() {
            x[j] /= self.r[j][j];
            let xj = x[j];
            for i in 0..j {
                x[i] -= self.r[j][i] * xj;
            }
        }
        x
    }
}

/// Least-squares fit of `y` on the atoms `indices`.
#[derive(Clone, Debug)]
pub(crate) struct LsFit {
    /// One coefficient per requested index; dropped atoms get 0.
    pub coeffs: Vec<f64>,
    pub residual: Vec<f64>,
    /// Positions (into `indices`) rejected as dependent.
    #[allow(dead_code)]
    pub dropped: Vec<usize>,
}

pub(crate) fn least_squares(dict: &Dictionary, indices: &[usize], y: &[f64]) -> LsFit {
    let mut qr = IncrementalQr::new(dict.n());
    least_squares_with(&mut qr, dict, indices, y)
}

pub(crate) fn least_squares_with(qr: &mut IncrementalQr, dict: &Dictionary, indices: &[usize], y: &[f64]) -> LsFit {
    qr.clear();
    let mut kept = Vec::with_capacity(indices.len());
    let mut dropped = Vec::new();
    for (pos, &i) in indices.iter().enumerate() {
        if qr.push(dict.atom(i)) {
            kept.push(pos);
        } else {
            dropped.push(pos);
        }
    }
    let x = qr.solve(y);
    let mut coeffs = vec![0.0; indices.len()];
    let mut residual = y.to_vec();
    for (&pos, &v) in kept.iter().zip(&x) {
        coeffs[pos] = v;
        for (r, d) in residual.iter_mut().zip(dict.atom(indices[pos])) {
            *r -= v * d;
        }
    }
    LsFit { coeffs, residual, dropped }
}

/// In-place Cholesky of a row-major `k x k` SPD matrix; the lower triangle
/// receives `L`. Returns `log det` of the input, or `None` if not SPD.
pub(crate) fn cholesky_in_place(a: &mut [f64], k: usize) -> Option<f64> {
    let mut log_det = 0.0;
    for j in 0..k {
        let mut d = a[j * k + j];
        for p in 0..j {
            d -= a[j * k + p] * a[j * k + p];
        }
        if !(d > 0.0) {
            return None;
        }
        let l = d.sqrt();
        a[j * k + j] = l;
        log_det += 2.0 * l.ln();
        for i in j + 1..k {
            let mut s = a[i * k + j];
            for p in 0..j {
                s -= a[i * k + p] * a[j * k + p];
            }
            a[i * k + j] = s / l;
        }
    }
    Some(log_det)
}

/// Solves `L z = b` in place.
pub(crate) fn forward_substitute(l: &[f64], k: usize, b: &mut [f64]) {
    for i in 0..k {
        let mut s = b[i];
        for p in 0..i {
            s -= l[i * k + p] * b[p];
        }
        b[i] = s / l[i * k + i];
    }
}

/// Solves `L^T x = z` in place.
pub(crate) fn backward_substitute(l: &[f64], k: usize, b: &mut [f64]) {
    for i in (0..k).rev() {
        let mut s = b[i];
        for p in i + 1..k {
            s -= l[p * k + i] * b[p];
        }
        b[i] = s / l[i * k + i];
    }
}
