//! Dense real symmetric linear algebra.
//!
//! Everything the perturbation bounds are stated in terms of lives here: the
//! symmetric matrix type, its eigendecomposition, best rank-`p` truncation
//! (selection by `|λ|`), the spectral functional `f_p(A)` and the two norms.
//!
//! Eigenpairs come from cyclic Jacobi sweeps. Norms go through a separate
//! route (Householder tridiagonalisation followed by Sturm bisection) so that
//! the two can be checked against each other.

use std::fmt;
use std::ops::{Add, Sub};
use std::str::FromStr;

use serde::{Serialize, Serializer};
use thiserror::Error;

/// Jacobi stops once `off(A) <= JACOBI_TOL * ||A||_F`.
pub const JACOBI_TOL: f64 = 1e-12;
/// Hard cap on the number of cyclic Jacobi sweeps.
pub const JACOBI_MAX_SWEEPS: usize = 100;
/// Relative tolerance below which two eigenvalues count as one multiplet.
pub const MULTIPLET_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error(
        "Jacobi eigensolver did not converge for a {n}x{n} matrix after {sweeps} sweeps \
         (off-diagonal residual {off_norm:.3e})"
    )]
    NoConvergence { n: usize, sweeps: usize, off_norm: f64 },
    #[error("rank parameter p = {p} out of range 1..={max} for dimension {n}")]
    RankOutOfRange { p: usize, n: usize, max: usize },
    #[error("selection of rank {p} splits eigenvalue multiplet at {value}")]
    SplitsMultiplet { p: usize, value: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("row {row} has length {len}, expected {n} for a square matrix")]
    NotSquare { row: usize, len: usize, n: usize },
    #[error("matrix must have at least one row")]
    Empty,
}

/// Dense real symmetric `n x n` matrix stored row-major.
///
/// Symmetry is exact: every constructor writes the upper triangle and mirrors
/// it, and every operation preserves that.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        assert!(n >= 1, "SymMatrix needs n >= 1");
        SymMatrix { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * diag.len() + i] = d;
        }
        m
    }

    /// Builds the matrix from `f(i, j)` evaluated on the upper triangle
    /// (`i <= j`); the lower triangle is mirrored.
    pub fn from_upper_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                m.data[i * n + j] = v;
                m.data[j * n + i] = v;
            }
        }
        m
    }

    /// Square rows; only the upper triangle is read.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let n = rows.len();
        if n == 0 {
            return Err(LinalgError::Empty);
        }
        for (row, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(LinalgError::NotSquare { row, len: r.len(), n });
            }
        }
        Ok(Self::from_upper_fn(n, |i, j| rows[i][j]))
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Sets entry `(i, j)` and its mirror `(j, i)`.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn scaled(&self, c: f64) -> Self {
        SymMatrix { n: self.n, data: self.data.iter().map(|v| v * c).collect() }
    }

    /// `self += coeff * v v^T`.
    pub fn add_outer(&mut self, coeff: f64, v: &[f64]) {
        debug_assert_eq!(v.len(), self.n);
        let n = self.n;
        for i in 0..n {
            let ci = coeff * v[i];
            if ci == 0.0 {
                continue;
            }
            let row = &mut self.data[i * n..(i + 1) * n];
            for (r, &vj) in row.iter_mut().zip(v) {
                *r += ci * vj;
            }
        }
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| dot(self.row(i), v)).collect()
    }

    /// `u^T M v`.
    pub fn bilinear(&self, u: &[f64], v: &[f64]) -> f64 {
        (0..self.n).map(|i| u[i] * dot(self.row(i), v)).sum()
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn max_abs_diff(&self, other: &SymMatrix) -> f64 {
        assert_eq!(self.n, other.n, "dimension mismatch");
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn is_exactly_symmetric(&self) -> bool {
        (0..self.n).all(|i| (i + 1..self.n).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius_norm(self)
    }

    pub fn spectral_norm(&self) -> f64 {
        spectral_norm(self)
    }
}

impl Add<&SymMatrix> for &SymMatrix {
    type Output = SymMatrix;

    fn add(self, rhs: &SymMatrix) -> SymMatrix {
        assert_eq!(self.n, rhs.n, "dimension mismatch in SymMatrix addition");
        SymMatrix { n: self.n, data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect() }
    }
}

impl Sub<&SymMatrix> for &SymMatrix {
    type Output = SymMatrix;

    fn sub(self, rhs: &SymMatrix) -> SymMatrix {
        assert_eq!(self.n, rhs.n, "dimension mismatch in SymMatrix subtraction");
        SymMatrix { n: self.n, data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect() }
    }
}

impl Serialize for SymMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_rows().serialize(serializer)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Eigenvalues in descending order with orthonormal eigenvectors.
#[derive(Clone, Debug)]
pub struct Spectrum {
    values: Vec<f64>,
    // row i holds u_i
    vectors: Vec<f64>,
    source_norm: f64,
}

/// The eigenpairs picked by a rank-`p` truncation.
///
/// Because selection is by `|λ|`, the picked set is always the top `k`
/// eigenvalues together with the bottom `p - k`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Selection {
    pub p: usize,
    pub k: usize,
    /// 0-based indices into the descending eigenvalue list, ascending.
    pub indices: Vec<usize>,
}

impl Selection {
    /// 1-based index `n - (p - k) + 1` of the first bottom-cluster eigenvalue,
    /// `None` when the bottom cluster is empty.
    pub fn bottom_start(&self, n: usize) -> Option<usize> {
        (self.p > self.k).then(|| n - (self.p - self.k) + 1)
    }
}

impl Spectrum {
    /// Assembles a spectrum from eigenpairs already in descending order.
    /// Used by tests and by synthetic constructions with known eigenvectors.
    pub fn from_parts(values: Vec<f64>, vectors: Vec<Vec<f64>>) -> Result<Self, LinalgError> {
        let n = values.len();
        if n == 0 {
            return Err(LinalgError::Empty);
        }
        if vectors.len() != n {
            return Err(LinalgError::DimensionMismatch { expected: n, found: vectors.len() });
        }
        let mut flat = Vec::with_capacity(n * n);
        for v in &vectors {
            if v.len() != n {
                return Err(LinalgError::DimensionMismatch { expected: n, found: v.len() });
            }
            flat.extend_from_slice(v);
        }
        let source_norm = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(Spectrum { values, vectors: flat, source_norm })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `λ_i` with 1-based `i`, matching the rank parameter convention.
    #[inline]
    pub fn lambda(&self, i: usize) -> f64 {
        self.values[i - 1]
    }

    /// Eigenvector for the 0-based eigenvalue index `i`.
    pub fn vector(&self, i: usize) -> &[f64] {
        let n = self.n();
        &self.vectors[i * n..(i + 1) * n]
    }

    /// Cached `||A|| = max |λ_i|`.
    pub fn source_norm(&self) -> f64 {
        self.source_norm
    }

    /// `|λ|` sorted descending.
    pub fn singular_values(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self.values.iter().map(|v| v.abs()).collect();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }

    /// `σ_i` with 1-based `i`.
    pub fn sigma(&self, i: usize) -> f64 {
        self.singular_values()[i - 1]
    }

    /// `δ_i = λ_i - λ_{i+1}` with 1-based `i` in `1..n`.
    pub fn eigengap(&self, i: usize) -> f64 {
        self.values[i - 1] - self.values[i]
    }

    pub fn is_psd(&self) -> bool {
        self.values[self.n() - 1] >= -1e-10 * self.source_norm
    }

    fn multiplet_tol(&self) -> f64 {
        MULTIPLET_TOL * self.source_norm
    }

    fn check_rank(&self, p: usize, max: usize) -> Result<(), LinalgError> {
        if p == 0 || p > max {
            return Err(LinalgError::RankOutOfRange { p, n: self.n(), max });
        }
        Ok(())
    }

    /// Picks the `p` eigenpairs of largest `|λ|`; ties go to the positive
    /// eigenvalue and then to the smaller index.
    pub fn select(&self, p: usize) -> Result<Selection, LinalgError> {
        let n = self.n();
        self.check_rank(p, n)?;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            let (la, lb) = (self.values[a], self.values[b]);
            lb.abs()
                .total_cmp(&la.abs())
                .then_with(|| (lb > 0.0).cmp(&(la > 0.0)))
                .then_with(|| a.cmp(&b))
        });
        let mut indices = order[..p].to_vec();
        indices.sort_unstable();
        let mut chosen = vec![false; n];
        for &i in &indices {
            chosen[i] = true;
        }
        let tol = self.multiplet_tol();
        for i in 0..n - 1 {
            if chosen[i] != chosen[i + 1] && (self.values[i] - self.values[i + 1]).abs() <= tol {
                return Err(LinalgError::SplitsMultiplet { p, value: self.values[i] });
            }
        }
        let k = indices.iter().filter(|&&i| self.values[i] > 0.0).count();
        Ok(Selection { p, k, indices })
    }

    /// Rebuilds `Σ λ_i u_i u_i^T` over the given 0-based indices.
    pub fn partial_sum(&self, indices: impl IntoIterator<Item = usize>, weight: impl Fn(usize) -> f64) -> SymMatrix {
        let mut m = SymMatrix::zeros(self.n());
        for i in indices {
            m.add_outer(weight(i), self.vector(i));
        }
        m
    }

    pub fn reconstruct(&self) -> SymMatrix {
        self.partial_sum(0..self.n(), |i| self.values[i])
    }

    /// `U^T M U`, i.e. `M` expressed in this eigenbasis.
    pub fn to_eigenbasis(&self, m: &SymMatrix) -> SymMatrix {
        let n = self.n();
        assert_eq!(m.n(), n, "dimension mismatch");
        let mu: Vec<Vec<f64>> = (0..n).map(|j| m.matvec(self.vector(j))).collect();
        SymMatrix::from_upper_fn(n, |i, j| dot(self.vector(i), &mu[j]))
    }
}

/// Cyclic Jacobi eigendecomposition.
///
/// Returns eigenvalues in descending order. Each eigenvector's
/// largest-magnitude component is made positive (first such component on
/// ties) so the output is reproducible.
pub fn eig_sym(a: &SymMatrix) -> Result<Spectrum, LinalgError> {
    let n = a.n();
    let mut m = a.data.clone();
    // vt row j is eigenvector j
    let mut vt = vec![0.0; n * n];
    for i in 0..n {
        vt[i * n + i] = 1.0;
    }
    let fro = frobenius_norm(a);
    let threshold = JACOBI_TOL * fro;

    let off_norm = |m: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                s += m[i * n + j] * m[i * n + j];
            }
        }
        (2.0 * s).sqrt()
    };

    let mut converged = n == 1 || fro == 0.0;
    let mut sweeps = 0;
    while !converged {
        if off_norm(&m) <= threshold {
            converged = true;
            break;
        }
        if sweeps == JACOBI_MAX_SWEEPS {
            break;
        }
        sweeps += 1;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                // negligible against both diagonals: drop it
                let g = 100.0 * apq.abs();
                if sweeps > 4 && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                    m[p * n + q] = 0.0;
                    m[q * n + p] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);

                m[p * n + p] = app - t * apq;
                m[q * n + q] = aqq + t * apq;
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;
                for r in 0..n {
                    if r == p || r == q {
                        continue;
                    }
                    let arp = m[r * n + p];
                    let arq = m[r * n + q];
                    let nrp = arp - s * (arq + tau * arp);
                    let nrq = arq + s * (arp - tau * arq);
                    m[r * n + p] = nrp;
                    m[p * n + r] = nrp;
                    m[r * n + q] = nrq;
                    m[q * n + r] = nrq;
                }
                let (lo, hi) = vt.split_at_mut(q * n);
                let vp = &mut lo[p * n..(p + 1) * n];
                let vq = &mut hi[..n];
                for (x, y) in vp.iter_mut().zip(vq.iter_mut()) {
                    let (a, b) = (*x, *y);
                    *x = a - s * (b + tau * a);
                    *y = b + s * (a - tau * b);
                }
            }
        }
    }
    if !converged {
        return Err(LinalgError::NoConvergence { n, sweeps, off_norm: off_norm(&m) });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j * n + j].total_cmp(&m[i * n + i]).then(i.cmp(&j)));
    let mut values = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n * n);
    for &j in &order {
        values.push(m[j * n + j]);
        let v = &vt[j * n..(j + 1) * n];
        let mut lead = 0;
        for (i, x) in v.iter().enumerate() {
            if x.abs() > v[lead].abs() {
                lead = i;
            }
        }
        let sign = if v[lead] < 0.0 { -1.0 } else { 1.0 };
        vectors.extend(v.iter().map(|x| sign * x));
    }
    let source_norm = values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    Ok(Spectrum { values, vectors, source_norm })
}

/// Best rank-`p` approximation `Σ_{selected} λ_i u_i u_i^T`.
pub fn rank_p_approx(s: &Spectrum, p: usize) -> Result<SymMatrix, LinalgError> {
    let sel = s.select(p)?;
    Ok(s.partial_sum(sel.indices.iter().copied(), |i| s.values[i]))
}

/// Number of positive eigenvalues among the `p` selected by [`rank_p_approx`].
pub fn split_index_k(s: &Spectrum, p: usize) -> Result<usize, LinalgError> {
    Ok(s.select(p)?.k)
}

/// Entire functions usable in the spectral functional `f_p`.
#[derive(Clone, Debug, PartialEq)]
pub enum EntireFn {
    Power(u32),
    Exp,
    Cos,
    Sin,
    /// Coefficients in ascending degree order.
    Polynomial(Vec<f64>),
}

impl EntireFn {
    /// The default function suite: `1, z, z^2, z^3, exp`.
    pub fn registry() -> Vec<EntireFn> {
        vec![EntireFn::Power(0), EntireFn::Power(1), EntireFn::Power(2), EntireFn::Power(3), EntireFn::Exp]
    }

    pub fn eval_real(&self, x: f64) -> f64 {
        match self {
            EntireFn::Power(k) => x.powi(*k as i32),
            EntireFn::Exp => x.exp(),
            EntireFn::Cos => x.cos(),
            EntireFn::Sin => x.sin(),
            EntireFn::Polynomial(c) => c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci),
        }
    }
}

impl fmt::Display for EntireFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EntireFn::Power(0) => write!(f, "1"),
            EntireFn::Power(1) => write!(f, "z"),
            EntireFn::Power(k) => write!(f, "z^{k}"),
            EntireFn::Exp => write!(f, "exp"),
            EntireFn::Cos => write!(f, "cos"),
            EntireFn::Sin => write!(f, "sin"),
            EntireFn::Polynomial(c) => {
                let parts: Vec<String> = c.iter().map(|v| v.to_string()).collect();
                write!(f, "poly:{}", parts.join(","))
            }
        }
    }
}

impl FromStr for EntireFn {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s {
            "1" => return Ok(EntireFn::Power(0)),
            "z" => return Ok(EntireFn::Power(1)),
            "exp" => return Ok(EntireFn::Exp),
            "cos" => return Ok(EntireFn::Cos),
            "sin" => return Ok(EntireFn::Sin),
            _ => {}
        }
        if let Some(k) = s.strip_prefix("z^") {
            return k.parse().map(EntireFn::Power).map_err(|_| format!("bad power in {s:?}"));
        }
        if let Some(c) = s.strip_prefix("poly:") {
            let coeffs: Result<Vec<f64>, _> = c.split(',').map(|t| t.trim().parse::<f64>()).collect();
            return match coeffs {
                Ok(v) if !v.is_empty() => Ok(EntireFn::Polynomial(v)),
                _ => Err(format!("bad polynomial coefficients in {s:?}")),
            };
        }
        Err(format!("unknown function {s:?} (expected 1, z, z^k, exp, cos, sin, poly:c0,c1,...)"))
    }
}

/// `f_p(A) = Σ_{i<=p} f(λ_i) u_i u_i^T` over the top `p` eigenvalues in
/// descending (not `|λ|`) order.
pub fn f_p_approx(s: &Spectrum, f: &EntireFn, p: usize) -> Result<SymMatrix, LinalgError> {
    let n = s.n();
    s.check_rank(p, n)?;
    if p < n && s.eigengap(p) <= s.multiplet_tol() {
        return Err(LinalgError::SplitsMultiplet { p, value: s.lambda(p) });
    }
    Ok(s.partial_sum(0..p, |i| f.eval_real(s.values[i])))
}

pub fn frobenius_norm(m: &SymMatrix) -> f64 {
    m.data.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `max |λ_i(M)|`, computed by tridiagonalisation and bisection rather than
/// by the Jacobi solver.
pub fn spectral_norm(m: &SymMatrix) -> f64 {
    let (lo, hi) = eigenvalue_range(m);
    lo.abs().max(hi.abs())
}

/// Smallest and largest eigenvalue of `m`.
pub fn eigenvalue_range(m: &SymMatrix) -> (f64, f64) {
    let (d, e) = tridiagonalize(m);
    (tridiag_extreme(&d, &e, false), tridiag_extreme(&d, &e, true))
}

/// Householder reduction to tridiagonal form; returns the diagonal and the
/// sub-diagonal (length `n - 1`). Eigenvectors are not accumulated.
pub(crate) fn tridiagonalize(m: &SymMatrix) -> (Vec<f64>, Vec<f64>) {
    let n = m.n();
    let mut a = m.data.clone();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n.saturating_sub(1)];
    let mut v = vec![0.0; n];
    let mut q = vec![0.0; n];
    for k in 0..n.saturating_sub(2) {
        let len = n - k - 1;
        let mut xnorm2 = 0.0;
        for i in 0..len {
            let x = a[(k + 1 + i) * n + k];
            v[i] = x;
            xnorm2 += x * x;
        }
        d[k] = a[k * n + k];
        let xnorm = xnorm2.sqrt();
        if xnorm == 0.0 {
            e[k] = 0.0;
            continue;
        }
        let alpha = if v[0] > 0.0 { -xnorm } else { xnorm };
        e[k] = alpha;
        v[0] -= alpha;
        let vnorm = (xnorm2 - 2.0 * alpha * (v[0] + alpha) + alpha * alpha).sqrt();
        let vnorm = if vnorm > 0.0 { vnorm } else { v[..len].iter().map(|x| x * x).sum::<f64>().sqrt() };
        for x in &mut v[..len] {
            *x /= vnorm;
        }
        // trailing block B = a[k+1.., k+1..]; B <- H B H with H = I - 2 v v^T
        let off = k + 1;
        let mut beta = 0.0;
        for i in 0..len {
            let row = &a[(off + i) * n + off..(off + i) * n + off + len];
            let s = dot(row, &v[..len]);
            q[i] = s;
            beta += v[i] * s;
        }
        for i in 0..len {
            q[i] = 2.0 * (q[i] - beta * v[i]);
        }
        for i in 0..len {
            let (vi, qi) = (v[i], q[i]);
            let row = &mut a[(off + i) * n + off..(off + i) * n + off + len];
            for j in 0..len {
                row[j] -= vi * q[j] + qi * v[j];
            }
        }
    }
    if n >= 2 {
        d[n - 2] = a[(n - 2) * n + n - 2];
        e[n - 2] = a[(n - 1) * n + n - 2];
    }
    d[n - 1] = a[(n - 1) * n + n - 1];
    (d, e)
}

/// Number of eigenvalues of the tridiagonal matrix strictly below `x`.
fn sturm_count(d: &[f64], e: &[f64], x: f64, pivmin: f64) -> usize {
    let mut count = 0;
    let mut q = d[0] - x;
    if q.abs() < pivmin {
        q = -pivmin;
    }
    if q < 0.0 {
        count += 1;
    }
    for i in 1..d.len() {
        q = d[i] - x - e[i - 1] * e[i - 1] / q;
        if q.abs() < pivmin {
            q = -pivmin;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

fn tridiag_extreme(d: &[f64], e: &[f64], largest: bool) -> f64 {
    let n = d.len();
    if n == 1 {
        return d[0];
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { e[i - 1].abs() } else { 0.0 } + if i + 1 < n { e[i].abs() } else { 0.0 };
        lo = lo.min(d[i] - r);
        hi = hi.max(d[i] + r);
    }
    let scale = lo.abs().max(hi.abs());
    if scale == 0.0 {
        return 0.0;
    }
    let pivmin = f64::MIN_POSITIVE.max(scale * scale * 1e-300);
    lo -= 2.0 * f64::EPSILON * scale;
    hi += 2.0 * f64::EPSILON * scale;
    // invariant: count(lo) <= target < count(hi)
    let target = if largest { n - 1 } else { 0 };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 2.0 * f64::EPSILON * scale {
            break;
        }
        if sturm_count(d, e, mid, pivmin) <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
