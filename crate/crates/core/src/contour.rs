//! Numerical contour-integral oracle.
//!
//! Integrals over the rectangular contours around the selected eigenvalues
//! are evaluated with a composite trapezoid rule per segment and Romberg
//! extrapolation over successive doublings. Vertical walls cross the real
//! axis next to eigenvalues, so their nodes are graded with a `sinh` map that
//! clusters points where the resolvent peaks.
//!
//! All matrix-valued integrands are evaluated in the eigenbasis of `A`, where
//! the resolvent is diagonal.

use std::f64::consts::{LN_10, PI, SQRT_2};

use num_complex::Complex64;
use thiserror::Error;

use crate::matcore::{dot, spectral_norm, EntireFn, LinalgError, Spectrum, SymMatrix};

/// Eigenvalues closer than this (relative to `||A||`) to a wall or node are
/// treated as lying on the contour.
pub const POLE_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ContourError {
    #[error("eigenvalue {value} lies on the contour wall at x = {wall}")]
    EigenvalueOnContour { value: f64, wall: f64 },
    #[error("contour needs a positive top eigenvalue, got {0}")]
    NonPositiveTop(f64),
    #[error("rank p = {p} needs 1 <= p < n = {n}")]
    RankOutOfRange { p: usize, n: usize },
    #[error("eigenvalue {lambda} encloses the wrong side of the contour")]
    WrongSide { lambda: f64 },
    #[error("node z = {re}{im:+}i is within the pole guard of eigenvalue {lambda}")]
    NearPole { re: f64, im: f64, lambda: f64 },
    #[error(
        "quadrature did not converge with {points} points per segment: \
         last two estimates {previous:.12e} and {last:.12e}"
    )]
    NoConvergence { points: usize, previous: f64, last: f64 },
    #[error("contour projection left an imaginary residue of {residue:.3e} (scale {scale:.3e})")]
    ImaginaryResidue { residue: f64, scale: f64 },
    #[error("invalid argument: {0}")]
    BadArgument(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

impl EntireFn {
    pub fn eval_complex(&self, z: Complex64) -> Complex64 {
        match self {
            EntireFn::Power(k) => z.powu(*k),
            EntireFn::Exp => z.exp(),
            EntireFn::Cos => z.cos(),
            EntireFn::Sin => z.sin(),
            EntireFn::Polynomial(c) => c.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &ci| acc * z + ci),
        }
    }

    pub fn modulus(&self, z: Complex64) -> f64 {
        self.eval_complex(z).norm()
    }
}

/// Rectangle with vertical walls at `x0` (near, crossing the spectral gap)
/// and `x1` (far), and horizontal walls at `±t`.
///
/// Segments in order: Γ1 up the `x0` wall, Γ2 along the top from `x0` to
/// `x1`, Γ3 down the `x1` wall, Γ4 along the bottom back to `x0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RectContour {
    pub x0: f64,
    pub x1: f64,
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: Complex64,
    pub end: Complex64,
}

impl Segment {
    pub fn is_vertical(&self) -> bool {
        self.start.re == self.end.re
    }

    pub fn length(&self) -> f64 {
        (self.end - self.start).norm()
    }
}

impl RectContour {
    pub fn new(x0: f64, x1: f64, t: f64) -> Result<Self, ContourError> {
        if !(x0.is_finite() && x1.is_finite() && t.is_finite()) || x0 == x1 || t <= 0.0 {
            return Err(ContourError::BadArgument(format!("degenerate rectangle x0={x0}, x1={x1}, T={t}")));
        }
        Ok(RectContour { x0, x1, t })
    }

    pub fn segments(&self) -> [Segment; 4] {
        let c = |x: f64, y: f64| Complex64::new(x, y);
        let (x0, x1, t) = (self.x0, self.x1, self.t);
        [
            Segment { start: c(x0, -t), end: c(x0, t) },
            Segment { start: c(x0, t), end: c(x1, t) },
            Segment { start: c(x1, t), end: c(x1, -t) },
            Segment { start: c(x1, -t), end: c(x0, -t) },
        ]
    }

    /// Winding number of the segment chain around interior points: `-1` when
    /// `x0 < x1` (the chain runs clockwise), `+1` for the mirrored contour.
    pub fn winding(&self) -> f64 {
        if self.x0 < self.x1 {
            -1.0
        } else {
            1.0
        }
    }

    /// True when the real point `x` is strictly between the vertical walls.
    pub fn encloses(&self, x: f64) -> bool {
        let (lo, hi) = (self.x0.min(self.x1), self.x0.max(self.x1));
        x > lo && x < hi
    }

    pub fn perimeter(&self) -> f64 {
        2.0 * (self.x1 - self.x0).abs() + 4.0 * self.t
    }

    /// Point at arclength `s` along the segment chain (wrapping).
    pub fn point_at(&self, s: f64) -> Complex64 {
        let mut s = s.rem_euclid(self.perimeter());
        for seg in self.segments() {
            let len = seg.length();
            if s <= len {
                return seg.start + (seg.end - seg.start) * (s / len);
            }
            s -= len;
        }
        self.segments()[0].start
    }

    fn check_walls(&self, s: &Spectrum) -> Result<(), ContourError> {
        let guard = POLE_GUARD * s.source_norm();
        for &l in s.values() {
            for wall in [self.x0, self.x1] {
                if (l - wall).abs() <= guard {
                    return Err(ContourError::EigenvalueOnContour { value: l, wall });
                }
            }
        }
        Ok(())
    }
}

/// The contour for the PSD case: `x0 = λ_p - δ_p/2`, `x1 = T = 2λ_1`.
pub fn build_contour_psd(s: &Spectrum, p: usize) -> Result<RectContour, ContourError> {
    let n = s.n();
    if p == 0 || p >= n {
        return Err(ContourError::RankOutOfRange { p, n });
    }
    let l1 = s.lambda(1);
    if !(l1 > 0.0) {
        return Err(ContourError::NonPositiveTop(l1));
    }
    let x0 = s.lambda(p) - s.eigengap(p) / 2.0;
    let gamma = RectContour { x0, x1: 2.0 * l1, t: 2.0 * l1 };
    gamma.check_walls(s)?;
    for (i, &l) in s.values().iter().enumerate() {
        if gamma.encloses(l) != (i < p) {
            return Err(ContourError::WrongSide { lambda: l });
        }
    }
    Ok(gamma)
}

/// Contours for a symmetric matrix whose top-`p` selection splits into `k`
/// positive and `p - k` negative eigenvalues. `top` encircles the positive
/// cluster and is absent when `k = 0`; `bottom` encircles the negative
/// cluster and is absent when `k = p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymContours {
    pub top: Option<RectContour>,
    pub bottom: Option<RectContour>,
}

pub fn build_contours_sym(s: &Spectrum, p: usize) -> Result<SymContours, ContourError> {
    let n = s.n();
    if p == 0 || p >= n {
        return Err(ContourError::RankOutOfRange { p, n });
    }
    let sel = s.select(p)?;
    let k = sel.k;
    let t = 2.0 * s.sigma(1);
    let top = if k >= 1 {
        let a0 = s.lambda(k) - s.eigengap(k) / 2.0;
        Some(RectContour::new(a0, t, t)?)
    } else {
        None
    };
    let bottom = match sel.bottom_start(n) {
        Some(b) => {
            let b0 = s.lambda(b) + s.eigengap(b - 1) / 2.0;
            Some(RectContour::new(b0, -t, t)?)
        }
        None => None,
    };
    for (gamma, lo, hi) in [(top, 0, k), (bottom, n - (p - k), n)] {
        if let Some(g) = gamma {
            g.check_walls(s)?;
            for (i, &l) in s.values().iter().enumerate() {
                if g.encloses(l) != (lo..hi).contains(&i) {
                    return Err(ContourError::WrongSide { lambda: l });
                }
            }
        }
    }
    Ok(SymContours { top, bottom })
}

/// Trapezoid-with-doubling settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadSpec {
    pub points_per_segment: usize,
    pub rel_tol: f64,
    pub max_doublings: usize,
}

impl Default for QuadSpec {
    fn default() -> Self {
        QuadSpec { points_per_segment: 16, rel_tol: 1e-6, max_doublings: 6 }
    }
}

impl QuadSpec {
    pub fn with_tol(rel_tol: f64) -> Self {
        QuadSpec { rel_tol, ..Self::default() }
    }

    fn validate(&self) -> Result<(), ContourError> {
        let m = self.points_per_segment;
        if m < 16 || m % 16 != 0 || !(m / 16).is_power_of_two() {
            return Err(ContourError::BadArgument(format!("points_per_segment must be 16·2^j, got {m}")));
        }
        if !(self.rel_tol > 0.0) {
            return Err(ContourError::BadArgument(format!("rel_tol must be > 0, got {}", self.rel_tol)));
        }
        Ok(())
    }
}

/// Parametrisation of one segment over `u ∈ [-1, 1]`.
#[derive(Debug, Clone, Copy)]
enum Path {
    Line { a: Complex64, b: Complex64 },
    // z = base + dir * w sinh(beta u)
    Graded { base: Complex64, dir: Complex64, w: f64, beta: f64 },
}

impl Path {
    fn for_segment(seg: &Segment, poles: &[f64]) -> Path {
        if !seg.is_vertical() {
            return Path::Line { a: seg.start, b: seg.end };
        }
        let x = seg.start.re;
        let half = 0.5 * (seg.end.im - seg.start.im);
        let t = half.abs();
        let w = poles.iter().map(|l| (l - x).abs()).fold(t, f64::min).max(t * 1e-15);
        Path::Graded {
            base: Complex64::new(x, 0.5 * (seg.end.im + seg.start.im)),
            dir: Complex64::new(0.0, half.signum()),
            w,
            beta: (t / w).asinh(),
        }
    }

    /// Node and `dz/du` at parameter `u`.
    fn eval(&self, u: f64) -> (Complex64, Complex64) {
        match *self {
            Path::Line { a, b } => (a + (b - a) * (0.5 * (u + 1.0)), (b - a) * 0.5),
            Path::Graded { base, dir, w, beta } => {
                let bu = beta * u;
                (base + dir * (w * bu.sinh()), dir * (w * beta * bu.cosh()))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Criterion {
    /// Every component converged relative to itself.
    Componentwise,
    /// Sum over segments converged relative to its largest component.
    TotalMax,
}

fn converged(crit: Criterion, prev: &[f64], cur: &[f64], dim: usize, tol: f64) -> Option<(f64, f64)> {
    match crit {
        Criterion::Componentwise => {
            for (p, c) in prev.iter().zip(cur) {
                if (c - p).abs() > tol * c.abs() {
                    return Some((*p, *c));
                }
            }
            None
        }
        Criterion::TotalMax => {
            let total = |v: &[f64]| -> Vec<f64> {
                let mut t = vec![0.0; dim];
                for block in v.chunks(dim) {
                    for (a, b) in t.iter_mut().zip(block) {
                        *a += b;
                    }
                }
                t
            };
            let (tp, tc) = (total(prev), total(cur));
            let scale = tc.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let mut worst = None;
            let mut worst_diff = tol * scale;
            for (p, c) in tp.iter().zip(&tc) {
                if (c - p).abs() > worst_diff {
                    worst_diff = (c - p).abs();
                    worst = Some((*p, *c));
                }
            }
            worst
        }
    }
}

/// Romberg-accelerated trapezoid over several paths at once. `g(z, dz/du,
/// out)` writes `dim` components; the return value holds one block of `dim`
/// integrals per path.
fn integrate<G>(paths: &[Path], dim: usize, q: &QuadSpec, crit: Criterion, mut g: G) -> Result<Vec<Vec<f64>>, ContourError>
where
    G: FnMut(Complex64, Complex64, &mut [f64]) -> Result<(), ContourError>,
{
    q.validate()?;
    let len = paths.len() * dim;
    let mut sums = vec![0.0; len];
    let mut buf = vec![0.0; dim];
    let mut intervals = q.points_per_segment;

    let mut add_nodes = |sums: &mut [f64], intervals: usize, step: usize, start: usize| -> Result<(), ContourError> {
        for (pi, path) in paths.iter().enumerate() {
            let block = &mut sums[pi * dim..(pi + 1) * dim];
            let mut j = start;
            while j <= intervals {
                let u = -1.0 + 2.0 * j as f64 / intervals as f64;
                let (z, dz) = path.eval(u);
                g(z, dz, &mut buf)?;
                let wgt = if j == 0 || j == intervals { 0.5 } else { 1.0 };
                for (s, v) in block.iter_mut().zip(&buf) {
                    *s += wgt * v;
                }
                j += step;
            }
        }
        Ok(())
    };

    add_nodes(&mut sums, intervals, 1, 0)?;
    let trap = |sums: &[f64], intervals: usize| -> Vec<f64> {
        let h = 2.0 / intervals as f64;
        sums.iter().map(|s| s * h).collect()
    };
    let mut table: Vec<Vec<f64>> = vec![trap(&sums, intervals)];
    let mut best = table[0].clone();
    let mut failure = (0.0, 0.0);
    for _ in 0..q.max_doublings {
        intervals *= 2;
        add_nodes(&mut sums, intervals, 2, 1)?;
        let mut row = vec![trap(&sums, intervals)];
        for j in 1..=table.len() {
            let factor = 4f64.powi(j as i32) - 1.0;
            let next: Vec<f64> = row[j - 1].iter().zip(&table[j - 1]).map(|(a, b)| a + (a - b) / factor).collect();
            row.push(next);
        }
        let cur = row.last().unwrap().clone();
        match converged(crit, &best, &cur, dim, q.rel_tol) {
            None => return Ok(cur.chunks(dim).map(<[f64]>::to_vec).collect()),
            Some(pair) => failure = pair,
        }
        best = cur;
        table = row;
    }
    Err(ContourError::NoConvergence { points: intervals, previous: failure.0, last: failure.1 })
}

fn paths_for(gamma: &RectContour, poles: &[f64]) -> Vec<Path> {
    gamma.segments().iter().map(|s| Path::for_segment(s, poles)).collect()
}

/// Every node the quadrature would visit with `intervals` subintervals per
/// segment.
pub fn quadrature_nodes(gamma: &RectContour, poles: &[f64], intervals: usize) -> Vec<Complex64> {
    let mut out = Vec::new();
    for path in paths_for(gamma, poles) {
        for j in 0..=intervals {
            out.push(path.eval(-1.0 + 2.0 * j as f64 / intervals as f64).0);
        }
    }
    out
}

fn guard_poles(s: &Spectrum, z: Complex64) -> Result<(), ContourError> {
    let guard = POLE_GUARD * s.source_norm();
    for &l in s.values() {
        if (z - l).norm() <= guard {
            return Err(ContourError::NearPole { re: z.re, im: z.im, lambda: l });
        }
    }
    Ok(())
}

/// Dense complex `n x n` matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    pub n: usize,
    pub data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(n: usize) -> Self {
        CMatrix { n, data: vec![Complex64::new(0.0, 0.0); n * n] }
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.n + j]
    }

    pub fn spectral_norm(&self) -> f64 {
        complex_spectral_norm(&self.data, self.n)
    }
}

/// Largest singular value of a complex matrix: `sqrt(λmax(M* M))`, with the
/// Hermitian `M* M` embedded as a real symmetric matrix of twice the size.
pub fn complex_spectral_norm(m: &[Complex64], n: usize) -> f64 {
    let mut h = vec![Complex64::new(0.0, 0.0); n * n];
    for k in 0..n {
        let row = &m[k * n..(k + 1) * n];
        for i in 0..n {
            let a = row[i].conj();
            if a == Complex64::new(0.0, 0.0) {
                continue;
            }
            for j in i..n {
                h[i * n + j] += a * row[j];
            }
        }
    }
    let emb = SymMatrix::from_upper_fn(2 * n, |i, j| {
        let (bi, ii) = (i / n, i % n);
        let (bj, jj) = (j / n, j % n);
        // h is only filled for ii <= jj; recover the rest by Hermitian symmetry
        let hv = if ii <= jj { h[ii * n + jj] } else { h[jj * n + ii].conj() };
        match (bi, bj) {
            (0, 0) | (1, 1) => hv.re,
            (0, 1) => -hv.im,
            _ => hv.im,
        }
    });
    spectral_norm(&emb).max(0.0).sqrt()
}

/// `(zI - A)^{-1} = Σ u_i u_i^T / (z - λ_i)`.
pub fn resolvent(s: &Spectrum, z: Complex64) -> Result<CMatrix, ContourError> {
    guard_poles(s, z)?;
    let n = s.n();
    let mut r = CMatrix::zeros(n);
    for i in 0..n {
        let c = (z - s.values()[i]).inv();
        let u = s.vector(i);
        for a in 0..n {
            let cu = c * u[a];
            for b in 0..n {
                r.data[a * n + b] += cu * u[b];
            }
        }
    }
    Ok(r)
}

/// `(1/2πi) ∮ f(z) (zI - A)^{-1} dz` by quadrature.
pub fn contour_project(s: &Spectrum, f: &EntireFn, gamma: &RectContour, q: &QuadSpec) -> Result<SymMatrix, ContourError> {
    let n = s.n();
    let lam = s.values().to_vec();
    let paths = paths_for(gamma, &lam);
    let blocks = integrate(&paths, 2 * n, q, Criterion::TotalMax, |z, dz, out| {
        guard_poles(s, z)?;
        let fz = f.eval_complex(z) * dz;
        for (i, &l) in lam.iter().enumerate() {
            let v = fz / (z - l);
            out[2 * i] = v.re;
            out[2 * i + 1] = v.im;
        }
        Ok(())
    })?;
    // (1/2πi)(a + ib) = (b - ia)/2π; orient counterclockwise
    let scale = gamma.winding() * 2.0 * PI;
    let mut coeff = vec![0.0; n];
    let mut residue = 0.0f64;
    for i in 0..n {
        let (a, b): (f64, f64) = blocks.iter().map(|blk| (blk[2 * i], blk[2 * i + 1])).fold((0.0, 0.0), |acc, v| (acc.0 + v.0, acc.1 + v.1));
        coeff[i] = b / scale;
        residue = residue.max((a / scale).abs());
    }
    let result = s.partial_sum(0..n, |i| coeff[i]);
    let mag = coeff.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    if residue > q.rel_tol * mag.max(f64::MIN_POSITIVE) && residue > 1e-14 {
        return Err(ContourError::ImaginaryResidue { residue, scale: mag });
    }
    Ok(result)
}

/// `||D Ẽ D||` with `D = diag(1/(z - λ_i))`, the resolvent sandwich in the
/// eigenbasis.
fn sandwich_norm(lam: &[f64], e_eig: &SymMatrix, z: Complex64, scratch: &mut Vec<Complex64>) -> f64 {
    let n = lam.len();
    let d: Vec<Complex64> = lam.iter().map(|&l| (z - l).inv()).collect();
    scratch.clear();
    for i in 0..n {
        for j in 0..n {
            scratch.push(d[i] * e_eig.get(i, j) * d[j]);
        }
    }
    complex_spectral_norm(scratch, n)
}

/// `(1/2π) ∫_Γ |f(z)| ||R(z) E R(z)|| |dz|` for each function in `fs`. The
/// matrix norm does not depend on `f`, so all functions share the nodes.
pub fn f1_integrals(s: &Spectrum, e: &SymMatrix, fs: &[EntireFn], gamma: &RectContour, q: &QuadSpec) -> Result<Vec<f64>, ContourError> {
    if e.as_slice().iter().all(|&v| v == 0.0) {
        return Ok(vec![0.0; fs.len()]);
    }
    let lam = s.values().to_vec();
    let e_eig = s.to_eigenbasis(e);
    let mut scratch = Vec::new();
    let blocks = integrate(&paths_for(gamma, &lam), fs.len(), q, Criterion::Componentwise, |z, dz, out| {
        guard_poles(s, z)?;
        let g = sandwich_norm(&lam, &e_eig, z, &mut scratch) * dz.norm();
        for (o, f) in out.iter_mut().zip(fs) {
            *o = f.modulus(z) * g;
        }
        Ok(())
    })?;
    Ok(sum_blocks(&blocks, fs.len()).into_iter().map(|v| v / (2.0 * PI)).collect())
}

#[allow(non_snake_case)]
pub fn F1_integral(s: &Spectrum, e: &SymMatrix, f: &EntireFn, gamma: &RectContour, q: &QuadSpec) -> Result<f64, ContourError> {
    Ok(f1_integrals(s, e, std::slice::from_ref(f), gamma, q)?[0])
}

fn sum_blocks(blocks: &[Vec<f64>], dim: usize) -> Vec<f64> {
    let mut t = vec![0.0; dim];
    for b in blocks {
        for (a, v) in t.iter_mut().zip(b) {
            *a += v;
        }
    }
    t
}

/// `(1/2π) ∫_Γ |f(z)| ||(zI - Ã)^{-1} - (zI - A)^{-1}|| |dz|` for each `f`.
pub fn f_integrals(sa: &Spectrum, sat: &Spectrum, fs: &[EntireFn], gamma: &RectContour, q: &QuadSpec) -> Result<Vec<f64>, ContourError> {
    let n = sa.n();
    if sat.n() != n {
        return Err(LinalgError::DimensionMismatch { expected: n, found: sat.n() }.into());
    }
    if sa.values() == sat.values() && (0..n).all(|i| sa.vector(i) == sat.vector(i)) {
        return Ok(vec![0.0; fs.len()]);
    }
    let lam = sa.values().to_vec();
    let lamt = sat.values().to_vec();
    // q[i][j] = u_i . ũ_j
    let qm: Vec<f64> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| dot(sa.vector(i), sat.vector(j))).collect();
    let mut poles = lam.clone();
    poles.extend_from_slice(&lamt);
    let mut m = vec![Complex64::new(0.0, 0.0); n * n];
    let mut tmp = vec![Complex64::new(0.0, 0.0); n * n];
    let blocks = integrate(&paths_for(gamma, &poles), fs.len(), q, Criterion::Componentwise, |z, dz, out| {
        guard_poles(sa, z)?;
        guard_poles(sat, z)?;
        let dt: Vec<Complex64> = lamt.iter().map(|&l| (z - l).inv()).collect();
        // tmp = Q diag(dt)
        for i in 0..n {
            for k in 0..n {
                tmp[i * n + k] = dt[k] * qm[i * n + k];
            }
        }
        for i in 0..n {
            for j in i..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..n {
                    acc += tmp[i * n + k] * qm[j * n + k];
                }
                if i == j {
                    acc -= (z - lam[i]).inv();
                }
                m[i * n + j] = acc;
                m[j * n + i] = acc;
            }
        }
        let g = complex_spectral_norm(&m, n) * dz.norm();
        for (o, f) in out.iter_mut().zip(fs) {
            *o = f.modulus(z) * g;
        }
        Ok(())
    })?;
    Ok(sum_blocks(&blocks, fs.len()).into_iter().map(|v| v / (2.0 * PI)).collect())
}

#[allow(non_snake_case)]
pub fn F_integral(sa: &Spectrum, sat: &Spectrum, f: &EntireFn, gamma: &RectContour, q: &QuadSpec) -> Result<f64, ContourError> {
    Ok(f_integrals(sa, sat, std::slice::from_ref(f), gamma, q)?[0])
}

/// Per-segment integrals `M_k = ∫ |z| ||R E R|| |dz|` and
/// `N_k = ∫ |z| / min_i |z - λ_i|^2 |dz|`, in segment order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentIntegrals {
    pub m: [f64; 4],
    pub n: [f64; 4],
}

pub fn segment_integrals(s: &Spectrum, e: &SymMatrix, gamma: &RectContour, q: &QuadSpec) -> Result<SegmentIntegrals, ContourError> {
    let lam = s.values().to_vec();
    let e_eig = s.to_eigenbasis(e);
    let zero_e = e.as_slice().iter().all(|&v| v == 0.0);
    let mut scratch = Vec::new();
    let blocks = integrate(&paths_for(gamma, &lam), 2, q, Criterion::Componentwise, |z, dz, out| {
        guard_poles(s, z)?;
        let w = z.norm() * dz.norm();
        out[0] = if zero_e { 0.0 } else { w * sandwich_norm(&lam, &e_eig, z, &mut scratch) };
        let dmin = lam.iter().map(|&l| (z - l).norm_sqr()).fold(f64::INFINITY, f64::min);
        out[1] = w / dmin;
        Ok(())
    })?;
    let mut r = SegmentIntegrals { m: [0.0; 4], n: [0.0; 4] };
    for (k, b) in blocks.iter().enumerate() {
        r.m[k] = b[0];
        r.n[k] = b[1];
    }
    Ok(r)
}

/// Closed-form right-hand sides of the segment lemmas for one contour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentLemmaBounds {
    pub n1: f64,
    pub n2_n4: f64,
    pub n3: f64,
    pub m1: f64,
}

/// Evaluates the lemma bounds for `gamma` around the spectrum `s`.
///
/// `r` and `x_bar` are the halving distance and interaction term that enter
/// the `M_1` bound; `e_norm` is `||E||`.
pub fn segment_lemma_bounds(s: &Spectrum, gamma: &RectContour, e_norm: f64, r: usize, x_bar: f64) -> SegmentLemmaBounds {
    let near = s.values().iter().map(|&l| (l - gamma.x0).abs()).fold(f64::INFINITY, f64::min);
    let far = s.values().iter().map(|&l| (l - gamma.x1).abs()).fold(f64::INFINITY, f64::min);
    let delta = 2.0 * near;
    let t = gamma.t;
    let sigma1 = s.sigma(1);
    let r2x = (r * r) as f64 * x_bar;
    SegmentLemmaBounds {
        n1: 2.0 * PI * gamma.x0.abs() / delta + 4.0 * (3.0 * t / delta).ln(),
        n2_n4: SQRT_2 * (gamma.x1 - gamma.x0).abs() / t,
        n3: PI * gamma.x1.abs() / far + 4.0 * (3.0 * t / far).ln(),
        m1: r2x * (2.0 * PI * gamma.x0.abs() / delta + 2.0 * (6.0 * sigma1 / delta).ln())
            + (20.0 + 4.0 * PI / LN_10) * e_norm * (10.0 * sigma1 / delta).ln(),
    }
}

/// Quadrature of `∫_{-T}^{T} dt / (t^2 + a^2)` together with its bound `π/a`.
pub fn arctan_integral_check(a: f64, t: f64, q: &QuadSpec) -> Result<(f64, f64), ContourError> {
    if !(a > 0.0 && t >= a && t.is_finite()) {
        return Err(ContourError::BadArgument(format!("need 0 < a <= T, got a={a}, T={t}")));
    }
    let seg = Segment { start: Complex64::new(0.0, -t), end: Complex64::new(0.0, t) };
    let path = Path::Graded { base: Complex64::new(0.0, 0.0), dir: Complex64::new(0.0, 1.0), w: a, beta: (t / a).asinh() };
    debug_assert!(seg.is_vertical());
    let v = integrate(&[path], 1, q, Criterion::Componentwise, |z, dz, out| {
        out[0] = dz.norm() / (z.im * z.im + a * a);
        Ok(())
    })?;
    Ok((v[0][0], PI / a))
}

/// Maximum of `|f|` over the boundary of the rectangle `[x0, x1] x [-t, t]`:
/// a 4096-point perimeter grid (corners included) followed by a bisection
/// refinement around the best grid point.
pub fn max_modulus_on_rect(f: &EntireFn, gamma: &RectContour) -> f64 {
    const GRID: usize = 4096;
    let per = gamma.perimeter();
    let h = per / GRID as f64;
    let val = |s: f64| f.modulus(gamma.point_at(s));
    let mut best_s = 0.0;
    let mut best = f64::NEG_INFINITY;
    for j in 0..GRID {
        let s = j as f64 * h;
        let v = val(s);
        if v > best {
            best = v;
            best_s = s;
        }
    }
    for seg in gamma.segments() {
        best = best.max(f.modulus(seg.start));
    }
    let (mut lo, mut hi) = (best_s - h, best_s + h);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let (a, b) = (0.5 * (lo + mid), 0.5 * (mid + hi));
        let (va, vb) = (val(a), val(b));
        best = best.max(va).max(vb);
        if va >= vb {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::{eig_sym, f_p_approx};

    fn spec_of(diag: &[f64]) -> Spectrum {
        eig_sym(&SymMatrix::from_diag(diag)).unwrap()
    }

    fn lcg_sym(n: usize, seed: u64, scale: f64) -> SymMatrix {
        let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
        SymMatrix::from_upper_fn(n, |_, _| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            scale * (((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0)
        })
    }

    #[test]
    fn psd_contour_examples() {
        let g = build_contour_psd(&spec_of(&[3.0, 1.0]), 1).unwrap();
        assert_eq!((g.x0, g.x1, g.t), (2.0, 6.0, 6.0));
        let g = build_contour_psd(&spec_of(&[3.0, 2.0, 1.0]), 2).unwrap();
        assert_eq!((g.x0, g.x1, g.t), (1.5, 6.0, 6.0));
        assert!(matches!(
            build_contour_psd(&spec_of(&[3.0, 1.0, 1.0]), 2),
            Err(ContourError::EigenvalueOnContour { .. })
        ));
    }

    #[test]
    fn contour_closes() {
        let g = RectContour::new(1.5, 6.0, 6.0).unwrap();
        let segs = g.segments();
        for k in 0..4 {
            assert_eq!(segs[k].end, segs[(k + 1) % 4].start);
        }
        assert!(segs[0].end.im > segs[0].start.im);
        assert!(segs[1].end.re > segs[1].start.re);
    }

    #[test]
    fn sym_contour_examples() {
        let c = build_contours_sym(&spec_of(&[3.0, 2.0, 1.0]), 2).unwrap();
        assert!(c.bottom.is_none());
        let c = build_contours_sym(&spec_of(&[3.0, 1.0, -2.0]), 2).unwrap();
        assert_eq!(c.top.unwrap().x0, 2.0);
        assert_eq!(c.bottom.unwrap().x0, -0.5);
        assert_eq!(c.bottom.unwrap().x1, -6.0);
        let c = build_contours_sym(&spec_of(&[1.0, -3.0, -2.0]), 2).unwrap();
        assert!(c.top.is_none());
        assert!(c.bottom.is_some());
    }

    #[test]
    fn sym_contour_zero_gap_error() {
        // a zero δ_k would put a wall on λ_k; selection rejects it first
        let s = spec_of(&[3.0, 3.0, -2.0]);
        assert!(matches!(build_contours_sym(&s, 1), Err(ContourError::Linalg(LinalgError::SplitsMultiplet { .. }))));
        let wall = RectContour::new(2.0, 6.0, 6.0).unwrap();
        assert!(matches!(wall.check_walls(&spec_of(&[3.0, 2.0])), Err(ContourError::EigenvalueOnContour { .. })));
    }

    #[test]
    fn resolvent_examples() {
        let s = spec_of(&[2.0]);
        let r = resolvent(&s, Complex64::new(3.0, 0.0)).unwrap();
        assert!((r.get(0, 0) - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        let r = resolvent(&s, Complex64::new(2.0, 1.0)).unwrap();
        assert!((r.spectral_norm() - 1.0).abs() < 1e-14);
        assert!(matches!(resolvent(&s, Complex64::new(2.0, 0.0)), Err(ContourError::NearPole { .. })));
    }

    fn inverse_residual(a: &SymMatrix, s: &Spectrum, z: Complex64) -> f64 {
        let n = a.n();
        let r = resolvent(s, z).unwrap();
        let mut m = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = z * r.get(i, j);
                for k in 0..n {
                    acc -= a.get(i, k) * r.get(k, j);
                }
                if i == j {
                    acc -= 1.0;
                }
                m[i * n + j] = acc;
            }
        }
        complex_spectral_norm(&m, n)
    }

    #[test]
    fn resolvent_inverse_residual_random() {
        let a = lcg_sym(6, 4, 1.0);
        let s = eig_sym(&a).unwrap();
        for z in [Complex64::new(0.3, 0.7), Complex64::new(-2.0, 0.1), Complex64::new(5.0, -3.0)] {
            assert!(inverse_residual(&a, &s, z) <= 1e-8);
        }
    }

    #[test]
    fn resolvent_residual_at_every_node() {
        let a = &SymMatrix::from_diag(&[5.0, 3.0, 1.0, 0.5]) + &lcg_sym(4, 8, 0.05);
        let s = eig_sym(&a).unwrap();
        let g = build_contour_psd(&s, 2).unwrap();
        for z in quadrature_nodes(&g, s.values(), 16 << 6) {
            assert!(inverse_residual(&a, &s, z) <= 1e-8);
        }
    }

    #[test]
    fn complex_norm_matches_real_case() {
        let a = lcg_sym(5, 2, 1.0);
        let data: Vec<Complex64> = a.as_slice().iter().map(|&v| Complex64::new(v, 0.0)).collect();
        assert!((complex_spectral_norm(&data, 5) - spectral_norm(&a)).abs() < 1e-12);
        let rot: Vec<Complex64> = data.iter().map(|v| v * Complex64::new(0.6, 0.8)).collect();
        assert!((complex_spectral_norm(&rot, 5) - spectral_norm(&a)).abs() < 1e-12);
    }

    #[test]
    fn complex_norm_of_non_hermitian() {
        // [[0, 2i], [0, 0]] has singular values 2 and 0
        let z = Complex64::new(0.0, 0.0);
        let m = [z, Complex64::new(0.0, 2.0), z, z];
        assert!((complex_spectral_norm(&m, 2) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn projection_examples() {
        let q = QuadSpec::default();
        let s = spec_of(&[3.0, 1.0]);
        let g = build_contour_psd(&s, 1).unwrap();
        let m = contour_project(&s, &EntireFn::Power(1), &g, &q).unwrap();
        assert!(m.max_abs_diff(&SymMatrix::from_diag(&[3.0, 0.0])) <= 1e-6);

        let a = &SymMatrix::from_diag(&[4.0, 3.0, 1.0, 0.5]) + &lcg_sym(4, 1, 0.1);
        let s = eig_sym(&a).unwrap();
        let g = build_contour_psd(&s, 2).unwrap();
        let proj = contour_project(&s, &EntireFn::Power(0), &g, &q).unwrap();
        let sq = SymMatrix::from_upper_fn(4, |i, j| dot(proj.row(i), proj.row(j)));
        assert!(sq.max_abs_diff(&proj) <= 1e-6);

        let s = spec_of(&[1.0, 0.0]);
        let g = build_contour_psd(&s, 1).unwrap();
        let m = contour_project(&s, &EntireFn::Exp, &g, &q).unwrap();
        assert!(m.max_abs_diff(&SymMatrix::from_diag(&[std::f64::consts::E, 0.0])) <= 1e-6);
    }

    #[test]
    fn projection_matches_f_p_for_registry() {
        let q = QuadSpec::default();
        let a = &SymMatrix::from_diag(&[4.0, 3.5, 2.0, 1.0, 0.2]) + &lcg_sym(5, 9, 0.05);
        let s = eig_sym(&a).unwrap();
        let g = build_contour_psd(&s, 3).unwrap();
        for f in EntireFn::registry().into_iter().chain([EntireFn::Cos, EntireFn::Sin, EntireFn::Polynomial(vec![1.0, -2.0, 0.5])]) {
            let exact = f_p_approx(&s, &f, 3).unwrap();
            let got = contour_project(&s, &f, &g, &q).unwrap();
            assert!(spectral_norm(&(&got - &exact)) <= 1e-5 * (1.0 + spectral_norm(&exact)), "{f}");
        }
    }

    #[test]
    fn mirrored_contour_projects_bottom_cluster() {
        let q = QuadSpec::default();
        let s = spec_of(&[3.0, 1.0, -2.0]);
        let c = build_contours_sym(&s, 2).unwrap();
        let bottom = contour_project(&s, &EntireFn::Power(1), &c.bottom.unwrap(), &q).unwrap();
        assert!(bottom.max_abs_diff(&SymMatrix::from_diag(&[0.0, 0.0, -2.0])) <= 1e-6);
        let top = contour_project(&s, &EntireFn::Power(1), &c.top.unwrap(), &q).unwrap();
        assert!(top.max_abs_diff(&SymMatrix::from_diag(&[3.0, 0.0, 0.0])) <= 1e-6);
    }

    #[test]
    fn zero_noise_integrals_vanish() {
        let q = QuadSpec::default();
        let s = spec_of(&[3.0, 2.0, 1.0]);
        let g = build_contour_psd(&s, 1).unwrap();
        let z = SymMatrix::zeros(3);
        assert_eq!(F1_integral(&s, &z, &EntireFn::Exp, &g, &q).unwrap(), 0.0);
        assert_eq!(F_integral(&s, &s, &EntireFn::Exp, &g, &q).unwrap(), 0.0);
        let seg = segment_integrals(&s, &z, &g, &q).unwrap();
        assert_eq!(seg.m, [0.0; 4]);
    }

    #[test]
    fn f1_is_linear_in_noise() {
        let q = QuadSpec::default();
        let s = spec_of(&[3.0, 2.0, 1.0]);
        let g = build_contour_psd(&s, 1).unwrap();
        let e = lcg_sym(3, 5, 0.05);
        let one = F1_integral(&s, &e, &EntireFn::Power(2), &g, &q).unwrap();
        let two = F1_integral(&s, &e.scaled(2.0), &EntireFn::Power(2), &g, &q).unwrap();
        assert!((two - 2.0 * one).abs() <= 1e-12 * two);
    }

    #[test]
    fn f_is_symmetric_and_bootstraps() {
        let q = QuadSpec::default();
        let a = SymMatrix::from_diag(&[4.0, 3.0, 1.0, 0.5]);
        let e = lcg_sym(4, 12, 0.1);
        let at = &a + &e;
        let (s, st) = (eig_sym(&a).unwrap(), eig_sym(&at).unwrap());
        assert!(4.0 * spectral_norm(&e) <= s.eigengap(2));
        let g = build_contour_psd(&s, 2).unwrap();
        let fs = EntireFn::registry();
        let f_fwd = f_integrals(&s, &st, &fs, &g, &q).unwrap();
        let f_bwd = f_integrals(&st, &s, &fs, &g, &q).unwrap();
        let f1 = f1_integrals(&s, &e, &fs, &g, &q).unwrap();
        for i in 0..fs.len() {
            assert!((f_fwd[i] - f_bwd[i]).abs() <= 1e-5 * f_fwd[i]);
            assert!(f_fwd[i] <= 2.0 * f1[i]);
            let actual = spectral_norm(&(&f_p_approx(&st, &fs[i], 2).unwrap() - &f_p_approx(&s, &fs[i], 2).unwrap()));
            assert!(actual <= f_fwd[i] * (1.0 + 1e-5), "{}", fs[i]);
        }
    }

    #[test]
    fn segments_sum_to_f1_of_z() {
        let q = QuadSpec::default();
        let s = spec_of(&[3.0, 2.0, 1.0]);
        let g = build_contour_psd(&s, 2).unwrap();
        let e = lcg_sym(3, 6, 0.05);
        let seg = segment_integrals(&s, &e, &g, &q).unwrap();
        let f1 = F1_integral(&s, &e, &EntireFn::Power(1), &g, &q).unwrap();
        let total: f64 = seg.m.iter().sum();
        assert!((total - 2.0 * PI * f1).abs() <= 1e-6 * total);
    }

    #[test]
    fn segment_lemmas_on_psd_instance() {
        let q = QuadSpec::default();
        let s = spec_of(&[5.0, 4.0, 2.0, 1.0]);
        let g = build_contour_psd(&s, 2).unwrap();
        let e = lcg_sym(4, 3, 0.02);
        let seg = segment_integrals(&s, &e, &g, &q).unwrap();
        let b = segment_lemma_bounds(&s, &g, spectral_norm(&e), 4, 0.02);
        assert!(seg.n[0] <= b.n1);
        assert!(seg.n[1] <= b.n2_n4 && seg.n[3] <= b.n2_n4);
        assert!(seg.n[2] <= b.n3);
        assert!(seg.m[0] <= b.m1);
    }

    #[test]
    fn arctan_examples() {
        let q = QuadSpec::with_tol(1e-10);
        let (v, b) = arctan_integral_check(1.0, 1.0, &q).unwrap();
        assert!((v - PI / 2.0).abs() < 1e-9);
        assert_eq!(b, PI);
        let (v, b) = arctan_integral_check(0.25, 0.25, &q).unwrap();
        assert!((v - 2.0 * 1f64.atan() / 0.25).abs() < 1e-8);
        assert!(v <= b);
        let (v, b) = arctan_integral_check(1.0, 1e6, &QuadSpec::default()).unwrap();
        assert!(v <= b && v > 0.999 * b);
        assert!(arctan_integral_check(2.0, 1.0, &q).is_err());
    }

    #[test]
    fn max_modulus_examples() {
        let g = RectContour::new(2.0, 6.0, 6.0).unwrap();
        assert!((max_modulus_on_rect(&EntireFn::Power(1), &g) - 6.0 * SQRT_2).abs() < 1e-12);
        assert_eq!(max_modulus_on_rect(&EntireFn::Power(0), &g), 1.0);
        assert!((max_modulus_on_rect(&EntireFn::Exp, &g) - 6f64.exp()).abs() < 1e-9);
    }

    #[test]
    fn quad_spec_validation() {
        let bad = QuadSpec { points_per_segment: 24, ..QuadSpec::default() };
        assert!(arctan_integral_check(1.0, 2.0, &bad).is_err());
    }

    #[test]
    fn cap_reports_last_two_estimates() {
        let q = QuadSpec { max_doublings: 1, rel_tol: 1e-15, ..QuadSpec::default() };
        match arctan_integral_check(1e-3, 1e3, &q) {
            Err(ContourError::NoConvergence { previous, last, .. }) => assert!(previous != last),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
