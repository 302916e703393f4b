//! Dense and structured linear-algebra helpers on top of `faer`.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{Col, Mat, Side};
use rand::Rng as _;

use crate::{c64, Error, Result, Rng};

pub type CMat = Mat<c64>;

pub const ZERO: c64 = c64 { re: 0.0, im: 0.0 };
pub const ONE: c64 = c64 { re: 1.0, im: 0.0 };
pub const I: c64 = c64 { re: 0.0, im: 1.0 };

pub fn col(v: &[c64]) -> Col<c64> {
    Col::from_fn(v.len(), |i| v[i])
}

pub fn to_vec(c: &Col<c64>) -> Vec<c64> {
    c.iter().copied().collect()
}

pub fn mat_vec(m: &CMat, v: &[c64]) -> Vec<c64> {
    to_vec(&(m * col(v)))
}

pub fn dot(a: &[c64], b: &[c64]) -> c64 {
    a.iter().zip(b).map(|(x, y)| x * y.conj()).sum()
}

pub fn norm(a: &[c64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn sub(a: &[c64], b: &[c64]) -> Vec<c64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[c64], b: &[c64]) -> Vec<c64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(a: &[c64], s: c64) -> Vec<c64> {
    a.iter().map(|x| x * s).collect()
}

/// Complex vector with independent standard normal real and imaginary parts.
pub fn random_vector(rng: &mut Rng, n: usize) -> Vec<c64> {
    (0..n).map(|_| c64::new(gaussian(rng), gaussian(rng))).collect()
}

pub fn gaussian(rng: &mut Rng) -> f64 {
    // Box-Muller; one draw per call keeps the stream layout simple
    let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let v: f64 = rng.gen();
    (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
}

/// Eigenvalues and right eigenvectors of a general complex matrix.
pub fn eigen(m: &CMat) -> Result<(Vec<c64>, CMat)> {
    let e = m
        .eigen()
        .map_err(|e| Error::SolverSingular(format!("eigendecomposition failed: {e:?}")))?;
    let vals = e.S().column_vector().iter().copied().collect();
    Ok((vals, e.U().to_owned()))
}

pub fn inverse(m: &CMat) -> Result<CMat> {
    let inv = m.partial_piv_lu().inverse();
    if inv.norm_l2().is_finite() {
        Ok(inv)
    } else {
        Err(Error::SolverSingular("matrix is numerically singular".into()))
    }
}

pub fn solve(m: &CMat, rhs: &[c64]) -> Result<Vec<c64>> {
    let x = to_vec(&m.partial_piv_lu().solve(col(rhs)));
    if x.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
        Ok(x)
    } else {
        Err(Error::SolverSingular("linear system is numerically singular".into()))
    }
}

/// M^{-1} R for a block of right-hand sides.
pub fn solve_many(m: &CMat, rhs: &CMat) -> Result<CMat> {
    let x = m.partial_piv_lu().solve(rhs);
    if x.norm_l2().is_finite() {
        Ok(x)
    } else {
        Err(Error::SolverSingular("linear system is numerically singular".into()))
    }
}

/// Full SVD: left singular vectors and descending singular values.
pub fn svd(m: &CMat) -> Result<(CMat, Vec<f64>)> {
    let s = m.svd().map_err(|e| Error::SolverSingular(format!("svd failed: {e:?}")))?;
    Ok((s.U().to_owned(), s.S().column_vector().iter().map(|v| v.re).collect()))
}

/// (M + M^*)/2.
pub fn hermitian_part(m: &CMat) -> CMat {
    let adj = m.adjoint().to_owned();
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| (m[(i, j)] + adj[(i, j)]) * 0.5)
}

/// Ascending eigenvalues of a Hermitian matrix.
pub fn hermitian_eigenvalues(m: &CMat) -> Result<Vec<f64>> {
    m.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::SolverSingular(format!("hermitian eigensolver failed: {e:?}")))
}

/// Ascending eigenpairs of a Hermitian matrix.
pub fn hermitian_eigen(m: &CMat) -> Result<(Vec<f64>, CMat)> {
    let e = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::SolverSingular(format!("hermitian eigensolver failed: {e:?}")))?;
    let vals = e.S().column_vector().iter().map(|v| v.re).collect();
    Ok((vals, e.U().to_owned()))
}

pub fn singular_values(m: &CMat) -> Result<Vec<f64>> {
    m.singular_values()
        .map_err(|e| Error::SolverSingular(format!("svd failed: {e:?}")))
}

/// Spectral-norm estimate by power iteration on A^*A, given matvecs with
/// A and A^*.
pub fn power_norm(
    dim: usize,
    apply: impl Fn(&[c64]) -> Vec<c64>,
    apply_adj: impl Fn(&[c64]) -> Vec<c64>,
    iters: usize,
    seed: u64,
) -> f64 {
    let mut rng = crate::rng(seed);
    let mut x = random_vector(&mut rng, dim);
    let mut est = 0.0;
    for _ in 0..iters {
        let nx = norm(&x);
        if nx == 0.0 {
            return 0.0;
        }
        x = scale(&x, c64::new(1.0 / nx, 0.0));
        let y = apply(&x);
        let ny = norm(&y);
        if (ny - est).abs() <= 1e-10 * ny {
            return ny;
        }
        est = ny;
        x = apply_adj(&y);
    }
    est
}

/// Extreme eigenvalues of a Hermitian operator by Lanczos with full
/// reorthogonalization. Stops when both extreme Ritz values move by less
/// than `tol` (relative) over three consecutive steps.
pub fn lanczos_extremes(dim: usize, apply: impl Fn(&[c64]) -> Vec<c64>, max_iter: usize, tol: f64, seed: u64) -> Result<(f64, f64)> {
    let mut rng = crate::rng(seed);
    let mut q = random_vector(&mut rng, dim);
    let nq = norm(&q);
    q = scale(&q, c64::new(1.0 / nq, 0.0));
    let mut basis: Vec<Vec<c64>> = vec![q];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut history: Vec<(f64, f64)> = Vec::new();
    let steps = max_iter.min(dim);
    for k in 0..steps {
        let mut r = apply(&basis[k]);
        let a = dot(&r, &basis[k]).re;
        alpha.push(a);
        // two passes of Gram-Schmidt against the whole basis
        for _ in 0..2 {
            for b in &basis {
                let p = dot(&r, b);
                for (ri, bi) in r.iter_mut().zip(b) {
                    *ri -= p * bi;
                }
            }
        }
        let kk = alpha.len();
        let tri = Mat::from_fn(kk, kk, |i, j| {
            if i == j {
                c64::new(alpha[i], 0.0)
            } else if i == j + 1 {
                c64::new(beta[j], 0.0)
            } else if j == i + 1 {
                c64::new(beta[i], 0.0)
            } else {
                ZERO
            }
        });
        let vals = hermitian_eigenvalues(&tri)?;
        history.push((vals[0], vals[kk - 1]));
        let h = history.len();
        if h >= 4 {
            let (lo, hi) = history[h - 1];
            let settled = (h - 4..h - 1).all(|j| {
                (history[j].0 - lo).abs() <= tol * hi.abs() && (history[j].1 - hi).abs() <= tol * hi.abs()
            });
            if settled {
                return Ok((lo, hi));
            }
        }
        let b = norm(&r);
        if b <= 1e-14 * a.abs().max(1e-300) || k + 1 == steps {
            break;
        }
        beta.push(b);
        basis.push(scale(&r, c64::new(1.0 / b, 0.0)));
    }
    Ok(*history.last().expect("at least one Lanczos step"))
}

pub fn mat_norm2(m: &CMat) -> f64 {
    let adj = m.adjoint().to_owned();
    power_norm(m.ncols(), |v| mat_vec(m, v), |v| mat_vec(&adj, v), 200, 0x6e6f726d)
}

/// Solves the periodic tridiagonal system
/// `lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1] = rhs[i]` (indices mod n)
/// by the Sherman-Morrison correction of the Thomas algorithm.
pub fn cyclic_tridiagonal_solve(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[c64]) -> Vec<c64> {
    let n = diag.len();
    assert!(n >= 3);
    let alpha = upper[n - 1]; // couples row n-1 to x[0]
    let beta = lower[0]; // couples row 0 to x[n-1]
    let gamma = -diag[0];
    let mut d = diag.to_vec();
    d[0] -= gamma;
    d[n - 1] -= alpha * beta / gamma;
    let x = thomas(lower, &d, upper, rhs);
    let mut u = vec![ZERO; n];
    u[0] = c64::new(gamma, 0.0);
    u[n - 1] = c64::new(alpha, 0.0);
    let z = thomas(lower, &d, upper, &u);
    let vx = x[0] + x[n - 1] * (beta / gamma);
    let vz = z[0] + z[n - 1] * (beta / gamma);
    let f = vx / (ONE + vz);
    x.iter().zip(&z).map(|(a, b)| a - f * b).collect()
}

fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[c64]) -> Vec<c64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![ZERO; n];
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - lower[i] * c[i - 1];
        c[i] = upper[i] / m;
        d[i] = (rhs[i] - d[i - 1] * lower[i]) / m;
    }
    let mut x = vec![ZERO; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - x[i + 1] * c[i];
    }
    x
}

/// Orthonormal basis of the complement of one unit vector `n̂` in ℝ^N, given
/// by the Householder reflection sending `n̂` to a multiple of `e_0`; the
/// basis is the reflection's columns 1..N.
#[derive(Clone, Debug)]
pub struct Complement {
    v: Vec<f64>,
    vv: f64,
}

impl Complement {
    pub fn new(nhat: &[f64]) -> Self {
        let s = nhat.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut v: Vec<f64> = nhat.iter().map(|x| x / s).collect();
        v[0] += if v[0] >= 0.0 { 1.0 } else { -1.0 };
        let vv = v.iter().map(|x| x * x).sum();
        Complement { v, vv }
    }

    pub fn dim(&self) -> usize {
        self.v.len()
    }

    fn reflect(&self, x: &mut [c64]) {
        let p: c64 = self.v.iter().zip(x.iter()).map(|(a, b)| b * *a).sum();
        let f = p * (2.0 / self.vv);
        for (xi, vi) in x.iter_mut().zip(&self.v) {
            *xi -= f * *vi;
        }
    }

    /// U a for a ∈ C^{N-1}.
    pub fn lift(&self, a: &[c64]) -> Vec<c64> {
        let mut x = Vec::with_capacity(self.dim());
        x.push(ZERO);
        x.extend_from_slice(a);
        self.reflect(&mut x);
        x
    }

    /// U^* y for y ∈ C^N.
    pub fn restrict(&self, y: &[c64]) -> Vec<c64> {
        let mut x = y.to_vec();
        self.reflect(&mut x);
        x.remove(0);
        x
    }
}

/// Unitary Hessenberg reduction M = Z H Z^*.
#[derive(Clone, Debug)]
pub struct Hessenberg {
    pub h: CMat,
    pub z: CMat,
}

impl Hessenberg {
    pub fn new(m: &CMat) -> Self {
        use faer::dyn_stack::{MemBuffer, MemStack};
        use faer::linalg::{evd::hessenberg as hs, householder};
        let n = m.nrows();
        let mut h = m.clone();
        let mut z = Mat::<c64>::identity(n, n);
        if n > 2 {
            let bs = faer::linalg::qr::no_pivoting::factor::recommended_block_size::<c64>(n - 1, n - 1);
            let mut factor = Mat::<c64>::zeros(bs, n - 1);
            let req = hs::hessenberg_in_place_scratch::<c64>(n, bs, faer::Par::Seq, Default::default())
                .or(householder::apply_block_householder_sequence_on_the_right_in_place_scratch::<c64>(n - 1, bs, n - 1));
            let mut buf = MemBuffer::new(req);
            let stack = MemStack::new(&mut buf);
            hs::hessenberg_in_place(h.as_mut(), factor.as_mut(), faer::Par::Seq, stack, Default::default());
            householder::apply_block_householder_sequence_on_the_right_in_place_with_conj(
                h.as_ref().submatrix(1, 0, n - 1, n - 1),
                factor.as_ref(),
                faer::Conj::No,
                z.as_mut().submatrix_mut(1, 1, n - 1, n - 1),
                faer::Par::Seq,
                stack,
            );
            for j in 0..n {
                for i in j + 2..n {
                    h[(i, j)] = ZERO;
                }
            }
        }
        Hessenberg { h, z }
    }

    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    /// LU factors of αI + βH.
    pub fn shifted(&self, alpha: c64, beta: c64) -> Result<ShiftedHessenbergLu> {
        ShiftedHessenbergLu::new(&self.h, alpha, beta)
    }

    /// (αI + βM)^{-1} x.
    pub fn solve_shifted(&self, alpha: c64, beta: c64, x: &[c64]) -> Result<Vec<c64>> {
        let lu = self.shifted(alpha, beta)?;
        let y = mat_vec_adjoint(&self.z, x);
        Ok(mat_vec(&self.z, &lu.solve(&y)))
    }

    /// (αI + βM)^{-*} x.
    pub fn solve_shifted_adjoint(&self, alpha: c64, beta: c64, x: &[c64]) -> Result<Vec<c64>> {
        let lu = self.shifted(alpha, beta)?;
        let y = mat_vec_adjoint(&self.z, x);
        Ok(mat_vec(&self.z, &lu.solve_adjoint(&y)))
    }
}

/// Z^* x.
pub fn mat_vec_adjoint(m: &CMat, v: &[c64]) -> Vec<c64> {
    to_vec(&(m.adjoint() * col(v)))
}

/// Gaussian elimination with partial pivoting of an upper Hessenberg
/// matrix: one pivot choice and one multiplier per column. U is stored by
/// rows so that every elimination and substitution sweep is contiguous.
#[derive(Clone, Debug)]
pub struct ShiftedHessenbergLu {
    n: usize,
    u: Vec<c64>,
    swap: Vec<bool>,
    mult: Vec<c64>,
}

impl ShiftedHessenbergLu {
    fn new(h: &CMat, alpha: c64, beta: c64) -> Result<Self> {
        let n = h.nrows();
        let mut u = vec![ZERO; n * n];
        for j in 0..n {
            let col = h.col(j);
            for i in 0..(j + 2).min(n) {
                u[i * n + j] = col[i] * beta;
            }
            u[j * n + j] += alpha;
        }
        let mut swap = vec![false; n.saturating_sub(1)];
        let mut mult = vec![ZERO; n.saturating_sub(1)];
        let singular = || Error::SolverSingular("shifted Hessenberg matrix is singular".into());
        for k in 0..n.saturating_sub(1) {
            let (top, rest) = u.split_at_mut((k + 1) * n);
            let rk = &mut top[k * n + k..];
            let rk1 = &mut rest[k..n];
            if rk1[0].norm() > rk[0].norm() {
                swap[k] = true;
                rk.swap_with_slice(rk1);
            }
            if rk[0] == ZERO {
                return Err(singular());
            }
            let l = rk1[0] / rk[0];
            mult[k] = l;
            rk1[0] = ZERO;
            for (x, y) in rk1[1..].iter_mut().zip(&rk[1..]) {
                *x -= l * y;
            }
        }
        if n > 0 && u[n * n - 1] == ZERO {
            return Err(singular());
        }
        Ok(ShiftedHessenbergLu { n, u, swap, mult })
    }

    fn upper(&self) -> faer::MatRef<'_, c64> {
        faer::MatRef::from_row_major_slice(&self.u, self.n, self.n)
    }

    pub fn solve(&self, b: &[c64]) -> Vec<c64> {
        let mut x = col(b).as_mat().to_owned();
        self.solve_in_place(&mut x);
        x.col(0).iter().copied().collect()
    }

    pub fn solve_adjoint(&self, b: &[c64]) -> Vec<c64> {
        let mut x = col(b).as_mat().to_owned();
        self.solve_adjoint_in_place(&mut x);
        x.col(0).iter().copied().collect()
    }

    /// Overwrites every column of `x` with the solution.
    pub fn solve_in_place(&self, x: &mut CMat) {
        for c in 0..x.ncols() {
            let mut x = x.col_mut(c);
            for k in 0..self.n.saturating_sub(1) {
                if self.swap[k] {
                    let t = x[k];
                    x[k] = x[k + 1];
                    x[k + 1] = t;
                }
                let t = x[k];
                x[k + 1] -= self.mult[k] * t;
            }
        }
        faer::linalg::triangular_solve::solve_upper_triangular_in_place(self.upper(), x.as_mut(), faer::Par::Seq);
    }

    /// Adjoint solves for every column of `x`.
    pub fn solve_adjoint_in_place(&self, x: &mut CMat) {
        faer::linalg::triangular_solve::solve_lower_triangular_in_place(self.upper().adjoint(), x.as_mut(), faer::Par::Seq);
        for c in 0..x.ncols() {
            let mut y = x.col_mut(c);
            for k in (0..self.n.saturating_sub(1)).rev() {
                let t = y[k + 1];
                y[k] -= self.mult[k].conj() * t;
                if self.swap[k] {
                    let t = y[k];
                    y[k] = y[k + 1];
                    y[k + 1] = t;
                }
            }
        }
    }
}

/// Newton iteration S ← (S + S^{-1})/2 with determinant scaling for the
/// matrix sign function of a matrix without imaginary-axis eigenvalues.
pub fn matrix_sign(m: &CMat) -> Result<CMat> {
    let n = m.nrows();
    let mut s = m.clone();
    for _ in 0..100 {
        let inv = inverse(&s)?;
        // scaling by sqrt(‖S^{-1}‖/‖S‖) accelerates the early iterations
        let g = (inv.norm_l2() / s.norm_l2()).sqrt();
        let next = Mat::from_fn(n, n, |i, j| (s[(i, j)] * g + inv[(i, j)] / g) * 0.5);
        let diff = (&next - &s).norm_l2();
        let size = next.norm_l2();
        s = next;
        if diff <= 1e-13 * size {
            return Ok(s);
        }
    }
    Err(Error::SolverSingular("sign iteration did not converge".into()))
}

/// exp(M) by scaling and squaring with a degree-18 Taylor polynomial.
pub fn expm(m: &CMat) -> CMat {
    let n = m.nrows();
    let nrm = m.norm_l2();
    let k = if nrm > 0.5 { (nrm / 0.5).log2().ceil() as i32 } else { 0 };
    let a = Mat::from_fn(n, n, |i, j| m[(i, j)] * (-(k as f64)).exp2());
    let mut term = Mat::<c64>::identity(n, n);
    let mut sum = Mat::<c64>::identity(n, n);
    for p in 1..=18 {
        term = &term * &a;
        term = Mat::from_fn(n, n, |i, j| term[(i, j)] / p as f64);
        sum = &sum + &term;
    }
    for _ in 0..k {
        sum = &sum * &sum;
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cyclic_solver_matches_dense() {
        let n = 9;
        let lower: Vec<f64> = (0..n).map(|i| -0.3 - 0.01 * i as f64).collect();
        let upper: Vec<f64> = (0..n).map(|i| -0.4 + 0.02 * i as f64).collect();
        let diag: Vec<f64> = (0..n).map(|i| 2.0 + 0.1 * i as f64).collect();
        let rhs: Vec<c64> = (0..n).map(|i| c64::new(i as f64, 1.0 - i as f64)).collect();
        let x = cyclic_tridiagonal_solve(&lower, &diag, &upper, &rhs);
        for i in 0..n {
            let r = x[(i + n - 1) % n] * lower[i] + x[i] * diag[i] + x[(i + 1) % n] * upper[i];
            assert!((r - rhs[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn complement_is_orthonormal_and_orthogonal() {
        let nhat = [0.5, -1.0, 2.0, 0.25];
        let c = Complement::new(&nhat);
        for k in 0..3 {
            let mut a = vec![ZERO; 3];
            a[k] = ONE;
            let x = c.lift(&a);
            let p: f64 = x.iter().zip(&nhat).map(|(u, v)| u.re * v).sum();
            assert!(p.abs() < 1e-14);
            assert!((norm(&x) - 1.0).abs() < 1e-14);
            assert!(norm(&sub(&c.restrict(&x), &a)) < 1e-14);
        }
    }

    #[test]
    fn sign_and_exponential_of_diagonalizable() {
        let d = Mat::from_fn(3, 3, |i, j| if i == j { c64::new([2.0, -1.0, 0.5][i], 0.2) } else { ZERO });
        let p = Mat::from_fn(3, 3, |i, j| c64::new(1.0 + (i * j) as f64 * 0.3, (i + j) as f64 * 0.1) + if i == j { ONE } else { ZERO });
        let pinv = inverse(&p).unwrap();
        let m = &(&p * &d) * &pinv;
        let s = matrix_sign(&m).unwrap();
        let sd = Mat::from_fn(3, 3, |i, j| if i == j { c64::new([1.0, -1.0, 1.0][i], 0.0) } else { ZERO });
        assert!((&s - &(&(&p * &sd) * &pinv)).norm_l2() < 1e-10);
        let e = expm(&m);
        let ed = Mat::from_fn(3, 3, |i, j| if i == j { d[(i, i)].exp() } else { ZERO });
        assert!((&e - &(&(&p * &ed) * &pinv)).norm_l2() < 1e-10 * e.norm_l2());
    }

    #[test]
    fn hessenberg_solves_match_dense() {
        let mut rng = crate::rng(5);
        let n = 40;
        let m = Mat::from_fn(n, n, |_, _| c64::new(gaussian(&mut rng), gaussian(&mut rng)));
        let hs = Hessenberg::new(&m);
        let rec = &(&hs.z * &hs.h) * hs.z.adjoint();
        assert!((&rec - &m).norm_l2() < 1e-12 * m.norm_l2());
        let (alpha, beta) = (c64::new(1.0, 0.5), c64::new(0.0, 0.3));
        let a = Mat::from_fn(n, n, |i, j| m[(i, j)] * beta + if i == j { alpha } else { ZERO });
        let b = random_vector(&mut rng, n);
        let x = hs.solve_shifted(alpha, beta, &b).unwrap();
        assert!(norm(&sub(&mat_vec(&a, &x), &b)) < 1e-11 * norm(&b));
        let y = hs.solve_shifted_adjoint(alpha, beta, &b).unwrap();
        assert!(norm(&sub(&mat_vec_adjoint(&a, &y), &b)) < 1e-11 * norm(&b));
    }

    #[test]
    fn lanczos_finds_extremes() {
        let n = 60;
        let d: Vec<f64> = (0..n).map(|i| 1.0 + i as f64 * 0.1).collect();
        let (lo, hi) = lanczos_extremes(n, |x| x.iter().zip(&d).map(|(v, s)| v * *s).collect(), 60, 1e-12, 3).unwrap();
        assert!((lo - 1.0).abs() < 1e-8 && (hi - 6.9).abs() < 1e-8, "{lo} {hi}");
    }

    #[test]
    fn power_norm_of_diagonal() {
        let m = Mat::from_fn(4, 4, |i, j| if i == j { c64::new(i as f64 + 1.0, 0.0) } else { ZERO });
        assert!((mat_norm2(&m) - 4.0).abs() < 1e-8);
    }
}
