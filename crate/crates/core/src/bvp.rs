//! Boundary value problems for div A∇u = 0 in the upper half-plane over the
//! weighted torus, solved through the first-order system ∂_t f + DB f = 0
//! for the conormal gradient f. A finite-difference solve of the
//! second-order equation on a truncated strip serves as reference.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use serde::{Deserialize, Serialize};

use crate::coefficients::{mat2_norm, CoefficientField, CoefficientSpec, Mat2};
use crate::dyadic::{modified_carleson_norm, ntmax, ModifiedCarleson, TGrid, UpperHalfField, WHITNEY_C0, WHITNEY_C1};
use crate::grid::WeightedGrid;
use crate::linalg::{self, CMat, ONE, ZERO};
use crate::operators::{accretivity, smooth_probe, Backend, Composition, DiscreteD, Func, SpectralCalculus, COND_LIMIT};
use crate::weights::WeightModel;
use crate::{c64, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Dirichlet,
    Regularity,
    Neumann,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 3] = [ProblemKind::Dirichlet, ProblemKind::Regularity, ProblemKind::Neumann];
}

/// w^{-1}A together with B = hat(w^{-1}A).
#[derive(Clone, Debug)]
pub struct CoefficientPair {
    pub a_over_w: CoefficientField,
    pub b: CoefficientField,
}

impl CoefficientPair {
    pub fn from_a_over_w(a_over_w: CoefficientField) -> Result<Self> {
        let b = a_over_w.hat()?;
        Ok(CoefficientPair { a_over_w, b })
    }

    pub fn from_b(b: CoefficientField) -> Result<Self> {
        let a_over_w = b.hat()?;
        Ok(CoefficientPair { a_over_w, b })
    }

    /// The pair belonging to A^*.
    pub fn adjoint(&self) -> Result<Self> {
        Self::from_a_over_w(self.a_over_w.adjoint())
    }

    pub fn n(&self) -> usize {
        self.b.n()
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct HatReport {
    /// max |hat(hat(C)) - C| over the grid.
    pub involution_defect: f64,
    /// Accretivity constants of C and hat(C) on the closure of R(D).
    pub kappa_in: f64,
    pub kappa_out: f64,
}

/// hat(C) with its involution defect and the accretivity of both fields.
pub fn hat_transform(d: &DiscreteD, c: &CoefficientField, seed: u64) -> Result<(CoefficientField, HatReport)> {
    let hat = c.hat()?;
    let back = hat.hat()?;
    let defect = c
        .matrices()
        .iter()
        .zip(back.matrices())
        .flat_map(|(a, b)| (0..4).map(move |k| (a[k] - b[k]).norm()))
        .fold(0.0, f64::max);
    let kappa_in = accretivity(d, c, seed)?.kappa;
    let kappa_out = accretivity(d, &hat, seed)?.kappa;
    Ok((hat, HatReport { involution_defect: defect, kappa_in, kappa_out }))
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MapConditioning {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub cond: f64,
}

impl MapConditioning {
    fn of(m: &CMat) -> Result<Self> {
        let s = linalg::singular_values(m)?;
        let sigma_max = s.iter().copied().fold(0.0, f64::max);
        let sigma_min = s.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(MapConditioning { sigma_min, sigma_max, cond: sigma_max / sigma_min })
    }

    pub fn invertible(&self, tol: f64) -> bool {
        self.sigma_min > tol * self.sigma_max
    }
}

/// The Hardy space H⁺ = χ⁺(DB₀) of t-independent coefficients and the three
/// trace maps on it, in orthonormal coordinates on both sides.
#[derive(Clone, Debug)]
pub struct TraceMaps {
    pair: CoefficientPair,
    calc: SpectralCalculus,
    hplus: CMat,
    tinv: CMat,
    neumann: CMat,
    regularity: CMat,
    dirichlet: CMat,
}

/// ⊥ datum coordinates: the dw-mean-free part in the orthonormal basis.
fn perp_coords(d: &DiscreteD, phi: &[c64]) -> Vec<c64> {
    let n = d.n();
    let mut x = phi.to_vec();
    x.extend(vec![ZERO; n]);
    let mut a = d.restrict(&d.grid().to_euclid(&x));
    a.truncate(n - 1);
    a
}

/// ∥ datum coordinates: the dx-mean-free part in the orthonormal basis.
fn par_coords(d: &DiscreteD, phi: &[c64]) -> Vec<c64> {
    let n = d.n();
    let mut x = vec![ZERO; n];
    x.extend_from_slice(phi);
    d.restrict(&d.grid().to_euclid(&x)).split_off(n - 1)
}

impl TraceMaps {
    pub fn new(grid: &WeightedGrid, pair: &CoefficientPair) -> Result<Self> {
        let d = DiscreteD::new(grid)?;
        let calc = SpectralCalculus::new(&d, &pair.b, Composition::DB)?;
        Self::from_calculus(calc, pair.clone())
    }

    pub fn from_calculus(calc: SpectralCalculus, pair: CoefficientPair) -> Result<Self> {
        if calc.kind() != Composition::DB {
            return Err(Error::InvalidParameter("trace maps are formed for DB".into()));
        }
        let d = calc.discrete_d().clone();
        let n = d.n();
        let k = n - 1;
        let chi = calc.range_matrix(Func::ChiPlus)?;
        // χ⁺ is a projection of rank N - 1: singular values ≥ 1 on its range
        let (u, s) = linalg::svd(&chi)?;
        if s[k - 1] < 0.5 || s[k] > 0.5 {
            return Err(Error::SolverSingular(format!(
                "Hardy projection has singular values {} and {} around the expected rank {k}",
                s[k - 1], s[k]
            )));
        }
        let hplus = u.subcols(0, k).to_owned();
        let tinv = linalg::solve_many(calc.compressed(), &hplus)?;
        let neumann = hplus.subrows(0, k).to_owned();
        let regularity = hplus.subrows(k, k).to_owned();
        let mut dirichlet = CMat::zeros(k, k);
        for c in 0..k {
            let g: Vec<c64> = tinv.col(c).iter().copied().collect();
            let v = pair.b.apply(&calc.from_range_coords(&g));
            let minus: Vec<c64> = v[..n].iter().map(|x| -x).collect();
            for (i, x) in perp_coords(&d, &minus).into_iter().enumerate() {
                dirichlet[(i, c)] = x;
            }
        }
        Ok(TraceMaps { pair, calc, hplus, tinv, neumann, regularity, dirichlet })
    }

    pub fn calculus(&self) -> &SpectralCalculus {
        &self.calc
    }

    pub fn pair(&self) -> &CoefficientPair {
        &self.pair
    }

    /// Orthonormal basis of H⁺ in range coordinates, one column per vector.
    pub fn hardy_basis(&self) -> &CMat {
        &self.hplus
    }

    /// The trace map of `kind` from H⁺ coordinates to datum coordinates:
    /// f ↦ f_⊥ (Neumann), f ↦ f_∥ (regularity), and for the Dirichlet
    /// problem f ↦ -(B T^{-1} f)_⊥ modulo constants, which is the trace of
    /// the conjugate field v = B(DB)^{-1} f ∈ H⁺_{BD} with Dv = f.
    pub fn map(&self, kind: ProblemKind) -> &CMat {
        match kind {
            ProblemKind::Dirichlet => &self.dirichlet,
            ProblemKind::Regularity => &self.regularity,
            ProblemKind::Neumann => &self.neumann,
        }
    }

    pub fn conditioning(&self, kind: ProblemKind) -> Result<MapConditioning> {
        MapConditioning::of(self.map(kind))
    }
}

/// e^{-t|T|} applied to the columns of `a` (range coordinates) for each t.
pub fn semigroup(calc: &SpectralCalculus, ts: &[f64], a: &CMat) -> Result<Vec<CMat>> {
    let m = a.nrows();
    if calc.backend() == Backend::Eigen {
        let c = calc.eigenvectors_inv() * a;
        let v = calc.eigenvectors();
        let lambda = calc.eigenvalues();
        return Ok(ts
            .iter()
            .map(|&t| {
                let f = Func::ExpAbs(t);
                let scaled = CMat::from_fn(m, a.ncols(), |i, j| c[(i, j)] * f.eval(lambda[i]));
                v * scaled
            })
            .collect());
    }
    // e^{-2t|T|} = (e^{-t|T|})², so each octave reuses the one below
    let mut recent: Vec<(f64, CMat)> = Vec::new();
    let mut out = Vec::with_capacity(ts.len());
    for &t in ts {
        let e = match recent.iter().find(|(s, _)| (2.0 * s - t).abs() <= 1e-12 * t) {
            Some((_, half)) => half * half,
            None => calc.range_matrix(Func::ExpAbs(t))?,
        };
        out.push(&e * a);
        recent.push((t, e));
        if recent.len() > 16 {
            recent.remove(0);
        }
    }
    Ok(out)
}

/// e^{-kτ|T|} a for k = 0..count.
pub fn semigroup_uniform(calc: &SpectralCalculus, tau: f64, count: usize, a: &CMat) -> Result<Vec<CMat>> {
    if calc.backend() == Backend::Eigen {
        let ts: Vec<f64> = (0..count).map(|k| k as f64 * tau).collect();
        return semigroup(calc, &ts, a);
    }
    let step = calc.range_matrix(Func::ExpAbs(tau))?;
    let mut out = Vec::with_capacity(count);
    let mut cur = a.clone();
    for _ in 0..count {
        let next = &step * &cur;
        out.push(std::mem::replace(&mut cur, next));
    }
    Ok(out)
}

fn column(m: &CMat, j: usize) -> Vec<c64> {
    m.col(j).iter().copied().collect()
}

fn weighted_l2(grid: &WeightedGrid, g: &[f64]) -> f64 {
    let h = grid.h();
    g.iter().zip(grid.weights()).map(|(v, w)| v * v * w * h).sum::<f64>().sqrt()
}

/// ‖Ñ_*(f)‖ with the default Whitney parameters.
pub fn x_norm(grid: &WeightedGrid, f: &UpperHalfField) -> f64 {
    weighted_l2(grid, &ntmax(grid, f, 2, WHITNEY_C0, WHITNEY_C1))
}

/// (∫‖f_t‖² t dt)^{1/2}.
pub fn y_norm(grid: &WeightedGrid, f: &UpperHalfField) -> f64 {
    f.y_norm_sq(grid).sqrt()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolutionReport {
    pub kind: ProblemKind,
    #[serde(rename = "N")]
    pub n: usize,
    pub sigma_min: f64,
    pub cond: f64,
    /// ‖Ñ_*(∇_{t,x}u)‖.
    pub ntmax_grad: f64,
    /// (∫‖∇_{t,x}u‖² t dt)^{1/2}.
    pub y_norm: f64,
    pub sup_u: f64,
    pub datum_norm: f64,
    /// Relative mismatch between the boundary trace and the datum.
    pub datum_residual: f64,
    /// max_t ‖D v_t - f_t‖ / max_t ‖f_t‖ for the conjugate field v; its
    /// ∥ part is the dictionary identity ∇_x u = f_∥.
    pub conjugate_defect: f64,
    /// (1/t)∫_t^{2t} ‖f_s - f_0‖² ds over the four lowest octaves.
    pub trace_limits: Vec<f64>,
}

/// Solution of a boundary value problem with t-independent coefficients.
#[derive(Clone, Debug)]
pub struct BvpSolution {
    pub kind: ProblemKind,
    pub datum: Vec<c64>,
    /// Boundary trace h⁺ ∈ H⁺_{DB₀} of the conormal gradient, grid values
    /// and range coordinates.
    pub hplus: Vec<c64>,
    pub hplus_coords: Vec<c64>,
    /// Conormal gradient f_t = e^{-t|DB₀|}h⁺ on the t-mesh.
    pub f: UpperHalfField,
    /// u on the t-mesh; u = c - v_⊥ with the conjugate field v.
    pub u: Vec<Vec<c64>>,
    pub constant: c64,
    /// ∇_{t,x}u at t = 0.
    pub trace: Vec<c64>,
    pub report: SolutionReport,
}

fn check_mean_free(grid: &WeightedGrid, phi: &[c64], weighted: bool) -> Result<()> {
    let h = grid.h();
    let w = grid.weights();
    let mean: c64 = phi.iter().zip(w).map(|(p, wi)| p * if weighted { wi * h } else { h }).sum();
    let scale: f64 = phi.iter().zip(w).map(|(p, wi)| p.norm() * if weighted { wi * h } else { h }).sum();
    if mean.norm() > 1e-10 * scale.max(f64::MIN_POSITIVE) || scale == 0.0 {
        let what = if weighted { "dw" } else { "dx" };
        return Err(Error::IncompatibleDatum(format!("datum must have zero {what}-mean and be nonzero (mean {mean})")));
    }
    Ok(())
}

/// Solves the Dirichlet, regularity or Neumann problem for the datum `phi`
/// (N grid values) by inverting the trace map on H⁺ and evolving by the
/// semigroup. The potential u is c - v_⊥ with the conjugate field
/// v_t = B₀(DB₀)^{-1} f_t, which equals -∫_t^∞ (B₀f_s)_⊥ ds plus c.
pub fn solve_tindep(maps: &TraceMaps, kind: ProblemKind, phi: &[c64], tgrid: &TGrid) -> Result<BvpSolution> {
    let calc = &maps.calc;
    let d = calc.discrete_d();
    let grid = calc.grid();
    let b = &maps.pair.b;
    let n = grid.n();
    if phi.len() != n {
        return Err(Error::InvalidParameter(format!("datum has {} values for N = {n}", phi.len())));
    }
    match kind {
        ProblemKind::Neumann => check_mean_free(grid, phi, true)?,
        ProblemKind::Regularity => check_mean_free(grid, phi, false)?,
        ProblemKind::Dirichlet => {}
    }
    let cond = maps.conditioning(kind)?;
    if !cond.invertible(1e-10) {
        return Err(Error::TraceMapSingular { sigma_min: cond.sigma_min });
    }
    let rhs = match kind {
        ProblemKind::Regularity => par_coords(d, phi),
        _ => perp_coords(d, phi),
    };
    let c = linalg::solve(maps.map(kind), &rhs)?;
    let a0 = linalg::mat_vec(&maps.hplus, &c);
    let g0 = linalg::mat_vec(&maps.tinv, &c);
    let both = CMat::from_fn(a0.len(), 2, |i, j| if j == 0 { a0[i] } else { g0[i] });
    let ts = tgrid.ts();
    let evolved = semigroup(calc, &ts, &both)?;
    let hplus = calc.from_range_coords(&a0);
    let v0 = b.apply(&calc.from_range_coords(&g0));
    let constant = match kind {
        ProblemKind::Dirichlet => {
            let s: Vec<c64> = phi.iter().zip(&v0).map(|(p, v)| p + v).collect();
            grid.inner_scalar(&s, &vec![ONE; n]) / grid.total_mass()
        }
        _ => ZERO,
    };
    let mut f = UpperHalfField::zeros(tgrid.clone(), n);
    let mut u = Vec::with_capacity(ts.len());
    let (mut defect, mut fmax): (f64, f64) = (0.0, 0.0);
    for (j, e) in evolved.iter().enumerate() {
        let fj = calc.from_range_coords(&column(e, 0));
        let vj = b.apply(&calc.from_range_coords(&column(e, 1)));
        defect = defect.max(grid.norm(&linalg::sub(&d.apply(&vj), &fj)));
        fmax = fmax.max(grid.norm(&fj));
        u.push(vj[..n].iter().map(|v| constant - v).collect::<Vec<_>>());
        f.row_mut(j).copy_from_slice(&fj);
    }
    let bh = b.apply(&hplus);
    let mut trace = bh[..n].to_vec();
    trace.extend_from_slice(&hplus[n..]);
    let datum_norm = grid.norm(&[phi, &vec![ZERO; n][..]].concat());
    let boundary: Vec<c64> = match kind {
        ProblemKind::Dirichlet => v0[..n].iter().map(|v| constant - v).collect(),
        ProblemKind::Neumann => hplus[..n].to_vec(),
        ProblemKind::Regularity => hplus[n..].to_vec(),
    };
    let mismatch: Vec<c64> = boundary.iter().zip(phi).map(|(a, p)| a - p).collect();
    let datum_residual = grid.norm(&[&mismatch[..], &vec![ZERO; n][..]].concat()) / datum_norm;
    let grad = UpperHalfField::from_fn(tgrid.clone(), n, |j, _| {
        let bf = b.apply(f.row(j));
        let mut g = bf[..n].to_vec();
        g.extend_from_slice(&f.row(j)[n..]);
        g
    });
    let q = tgrid.q() as usize;
    let trace_limits = (0..4)
        .filter(|o| (o + 1) * q <= tgrid.len())
        .map(|o| {
            let s: f64 = (o * q..(o + 1) * q).map(|j| tgrid.ds(j) * grid.norm(&linalg::sub(f.row(j), &hplus)).powi(2)).sum();
            s / tgrid.lower(o * q)
        })
        .collect();
    let report = SolutionReport {
        kind,
        n,
        sigma_min: cond.sigma_min,
        cond: cond.cond,
        ntmax_grad: x_norm(grid, &grad),
        y_norm: y_norm(grid, &grad),
        sup_u: u.iter().map(|r| grid.norm(&[&r[..], &vec![ZERO; n][..]].concat())).fold(0.0, f64::max),
        datum_norm,
        datum_residual,
        conjugate_defect: if fmax > 0.0 { defect / fmax } else { defect },
        trace_limits,
    };
    Ok(BvpSolution { kind, datum: phi.to_vec(), hplus, hplus_coords: a0, f, u, constant, trace, report })
}

/// Conormal field f = [(w^{-1}A g)_⊥, g_∥] of a gradient g = [∂_t u, ∇_x u].
pub fn conormal_from_gradient(a_over_w: &CoefficientField, g: &[c64]) -> Vec<c64> {
    let n = a_over_w.n();
    let mut f = g.to_vec();
    for i in 0..n {
        let a = a_over_w.at(i);
        f[i] = a[0] * g[i] + a[1] * g[n + i];
    }
    f
}

/// Inverse of [`conormal_from_gradient`]; equals [(Bf)_⊥, f_∥] with
/// B = hat(w^{-1}A).
pub fn gradient_from_conormal(a_over_w: &CoefficientField, f: &[c64]) -> Vec<c64> {
    let n = a_over_w.n();
    let mut g = f.to_vec();
    for i in 0..n {
        let a = a_over_w.at(i);
        g[i] = (f[i] - a[1] * f[n + i]) / a[0];
    }
    g
}

/// L²(dw) norms of the t-averages of f over each of the `count` lowest
/// octaves of the mesh, subtracting `target` when given. Solutions converge
/// to their trace; fields in L²(dt/t) have averages tending to zero.
pub fn octave_averages(grid: &WeightedGrid, f: &UpperHalfField, target: Option<&[c64]>, count: usize) -> Vec<f64> {
    let tg = &f.tgrid;
    let q = tg.q() as usize;
    let m = 2 * f.n;
    (0..count)
        .filter(|o| (o + 1) * q <= tg.len())
        .map(|o| {
            let mut avg = vec![ZERO; m];
            for j in o * q..(o + 1) * q {
                for (a, v) in avg.iter_mut().zip(f.row(j)) {
                    *a += v / q as f64;
                }
            }
            if let Some(t) = target {
                avg = linalg::sub(&avg, t);
            }
            grid.norm(&avg)
        })
        .collect()
}

/// Relative residual of the weak form ∫ -(f, ∂_tφ) + (Bf, Dφ) dt = 0 over
/// `count` test fields φ(t, x) = ψ(ln t) ξ(x), with ψ a smooth bump on
/// [1/8, 2] and ξ a random smooth field.
pub fn weak_form_residual(sol: &BvpSolution, maps: &TraceMaps, count: usize, seed: u64) -> f64 {
    let calc = &maps.calc;
    let grid = calc.grid();
    let d = calc.discrete_d();
    let n = grid.n();
    let tg = &sol.f.tgrid;
    let (lo, hi) = ((0.125f64).ln(), 2f64.ln());
    let (mid, half) = ((lo + hi) / 2.0, (hi - lo) / 2.0);
    // ψ(s) = exp(-1/(1 - r²)) with r = (s - mid)/half; returns (ψ, dψ/ds)
    let bump = |s: f64| -> (f64, f64) {
        let r = (s - mid) / half;
        if r.abs() >= 1.0 {
            return (0.0, 0.0);
        }
        let p = (-1.0 / (1.0 - r * r)).exp();
        (p, p * (-2.0 * r / (1.0 - r * r).powi(2)) / half)
    };
    let mut rng = crate::rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let mut xi = smooth_probe(n, &mut rng, 6);
        xi.extend(smooth_probe(n, &mut rng, 6));
        let dxi = d.apply(&xi);
        let (mut total, mut scale) = (ZERO, 0.0);
        for j in 0..tg.len() {
            let t = tg.t(j);
            let (p, dp) = bump(t.ln());
            if p == 0.0 {
                continue;
            }
            let fj = sol.f.row(j);
            // dt = t d(ln t) and ∂_t φ = ψ'(ln t) ξ / t
            let a = grid.inner(fj, &xi) * (-dp);
            let bterm = grid.inner(&maps.pair.b.apply(fj), &dxi) * (p * t);
            total += (a + bterm) * tg.dlog();
            scale += (a.norm() + bterm.norm()) * tg.dlog();
        }
        if scale > 0.0 {
            worst = worst.max(total.norm() / scale);
        }
    }
    worst
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RellichResidual {
    /// |(f, Bf) - 2(f_⊥, (Bf)_⊥)| / (‖f‖‖Bf‖).
    pub perp: f64,
    /// |(f, Bf) - 2(f_∥, (Bf)_∥)| / (‖f‖‖Bf‖).
    pub par: f64,
    /// 2 Re(f_⊥, (Bf)_⊥)/‖f‖², bounded below by the accretivity constant.
    pub coercive: f64,
    /// 2‖B‖_∞ ‖f_⊥‖/‖f‖, the upper end of the coercivity chain.
    pub upper: f64,
}

/// The Rellich residuals without the hermitian precondition (used as a
/// negative control for non-hermitian coefficients).
pub fn rellich_defect(grid: &WeightedGrid, b: &CoefficientField, f: &[c64]) -> RellichResidual {
    let n = grid.n();
    let bf = b.apply(f);
    let full = grid.inner(f, &bf);
    let perp = grid.inner_scalar(&f[..n], &bf[..n]);
    let par = grid.inner_scalar(&f[n..], &bf[n..]);
    let scale = grid.norm(f) * grid.norm(&bf);
    let nf = grid.norm(f);
    let nperp = grid.norm(&[&f[..n], &vec![ZERO; n][..]].concat());
    RellichResidual {
        perp: (full - perp * 2.0).norm() / scale,
        par: (full - par * 2.0).norm() / scale,
        coercive: 2.0 * perp.re / (nf * nf),
        upper: 2.0 * b.sup_norm() * nperp / nf,
    }
}

/// Rellich residuals for f ∈ H^±_{DB} and hermitian A.
pub fn rellich_residual(pair: &CoefficientPair, grid: &WeightedGrid, f: &[c64]) -> Result<RellichResidual> {
    let defect = pair.a_over_w.hermitian_defect();
    if defect > 1e-12 {
        return Err(Error::NotHermitian { defect });
    }
    Ok(rellich_defect(grid, &pair.b, f))
}

/// Discrepancy E(t_j, x_i) on the t-mesh, acting on fields `[⊥, ∥]`.
#[derive(Clone, Debug)]
pub struct DiscrepancyField {
    pub tgrid: TGrid,
    pub n: usize,
    pub e: Vec<Mat2>,
}

impl DiscrepancyField {
    pub fn zero(tgrid: TGrid, n: usize) -> Self {
        let len = tgrid.len() * n;
        DiscrepancyField { tgrid, n, e: vec![[ZERO; 4]; len] }
    }

    /// η·1_{t < t0}·I.
    pub fn step(tgrid: TGrid, n: usize, eta: f64, t0: f64) -> Self {
        let mut e = Vec::with_capacity(tgrid.len() * n);
        for j in 0..tgrid.len() {
            let s = if tgrid.t(j) < t0 { eta } else { 0.0 };
            e.extend(std::iter::repeat([c64::new(s, 0.0), ZERO, ZERO, c64::new(s, 0.0)]).take(n));
        }
        DiscrepancyField { tgrid, n, e }
    }

    /// E_t = B₀ - B_t for coefficients B_t given per t.
    pub fn from_coefficients(tgrid: TGrid, b0: &CoefficientField, mut bt: impl FnMut(f64) -> Result<CoefficientField>) -> Result<Self> {
        let n = b0.n();
        let mut e = Vec::with_capacity(tgrid.len() * n);
        for j in 0..tgrid.len() {
            let b = bt(tgrid.t(j))?;
            e.extend(b0.matrices().iter().zip(b.matrices()).map(|(x, y)| std::array::from_fn(|k| x[k] - y[k])));
        }
        Ok(DiscrepancyField { tgrid, n, e })
    }

    pub fn apply(&self, j: usize, x: &[c64]) -> Vec<c64> {
        let n = self.n;
        let mut out = vec![ZERO; 2 * n];
        for i in 0..n {
            let a = &self.e[j * n + i];
            out[i] = a[0] * x[i] + a[1] * x[n + i];
            out[n + i] = a[2] * x[i] + a[3] * x[n + i];
        }
        out
    }

    /// ‖E‖_* with the default Whitney parameters.
    pub fn star_norm(&self, grid: &WeightedGrid) -> ModifiedCarleson {
        let abs: Vec<f64> = self.e.iter().map(mat2_norm).collect();
        modified_carleson_norm(grid, &self.tgrid, &abs, WHITNEY_C0, WHITNEY_C1)
    }
}

/// Product integration of the two s-integrals of S_E for data constant on
/// each t-cell, per eigenvalue: for Re λ > 0 the coefficient of cell i at
/// t is ∫_{cell ∩ (0,t)} e^{-(t-s)λ} ds, for Re λ < 0 it is
/// -∫_{cell ∩ (t,∞)} e^{(s-t)λ} ds.
fn duhamel(lambda: &[c64], tgrid: &TGrid, g: &[Vec<c64>]) -> Vec<Vec<c64>> {
    let len = tgrid.len();
    let m = lambda.len();
    let mut out = vec![vec![ZERO; m]; len];
    for (j, o) in out.iter_mut().enumerate() {
        let t = tgrid.t(j);
        for (k, &l) in lambda.iter().enumerate() {
            let mut acc = ZERO;
            if l.re > 0.0 {
                for (i, gi) in g.iter().enumerate().take(j + 1) {
                    let a = tgrid.lower(i);
                    let b = if i == j { t } else { tgrid.upper(i) };
                    acc += gi[k] * (((l * (b - t)).exp() - (l * (a - t)).exp()) / l);
                }
            } else if l.re < 0.0 {
                for (i, gi) in g.iter().enumerate().skip(j) {
                    let a = if i == j { t } else { tgrid.lower(i) };
                    let b = tgrid.upper(i);
                    acc -= gi[k] * (((l * (b - t)).exp() - (l * (a - t)).exp()) / l);
                }
            }
            o[k] = acc;
        }
    }
    out
}

/// -∫_0^∞ e^{sλ} g_s ds on the components with Re λ < 0.
fn boundary_minus(lambda: &[c64], tgrid: &TGrid, g: &[Vec<c64>]) -> Vec<c64> {
    lambda
        .iter()
        .enumerate()
        .map(|(k, &l)| {
            if l.re >= 0.0 {
                return ZERO;
            }
            g.iter()
                .enumerate()
                .map(|(i, gi)| -gi[k] * (((l * tgrid.upper(i)).exp() - (l * tgrid.lower(i)).exp()) / l))
                .sum()
        })
        .collect()
}

fn require_eigen(calc: &SpectralCalculus) -> Result<()> {
    if calc.backend() != Backend::Eigen {
        return Err(Error::IllConditionedEigenbasis { cond: calc.cond(), limit: COND_LIMIT });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SeReport {
    /// ‖S_E f‖_X / ‖f‖_X with ‖·‖_X = ‖Ñ_*(·)‖.
    pub ratio_x: f64,
    /// ‖S_E f‖_Y / ‖f‖_Y with ‖·‖_Y = (∫‖·‖² t dt)^{1/2}.
    pub ratio_y: f64,
    /// ‖h⁻‖ / (‖E‖_* ‖f‖_X).
    pub ratio_h: f64,
    pub e_star: f64,
    /// max_t ‖D(S̃_E f)_t - (S_E f)_t‖ / max_t ‖(S_E f)_t‖.
    pub intertwining: f64,
}

#[derive(Clone, Debug)]
pub struct SeResult {
    pub s: UpperHalfField,
    pub s_tilde: UpperHalfField,
    pub h_minus: Vec<c64>,
    pub report: SeReport,
}

/// S_E f and S̃_E f on the t-mesh together with h⁻ = (S_E f)_0. `db` and
/// `bd` are the calculi of DB₀ and B₀D; both need an eigenbasis.
pub fn se_apply(db: &SpectralCalculus, bd: &SpectralCalculus, e: &DiscrepancyField, f: &UpperHalfField) -> Result<SeResult> {
    if e.tgrid != f.tgrid || e.n != f.n {
        return Err(Error::TGridMismatch("discrepancy and field live on different meshes".into()));
    }
    if db.kind() != Composition::DB || bd.kind() != Composition::BD {
        return Err(Error::InvalidParameter("se_apply needs the DB and BD calculi".into()));
    }
    require_eigen(db)?;
    require_eigen(bd)?;
    let grid = db.grid();
    let d = db.discrete_d();
    let tg = &f.tgrid;
    let n = f.n;
    let ef: Vec<Vec<c64>> = (0..tg.len()).map(|j| e.apply(j, f.row(j))).collect();
    let g_db: Vec<Vec<c64>> = ef
        .iter()
        .map(|x| linalg::mat_vec(db.eigenvectors_inv(), &db.range_coords(&d.apply(x))))
        .collect();
    let g_bd: Vec<Vec<c64>> = ef.iter().map(|x| linalg::mat_vec(bd.eigenvectors_inv(), &bd.range_coords(x))).collect();
    let back = |calc: &SpectralCalculus, c: &[c64]| calc.from_range_coords(&linalg::mat_vec(calc.eigenvectors(), c));
    let s_rows = duhamel(db.eigenvalues(), tg, &g_db);
    let st_rows = duhamel(bd.eigenvalues(), tg, &g_bd);
    let s = UpperHalfField::from_fn(tg.clone(), n, |j, _| back(db, &s_rows[j]));
    let s_tilde = UpperHalfField::from_fn(tg.clone(), n, |j, _| back(bd, &st_rows[j]));
    let h_minus = back(db, &boundary_minus(db.eigenvalues(), tg, &g_db));
    let (mut gap, mut size): (f64, f64) = (0.0, 0.0);
    for j in 0..tg.len() {
        gap = gap.max(grid.norm(&linalg::sub(&d.apply(s_tilde.row(j)), s.row(j))));
        size = size.max(grid.norm(s.row(j)));
    }
    let fx = x_norm(grid, f);
    let e_star = e.star_norm(grid).value;
    let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
    let report = SeReport {
        ratio_x: ratio(x_norm(grid, &s), fx),
        ratio_y: ratio(y_norm(grid, &s), y_norm(grid, f)),
        ratio_h: ratio(grid.norm(&h_minus), e_star * fx),
        e_star,
        intertwining: if size > 0.0 { gap / size } else { gap },
    };
    Ok(SeResult { s, s_tilde, h_minus, report })
}

/// Smallest singular value of the Neumann trace map of the t-dependent
/// problem B_t = B₀ - E_t: h⁺ ↦ (f_0)_⊥ with f = e^{-tDB₀}h⁺ + S_E f and
/// f_0 = h⁺ + h⁻. The integral equation is solved by fixed-point iteration;
/// `None` when it fails to converge.
pub fn perturbed_neumann_sigma(maps: &TraceMaps, e: &DiscrepancyField, max_iter: usize) -> Result<Option<f64>> {
    let db = &maps.calc;
    require_eigen(db)?;
    let d = db.discrete_d();
    let tg = &e.tgrid;
    let n = d.n();
    let k = n - 1;
    let lambda = db.eigenvalues();
    let vinv = db.eigenvectors_inv();
    let v = db.eigenvectors();
    let ts = tg.ts();
    let free = semigroup(db, &ts, &maps.hplus)?;
    let mut trace = CMat::zeros(k, k);
    for col in 0..k {
        let base: Vec<Vec<c64>> = free.iter().map(|m| column(m, col)).collect();
        let mut cur = base.clone();
        let mut hminus = vec![ZERO; lambda.len()];
        let mut converged = false;
        for _ in 0..max_iter {
            let g: Vec<Vec<c64>> = cur
                .iter()
                .enumerate()
                .map(|(j, a)| {
                    let x = e.apply(j, &db.from_range_coords(a));
                    linalg::mat_vec(vinv, &db.range_coords(&d.apply(&x)))
                })
                .collect();
            let s = duhamel(lambda, tg, &g);
            hminus = linalg::mat_vec(v, &boundary_minus(lambda, tg, &g));
            let next: Vec<Vec<c64>> = base.iter().zip(&s).map(|(b, sj)| linalg::add(b, &linalg::mat_vec(v, sj))).collect();
            let change = next.iter().zip(&cur).map(|(a, b)| linalg::norm(&linalg::sub(a, b))).fold(0.0, f64::max);
            let size = next.iter().map(|a| linalg::norm(a)).fold(0.0, f64::max);
            if !(change.is_finite() && size < 1e8) {
                return Ok(None);
            }
            cur = next;
            if change <= 1e-11 * size {
                converged = true;
                break;
            }
        }
        if !converged {
            return Ok(None);
        }
        for i in 0..k {
            trace[(i, col)] = maps.hplus[(i, col)] + hminus[i];
        }
    }
    Ok(Some(MapConditioning::of(&trace)?.sigma_min))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepPoint {
    pub eps: f64,
    /// Smallest singular values of the Dirichlet, regularity and Neumann
    /// maps; `None` once the coefficients stop being accretive.
    pub sigma_min: [Option<f64>; 3],
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub points: Vec<SweepPoint>,
    /// Largest swept ε up to which every map stays invertible.
    pub radius: f64,
    /// Largest ratio of σ_min between adjacent sweep points, per map.
    pub max_jump: [f64; 3],
}

/// Sweep A = A₀ + ε ΔA over `radii` (ascending, starting at 0) and track
/// the three trace maps. Arguments are w^{-1}A₀ and w^{-1}ΔA.
pub fn perturbation_sweep(grid: &WeightedGrid, a0: &CoefficientField, delta: &CoefficientField, radii: &[f64], tol: f64) -> Result<PerturbationReport> {
    let mut points = Vec::with_capacity(radii.len());
    for &eps in radii {
        let a = a0.add_scaled(delta, eps);
        let sigma = match CoefficientPair::from_a_over_w(a).and_then(|p| TraceMaps::new(grid, &p)) {
            Ok(maps) => {
                let mut s = [None; 3];
                for (slot, kind) in s.iter_mut().zip(ProblemKind::ALL) {
                    *slot = Some(maps.conditioning(kind)?.sigma_min);
                }
                s
            }
            Err(e) if e.is_precondition() => [None; 3],
            Err(e) => return Err(e),
        };
        points.push(SweepPoint { eps, sigma_min: sigma });
    }
    let mut radius = 0.0;
    for p in &points {
        if p.sigma_min.iter().all(|s| s.map_or(false, |v| v > tol)) {
            radius = p.eps;
        } else {
            break;
        }
    }
    let mut max_jump = [1.0f64; 3];
    for w in points.windows(2) {
        for (k, jump) in max_jump.iter_mut().enumerate() {
            if let (Some(a), Some(b)) = (w[0].sigma_min[k], w[1].sigma_min[k]) {
                *jump = jump.max(a.max(b) / a.min(b));
            }
        }
    }
    Ok(PerturbationReport { points, radius, max_jump })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TDependentPoint {
    pub eps: f64,
    pub e_star: f64,
    pub sigma_min: Option<f64>,
}

/// Neumann map of A = A₀ + ε 1_{t < t0} ΔA along `radii`.
pub fn t_dependent_sweep(grid: &WeightedGrid, a0: &CoefficientField, delta: &CoefficientField, t0: f64, radii: &[f64]) -> Result<Vec<TDependentPoint>> {
    let pair0 = CoefficientPair::from_a_over_w(a0.clone())?;
    let maps = TraceMaps::new(grid, &pair0)?;
    let tg = TGrid::for_grid(grid);
    radii
        .iter()
        .map(|&eps| {
            let pert = CoefficientPair::from_a_over_w(a0.add_scaled(delta, eps))?;
            let e = DiscrepancyField::from_coefficients(tg.clone(), &pair0.b, |t| Ok(if t < t0 { pert.b.clone() } else { pair0.b.clone() }))?;
            let e_star = e.star_norm(grid).value;
            Ok(TDependentPoint { eps, e_star, sigma_min: perturbed_neumann_sigma(&maps, &e, 200)? })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DualityReport {
    pub samples: usize,
    pub agree: usize,
    pub dirichlet: Vec<f64>,
    pub regularity_adjoint: Vec<f64>,
}

/// Invertibility of the Dirichlet map for A against the regularity map
/// for A^* over random accretive t-independent coefficients.
pub fn duality_check(grid: &WeightedGrid, samples: usize, seed: u64, tol: f64) -> Result<DualityReport> {
    let mut report = DualityReport { samples, agree: 0, dirichlet: vec![], regularity_adjoint: vec![] };
    for s in 0..samples as u64 {
        let spec = CoefficientSpec::Random { seed: seed.wrapping_add(s), level: 3, amplitude: 0.5, hermitian: false };
        let pair = CoefficientPair::from_a_over_w(CoefficientField::from_spec(&spec, grid.n())?)?;
        let dir = TraceMaps::new(grid, &pair)?.conditioning(ProblemKind::Dirichlet)?;
        let reg = TraceMaps::new(grid, &pair.adjoint()?)?.conditioning(ProblemKind::Regularity)?;
        if dir.invertible(tol) == reg.invertible(tol) {
            report.agree += 1;
        }
        report.dirichlet.push(dir.sigma_min);
        report.regularity_adjoint.push(reg.sigma_min);
    }
    Ok(report)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct NtmaxEquivalence {
    /// Extremes of ‖Ñ_*(e^{-t|T|}h)‖/‖h‖.
    pub lower: f64,
    pub upper: f64,
    /// Extremes of ‖∂_t e^{-t|T|}h‖_Y/‖h‖.
    pub y_lower: f64,
    pub y_upper: f64,
    pub samples: usize,
}

/// Two-sided non-tangential bounds for the semigroup over random h in the
/// closure of R(T) (half projected noise, half smooth fields).
pub fn ntmax_equivalence(calc: &SpectralCalculus, tgrid: &TGrid, samples: usize, seed: u64) -> Result<NtmaxEquivalence> {
    let grid = calc.grid();
    let n = grid.n();
    let m = calc.discrete_d().range_dim();
    let mut rng = crate::rng(seed);
    let hs: Vec<Vec<c64>> = (0..samples)
        .map(|s| {
            let x = if s % 2 == 0 {
                linalg::random_vector(&mut rng, 2 * n)
            } else {
                let mut x = smooth_probe(n, &mut rng, 8);
                x.extend(smooth_probe(n, &mut rng, 8));
                x
            };
            calc.range_coords(&x)
        })
        .collect();
    let abs = calc.range_matrix(Func::Abs)?;
    let a = CMat::from_fn(m, 2 * samples, |i, j| if j < samples { hs[j][i] } else { linalg::mat_vec(&abs, &hs[j - samples])[i] });
    let evolved = semigroup(calc, &tgrid.ts(), &a)?;
    let mut out = NtmaxEquivalence { lower: f64::INFINITY, upper: 0.0, y_lower: f64::INFINITY, y_upper: 0.0, samples };
    for s in 0..samples {
        let h = grid.norm(&calc.from_range_coords(&hs[s]));
        let f = UpperHalfField::from_fn(tgrid.clone(), n, |j, _| calc.from_range_coords(&column(&evolved[j], s)));
        let df = UpperHalfField::from_fn(tgrid.clone(), n, |j, _| calc.from_range_coords(&column(&evolved[j], samples + s)));
        let r = x_norm(grid, &f) / h;
        let ry = y_norm(grid, &df) / h;
        out.lower = out.lower.min(r);
        out.upper = out.upper.max(r);
        out.y_lower = out.y_lower.min(ry);
        out.y_upper = out.y_upper.max(ry);
    }
    Ok(out)
}

/// Truncated strip (0, tmax) × torus with t-spacing tau.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StripParams {
    pub tmax: f64,
    pub tau: f64,
}

/// Potential on the uniform strip mesh: u[k·N + i] = u(kτ, x_i).
#[derive(Clone, Debug)]
pub struct MeshSolution {
    pub n: usize,
    pub h: f64,
    pub tau: f64,
    pub rows: usize,
    pub weights: Vec<f64>,
    pub u: Vec<c64>,
}

impl MeshSolution {
    pub fn at(&self, k: usize, i: usize) -> c64 {
        self.u[k * self.n + i % self.n]
    }

    /// Forward differences (∂_t u, ∂_x u) on cell (k, i), k < rows - 1.
    pub fn gradient(&self, k: usize, i: usize) -> [c64; 2] {
        let u0 = self.at(k, i);
        [(self.at(k + 1, i) - u0) / self.tau, (self.at(k, i + 1) - u0) / self.h]
    }

    /// Conormal field [(w^{-1}A g)_⊥, g_∥] with g the cell gradient, one row
    /// per cell layer k < rows - 1.
    pub fn conormal(&self, a_over_w: &CoefficientField) -> Vec<Vec<c64>> {
        let n = self.n;
        (0..self.rows - 1)
            .map(|k| {
                let mut row = vec![ZERO; 2 * n];
                for i in 0..n {
                    let g = self.gradient(k, i);
                    let a = a_over_w.at(i);
                    row[i] = a[0] * g[0] + a[1] * g[1];
                    row[n + i] = g[1];
                }
                row
            })
            .collect()
    }
}

/// Finite-difference solve of div_{t,x}(A∇u) = 0 on the strip with the
/// datum at t = 0 and zero conormal derivative at t = tmax. The scheme is
/// the discrete weak form Σ_cells τh w_i (w^{-1}A g(u), g(v)) with g the
/// forward-difference gradient, so the x-stencil is that of D and the
/// t-direction is first order.
pub fn fd_reference_solve(grid: &WeightedGrid, a_over_w: &CoefficientField, kind: ProblemKind, phi: &[c64], params: StripParams) -> Result<MeshSolution> {
    let n = grid.n();
    let h = grid.h();
    let w = grid.weights();
    let tau = params.tau;
    if !(tau > 0.0 && params.tmax > 2.0 * tau) {
        return Err(Error::InvalidParameter("strip needs tmax > 2τ > 0".into()));
    }
    if phi.len() != n || a_over_w.n() != n {
        return Err(Error::InvalidParameter("datum and coefficients must match the grid".into()));
    }
    let rows = (params.tmax / tau).round() as usize + 1;
    let idx = |k: usize, i: usize| k * n + i % n;
    let dirichlet: Option<Vec<c64>> = match kind {
        ProblemKind::Neumann => {
            check_mean_free(grid, phi, true)?;
            None
        }
        ProblemKind::Dirichlet => Some(phi.to_vec()),
        ProblemKind::Regularity => {
            check_mean_free(grid, phi, false)?;
            let mut u0 = vec![ZERO; n];
            for i in 1..n {
                u0[i] = u0[i - 1] + phi[i - 1] * h;
            }
            Some(u0)
        }
    };
    let size = rows * n;
    let mut trip: Vec<Triplet<usize, usize, c64>> = Vec::with_capacity(9 * size);
    let mut rhs = vec![ZERO; size];
    let fixed = |row: usize| -> bool {
        if dirichlet.is_some() {
            row < n
        } else {
            row == idx(rows - 1, 0)
        }
    };
    for k in 0..rows - 1 {
        for i in 0..n {
            let a = a_over_w.at(i);
            let wt = tau * h * w[i];
            let nodes = [idx(k, i), idx(k + 1, i), idx(k, i + 1)];
            // d g_⊥ and d g_∥ with respect to the three nodes
            let dt = [-1.0 / tau, 1.0 / tau, 0.0];
            let dx = [-1.0 / h, 0.0, 1.0 / h];
            for q in 0..3 {
                if fixed(nodes[q]) {
                    continue;
                }
                for p in 0..3 {
                    let v = (a[0] * dt[p] + a[1] * dx[p]) * dt[q] + (a[2] * dt[p] + a[3] * dx[p]) * dx[q];
                    if v != ZERO {
                        trip.push(Triplet::new(nodes[q], nodes[p], v * wt));
                    }
                }
            }
        }
    }
    match &dirichlet {
        Some(u0) => {
            for i in 0..n {
                trip.push(Triplet::new(i, i, ONE));
                rhs[i] = u0[i];
            }
        }
        None => {
            for i in 0..n {
                rhs[i] = -phi[i] * (h * w[i]);
            }
            let pin = idx(rows - 1, 0);
            trip.push(Triplet::new(pin, pin, ONE));
        }
    }
    let mat = SparseColMat::<usize, c64>::try_new_from_triplets(size, size, &trip)
        .map_err(|e| Error::SolverSingular(format!("assembly failed: {e:?}")))?;
    let lu = mat.sp_lu().map_err(|e| Error::SolverSingular(format!("sparse LU failed: {e:?}")))?;
    let x = lu.solve(linalg::col(&rhs));
    let u: Vec<c64> = x.iter().copied().collect();
    if !u.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
        return Err(Error::SolverSingular("finite-difference system is singular".into()));
    }
    Ok(MeshSolution { n, h, tau, rows, weights: w.to_vec(), u })
}

/// Σ_{k=1}^{modes} (cos 2πkx + sin 2πkx)/k at the cell centres; the Neumann
/// datum has its dw-mean removed.
pub fn fourier_datum(grid: &WeightedGrid, modes: usize, kind: ProblemKind) -> Vec<c64> {
    use std::f64::consts::PI;
    let mut phi: Vec<c64> = grid
        .points()
        .iter()
        .map(|x| {
            let s: f64 = (1..=modes).map(|k| ((2.0 * PI * k as f64 * x).cos() + (2.0 * PI * k as f64 * x).sin()) / k as f64).sum();
            c64::new(s, 0.0)
        })
        .collect();
    if kind == ProblemKind::Neumann {
        let mean = grid.inner_scalar(&phi, &vec![ONE; grid.n()]) / grid.total_mass();
        phi.iter_mut().for_each(|p| *p -= mean);
    }
    phi
}

/// Semigroup conormal field e^{-kτ|DB₀|}h⁺ at the strip nodes k < count.
pub fn conormal_on_mesh(maps: &TraceMaps, hplus_coords: &[c64], tau: f64, count: usize) -> Result<Vec<Vec<c64>>> {
    let calc = &maps.calc;
    let a = CMat::from_fn(hplus_coords.len(), 1, |i, _| hplus_coords[i]);
    Ok(semigroup_uniform(calc, tau, count, &a)?.iter().map(|m| calc.from_range_coords(&column(m, 0))).collect())
}

/// Relative L²(dt dw) distance of two layered fields with equal rows.
pub fn relative_mesh_error(grid: &WeightedGrid, a: &[Vec<c64>], b: &[Vec<c64>]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        num += grid.norm(&linalg::sub(x, y)).powi(2);
        den += grid.norm(y).powi(2);
    }
    (num / den).sqrt()
}

/// Fine layered field (2N points, τ/2) sampled on the coarse mesh: layers
/// 2k, ⊥ values averaged over cell pairs and ∥ values (edge centred) taken
/// at the shared edges.
pub fn restrict_layers(fine: &[Vec<c64>], coarse_rows: usize) -> Vec<Vec<c64>> {
    (0..coarse_rows)
        .map(|k| {
            let r = &fine[2 * k];
            let nf = r.len() / 2;
            let n = nf / 2;
            let mut out = vec![ZERO; 2 * n];
            for i in 0..n {
                out[i] = (r[2 * i] + r[2 * i + 1]) * 0.5;
                out[n + i] = r[nf + 2 * i + 1];
            }
            out
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleComparison {
    #[serde(rename = "N")]
    pub n: usize,
    pub kind: ProblemKind,
    /// Semigroup against finite differences on the N mesh.
    pub error: f64,
    /// Finite differences on the N mesh against the 2N mesh.
    pub refinement: f64,
    /// Finite differences with tmax against 2·tmax.
    pub tmax_sensitivity: f64,
}

/// Compares the semigroup solution with the finite-difference reference for
/// the Fourier datum with `modes` modes; τ = tau_cells·h.
pub fn oracle_comparison(
    weight: &WeightModel,
    a_spec: &CoefficientSpec,
    kind: ProblemKind,
    modes: usize,
    n: usize,
    tmax: f64,
    tau_cells: f64,
) -> Result<OracleComparison> {
    let grid = WeightedGrid::new(weight, n)?;
    let fine = WeightedGrid::new(weight, 2 * n)?;
    let a = CoefficientField::from_spec(a_spec, n)?;
    let a_fine = CoefficientField::from_spec(a_spec, 2 * n)?;
    let pair = CoefficientPair::from_a_over_w(a.clone())?;
    let maps = TraceMaps::new(&grid, &pair)?;
    let phi = fourier_datum(&grid, modes, kind);
    let tau = tau_cells * grid.h();
    let params = StripParams { tmax, tau };
    let fd = fd_reference_solve(&grid, &a, kind, &phi, params)?;
    let fd_field = fd.conormal(&a);
    let layers = fd_field.len();
    let sol = solve_tindep(&maps, kind, &phi, &TGrid::for_grid(&grid))?;
    let sg = conormal_on_mesh(&maps, &sol.hplus_coords, tau, layers)?;
    let error = relative_mesh_error(&grid, &fd_field, &sg);
    let fd_fine = fd_reference_solve(&fine, &a_fine, kind, &fourier_datum(&fine, modes, kind), StripParams { tmax, tau: tau / 2.0 })?;
    let refinement = relative_mesh_error(&grid, &fd_field, &restrict_layers(&fd_fine.conormal(&a_fine), layers));
    let fd_tall = fd_reference_solve(&grid, &a, kind, &phi, StripParams { tmax: 2.0 * tmax, tau })?;
    let tmax_sensitivity = relative_mesh_error(&grid, &fd_field, &fd_tall.conormal(&a)[..layers]);
    Ok(OracleComparison { n, kind, error, refinement, tmax_sensitivity })
}

/// Ball in the (t, x) half-plane, periodic in x.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub t: f64,
    pub x: f64,
    pub r: f64,
}

impl Ball {
    fn scaled_contains(&self, s: f64, t: f64, x: f64) -> bool {
        let dx = (x - self.x).rem_euclid(1.0);
        let dx = dx.min(1.0 - dx);
        (t - self.t).powi(2) + dx * dx < (s * self.r).powi(2)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InteriorReport {
    pub alpha: f64,
    pub beta: f64,
    pub p: f64,
    /// max over balls of r² ∫_{αB}|∇u|² dw̲ / ∫_{βB}|u|² dw̲.
    pub caccioppoli: f64,
    /// max over balls of (⨍_{αB}|∇u|²)^{1/2} / (⨍_{βB}|∇u|^p)^{1/p}.
    pub reverse_holder: f64,
    /// Per-ball pair of the two ratios.
    pub per_ball: Vec<[f64; 2]>,
}

/// A deterministic family of `count` balls inside the strip.
pub fn interior_balls(sol: &MeshSolution, count: usize) -> Vec<Ball> {
    let height = sol.tau * (sol.rows - 1) as f64;
    (0..count)
        .map(|j| {
            let r = (0.05 + 0.2 * (j % 4) as f64 / 3.0).min(height / 4.0);
            Ball { t: 1.5 * r + 0.01 * j as f64, x: (0.5 + j as f64) / count as f64, r }
        })
        .collect()
}

/// Caccioppoli and reverse Hölder ratios of a computed solution on the
/// given balls, with weighted measure dw̲ = w dt dx.
pub fn interior_checks(sol: &MeshSolution, balls: &[Ball], alpha: f64, beta: f64, p: f64) -> Result<InteriorReport> {
    if !(0.0 < alpha && alpha < beta && beta <= 1.0) {
        return Err(Error::InvalidParameter("need 0 < α < β ≤ 1".into()));
    }
    let height = sol.tau * (sol.rows - 1) as f64;
    let n = sol.n;
    let mut report = InteriorReport { alpha, beta, p, caccioppoli: 0.0, reverse_holder: 0.0, per_ball: vec![] };
    for ball in balls {
        if ball.t - ball.r <= 0.0 || ball.t + ball.r >= height || 2.0 * ball.r >= 1.0 {
            return Err(Error::InvalidParameter(format!("ball {ball:?} leaves the strip")));
        }
        let (mut grad_a, mut mass_a, mut u_b, mut gp_b, mut mass_b) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for k in 0..sol.rows - 1 {
            for i in 0..n {
                let dm = sol.weights[i] * sol.tau * sol.h;
                let tn = k as f64 * sol.tau;
                let xn = (i as f64 + 0.5) * sol.h;
                let (tc, xc) = (tn + sol.tau / 2.0, xn + sol.h / 2.0);
                let g = sol.gradient(k, i);
                let g2 = g[0].norm_sqr() + g[1].norm_sqr();
                if ball.scaled_contains(alpha, tc, xc) {
                    grad_a += g2 * dm;
                    mass_a += dm;
                }
                if ball.scaled_contains(beta, tc, xc) {
                    gp_b += g2.powf(p / 2.0) * dm;
                    mass_b += dm;
                }
                if ball.scaled_contains(beta, tn, xn) {
                    u_b += sol.at(k, i).norm_sqr() * dm;
                }
            }
        }
        let cacc = if u_b > 0.0 { ball.r * ball.r * grad_a / u_b } else if grad_a == 0.0 { 0.0 } else { f64::INFINITY };
        let rh = if gp_b > 0.0 { (grad_a / mass_a).sqrt() / (gp_b / mass_b).powf(1.0 / p) } else { 0.0 };
        report.caccioppoli = report.caccioppoli.max(cacc);
        report.reverse_holder = report.reverse_holder.max(rh);
        report.per_ball.push([cacc, rh]);
    }
    Ok(report)
}

/// max over random smooth fields u and arcs B(x, r) of
/// ∫_B |Du|² dw / (∫_{2B} |BDu|² dw + r^{-2} ∫_{2B} |u|² dw).
pub fn local_coercivity(grid: &WeightedGrid, b: &CoefficientField, samples: usize, seed: u64) -> Result<f64> {
    let d = DiscreteD::new(grid)?;
    let n = grid.n();
    let h = grid.h();
    let w = grid.weights();
    let mut rng = crate::rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let mut u = smooth_probe(n, &mut rng, 8);
        u.extend(smooth_probe(n, &mut rng, 8));
        let du = d.apply(&u);
        let bdu = b.apply(&du);
        for r in [1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0] {
            for c in 0..4 {
                let x0 = (c as f64 + 0.25) / 4.0;
                let (mut lhs, mut top, mut low) = (0.0, 0.0, 0.0);
                for i in 0..n {
                    let x = (i as f64 + 0.5) * h;
                    let dx = (x - x0).rem_euclid(1.0);
                    let dist = dx.min(1.0 - dx);
                    let dm = w[i] * h;
                    let sq = |v: &[c64]| v[i].norm_sqr() + v[n + i].norm_sqr();
                    if dist < r {
                        lhs += sq(&du) * dm;
                    }
                    if dist < 2.0 * r {
                        top += sq(&bdu) * dm;
                        low += sq(&u) * dm;
                    }
                }
                worst = worst.max(lhs / (top + low / (r * r)));
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(n: usize) -> WeightedGrid {
        WeightedGrid::new(&WeightModel::constant(1.0).unwrap(), n).unwrap()
    }

    #[test]
    fn identity_trace_maps_are_isometries_up_to_sqrt_two() {
        let g = flat(32);
        let maps = TraceMaps::new(&g, &CoefficientPair::from_b(CoefficientField::identity(32)).unwrap()).unwrap();
        for kind in [ProblemKind::Neumann, ProblemKind::Regularity] {
            let c = maps.conditioning(kind).unwrap();
            assert!((c.sigma_min - 0.5f64.sqrt()).abs() < 1e-9, "{kind:?} {c:?}");
            assert!((c.sigma_max - 0.5f64.sqrt()).abs() < 1e-9);
        }
        assert!(maps.conditioning(ProblemKind::Dirichlet).unwrap().sigma_min > 0.0);
    }

    #[test]
    fn dirichlet_semigroup_matches_harmonic_extension() {
        use std::f64::consts::PI;
        let n = 64;
        let g = flat(n);
        let maps = TraceMaps::new(&g, &CoefficientPair::from_b(CoefficientField::identity(n)).unwrap()).unwrap();
        let phi: Vec<c64> = g.points().iter().map(|x| c64::new((2.0 * PI * x).sin(), 0.0)).collect();
        let tg = TGrid::for_grid(&g);
        let sol = solve_tindep(&maps, ProblemKind::Dirichlet, &phi, &tg).unwrap();
        assert!(sol.report.datum_residual < 1e-10);
        assert!(sol.report.conjugate_defect < 1e-10);
        // the discrete harmonic extension of sin 2πx decays like e^{-μt},
        // μ² the eigenvalue of the discrete Laplacian
        let mu = 2.0 * (PI / n as f64).sin() * n as f64;
        for (j, t) in tg.ts().into_iter().enumerate() {
            let want: Vec<c64> = phi.iter().map(|p| p * (-mu * t).exp()).collect();
            let err = g.norm(&[linalg::sub(&sol.u[j], &want), vec![ZERO; n]].concat());
            assert!(err < 1e-9, "t = {t}: {err}");
        }
    }

    #[test]
    fn neumann_rejects_constant_datum() {
        let g = flat(16);
        let maps = TraceMaps::new(&g, &CoefficientPair::from_b(CoefficientField::identity(16)).unwrap()).unwrap();
        let err = solve_tindep(&maps, ProblemKind::Neumann, &vec![ONE; 16], &TGrid::for_grid(&g)).unwrap_err();
        assert!(matches!(err, Error::IncompatibleDatum(_)));
        let fd = fd_reference_solve(&g, &CoefficientField::identity(16), ProblemKind::Neumann, &vec![ONE; 16], StripParams { tmax: 1.0, tau: 0.1 });
        assert!(matches!(fd, Err(Error::IncompatibleDatum(_))));
    }

    #[test]
    fn rellich_identity_for_identity_coefficients() {
        let g = flat(32);
        let pair = CoefficientPair::from_b(CoefficientField::identity(32)).unwrap();
        let maps = TraceMaps::new(&g, &pair).unwrap();
        let mut rng = crate::rng(4);
        let x = linalg::random_vector(&mut rng, 64);
        let f = maps.calculus().apply(Func::ChiPlus, &x).unwrap();
        let r = rellich_residual(&pair, &g, &f).unwrap();
        assert!(r.perp < 1e-10 && r.par < 1e-10, "{r:?}");
        assert!(r.coercive <= r.upper + 1e-12);
    }

    #[test]
    fn zero_discrepancy_gives_zero_operators() {
        let n = 16;
        let g = flat(n);
        let d = DiscreteD::new(&g).unwrap();
        let b = CoefficientField::identity(n);
        let db = SpectralCalculus::new(&d, &b, Composition::DB).unwrap();
        let bd = SpectralCalculus::new(&d, &b, Composition::BD).unwrap();
        let tg = TGrid::for_grid(&g);
        let mut rng = crate::rng(1);
        let f = UpperHalfField::from_fn(tg.clone(), n, |_, _| linalg::random_vector(&mut rng, 2 * n));
        let r = se_apply(&db, &bd, &DiscrepancyField::zero(tg.clone(), n), &f).unwrap();
        assert!(r.s.data.iter().all(|v| *v == ZERO));
        assert!(r.h_minus.iter().all(|v| *v == ZERO));
        let other = TGrid::new(2, -3, 1).unwrap();
        assert!(matches!(se_apply(&db, &bd, &DiscrepancyField::zero(other, n), &f), Err(Error::TGridMismatch(_))));
    }

    #[test]
    fn octave_averages_separate_traces_from_y_star_fields() {
        let n = 16;
        let g = flat(n);
        let tg = TGrid::for_grid(&g);
        let mut rng = crate::rng(2);
        let h = linalg::random_vector(&mut rng, 2 * n);
        let decaying = UpperHalfField::from_fn(tg.clone(), n, |_, t| h.iter().map(|v| v * t.powf(0.25)).collect());
        let a = octave_averages(&g, &decaying, None, 4);
        assert!(a.windows(2).all(|p| p[1] > p[0]), "{a:?}");
        let constant = UpperHalfField::from_fn(tg, n, |_, _| h.clone());
        assert!(octave_averages(&g, &constant, Some(&h), 4).iter().all(|v| *v < 1e-12));
    }

    #[test]
    fn constant_solution_has_no_caccioppoli_energy() {
        let sol = MeshSolution { n: 16, h: 1.0 / 16.0, tau: 0.1, rows: 21, weights: vec![1.0; 16], u: vec![ONE; 16 * 21] };
        let balls = interior_balls(&sol, 4);
        let r = interior_checks(&sol, &balls, 0.5, 0.9, 1.5).unwrap();
        assert_eq!(r.caccioppoli, 0.0);
    }
}
