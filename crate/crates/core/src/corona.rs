//! Stopping-time constructions: the corona decomposition of a weight by the
//! oscillation of ln w, sawtooth regions, and the test-function stopping
//! times built from the resolvents of DB.

use serde::{Deserialize, Serialize};

use crate::dyadic::{DyadicCube, TGrid};
use crate::grid::WeightedGrid;
use crate::operators::{least_squares_slope, Func, SpectralCalculus};
use crate::weights::WeightModel;
use crate::{c64, Error, Result};

/// A stopping cube together with the cube it stopped from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stop {
    pub cube: DyadicCube,
    pub parent: DyadicCube,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoronaDecomposition {
    pub root: DyadicCube,
    pub sigma_w: f64,
    pub max_depth: u32,
    /// generations[j] is B^w_{j+1}(root).
    pub generations: Vec<Vec<Stop>>,
    pub packing_ratio: f64,
}

/// Per-cube quantity used by the decomposition, so that the same stopping
/// rule runs on a weight model and on grid samples.
trait LogMeans {
    fn log_mean(&self, q: DyadicCube) -> Result<f64>;
    fn mass(&self, q: DyadicCube) -> Result<f64>;
}

impl LogMeans for WeightModel {
    fn log_mean(&self, q: DyadicCube) -> Result<f64> {
        WeightModel::log_mean(self, q)
    }
    fn mass(&self, q: DyadicCube) -> Result<f64> {
        WeightModel::mass(self, q)
    }
}

impl LogMeans for WeightedGrid {
    fn log_mean(&self, q: DyadicCube) -> Result<f64> {
        let cells = q.cells(self.n());
        if cells.is_empty() {
            return Err(Error::ResolutionTooCoarse { points: 0 });
        }
        let len = cells.len() as f64;
        Ok(cells.map(|i| self.weights()[i].ln()).sum::<f64>() / len)
    }
    fn mass(&self, q: DyadicCube) -> Result<f64> {
        let cells = q.cells(self.n());
        if cells.is_empty() {
            return Err(Error::ResolutionTooCoarse { points: 0 });
        }
        Ok(cells.map(|i| self.weights()[i]).sum::<f64>() * self.h())
    }
}

/// B^w(Q): maximal R ⊊ Q of level ≤ max_depth with |(ln w)_R - (ln w)_Q| > σ_w.
fn stopping_children<W: LogMeans>(w: &W, q: DyadicCube, sigma_w: f64, max_depth: u32) -> Result<Vec<DyadicCube>> {
    let base = w.log_mean(q)?;
    let mut out = Vec::new();
    let mut stack: Vec<DyadicCube> = if q.level < max_depth { q.children().into_iter().rev().collect() } else { vec![] };
    while let Some(r) = stack.pop() {
        if (w.log_mean(r)? - base).abs() > sigma_w {
            out.push(r);
        } else if r.level < max_depth {
            stack.extend(r.children().into_iter().rev());
        }
    }
    Ok(out)
}

fn decompose<W: LogMeans>(w: &W, root: DyadicCube, sigma_w: f64, max_depth: u32) -> Result<CoronaDecomposition> {
    if !(sigma_w > 0.0) {
        return Err(Error::InvalidParameter("sigma_w must be positive".into()));
    }
    let mut generations: Vec<Vec<Stop>> = Vec::new();
    let mut current = vec![root];
    let mut stopped_mass = 0.0;
    while !current.is_empty() {
        let mut next = Vec::new();
        for &q in &current {
            for r in stopping_children(w, q, sigma_w, max_depth)? {
                stopped_mass += w.mass(r)?;
                next.push(Stop { cube: r, parent: q });
            }
        }
        if next.is_empty() {
            break;
        }
        current = next.iter().map(|s| s.cube).collect();
        generations.push(next);
    }
    Ok(CoronaDecomposition {
        root,
        sigma_w,
        max_depth,
        generations,
        packing_ratio: stopped_mass / w.mass(root)?,
    })
}

/// Iterated stopping times of the weight model below `root`.
pub fn corona_decompose(w: &WeightModel, root: DyadicCube, sigma_w: f64, max_depth: u32) -> Result<CoronaDecomposition> {
    if max_depth > w.depth() && w.construction_depth().is_some() {
        return Err(Error::DepthExceeded { level: max_depth, depth: w.depth() });
    }
    decompose(w, root, sigma_w, max_depth)
}

/// The same construction on grid samples, down to the cell level.
pub fn corona_decompose_grid(grid: &WeightedGrid, root: DyadicCube, sigma_w: f64) -> Result<CoronaDecomposition> {
    decompose(grid, root, sigma_w, grid.level())
}

#[derive(Serialize)]
struct TreeNode {
    cube: [u64; 2],
    generation: usize,
    children: Vec<TreeNode>,
}

impl CoronaDecomposition {
    /// B^w_*(root): all stopping cubes of every generation.
    pub fn all_stops(&self) -> impl Iterator<Item = &Stop> {
        self.generations.iter().flatten()
    }

    /// B^w(q) for a member q of the family (or the root).
    pub fn stopping_family(&self, q: DyadicCube) -> Vec<DyadicCube> {
        self.all_stops().filter(|s| s.parent == q).map(|s| s.cube).collect()
    }

    /// The root and every stopping cube.
    pub fn members(&self) -> Vec<DyadicCube> {
        std::iter::once(self.root).chain(self.all_stops().map(|s| s.cube)).collect()
    }

    /// Largest violation of the stopping rules, checked exhaustively over
    /// every cube of level ≤ max_depth below the root: maximality of each
    /// stop, and the oscillation bound on every cube under a member that lies
    /// in none of the member's stopping cubes. Zero when the decomposition is
    /// consistent.
    pub fn verify(&self, w: &WeightModel) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for gen in &self.generations {
            for (a, sa) in gen.iter().enumerate() {
                for sb in &gen[a + 1..] {
                    if sa.cube.contains(&sb.cube) || sb.cube.contains(&sa.cube) {
                        return Ok(f64::INFINITY);
                    }
                }
            }
        }
        for q in self.members() {
            let base = w.log_mean(q)?;
            let stops = self.stopping_family(q);
            for s in &stops {
                let gap = (w.log_mean(*s)? - base).abs();
                worst = worst.max((self.sigma_w - gap).max(0.0));
                if let Some(p) = s.parent().filter(|p| *p != q) {
                    worst = worst.max(((w.log_mean(p)? - base).abs() - self.sigma_w).max(0.0));
                }
            }
            for level in q.level + 1..=self.max_depth {
                for r in q.descendants(level) {
                    if stops.iter().any(|s| s.contains(&r)) {
                        continue;
                    }
                    worst = worst.max(((w.log_mean(r)? - base).abs() - self.sigma_w).max(0.0));
                }
            }
        }
        Ok(worst)
    }

    /// Tree dump {cube: [d, k], generation, children}.
    pub fn to_json_tree(&self) -> serde_json::Value {
        fn build(d: &CoronaDecomposition, q: DyadicCube, generation: usize) -> TreeNode {
            TreeNode {
                cube: [q.level as u64, q.index],
                generation,
                children: d.stopping_family(q).into_iter().map(|r| build(d, r, generation + 1)).collect(),
            }
        }
        serde_json::to_value(build(self, self.root, 0)).expect("tree serializes")
    }

    /// S(b)² = Σ_{R ∈ B^w_*} 1_R |b_R - b_{R'}|² with dx-means of the grid
    /// function b.
    pub fn square_function_sq(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = b.len();
        let mean = |q: DyadicCube| -> Result<f64> {
            let cells = q.cells(n);
            if cells.is_empty() {
                return Err(Error::ResolutionTooCoarse { points: 0 });
            }
            let len = cells.len() as f64;
            Ok(cells.map(|i| b[i]).sum::<f64>() / len)
        };
        let mut s = vec![0.0; n];
        for stop in self.all_stops() {
            let g = mean(stop.cube)? - mean(stop.parent)?;
            for i in stop.cube.cells(n) {
                s[i] += g * g;
            }
        }
        Ok(s)
    }

    /// Ω^w(q) for q in the family.
    pub fn sawtooth(&self, q: DyadicCube) -> Sawtooth {
        Sawtooth { root: q, excluded: self.stopping_family(q) }
    }
}

/// ∫_Q |ln w - (ln w)_Q|² dw / w(Q) on grid samples.
pub fn log_bmo_ratio(grid: &WeightedGrid, q: DyadicCube) -> f64 {
    let w = grid.weights();
    let cells = q.cells(grid.n());
    let len = cells.len() as f64;
    let m = cells.clone().map(|i| w[i].ln()).sum::<f64>() / len;
    let mass: f64 = cells.clone().map(|i| w[i]).sum();
    cells.map(|i| (w[i].ln() - m).powi(2) * w[i]).sum::<f64>() / mass
}

/// Carleson box of the root minus the Carleson boxes of the excluded cubes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Sawtooth {
    pub root: DyadicCube,
    pub excluded: Vec<DyadicCube>,
}

/// Whether mesh cell (t-cell j, grid cell i) lies in the Carleson box of q.
pub fn in_box(tgrid: &TGrid, n: usize, q: DyadicCube, j: usize, i: usize) -> bool {
    j < tgrid.box_cells(q.level) && q.cells(n).contains(&i)
}

impl Sawtooth {
    pub fn contains(&self, tgrid: &TGrid, n: usize, j: usize, i: usize) -> bool {
        in_box(tgrid, n, self.root, j, i) && !self.excluded.iter().any(|r| in_box(tgrid, n, *r, j, i))
    }

    /// Mesh cells (j, i) of the region.
    pub fn cells(&self, tgrid: &TGrid, n: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for j in 0..tgrid.box_cells(self.root.level) {
            for i in self.root.cells(n) {
                if self.contains(tgrid, n, j, i) {
                    out.push((j, i));
                }
            }
        }
        out
    }
}

/// Box count of a family of regions against the Carleson box of `root`:
/// (cells covered twice or more, cells of the box not covered, cells
/// outside the box that are covered).
pub fn tiling_defect(tgrid: &TGrid, n: usize, root: DyadicCube, regions: &[Sawtooth]) -> (usize, usize, usize) {
    let mut count = vec![0u32; tgrid.len() * n];
    for r in regions {
        for (j, i) in r.cells(tgrid, n) {
            count[j * n + i] += 1;
        }
    }
    let (mut over, mut gaps, mut outside) = (0, 0, 0);
    for j in 0..tgrid.len() {
        for i in 0..n {
            let c = count[j * n + i];
            if in_box(tgrid, n, root, j, i) {
                if c == 0 {
                    gaps += 1;
                } else if c > 1 {
                    over += 1;
                }
            } else if c > 0 {
                outside += 1;
            }
        }
    }
    (over, gaps, outside)
}

/// E_Q of a field: dw-average of the ⊥ part and dx-average of the ∥ part,
/// down to single cells.
pub fn mixed_average(grid: &WeightedGrid, f: &[c64], q: DyadicCube) -> Result<[c64; 2]> {
    let n = grid.n();
    let cells = q.cells(n);
    if cells.is_empty() {
        return Err(Error::ResolutionTooCoarse { points: 0 });
    }
    let w = grid.weights();
    let mass: f64 = cells.clone().map(|i| w[i]).sum();
    let a: c64 = cells.clone().map(|i| f[i] * w[i]).sum::<c64>() / mass;
    let b: c64 = cells.clone().map(|i| f[n + i]).sum::<c64>() / cells.len() as f64;
    Ok([a, b])
}

/// w_Q = ⨍_Q w dx and (ln w)_Q on grid samples.
fn grid_means(grid: &WeightedGrid, q: DyadicCube) -> (f64, f64) {
    let w = grid.weights();
    let cells = q.cells(grid.n());
    let len = cells.len() as f64;
    (cells.clone().map(|i| w[i]).sum::<f64>() / len, cells.map(|i| w[i].ln()).sum::<f64>() / len)
}

/// Largest reverse-Jensen gap ln(w_Q) - (ln w)_Q over the dyadic arcs the
/// grid resolves.
pub fn grid_c0(grid: &WeightedGrid) -> f64 {
    DyadicCube::all_to_depth(grid.level())
        .map(|q| {
            let (m, l) = grid_means(grid, q);
            m.ln() - l
        })
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug)]
pub struct TestFunction {
    pub cube: DyadicCube,
    pub xi: [c64; 2],
    pub sigma3: f64,
    /// P_t(1_Q ξ) at t = σ₃ℓ(Q).
    pub f: Vec<c64>,
    /// t DB f at the same t.
    pub aux: Vec<c64>,
    /// ‖f‖² / w(Q) and ‖aux‖² / w(Q).
    pub f_ratio: f64,
    pub aux_ratio: f64,
    /// |E_Q f - ξ|.
    pub gap: f64,
}

/// f = P^B_t(1_Q ξ) with t = σ₃ℓ(Q), for the DB calculus.
pub fn test_function(calc: &SpectralCalculus, q1: DyadicCube, xi: [c64; 2], sigma3: f64) -> Result<TestFunction> {
    if !(sigma3 > 0.0) {
        return Err(Error::InvalidParameter("sigma3 must be positive".into()));
    }
    let grid = calc.grid();
    let n = grid.n();
    let cells = q1.cells(n);
    if cells.len() < 2 {
        return Err(Error::ResolutionTooCoarse { points: cells.len() });
    }
    let t = sigma3 * q1.length();
    let mut datum = vec![c64::new(0.0, 0.0); 2 * n];
    for i in cells.clone() {
        datum[i] = xi[0];
        datum[n + i] = xi[1];
    }
    let f = calc.apply(Func::P(t), &datum)?;
    let aux: Vec<c64> = calc.apply_operator(&f).into_iter().map(|v| v * t).collect();
    let mass: f64 = cells.map(|i| grid.weights()[i]).sum::<f64>() * grid.h();
    let e = mixed_average(grid, &f, q1)?;
    let gap = ((e[0] - xi[0]).norm_sqr() + (e[1] - xi[1]).norm_sqr()).sqrt();
    Ok(TestFunction {
        cube: q1,
        xi,
        sigma3,
        f_ratio: grid.norm(&f).powi(2) / mass,
        aux_ratio: grid.norm(&aux).powi(2) / mass,
        f,
        aux,
        gap,
    })
}

/// Fitted δ in gap ≈ c σ₃^δ.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GapFit {
    pub sigma3: Vec<f64>,
    pub gaps: Vec<f64>,
    pub delta: f64,
    pub c: f64,
}

pub fn gap_fit(calc: &SpectralCalculus, q1: DyadicCube, xi: [c64; 2], sigma3: &[f64]) -> Result<GapFit> {
    let mut gaps = Vec::with_capacity(sigma3.len());
    for &s in sigma3 {
        gaps.push(test_function(calc, q1, xi, s)?.gap);
    }
    let xs: Vec<f64> = sigma3.iter().map(|s| s.ln()).collect();
    let ys: Vec<f64> = gaps.iter().map(|g| g.max(1e-300).ln()).collect();
    let delta = least_squares_slope(&xs, &ys);
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    Ok(GapFit { sigma3: sigma3.to_vec(), gaps, delta, c: (my - delta * mx).exp() })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoppingParams {
    pub sigma_w: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub sigma3: f64,
    pub sigma4: f64,
    pub sigma5: f64,
    pub sigma6: f64,
    pub delta: f64,
}

impl StoppingParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.sigma_w, self.sigma1, self.sigma2, self.sigma3, self.sigma4, self.sigma5, self.sigma6, self.delta];
        if all.iter().any(|v| !(*v > 0.0) || !v.is_finite()) || self.sigma6 > 1.0 {
            return Err(Error::InvalidParameter("stopping parameters must be positive with sigma6 <= 1".into()));
        }
        Ok(())
    }
}

/// S^τ_{Q₁} = diag(w_{Q₁} e^{-τ-(ln w)_{Q₁}}, 1), returned as its ⊥ entry.
pub fn s_tau(grid: &WeightedGrid, q1: DyadicCube, tau: f64) -> f64 {
    let (m, l) = grid_means(grid, q1);
    m * (-tau - l).exp()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StoppingResult {
    pub bad: Vec<DyadicCube>,
    pub sawtooth: Sawtooth,
    /// Σ w(Q') / w(Q₁) over the bad cubes.
    pub ratio: f64,
    pub feasible: bool,
}

/// Maximal Q' ⊆ Q₁ with |E_{Q'} f| > 1/σ₄ or
/// Re(S^τ ξ, diag(w_{Q'}/w_{Q₁}, 1) E_{Q'} f) < σ₅, scanned top-down to the
/// cell level.
pub fn stopping_tau_xi(grid: &WeightedGrid, tf: &TestFunction, tau: f64, params: &StoppingParams) -> Result<StoppingResult> {
    params.validate()?;
    let q1 = tf.cube;
    let (w1, _) = grid_means(grid, q1);
    let s = s_tau(grid, q1, tau);
    let sx = [tf.xi[0] * s, tf.xi[1]];
    let is_bad = |q: DyadicCube| -> Result<bool> {
        let e = mixed_average(grid, &tf.f, q)?;
        let size = (e[0].norm_sqr() + e[1].norm_sqr()).sqrt();
        let (wq, _) = grid_means(grid, q);
        let pairing = (sx[0] * (e[0] * (wq / w1)).conj() + sx[1] * e[1].conj()).re;
        Ok(size > 1.0 / params.sigma4 || pairing < params.sigma5)
    };
    let mut bad = Vec::new();
    let mut stack = vec![q1];
    while let Some(q) = stack.pop() {
        if is_bad(q)? {
            bad.push(q);
        } else if q.level < grid.level() {
            stack.extend(q.children().into_iter().rev());
        }
    }
    bad.sort();
    let mass = |q: DyadicCube| -> f64 { q.cells(grid.n()).map(|i| grid.weights()[i]).sum() };
    let ratio = bad.iter().map(|q| mass(*q)).sum::<f64>() / mass(q1);
    Ok(StoppingResult {
        sawtooth: Sawtooth { root: q1, excluded: bad.clone() },
        bad,
        ratio,
        feasible: ratio <= 1.0 - params.sigma6,
    })
}

/// Unit vectors ξ ∈ C² used for the ensembles.
pub fn random_unit_xi(rng: &mut crate::Rng) -> [c64; 2] {
    let v = crate::linalg::random_vector(rng, 2);
    let n = crate::linalg::norm(&v);
    [v[0] / n, v[1] / n]
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Calibration {
    pub params: StoppingParams,
    pub c0: f64,
    /// Largest gap and bad-mass ratio over the calibration runs.
    pub max_gap: f64,
    pub max_ratio: f64,
}

/// Chooses σ₃, then σ₅ and σ₄, then σ₆ for one calculus, following the
/// dependency order of the stopping argument. σ₃ is the largest power-of-two
/// fraction of 0.2 whose gap meets e^{-2c₀}/2 on every sampled (Q₁, ξ); σ₅
/// and σ₄ are halved from e^{-c₀} and 1/(4 sup ‖f‖) until the worst bad-mass
/// ratio over τ ∈ {0, c₀} is at most 1/2; σ₆ is half the remaining margin.
pub fn calibrate(calc: &SpectralCalculus, samples: usize, seed: u64) -> Result<Calibration> {
    let grid = calc.grid();
    let c0 = grid_c0(grid);
    let mut rng = crate::rng(seed);
    let top = grid.level().saturating_sub(3).clamp(1, 3);
    let cases: Vec<(DyadicCube, [c64; 2])> = (0..samples)
        .map(|_| {
            use rand::Rng as _;
            let level = rng.gen_range(0..=top);
            let q = DyadicCube::new(level, rng.gen_range(0..1u64 << level));
            (q, random_unit_xi(&mut rng))
        })
        .collect();
    let target = (-2.0 * c0).exp() / 2.0;
    let mut sigma3 = 0.2;
    let tfs = loop {
        let tfs: Vec<TestFunction> =
            cases.iter().map(|(q, xi)| test_function(calc, *q, *xi, sigma3)).collect::<Result<_>>()?;
        if tfs.iter().all(|t| t.gap <= target) || sigma3 < 1e-4 {
            break tfs;
        }
        sigma3 /= 2.0;
    };
    let max_gap = tfs.iter().map(|t| t.gap).fold(0.0, f64::max);
    let sup_f = tfs.iter().map(|t| t.f.iter().map(|v| v.norm()).fold(0.0, f64::max)).fold(0.0, f64::max);
    let mut params = StoppingParams {
        sigma_w: 0.25,
        sigma1: 1.0,
        sigma2: 1.0,
        sigma3,
        sigma4: 1.0 / (4.0 * sup_f.max(1.0)),
        sigma5: (-c0).exp(),
        sigma6: 1.0,
        delta: 1.0,
    };
    let worst = |p: &StoppingParams| -> Result<f64> {
        let mut r: f64 = 0.0;
        for tf in &tfs {
            for tau in [0.0, c0] {
                r = r.max(stopping_tau_xi(grid, tf, tau, p)?.ratio);
            }
        }
        Ok(r)
    };
    let mut max_ratio = worst(&params)?;
    for _ in 0..40 {
        if max_ratio <= 0.5 {
            break;
        }
        params.sigma5 /= 2.0;
        params.sigma4 /= 2.0;
        max_ratio = worst(&params)?;
    }
    params.sigma6 = ((1.0 - max_ratio) / 2.0).max(1e-3);
    Ok(Calibration { params, c0, max_gap, max_ratio })
}

/// Total mass of each generation of the iterated stopping time, relative to
/// w(Q₀); generation j restarts the construction on every bad cube of
/// generation j - 1 with a fresh test function.
pub fn iterated_stopping(
    calc: &SpectralCalculus,
    q0: DyadicCube,
    xi: [c64; 2],
    tau: f64,
    params: &StoppingParams,
    generations: usize,
) -> Result<Vec<f64>> {
    let grid = calc.grid();
    let mass = |q: DyadicCube| -> f64 { q.cells(grid.n()).map(|i| grid.weights()[i]).sum() };
    let total = mass(q0);
    let mut current = vec![q0];
    let mut out = Vec::new();
    for _ in 0..generations {
        let mut next = Vec::new();
        for q in current {
            if q.cells(grid.n()).len() < 2 {
                continue;
            }
            let tf = test_function(calc, q, xi, params.sigma3)?;
            next.extend(stopping_tau_xi(grid, &tf, tau, params)?.bad);
        }
        out.push(next.iter().map(|q| mass(*q)).sum::<f64>() / total);
        current = next;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::CoefficientField;
    use crate::operators::{Composition, DiscreteD};
    use crate::weights::random_dyadic_weight;

    #[test]
    fn constant_weight_has_empty_decomposition() {
        let w = WeightModel::constant(1.0).unwrap();
        let d = corona_decompose(&w, DyadicCube::root(), 0.1, 8).unwrap();
        assert!(d.generations.is_empty());
        assert_eq!(d.packing_ratio, 0.0);
        let s = d.square_function_sq(&[1.0; 64]).unwrap();
        assert!(s.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn random_decomposition_is_consistent() {
        let w = random_dyadic_weight(4, 8, 0.5).unwrap();
        let d = corona_decompose(&w, DyadicCube::root(), 0.25, 8).unwrap();
        assert!(!d.generations.is_empty());
        assert_eq!(d.verify(&w).unwrap(), 0.0);
    }

    #[test]
    fn single_stop_square_function() {
        // ln w = 0 on the left half and g on the right half
        let g: f64 = 0.8;
        let d = CoronaDecomposition {
            root: DyadicCube::root(),
            sigma_w: 0.1,
            max_depth: 1,
            generations: vec![vec![Stop { cube: DyadicCube::new(1, 1), parent: DyadicCube::root() }]],
            packing_ratio: 0.0,
        };
        let b: Vec<f64> = (0..8).map(|i| if i < 4 { 0.0 } else { g }).collect();
        let s = d.square_function_sq(&b).unwrap();
        for i in 0..8 {
            let expect = if i < 4 { 0.0 } else { (g / 2.0).powi(2) };
            assert!((s[i] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn sawteeth_tile_the_root_box() {
        let w = random_dyadic_weight(2, 6, 0.5).unwrap();
        let grid = WeightedGrid::new(&w, 64).unwrap();
        let d = corona_decompose_grid(&grid, DyadicCube::root(), 0.2).unwrap();
        let tg = TGrid::for_grid(&grid);
        let regions: Vec<Sawtooth> = d.members().into_iter().map(|q| d.sawtooth(q)).collect();
        assert_eq!(tiling_defect(&tg, 64, DyadicCube::root(), &regions), (0, 0, 0));
    }

    #[test]
    fn identity_test_function_converges() {
        let grid = WeightedGrid::new(&WeightModel::constant(1.0).unwrap(), 64).unwrap();
        let d = DiscreteD::new(&grid).unwrap();
        let calc = SpectralCalculus::new(&d, &CoefficientField::identity(64), Composition::DB).unwrap();
        let xi = [c64::new(0.6, 0.0), c64::new(0.0, 0.8)];
        let fit = gap_fit(&calc, DyadicCube::new(1, 0), xi, &[0.1, 0.05, 0.025]).unwrap();
        assert!(fit.gaps.windows(2).all(|g| g[1] < g[0]), "{fit:?}");
        assert!(fit.delta > 0.0);
        let p = StoppingParams {
            sigma_w: 0.25,
            sigma1: 1.0,
            sigma2: 1.0,
            sigma3: 0.025,
            sigma4: 0.25,
            sigma5: 0.5,
            sigma6: 0.5,
            delta: 1.0,
        };
        let tf = test_function(&calc, DyadicCube::new(1, 0), xi, 0.025).unwrap();
        let r = stopping_tau_xi(&grid, &tf, 0.0, &p).unwrap();
        assert!(r.ratio < 0.5, "{r:?}");
        let all_bad = StoppingParams { sigma5: 1e9, ..p };
        assert_eq!(stopping_tau_xi(&grid, &tf, 0.0, &all_bad).unwrap().ratio, 1.0);
    }
}
