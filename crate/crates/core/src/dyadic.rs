//! Dyadic arcs, the mixed averaging operator `E_t`, Whitney regions and the
//! norms on the upper half-space `(0, ∞) × [0, 1)`.
//!
//! The `t` axis is discretized by a geometric mesh with `q` cells per octave.
//! Cell edges sit at `2^(e_min + j/q)`, so every Carleson box `(0, ℓ(Q)]` and
//! every Whitney box `(ℓ(Q)/2, ℓ(Q)]` is an exact union of cells. Integrals in
//! `dt/t` use the cell centres (geometric means) with weight `ln 2 / q`.

use serde::{Deserialize, Serialize};

use crate::c64;
use crate::grid::WeightedGrid;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicCube {
    pub level: u32,
    pub index: u64,
}

impl DyadicCube {
    pub fn new(level: u32, index: u64) -> Self {
        debug_assert!(index < 1u64 << level, "index {index} out of range at level {level}");
        DyadicCube { level, index }
    }

    pub fn root() -> Self {
        DyadicCube { level: 0, index: 0 }
    }

    /// ℓ(Q) = |Q| = 2^{-level}.
    pub fn length(&self) -> f64 {
        (-(self.level as f64)).exp2()
    }

    pub fn interval(&self) -> (f64, f64) {
        let l = self.length();
        (self.index as f64 * l, (self.index + 1) as f64 * l)
    }

    pub fn parent(&self) -> Option<Self> {
        (self.level > 0).then(|| DyadicCube { level: self.level - 1, index: self.index / 2 })
    }

    pub fn children(&self) -> [Self; 2] {
        let level = self.level + 1;
        [
            DyadicCube { level, index: 2 * self.index },
            DyadicCube { level, index: 2 * self.index + 1 },
        ]
    }

    /// Whether `other` ⊆ `self`.
    pub fn contains(&self, other: &DyadicCube) -> bool {
        other.level >= self.level && other.index >> (other.level - self.level) == self.index
    }

    /// Descendants of `self` at an absolute `level ≥ self.level`.
    pub fn descendants(&self, level: u32) -> impl Iterator<Item = DyadicCube> {
        let shift = level - self.level;
        let start = self.index << shift;
        (start..start + (1u64 << shift)).map(move |index| DyadicCube { level, index })
    }

    /// All cubes of level 0..=depth, coarse to fine.
    pub fn all_to_depth(depth: u32) -> impl Iterator<Item = DyadicCube> {
        (0..=depth).flat_map(|level| (0..1u64 << level).map(move |index| DyadicCube { level, index }))
    }

    /// Grid cells covered by `self` on an N-point grid; empty if the cube is
    /// finer than a cell.
    pub fn cells(&self, n: usize) -> std::ops::Range<usize> {
        let per = n >> self.level.min(63);
        if per == 0 {
            return 0..0;
        }
        let start = self.index as usize * per;
        start..start + per
    }

    pub fn containing(level: u32, x: f64) -> Self {
        let k = (x.rem_euclid(1.0) * (1u64 << level) as f64) as u64;
        DyadicCube { level, index: k.min((1u64 << level) - 1) }
    }
}

/// Δ_t: the level d with t ∈ (2^{-d-1}, 2^{-d}]; scales above 1 map to 0.
pub fn level_for_t(t: f64) -> u32 {
    assert!(t > 0.0, "scale must be positive");
    let d = (-t.log2()).floor();
    if d <= 0.0 {
        0
    } else {
        d as u32
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Measure {
    Dx,
    Dw,
}

/// Average of a scalar grid function over Q against dx or dw.
pub fn average(grid: &WeightedGrid, f: &[c64], q: DyadicCube, measure: Measure) -> Result<c64> {
    let cells = q.cells(grid.n());
    if cells.len() < 2 {
        return Err(Error::ResolutionTooCoarse { points: cells.len() });
    }
    Ok(average_cells(grid, f, cells, measure))
}

fn average_cells(grid: &WeightedGrid, f: &[c64], cells: std::ops::Range<usize>, measure: Measure) -> c64 {
    let w = grid.weights();
    let mut num = c64::new(0.0, 0.0);
    let mut den = 0.0;
    for i in cells {
        let m = match measure {
            Measure::Dx => 1.0,
            Measure::Dw => w[i],
        };
        num += f[i] * m;
        den += m;
    }
    num / den
}

/// E_t: on each Q ∈ Δ_t the ⊥ part is replaced by its dw-average and the ∥
/// part by its dx-average. Scales finer than a cell act as the identity.
pub fn et_apply(grid: &WeightedGrid, u: &[c64], t: f64) -> Vec<c64> {
    let n = grid.n();
    let level = level_for_t(t).min(grid.level());
    let mut out = vec![c64::new(0.0, 0.0); 2 * n];
    for index in 0..1u64 << level {
        let cells = DyadicCube::new(level, index).cells(n);
        let a = average_cells(grid, &u[..n], cells.clone(), Measure::Dw);
        let b = average_cells(grid, &u[n..], cells.clone(), Measure::Dx);
        for i in cells {
            out[i] = a;
            out[n + i] = b;
        }
    }
    out
}

/// Geometric mesh of the t axis with `q` cells per octave covering
/// [2^e_min, 2^e_max].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TGrid {
    q: u32,
    e_min: i32,
    e_max: i32,
}

impl TGrid {
    pub fn new(q: u32, e_min: i32, e_max: i32) -> Result<Self> {
        if q == 0 || e_max <= e_min {
            return Err(Error::InvalidParameter(format!("bad t-grid q={q} [{e_min}, {e_max}]")));
        }
        Ok(TGrid { q, e_min, e_max })
    }

    /// Default mesh for an N-point grid: q = 4, from h/4 to 4.
    pub fn for_grid(grid: &WeightedGrid) -> Self {
        TGrid { q: 4, e_min: -(grid.level() as i32) - 2, e_max: 2 }
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn len(&self) -> usize {
        (self.q as i32 * (self.e_max - self.e_min)) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn t_min(&self) -> f64 {
        (self.e_min as f64).exp2()
    }

    pub fn t_max(&self) -> f64 {
        (self.e_max as f64).exp2()
    }

    fn edge(&self, j: usize) -> f64 {
        (self.e_min as f64 + j as f64 / self.q as f64).exp2()
    }

    pub fn lower(&self, j: usize) -> f64 {
        self.edge(j)
    }

    pub fn upper(&self, j: usize) -> f64 {
        self.edge(j + 1)
    }

    /// Cell centre (geometric mean of the edges).
    pub fn t(&self, j: usize) -> f64 {
        (self.e_min as f64 + (j as f64 + 0.5) / self.q as f64).exp2()
    }

    pub fn ts(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.t(j)).collect()
    }

    /// Quadrature weight of every cell for dt/t.
    pub fn dlog(&self) -> f64 {
        std::f64::consts::LN_2 / self.q as f64
    }

    /// Cell length, the quadrature weight for dt.
    pub fn ds(&self, j: usize) -> f64 {
        self.upper(j) - self.lower(j)
    }

    /// Number of leading cells inside the Carleson box of a level-d cube.
    pub fn box_cells(&self, level: u32) -> usize {
        let k = self.q as i64 * (-(level as i64) - self.e_min as i64);
        k.clamp(0, self.len() as i64) as usize
    }

    /// Δ_t level of cell j (clamped at 0 for t > 1).
    pub fn level_of(&self, j: usize) -> u32 {
        let d = -(self.e_min as i64 + (j / self.q as usize) as i64 + 1);
        d.max(0) as u32
    }

    /// Largest r with r cells of ratio 2^{1/q} spanning less than ln c0.
    fn whitney_radius(&self, c0: f64) -> usize {
        let r = (self.q as f64 * c0.log2() - 1e-9).ceil() as i64 - 1;
        r.max(0) as usize
    }
}

/// Half-width in cells of the ball B(x, c1 t).
fn ball_radius(grid: &WeightedGrid, c1: f64, t: f64) -> usize {
    let m = (c1 * t / grid.h() - 1e-9).ceil() as i64 - 1;
    m.max(0) as usize
}

/// A two-component field on the t-mesh × x-grid, row j holding `[⊥, ∥]` at t_j.
#[derive(Clone, Debug)]
pub struct UpperHalfField {
    pub tgrid: TGrid,
    pub n: usize,
    pub data: Vec<c64>,
}

impl UpperHalfField {
    pub fn zeros(tgrid: TGrid, n: usize) -> Self {
        let len = tgrid.len() * 2 * n;
        UpperHalfField { tgrid, n, data: vec![c64::new(0.0, 0.0); len] }
    }

    pub fn from_fn(tgrid: TGrid, n: usize, mut f: impl FnMut(usize, f64) -> Vec<c64>) -> Self {
        let mut data = Vec::with_capacity(tgrid.len() * 2 * n);
        for j in 0..tgrid.len() {
            let row = f(j, tgrid.t(j));
            assert_eq!(row.len(), 2 * n);
            data.extend(row);
        }
        UpperHalfField { tgrid, n, data }
    }

    pub fn row(&self, j: usize) -> &[c64] {
        &self.data[j * 2 * self.n..(j + 1) * 2 * self.n]
    }

    pub fn row_mut(&mut self, j: usize) -> &mut [c64] {
        let n = self.n;
        &mut self.data[j * 2 * n..(j + 1) * 2 * n]
    }

    /// |f(t_j, x_i)| as a T × N array.
    pub fn magnitude(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = Vec::with_capacity(self.tgrid.len() * n);
        for j in 0..self.tgrid.len() {
            let r = self.row(j);
            out.extend((0..n).map(|i| (r[i].norm_sqr() + r[n + i].norm_sqr()).sqrt()));
        }
        out
    }

    /// ∫_0^∞ ‖f_t‖² dt/t.
    pub fn y_star_norm_sq(&self, grid: &WeightedGrid) -> f64 {
        let d = self.tgrid.dlog();
        (0..self.tgrid.len()).map(|j| d * grid.norm(self.row(j)).powi(2)).sum()
    }

    /// ∫_0^∞ ‖f_t‖² t dt.
    pub fn y_norm_sq(&self, grid: &WeightedGrid) -> f64 {
        let tg = &self.tgrid;
        (0..tg.len()).map(|j| tg.ds(j) * tg.t(j) * grid.norm(self.row(j)).powi(2)).sum()
    }

    /// sup over octaves (t, 2t] of (1/t) ∫_t^{2t} ‖f_s‖² ds.
    pub fn octave_sup(&self, grid: &WeightedGrid) -> f64 {
        let tg = &self.tgrid;
        let q = tg.q() as usize;
        let norms: Vec<f64> = (0..tg.len()).map(|j| tg.ds(j) * grid.norm(self.row(j)).powi(2)).collect();
        (0..=tg.len().saturating_sub(q))
            .map(|j| norms[j..j + q].iter().sum::<f64>() / tg.lower(j))
            .fold(0.0, f64::max)
    }
}

/// Value of a supremum over cubes with the cube attaining it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarlesonValue {
    pub value: f64,
    pub cube: DyadicCube,
}

/// sup over dyadic Q of [(1/w(Q)) ∬_{Q̂} g dw dt/t]^{1/2} for g ≥ 0 given as
/// a T × N array.
pub fn carleson_norm_dyadic(grid: &WeightedGrid, tgrid: &TGrid, g: &[f64]) -> CarlesonValue {
    let n = grid.n();
    let w = grid.weights();
    let h = grid.h();
    assert_eq!(g.len(), tgrid.len() * n);
    let mut best = CarlesonValue { value: 0.0, cube: DyadicCube::root() };
    // column sums over the leading `k` t-cells, grown as the boxes get taller
    let mut col = vec![0.0; n];
    let mut filled = 0;
    for level in (0..=grid.level()).rev() {
        let k = tgrid.box_cells(level);
        while filled < k {
            for i in 0..n {
                col[i] += tgrid.dlog() * g[filled * n + i] * w[i] * h;
            }
            filled += 1;
        }
        for index in 0..1u64 << level {
            let q = DyadicCube::new(level, index);
            let cells = q.cells(n);
            let mass: f64 = cells.clone().map(|i| w[i] * h).sum();
            let v: f64 = cells.map(|i| col[i]).sum::<f64>() / mass;
            if v.sqrt() > best.value {
                best = CarlesonValue { value: v.sqrt(), cube: q };
            }
        }
    }
    best
}

/// Default Whitney region parameters: t-extent (t/c0, c0 t), radius c1 t.
pub const WHITNEY_C0: f64 = 2.0;
pub const WHITNEY_C1: f64 = 1.0;

/// Ñ_*: sup over t of the L^q(dt dw) average of |f| over the discrete
/// Whitney region W(t, x) = (t/c0, c0 t) × B(x, c1 t).
pub fn ntmax(grid: &WeightedGrid, f: &UpperHalfField, q: u32, c0: f64, c1: f64) -> Vec<f64> {
    assert!(q == 1 || q == 2, "exponent must be 1 or 2");
    assert!(c0 > 1.0 && c1 > 0.0);
    let n = grid.n();
    let tg = &f.tgrid;
    let w = grid.weights();
    let h = grid.h();
    let mag = f.magnitude();
    let r = tg.whitney_radius(c0);
    // periodic prefix sums of |f|^q w h per row, and of w h
    let mut pre = vec![0.0; tg.len() * (n + 1)];
    for j in 0..tg.len() {
        for i in 0..n {
            let v = mag[j * n + i].powi(q as i32) * w[i] * h;
            pre[j * (n + 1) + i + 1] = pre[j * (n + 1) + i] + v;
        }
    }
    let mut wpre = vec![0.0; n + 1];
    for i in 0..n {
        wpre[i + 1] = wpre[i] + w[i] * h;
    }
    let window = |p: &[f64], i: usize, m: usize| -> f64 {
        if 2 * m + 1 >= n {
            return p[n];
        }
        let lo = i as i64 - m as i64;
        let hi = i as i64 + m as i64 + 1;
        if lo < 0 {
            p[hi as usize] + p[n] - p[(lo + n as i64) as usize]
        } else if hi > n as i64 {
            p[n] - p[lo as usize] + p[(hi - n as i64) as usize]
        } else {
            p[hi as usize] - p[lo as usize]
        }
    };
    let mut out = vec![0.0f64; n];
    for j in 0..tg.len() {
        let m = ball_radius(grid, c1, tg.t(j));
        let lo = j.saturating_sub(r);
        let hi = (j + r).min(tg.len() - 1);
        let ds_total: f64 = (lo..=hi).map(|k| tg.ds(k)).sum();
        for i in 0..n {
            let mut num = 0.0;
            for k in lo..=hi {
                num += tg.ds(k) * window(&pre[k * (n + 1)..(k + 1) * (n + 1)], i, m);
            }
            let den = ds_total * window(&wpre, i, m);
            let avg = (num / den).powf(1.0 / q as f64);
            out[i] = out[i].max(avg);
        }
    }
    out
}

/// Report of the modified Carleson norm ‖E‖_* = ‖C(W_∞(|E|²/t))‖_∞^{1/2}.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModifiedCarleson {
    pub value: f64,
    pub sup_norm: f64,
    /// Grid-aligned arc attaining the supremum: start cell and dyadic level.
    pub arc_start: usize,
    pub arc_level: u32,
}

/// ‖E‖_* for a field given by its pointwise operator norms |E(t_j, x_i)|.
/// The Carleson functional takes its supremum over all grid-aligned arcs of
/// dyadic length.
pub fn modified_carleson_norm(grid: &WeightedGrid, tgrid: &TGrid, e_abs: &[f64], c0: f64, c1: f64) -> ModifiedCarleson {
    let n = grid.n();
    let w = grid.weights();
    let h = grid.h();
    assert_eq!(e_abs.len(), tgrid.len() * n);
    let sup_norm = e_abs.iter().copied().fold(0.0, f64::max);
    let r = tgrid.whitney_radius(c0);
    let tl = tgrid.len();
    // W_∞(|E|²/t): first the sup over t-neighbours, then over the x-ball
    let scaled: Vec<f64> = (0..tl * n).map(|k| e_abs[k].powi(2) / tgrid.t(k / n)).collect();
    let mut wsup = vec![0.0; tl * n];
    for j in 0..tl {
        let lo = j.saturating_sub(r);
        let hi = (j + r).min(tl - 1);
        let tmax: Vec<f64> = (0..n)
            .map(|i| (lo..=hi).map(|k| scaled[k * n + i]).fold(0.0, f64::max))
            .collect();
        let m = ball_radius(grid, c1, tgrid.t(j)).min(n / 2);
        for i in 0..n {
            let mut v: f64 = 0.0;
            for d in 0..=2 * m {
                let idx = (i + n + d - m) % n;
                v = v.max(tmax[idx]);
            }
            wsup[j * n + i] = v;
        }
    }
    let mut best = ModifiedCarleson { value: 0.0, sup_norm, arc_start: 0, arc_level: 0 };
    let mut col = vec![0.0; n];
    let mut filled = 0;
    for level in (0..=grid.level()).rev() {
        let k = tgrid.box_cells(level);
        while filled < k {
            for i in 0..n {
                col[i] += tgrid.ds(filled) * wsup[filled * n + i] * w[i] * h;
            }
            filled += 1;
        }
        let len = n >> level;
        for start in 0..n {
            let mut num = 0.0;
            let mut mass = 0.0;
            for d in 0..len {
                let i = (start + d) % n;
                num += col[i];
                mass += w[i] * h;
            }
            let v = (num / mass).sqrt();
            if v > best.value {
                best.value = v;
                best.arc_start = start;
                best.arc_level = level;
            }
            if level == 0 {
                break;
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::WeightModel;

    fn unit_grid(n: usize) -> WeightedGrid {
        WeightedGrid::new(&WeightModel::constant(1.0).unwrap(), n).unwrap()
    }

    #[test]
    fn scale_rule() {
        assert_eq!(level_for_t(1.0), 0);
        assert_eq!(level_for_t(0.5), 1);
        assert_eq!(level_for_t(0.3), 1);
        assert_eq!(level_for_t(0.25), 2);
        assert_eq!(level_for_t(0.2501), 1);
    }

    #[test]
    fn parent_child_consistency() {
        let q = DyadicCube::new(5, 13);
        for c in q.children() {
            assert_eq!(c.parent(), Some(q));
            assert!(q.contains(&c));
        }
        assert!(!q.contains(&DyadicCube::new(6, 28)));
    }

    #[test]
    fn average_of_half_indicator() {
        let g = unit_grid(64);
        let q = DyadicCube::new(2, 1);
        let mut f = vec![c64::new(0.0, 0.0); 64];
        for i in q.cells(64).take(8) {
            f[i] = c64::new(1.0, 0.0);
        }
        assert_eq!(average(&g, &f, q, Measure::Dx).unwrap(), c64::new(0.5, 0.0));
        assert!(matches!(
            average(&g, &f, DyadicCube::new(6, 0), Measure::Dx),
            Err(Error::ResolutionTooCoarse { points: 1 })
        ));
    }

    #[test]
    fn et_of_small_indicator() {
        let g = unit_grid(256);
        let mut u = vec![c64::new(0.0, 0.0); 512];
        // one level-5 arc inside the level-3 cube [0, 1/8)
        for i in DyadicCube::new(5, 1).cells(256) {
            u[256 + i] = c64::new(1.0, 0.0);
        }
        let e = et_apply(&g, &u, 0.125);
        for i in DyadicCube::new(3, 0).cells(256) {
            assert!((e[256 + i] - c64::new(0.25, 0.0)).norm() < 1e-15);
        }
        assert_eq!(e[256 + 40], c64::new(0.0, 0.0));
    }

    #[test]
    fn carleson_of_one_octave_is_ln2() {
        let g = unit_grid(64);
        let tg = TGrid::for_grid(&g);
        let q0 = DyadicCube::new(3, 2);
        let mut field = vec![0.0; tg.len() * 64];
        for j in 0..tg.len() {
            let t = tg.t(j);
            if t > q0.length() / 2.0 && t <= q0.length() {
                for i in q0.cells(64) {
                    field[j * 64 + i] = 1.0;
                }
            }
        }
        let c = carleson_norm_dyadic(&g, &tg, &field);
        assert!((c.value.powi(2) - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(c.cube, q0);
        let doubled: Vec<f64> = field.iter().map(|v| 2.0 * v).collect();
        let c2 = carleson_norm_dyadic(&g, &tg, &doubled);
        assert!((c2.value / c.value - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn ntmax_of_constant_is_constant() {
        let g = unit_grid(32);
        let tg = TGrid::for_grid(&g);
        let c = c64::new(0.6, -0.8);
        let f = UpperHalfField::from_fn(tg, 32, |_, _| {
            let mut v = vec![c64::new(0.0, 0.0); 64];
            v[..32].fill(c);
            v
        });
        for v in ntmax(&g, &f, 2, 2.0, 1.0) {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ntmax_vanishes_outside_shadow() {
        let g = unit_grid(128);
        let tg = TGrid::for_grid(&g);
        let arc = DyadicCube::new(4, 3);
        let f = UpperHalfField::from_fn(tg.clone(), 128, |_, t| {
            let mut v = vec![c64::new(0.0, 0.0); 256];
            if t > 0.1 && t < 0.2 {
                for i in arc.cells(128) {
                    v[i] = c64::new(1.0, 0.0);
                }
            }
            v
        });
        let (c0, c1) = (2.0, 1.0);
        let nt = ntmax(&g, &f, 2, c0, c1);
        let (a, b) = arc.interval();
        let reach = c1 * c0 * 0.2 + g.h();
        for (i, x) in g.points().iter().enumerate() {
            let dist = if *x < a { a - x } else if *x > b { x - b } else { 0.0 };
            let dist = dist.min(1.0 - dist);
            if dist > reach {
                assert_eq!(nt[i], 0.0, "x = {x}");
            }
        }
    }

    #[test]
    fn modified_carleson_dominates_sup() {
        let g = unit_grid(64);
        let tg = TGrid::for_grid(&g);
        let e = vec![0.3; tg.len() * 64];
        let m = modified_carleson_norm(&g, &tg, &e, 2.0, 1.0);
        assert!(m.value >= m.sup_norm);
        assert_eq!(m.sup_norm, 0.3);
        let zero = modified_carleson_norm(&g, &tg, &vec![0.0; tg.len() * 64], 2.0, 1.0);
        assert_eq!(zero.value, 0.0);
    }
}
