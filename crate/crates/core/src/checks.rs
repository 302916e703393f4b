//! The acceptance criteria as runnable checks. `Profile::Smoke` keeps grids
//! at N ≤ 128 except for the quadratic-estimate refinement study, which runs
//! at N = 128 and 256; `Profile::Full` runs refinement studies up to N = 512.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::bvp::{self, CoefficientPair, ProblemKind, TraceMaps};
use crate::coefficients::{CoefficientField, CoefficientSpec};
use crate::corona::{self, Sawtooth};
use crate::dyadic::{DyadicCube, TGrid};
use crate::grid::WeightedGrid;
use crate::linalg::{self, CMat};
use crate::operators::{self, Composition, DiscreteD, Func, SpectralCalculus};
use crate::quadratic::{self, PrincipalPart};
use crate::weights::{random_dyadic_weight, WeightModel};
use crate::{c64, oracle, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Smoke,
    Full,
}

impl Profile {
    fn pick<T>(self, smoke: T, full: T) -> T {
        match self {
            Profile::Smoke => smoke,
            Profile::Full => full,
        }
    }
}

/// One acceptance line. `value` is compared with `bound` in the direction
/// given by `relation`; `pass` also covers any side conditions listed in
/// `detail`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CriterionRow {
    pub id: u32,
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub relation: String,
    pub pass: bool,
    pub detail: String,
}

impl CriterionRow {
    fn at_most(id: u32, name: &str, value: f64, bound: f64, extra: bool, detail: String) -> Self {
        CriterionRow { id, name: name.into(), value, bound, relation: "<=".into(), pass: value <= bound && extra, detail }
    }

    fn at_least(id: u32, name: &str, value: f64, bound: f64, extra: bool, detail: String) -> Self {
        CriterionRow { id, name: name.into(), value, bound, relation: ">=".into(), pass: value >= bound && extra, detail }
    }
}

pub const CRITERIA: [(u32, &str); 13] = [
    (1, "self-adjointness and kernel of D"),
    (2, "A2 constant against brute-force scan"),
    (3, "corona packing"),
    (4, "quadratic estimate closed form"),
    (5, "quadratic estimate stability"),
    (6, "functional-calculus algebra"),
    (7, "Kato equivalence"),
    (8, "Rellich identity"),
    (9, "BVP against finite differences"),
    (10, "non-tangential equivalence"),
    (11, "principal part approximation"),
    (12, "stopping-time geometry"),
    (13, "perturbation continuity"),
];

pub fn criterion_name(id: u32) -> &'static str {
    CRITERIA.iter().find(|(i, _)| *i == id).map_or("unknown", |(_, n)| n)
}

/// Runs one criterion. Errors (including precondition failures) are turned
/// into failing rows so that a suite always reports all criteria.
pub fn run_criterion(id: u32, profile: Profile) -> CriterionRow {
    let result = match id {
        1 => self_adjointness(profile),
        2 => a2_oracle(profile),
        3 => corona_packing(profile),
        4 => quadratic_closed_form(profile),
        5 => quadratic_stability(profile),
        6 => calculus_algebra(profile),
        7 => kato(profile),
        8 => rellich(profile),
        9 => bvp_oracle(profile),
        10 => ntmax_equivalence(profile),
        11 => principal_part(profile),
        12 => stopping_geometry(profile),
        13 => perturbation(profile),
        _ => Err(crate::Error::InvalidParameter(format!("no criterion {id}"))),
    };
    result.unwrap_or_else(|e| CriterionRow {
        id,
        name: criterion_name(id).into(),
        value: f64::NAN,
        bound: f64::NAN,
        relation: "error".into(),
        pass: false,
        detail: e.to_string(),
    })
}

pub fn suite(profile: Profile) -> Vec<CriterionRow> {
    CRITERIA.iter().map(|(id, _)| run_criterion(*id, profile)).collect()
}

/// `id,value,bound,pass` with 17 significant digits.
pub fn to_csv(rows: &[CriterionRow]) -> String {
    let mut s = String::from("id,value,bound,pass\n");
    for r in rows {
        s.push_str(&format!("{},{:.16e},{:.16e},{}\n", r.id, r.value, r.bound, r.pass));
    }
    s
}

/// max/min - 1 over a refinement sequence.
pub fn drift(values: &[f64]) -> f64 {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(0.0, f64::max);
    hi / lo - 1.0
}

fn power_weight() -> Result<WeightModel> {
    WeightModel::power(0.5, 12)
}

/// The random-dyadic weight of the refinement studies.
fn dyadic_weight() -> Result<WeightModel> {
    random_dyadic_weight(3, 12, 0.3)
}

fn random_b(seed: u64, level: u32, amplitude: f64, hermitian: bool) -> CoefficientSpec {
    CoefficientSpec::Random { seed, level, amplitude, hermitian }
}

fn self_adjointness(p: Profile) -> Result<CriterionRow> {
    let n = p.pick(128, 256);
    let (mut sa, mut null): (f64, f64) = (0.0, 0.0);
    for s in 0..20 {
        let grid = WeightedGrid::new(&random_dyadic_weight(s, 10, 0.5)?, n)?;
        let d = DiscreteD::new(&grid)?;
        sa = sa.max(d.self_adjointness_defect());
        null = null.max(d.null_residual(c64::new(1.3, -0.4), c64::new(-0.7, 2.1)));
    }
    Ok(CriterionRow::at_most(1, criterion_name(1), sa, 1e-12, null <= 1e-10, format!("N={n}, 20 weights, null residual {null:.3e} (<= 1e-10)")))
}

fn a2_oracle(_: Profile) -> Result<CriterionRow> {
    let depth = 14;
    let model = WeightModel::power(0.5, depth)?.a2_constant(depth)?;
    let brute = oracle::brute_force_a2(&oracle::sine_power(0.5), depth);
    let rel = (model - brute).abs() / brute;
    Ok(CriterionRow::at_most(2, criterion_name(2), rel, 1e-6, true, format!("[w]_A2 = {model:.10} vs scan {brute:.10}")))
}

fn corona_packing(p: Profile) -> Result<CriterionRow> {
    let (count, depth) = p.pick((40u64, 10u32), (100, 12));
    let sigmas = [0.1, 0.2, 0.3, 0.4];
    let mut data: Vec<(f64, f64)> = Vec::with_capacity(count as usize);
    for s in 0..count {
        let w = random_dyadic_weight(1000 + s, depth, 0.3)?;
        let a2 = w.a2_constant(depth)?;
        let mut c: f64 = 0.0;
        for &sw in &sigmas {
            let dec = corona::corona_decompose(&w, DyadicCube::root(), sw, depth)?;
            c = c.max(dec.packing_ratio * sw * sw);
        }
        data.push((a2, c));
    }
    data.sort_by(|a, b| a.0.total_cmp(&b.0));
    let ensemble = data.iter().map(|d| d.1).fold(0.0, f64::max);
    let q = data.len() / 4;
    let buckets: Vec<f64> = (0..4).map(|k| data[k * q..if k == 3 { data.len() } else { (k + 1) * q }].iter().map(|d| d.1).fold(0.0, f64::max)).collect();
    let step = buckets.windows(2).map(|b| b[1] / b[0]).fold(f64::INFINITY, f64::min);
    Ok(CriterionRow::at_least(
        3,
        criterion_name(3),
        step,
        0.9,
        ensemble.is_finite(),
        format!("{count} weights, ensemble C = {ensemble:.4}, C by A2 quartile {buckets:.4?}"),
    ))
}

fn quadratic_closed_form(p: Profile) -> Result<CriterionRow> {
    let n = p.pick(64, 128);
    let grid = WeightedGrid::new(&WeightModel::constant(1.0)?, n)?;
    let d = DiscreteD::new(&grid)?;
    let calc = SpectralCalculus::new(&d, &CoefficientField::identity(n), Composition::DB)?;
    let tg = TGrid::for_grid(&grid);
    let r = quadratic::quadratic_ratio_sup(&calc, &tg, 32, 7)?;
    let (lo, hi) = oracle::flat_quadratic_range(n, &tg);
    let inside = r.sup <= hi + 1e-9 && r.inf >= lo - 1e-9;
    let mut rng = crate::rng(8);
    let mut f = operators::smooth_probe(n, &mut rng, 8);
    let mean = f.iter().sum::<c64>() / n as f64;
    f.iter_mut().for_each(|v| *v -= mean);
    let riesz = quadratic::riesz_functional(&grid, &f, &TGrid::new(4, -(grid.level() as i32) - 6, 8)?)?;
    let pairing = (riesz.pairing / (PI / 2.0) - 1.0).abs();
    let sup = (r.sup / 0.5 - 1.0).abs();
    Ok(CriterionRow::at_most(
        4,
        criterion_name(4),
        sup,
        0.02,
        pairing <= 0.01 && inside,
        format!(
            "N={n}, sup {:.6} inf {:.6} within spectral range [{lo:.6}, {hi:.6}]: {inside}; pi/2 pairing {:.6} (rel {pairing:.2e} <= 1e-2); squared {:.6} vs 1/2",
            r.sup, r.inf, riesz.pairing, riesz.squared
        ),
    ))
}

fn quadratic_stability(p: Profile) -> Result<CriterionRow> {
    let sizes: &[usize] = p.pick(&[128, 256], &[128, 256, 512]);
    let mut worst: f64 = 0.0;
    let mut inf_min = f64::INFINITY;
    let mut lines = Vec::new();
    for (name, w) in [("power", power_weight()?), ("dyadic", dyadic_weight()?)] {
        for seed in 0..5 {
            let spec = random_b(seed, 4, 0.5, false);
            let mut sups = Vec::new();
            for &n in sizes {
                let grid = WeightedGrid::new(&w, n)?;
                let d = DiscreteD::new(&grid)?;
                let b = CoefficientField::from_spec(&spec, n)?;
                let calc = SpectralCalculus::without_eigenvectors(&d, &b, Composition::DB)?;
                let r = quadratic::quadratic_ratio_sup(&calc, &TGrid::for_grid(&grid), 32, 1)?;
                sups.push(r.sup);
                inf_min = inf_min.min(r.inf);
            }
            worst = worst.max(drift(&sups));
            lines.push(format!("{name}/{seed}: {sups:.4?}"));
        }
    }
    Ok(CriterionRow::at_most(
        5,
        criterion_name(5),
        worst,
        0.10,
        inf_min > 0.0,
        format!("N={sizes:?}, inf >= {inf_min:.4}; {}", lines.join("; ")),
    ))
}

fn rel_matrix(a: &CMat, b: &CMat) -> f64 {
    linalg::mat_norm2(&(a - b)) / linalg::mat_norm2(b).max(1.0)
}

fn calculus_algebra(p: Profile) -> Result<CriterionRow> {
    let n = p.pick(32, 64);
    let grid = WeightedGrid::new(&power_weight()?, n)?;
    let d = DiscreteD::new(&grid)?;
    let m = d.range_dim();
    let id = CMat::identity(m, m);
    let (s, t) = (0.05, 0.3);
    let mut worst: f64 = 0.0;
    let mut direct = 0;
    for seed in 0..20 {
        let b = CoefficientField::from_spec(&random_b(100 + seed, 3, 0.5, false), n)?;
        let calc = SpectralCalculus::new(&d, &b, Composition::DB)?;
        if calc.backend() == operators::Backend::Direct {
            direct += 1;
        }
        let sgn = calc.range_matrix(Func::Sgn)?;
        let cp = calc.range_matrix(Func::ChiPlus)?;
        let cm = calc.range_matrix(Func::ChiMinus)?;
        let es = calc.range_matrix(Func::ExpAbs(s))?;
        let et = calc.range_matrix(Func::ExpAbs(t))?;
        let est = calc.range_matrix(Func::ExpAbs(s + t))?;
        for e in [
            rel_matrix(&(&sgn * &sgn), &id),
            rel_matrix(&(&cp + &cm), &id),
            rel_matrix(&(&cp * &cp), &cp),
            rel_matrix(&(&cm * &cm), &cm),
            rel_matrix(&(&es * &et), &est),
        ] {
            worst = worst.max(e);
        }
    }
    Ok(CriterionRow::at_most(6, criterion_name(6), worst, 1e-9, true, format!("N={n}, 20 random B, {direct} on the direct backend")))
}

fn kato(p: Profile) -> Result<CriterionRow> {
    let sizes = p.pick([32, 64, 128], [64, 128, 256]);
    let w = power_weight()?;
    let spec = CoefficientSpec::BlockDiagonal { theta_a: 0.4, theta_d: -0.3, amplitude: 0.5, seed: 5 };
    let (mut c1s, mut c2s) = (Vec::new(), Vec::new());
    let mut exact: f64 = 0.0;
    for &n in &sizes {
        let grid = WeightedGrid::new(&w, n)?;
        let r = operators::riesz_and_kato(&grid, &CoefficientField::from_spec(&spec, n)?, 20, 3)?;
        c1s.push(r.c1);
        c2s.push(r.c2);
        let one = operators::riesz_and_kato(&grid, &CoefficientField::identity(n), 20, 3)?;
        exact = exact.max((one.c1 - 1.0).abs()).max((one.c2 - 1.0).abs()).max(one.riesz_defect);
    }
    let dr = drift(&c1s).max(drift(&c2s));
    let positive = c1s.iter().all(|c| *c > 0.0) && c2s.iter().all(|c| c.is_finite());
    Ok(CriterionRow::at_most(
        7,
        criterion_name(7),
        dr,
        0.10,
        positive && exact <= 1e-10,
        format!("N={sizes:?}, c1 {c1s:.4?}, c2 {c2s:.4?}, a=d=1 defect {exact:.2e} (<= 1e-10)"),
    ))
}

fn rellich(p: Profile) -> Result<CriterionRow> {
    let n = p.pick(64, 128);
    let grid = WeightedGrid::new(&power_weight()?, n)?;
    let d = DiscreteD::new(&grid)?;
    let mut rng = crate::rng(11);
    let mut worst: f64 = 0.0;
    let mut control = f64::INFINITY;
    for seed in 0..20 {
        for (hermitian, slot) in [(true, 0), (false, 1)] {
            let a = CoefficientField::from_spec(&random_b(200 + seed, 3, 0.5, hermitian), n)?;
            let pair = CoefficientPair::from_a_over_w(a)?;
            let calc = SpectralCalculus::new(&d, &pair.b, Composition::DB)?;
            let x = linalg::random_vector(&mut rng, 2 * n);
            for f in [Func::ChiPlus, Func::ChiMinus] {
                let fx = calc.apply(f, &x)?;
                if slot == 0 {
                    let r = bvp::rellich_residual(&pair, &grid, &fx)?;
                    worst = worst.max(r.perp).max(r.par);
                } else {
                    let r = bvp::rellich_defect(&grid, &pair.b, &fx);
                    control = control.min(r.perp.max(r.par));
                }
            }
        }
    }
    Ok(CriterionRow::at_most(
        8,
        criterion_name(8),
        worst,
        1e-8,
        control >= 1e-3,
        format!("N={n}, 20 hermitian A; non-hermitian control min residual {control:.3e} (>= 1e-3)"),
    ))
}

fn bvp_oracle(p: Profile) -> Result<CriterionRow> {
    let (coarse, fine) = p.pick((64, 128), (128, 256));
    let mut worst_ratio: f64 = 0.0;
    let mut orders = Vec::new();
    let mut lines = Vec::new();
    for (name, w) in [("flat", WeightModel::constant(1.0)?), ("power", power_weight()?)] {
        for kind in [ProblemKind::Dirichlet, ProblemKind::Neumann] {
            let a = bvp::oracle_comparison(&w, &CoefficientSpec::Identity, kind, 4, coarse, 4.0, 2.0)?;
            let b = bvp::oracle_comparison(&w, &CoefficientSpec::Identity, kind, 4, fine, 4.0, 2.0)?;
            worst_ratio = worst_ratio.max(b.error / b.refinement);
            let order = a.error / b.error;
            orders.push(order);
            lines.push(format!("{name}/{kind:?}: err {:.3e}->{:.3e} (x{order:.2}), refinement {:.3e}, tmax {:.1e}", a.error, b.error, b.refinement, b.tmax_sensitivity));
        }
    }
    let orders_ok = orders.iter().all(|o| (1.5..=3.0).contains(o));
    Ok(CriterionRow::at_most(
        9,
        criterion_name(9),
        worst_ratio,
        3.0,
        orders_ok,
        format!("N={coarse}->{fine}, error/refinement at N={fine}; halving factors in [1.5, 3]: {orders_ok}; {}", lines.join("; ")),
    ))
}

fn ntmax_equivalence(p: Profile) -> Result<CriterionRow> {
    let sizes = p.pick([32, 64, 128], [64, 128, 256]);
    let w = power_weight()?;
    let spec = random_b(21, 3, 0.5, false);
    let (mut lower, mut upper) = (Vec::new(), Vec::new());
    for &n in &sizes {
        let grid = WeightedGrid::new(&w, n)?;
        let d = DiscreteD::new(&grid)?;
        let calc = SpectralCalculus::new(&d, &CoefficientField::from_spec(&spec, n)?, Composition::DB)?;
        let r = bvp::ntmax_equivalence(&calc, &TGrid::for_grid(&grid), 20, 4)?;
        lower.push(r.lower);
        upper.push(r.upper);
    }
    let dr = drift(&lower).max(drift(&upper));
    Ok(CriterionRow::at_most(
        10,
        criterion_name(10),
        dr,
        0.10,
        lower.iter().all(|v| *v > 0.0),
        format!("N={sizes:?}, bracket lower {lower:.4?} upper {upper:.4?}"),
    ))
}

fn principal_part(p: Profile) -> Result<CriterionRow> {
    let sizes = p.pick([32, 64, 128], [64, 128, 256]);
    let w = power_weight()?;
    let spec = random_b(31, 3, 0.3, false);
    let mut consts = Vec::new();
    let mut annihilation: f64 = 0.0;
    for &n in &sizes {
        let grid = WeightedGrid::new(&w, n)?;
        let d = DiscreteD::new(&grid)?;
        let calc = SpectralCalculus::new(&d, &CoefficientField::from_spec(&spec, n)?, Composition::DB)?;
        let tg = TGrid::for_grid(&grid);
        let pp = PrincipalPart::new(&calc, &tg)?;
        annihilation = annihilation.max(pp.report(&calc, 2, 1)?.annihilation);
        let mut rng = crate::rng(9);
        let mut c: f64 = 0.0;
        for k in 0..50 {
            let x = if k % 2 == 0 {
                linalg::random_vector(&mut rng, 2 * n)
            } else {
                let mut x = operators::smooth_probe(n, &mut rng, 8);
                x.extend(operators::smooth_probe(n, &mut rng, 8));
                x
            };
            let v = d.project_range(&x);
            let e = quadratic::ppa_error(&calc, &pp, &v, false)?;
            c = c.max(e.total / grid.norm(&v).powi(2));
        }
        consts.push(c);
    }
    let dr = drift(&consts);
    Ok(CriterionRow::at_most(
        11,
        criterion_name(11),
        dr,
        0.10,
        annihilation <= 1e-9 && consts.iter().all(|c| c.is_finite()),
        format!("N={sizes:?}, sup ppa/|v|^2 {consts:.4?}, annihilation {annihilation:.2e} (<= 1e-9)"),
    ))
}

fn stopping_geometry(p: Profile) -> Result<CriterionRow> {
    use rand::Rng as _;
    let n = p.pick(64, 128);
    let sigma3 = [0.2, 0.1, 0.05, 0.025, 0.0125];
    let mut delta_min = f64::INFINITY;
    let mut excess = f64::NEG_INFINITY;
    let mut tiling_ok = true;
    let mut lines = Vec::new();
    for (k, w) in [power_weight()?, dyadic_weight()?].into_iter().enumerate() {
        let grid = WeightedGrid::new(&w, n)?;
        let d = DiscreteD::new(&grid)?;
        let calc = SpectralCalculus::new(&d, &CoefficientField::from_spec(&random_b(41 + k as u64, 3, 0.3, false), n)?, Composition::DB)?;
        let mut rng = crate::rng(50 + k as u64);
        for _ in 0..3 {
            let q1 = DyadicCube::new(1, rng.gen_range(0..2));
            let fit = corona::gap_fit(&calc, q1, corona::random_unit_xi(&mut rng), &sigma3)?;
            delta_min = delta_min.min(fit.delta);
        }
        let cal = corona::calibrate(&calc, 8, 60 + k as u64)?;
        for _ in 0..16 {
            let level = rng.gen_range(0..=3u32);
            let q1 = DyadicCube::new(level, rng.gen_range(0..1u64 << level));
            let tf = corona::test_function(&calc, q1, corona::random_unit_xi(&mut rng), cal.params.sigma3)?;
            for tau in [0.0, cal.c0 / 2.0, cal.c0] {
                let r = corona::stopping_tau_xi(&grid, &tf, tau, &cal.params)?;
                excess = excess.max(r.ratio - (1.0 - cal.params.sigma6));
            }
        }
        let tg = TGrid::for_grid(&grid);
        for sw in [0.1, 0.2, 0.4] {
            let dec = corona::corona_decompose_grid(&grid, DyadicCube::root(), sw)?;
            let regions: Vec<Sawtooth> = dec.members().into_iter().map(|q| dec.sawtooth(q)).collect();
            tiling_ok &= corona::tiling_defect(&tg, n, DyadicCube::root(), &regions) == (0, 0, 0);
        }
        lines.push(format!("{}: sigma3 {}, sigma6 {:.3}", w.id(), cal.params.sigma3, cal.params.sigma6));
    }
    Ok(CriterionRow::at_most(
        12,
        criterion_name(12),
        excess,
        0.0,
        delta_min > 0.0 && tiling_ok,
        format!("N={n}, bad-mass ratio minus (1 - sigma6); gap exponent min {delta_min:.3} (> 0); exact tiling {tiling_ok}; {}", lines.join("; ")),
    ))
}

fn perturbation(p: Profile) -> Result<CriterionRow> {
    let n = p.pick(32, 64);
    let grid = WeightedGrid::new(&power_weight()?, n)?;
    let radii: Vec<f64> = (0..=20).map(|k| 0.05 * k as f64).collect();
    let mut jump: f64 = 1.0;
    let mut radius = f64::INFINITY;
    let mut lines = Vec::new();
    for seed in 0..3 {
        let a0 = CoefficientField::from_spec(&random_b(300 + seed, 3, 0.5, true), n)?;
        let dir = CoefficientField::from_spec(&random_b(400 + seed, 3, 0.5, false), n)?.add_scaled(&CoefficientField::identity(n), -1.0);
        let r = bvp::perturbation_sweep(&grid, &a0, &dir, &radii, 1e-8)?;
        jump = jump.max(r.max_jump.iter().copied().fold(1.0, f64::max));
        radius = radius.min(r.radius);
        lines.push(format!("seed {seed}: radius {:.2}, jumps {:.3?}", r.radius, r.max_jump));
    }
    let base = CoefficientField::from_spec(&random_b(300, 3, 0.5, true), n)?;
    let maps = TraceMaps::new(&grid, &CoefficientPair::from_a_over_w(base)?)?;
    let base_cond: Vec<f64> = ProblemKind::ALL.iter().map(|k| maps.conditioning(*k).map(|c| c.cond)).collect::<Result<_>>()?;
    Ok(CriterionRow::at_most(
        13,
        criterion_name(13),
        jump,
        2.0,
        radius > 0.0,
        format!("N={n}, largest adjacent sigma_min ratio; radius >= {radius:.2}; base cond (D, R, N) {base_cond:.3?}; {}", lines.join("; ")),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_error_in_div_is_detected() {
        let grid = WeightedGrid::new(&power_weight().unwrap(), 32).unwrap();
        let d = DiscreteD::new(&grid).unwrap();
        let mut m = d.matrix();
        assert!(d.adjointness_defect_of(&m) <= 1e-12);
        // div_w with the sign flipped
        for i in 0..32 {
            for j in 32..64 {
                m[(i, j)] = -m[(i, j)];
            }
        }
        assert!(d.adjointness_defect_of(&m) > 1.0);
    }

    #[test]
    fn csv_has_seventeen_digits() {
        let rows = vec![CriterionRow::at_most(1, "x", 0.1, 1e-12, true, String::new())];
        let csv = to_csv(&rows);
        assert_eq!(csv, "id,value,bound,pass\n1,1.0000000000000001e-1,9.9999999999999998e-13,false\n");
    }

    #[test]
    fn drift_of_constant_sequence_is_zero() {
        assert_eq!(drift(&[2.0, 2.0, 2.0]), 0.0);
        assert!((drift(&[1.0, 1.1]) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn unknown_criterion_fails_cleanly() {
        let r = run_criterion(99, Profile::Smoke);
        assert!(!r.pass);
        assert!(r.value.is_nan());
    }
}
