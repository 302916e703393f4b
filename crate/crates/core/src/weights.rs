//! A₂ weight models on the periodic unit interval and their dyadic
//! characteristics.
//!
//! Every model is normalized to `scale · |2 sin πx|^a · exp(r(x))` where `r`
//! is piecewise constant on the dyadic arcs of some construction depth. Arc
//! integrals of `w`, `w⁻¹` and `ln w` are cached bottom-up, so the cached
//! masses are additive by construction.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dyadic::DyadicCube;
use crate::quadrature::{log_sine_integral, power_integral};
use crate::{Error, Result};

/// Largest supported dyadic depth.
pub const MAX_DEPTH: u32 = 20;

/// Serializable description of a weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WeightSpec {
    Constant {
        #[serde(default = "unit")]
        value: f64,
    },
    Power { a: f64 },
    RandomDyadic { seed: u64, depth: u32, beta: f64 },
    Product { factors: Vec<WeightSpec> },
}

fn unit() -> f64 {
    1.0
}

impl WeightSpec {
    pub fn identity() -> Self {
        WeightSpec::Constant { value: 1.0 }
    }

    /// Short stable identifier used in reports.
    pub fn id(&self) -> String {
        match self {
            WeightSpec::Constant { value } => format!("const({value})"),
            WeightSpec::Power { a } => format!("power({a})"),
            WeightSpec::RandomDyadic { seed, depth, beta } => {
                format!("dyadic(seed={seed},depth={depth},beta={beta})")
            }
            WeightSpec::Product { factors } => {
                let parts: Vec<String> = factors.iter().map(|f| f.id()).collect();
                format!("product({})", parts.join("*"))
            }
        }
    }
}

/// Characteristics of a weight measured over its dyadic arcs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightProfile {
    #[serde(rename = "a2")]
    pub a2_constant: f64,
    pub sigma: f64,
    pub tau: f64,
    pub c0: f64,
    #[serde(rename = "dw")]
    pub d_w: f64,
    pub depth: u32,
    /// Least-squares slope of ln(w(E)/w(Q)) against ln(|E|/|Q|).
    pub fit_slope: f64,
    /// Root-mean-square residual of that fit.
    pub fit_residual: f64,
}

/// Integrals of a weight over one arc.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArcIntegrals {
    /// ∫_Q w
    pub mass: f64,
    /// ∫_Q w⁻¹
    pub inv_mass: f64,
    /// ∫_Q ln w
    pub log_integral: f64,
}

/// Pointwise samples plus averages of a weight over one arc.
#[derive(Clone, Debug, PartialEq)]
pub struct ArcSummary {
    pub samples: Vec<f64>,
    pub mass: f64,
    pub log_mean: f64,
}

#[derive(Clone, Debug)]
struct Dyadic {
    depth: u32,
    logs: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct WeightModel {
    spec: WeightSpec,
    scale: f64,
    power: f64,
    dyadic: Option<Dyadic>,
    depth: u32,
    cache: Vec<ArcIntegrals>,
}

fn heap_index(q: DyadicCube) -> usize {
    (1usize << q.level) - 1 + q.index as usize
}

fn dyadic_logs(seed: u64, depth: u32, beta: f64) -> Vec<f64> {
    let mut rng = crate::rng(seed);
    let mut logs = vec![0.0];
    for _ in 0..depth {
        let mut next = Vec::with_capacity(2 * logs.len());
        for &parent in &logs {
            let e = if beta > 0.0 { rng.gen_range(-beta..=beta) } else { 0.0 };
            next.push(parent + e);
            next.push(parent - e);
        }
        logs = next;
    }
    logs
}

struct Normal {
    scale: f64,
    power: f64,
    dyadic: Option<Dyadic>,
}

fn merge_dyadic(a: Option<Dyadic>, b: Dyadic) -> Dyadic {
    match a {
        None => b,
        Some(a) => {
            let depth = a.depth.max(b.depth);
            let logs = (0..1usize << depth)
                .map(|k| a.logs[k >> (depth - a.depth)] + b.logs[k >> (depth - b.depth)])
                .collect();
            Dyadic { depth, logs }
        }
    }
}

fn normalize(spec: &WeightSpec) -> Result<Normal> {
    match spec {
        WeightSpec::Constant { value } => {
            if !(value.is_finite() && *value > 0.0) {
                return Err(Error::InvalidParameter(format!("constant weight {value} must be positive")));
            }
            Ok(Normal { scale: *value, power: 0.0, dyadic: None })
        }
        WeightSpec::Power { a } => {
            if !(*a > -1.0 && *a < 1.0) {
                return Err(Error::InvalidParameter(format!("power exponent {a} outside (-1, 1)")));
            }
            Ok(Normal { scale: 1.0, power: *a, dyadic: None })
        }
        WeightSpec::RandomDyadic { seed, depth, beta } => {
            if !(0.0..=1.0).contains(beta) {
                return Err(Error::InvalidParameter(format!("beta {beta} outside [0, 1]")));
            }
            if *depth > MAX_DEPTH {
                return Err(Error::InvalidParameter(format!("depth {depth} exceeds {MAX_DEPTH}")));
            }
            let logs = dyadic_logs(*seed, *depth, *beta);
            Ok(Normal { scale: 1.0, power: 0.0, dyadic: Some(Dyadic { depth: *depth, logs }) })
        }
        WeightSpec::Product { factors } => {
            let mut out = Normal { scale: 1.0, power: 0.0, dyadic: None };
            for f in factors {
                let n = normalize(f)?;
                out.scale *= n.scale;
                out.power += n.power;
                if let Some(d) = n.dyadic {
                    out.dyadic = Some(merge_dyadic(out.dyadic.take(), d));
                }
            }
            if !(out.power > -1.0 && out.power < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "combined power exponent {} outside (-1, 1)",
                    out.power
                )));
            }
            Ok(out)
        }
    }
}

impl WeightModel {
    /// Builds the model and caches arc integrals down to `cache_depth` (or the
    /// construction depth of a random-dyadic factor, if deeper).
    pub fn new(spec: WeightSpec, cache_depth: u32) -> Result<Self> {
        if cache_depth > MAX_DEPTH {
            return Err(Error::InvalidParameter(format!("cache depth {cache_depth} exceeds {MAX_DEPTH}")));
        }
        let Normal { scale, power, dyadic } = normalize(&spec)?;
        let depth = cache_depth.max(dyadic.as_ref().map_or(0, |d| d.depth));
        let mut model = WeightModel { spec, scale, power, dyadic, depth, cache: Vec::new() };
        model.build_cache();
        Ok(model)
    }

    pub fn constant(value: f64) -> Result<Self> {
        Self::new(WeightSpec::Constant { value }, 0)
    }

    pub fn power(a: f64, cache_depth: u32) -> Result<Self> {
        Self::new(WeightSpec::Power { a }, cache_depth)
    }

    pub fn spec(&self) -> &WeightSpec {
        &self.spec
    }

    pub fn id(&self) -> String {
        self.spec.id()
    }

    /// Depth down to which arc integrals are cached.
    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// Construction depth of the piecewise-constant part, if any.
    pub fn construction_depth(&self) -> Option<u32> {
        self.dyadic.as_ref().map(|d| d.depth)
    }

    fn build_cache(&mut self) {
        let depth = self.depth;
        let leaves = 1usize << depth;
        let mut cache = vec![ArcIntegrals { mass: 0.0, inv_mass: 0.0, log_integral: 0.0 }; 2 * leaves - 1];
        let base = leaves - 1;
        for k in 0..leaves {
            cache[base + k] = self.direct_integrals(DyadicCube::new(depth, k as u64));
        }
        for level in (0..depth).rev() {
            let first = (1usize << level) - 1;
            for k in 0..1usize << level {
                let l = cache[2 * (first + k) + 1];
                let r = cache[2 * (first + k) + 2];
                cache[first + k] = ArcIntegrals {
                    mass: l.mass + r.mass,
                    inv_mass: l.inv_mass + r.inv_mass,
                    log_integral: l.log_integral + r.log_integral,
                };
            }
        }
        self.cache = cache;
    }

    fn dyadic_log(&self, q: DyadicCube) -> f64 {
        match &self.dyadic {
            None => 0.0,
            Some(d) => d.logs[(q.index >> (q.level - d.depth)) as usize],
        }
    }

    /// Integrals over an arc on which the piecewise-constant part is constant.
    fn direct_integrals(&self, q: DyadicCube) -> ArcIntegrals {
        let (l, r) = q.interval();
        let len = r - l;
        let rlog = self.dyadic_log(q);
        let (p_mass, p_inv, p_log) = if self.power == 0.0 {
            (len, len, 0.0)
        } else {
            (
                power_integral(self.power, l, r),
                power_integral(-self.power, l, r),
                self.power * log_sine_integral(l, r),
            )
        };
        let factor = self.scale * rlog.exp();
        ArcIntegrals {
            mass: factor * p_mass,
            inv_mass: p_inv / factor,
            log_integral: len * (self.scale.ln() + rlog) + p_log,
        }
    }

    /// Arc integrals from the cache, or by quadrature below the cache for
    /// models without a piecewise-constant part.
    pub fn integrals(&self, q: DyadicCube) -> Result<ArcIntegrals> {
        if q.level <= self.depth {
            return Ok(self.cache[heap_index(q)]);
        }
        match &self.dyadic {
            Some(_) => Err(Error::DepthExceeded { level: q.level, depth: self.depth }),
            None => Ok(self.direct_integrals(q)),
        }
    }

    /// w(Q) = ∫_Q w dx.
    pub fn mass(&self, q: DyadicCube) -> Result<f64> {
        Ok(self.integrals(q)?.mass)
    }

    /// (ln w)_Q = ⨍_Q ln w dx.
    pub fn log_mean(&self, q: DyadicCube) -> Result<f64> {
        Ok(self.integrals(q)?.log_integral / q.length())
    }

    /// (⨍_Q w)(⨍_Q w⁻¹).
    pub fn a2_ratio(&self, q: DyadicCube) -> Result<f64> {
        let i = self.integrals(q)?;
        let len = q.length();
        Ok(i.mass * i.inv_mass / (len * len))
    }

    /// Pointwise value; at the pole of a negative power this is +∞.
    pub fn evaluate(&self, x: f64) -> f64 {
        let x = x.rem_euclid(1.0);
        let mut v = self.scale;
        if self.power != 0.0 {
            v *= (2.0 * (std::f64::consts::PI * x).sin()).abs().powf(self.power);
        }
        if let Some(d) = &self.dyadic {
            let k = ((x * (1u64 << d.depth) as f64) as usize).min(d.logs.len() - 1);
            v *= d.logs[k].exp();
        }
        v
    }

    /// Samples at the midpoints of `n` equal subarcs of `q`, with w(Q) and (ln w)_Q.
    pub fn evaluate_and_mass(&self, q: DyadicCube, n: usize) -> Result<ArcSummary> {
        let (l, r) = q.interval();
        let h = (r - l) / n as f64;
        let samples = (0..n).map(|i| self.evaluate(l + (i as f64 + 0.5) * h)).collect();
        Ok(ArcSummary { samples, mass: self.mass(q)?, log_mean: self.log_mean(q)? })
    }

    /// Averages of w over the 2^level cells of that level. Works below the
    /// construction depth because the piecewise-constant part splits exactly.
    pub fn cell_averages(&self, level: u32) -> Vec<f64> {
        let n = 1usize << level;
        (0..n)
            .map(|k| {
                let q = DyadicCube::new(level, k as u64);
                if level <= self.depth {
                    self.cache[heap_index(q)].mass * n as f64
                } else {
                    self.direct_integrals(q).mass * n as f64
                }
            })
            .collect()
    }

    /// [w]_{A₂} estimated as the maximum of (⨍w)(⨍w⁻¹) over dyadic arcs of
    /// level at most `depth`.
    pub fn a2_constant(&self, depth: u32) -> Result<f64> {
        if depth < 1 {
            return Err(Error::InvalidParameter("a2 depth must be at least 1".into()));
        }
        let mut best: f64 = 1.0;
        for q in DyadicCube::all_to_depth(depth) {
            best = best.max(self.a2_ratio(q)?);
        }
        Ok(best)
    }

    /// Dyadic characteristics of the weight down to `depth`; `samples` random
    /// (Q, E) pairs feed the comparability exponents σ and τ.
    pub fn ainfty_profile(&self, depth: u32, samples: usize) -> Result<WeightProfile> {
        if depth < 2 {
            return Err(Error::InvalidParameter("profile depth must be at least 2".into()));
        }
        let a2 = self.a2_constant(depth)?;
        let mut c0: f64 = 0.0;
        let mut d_w: f64 = 0.0;
        for q in DyadicCube::all_to_depth(depth) {
            let i = self.integrals(q)?;
            let len = q.length();
            c0 = c0.max((i.mass / len).ln() - i.log_integral / len);
            if let Some(p) = q.parent() {
                d_w = d_w.max((self.mass(p)? / i.mass).log2());
            }
        }

        let mut rng = crate::rng(0x5eed_a1f7);
        let mut sigma: f64 = 1.0;
        let mut tau: f64 = 1.0;
        let (mut sxx, mut sxy) = (0.0, 0.0);
        let mut pairs = Vec::with_capacity(samples);
        for _ in 0..samples {
            let level = rng.gen_range(0..depth);
            let q = DyadicCube::new(level, rng.gen_range(0..1u64 << level));
            let rel = rng.gen_range(1..=(depth - level).min(4));
            let count = 1u64 << rel;
            // a nonempty proper subset of the descendants
            let mask: u64 = rng.gen_range(1..(1u64 << count) - 1);
            let mut w_e = 0.0;
            let mut n_e = 0u32;
            for j in 0..count {
                if mask >> j & 1 == 1 {
                    w_e += self.mass(DyadicCube::new(level + rel, q.index * count + j))?;
                    n_e += 1;
                }
            }
            let x = (n_e as f64 / count as f64).ln();
            let y = (w_e / self.mass(q)?).ln();
            sigma = sigma.min(y / x);
            tau = tau.max(y / x);
            sxx += x * x;
            sxy += x * y;
            pairs.push((x, y));
        }
        let slope = if sxx > 0.0 { sxy / sxx } else { 1.0 };
        let residual = if pairs.is_empty() {
            0.0
        } else {
            (pairs.iter().map(|(x, y)| (y - slope * x).powi(2)).sum::<f64>() / pairs.len() as f64).sqrt()
        };
        Ok(WeightProfile {
            a2_constant: a2,
            sigma,
            tau,
            c0: c0.max(0.0),
            d_w,
            depth,
            fit_slope: slope,
            fit_residual: residual,
        })
    }

    /// Leaf values of the piecewise-constant factor (exp of the martingale).
    pub fn leaf_values(&self) -> Option<Vec<f64>> {
        self.dyadic.as_ref().map(|d| d.logs.iter().map(|l| self.scale * l.exp()).collect())
    }
}

/// Weight whose logarithm is a dyadic martingale with increments uniform in
/// [-β, β], constant on the 2^depth leaves.
pub fn random_dyadic_weight(seed: u64, depth: u32, beta: f64) -> Result<WeightModel> {
    WeightModel::new(WeightSpec::RandomDyadic { seed, depth, beta }, depth)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_weight_has_trivial_profile() {
        let w = WeightModel::constant(1.0).unwrap();
        let q = DyadicCube::new(0, 0);
        assert_eq!(w.mass(q).unwrap(), 1.0);
        assert_eq!(w.log_mean(q).unwrap(), 0.0);
        let p = w.ainfty_profile(6, 200).unwrap();
        assert_eq!(p.a2_constant, 1.0);
        assert!((p.sigma - 1.0).abs() < 1e-12 && (p.tau - 1.0).abs() < 1e-12);
        assert!(p.c0.abs() < 1e-15);
        assert!((p.d_w - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_beta_gives_unit_weight() {
        let w = random_dyadic_weight(3, 8, 0.0).unwrap();
        assert!(w.leaf_values().unwrap().iter().all(|&v| v == 1.0));
        assert_eq!(w.a2_constant(8).unwrap(), 1.0);
    }

    #[test]
    fn random_weight_is_reproducible() {
        let a = random_dyadic_weight(1, 10, 0.3).unwrap().leaf_values().unwrap();
        let b = random_dyadic_weight(1, 10, 0.3).unwrap().leaf_values().unwrap();
        assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn root_mass_is_sum_of_leaves() {
        let w = random_dyadic_weight(7, 10, 0.3).unwrap();
        let leaves: f64 = (0..1024).map(|k| w.mass(DyadicCube::new(10, k)).unwrap()).sum();
        let root = w.mass(DyadicCube::new(0, 0)).unwrap();
        assert!((root - leaves).abs() <= 1e-13 * root);
    }

    #[test]
    fn random_weight_beyond_depth_is_refused() {
        let w = random_dyadic_weight(7, 6, 0.3).unwrap();
        assert_eq!(
            w.mass(DyadicCube::new(7, 0)),
            Err(Error::DepthExceeded { level: 7, depth: 6 })
        );
    }

    #[test]
    fn power_weight_below_cache_uses_quadrature() {
        let w = WeightModel::power(0.5, 4).unwrap();
        let q = DyadicCube::new(9, 0);
        let m = w.mass(q).unwrap();
        let children = w.mass(q.children()[0]).unwrap() + w.mass(q.children()[1]).unwrap();
        assert!((m / children - 1.0).abs() < 1e-12);
    }

    #[test]
    fn power_profile_respects_p_equals_two() {
        let w = WeightModel::power(0.5, 10).unwrap();
        let p = w.ainfty_profile(10, 500).unwrap();
        assert!(p.c0 > 0.0);
        assert!(p.tau <= 2.0, "tau = {}", p.tau);
        assert!(p.sigma > 0.0 && p.sigma <= 1.0);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(WeightModel::power(1.0, 2).is_err());
        assert!(WeightModel::constant(0.0).is_err());
        assert!(random_dyadic_weight(0, 4, 1.5).is_err());
        let spec = WeightSpec::Product {
            factors: vec![WeightSpec::Power { a: 0.6 }, WeightSpec::Power { a: 0.6 }],
        };
        assert!(WeightModel::new(spec, 2).is_err());
    }

    #[test]
    fn spec_round_trips_through_json() {
        let spec = WeightSpec::Product {
            factors: vec![
                WeightSpec::Power { a: 0.5 },
                WeightSpec::RandomDyadic { seed: 2, depth: 6, beta: 0.3 },
            ],
        };
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<WeightSpec>(&json).unwrap(), spec);
    }
}
