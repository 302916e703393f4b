//! Pointwise 2×2 coefficient fields on the grid and the hat transform.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dyadic::DyadicCube;
use crate::linalg::{gaussian, ONE, ZERO};
use crate::{c64, Error, Result};

/// A 2×2 matrix stored row-major as `[⊥⊥, ⊥∥, ∥⊥, ∥∥]`.
pub type Mat2 = [c64; 4];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CoefficientSpec {
    Identity,
    /// e^{iθ} I.
    Scalar { theta: f64 },
    /// I + X with X piecewise constant on the arcs of `level`, each of
    /// spectral norm `amplitude`; X is Hermitian when requested.
    Random { seed: u64, level: u32, amplitude: f64, hermitian: bool },
    /// I + X with X a random trigonometric polynomial of degree `modes`,
    /// scaled so that sup_x ‖X(x)‖ = amplitude on a 4096-point sample.
    Smooth { seed: u64, modes: u32, amplitude: f64, hermitian: bool },
    /// [[1, 0], [ε, 1]].
    LowerTriangular { eps: f64 },
    /// diag(a, d) with a = e^{iθ_a}(1 + amplitude·r) and likewise d, where r
    /// is a seeded field in [-1, 1] constant on level-3 arcs.
    BlockDiagonal { theta_a: f64, theta_d: f64, amplitude: f64, seed: u64 },
}

impl CoefficientSpec {
    pub fn id(&self) -> String {
        match self {
            CoefficientSpec::Identity => "identity".into(),
            CoefficientSpec::Scalar { theta } => format!("scalar({theta})"),
            CoefficientSpec::Random { seed, level, amplitude, hermitian } => {
                format!("random(seed={seed},level={level},amp={amplitude},herm={hermitian})")
            }
            CoefficientSpec::Smooth { seed, modes, amplitude, hermitian } => {
                format!("smooth(seed={seed},modes={modes},amp={amplitude},herm={hermitian})")
            }
            CoefficientSpec::LowerTriangular { eps } => format!("lower-triangular({eps})"),
            CoefficientSpec::BlockDiagonal { theta_a, theta_d, amplitude, seed } => {
                format!("block-diagonal({theta_a},{theta_d},{amplitude},{seed})")
            }
        }
    }
}

pub fn mat2_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        a[0] * b[0] + a[1] * b[2],
        a[0] * b[1] + a[1] * b[3],
        a[2] * b[0] + a[3] * b[2],
        a[2] * b[1] + a[3] * b[3],
    ]
}

pub fn mat2_adjoint(a: &Mat2) -> Mat2 {
    [a[0].conj(), a[2].conj(), a[1].conj(), a[3].conj()]
}

pub fn mat2_inverse(a: &Mat2) -> Option<Mat2> {
    let det = a[0] * a[3] - a[1] * a[2];
    if det.norm() <= 1e-300 || !det.re.is_finite() {
        return None;
    }
    Some([a[3] / det, -a[1] / det, -a[2] / det, a[0] / det])
}

/// Smallest eigenvalue of the Hermitian part (A + A^*)/2.
fn herm_min(a: &Mat2) -> f64 {
    let p = a[0].re;
    let q = a[3].re;
    let r = (a[1] + a[2].conj()) * 0.5;
    0.5 * (p + q) - (0.25 * (p - q) * (p - q) + r.norm_sqr()).sqrt()
}

/// Spectral norm of a 2×2 matrix.
pub fn mat2_norm(a: &Mat2) -> f64 {
    let s = a.iter().map(|v| v.norm_sqr()).sum::<f64>();
    let det = (a[0] * a[3] - a[1] * a[2]).norm();
    (0.5 * (s + (s * s - 4.0 * det * det).max(0.0).sqrt())).sqrt()
}

/// Half-angle of the smallest closed sector |arg z| ≤ μ containing the
/// numerical range of `a`; π/2 or more means not sectorial.
pub fn mat2_angle(a: &Mat2) -> f64 {
    use std::f64::consts::FRAC_PI_2;
    let inside = |mu: f64| {
        [1.0, -1.0].iter().all(|s: &f64| {
            let r = c64::from_polar(1.0, s * (FRAC_PI_2 - mu));
            herm_min(&a.map(|v| v * r)) >= 0.0
        })
    };
    if herm_min(a) <= 0.0 {
        return FRAC_PI_2;
    }
    if inside(0.0) {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, FRAC_PI_2);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if inside(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// A 2×2 matrix per grid point.
#[derive(Clone, Debug)]
pub struct CoefficientField {
    id: String,
    m: Vec<Mat2>,
}

impl CoefficientField {
    pub fn from_matrices(m: Vec<Mat2>, id: impl Into<String>) -> Result<Self> {
        if m.iter().flatten().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::InvalidParameter("coefficient field is not finite".into()));
        }
        Ok(CoefficientField { id: id.into(), m })
    }

    pub fn constant(n: usize, a: Mat2, id: impl Into<String>) -> Self {
        CoefficientField { id: id.into(), m: vec![a; n] }
    }

    pub fn identity(n: usize) -> Self {
        Self::constant(n, [ONE, ZERO, ZERO, ONE], "identity")
    }

    /// Builds the field on an N-point grid. Random fields are constant on
    /// coarse arcs so the same spec refines consistently.
    pub fn from_spec(spec: &CoefficientSpec, n: usize) -> Result<Self> {
        let id = spec.id();
        let field = match *spec {
            CoefficientSpec::Identity => Self::identity(n),
            CoefficientSpec::Scalar { theta } => {
                let z = c64::from_polar(1.0, theta);
                Self::constant(n, [z, ZERO, ZERO, z], id.clone())
            }
            CoefficientSpec::LowerTriangular { eps } => {
                Self::constant(n, [ONE, ZERO, c64::new(eps, 0.0), ONE], id.clone())
            }
            CoefficientSpec::Random { seed, level, amplitude, hermitian } => {
                if !(0.0..1.0).contains(&amplitude) {
                    return Err(Error::InvalidParameter(format!("amplitude {amplitude} must lie in [0, 1)")));
                }
                let mut rng = crate::rng(seed);
                let arcs: Vec<Mat2> = (0..1u64 << level)
                    .map(|_| {
                        let mut x: Mat2 = std::array::from_fn(|_| c64::new(gaussian(&mut rng), gaussian(&mut rng)));
                        if hermitian {
                            let xa = mat2_adjoint(&x);
                            x = std::array::from_fn(|k| (x[k] + xa[k]) * 0.5);
                        }
                        let s = amplitude / mat2_norm(&x);
                        [ONE + x[0] * s, x[1] * s, x[2] * s, ONE + x[3] * s]
                    })
                    .collect();
                Self::piecewise(n, level, &arcs, id.clone())?
            }
            CoefficientSpec::Smooth { seed, modes, amplitude, hermitian } => {
                if !(0.0..1.0).contains(&amplitude) {
                    return Err(Error::InvalidParameter(format!("amplitude {amplitude} must lie in [0, 1)")));
                }
                let mut rng = crate::rng(seed);
                let mut draw = || -> Mat2 {
                    let mut x: Mat2 = std::array::from_fn(|_| c64::new(gaussian(&mut rng), gaussian(&mut rng)));
                    if hermitian {
                        let xa = mat2_adjoint(&x);
                        x = std::array::from_fn(|k| (x[k] + xa[k]) * 0.5);
                    }
                    x
                };
                let coef: Vec<(Mat2, Mat2)> = (1..=modes).map(|_| (draw(), draw())).collect();
                let eval = |x: f64| -> Mat2 {
                    let mut m = [ZERO; 4];
                    for (k, (a, b)) in coef.iter().enumerate() {
                        let arg = 2.0 * std::f64::consts::PI * (k + 1) as f64 * x;
                        let decay = 1.0 / (k + 1) as f64;
                        for e in 0..4 {
                            m[e] += (a[e] * arg.cos() + b[e] * arg.sin()) * decay;
                        }
                    }
                    m
                };
                let peak = (0..4096).map(|i| mat2_norm(&eval((i as f64 + 0.5) / 4096.0))).fold(0.0, f64::max);
                let s = if peak > 0.0 { amplitude / peak } else { 0.0 };
                let m = (0..n)
                    .map(|i| {
                        let x = eval((i as f64 + 0.5) / n as f64);
                        [ONE + x[0] * s, x[1] * s, x[2] * s, ONE + x[3] * s]
                    })
                    .collect();
                CoefficientField { id: id.clone(), m }
            }
            CoefficientSpec::BlockDiagonal { theta_a, theta_d, amplitude, seed } => {
                if !(0.0..1.0).contains(&amplitude) {
                    return Err(Error::InvalidParameter(format!("amplitude {amplitude} must lie in [0, 1)")));
                }
                let mut rng = crate::rng(seed);
                let za = c64::from_polar(1.0, theta_a);
                let zd = c64::from_polar(1.0, theta_d);
                let arcs: Vec<Mat2> = (0..8)
                    .map(|_| {
                        let ra: f64 = rng.gen_range(-1.0..=1.0);
                        let rd: f64 = rng.gen_range(-1.0..=1.0);
                        [za * (1.0 + amplitude * ra), ZERO, ZERO, zd * (1.0 + amplitude * rd)]
                    })
                    .collect();
                Self::piecewise(n, 3, &arcs, id.clone())?
            }
        };
        Ok(CoefficientField { id, ..field })
    }

    fn piecewise(n: usize, level: u32, arcs: &[Mat2], id: String) -> Result<Self> {
        if n < 1usize << level {
            return Err(Error::ResolutionTooCoarse { points: n >> level.min(63) });
        }
        let m = (0..arcs.len())
            .flat_map(|k| {
                let cells = DyadicCube::new(level, k as u64).cells(n);
                std::iter::repeat(arcs[k]).take(cells.len())
            })
            .collect();
        Ok(CoefficientField { id, m })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn n(&self) -> usize {
        self.m.len()
    }

    pub fn at(&self, i: usize) -> &Mat2 {
        &self.m[i]
    }

    pub fn matrices(&self) -> &[Mat2] {
        &self.m
    }

    /// Pointwise product with a field stored `[⊥, ∥]`.
    pub fn apply(&self, x: &[c64]) -> Vec<c64> {
        let n = self.n();
        let mut out = vec![ZERO; 2 * n];
        for (i, a) in self.m.iter().enumerate() {
            out[i] = a[0] * x[i] + a[1] * x[n + i];
            out[n + i] = a[2] * x[i] + a[3] * x[n + i];
        }
        out
    }

    pub fn map(&self, f: impl Fn(&Mat2) -> Mat2, id: impl Into<String>) -> Self {
        CoefficientField { id: id.into(), m: self.m.iter().map(f).collect() }
    }

    pub fn adjoint(&self) -> Self {
        self.map(mat2_adjoint, format!("adjoint({})", self.id))
    }

    pub fn inverse(&self) -> Result<Self> {
        let m = self
            .m
            .iter()
            .enumerate()
            .map(|(i, a)| mat2_inverse(a).ok_or(Error::SingularNormalBlock { index: i }))
            .collect::<Result<_>>()?;
        Ok(CoefficientField { id: format!("inverse({})", self.id), m })
    }

    /// self + s·other.
    pub fn add_scaled(&self, other: &CoefficientField, s: f64) -> Self {
        let m = self.m.iter().zip(&other.m).map(|(a, b)| std::array::from_fn(|k| a[k] + b[k] * s)).collect();
        CoefficientField { id: format!("{}+{s}*{}", self.id, other.id), m }
    }

    /// Pointwise hat transform
    /// `[[a, b], [c, d]] ↦ [[1/a, -b/a], [c/a, d - c b/a]]`; an involution.
    pub fn hat(&self) -> Result<Self> {
        let m = self
            .m
            .iter()
            .enumerate()
            .map(|(i, x)| {
                if x[0].norm() <= 1e-300 {
                    return Err(Error::SingularNormalBlock { index: i });
                }
                let ia = ONE / x[0];
                Ok([ia, -ia * x[1], x[2] * ia, x[3] - x[2] * ia * x[1]])
            })
            .collect::<Result<_>>()?;
        Ok(CoefficientField { id: format!("hat({})", self.id), m })
    }

    pub fn sup_norm(&self) -> f64 {
        self.m.iter().map(mat2_norm).fold(0.0, f64::max)
    }

    /// Largest pointwise deviation from hermitian symmetry.
    pub fn hermitian_defect(&self) -> f64 {
        self.m
            .iter()
            .map(|a| {
                let b = mat2_adjoint(a);
                (0..4).map(|k| (a[k] - b[k]).norm()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    /// Worst pointwise numerical-range half-angle; bounds μ(B) from above.
    pub fn pointwise_angle(&self) -> f64 {
        self.m.iter().map(mat2_angle).fold(0.0, f64::max)
    }

    /// Smallest pointwise Hermitian-part eigenvalue; a lower bound for the
    /// accretivity constant on all of H.
    pub fn pointwise_kappa(&self) -> f64 {
        self.m.iter().map(herm_min).fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hat_of_identity_and_triangular() {
        let id = CoefficientField::identity(8).hat().unwrap();
        assert_eq!(id.at(3), &[ONE, ZERO, ZERO, ONE]);
        let t = CoefficientField::from_spec(&CoefficientSpec::LowerTriangular { eps: 0.5 }, 8).unwrap();
        let h = t.hat().unwrap();
        for k in 0..4 {
            assert!((h.at(0)[k] - t.at(0)[k]).norm() < 1e-15);
        }
    }

    #[test]
    fn hat_is_an_involution() {
        let spec = CoefficientSpec::Random { seed: 3, level: 3, amplitude: 0.6, hermitian: false };
        let b = CoefficientField::from_spec(&spec, 32).unwrap();
        let back = b.hat().unwrap().hat().unwrap();
        for i in 0..32 {
            for k in 0..4 {
                assert!((back.at(i)[k] - b.at(i)[k]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn random_field_is_accretive_and_consistent_under_refinement() {
        let spec = CoefficientSpec::Random { seed: 11, level: 3, amplitude: 0.7, hermitian: false };
        let a = CoefficientField::from_spec(&spec, 16).unwrap();
        let b = CoefficientField::from_spec(&spec, 32).unwrap();
        assert!(a.pointwise_kappa() >= 0.3 - 1e-12);
        for i in 0..16 {
            assert_eq!(a.at(i), b.at(2 * i));
        }
    }

    #[test]
    fn rotation_angle_is_theta() {
        let z = CoefficientField::from_spec(&CoefficientSpec::Scalar { theta: 0.3 }, 8).unwrap();
        assert!((z.pointwise_angle() - 0.3).abs() < 1e-12);
        let neg = CoefficientField::constant(8, [-ONE, ZERO, ZERO, -ONE], "minus");
        assert!(neg.pointwise_kappa() < 0.0);
    }

    #[test]
    fn norm_of_rank_one() {
        let a: Mat2 = [ONE, ONE, ONE, ONE];
        assert!((mat2_norm(&a) - 2.0).abs() < 1e-14);
    }
}
