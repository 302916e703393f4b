//! The discrete Dirac-type operator `D`, the compositions `DB` and `BD`, and
//! their holomorphic functional calculus.
//!
//! Internally all matrices act on Euclidean coordinates `y = W^{1/2} x` (see
//! [`WeightedGrid::to_euclid`]) in which `D` is a real symmetric matrix. The
//! compression of `DB` to the closure of R(D) is diagonalized densely; on the
//! complementary null space every function acts by its value at 0.

use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientField;
use crate::grid::WeightedGrid;
use crate::linalg::{self, CMat, Complement, Hessenberg, I, ONE, ZERO};
use crate::{c64, Error, Result};

/// Eigenbasis condition number beyond which the direct backend is used.
pub const COND_LIMIT: f64 = 1e8;

/// D = [[0, div_w], [-G, 0]] with G the periodic forward difference and
/// div_w its negative weighted adjoint.
#[derive(Clone, Debug)]
pub struct DiscreteD {
    grid: WeightedGrid,
    // s_i = sqrt(h w_i)
    s: Vec<f64>,
    comp: [Complement; 2],
    // unit null vectors of D_e on the ⊥ and ∥ blocks
    null: [Vec<f64>; 2],
}

impl DiscreteD {
    pub fn new(grid: &WeightedGrid) -> Result<Self> {
        let n = grid.n();
        if n < 8 {
            return Err(Error::ResolutionTooCoarse { points: n });
        }
        let h = grid.h();
        let s: Vec<f64> = grid.weights().iter().map(|w| (h * w).sqrt()).collect();
        let unit = |v: Vec<f64>| {
            let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / r).collect::<Vec<_>>()
        };
        let n1 = unit(s.clone());
        let n2 = unit(s.iter().map(|si| h / si).collect());
        let comp = [Complement::new(&n1), Complement::new(&n2)];
        Ok(DiscreteD { grid: grid.clone(), s, comp, null: [n1, n2] })
    }

    pub fn grid(&self) -> &WeightedGrid {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    /// Periodic forward difference (f_{i+1} - f_i)/h.
    pub fn gradient(&self, f: &[c64]) -> Vec<c64> {
        let n = self.n();
        let h = self.grid.h();
        (0..n).map(|i| (f[(i + 1) % n] - f[i]) / h).collect()
    }

    /// div_w g = w^{-1} (w g)' in backward differences.
    pub fn div_w(&self, g: &[c64]) -> Vec<c64> {
        let n = self.n();
        let h = self.grid.h();
        let w = self.grid.weights();
        (0..n)
            .map(|j| {
                let k = (j + n - 1) % n;
                (g[j] * w[j] - g[k] * w[k]) / (h * w[j])
            })
            .collect()
    }

    /// Δ_w = div_w G.
    pub fn laplacian_w(&self, f: &[c64]) -> Vec<c64> {
        self.div_w(&self.gradient(f))
    }

    /// D x for a field x = [x_⊥, x_∥].
    pub fn apply(&self, x: &[c64]) -> Vec<c64> {
        let n = self.n();
        let mut out = self.div_w(&x[n..]);
        out.extend(self.gradient(&x[..n]).into_iter().map(|v| -v));
        out
    }

    /// D_e y = W^{1/2} D W^{-1/2} y, assembled so that D_e is exactly
    /// symmetric.
    pub fn apply_euclid(&self, y: &[c64]) -> Vec<c64> {
        let n = self.n();
        let h = self.grid.h();
        let s = &self.s;
        let mut out = vec![ZERO; 2 * n];
        for j in 0..n {
            let k = (j + n - 1) % n;
            // -(G_e^T q)_j
            out[j] = (y[n + j] - y[n + k] * (s[k] / s[j])) / h;
            // -(G_e p)_j
            let jp = (j + 1) % n;
            out[n + j] = -(y[jp] * (s[j] / s[jp]) - y[j]) / h;
        }
        out
    }

    /// Null vectors (1, 0) and (0, 1/w) of D in grid coordinates.
    pub fn null_basis(&self) -> [Vec<c64>; 2] {
        let n = self.n();
        let w = self.grid.weights();
        let mut a = vec![ZERO; 2 * n];
        let mut b = vec![ZERO; 2 * n];
        for i in 0..n {
            a[i] = ONE;
            b[n + i] = c64::new(1.0 / w[i], 0.0);
        }
        [a, b]
    }

    /// Orthonormal Euclidean null vectors (2N entries each).
    pub fn null_euclid(&self) -> [Vec<c64>; 2] {
        let n = self.n();
        let mut a = vec![ZERO; 2 * n];
        let mut b = vec![ZERO; 2 * n];
        for i in 0..n {
            a[i] = c64::new(self.null[0][i], 0.0);
            b[n + i] = c64::new(self.null[1][i], 0.0);
        }
        [a, b]
    }

    /// Dimension of the closure of R(D), i.e. 2N - 2.
    pub fn range_dim(&self) -> usize {
        2 * self.n() - 2
    }

    /// U a: coordinates in the orthonormal basis of R(D) to Euclidean.
    pub fn lift(&self, a: &[c64]) -> Vec<c64> {
        let m = self.n() - 1;
        let mut y = self.comp[0].lift(&a[..m]);
        y.extend(self.comp[1].lift(&a[m..]));
        y
    }

    /// U^* y.
    pub fn restrict(&self, y: &[c64]) -> Vec<c64> {
        let n = self.n();
        let mut a = self.comp[0].restrict(&y[..n]);
        a.extend(self.comp[1].restrict(&y[n..]));
        a
    }

    /// Weighted-orthogonal projection of x onto the closure of R(D).
    pub fn project_range(&self, x: &[c64]) -> Vec<c64> {
        let y = self.grid.to_euclid(x);
        self.grid.from_euclid(&self.lift(&self.restrict(&y)))
    }

    /// Dense matrix of D in grid coordinates.
    pub fn matrix(&self) -> CMat {
        let m = 2 * self.n();
        let mut out = CMat::zeros(m, m);
        let mut e = vec![ZERO; m];
        for k in 0..m {
            e[k] = ONE;
            let c = self.apply(&e);
            for i in 0..m {
                out[(i, k)] = c[i];
            }
            e[k] = ZERO;
        }
        out
    }

    /// ‖D - D^{*w}‖ in the operator norm of H, with D^{*w} = W^{-1} D^* W
    /// formed from the assembled grid matrix.
    pub fn self_adjointness_defect(&self) -> f64 {
        self.adjointness_defect_of(&self.matrix())
    }

    /// The same defect for any 2N×2N matrix in grid coordinates.
    pub fn adjointness_defect_of(&self, m: &CMat) -> f64 {
        let n = self.n();
        let wt = |i: usize| self.s[i % n] * self.s[i % n];
        let dim = 2 * n;
        let diff = CMat::from_fn(dim, dim, |i, j| {
            let adj = m[(j, i)].conj() * wt(j) / wt(i);
            (m[(i, j)] - adj) * (wt(i) / wt(j)).sqrt()
        });
        linalg::mat_norm2(&diff)
    }

    /// Largest |D n| over the two null vectors scaled by c, relative to
    /// ‖D‖ ≤ 2/h times the size of n.
    pub fn null_residual(&self, c_perp: c64, c_par: c64) -> f64 {
        let [a, b] = self.null_basis();
        let x: Vec<c64> = a.iter().zip(&b).map(|(u, v)| u * c_perp + v * c_par).collect();
        self.apply(&x).iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// Which composition of D with B.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Composition {
    DB,
    BD,
}

/// κ = inf Re⟨Bv, v⟩/‖v‖² on the closure of R(D) and the sampled angle μ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Accretivity {
    pub kappa: f64,
    pub mu: f64,
    /// Pointwise numerical-range angle; an upper bound for μ(B).
    pub mu_bound: f64,
}

/// U^* B U as a dense matrix.
fn compress_b(d: &DiscreteD, b: &CoefficientField) -> CMat {
    let m = d.range_dim();
    let bu = b_times_u(d, b);
    let mut out = CMat::zeros(m, m);
    for k in 0..m {
        let c = d.restrict(&bu[k]);
        for i in 0..m {
            out[(i, k)] = c[i];
        }
    }
    out
}

fn b_times_u(d: &DiscreteD, b: &CoefficientField) -> Vec<Vec<c64>> {
    let m = d.range_dim();
    let mut e = vec![ZERO; m];
    (0..m)
        .map(|k| {
            e[k] = ONE;
            let col = b.apply(&d.lift(&e));
            e[k] = ZERO;
            col
        })
        .collect()
}

/// κ via the smallest eigenvalue of Herm(U^*BU); μ via the argument of
/// ⟨Bv, v⟩ over Hermitian-part eigenvectors and seeded random vectors.
pub fn accretivity(d: &DiscreteD, b: &CoefficientField, seed: u64) -> Result<Accretivity> {
    let m = compress_b(d, b);
    accretivity_of(&m, b, seed)
}

fn accretivity_of(m: &CMat, b: &CoefficientField, seed: u64) -> Result<Accretivity> {
    let dim = m.nrows();
    let (vals, vecs) = linalg::hermitian_eigen(&linalg::hermitian_part(m))?;
    let kappa = vals[0];
    let mu_bound = b.pointwise_angle();
    if kappa <= 0.0 {
        return Err(Error::NotAccretive { kappa });
    }
    let arg = |v: &[c64]| {
        let bv = linalg::mat_vec(m, v);
        linalg::dot(&bv, v).arg().abs()
    };
    let mut mu: f64 = 0.0;
    let stride = (dim / 64).max(1);
    for k in (0..dim).step_by(stride) {
        let v: Vec<c64> = (0..dim).map(|i| vecs[(i, k)]).collect();
        mu = mu.max(arg(&v));
    }
    let mut rng = crate::rng(seed);
    for _ in 0..64 {
        mu = mu.max(arg(&linalg::random_vector(&mut rng, dim)));
    }
    Ok(Accretivity { kappa, mu, mu_bound })
}

/// Scalar functions available to the calculus.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Func {
    /// R_t(z) = (1 + itz)^{-1}.
    Resolvent(f64),
    /// P_t(z) = (1 + t²z²)^{-1}.
    P(f64),
    /// Q_t(z) = tz (1 + t²z²)^{-1}.
    Q(f64),
    Sgn,
    ChiPlus,
    ChiMinus,
    /// e^{-t[z]} with [z] = z sgn(Re z).
    ExpAbs(f64),
    /// ψ(tz) with ψ(z) = z/(1 + z²).
    Psi(f64),
    /// [z].
    Abs,
}

fn sgn_re(z: c64) -> f64 {
    if z.re > 0.0 {
        1.0
    } else if z.re < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl Func {
    pub fn eval(&self, z: c64) -> c64 {
        match *self {
            Func::Resolvent(t) => ONE / (ONE + I * z * t),
            Func::P(t) => ONE / (ONE + z * z * (t * t)),
            Func::Q(t) | Func::Psi(t) => z * t / (ONE + z * z * (t * t)),
            Func::Sgn => c64::new(sgn_re(z), 0.0),
            Func::ChiPlus => c64::new(if z.re > 0.0 { 1.0 } else { 0.0 }, 0.0),
            Func::ChiMinus => c64::new(if z.re < 0.0 { 1.0 } else { 0.0 }, 0.0),
            Func::ExpAbs(t) => (-(z * sgn_re(z)) * t).exp(),
            Func::Abs => z * sgn_re(z),
        }
    }

    /// Value on the null space.
    pub fn at_zero(&self) -> c64 {
        match self {
            Func::Resolvent(_) | Func::P(_) | Func::ExpAbs(_) => ONE,
            _ => ZERO,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Backend {
    Eigen,
    Direct,
}

/// Coordinates of a field in the splitting H = R(T) ⊕ N(T): eigen
/// coefficients of the range part and coefficients of the null part.
#[derive(Clone, Debug)]
pub struct SpectralCoords {
    pub c: Vec<c64>,
    pub null: [c64; 2],
}

/// Holomorphic functional calculus of DB or BD.
#[derive(Clone, Debug)]
pub struct SpectralCalculus {
    d: DiscreteD,
    b: CoefficientField,
    kind: Composition,
    accretivity: Accretivity,
    tc: CMat,
    lambda: Vec<c64>,
    v: CMat,
    vinv: CMat,
    cond: f64,
    backend: Backend,
    hess: std::sync::OnceLock<Hessenberg>,
    sign: std::sync::OnceLock<CMat>,
    // DB: (N_e^* B^{-1} N_e)^{-1} and B^{-1} N_e; BD: identity and N_e
    split_small: [[c64; 2]; 2],
    k_null: [Vec<c64>; 2],
    ubu_inv: Option<CMat>,
}

impl SpectralCalculus {
    /// Builds the calculus, choosing the direct backend when the eigenbasis
    /// condition number exceeds [`COND_LIMIT`].
    pub fn new(d: &DiscreteD, b: &CoefficientField, kind: Composition) -> Result<Self> {
        let mut calc = Self::build(d, b, kind)?;
        if calc.cond > COND_LIMIT {
            calc.enable_direct()?;
            calc.backend = Backend::Direct;
        }
        Ok(calc)
    }

    /// Eigen backend only; refuses ill-conditioned eigenbases.
    pub fn eigen_only(d: &DiscreteD, b: &CoefficientField, kind: Composition) -> Result<Self> {
        let calc = Self::build(d, b, kind)?;
        if calc.cond > COND_LIMIT {
            return Err(Error::IllConditionedEigenbasis { cond: calc.cond, limit: COND_LIMIT });
        }
        Ok(calc)
    }

    /// Direct backend without eigenvectors: eigenvalues are still computed,
    /// the eigenvector accessors return empty matrices and `cond` is NaN.
    pub fn without_eigenvectors(d: &DiscreteD, b: &CoefficientField, kind: Composition) -> Result<Self> {
        let mut calc = Self::build_with(d, b, kind, false)?;
        calc.enable_direct()?;
        calc.backend = Backend::Direct;
        Ok(calc)
    }

    fn build(d: &DiscreteD, b: &CoefficientField, kind: Composition) -> Result<Self> {
        Self::build_with(d, b, kind, true)
    }

    fn build_with(d: &DiscreteD, b: &CoefficientField, kind: Composition, vectors: bool) -> Result<Self> {
        assert_eq!(b.n(), d.n(), "coefficient field and grid differ in size");
        let m = d.range_dim();
        let ubu = compress_b(d, b);
        let accretivity = accretivity_of(&ubu, b, 0x6b61_7070)?;
        let bu = b_times_u(d, b);
        let mut tc = CMat::zeros(m, m);
        for k in 0..m {
            let c = d.restrict(&d.apply_euclid(&bu[k]));
            for i in 0..m {
                tc[(i, k)] = c[i];
            }
        }
        let (lambda, v, vinv, cond) = if vectors {
            let (lambda, v) = linalg::eigen(&tc)?;
            let vinv = linalg::inverse(&v)?;
            let cond = linalg::mat_norm2(&v) * linalg::mat_norm2(&vinv);
            (lambda, v, vinv, cond)
        } else {
            let lambda = tc.eigenvalues().map_err(|_| Error::SolverSingular("eigenvalues did not converge".into()))?;
            (lambda, CMat::zeros(0, 0), CMat::zeros(0, 0), f64::NAN)
        };
        let ne = d.null_euclid();
        let (split_small, k_null, ubu_inv) = match kind {
            Composition::DB => {
                let binv = b.inverse()?;
                let k_null = [binv.apply(&ne[0]), binv.apply(&ne[1])];
                let g = [
                    [linalg::dot(&k_null[0], &ne[0]), linalg::dot(&k_null[1], &ne[0])],
                    [linalg::dot(&k_null[0], &ne[1]), linalg::dot(&k_null[1], &ne[1])],
                ];
                let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
                if det.norm() < 1e-14 {
                    return Err(Error::SolverSingular("null-space splitting is singular".into()));
                }
                let inv = [[g[1][1] / det, -g[0][1] / det], [-g[1][0] / det, g[0][0] / det]];
                (inv, k_null, None)
            }
            Composition::BD => (
                [[ONE, ZERO], [ZERO, ONE]],
                ne.clone(),
                Some(linalg::inverse(&ubu)?),
            ),
        };
        Ok(SpectralCalculus {
            d: d.clone(),
            b: b.clone(),
            kind,
            accretivity,
            tc,
            lambda,
            v,
            vinv,
            cond,
            backend: Backend::Eigen,
            hess: std::sync::OnceLock::new(),
            sign: std::sync::OnceLock::new(),
            split_small,
            k_null,
            ubu_inv,
        })
    }

    /// Prepares the direct backend: a Hessenberg form for resolvents; the
    /// matrix sign is computed on first use.
    pub fn enable_direct(&mut self) -> Result<()> {
        self.hessenberg();
        Ok(())
    }

    /// Unitary Hessenberg form of the compressed operator, built on first use.
    pub fn hessenberg(&self) -> &Hessenberg {
        self.hess.get_or_init(|| Hessenberg::new(&self.tc))
    }

    fn sign_matrix(&self) -> Result<&CMat> {
        if let Some(s) = self.sign.get() {
            return Ok(s);
        }
        let s = linalg::matrix_sign(&self.tc)?;
        Ok(self.sign.get_or_init(|| s))
    }

    /// Same calculus evaluated by the direct backend.
    pub fn direct(&self) -> Result<Self> {
        let mut c = self.clone();
        c.enable_direct()?;
        c.backend = Backend::Direct;
        Ok(c)
    }

    pub fn discrete_d(&self) -> &DiscreteD {
        &self.d
    }

    pub fn grid(&self) -> &WeightedGrid {
        self.d.grid()
    }

    pub fn coefficients(&self) -> &CoefficientField {
        &self.b
    }

    pub fn kind(&self) -> Composition {
        self.kind
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn eigenvalues(&self) -> &[c64] {
        &self.lambda
    }

    pub fn cond(&self) -> f64 {
        self.cond
    }

    pub fn accretivity(&self) -> Accretivity {
        self.accretivity
    }

    pub fn compressed(&self) -> &CMat {
        &self.tc
    }

    pub fn eigenvectors(&self) -> &CMat {
        &self.v
    }

    pub fn eigenvectors_inv(&self) -> &CMat {
        &self.vinv
    }

    /// ‖V Λ V^{-1} - T_c‖ / ‖T_c‖ (NaN without eigenvectors).
    pub fn reconstruction_error(&self) -> f64 {
        let m = self.lambda.len();
        if self.v.nrows() != m {
            return f64::NAN;
        }
        let vl = CMat::from_fn(m, m, |i, j| self.v[(i, j)] * self.lambda[j]);
        let r = &(&vl * &self.vinv) - &self.tc;
        linalg::mat_norm2(&r) / linalg::mat_norm2(&self.tc)
    }

    /// Largest angle between an eigenvalue and the real axis.
    pub fn sector_angle(&self) -> f64 {
        self.lambda
            .iter()
            .map(|z| z.arg().abs().min((-z).arg().abs()))
            .fold(0.0, f64::max)
    }

    /// Smallest |Re λ| over the spectrum: distance from the imaginary axis.
    pub fn imaginary_axis_gap(&self) -> f64 {
        self.lambda.iter().map(|z| z.re.abs()).fold(f64::INFINITY, f64::min)
    }

    pub fn fingerprint(&self) -> serde_json::Value {
        serde_json::json!({
            "N": self.d.n(),
            "weight-id": self.grid().weight_id(),
            "B-id": self.b.id(),
            "kind": format!("{:?}", self.kind),
            "kappa": self.accretivity.kappa,
            "mu": self.accretivity.mu,
            "cond": self.cond,
        })
    }

    /// T x applied directly (not through the calculus), grid coordinates.
    pub fn apply_operator(&self, x: &[c64]) -> Vec<c64> {
        match self.kind {
            Composition::DB => self.d.apply(&self.b.apply(x)),
            Composition::BD => self.b.apply(&self.d.apply(x)),
        }
    }

    /// Splits Euclidean y into range coordinates a and null coefficients.
    fn split(&self, y: &[c64]) -> (Vec<c64>, [c64; 2]) {
        let ne = self.d.null_euclid();
        match self.kind {
            Composition::DB => {
                let p = [linalg::dot(y, &ne[0]), linalg::dot(y, &ne[1])];
                let g = &self.split_small;
                let nb = [g[0][0] * p[0] + g[0][1] * p[1], g[1][0] * p[0] + g[1][1] * p[1]];
                let mut r = y.to_vec();
                for (k, kn) in self.k_null.iter().enumerate() {
                    for (ri, ki) in r.iter_mut().zip(kn) {
                        *ri -= ki * nb[k];
                    }
                }
                (self.d.restrict(&r), nb)
            }
            Composition::BD => {
                let a = linalg::mat_vec(self.ubu_inv.as_ref().unwrap(), &self.d.restrict(y));
                let r = linalg::sub(y, &self.range_basis_apply(&a));
                (a, [linalg::dot(&r, &ne[0]), linalg::dot(&r, &ne[1])])
            }
        }
    }

    /// Euclidean vector of range coordinates a: U a for DB, B U a for BD.
    fn range_basis_apply(&self, a: &[c64]) -> Vec<c64> {
        match self.kind {
            Composition::DB => self.d.lift(a),
            Composition::BD => self.b.apply(&self.d.lift(a)),
        }
    }

    fn join(&self, a: &[c64], nb: [c64; 2]) -> Vec<c64> {
        let mut y = self.range_basis_apply(a);
        for (k, kn) in self.k_null.iter().enumerate() {
            if nb[k] != ZERO {
                for (yi, ki) in y.iter_mut().zip(kn) {
                    *yi += ki * nb[k];
                }
            }
        }
        y
    }

    /// Eigen coordinates of a grid field.
    pub fn spectral_coords(&self, x: &[c64]) -> SpectralCoords {
        let (a, null) = self.split(&self.grid().to_euclid(x));
        SpectralCoords { c: linalg::mat_vec(&self.vinv, &a), null }
    }

    /// Grid field with eigen coefficients `c` and null coefficients `null`.
    pub fn synthesize(&self, c: &[c64], null: [c64; 2]) -> Vec<c64> {
        let a = linalg::mat_vec(&self.v, c);
        self.grid().from_euclid(&self.join(&a, null))
    }

    /// Projection onto the closure of R(T) along N(T).
    pub fn range_part(&self, x: &[c64]) -> Vec<c64> {
        let (a, _) = self.split(&self.grid().to_euclid(x));
        self.grid().from_euclid(&self.range_basis_apply(&a))
    }

    /// Projection onto N(T) along R(T).
    pub fn null_part(&self, x: &[c64]) -> Vec<c64> {
        let (_, nb) = self.split(&self.grid().to_euclid(x));
        let y = self.join(&vec![ZERO; self.d.range_dim()], nb);
        self.grid().from_euclid(&y)
    }

    /// f(T) x in grid coordinates.
    pub fn apply(&self, f: Func, x: &[c64]) -> Result<Vec<c64>> {
        match self.backend {
            Backend::Eigen => Ok(self.apply_fn(|z| f.eval(z), f.at_zero(), x)),
            Backend::Direct => self.apply_direct(f, x),
        }
    }

    /// f(T) x for an arbitrary scalar function through the eigenbasis.
    pub fn apply_fn(&self, f: impl Fn(c64) -> c64, f0: c64, x: &[c64]) -> Vec<c64> {
        let sc = self.spectral_coords(x);
        let c: Vec<c64> = sc.c.iter().zip(&self.lambda).map(|(c, l)| c * f(*l)).collect();
        self.synthesize(&c, [sc.null[0] * f0, sc.null[1] * f0])
    }

    fn apply_direct(&self, f: Func, x: &[c64]) -> Result<Vec<c64>> {
        let (a, nb) = self.split(&self.grid().to_euclid(x));
        let fa = self.apply_range_direct(f, &a, false)?;
        let f0 = f.at_zero();
        Ok(self.grid().from_euclid(&self.join(&fa, [nb[0] * f0, nb[1] * f0])))
    }

    /// f(T_c) a for coordinates a of the compression to the closure of R(D).
    pub fn apply_range(&self, f: Func, a: &[c64]) -> Result<Vec<c64>> {
        match self.backend {
            Backend::Eigen => {
                let c = linalg::mat_vec(&self.vinv, a);
                let c: Vec<c64> = c.iter().zip(&self.lambda).map(|(c, l)| c * f.eval(*l)).collect();
                Ok(linalg::mat_vec(&self.v, &c))
            }
            Backend::Direct => self.apply_range_direct(f, a, false),
        }
    }

    /// f(T_c)^* a, the Euclidean adjoint of [`Self::apply_range`].
    pub fn apply_range_adjoint(&self, f: Func, a: &[c64]) -> Result<Vec<c64>> {
        match self.backend {
            Backend::Eigen => {
                let c = linalg::mat_vec_adjoint(&self.v, a);
                let c: Vec<c64> = c.iter().zip(&self.lambda).map(|(c, l)| c * f.eval(*l).conj()).collect();
                Ok(linalg::mat_vec_adjoint(&self.vinv, &c))
            }
            Backend::Direct => self.apply_range_direct(f, a, true),
        }
    }

    /// f(T_c) as a matrix in range coordinates.
    pub fn range_matrix(&self, f: Func) -> Result<CMat> {
        let m = self.tc.nrows();
        if self.backend == Backend::Eigen {
            let vals: Vec<c64> = self.lambda.iter().map(|l| f.eval(*l)).collect();
            let vd = CMat::from_fn(m, m, |i, j| self.v[(i, j)] * vals[j]);
            return Ok(&vd * &self.vinv);
        }
        let id = CMat::identity(m, m);
        Ok(match f {
            Func::Sgn => self.sign_matrix()?.clone(),
            Func::ChiPlus => (&id + self.sign_matrix()?) * faer::Scale(c64::new(0.5, 0.0)),
            Func::ChiMinus => (&id - self.sign_matrix()?) * faer::Scale(c64::new(0.5, 0.0)),
            Func::Abs => &self.tc * self.sign_matrix()?,
            Func::ExpAbs(t) => linalg::expm(&((&self.tc * self.sign_matrix()?) * faer::Scale(c64::new(-t, 0.0)))),
            _ => {
                let cols: Vec<Vec<c64>> = (0..m)
                    .map(|j| {
                        let e: Vec<c64> = (0..m).map(|i| if i == j { ONE } else { ZERO }).collect();
                        self.apply_range_direct(f, &e, false)
                    })
                    .collect::<Result<_>>()?;
                CMat::from_fn(m, m, |i, j| cols[j][i])
            }
        })
    }

    /// Range coordinates of a grid field (its component along R(T)).
    pub fn range_coords(&self, x: &[c64]) -> Vec<c64> {
        self.split(&self.grid().to_euclid(x)).0
    }

    /// Grid field with range coordinates `a` and no null component.
    pub fn from_range_coords(&self, a: &[c64]) -> Vec<c64> {
        self.grid().from_euclid(&self.range_basis_apply(a))
    }

    fn apply_range_direct(&self, f: Func, a: &[c64], adjoint: bool) -> Result<Vec<c64>> {
        let m = a.len();
        let hess = self.hessenberg();
        // (1 + itT)^{-1} or its adjoint
        let resolvent = |t: f64, a: &[c64]| -> Result<Vec<c64>> {
            let r = if adjoint {
                hess.solve_shifted_adjoint(ONE, I * t, a)
            } else {
                hess.solve_shifted(ONE, I * t, a)
            };
            r.map_err(|_| Error::ResolventSingular { t })
        };
        let mv = |mat: &CMat, a: &[c64]| if adjoint { linalg::mat_vec_adjoint(mat, a) } else { linalg::mat_vec(mat, a) };
        Ok(match f {
            Func::Resolvent(t) => resolvent(t, a)?,
            Func::P(t) => {
                let (p, q) = (resolvent(t, a)?, resolvent(-t, a)?);
                linalg::scale(&linalg::add(&p, &q), c64::new(0.5, 0.0))
            }
            Func::Q(t) | Func::Psi(t) => {
                let (p, q) = (resolvent(t, a)?, resolvent(-t, a)?);
                let s = if adjoint { c64::new(0.0, 0.5) } else { c64::new(0.0, -0.5) };
                linalg::scale(&linalg::sub(&q, &p), s)
            }
            Func::Sgn => mv(self.sign_matrix()?, a),
            Func::ChiPlus | Func::ChiMinus => {
                let s = mv(self.sign_matrix()?, a);
                let sg = if f == Func::ChiPlus { 1.0 } else { -1.0 };
                a.iter().zip(&s).map(|(x, y)| (x + y * sg) * 0.5).collect()
            }
            Func::Abs => mv(&(&self.tc * self.sign_matrix()?), a),
            Func::ExpAbs(t) => {
                let ts = &self.tc * self.sign_matrix()?;
                let g = CMat::from_fn(m, m, |i, j| ts[(i, j)] * (-t));
                mv(&linalg::expm(&g), a)
            }
        })
    }

    /// sup over probe points λ off the sector of ‖(λ - T)^{-1}‖ dist(λ, S_μ)
    /// on the closure of R(D), with μ the pointwise angle bound.
    pub fn resolvent_bound(&self) -> f64 {
        use std::f64::consts::FRAC_PI_2;
        let mu = self.accretivity.mu_bound.min(FRAC_PI_2 - 1e-3);
        let m = self.lambda.len();
        let vadj = self.v.adjoint().to_owned();
        let vinv_adj = self.vinv.adjoint().to_owned();
        let scale = self.lambda.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let mut worst: f64 = 0.0;
        for phi in [mu + 0.5 * (FRAC_PI_2 - mu), FRAC_PI_2] {
            for k in 0..8 {
                let r = scale * (-(k as f64) * 1.5).exp2();
                let z = c64::from_polar(r, phi);
                let dist = r * (phi - mu).sin();
                let diag: Vec<c64> = self.lambda.iter().map(|l| ONE / (z - l)).collect();
                let op = |a: &[c64]| {
                    let c = linalg::mat_vec(&self.vinv, a);
                    let c: Vec<c64> = c.iter().zip(&diag).map(|(c, d)| c * d).collect();
                    linalg::mat_vec(&self.v, &c)
                };
                let adj = |a: &[c64]| {
                    let c = linalg::mat_vec(&vadj, a);
                    let c: Vec<c64> = c.iter().zip(&diag).map(|(c, d)| c * d.conj()).collect();
                    linalg::mat_vec(&vinv_adj, &c)
                };
                worst = worst.max(linalg::power_norm(m, op, adj, 60, 7) * dist);
            }
        }
        worst
    }
}

/// Off-diagonal decay measurement for one pair of arcs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OffDiagonalReport {
    pub dist: f64,
    pub ratios: Vec<f64>,
    pub resolvent: Vec<f64>,
    pub q: Vec<f64>,
    /// Fitted order N in ratio ≈ C (dist/t)^{-N}.
    pub order_resolvent: f64,
    pub order_q: f64,
}

/// Periodic distance between two arcs given as cell ranges.
pub fn arc_distance(n: usize, e: &std::ops::Range<usize>, f: &std::ops::Range<usize>) -> f64 {
    let mut best = usize::MAX;
    for i in e.clone() {
        for j in f.clone() {
            let d = i.abs_diff(j);
            best = best.min(d.min(n - d));
        }
    }
    if best == 0 {
        0.0
    } else {
        (best as f64 - 1.0).max(0.0) / n as f64
    }
}

/// ‖1_E R_t u‖/‖u‖ and ‖1_E Q_t u‖/‖u‖ for u supported in F at t = dist/r
/// for each ratio r, with the log-log decay order fitted.
pub fn offdiag_probe(
    calc: &SpectralCalculus,
    e: std::ops::Range<usize>,
    f: std::ops::Range<usize>,
    ratios: &[f64],
    seed: u64,
) -> Result<OffDiagonalReport> {
    let n = calc.d.n();
    let grid = calc.grid();
    let dist = arc_distance(n, &e, &f);
    let mut rng = crate::rng(seed);
    let mut u = vec![ZERO; 2 * n];
    for i in f.clone() {
        u[i] = c64::new(linalg::gaussian(&mut rng), linalg::gaussian(&mut rng));
        u[n + i] = c64::new(linalg::gaussian(&mut rng), linalg::gaussian(&mut rng));
    }
    let nu = grid.norm(&u);
    let restricted_norm = |x: &[c64]| {
        let mut y = vec![ZERO; 2 * n];
        for i in e.clone() {
            y[i] = x[i];
            y[n + i] = x[n + i];
        }
        grid.norm(&y)
    };
    let (mut rr, mut qq) = (Vec::new(), Vec::new());
    for r in ratios {
        let t = if dist > 0.0 { dist / r } else { 1.0 / r };
        rr.push(restricted_norm(&calc.apply(Func::Resolvent(t), &u)?) / nu);
        qq.push(restricted_norm(&calc.apply(Func::Q(t), &u)?) / nu);
    }
    let fit = |ys: &[f64]| -> f64 {
        let xs: Vec<f64> = ratios.iter().map(|r| r.ln()).collect();
        let ly: Vec<f64> = ys.iter().map(|y| y.max(1e-300).ln()).collect();
        -least_squares_slope(&xs, &ly)
    };
    Ok(OffDiagonalReport {
        dist,
        ratios: ratios.to_vec(),
        order_resolvent: fit(&rr),
        order_q: fit(&qq),
        resolvent: rr,
        q: qq,
    })
}

pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Report of the Riesz-transform isometry and the square-root equivalence.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KatoReport {
    /// max |‖R_w f‖/‖f‖ - 1| over probes.
    pub riesz_defect: f64,
    /// min and max of ‖√L u‖/‖G u‖ with L = -a div_w d G.
    pub c1: f64,
    pub c2: f64,
    pub probes: usize,
}

/// Probe functions consistent across grid sizes: low Fourier modes with
/// seeded coefficients.
pub fn smooth_probe(n: usize, rng: &mut crate::Rng, modes: usize) -> Vec<c64> {
    let coeffs: Vec<(c64, c64)> = (0..modes)
        .map(|_| {
            (
                c64::new(linalg::gaussian(rng), linalg::gaussian(rng)),
                c64::new(linalg::gaussian(rng), linalg::gaussian(rng)),
            )
        })
        .collect();
    (0..n)
        .map(|i| {
            let x = (i as f64 + 0.5) / n as f64;
            coeffs
                .iter()
                .enumerate()
                .map(|(k, (a, b))| {
                    let th = 2.0 * std::f64::consts::PI * (k + 1) as f64 * x;
                    (a * th.cos() + b * th.sin()) / (k + 1) as f64
                })
                .sum()
        })
        .collect()
}

/// R_w = G(-Δ_w)^{-1/2} on mean-zero functions and √(-a div_w d G) through
/// the BD calculus with B = diag(a, d).
pub fn riesz_and_kato(grid: &WeightedGrid, b: &CoefficientField, probes: usize, seed: u64) -> Result<KatoReport> {
    if b.matrices().iter().any(|m| m[1] != ZERO || m[2] != ZERO) {
        return Err(Error::InvalidParameter("coefficients must be block diagonal".into()));
    }
    let d = DiscreteD::new(grid)?;
    let n = grid.n();
    let h = grid.h();
    let s: Vec<f64> = grid.weights().iter().map(|w| (h * w).sqrt()).collect();
    // -Δ_w in Euclidean coordinates is G_e^T G_e
    let ge = CMat::from_fn(n, n, |i, j| {
        if j == i {
            c64::new(-1.0 / h, 0.0)
        } else if j == (i + 1) % n {
            c64::new(s[i] / (s[j] * h), 0.0)
        } else {
            ZERO
        }
    });
    let lap = &ge.adjoint().to_owned() * &ge;
    let (vals, vecs) = linalg::hermitian_eigen(&lap)?;
    let mut rng = crate::rng(seed);
    let mut riesz_defect: f64 = 0.0;
    for _ in 0..probes {
        let mut f = smooth_probe(n, &mut rng, 12);
        let mean = grid.inner_scalar(&f, &vec![ONE; n]) / grid.total_mass();
        f.iter_mut().for_each(|v| *v -= mean);
        let y: Vec<c64> = f.iter().zip(&s).map(|(v, si)| v * *si).collect();
        // coefficients in the eigenbasis, dropping the kernel
        let mut g = vec![ZERO; n];
        for k in 1..n {
            let ck: c64 = (0..n).map(|i| vecs[(i, k)].conj() * y[i]).sum::<c64>() / vals[k].sqrt();
            for i in 0..n {
                g[i] += vecs[(i, k)] * ck;
            }
        }
        let gx: Vec<c64> = g.iter().zip(&s).map(|(v, si)| v / *si).collect();
        let rf = d.gradient(&gx);
        riesz_defect = riesz_defect.max((grid.norm(&rf) / grid.norm(&f) - 1.0).abs());
    }
    let calc = SpectralCalculus::new(&d, b, Composition::BD)?;
    let (mut c1, mut c2) = (f64::INFINITY, 0.0f64);
    for k in 0..probes {
        let u = if k % 2 == 0 {
            smooth_probe(n, &mut rng, 12)
        } else {
            linalg::random_vector(&mut rng, n)
        };
        let mut x = u.clone();
        x.extend(vec![ZERO; n]);
        let root = calc.apply(Func::Abs, &x)?;
        let gu = d.gradient(&u);
        let r = grid.norm(&root[..n]) / grid.norm(&gu);
        c1 = c1.min(r);
        c2 = c2.max(r);
    }
    Ok(KatoReport { riesz_defect, c1, c2, probes })
}

/// Residuals of the splitting and intertwining identities on random fields.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StructureReport {
    pub splitting: f64,
    pub intertwining_sgn: f64,
    pub intertwining_chi: f64,
    pub similarity: f64,
}

/// Checks R(DB) ⊕ N(DB) projector identities, b(DB)D = D b(BD) for
/// b ∈ {sgn, χ⁺}, and f(BD)B = B f(DB) on R(D).
pub fn structure_checks(db: &SpectralCalculus, bd: &SpectralCalculus, samples: usize, seed: u64) -> Result<StructureReport> {
    let grid = db.grid();
    let n = grid.n();
    let d = db.discrete_d();
    let b = db.coefficients();
    let mut rng = crate::rng(seed);
    let mut rep = StructureReport { splitting: 0.0, intertwining_sgn: 0.0, intertwining_chi: 0.0, similarity: 0.0 };
    let rel = |a: &[c64], b: &[c64], s: f64| grid.norm(&linalg::sub(a, b)) / s;
    for _ in 0..samples {
        let x = linalg::random_vector(&mut rng, 2 * n);
        let nx = grid.norm(&x);
        let pr = db.range_part(&x);
        let pn = db.null_part(&x);
        let e1 = rel(&linalg::add(&pr, &pn), &x, nx);
        let e2 = grid.norm(&db.null_part(&pr)) / nx;
        let e3 = grid.norm(&db.range_part(&pn)) / nx;
        rep.splitting = rep.splitting.max(e1).max(e2).max(e3);
        let dx = d.apply(&x);
        let scale = grid.norm(&dx);
        for (f, slot) in [(Func::Sgn, 0), (Func::ChiPlus, 1)] {
            let lhs = db.apply(f, &dx)?;
            let rhs = d.apply(&bd.apply(f, &x)?);
            let e = rel(&lhs, &rhs, scale);
            if slot == 0 {
                rep.intertwining_sgn = rep.intertwining_sgn.max(e);
            } else {
                rep.intertwining_chi = rep.intertwining_chi.max(e);
            }
        }
        let u = d.project_range(&x);
        let lhs = bd.apply(Func::Sgn, &b.apply(&u))?;
        let rhs = b.apply(&db.apply(Func::Sgn, &u)?);
        rep.similarity = rep.similarity.max(rel(&lhs, &rhs, grid.norm(&b.apply(&u))));
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::CoefficientSpec;
    use crate::weights::WeightModel;

    fn grid(n: usize, a: f64) -> WeightedGrid {
        WeightedGrid::new(&WeightModel::power(a, 0).unwrap(), n).unwrap()
    }

    #[test]
    fn euclidean_form_matches_grid_form() {
        let g = grid(32, 0.5);
        let d = DiscreteD::new(&g).unwrap();
        let mut rng = crate::rng(1);
        let x = linalg::random_vector(&mut rng, 64);
        let a = g.to_euclid(&d.apply(&x));
        let b = d.apply_euclid(&g.to_euclid(&x));
        assert!(linalg::norm(&linalg::sub(&a, &b)) < 1e-12 * linalg::norm(&a));
    }

    #[test]
    fn null_vectors_and_adjointness() {
        let g = grid(64, -0.4);
        let d = DiscreteD::new(&g).unwrap();
        assert!(d.self_adjointness_defect() < 1e-12);
        assert!(d.null_residual(c64::new(1.3, -0.2), c64::new(-0.7, 2.0)) < 1e-10);
        let r = d.restrict(&d.null_euclid()[0]);
        assert!(linalg::norm(&r) < 1e-14);
    }

    #[test]
    fn identity_calculus_is_self_adjoint() {
        let g = grid(16, 0.5);
        let d = DiscreteD::new(&g).unwrap();
        let calc = SpectralCalculus::new(&d, &CoefficientField::identity(16), Composition::DB).unwrap();
        assert!(calc.sector_angle() < 1e-8);
        assert!(calc.reconstruction_error() < 1e-10);
        assert!((calc.accretivity().kappa - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rotation_rotates_spectrum() {
        let g = grid(16, 0.0);
        let d = DiscreteD::new(&g).unwrap();
        let b = CoefficientField::from_spec(&CoefficientSpec::Scalar { theta: 0.3 }, 16).unwrap();
        let calc = SpectralCalculus::new(&d, &b, Composition::DB).unwrap();
        assert!((calc.sector_angle() - 0.3).abs() < 1e-6);
    }

    #[test]
    fn negative_identity_is_refused() {
        let g = grid(16, 0.0);
        let d = DiscreteD::new(&g).unwrap();
        let b = CoefficientField::identity(16).map(|m| m.map(|v| -v), "minus");
        assert!(matches!(SpectralCalculus::new(&d, &b, Composition::DB), Err(Error::NotAccretive { .. })));
    }

    #[test]
    fn resolvent_fixes_null_space() {
        let g = grid(16, 0.5);
        let d = DiscreteD::new(&g).unwrap();
        let b = CoefficientField::from_spec(&CoefficientSpec::Random { seed: 2, level: 2, amplitude: 0.5, hermitian: false }, 16)
            .unwrap();
        let calc = SpectralCalculus::new(&d, &b, Composition::DB).unwrap();
        let binv = b.inverse().unwrap();
        let k = binv.apply(&d.null_basis()[1]);
        let r = calc.apply(Func::Resolvent(0.3), &k).unwrap();
        assert!(g.norm(&linalg::sub(&r, &k)) < 1e-10 * g.norm(&k));
        let s = calc.apply(Func::Sgn, &k).unwrap();
        assert!(g.norm(&s) < 1e-10 * g.norm(&k));
    }

    #[test]
    fn direct_backend_agrees_with_eigen() {
        let g = grid(16, 0.5);
        let d = DiscreteD::new(&g).unwrap();
        let b = CoefficientField::from_spec(&CoefficientSpec::Random { seed: 5, level: 2, amplitude: 0.6, hermitian: false }, 16)
            .unwrap();
        for kind in [Composition::DB, Composition::BD] {
            let calc = SpectralCalculus::new(&d, &b, kind).unwrap();
            let direct = calc.direct().unwrap();
            let mut rng = crate::rng(3);
            let x = linalg::random_vector(&mut rng, 32);
            for f in [Func::Resolvent(0.2), Func::Q(0.1), Func::Sgn, Func::ChiMinus, Func::ExpAbs(0.05), Func::Abs] {
                let a = calc.apply(f, &x).unwrap();
                let b = direct.apply(f, &x).unwrap();
                assert!(g.norm(&linalg::sub(&a, &b)) < 1e-8 * g.norm(&x).max(g.norm(&a)), "{kind:?} {f:?}");
            }
        }
    }

    #[test]
    fn structure_identities_hold() {
        let g = grid(32, 0.5);
        let d = DiscreteD::new(&g).unwrap();
        let b = CoefficientField::from_spec(&CoefficientSpec::Random { seed: 8, level: 3, amplitude: 0.6, hermitian: false }, 32)
            .unwrap();
        let db = SpectralCalculus::new(&d, &b, Composition::DB).unwrap();
        let bd = SpectralCalculus::new(&d, &b, Composition::BD).unwrap();
        let r = structure_checks(&db, &bd, 5, 1).unwrap();
        assert!(r.splitting < 1e-9, "{r:?}");
        assert!(r.intertwining_sgn < 1e-9, "{r:?}");
        assert!(r.intertwining_chi < 1e-9, "{r:?}");
        assert!(r.similarity < 1e-9, "{r:?}");
    }

    #[test]
    fn kato_for_identity_is_exact() {
        let g = grid(32, 0.5);
        let rep = riesz_and_kato(&g, &CoefficientField::identity(32), 6, 4).unwrap();
        assert!(rep.riesz_defect < 1e-9, "{rep:?}");
        assert!((rep.c1 - 1.0).abs() < 1e-10 && (rep.c2 - 1.0).abs() < 1e-10, "{rep:?}");
    }
}
