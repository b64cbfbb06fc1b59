//! The associated Riemannian space: metric families a_ij(x), the unit 1-form
//! b_i(x), Christoffel symbols, ∇b, and the Riemannian curvature tensor with
//! its covariant derivative.
//!
//! Index layouts (fixed throughout the crate):
//!   da[m,n,k]          = ∂a_mn/∂x^k
//!   christoffel[k,i,j] = a^k_{ij}            (symmetric in i,j)
//!   nabla_b[n,j]       = ∇_n b_j
//!   riem_curv[n,i,k,m] = a_n{}^i{}_{km}      (antisymmetric in k,m)
//!   d_riem_curv[k,h,t,i,j] = ∇_k a_h{}^t{}_{ij}

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::error::{EvalError, Result};
use crate::tensor::{T3, T4, T5};
use crate::{Matrix, Vector};

// ---------------------------------------------------------------- config

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecConfig {
    pub dim: usize,
    pub g: f64,
    pub metric_family: MetricConfig,
    pub b_family: BConfig,
    #[serde(default)]
    pub derivative_mode: DerivativeMode,
    #[serde(default = "default_fd_step")]
    pub fd_step: f64,
}

fn default_fd_step() -> f64 {
    1e-5
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerivativeMode {
    #[default]
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "tag", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MetricConfig {
    /// Constant metric; `diag` defaults to all ones.
    Flat { diag: Option<Vec<f64>> },
    /// a_mm(x) = exp(2 Σ_k coeff[m][k] x^k), off-diagonal zero.
    DiagonalExp { coeff: Vec<Vec<f64>> },
    /// a_ij(x) = δ_ij + ε·P_ij(x) with P a random symmetric polynomial of the
    /// given degree, coefficients drawn reproducibly from `seed`.
    PolynomialPerturbation {
        eps: f64,
        seed: u64,
        degree: Option<usize>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "tag", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BConfig {
    /// β_i constant; normalized pointwise against a^{ij}.
    ConstantAxis { axis: Vec<f64> },
    /// β_i = ∂_i(lin·x + ½ x·quad·x); quad symmetrized.
    GradientOfScalar {
        lin: Vec<f64>,
        quad: Option<Vec<Vec<f64>>>,
    },
    /// β_i(x) = constant_i + Σ_k linear[i][k] x^k.
    RawVector {
        constant: Vec<f64>,
        linear: Option<Vec<Vec<f64>>>,
    },
}

// ---------------------------------------------------------------- families

/// Polynomial coefficient tables, symmetric in the pair (i,j) and in all
/// x-indices.  deg-0..3 terms; higher-degree tables empty when unused.
#[derive(Debug, Clone)]
struct PolyTables {
    eps: f64,
    c0: Matrix,
    c1: T3,
    c2: T4,
    c3: T5,
    degree: usize,
}

impl PolyTables {
    fn generate(n: usize, eps: f64, seed: u64, degree: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |scale: f64| rng.gen_range(-1.0..1.0) * scale;
        let mut c0 = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = draw(1.0);
                c0[(i, j)] = v;
                c0[(j, i)] = v;
            }
        }
        let mut c1 = T3::zeros(n);
        if degree >= 1 {
            for i in 0..n {
                for j in i..n {
                    for k in 0..n {
                        let v = draw(1.0);
                        c1[(i, j, k)] = v;
                        c1[(j, i, k)] = v;
                    }
                }
            }
        }
        let mut c2 = T4::zeros(n);
        if degree >= 2 {
            for i in 0..n {
                for j in i..n {
                    for k in 0..n {
                        for l in k..n {
                            let v = draw(0.5);
                            for (kk, ll) in [(k, l), (l, k)] {
                                c2[(i, j, kk, ll)] = v;
                                c2[(j, i, kk, ll)] = v;
                            }
                        }
                    }
                }
            }
        }
        let mut c3 = T5::zeros(n);
        if degree >= 3 {
            for i in 0..n {
                for j in i..n {
                    for k in 0..n {
                        for l in k..n {
                            for m in l..n {
                                let v = draw(0.25);
                                for (kk, ll, mm) in [
                                    (k, l, m),
                                    (k, m, l),
                                    (l, k, m),
                                    (l, m, k),
                                    (m, k, l),
                                    (m, l, k),
                                ] {
                                    c3[(i, j, kk, ll, mm)] = v;
                                    c3[(j, i, kk, ll, mm)] = v;
                                }
                            }
                        }
                    }
                }
            }
        }
        Self { eps, c0, c1, c2, c3, degree }
    }
}

#[derive(Debug, Clone)]
pub enum MetricFamily {
    Flat { diag: Vector },
    DiagonalExp { coeff: Matrix },
    Polynomial(PolyFamily),
}

#[derive(Debug, Clone)]
pub struct PolyFamily {
    tables: PolyTables,
}

#[derive(Debug, Clone)]
pub enum BField {
    /// β constant.
    Constant { beta: Vector },
    /// β_i(x) = c_i + M_{ik} x^k, with M symmetric for gradient-of-scalar.
    Affine { c: Vector, m: Matrix },
}

impl MetricFamily {
    pub fn a(&self, x: &Vector) -> Matrix {
        let n = x.len();
        match self {
            MetricFamily::Flat { diag } => Matrix::from_diagonal(diag),
            MetricFamily::DiagonalExp { coeff } => {
                let mut a = Matrix::zeros(n, n);
                for m in 0..n {
                    a[(m, m)] = (2.0 * coeff.row(m).transpose().dot(x)).exp();
                }
                a
            }
            MetricFamily::Polynomial(p) => {
                let t = &p.tables;
                let mut a = Matrix::identity(n, n);
                for i in 0..n {
                    for j in 0..n {
                        let mut s = t.c0[(i, j)];
                        if t.degree >= 1 {
                            for k in 0..n {
                                s += t.c1[(i, j, k)] * x[k];
                            }
                        }
                        if t.degree >= 2 {
                            for k in 0..n {
                                for l in 0..n {
                                    s += t.c2[(i, j, k, l)] * x[k] * x[l];
                                }
                            }
                        }
                        if t.degree >= 3 {
                            for k in 0..n {
                                for l in 0..n {
                                    for m in 0..n {
                                        s += t.c3[(i, j, k, l, m)] * x[k] * x[l] * x[m];
                                    }
                                }
                            }
                        }
                        a[(i, j)] += t.eps * s;
                    }
                }
                a
            }
        }
    }

    /// da[m,n,k] = ∂a_mn/∂x^k.
    pub fn da(&self, x: &Vector) -> T3 {
        let n = x.len();
        match self {
            MetricFamily::Flat { .. } => T3::zeros(n),
            MetricFamily::DiagonalExp { coeff } => {
                let a = self.a(x);
                let mut d = T3::zeros(n);
                for m in 0..n {
                    for k in 0..n {
                        d[(m, m, k)] = 2.0 * coeff[(m, k)] * a[(m, m)];
                    }
                }
                d
            }
            MetricFamily::Polynomial(p) => {
                let t = &p.tables;
                T3::from_fn(n, |i, j, k| {
                    let mut s = if t.degree >= 1 { t.c1[(i, j, k)] } else { 0.0 };
                    if t.degree >= 2 {
                        for l in 0..n {
                            s += 2.0 * t.c2[(i, j, k, l)] * x[l];
                        }
                    }
                    if t.degree >= 3 {
                        for l in 0..n {
                            for m in 0..n {
                                s += 3.0 * t.c3[(i, j, k, l, m)] * x[l] * x[m];
                            }
                        }
                    }
                    t.eps * s
                })
            }
        }
    }

    /// d2a[m,n,k,l] = ∂²a_mn/∂x^k∂x^l.
    pub fn d2a(&self, x: &Vector) -> T4 {
        let n = x.len();
        match self {
            MetricFamily::Flat { .. } => T4::zeros(n),
            MetricFamily::DiagonalExp { coeff } => {
                let a = self.a(x);
                let mut d = T4::zeros(n);
                for m in 0..n {
                    for k in 0..n {
                        for l in 0..n {
                            d[(m, m, k, l)] = 4.0 * coeff[(m, k)] * coeff[(m, l)] * a[(m, m)];
                        }
                    }
                }
                d
            }
            MetricFamily::Polynomial(p) => {
                let t = &p.tables;
                T4::from_fn(n, |i, j, k, l| {
                    let mut s = if t.degree >= 2 { 2.0 * t.c2[(i, j, k, l)] } else { 0.0 };
                    if t.degree >= 3 {
                        for m in 0..n {
                            s += 6.0 * t.c3[(i, j, k, l, m)] * x[m];
                        }
                    }
                    t.eps * s
                })
            }
        }
    }

    /// d3a[m,n,k,l,p] = ∂³a_mn/∂x^k∂x^l∂x^p.
    pub fn d3a(&self, x: &Vector) -> T5 {
        let n = x.len();
        match self {
            MetricFamily::Flat { .. } => T5::zeros(n),
            MetricFamily::DiagonalExp { coeff } => {
                let a = self.a(x);
                let mut d = T5::zeros(n);
                for m in 0..n {
                    for k in 0..n {
                        for l in 0..n {
                            for p in 0..n {
                                d[(m, m, k, l, p)] = 8.0
                                    * coeff[(m, k)]
                                    * coeff[(m, l)]
                                    * coeff[(m, p)]
                                    * a[(m, m)];
                            }
                        }
                    }
                }
                d
            }
            MetricFamily::Polynomial(p) => {
                let t = &p.tables;
                if t.degree >= 3 {
                    T5::from_fn(n, |i, j, k, l, m| t.eps * 6.0 * t.c3[(i, j, k, l, m)])
                } else {
                    T5::zeros(n)
                }
            }
        }
    }
}

impl BField {
    /// Raw (un-normalized) covector β_i(x).
    pub fn beta(&self, x: &Vector) -> Vector {
        match self {
            BField::Constant { beta } => beta.clone(),
            BField::Affine { c, m } => c + m * x,
        }
    }

    /// dβ[n,i] = ∂β_i/∂x^n.
    pub fn dbeta(&self, n: usize) -> Matrix {
        match self {
            BField::Constant { .. } => Matrix::zeros(n, n),
            BField::Affine { m, .. } => m.transpose(),
        }
    }
}

// ---------------------------------------------------------------- spec

#[derive(Debug, Clone)]
pub struct ManifoldSpec {
    pub dim: usize,
    /// Finsleroid charge g, |g| < 2.
    pub g: f64,
    /// h = sqrt(1 − g²/4).
    pub h: f64,
    /// G = g/h.
    pub big_g: f64,
    pub metric: MetricFamily,
    pub b_field: BField,
    pub derivative_mode: DerivativeMode,
    pub fd_step: f64,
    /// 1/|β|_a at x = 0, recorded so runs can be reproduced from the raw input.
    pub b_norm_at_origin: f64,
    /// Sampling stays in the box |x_i| ≤ validity_halfwidth.
    pub validity_halfwidth: f64,
}

pub fn load_spec(text: &str) -> Result<ManifoldSpec> {
    let cfg: SpecConfig =
        toml::from_str(text).map_err(|e| EvalError::Config(e.to_string()))?;
    build_spec(&cfg)
}

pub fn build_spec(cfg: &SpecConfig) -> Result<ManifoldSpec> {
    let n = cfg.dim;
    if n < 2 {
        return Err(EvalError::Config("dim must be at least 2".into()));
    }
    if !(cfg.g.abs() < 2.0) {
        return Err(EvalError::ChargeOutOfRange);
    }
    if !(cfg.fd_step > 0.0) {
        return Err(EvalError::Config("fd_step must be positive".into()));
    }

    let metric = match &cfg.metric_family {
        MetricConfig::Flat { diag } => {
            let d = match diag {
                Some(v) => {
                    check_len(v, n, "metric_family.diag")?;
                    Vector::from_vec(v.clone())
                }
                None => Vector::from_element(n, 1.0),
            };
            MetricFamily::Flat { diag: d }
        }
        MetricConfig::DiagonalExp { coeff } => {
            let m = matrix_from_rows(coeff, n, "metric_family.coeff")?;
            MetricFamily::DiagonalExp { coeff: m }
        }
        MetricConfig::PolynomialPerturbation { eps, seed, degree } => {
            let degree = degree.unwrap_or(3);
            if degree > 3 {
                return Err(EvalError::Config(
                    "metric_family.degree must be at most 3".into(),
                ));
            }
            MetricFamily::Polynomial(PolyFamily {
                tables: PolyTables::generate(n, *eps, *seed, degree),
            })
        }
    };

    let b_field = match &cfg.b_family {
        BConfig::ConstantAxis { axis } => {
            check_len(axis, n, "b_family.axis")?;
            let beta = Vector::from_vec(axis.clone());
            if beta.norm() == 0.0 {
                return Err(EvalError::Config("b_family.axis must be nonzero".into()));
            }
            BField::Constant { beta }
        }
        BConfig::GradientOfScalar { lin, quad } => {
            check_len(lin, n, "b_family.lin")?;
            let q = match quad {
                Some(rows) => {
                    let m = matrix_from_rows(rows, n, "b_family.quad")?;
                    (&m + m.transpose()) * 0.5
                }
                None => Matrix::zeros(n, n),
            };
            BField::Affine { c: Vector::from_vec(lin.clone()), m: q }
        }
        BConfig::RawVector { constant, linear } => {
            check_len(constant, n, "b_family.constant")?;
            let m = match linear {
                Some(rows) => matrix_from_rows(rows, n, "b_family.linear")?,
                None => Matrix::zeros(n, n),
            };
            BField::Affine { c: Vector::from_vec(constant.clone()), m }
        }
    };

    let validity_halfwidth = match &metric {
        MetricFamily::Flat { .. } => 1.0,
        MetricFamily::DiagonalExp { .. } => 0.8,
        MetricFamily::Polynomial(_) => 0.8,
    };

    let spec = ManifoldSpec {
        dim: n,
        g: cfg.g,
        h: (1.0 - cfg.g * cfg.g / 4.0).sqrt(),
        big_g: cfg.g / (1.0 - cfg.g * cfg.g / 4.0).sqrt(),
        metric,
        b_field,
        derivative_mode: cfg.derivative_mode,
        fd_step: cfg.fd_step,
        b_norm_at_origin: 0.0,
        validity_halfwidth,
    };

    // Probe positive definiteness and a nonzero b over the validity box:
    // center, box face centers, and a fixed set of pseudorandom interior
    // points.
    let mut probes: Vec<Vector> = vec![Vector::zeros(n)];
    for i in 0..n {
        for s in [-1.0, 1.0] {
            let mut x = Vector::zeros(n);
            x[i] = s * 0.9 * spec.validity_halfwidth;
            probes.push(x);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x50_44_50_52_4f_42_45);
    for _ in 0..8 {
        probes.push(Vector::from_fn(n, |_, _| {
            rng.gen_range(-0.9..0.9) * spec.validity_halfwidth
        }));
    }
    for x in &probes {
        let a = spec.metric.a(x);
        if nalgebra::linalg::Cholesky::new(a.clone()).is_none() {
            return Err(EvalError::MetricNotPositiveDefinite);
        }
        let beta = spec.b_field.beta(x);
        let a_inv = invert(&a)?;
        let s2 = (&a_inv * &beta).dot(&beta);
        if !(s2 > 0.0) {
            return Err(EvalError::Config(
                "b field vanishes inside the validity box".into(),
            ));
        }
    }

    let origin = Vector::zeros(n);
    let a0 = spec.metric.a(&origin);
    let beta0 = spec.b_field.beta(&origin);
    let s0 = (invert(&a0)? * &beta0).dot(&beta0).sqrt();
    Ok(ManifoldSpec { b_norm_at_origin: 1.0 / s0, ..spec })
}

fn check_len(v: &[f64], n: usize, what: &str) -> Result<()> {
    if v.len() != n {
        return Err(EvalError::Config(format!("{what} must have length {n}")));
    }
    Ok(())
}

fn matrix_from_rows(rows: &[Vec<f64>], n: usize, what: &str) -> Result<Matrix> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(EvalError::Config(format!("{what} must be {n}x{n}")));
    }
    Ok(Matrix::from_fn(n, n, |i, j| rows[i][j]))
}

pub fn invert(m: &Matrix) -> Result<Matrix> {
    m.clone().try_inverse().ok_or(EvalError::SingularMatrix)
}

// ---------------------------------------------------------------- frame

#[derive(Debug, Clone)]
pub struct PointFrame {
    pub x: Vector,
    pub a: Matrix,
    pub a_inv: Matrix,
    /// da[m,n,k] = ∂a_mn/∂x^k.
    pub da: T3,
    /// christoffel[k,i,j] = a^k_{ij}.
    pub christoffel: T3,
    /// b with unit a-norm: b_i and b^i = a^{ij} b_j.
    pub b_low: Vector,
    pub b_up: Vector,
    /// db[n,j] = ∂b_j/∂x^n (partial, not covariant).
    pub db: Matrix,
    /// nabla_b[n,j] = ∇_n b_j.
    pub nabla_b: Matrix,
    /// riem_curv[n,i,k,m] = a_n{}^i{}_{km}.
    pub riem_curv: T4,
    /// d_riem_curv[k,h,t,i,j] = ∇_k a_h{}^t{}_{ij}; None in finite-difference
    /// derivative mode (third metric derivatives are not probed by FD).
    pub d_riem_curv: Option<T5>,
    /// Charge data copied from the spec so downstream evaluation needs only
    /// the frame.
    pub g: f64,
    pub h: f64,
    pub big_g: f64,
}

impl ManifoldSpec {
    pub fn eval_point(&self, x: &Vector) -> Result<PointFrame> {
        let n = self.dim;
        assert_eq!(x.len(), n, "point dimension mismatch");
        let a = self.metric.a(x);
        if nalgebra::linalg::Cholesky::new(a.clone()).is_none() {
            return Err(EvalError::MetricNotPositiveDefinite);
        }
        let a_inv = invert(&a)?;

        let (da, d2a, d3a) = match self.derivative_mode {
            DerivativeMode::Analytic => (
                self.metric.da(x),
                Some(self.metric.d2a(x)),
                Some(self.metric.d3a(x)),
            ),
            DerivativeMode::FiniteDifference => (self.fd_da(x), None, None),
        };

        let chr = christoffel_from(&a_inv, &da);

        // Unit-normalized b and its x-derivative.
        let beta = self.b_field.beta(x);
        let dbeta = self.b_field.dbeta(n);
        let dai = dai_from(&a_inv, &da);
        let s2 = (&a_inv * &beta).dot(&beta);
        if !(s2 > 0.0) {
            return Err(EvalError::Config("b field vanishes at x".into()));
        }
        let s = s2.sqrt();
        let b_low = &beta / s;
        let b_up = &a_inv * &b_low;
        // ds_n = (dai[i,j,n] β_i β_j + 2 a^{ij} β_i dβ[n,j]) / (2s)
        let mut ds = Vector::zeros(n);
        for k in 0..n {
            let mut t = 0.0;
            for i in 0..n {
                for j in 0..n {
                    t += dai[(i, j, k)] * beta[i] * beta[j]
                        + 2.0 * a_inv[(i, j)] * beta[i] * dbeta[(k, j)];
                }
            }
            ds[k] = t / (2.0 * s);
        }
        // db[n,j] = dβ[n,j]/s − β_j ds_n / s²
        let db = Matrix::from_fn(n, n, |nn, j| dbeta[(nn, j)] / s - beta[j] * ds[nn] / s2);
        let mut nabla_b = db.clone();
        for nn in 0..n {
            for j in 0..n {
                let mut t = 0.0;
                for k in 0..n {
                    t += b_low[k] * chr[(k, nn, j)];
                }
                nabla_b[(nn, j)] -= t;
            }
        }

        let (riem, d_riem) = match self.derivative_mode {
            DerivativeMode::Analytic => {
                let d2a = d2a.unwrap();
                let d3a = d3a.unwrap();
                let dchr = dchristoffel_from(&a_inv, &da, &d2a);
                let d2chr = d2christoffel_from(&a_inv, &da, &d2a, &d3a);
                let riem = riemann_from(&chr, &dchr);
                let d_riem = nabla_riemann_from(&chr, &riem, &d_riemann_from(&chr, &dchr, &d2chr));
                (riem, Some(d_riem))
            }
            DerivativeMode::FiniteDifference => {
                let dchr = self.fd_dchristoffel(x);
                (riemann_from(&chr, &dchr), None)
            }
        };

        Ok(PointFrame {
            x: x.clone(),
            a,
            a_inv,
            da,
            christoffel: chr,
            b_low,
            b_up,
            db,
            nabla_b,
            riem_curv: riem,
            d_riem_curv: d_riem,
            g: self.g,
            h: self.h,
            big_g: self.big_g,
        })
    }

    fn fd_da(&self, x: &Vector) -> T3 {
        let n = self.dim;
        let st = self.fd_step;
        let mut d = T3::zeros(n);
        for k in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += st;
            xm[k] -= st;
            let ap = self.metric.a(&xp);
            let am = self.metric.a(&xm);
            for m in 0..n {
                for nn in 0..n {
                    d[(m, nn, k)] = (ap[(m, nn)] - am[(m, nn)]) / (2.0 * st);
                }
            }
        }
        d
    }

    /// dchr[k,i,j,l] by nested central differences of the FD Christoffels.
    fn fd_dchristoffel(&self, x: &Vector) -> T4 {
        let n = self.dim;
        let st = (self.fd_step).max(1e-5) * 10.0;
        let chr_at = |x: &Vector| -> Result<T3> {
            let a = self.metric.a(x);
            let a_inv = invert(&a)?;
            Ok(christoffel_from(&a_inv, &self.fd_da(x)))
        };
        let mut d = T4::zeros(n);
        for l in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[l] += st;
            xm[l] -= st;
            let (cp, cm) = match (chr_at(&xp), chr_at(&xm)) {
                (Ok(p), Ok(m)) => (p, m),
                _ => continue,
            };
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        d[(k, i, j, l)] = (cp[(k, i, j)] - cm[(k, i, j)]) / (2.0 * st);
                    }
                }
            }
        }
        d
    }
}

/// ∇_n b_j recomputed from a frame (thin accessor kept for API parity).
pub fn covariant_db(frame: &PointFrame) -> Matrix {
    frame.nabla_b.clone()
}

// ------------------------------------------------- derivative combinators

/// chr[k,i,j] = ½ a^{kt} (da[t,j,i] + da[t,i,j] − da[i,j,t]).
pub fn christoffel_from(a_inv: &Matrix, da: &T3) -> T3 {
    let n = a_inv.nrows();
    T3::from_fn(n, |k, i, j| {
        let mut s = 0.0;
        for t in 0..n {
            s += a_inv[(k, t)] * (da[(t, j, i)] + da[(t, i, j)] - da[(i, j, t)]);
        }
        0.5 * s
    })
}

/// dai[i,j,k] = ∂a^{ij}/∂x^k = −a^{ip} a^{jq} da[p,q,k].
fn dai_from(a_inv: &Matrix, da: &T3) -> T3 {
    let n = a_inv.nrows();
    T3::from_fn(n, |i, j, k| {
        let mut s = 0.0;
        for p in 0..n {
            for q in 0..n {
                s += a_inv[(i, p)] * a_inv[(j, q)] * da[(p, q, k)];
            }
        }
        -s
    })
}

/// d2ai[i,j,k,l] = ∂²a^{ij}/∂x^k∂x^l.
fn d2ai_from(a_inv: &Matrix, da: &T3, d2a: &T4) -> T4 {
    let n = a_inv.nrows();
    let dai = dai_from(a_inv, da);
    T4::from_fn(n, |i, j, k, l| {
        let mut s = 0.0;
        for p in 0..n {
            for q in 0..n {
                s += dai[(i, p, l)] * a_inv[(j, q)] * da[(p, q, k)]
                    + a_inv[(i, p)] * dai[(j, q, l)] * da[(p, q, k)]
                    + a_inv[(i, p)] * a_inv[(j, q)] * d2a[(p, q, k, l)];
            }
        }
        -s
    })
}

/// dchr[k,i,j,l] = ∂a^k_{ij}/∂x^l.
fn dchristoffel_from(a_inv: &Matrix, da: &T3, d2a: &T4) -> T4 {
    let n = a_inv.nrows();
    let dai = dai_from(a_inv, da);
    let s3 = |t: usize, i: usize, j: usize| da[(t, j, i)] + da[(t, i, j)] - da[(i, j, t)];
    let ds = |t: usize, i: usize, j: usize, l: usize| {
        d2a[(t, j, i, l)] + d2a[(t, i, j, l)] - d2a[(i, j, t, l)]
    };
    T4::from_fn(n, |k, i, j, l| {
        let mut s = 0.0;
        for t in 0..n {
            s += dai[(k, t, l)] * s3(t, i, j) + a_inv[(k, t)] * ds(t, i, j, l);
        }
        0.5 * s
    })
}

/// d2chr[k,i,j,l,p] = ∂²a^k_{ij}/∂x^l∂x^p.
fn d2christoffel_from(a_inv: &Matrix, da: &T3, d2a: &T4, d3a: &T5) -> T5 {
    let n = a_inv.nrows();
    let dai = dai_from(a_inv, da);
    let d2ai = d2ai_from(a_inv, da, d2a);
    let s3 = |t: usize, i: usize, j: usize| da[(t, j, i)] + da[(t, i, j)] - da[(i, j, t)];
    let ds = |t: usize, i: usize, j: usize, l: usize| {
        d2a[(t, j, i, l)] + d2a[(t, i, j, l)] - d2a[(i, j, t, l)]
    };
    let d2s = |t: usize, i: usize, j: usize, l: usize, p: usize| {
        d3a[(t, j, i, l, p)] + d3a[(t, i, j, l, p)] - d3a[(i, j, t, l, p)]
    };
    T5::from_fn(n, |k, i, j, l, p| {
        let mut s = 0.0;
        for t in 0..n {
            s += d2ai[(k, t, l, p)] * s3(t, i, j)
                + dai[(k, t, l)] * ds(t, i, j, p)
                + dai[(k, t, p)] * ds(t, i, j, l)
                + a_inv[(k, t)] * d2s(t, i, j, l, p);
        }
        0.5 * s
    })
}

/// riem[n,i,k,m] = ∂_k a^i_{nm} − ∂_m a^i_{nk} + a^u_{nm}a^i_{uk} − a^u_{nk}a^i_{um}.
pub fn riemann_from(chr: &T3, dchr: &T4) -> T4 {
    let n = chr.dim();
    T4::from_fn(n, |nn, i, k, m| {
        let mut s = dchr[(i, nn, m, k)] - dchr[(i, nn, k, m)];
        for u in 0..n {
            s += chr[(u, nn, m)] * chr[(i, u, k)] - chr[(u, nn, k)] * chr[(i, u, m)];
        }
        s
    })
}

/// dr[n,i,k,m,l] = ∂ riem[n,i,k,m] / ∂x^l.
fn d_riemann_from(chr: &T3, dchr: &T4, d2chr: &T5) -> T5 {
    let n = chr.dim();
    T5::from_fn(n, |nn, i, k, m, l| {
        let mut s = d2chr[(i, nn, m, k, l)] - d2chr[(i, nn, k, m, l)];
        for u in 0..n {
            s += dchr[(u, nn, m, l)] * chr[(i, u, k)] + chr[(u, nn, m)] * dchr[(i, u, k, l)]
                - dchr[(u, nn, k, l)] * chr[(i, u, m)]
                - chr[(u, nn, k)] * dchr[(i, u, m, l)];
        }
        s
    })
}

/// nr[k,h,t,i,j] = ∇_k a_h{}^t{}_{ij}.
fn nabla_riemann_from(chr: &T3, riem: &T4, d_riem: &T5) -> T5 {
    let n = chr.dim();
    T5::from_fn(n, |k, h, t, i, j| {
        let mut s = d_riem[(h, t, i, j, k)];
        for u in 0..n {
            s += chr[(t, k, u)] * riem[(h, u, i, j)]
                - chr[(u, k, h)] * riem[(u, t, i, j)]
                - chr[(u, k, i)] * riem[(h, t, u, j)]
                - chr[(u, k, j)] * riem[(h, t, i, u)];
        }
        s
    })
}
