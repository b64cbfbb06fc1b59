//! Evaluation of all (x,y)-dependent quantities of the space at a support
//! element: the metric function K, metric tensor, Cartan tensor family, the
//! auxiliary m/𝓗/η/τ tensors, adapted-frame components, and the conformal
//! flatness residual of the tangent space.
//!
//! Scalar dictionary (all per support element):
//!   u_i = a_ij y^j,  b = b_i y^i,  q = sqrt(a(y,y) − b²),
//!   v_i = u_i − b b_i,  v^i = y^i − b b^i,
//!   B = b² + g b q + q²  =  A² + h²q²  with A = b + gq/2,
//!   L = q + gb/2,  f = arccos(A/√B) ∈ [0,π],  χ = f/h,
//!   J = e^{−gχ/2},  K = √B · J.

use std::ops::Deref;

use crate::error::{EvalError, Result};
use crate::manifold::PointFrame;
use crate::tensor::{T3, T4};
use crate::{fd, Matrix, Vector};

/// Relative slit guard: reject q ≤ SLIT_GUARD·|y|_a in generic entry points.
pub const SLIT_GUARD: f64 = 1e-6;

#[derive(Debug, Clone)]
#[allow(non_snake_case)]
pub struct Scalars {
    pub y: Vector,
    /// u_i = a_ij y^j.
    pub u_low: Vector,
    /// b = b_i y^i.
    pub b_scalar: f64,
    pub q: f64,
    /// v^i = y^i − b b^i.
    pub v: Vector,
    /// v_i = u_i − b b_i.
    pub v_low: Vector,
    pub B: f64,
    /// A = b + gq/2.
    pub A_scalar: f64,
    /// L = q + gb/2.
    pub L_scalar: f64,
    pub f: f64,
    pub chi: f64,
    pub J: f64,
    pub K: f64,
    pub g: f64,
    pub h: f64,
}

#[derive(Debug, Clone)]
#[allow(non_snake_case)]
pub struct FinslerEval {
    pub scalars: Scalars,
    /// y_i = (u_i + g q b_i) J².
    pub y_low: Vector,
    pub g_low: Matrix,
    pub g_up: Matrix,
    /// Angular metric h_ij = g_ij − y_i y_j / K².
    pub hang: Matrix,
    /// Cartan tensor A_ijk (fully symmetric, all indices down).
    pub cartan: T3,
    /// A_i = g^{jk} A_ijk = g·Â_i.
    pub A_vec: Vector,
    /// Â_i = (NK/2q)(b_i − (b/K²) y_i), the charge-independent core of A_i.
    pub A_hat: Vector,
    /// m_i = (2/N)Â_i; unit g-norm covector orthogonal to y.
    pub m_low: Vector,
    /// m^i = (q² b^i − (b+gq) v^i)/(qK).
    pub m_up: Vector,
    /// 𝓗_ij = h_ij − m_i m_j = η_ij K²/B.
    pub Hcal: Matrix,
    /// η_ij = a_ij − b_i b_j − v_i v_j/q².
    pub eta_low: Matrix,
    /// η^k_m = δ^k_m − b^k b_m − v^k v_m/q².
    pub eta_mixed: Matrix,
    /// τ_ij = −(N/4)(g(2b+gq)/q) 𝓗_ij.
    pub tau: Matrix,
    /// τ_ijmn = −(g(2b+gq)/4q)(𝓗_ij𝓗_mn + 𝓗_im𝓗_jn + 𝓗_in𝓗_jm).
    pub tau4: T4,
}

impl Deref for FinslerEval {
    type Target = Scalars;
    fn deref(&self) -> &Scalars {
        &self.scalars
    }
}

/// Scalar part of the evaluation; the general entry point (slit-guarded).
pub fn eval_scalars(frame: &PointFrame, y: &Vector) -> Result<Scalars> {
    let ayy = (&frame.a * y).dot(y);
    if ayy <= 0.0 {
        return Err(EvalError::NullVector);
    }
    let norm = ayy.sqrt();
    let u_low = &frame.a * y;
    let b_scalar = frame.b_low.dot(y);
    let q2 = (ayy - b_scalar * b_scalar).max(0.0);
    let q = q2.sqrt();
    if q <= SLIT_GUARD * norm {
        return Err(EvalError::AxisSlit);
    }
    Ok(scalars_from(frame, y.clone(), u_low, b_scalar, q))
}

/// Axis limit y = t·b^i, t ≠ 0: q = 0, χ ∈ {0, π/h} analytically.
pub fn eval_scalars_axis(frame: &PointFrame, t: f64) -> Result<Scalars> {
    if t == 0.0 {
        return Err(EvalError::NullVector);
    }
    let y = &frame.b_up * t;
    let u_low = &frame.a * &y;
    Ok(scalars_from(frame, y, u_low, t, 0.0))
}

fn scalars_from(frame: &PointFrame, y: Vector, u_low: Vector, b_scalar: f64, q: f64) -> Scalars {
    let (g, h) = (frame.g, frame.h);
    let v_low = &u_low - &frame.b_low * b_scalar;
    let v = &y - &frame.b_up * b_scalar;
    let big_b = b_scalar * b_scalar + g * b_scalar * q + q * q;
    let a_scalar = b_scalar + g * q / 2.0;
    let l_scalar = q + g * b_scalar / 2.0;
    // f = atan2(hq, A) ≡ arccos(A/√B) since A² + h²q² = B and hq ≥ 0;
    // the atan2 form stays accurate at both ends of [0, π].
    let f = (h * q).atan2(a_scalar);
    let chi = f / h;
    let j = (-g * chi / 2.0).exp();
    let k = big_b.sqrt() * j;
    Scalars {
        y,
        u_low,
        b_scalar,
        q,
        v,
        v_low,
        B: big_b,
        A_scalar: a_scalar,
        L_scalar: l_scalar,
        f,
        chi,
        J: j,
        K: k,
        g,
        h,
    }
}

/// Full evaluation: scalars, metric, Cartan family, auxiliary tensors.
pub fn eval(frame: &PointFrame, y: &Vector) -> Result<FinslerEval> {
    let s = eval_scalars(frame, y)?;
    Ok(eval_from_scalars(frame, s))
}

fn eval_from_scalars(frame: &PointFrame, s: Scalars) -> FinslerEval {
    let n = frame.x.len();
    let nf = n as f64;
    let (g, k, q, b, big_b) = (s.g, s.K, s.q, s.b_scalar, s.B);
    let k2 = k * k;

    let y_low = (&s.u_low + &frame.b_low * (g * q)) * (s.J * s.J);

    // Metric and inverse, closed forms.
    let bb = outer(&frame.b_low, &frame.b_low);
    let bv = outer(&frame.b_low, &s.v_low);
    let vb = outer(&s.v_low, &frame.b_low);
    let vv = outer(&s.v_low, &s.v_low);
    let core = &frame.a
        + (&bb * (q * (b + g * q)) + (&bv + &vb) * q - &vv * (b / q)) * (g / big_b);
    let g_low = core * (k2 / big_b);

    let bbu = outer(&frame.b_up, &frame.b_up);
    let bvu = outer(&frame.b_up, &s.v);
    let vbu = outer(&s.v, &frame.b_up);
    let vvu = outer(&s.v, &s.v);
    let core_up = &frame.a_inv
        + (&bbu * (-b * q) - (&bvu + &vbu) * q + &vvu * ((b + g * q) / q)) * (g / big_b);
    let g_up = core_up * (big_b / k2);

    let hang = &g_low - outer(&y_low, &y_low) / k2;

    let a_hat = (&frame.b_low - &y_low * (b / k2)) * (nf * k / (2.0 * q));
    let a_vec = &a_hat * g;
    let cartan = T3::from_fn(n, |i, j, kk| {
        (a_vec[i] * hang[(j, kk)] + a_vec[j] * hang[(i, kk)] + a_vec[kk] * hang[(i, j)]
            - (4.0 / (nf * nf)) * g * a_hat[i] * a_hat[j] * a_hat[kk])
            / nf
    });

    let m_low = &a_hat * (2.0 / nf);
    let m_up = (&frame.b_up * (q * q) - &s.v * (b + g * q)) / (q * k);
    let hcal = &hang - outer(&m_low, &m_low);
    let eta_low = &frame.a - &bb - &vv / (q * q);
    let eta_mixed = Matrix::identity(n, n) - outer(&frame.b_up, &frame.b_low)
        - outer(&s.v, &s.v_low) / (q * q);
    let tau_coef = -g * (2.0 * b + g * q) / (4.0 * q);
    let tau = &hcal * (nf * tau_coef);
    let tau4 = T4::from_fn(n, |i, j, m, nn| {
        tau_coef
            * (hcal[(i, j)] * hcal[(m, nn)]
                + hcal[(i, m)] * hcal[(j, nn)]
                + hcal[(i, nn)] * hcal[(j, m)])
    });

    FinslerEval {
        scalars: s,
        y_low,
        g_low,
        g_up,
        hang,
        cartan,
        A_vec: a_vec,
        A_hat: a_hat,
        m_low,
        m_up,
        Hcal: hcal,
        eta_low,
        eta_mixed,
        tau,
        tau4,
    }
}

/// Metric-only view (same computation, contract-named entry point).
pub fn eval_metric(frame: &PointFrame, y: &Vector) -> Result<FinslerEval> {
    eval(frame, y)
}

/// Cartan tensor and its contraction A_i.
pub fn eval_cartan(frame: &PointFrame, y: &Vector) -> Result<(T3, Vector)> {
    let fe = eval(frame, y)?;
    Ok((fe.cartan.clone(), fe.A_vec.clone()))
}

#[allow(clippy::type_complexity)]
pub fn eval_aux_tensors(fe: &FinslerEval) -> (Vector, Matrix, Matrix, Matrix, T4) {
    (
        fe.m_low.clone(),
        fe.Hcal.clone(),
        fe.eta_low.clone(),
        fe.tau.clone(),
        fe.tau4.clone(),
    )
}

pub fn outer(a: &Vector, b: &Vector) -> Matrix {
    a * b.transpose()
}

// ------------------------------------------------------------ FD routes

/// g_ij by the definitional route: half the y-Hessian of K².
pub fn metric_fd(frame: &PointFrame, y: &Vector) -> Result<Matrix> {
    let step = 1e-4 * (&frame.a * y).dot(y).sqrt();
    let f = |yy: &Vector| -> Result<f64> {
        let s = eval_scalars(frame, yy)?;
        Ok(0.5 * s.K * s.K)
    };
    fd::hessian(&f, y, step)
}

/// Cartan by the definitional route: (K/2) ∂g_ij/∂y^k.
pub fn cartan_fd(frame: &PointFrame, y: &Vector) -> Result<T3> {
    let n = y.len();
    let step = 1e-5 * (&frame.a * y).dot(y).sqrt();
    let k = eval_scalars(frame, y)?.K;
    let g_of = |yy: &Vector| -> Result<Matrix> { Ok(eval(frame, yy)?.g_low) };
    let mut out = T3::zeros(n);
    for kk in 0..n {
        let d = fd::d_matrix(&g_of, y, kk, step)?;
        for i in 0..n {
            for j in 0..n {
                out[(i, j, kk)] = 0.5 * k * d[(i, j)];
            }
        }
    }
    Ok(out)
}

/// max |K²·R̂_injm − (1−h²)(h_ij h_nm − h_im h_nj)|: the indicatrix of each
/// tangent space has constant curvature h², expressed through the
/// Cartan-commutator curvature of the fibre.
pub fn indicatrix_curvature_residual(fe: &FinslerEval) -> f64 {
    let n = fe.y.len();
    let k = fe.K;
    // cup[n,t,m] = g^{nl} A_{tlm} / K
    let mut cup = T3::zeros(n);
    for nn in 0..n {
        for t in 0..n {
            for m in 0..n {
                let mut s = 0.0;
                for l in 0..n {
                    s += fe.g_up[(nn, l)] * fe.cartan[(t, l, m)];
                }
                cup[(nn, t, m)] = s / k;
            }
        }
    }
    let hh = 1.0 - fe.h * fe.h;
    let mut worst = 0.0f64;
    for i in 0..n {
        for nn in 0..n {
            for j in 0..n {
                for m in 0..n {
                    // mixed R̂: Σ_t cup[l,t,m] cup[t,i,j] − cup[l,t,j] cup[t,i,m], lowered with g
                    let mut lhs = 0.0;
                    for l in 0..n {
                        let mut rl = 0.0;
                        for t in 0..n {
                            rl += cup[(l, t, m)] * cup[(t, i, j)] - cup[(l, t, j)] * cup[(t, i, m)];
                        }
                        lhs += fe.g_low[(nn, l)] * rl;
                    }
                    lhs *= k * k;
                    let rhs = hh
                        * (fe.hang[(i, j)] * fe.hang[(nn, m)]
                            - fe.hang[(i, m)] * fe.hang[(nn, j)]);
                    worst = worst.max((lhs - rhs).abs());
                }
            }
        }
    }
    worst
}

// ------------------------------------------------------------ frame block

#[derive(Debug, Clone)]
#[allow(non_snake_case)]
pub struct FrameEval {
    /// R^p = e^p_i y^i: components of y in the adapted a-orthonormal frame
    /// whose last leg is b.
    pub R: Vector,
    /// Frame components of y_i (covariant).
    pub R_low: Vector,
    /// Metric tensor in the adapted frame.
    pub g_pq: Matrix,
    pub g_pq_up: Matrix,
    /// Coframe rows e^p_i (row p holds covector p; row N−1 is b_i).
    pub coframe: Matrix,
}

/// a-orthonormal coframe with last row b_i, built by Gram–Schmidt in the
/// a^{-1} inner product starting from the standard basis (the seed covector
/// with the largest orthogonal remainder is taken at each step, so the
/// construction is deterministic and never degenerates for PD a).
pub fn adapted_coframe(a_inv: &Matrix, b_low: &Vector) -> Matrix {
    let n = b_low.len();
    let mut rows: Vec<Vector> = Vec::with_capacity(n);
    rows.push(b_low.clone());
    while rows.len() < n {
        let mut best: Option<(f64, Vector)> = None;
        for k in 0..n {
            let mut v = Vector::zeros(n);
            v[k] = 1.0;
            for r in &rows {
                let c = (a_inv * &v).dot(r);
                v -= r * c;
            }
            let norm2 = (a_inv * &v).dot(&v);
            if best.as_ref().map_or(true, |(bn, _)| norm2 > *bn) {
                best = Some((norm2, v));
            }
        }
        let (norm2, v) = best.unwrap();
        rows.push(&v / norm2.sqrt());
    }
    // rows[0] is b; output wants b last.
    Matrix::from_fn(n, n, |p, i| {
        if p == n - 1 {
            rows[0][i]
        } else {
            rows[p + 1][i]
        }
    })
}

/// Adapted-frame components of the metric at (x, y).
pub fn eval_frame(frame: &PointFrame, y: &Vector) -> Result<FrameEval> {
    let n = y.len();
    let fe = eval(frame, y)?;
    let coframe = adapted_coframe(&frame.a_inv, &frame.b_low);
    let r = &coframe * y;
    let z = r[n - 1];
    let (g, q, big_b, j, k) = (fe.g, fe.q, fe.B, fe.J, fe.K);
    let j2 = j * j;
    let k2 = k * k;
    let mut g_pq = Matrix::zeros(n, n);
    let mut g_up = Matrix::zeros(n, n);
    for p in 0..n - 1 {
        for s in 0..n - 1 {
            let delta = if p == s { 1.0 } else { 0.0 };
            g_pq[(p, s)] = (delta - (g * z / (big_b * q)) * r[p] * r[s]) * j2;
            g_up[(p, s)] = (big_b / k2) * delta + g * (z + g * q) * r[p] * r[s] / (q * k2);
        }
        g_pq[(p, n - 1)] = (g * q / big_b) * r[p] * j2;
        g_pq[(n - 1, p)] = g_pq[(p, n - 1)];
        g_up[(p, n - 1)] = -g * q * r[p] / k2;
        g_up[(n - 1, p)] = g_up[(p, n - 1)];
    }
    g_pq[(n - 1, n - 1)] = ((z + g * q) * (z + g * q) + q * q) * j2 / big_b;
    g_up[(n - 1, n - 1)] = (z * z + q * q) / k2;

    let mut r_low = Vector::zeros(n);
    for p in 0..n - 1 {
        r_low[p] = r[p] * j2;
    }
    r_low[n - 1] = (z + g * q) * j2;

    Ok(FrameEval { R: r, R_low: r_low, g_pq, g_pq_up: g_up, coframe })
}

// ----------------------------------------------- conformal flatness (§ fibre)

/// Max-abs Riemann curvature (computed by nested FD in y) of the conformally
/// rescaled tangent-space metric k_ij = (h K^{c2})² g_ij.  With the correct
/// exponent c2 = h − 1 this vanishes: each tangent space is conformally flat.
/// The input ray is rescaled to a fixed magnitude first (flatness is
/// ray-invariant and the FD step is tuned for |y|_a ≈ 1.5).
pub fn conformal_flatness_residual_with_exponent(
    frame: &PointFrame,
    y: &Vector,
    c2: f64,
) -> Result<f64> {
    let ayy = (&frame.a * y).dot(y);
    if ayy <= 0.0 {
        return Err(EvalError::NullVector);
    }
    let y0 = y * (1.5 / ayy.sqrt());
    eval_scalars(frame, &y0)?;
    let h = frame.h;
    let kmet = |yy: &Vector| -> Result<Matrix> {
        let fe = eval(frame, yy)?;
        let scale = h * fe.K.powf(c2);
        Ok(&fe.g_low * (scale * scale))
    };
    let r = riemann_of_y_metric(&kmet, &y0, 2e-3)?;
    Ok(r.max_abs())
}

pub fn conformal_flatness_residual(frame: &PointFrame, y: &Vector) -> Result<f64> {
    conformal_flatness_residual_with_exponent(frame, y, frame.h - 1.0)
}

/// Riemann tensor r[n,i,k,m] of a y-dependent metric on one tangent space,
/// with Christoffels and their derivatives both taken by central FD.
pub fn riemann_of_y_metric(
    metric: &dyn Fn(&Vector) -> Result<Matrix>,
    y: &Vector,
    step: f64,
) -> Result<crate::tensor::T4> {
    let n = y.len();
    let chr_at = |yy: &Vector| -> Result<T3> {
        let a0 = metric(yy)?;
        let ai = crate::manifold::invert(&a0)?;
        let d = fd::d_matrix_all(metric, yy, step)?;
        Ok(crate::manifold::christoffel_from(&ai, &d))
    };
    let ch = chr_at(y)?;
    let mut dch = T4::zeros(n);
    for l in 0..n {
        let d = fd::d_t3(&|yy: &Vector| chr_at(yy), y, l, step)?;
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    dch[(k, i, j, l)] = d[(k, i, j)];
                }
            }
        }
    }
    Ok(crate::manifold::riemann_from(&ch, &dch))
}
