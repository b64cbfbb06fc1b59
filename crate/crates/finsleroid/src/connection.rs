//! The angle-preserving horizontal connection: coefficients N^k_n and
//! D^k_{nm}, the horizontal derivative d_n = ∂/∂x^n + N^k_n ∂/∂y^k, the
//! covariant derivative, parallel transport, and the contraction identities
//! that characterize the connection.

use crate::error::{EvalError, Result};
use crate::finsler::{self, FinslerEval};
use crate::manifold::{ManifoldSpec, PointFrame};
use crate::tensor::{T3, T4};
use crate::{angle, Matrix, Vector};

#[derive(Debug, Clone)]
pub struct ConnectionEval {
    /// N^k_n, indexed [k, n]; degree-1 homogeneous in y.
    pub n_coef: Matrix,
    /// D^k_{nm} = −∂N^k_n/∂y^m, indexed [k, n, m]; 0-homogeneous, and
    /// deliberately not symmetric in (n, m).
    pub d_coef: T3,
    /// ∂D^k_{nm}/∂y^i in closed form, indexed [k, n, m, i].
    pub dd_dy: T4,
    /// w_n = y^j ∇_n b_j.
    pub w: Vector,
    /// W^k_n = a^{kj} ∇_n b_j, indexed [k, n].
    pub w_up: Matrix,
}

/// Γ^k_{nj} y^j as a matrix [k, n].
fn gamma_y(frame: &PointFrame, y: &Vector) -> Matrix {
    let n = y.len();
    Matrix::from_fn(n, n, |k, nn| {
        (0..n).map(|j| frame.christoffel[(k, nn, j)] * y[j]).sum()
    })
}

pub fn connection(fe: &FinslerEval, frame: &PointFrame) -> ConnectionEval {
    let n = fe.y.len();
    let (g, h) = (fe.g, fe.h);
    let (b, q) = (fe.b_scalar, fe.q);
    let nb = &frame.nabla_b;
    let w_up = &frame.a_inv * nb.transpose();
    let w = nb * &fe.y;
    let cf1 = ((1.0 - h) * b + g * q / 2.0) / h;
    let vecu = &fe.v * (g / (2.0 * q)) - &frame.b_up * (1.0 - h);
    let gy = gamma_y(frame, &fe.y);
    let n_coef = -(&w_up * cf1) - (&vecu * w.transpose()) / h - &gy;

    let dm_low = (&frame.b_low * (1.0 - h) + &fe.v_low * (g / (2.0 * q))) / h;
    let d_coef = T3::from_fn(n, |k, nn, m| {
        dm_low[m] * w_up[(k, nn)]
            + (g / (2.0 * q * h)) * fe.eta_mixed[(k, m)] * w[nn]
            + vecu[k] / h * nb[(nn, m)]
            + frame.christoffel[(k, nn, m)]
    });

    // ∂D/∂y in closed form; symmetric in (m, i) and y-transverse.
    let eta_up = &frame.a_inv
        - &frame.b_up * frame.b_up.transpose()
        - (&fe.v * fe.v.transpose()) / (q * q);
    let eta_w = &eta_up * nb.transpose();
    let dd_dy = T4::from_fn(n, |k, nn, m, i| {
        g / (2.0 * q * h) * fe.eta_low[(m, i)] * eta_w[(k, nn)]
            - g / (2.0 * q.powi(3) * h)
                * (fe.eta_mixed[(k, m)] * fe.v_low[i] + fe.eta_mixed[(k, i)] * fe.v_low[m])
                * w[nn]
            + g / (2.0 * q * h) * (fe.eta_mixed[(k, m)] * nb[(nn, i)] + fe.eta_mixed[(k, i)] * nb[(nn, m)])
    });

    ConnectionEval { n_coef, d_coef, dd_dy, w, w_up }
}

/// Two rewritings of N^k_n that move the ∇b contraction through η and the
/// v-vector; both must reproduce `connection().n_coef`.
pub fn n_form_variants(fe: &FinslerEval, frame: &PointFrame) -> (Matrix, Matrix) {
    let (g, h) = (fe.g, fe.h);
    let (b, q) = (fe.b_scalar, fe.q);
    let nb = &frame.nabla_b;
    let w_up = &frame.a_inv * nb.transpose();
    let w = nb * &fe.y;
    let eta_up = &frame.a_inv
        - &frame.b_up * frame.b_up.transpose()
        - (&fe.v * fe.v.transpose()) / (q * q);
    let eta_w = &eta_up * nb.transpose();
    let gy = gamma_y(frame, &fe.y);
    let first = &w_up * b
        - &frame.b_up * w.transpose()
        - &eta_w * ((b + g * q / 2.0) / h)
        + ((&frame.b_up - &fe.v * ((b + g * q) / (q * q))) / h) * w.transpose()
        - &gy;
    let second = &eta_w * (b - (b + g * q / 2.0) / h)
        + (&fe.v * ((b - (b + g * q) / h) / (q * q)) + &frame.b_up * (1.0 / h - 1.0))
            * w.transpose()
        - &gy;
    (first, second)
}

/// The ∂K/∂x-based rewriting of N^k_n; the x-derivative of K is probed by
/// central differences through the family, making this an independent route.
pub fn n_form_dk(
    spec: &ManifoldSpec,
    fe: &FinslerEval,
    frame: &PointFrame,
) -> Result<Matrix> {
    let n = fe.y.len();
    let (g, h) = (fe.g, fe.h);
    let (b, q, big_b, k_norm) = (fe.b_scalar, fe.q, fe.B, fe.K);
    let mut dk = Vector::zeros(n);
    let step = 1e-6;
    for i in 0..n {
        let mut xp = frame.x.clone();
        let mut xm = frame.x.clone();
        xp[i] += step;
        xm[i] -= step;
        let kp = finsler::eval_scalars(&spec.eval_point(&xp)?, &fe.y)?.K;
        let km = finsler::eval_scalars(&spec.eval_point(&xm)?, &fe.y)?.K;
        dk[i] = (kp - km) / (2.0 * step);
    }
    let nb = &frame.nabla_b;
    let w = nb * &fe.y;
    let eta_up = &frame.a_inv
        - &frame.b_up * frame.b_up.transpose()
        - (&fe.v * fe.v.transpose()) / (q * q);
    let eta_w = &eta_up * nb.transpose();
    let l_up = &fe.y / k_norm;
    let h_mixed = Matrix::identity(n, n) - (&fe.y * fe.y_low.transpose()) / (k_norm * k_norm);
    let gy = gamma_y(frame, &fe.y);
    Ok(-(&l_up * dk.transpose())
        + &eta_w * (b - (b + g * q / 2.0) / h)
        + (&fe.m_up * w.transpose()) * ((1.0 / (h * q) - 1.0 / q + g * b / big_b) * k_norm)
        - &h_mixed * &gy)
}

/// The two fully reduced y-derivative forms of the connection (the long
/// m/𝓗-expansion and its contracted successor); each must equal −D^k_{nm}.
/// 𝓗 indices are raised with the Finsler metric.
pub fn reduced_coefficient_forms(fe: &FinslerEval, frame: &PointFrame) -> (T3, T3) {
    let n = fe.y.len();
    let (g, h) = (fe.g, fe.h);
    let (b, q, big_b, k_norm) = (fe.b_scalar, fe.q, fe.B, fe.K);
    let nb = &frame.nabla_b;
    let l_up = &fe.y / k_norm;
    let l_low = &fe.y_low / k_norm;
    let hc_mix = &fe.g_up * &fe.Hcal;
    let hc_up = &hc_mix * &fe.g_up;
    let w = nb * &fe.y;
    let lw = &w / k_norm;
    let mw = nb * &fe.m_up;
    let hup_w = &hc_up * nb.transpose();
    // (𝓗^j_m ∇_n b_j) indexed [m, n]
    let hmix_w = hc_mix.transpose() * nb.transpose();
    let c1 = q - q / h + (g / (2.0 * h)) * (b + g * q);
    let c2 = b - (b + g * q / 2.0) / h;
    let c4 = 1.0 / (h * q) - 1.0 / q + g * b / big_b;
    let shared = |k: usize, nn: usize, m: usize| -> f64 {
        -l_up[k] * g * (q / k_norm) * (k_norm * k_norm / big_b) * nb[(nn, m)]
            + (1.0 / k_norm) * c1 * hup_w[(k, nn)] * fe.m_low[m] * (k_norm * k_norm / big_b)
            + k_norm * (b / (q * q)) * (1.0 / h - 1.0) * fe.m_low[m] * fe.m_up[k] * lw[nn]
            - (k_norm / q) * (1.0 / h - 1.0) * fe.m_low[m] * l_up[k] * lw[nn]
            + c4 * k_norm * fe.m_up[k] * nb[(nn, m)]
            - frame.christoffel[(k, nn, m)]
    };
    let long_form = T3::from_fn(n, |k, nn, m| {
        shared(k, nn, m)
            + c2 * (k_norm / big_b)
                * (hup_w[(k, nn)] * l_low[m] - l_up[k] * hmix_w[(m, nn)]
                    - lw[nn] * hc_mix[(k, m)]
                    + (b / q) * (mw[nn] * hc_mix[(k, m)] + fe.m_up[k] * hmix_w[(m, nn)]))
            - k_norm * ((b + g * q) / (h * q) - b / q) * (1.0 / q) * hc_mix[(k, m)] * lw[nn]
    });
    let reduced_form = T3::from_fn(n, |k, nn, m| {
        shared(k, nn, m)
            + c2 * (k_norm / big_b)
                * (hup_w[(k, nn)] * l_low[m] - l_up[k] * hmix_w[(m, nn)]
                    + (b / q) * fe.m_up[k] * hmix_w[(m, nn)])
            - (g / (2.0 * q * h)) * hc_mix[(k, m)] * w[nn]
    });
    (long_form, reduced_form)
}

/// Residuals of the three y/u/b contractions of N^k_n.
pub fn contraction_residuals(
    fe: &FinslerEval,
    frame: &PointFrame,
    conn: &ConnectionEval,
) -> [f64; 3] {
    let (g, h) = (fe.g, fe.h);
    let gy = gamma_y(frame, &fe.y);
    let r_y = (conn.n_coef.transpose() * &fe.y_low
        + &conn.w * (g * fe.q * fe.J * fe.J)
        + gy.transpose() * &fe.y_low)
        .amax();
    let r_u = (conn.n_coef.transpose() * &fe.u_low + &conn.w * (g * fe.q / h)
        + gy.transpose() * &fe.u_low)
        .amax();
    let r_b = (conn.n_coef.transpose() * &frame.b_low - &conn.w * ((1.0 - h) / h)
        + gy.transpose() * &frame.b_low)
        .amax();
    [r_y, r_u, r_b]
}

/// Residuals of the horizontal derivatives of the core scalars:
/// [d_n b − w/h, d_n q + (b+gq)w/(hq), d_n B + (g/qh)Bw, d_n K].
pub fn d_scalar_residuals(spec: &ManifoldSpec, x: &Vector, y: &Vector) -> Result<[f64; 4]> {
    let frame = spec.eval_point(x)?;
    let fe = finsler::eval(&frame, y)?;
    let conn = connection(&fe, &frame);
    let n = y.len();
    let step = 1e-6;
    let mut dx = [Vector::zeros(n), Vector::zeros(n), Vector::zeros(n), Vector::zeros(n)];
    for i in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += step;
        xm[i] -= step;
        let sp = finsler::eval_scalars(&spec.eval_point(&xp)?, y)?;
        let sm = finsler::eval_scalars(&spec.eval_point(&xm)?, y)?;
        dx[0][i] = (sp.b_scalar - sm.b_scalar) / (2.0 * step);
        dx[1][i] = (sp.q - sm.q) / (2.0 * step);
        dx[2][i] = (sp.B - sm.B) / (2.0 * step);
        dx[3][i] = (sp.K - sm.K) / (2.0 * step);
    }
    let (g, h) = (fe.g, fe.h);
    let (b, q, big_b, k_norm) = (fe.b_scalar, fe.q, fe.B, fe.K);
    // y-gradients of b, q, B, K
    let grads = [
        frame.b_low.clone(),
        &fe.v_low / q,
        &fe.u_low * 2.0 + (&frame.b_low * q + &fe.v_low * (b / q)) * g,
        &fe.y_low / k_norm,
    ];
    let mut d_ops = [Vector::zeros(n), Vector::zeros(n), Vector::zeros(n), Vector::zeros(n)];
    for (s, grad) in grads.iter().enumerate() {
        d_ops[s] = &dx[s] + conn.n_coef.transpose() * grad;
    }
    Ok([
        (&d_ops[0] - &conn.w / h).amax(),
        (&d_ops[1] + &conn.w * ((b + g * q) / (h * q))).amax(),
        (&d_ops[2] + &conn.w * (g * big_b / (q * h))).amax(),
        d_ops[3].amax(),
    ])
}

/// Residual of 𝒟_n y_j = d_n y_j − D^m_{nj} y_m (lowering through g).
pub fn covariant_y_low_residual(spec: &ManifoldSpec, x: &Vector, y: &Vector) -> Result<f64> {
    let frame = spec.eval_point(x)?;
    let fe = finsler::eval(&frame, y)?;
    let conn = connection(&fe, &frame);
    let n = y.len();
    let step = 1e-6;
    let mut worst: f64 = 0.0;
    for nn in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[nn] += step;
        xm[nn] -= step;
        let yp = finsler::eval(&spec.eval_point(&xp)?, y)?.y_low;
        let ym = finsler::eval(&spec.eval_point(&xm)?, y)?.y_low;
        for j in 0..n {
            let dxy = (yp[j] - ym[j]) / (2.0 * step);
            let mut r = dxy;
            for m in 0..n {
                // ∂y_j/∂y^m = g_mj
                r += conn.n_coef[(m, nn)] * fe.g_low[(m, j)];
                r -= conn.d_coef[(m, nn, j)] * fe.y_low[m];
            }
            worst = worst.max(r.abs());
        }
    }
    Ok(worst)
}

/// Metricity residual 𝒟_n g_ij = ∂_n g_ij + 2 N^m_n C_{mij} − D^m_{nj} g_mi
/// − D^m_{ni} g_mj; the x-partial is probed by central differences, the
/// y-partial enters analytically through the Cartan tensor.
pub fn metricity_residual(spec: &ManifoldSpec, x: &Vector, y: &Vector) -> Result<T3> {
    let frame = spec.eval_point(x)?;
    let fe = finsler::eval(&frame, y)?;
    let conn = connection(&fe, &frame);
    let n = y.len();
    let step = 1e-6;
    let mut out = T3::zeros(n);
    for nn in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[nn] += step;
        xm[nn] -= step;
        let gp = finsler::eval(&spec.eval_point(&xp)?, y)?.g_low;
        let gm = finsler::eval(&spec.eval_point(&xm)?, y)?.g_low;
        for i in 0..n {
            for j in 0..n {
                let mut r = (gp[(i, j)] - gm[(i, j)]) / (2.0 * step);
                for m in 0..n {
                    r += 2.0 * conn.n_coef[(m, nn)] * fe.cartan[(m, i, j)] / fe.K;
                    r -= conn.d_coef[(m, nn, j)] * fe.g_low[(m, i)];
                    r -= conn.d_coef[(m, nn, i)] * fe.g_low[(m, j)];
                }
                out[(nn, i, j)] = r;
            }
        }
    }
    Ok(out)
}

pub enum FieldValue {
    Scalar(f64),
    Vector(Vector),
    Matrix(Matrix),
}

pub enum CovariantDerivative {
    /// 𝒟_n of a scalar, indexed [n].
    Vector(Vector),
    /// 𝒟_n of a rank-1 field, indexed [component, n].
    Matrix(Matrix),
    /// 𝒟_n of a rank-2 field, indexed [first, second, n].
    Tensor3(T3),
}

type FieldFn<'a> = &'a dyn Fn(&PointFrame, &Vector) -> Result<FieldValue>;

fn field_components(v: &FieldValue, rank: (usize, usize)) -> Result<Vec<f64>> {
    match (v, rank) {
        (FieldValue::Scalar(s), (0, 0)) => Ok(vec![*s]),
        (FieldValue::Vector(v), (1, 0)) | (FieldValue::Vector(v), (0, 1)) => {
            Ok(v.iter().copied().collect())
        }
        (FieldValue::Matrix(m), (1, 1)) | (FieldValue::Matrix(m), (0, 2)) => {
            Ok(m.transpose().iter().copied().collect()) // row-major [i, j]
        }
        _ => Err(EvalError::UnsupportedRank),
    }
}

/// The horizontal derivative d_n f = ∂f/∂x^n + N^k_n ∂f/∂y^k applied
/// component-wise, with both partials probed by central differences.
fn d_components(
    spec: &ManifoldSpec,
    x: &Vector,
    y: &Vector,
    conn: &ConnectionEval,
    f: FieldFn,
    rank: (usize, usize),
    ncomp: usize,
) -> Result<Vec<Vec<f64>>> {
    let n = x.len();
    let step = 1e-6;
    let ystep = 1e-6 * y.norm().max(1.0);
    let mut dx = vec![vec![0.0; n]; ncomp];
    let mut dy = vec![vec![0.0; n]; ncomp];
    for i in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += step;
        xm[i] -= step;
        let fp = field_components(&f(&spec.eval_point(&xp)?, y)?, rank)?;
        let fm = field_components(&f(&spec.eval_point(&xm)?, y)?, rank)?;
        for c in 0..ncomp {
            dx[c][i] = (fp[c] - fm[c]) / (2.0 * step);
        }
        let mut yp = y.clone();
        let mut ym = y.clone();
        yp[i] += ystep;
        ym[i] -= ystep;
        let frame = spec.eval_point(x)?;
        let fp = field_components(&f(&frame, &yp)?, rank)?;
        let fm = field_components(&f(&frame, &ym)?, rank)?;
        for c in 0..ncomp {
            dy[c][i] = (fp[c] - fm[c]) / (2.0 * ystep);
        }
    }
    let mut out = vec![vec![0.0; n]; ncomp];
    for c in 0..ncomp {
        for nn in 0..n {
            let mut v = dx[c][nn];
            for k in 0..n {
                v += conn.n_coef[(k, nn)] * dy[c][k];
            }
            out[c][nn] = v;
        }
    }
    Ok(out)
}

/// Covariant derivative 𝒟_n of a tensor field given by a callback;
/// `rank = (contravariant, covariant)` selects the index correction pattern.
/// Supported ranks: (0,0), (1,0), (0,1), (1,1), (0,2).
pub fn covariant_derivative(
    spec: &ManifoldSpec,
    x: &Vector,
    y: &Vector,
    rank: (usize, usize),
    f: FieldFn,
) -> Result<CovariantDerivative> {
    let frame = spec.eval_point(x)?;
    let fe = finsler::eval(&frame, y)?;
    let conn = connection(&fe, &frame);
    let n = x.len();
    let value = f(&frame, y)?;
    match rank {
        (0, 0) => {
            let d = d_components(spec, x, y, &conn, f, rank, 1)?;
            Ok(CovariantDerivative::Vector(Vector::from_vec(d[0].clone())))
        }
        (1, 0) | (0, 1) => {
            let comp = field_components(&value, rank)?;
            let d = d_components(spec, x, y, &conn, f, rank, n)?;
            let sign = if rank == (1, 0) { 1.0 } else { -1.0 };
            let mut out = Matrix::zeros(n, n);
            for j in 0..n {
                for nn in 0..n {
                    let mut v = d[j][nn];
                    for t in 0..n {
                        if rank == (1, 0) {
                            v += sign * conn.d_coef[(j, nn, t)] * comp[t];
                        } else {
                            v += sign * conn.d_coef[(t, nn, j)] * comp[t];
                        }
                    }
                    out[(j, nn)] = v;
                }
            }
            Ok(CovariantDerivative::Matrix(out))
        }
        (1, 1) | (0, 2) => {
            let comp = field_components(&value, rank)?;
            let d = d_components(spec, x, y, &conn, f, rank, n * n)?;
            let at = |i: usize, j: usize| comp[i * n + j];
            let mut out = T3::zeros(n);
            for i in 0..n {
                for j in 0..n {
                    for nn in 0..n {
                        let mut v = d[i * n + j][nn];
                        for t in 0..n {
                            if rank == (1, 1) {
                                v += conn.d_coef[(i, nn, t)] * at(t, j);
                                v -= conn.d_coef[(t, nn, j)] * at(i, t);
                            } else {
                                v -= conn.d_coef[(t, nn, i)] * at(t, j);
                                v -= conn.d_coef[(t, nn, j)] * at(i, t);
                            }
                        }
                        out[(i, j, nn)] = v;
                    }
                }
            }
            Ok(CovariantDerivative::Tensor3(out))
        }
        _ => Err(EvalError::UnsupportedRank),
    }
}

/// Parallel transport of y along the straight segment x(t) = x0 + t·dir,
/// t ∈ [0, 1], by dy/dt = N(x(t), y)·dir; classical RK4 with fixed steps.
pub fn transport_straight(
    spec: &ManifoldSpec,
    x0: &Vector,
    dir: &Vector,
    y0: &Vector,
    steps: usize,
) -> Result<Vector> {
    let mut y = y0.clone();
    let dt = 1.0 / steps as f64;
    let f = |t: f64, yy: &Vector| -> Result<Vector> {
        let frame = spec.eval_point(&(x0 + dir * t))?;
        let fe = finsler::eval(&frame, yy)?;
        Ok(&connection(&fe, &frame).n_coef * dir)
    };
    for k in 0..steps {
        let t = k as f64 * dt;
        let k1 = f(t, &y)?;
        let k2 = f(t + dt / 2.0, &(&y + &k1 * (dt / 2.0)))?;
        let k3 = f(t + dt / 2.0, &(&y + &k2 * (dt / 2.0)))?;
        let k4 = f(t + dt, &(&y + &k3 * dt))?;
        y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    }
    Ok(y)
}

/// Horizontal residual of the angle scalar λ for a pair of vectors:
/// r_i = ∂λ/∂x^i + ∂λ/∂y1·N(y1)_i + ∂λ/∂y2·N(y2)_i, which the connection
/// annihilates.
pub fn angle_transport_residual(
    spec: &ManifoldSpec,
    x: &Vector,
    y1: &Vector,
    y2: &Vector,
) -> Result<Vector> {
    let frame = spec.eval_point(x)?;
    let pair = angle::angle(&frame, y1, y2)?;
    let fe1 = finsler::eval(&frame, y1)?;
    let fe2 = finsler::eval(&frame, y2)?;
    let n1 = connection(&fe1, &frame).n_coef;
    let n2 = connection(&fe2, &frame).n_coef;
    let n = x.len();
    let step = 1e-6;
    let mut out = Vector::zeros(n);
    for i in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += step;
        xm[i] -= step;
        let lp = angle::lambda_of(&spec.eval_point(&xp)?, y1, y2)?.0;
        let lm = angle::lambda_of(&spec.eval_point(&xm)?, y1, y2)?.0;
        let mut r = (lp - lm) / (2.0 * step);
        for k in 0..n {
            r += pair.dlam_dy1[k] * n1[(k, i)] + pair.dlam_dy2[k] * n2[(k, i)];
        }
        out[i] = r;
    }
    Ok(out)
}

/// Covariant transitivity of the osculating map: d_i applied to w(x, y)
/// equals the Riemannian horizontal derivative of the matched field W(x, ζ)
/// evaluated at ζ(x, y). Both sides are probed by central differences.
pub fn transitivity_residual(
    spec: &ManifoldSpec,
    x: &Vector,
    y: &Vector,
    w_field: &dyn Fn(&PointFrame, &Vector) -> Result<f64>,
    w_zeta: &dyn Fn(&PointFrame, &Vector) -> Result<f64>,
) -> Result<Vector> {
    let frame = spec.eval_point(x)?;
    let fe = finsler::eval(&frame, y)?;
    let conn = connection(&fe, &frame);
    let z = crate::kappa::forward(&fe, &frame);
    let n = x.len();
    let step = 1e-6;
    let mut out = Vector::zeros(n);
    for i in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += step;
        xm[i] -= step;
        let ni: Vector = conn.n_coef.column(i).into();
        let lhs = (w_field(&spec.eval_point(&xp)?, &(y + &ni * step))?
            - w_field(&spec.eval_point(&xm)?, &(y - &ni * step))?)
            / (2.0 * step);
        // Riemannian horizontal lift: L^m = −a^m_{ui} ζ^u
        let lm = Vector::from_fn(n, |m, _| {
            -(0..n).map(|u| frame.christoffel[(m, u, i)] * z[u]).sum::<f64>()
        });
        let rhs = (w_zeta(&spec.eval_point(&xp)?, &(&z + &lm * step))?
            - w_zeta(&spec.eval_point(&xm)?, &(&z - &lm * step))?)
            / (2.0 * step);
        out[i] = lhs - rhs;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::load_spec;

    const CURVED: &str = r#"
dim = 3
g = 1.1

[metric_family]
tag = "diagonal-exp"
coeff = [[0.10, -0.06, 0.04], [-0.03, 0.08, 0.05], [0.02, 0.04, -0.07]]

[b_family]
tag = "constant-axis"
axis = [0.3, -0.2, 1.0]
"#;

    fn setup() -> (ManifoldSpec, Vector, Vector) {
        let spec = load_spec(CURVED).unwrap();
        let x = Vector::from_vec(vec![0.15, -0.2, 0.1]);
        let y = Vector::from_vec(vec![0.7, 0.4, -0.8]);
        (spec, x, y)
    }

    #[test]
    fn coefficient_forms_agree() {
        let (spec, x, y) = setup();
        let frame = spec.eval_point(&x).unwrap();
        let fe = finsler::eval(&frame, &y).unwrap();
        let conn = connection(&fe, &frame);
        // N = −D·y
        let n = y.len();
        let mut r = 0.0f64;
        for k in 0..n {
            for nn in 0..n {
                let s: f64 = (0..n).map(|m| conn.d_coef[(k, nn, m)] * y[m]).sum();
                r = r.max((conn.n_coef[(k, nn)] + s).abs());
            }
        }
        assert!(r < 1e-12, "N vs -Dy: {r:.2e}");
        let (n52, n53) = n_form_variants(&fe, &frame);
        assert!((&n52 - &conn.n_coef).amax() < 1e-12);
        assert!((&n53 - &conn.n_coef).amax() < 1e-12);
        let n62 = n_form_dk(&spec, &fe, &frame).unwrap();
        assert!((&n62 - &conn.n_coef).amax() < 5e-8, "dK form");
        let (b5, b6) = reduced_coefficient_forms(&fe, &frame);
        let mut r5 = 0.0f64;
        let mut r6 = 0.0f64;
        for k in 0..n {
            for nn in 0..n {
                for m in 0..n {
                    r5 = r5.max((b5[(k, nn, m)] + conn.d_coef[(k, nn, m)]).abs());
                    r6 = r6.max((b6[(k, nn, m)] + conn.d_coef[(k, nn, m)]).abs());
                }
            }
        }
        assert!(r5 < 1e-9, "long reduced form vs -D: {r5:.2e}");
        assert!(r6 < 1e-9, "final reduced form vs -D: {r6:.2e}");
    }

    #[test]
    fn d_is_minus_dn_dy_and_dd_closed_form() {
        let (spec, x, y) = setup();
        let frame = spec.eval_point(&x).unwrap();
        let fe = finsler::eval(&frame, &y).unwrap();
        let conn = connection(&fe, &frame);
        let n = y.len();
        let hstep = 1e-6 * y.norm();
        let mut worst_n = 0.0f64;
        let mut worst_d = 0.0f64;
        for i in 0..n {
            let mut yp = y.clone();
            let mut ym = y.clone();
            yp[i] += hstep;
            ym[i] -= hstep;
            let cp = connection(&finsler::eval(&frame, &yp).unwrap(), &frame);
            let cm = connection(&finsler::eval(&frame, &ym).unwrap(), &frame);
            for k in 0..n {
                for nn in 0..n {
                    let dn = (cp.n_coef[(k, nn)] - cm.n_coef[(k, nn)]) / (2.0 * hstep);
                    worst_n = worst_n.max((dn + conn.d_coef[(k, nn, i)]).abs());
                    for m in 0..n {
                        let dd = (cp.d_coef[(k, nn, m)] - cm.d_coef[(k, nn, m)]) / (2.0 * hstep);
                        worst_d = worst_d.max((dd - conn.dd_dy[(k, nn, m, i)]).abs());
                    }
                }
            }
        }
        assert!(worst_n < 2e-5, "FD dN/dy vs -D: {worst_n:.2e}");
        assert!(worst_d < 2e-5, "FD dD/dy vs closed form: {worst_d:.2e}");
        // y-transversality and (m,i) symmetry of the closed form
        let mut ydd = 0.0f64;
        let mut asym = 0.0f64;
        for nn in 0..n {
            for m in 0..n {
                for i in 0..n {
                    let s: f64 = (0..n).map(|k| fe.y_low[k] * conn.dd_dy[(k, nn, m, i)]).sum();
                    ydd = ydd.max(s.abs());
                    for k in 0..n {
                        asym = asym
                            .max((conn.dd_dy[(k, nn, m, i)] - conn.dd_dy[(k, nn, i, m)]).abs());
                    }
                }
            }
        }
        assert!(ydd < 1e-9, "y·dD: {ydd:.2e}");
        assert!(asym < 1e-12);
    }

    #[test]
    fn contraction_and_scalar_identities() {
        let (spec, x, y) = setup();
        let frame = spec.eval_point(&x).unwrap();
        let fe = finsler::eval(&frame, &y).unwrap();
        let conn = connection(&fe, &frame);
        let [ry, ru, rb] = contraction_residuals(&fe, &frame, &conn);
        assert!(ry < 1e-12 && ru < 1e-12 && rb < 1e-12, "{ry:.2e} {ru:.2e} {rb:.2e}");
        let r = d_scalar_residuals(&spec, &x, &y).unwrap();
        for (i, v) in r.iter().enumerate() {
            assert!(*v < 5e-8, "scalar identity {i}: {v:.2e}");
        }
        let r60 = covariant_y_low_residual(&spec, &x, &y).unwrap();
        assert!(r60 < 5e-8, "y-low covariant: {r60:.2e}");
    }

    #[test]
    fn metricity_holds() {
        let (spec, x, y) = setup();
        let r = metricity_residual(&spec, &x, &y).unwrap();
        assert!(r.max_abs() < 1e-7, "metricity: {:.2e}", r.max_abs());
    }

    #[test]
    fn covariant_derivative_kernels() {
        let (spec, x, y) = setup();
        // scalar K
        let dk = covariant_derivative(&spec, &x, &y, (0, 0), &|fr, yy| {
            Ok(FieldValue::Scalar(finsler::eval_scalars(fr, yy)?.K))
        })
        .unwrap();
        let CovariantDerivative::Vector(dk) = dk else { panic!() };
        assert!(dk.amax() < 1e-7, "D K: {:.2e}", dk.amax());
        // y^j
        let dy = covariant_derivative(&spec, &x, &y, (1, 0), &|_, yy| {
            Ok(FieldValue::Vector(yy.clone()))
        })
        .unwrap();
        let CovariantDerivative::Matrix(dy) = dy else { panic!() };
        assert!(dy.amax() < 1e-7, "D y^j: {:.2e}", dy.amax());
        // y_j
        let dyl = covariant_derivative(&spec, &x, &y, (0, 1), &|fr, yy| {
            Ok(FieldValue::Vector(finsler::eval(fr, yy)?.y_low))
        })
        .unwrap();
        let CovariantDerivative::Matrix(dyl) = dyl else { panic!() };
        assert!(dyl.amax() < 1e-7, "D y_j: {:.2e}", dyl.amax());
        // g_ij
        let dg = covariant_derivative(&spec, &x, &y, (0, 2), &|fr, yy| {
            Ok(FieldValue::Matrix(finsler::eval(fr, yy)?.g_low))
        })
        .unwrap();
        let CovariantDerivative::Tensor3(dg) = dg else { panic!() };
        assert!(dg.max_abs() < 1e-7, "D g: {:.2e}", dg.max_abs());
        // mixed rank: g^i_j = δ is covariantly constant trivially; use it to
        // exercise the (1,1) path with the identity field
        let did = covariant_derivative(&spec, &x, &y, (1, 1), &|_, yy| {
            Ok(FieldValue::Matrix(Matrix::identity(yy.len(), yy.len())))
        })
        .unwrap();
        let CovariantDerivative::Tensor3(did) = did else { panic!() };
        assert!(did.max_abs() < 1e-9);
        // unsupported rank
        let err = covariant_derivative(&spec, &x, &y, (2, 0), &|_, yy| {
            Ok(FieldValue::Vector(yy.clone()))
        });
        assert!(matches!(err, Err(EvalError::UnsupportedRank)));
    }

    #[test]
    fn homogeneity_and_limits() {
        let (spec, x, y) = setup();
        let frame = spec.eval_point(&x).unwrap();
        for gamma in [0.5, 2.0] {
            let c1 = connection(&finsler::eval(&frame, &y).unwrap(), &frame);
            let c2 = connection(&finsler::eval(&frame, &(&y * gamma)).unwrap(), &frame);
            assert!((&c2.n_coef - &c1.n_coef * gamma).amax() < 1e-12);
            let mut r = 0.0f64;
            let n = y.len();
            for k in 0..n {
                for nn in 0..n {
                    for m in 0..n {
                        r = r.max((c2.d_coef[(k, nn, m)] - c1.d_coef[(k, nn, m)]).abs());
                    }
                }
            }
            assert!(r < 1e-12, "D not 0-homogeneous: {r:.2e}");
        }
        // flat metric, constant b: the connection collapses to Levi-Civita (zero)
        let flat = load_spec(
            r#"
dim = 3
g = 0.8

[metric_family]
tag = "flat"

[b_family]
tag = "constant-axis"
axis = [0.0, 0.0, 1.0]
"#,
        )
        .unwrap();
        let fr = flat.eval_point(&Vector::zeros(3)).unwrap();
        let fe = finsler::eval(&fr, &y).unwrap();
        let conn = connection(&fe, &fr);
        assert!(conn.n_coef.amax() < 1e-15);
        let mut dmax = 0.0f64;
        for k in 0..3 {
            for nn in 0..3 {
                for m in 0..3 {
                    dmax = dmax.max(conn.d_coef[(k, nn, m)].abs());
                }
            }
        }
        assert!(dmax < 1e-15);
        // two dimensions: D is independent of y
        let two = load_spec(
            r#"
dim = 2
g = 0.9

[metric_family]
tag = "diagonal-exp"
coeff = [[0.10, -0.06], [-0.03, 0.08]]

[b_family]
tag = "constant-axis"
axis = [0.3, 1.0]
"#,
        )
        .unwrap();
        // In 2D the off-slit tangent domain splits into two half-planes; the
        // connection is linear on each, so the witnesses must share a side.
        let frx = two.eval_point(&Vector::from_vec(vec![0.1, -0.05])).unwrap();
        let ya = Vector::from_vec(vec![0.9, 0.4]);
        let yb = Vector::from_vec(vec![1.2, 0.1]);
        let ca = connection(&finsler::eval(&frx, &ya).unwrap(), &frx);
        let cb = connection(&finsler::eval(&frx, &yb).unwrap(), &frx);
        let mut r = 0.0f64;
        for k in 0..2 {
            for nn in 0..2 {
                for m in 0..2 {
                    r = r.max((ca.d_coef[(k, nn, m)] - cb.d_coef[(k, nn, m)]).abs());
                }
            }
        }
        assert!(r < 1e-12, "2D D varies with y: {r:.2e}");
        // N stays additive on one side
        let na = connection(&finsler::eval(&frx, &(&ya + &yb)).unwrap(), &frx).n_coef;
        assert!((&na - &ca.n_coef - &cb.n_coef).amax() < 1e-12);
        // three dimensions with ∇b ≠ 0: D depends on y (nonlinearity witness)
        let (spec3, x3, _) = setup();
        let fr3 = spec3.eval_point(&x3).unwrap();
        let c3a = connection(&finsler::eval(&fr3, &ya.push(0.5)).unwrap(), &fr3);
        let c3b = connection(&finsler::eval(&fr3, &yb.push(-0.7)).unwrap(), &fr3);
        let mut diff = 0.0f64;
        for k in 0..3 {
            for nn in 0..3 {
                for m in 0..3 {
                    diff = diff.max((c3a.d_coef[(k, nn, m)] - c3b.d_coef[(k, nn, m)]).abs());
                }
            }
        }
        assert!(diff > 1e-3, "3D D unexpectedly linear: {diff:.2e}");
    }

    #[test]
    fn transport_preserves_norm_and_angle() {
        let (spec, x, _) = setup();
        let dir = Vector::from_vec(vec![0.25, -0.4, 0.3]);
        let y1 = Vector::from_vec(vec![0.9, 0.4, 0.5]);
        let y2 = Vector::from_vec(vec![-0.3, 1.2, -0.7]);
        let fr0 = spec.eval_point(&x).unwrap();
        let k1 = finsler::eval_scalars(&fr0, &y1).unwrap().K;
        let (_, a0) = angle::angle_scalars(&fr0, &y1, &y2).unwrap();
        let y1e = transport_straight(&spec, &x, &dir, &y1, 1000).unwrap();
        let y2e = transport_straight(&spec, &x, &dir, &y2, 1000).unwrap();
        let fr1 = spec.eval_point(&(&x + &dir)).unwrap();
        let k1e = finsler::eval_scalars(&fr1, &y1e).unwrap().K;
        let (_, a1) = angle::angle_scalars(&fr1, &y1e, &y2e).unwrap();
        assert!((k1e - k1).abs() / k1 < 1e-9, "K drift {:.2e}", (k1e - k1).abs() / k1);
        assert!((a1 - a0).abs() < 1e-9, "angle drift {:.2e}", (a1 - a0).abs());
    }

    #[test]
    fn horizontal_lambda_and_transitivity() {
        let (spec, x, y) = setup();
        let y2 = Vector::from_vec(vec![-0.3, 1.2, -0.7]);
        let r = angle_transport_residual(&spec, &x, &y, &y2).unwrap();
        assert!(r.amax() < 1e-6, "lambda residual {:.2e}", r.amax());
        let w = |fr: &PointFrame, yy: &Vector| -> Result<f64> {
            let s = finsler::eval_scalars(fr, yy)?;
            Ok(s.b_scalar * s.q * s.K * s.K)
        };
        let w_zeta = |fr: &PointFrame, zz: &Vector| -> Result<f64> {
            let yy = crate::kappa::inverse(fr, zz)?;
            let s = finsler::eval_scalars(fr, &yy)?;
            Ok(s.b_scalar * s.q * s.K * s.K)
        };
        let r = transitivity_residual(&spec, &x, &y, &w, &w_zeta).unwrap();
        assert!(r.amax() < 1e-6, "transitivity {:.2e}", r.amax());
        // x-independent scalar on a flat frame: both routes vanish
        let flat = load_spec(
            r#"
dim = 3
g = 1.1

[metric_family]
tag = "flat"

[b_family]
tag = "constant-axis"
axis = [0.3, -0.2, 1.0]
"#,
        )
        .unwrap();
        let r = transitivity_residual(&flat, &Vector::zeros(3), &y, &w, &w_zeta).unwrap();
        assert!(r.amax() < 1e-8);
    }
}
