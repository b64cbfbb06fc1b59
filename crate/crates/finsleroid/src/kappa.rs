//! The fiberwise osculating map ζ(x,y) sending the space onto its associated
//! Riemannian space, together with its inverse and first/second y-derivatives.
//!
//!   ζ^i = [h v^i + A b^i] K^h / √B,     κ = (1/h) K^{1−h},   S = |ζ|_a = K^h.

use crate::error::{EvalError, Result};
use crate::finsler::{self, FinslerEval};
use crate::manifold::PointFrame;
use crate::tensor::T3;
use crate::{fd, Matrix, Vector};

#[derive(Debug, Clone)]
#[allow(non_snake_case)]
pub struct KappaJet {
    pub zeta: Vector,
    pub kappa: f64,
    /// S = sqrt(a_mn ζ^m ζ^n) = K^h.
    pub S: f64,
    /// dzeta[i,m] = ζ^i_m = ∂ζ^i/∂y^m.
    pub dzeta: Matrix,
    /// dy[i,m] = y^i_m = ∂y^i/∂ζ^m (inverse Jacobian, evaluated at ζ(y)).
    pub dy: Matrix,
    /// d2zeta[h,k,m] = ζ^h_{km} = ∂²ζ^h/∂y^k∂y^m.
    pub d2zeta: T3,
}

/// Forward map only (scalars + ζ).
pub fn forward(fe: &FinslerEval, frame: &PointFrame) -> Vector {
    let kh = fe.K.powf(fe.h);
    (&fe.v * fe.h + &frame.b_up * fe.A_scalar) * (kh / fe.B.sqrt())
}

pub fn kappa_scalar(fe: &FinslerEval) -> f64 {
    (1.0 / fe.h) * fe.K.powf(1.0 - fe.h)
}

/// Inverse map: y(ζ) in closed form.
pub fn inverse(frame: &PointFrame, zeta: &Vector) -> Result<Vector> {
    let (g, h) = (frame.g, frame.h);
    let s2 = (&frame.a * zeta).dot(zeta);
    if s2 <= 0.0 {
        return Err(EvalError::NullVector);
    }
    let zb = frame.b_low.dot(zeta);
    let rzz = (s2 - zb * zb).max(0.0);
    if rzz.sqrt() <= finsler::SLIT_GUARD * s2.sqrt() {
        return Err(EvalError::AxisSlit);
    }
    let chi = (zb / s2.sqrt()).clamp(-1.0, 1.0).acos() / h;
    // hκ/J = S^{(1−h)/h} e^{gχ/2}
    let hk_over_j = s2.powf((1.0 - h) / (2.0 * h)) * (g * chi / 2.0).exp();
    let b = (zb - (g / (2.0 * h)) * rzz.sqrt()) * hk_over_j;
    Ok(&frame.b_up * b + (zeta - &frame.b_up * zb) * (hk_over_j / h))
}

/// Axis limit of the inverse: ζ = t·b^i, t ≠ 0.  The pair (±b-axis in y,
/// ±b-axis in ζ) are proper elements of the map, handled analytically here
/// because the generic closed form needs 1/q.
pub fn inverse_axis(frame: &PointFrame, t: f64) -> Result<Vector> {
    if t == 0.0 {
        return Err(EvalError::NullVector);
    }
    let (g, h) = (frame.g, frame.h);
    let chi = if t > 0.0 { 0.0 } else { std::f64::consts::PI / h };
    let hk_over_j = t.abs().powf((1.0 - h) / h) * (g * chi / 2.0).exp();
    Ok(&frame.b_up * (t * hk_over_j))
}

/// Full jet: ζ, κ, S, both Jacobians, and the second derivative.
pub fn jet(fe: &FinslerEval, frame: &PointFrame) -> KappaJet {
    let n = fe.y.len();
    let nf = n as f64;
    let (g, h, k, q, b, big_b) = (fe.g, fe.h, fe.K, fe.q, fe.b_scalar, fe.B);
    let k2 = k * k;
    let zeta = forward(fe, frame);
    let kappa = kappa_scalar(fe);
    let s = k.powf(h);

    // dzeta = E + ζ⊗(C_n/N) − (1−h) ζ⊗y_low/K², with
    // E = [h(I − b^⊗b) + b^⊗(b + (g/2q)v)]·K^h/√B and C_n = g Â_n / K.
    let jkh = k.powf(h) / big_b.sqrt();
    let ident = Matrix::identity(n, n);
    let e_mat = ((&ident - finsler::outer(&frame.b_up, &frame.b_low)) * h
        + finsler::outer(
            &frame.b_up,
            &(&frame.b_low + &fe.v_low * (g / (2.0 * q))),
        ))
        * jkh;
    let c_vec = &fe.A_hat * (g / k);
    let p_vec = &c_vec / nf - &fe.y_low * ((1.0 - h) / k2);
    let dzeta = &e_mat + finsler::outer(&zeta, &p_vec);

    // inverse Jacobian evaluated from the ζ-side closed form
    let dy = dy_jet(frame, &zeta);

    // d2zeta[h,k,m] = (g/2q) η_km b^h (K^h/√B) + P_m E_hk + P_k dζ_hm + dP_km ζ^h
    let l_low = &fe.y_low / k;
    let dc = ((finsler::outer(&l_low, &fe.m_low) + finsler::outer(&fe.m_low, &l_low)) * -1.0
        + finsler::outer(&fe.m_low, &fe.m_low) * g
        - &fe.Hcal * (b / q))
        * (nf * g / (2.0 * k2));
    let dp = &dc / nf
        - (&fe.g_low / k2 - finsler::outer(&fe.y_low, &fe.y_low) * (2.0 / (k2 * k2)))
            * (1.0 - h);
    let mut d2zeta = T3::zeros(n);
    for hh in 0..n {
        for kk in 0..n {
            for m in 0..n {
                d2zeta[(hh, kk, m)] = (g / (2.0 * q)) * fe.eta_low[(kk, m)]
                    * frame.b_up[hh]
                    * jkh
                    + p_vec[m] * e_mat[(hh, kk)]
                    + p_vec[kk] * dzeta[(hh, m)]
                    + dp[(kk, m)] * zeta[hh];
            }
        }
    }

    KappaJet { zeta, kappa, S: s, dzeta, dy, d2zeta }
}

/// y^i_m = ∂y^i/∂ζ^m as a closed form in ζ.
pub fn dy_jet(frame: &PointFrame, zeta: &Vector) -> Matrix {
    let n = zeta.len();
    let (g, h) = (frame.g, frame.h);
    let s2 = (&frame.a * zeta).dot(zeta);
    let zb = frame.b_low.dot(zeta);
    let zl = &frame.a * zeta;
    let r_z = &zl - &frame.b_low * zb;
    let rzz = (s2 - zb * zb).max(f64::MIN_POSITIVE);
    let t = 1.0 / rzz.sqrt();
    let chi = (zb / s2.sqrt()).clamp(-1.0, 1.0).acos() / h;
    let hkj = s2.powf((1.0 - h) / (2.0 * h)) * (g * chi / 2.0).exp();
    let y = inverse(frame, zeta).expect("dy_jet caller keeps zeta off the slit");
    let ident = Matrix::identity(n, n);
    let t1 = (finsler::outer(&frame.b_up, &(&frame.b_low - &r_z * (g * t / (2.0 * h))))
        + (&ident - finsler::outer(&frame.b_up, &frame.b_low)) * (1.0 / h))
        * hkj;
    let co = &zl * ((1.0 - h) / (h * s2))
        + (&zl * (zb / s2) - &frame.b_low) * (g * t / (2.0 * h));
    let t2 = finsler::outer(&y, &co);
    t1 + t2
}

/// max over components of |ζ(x, γy) − γ^h ζ(x, y)|.
pub fn homogeneity_residual(frame: &PointFrame, y: &Vector, gamma: f64) -> Result<f64> {
    let f1 = finsler::eval(frame, y)?;
    let f2 = finsler::eval(frame, &(y * gamma))?;
    let z1 = forward(&f1, frame);
    let z2 = forward(&f2, frame);
    Ok((z2 - z1 * gamma.powf(frame.h)).amax())
}

/// FD cross-check of dzeta (definitional route).
pub fn dzeta_fd(frame: &PointFrame, y: &Vector, step: f64) -> Result<Matrix> {
    let f = |yy: &Vector| -> Result<Vector> {
        let fe = finsler::eval(frame, yy)?;
        Ok(forward(&fe, frame))
    };
    fd::jacobian(&f, y, step)
}

/// FD cross-check of d2zeta.
pub fn d2zeta_fd(frame: &PointFrame, y: &Vector, step: f64) -> Result<T3> {
    let n = y.len();
    let dz_of = |yy: &Vector| -> Result<Matrix> {
        let fe = finsler::eval(frame, yy)?;
        Ok(jet(&fe, frame).dzeta)
    };
    let mut out = T3::zeros(n);
    for m in 0..n {
        let d = fd::d_matrix(&dz_of, y, m, step)?;
        for hh in 0..n {
            for kk in 0..n {
                out[(hh, kk, m)] = d[(hh, kk)];
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::load_spec;

    fn curved_frame() -> PointFrame {
        let text = r#"
dim = 3
g = 1.1

[metric_family]
tag = "diagonal-exp"
coeff = [[0.10, -0.06, 0.04], [-0.03, 0.08, 0.05], [0.02, 0.04, -0.07]]

[b_family]
tag = "constant-axis"
axis = [0.3, -0.2, 1.0]
"#;
        load_spec(text)
            .unwrap()
            .eval_point(&Vector::from_vec(vec![0.15, -0.2, 0.1]))
            .unwrap()
    }

    fn flat_frame(g: f64) -> PointFrame {
        let text = format!(
            r#"
dim = 3
g = {g}

[metric_family]
tag = "flat"

[b_family]
tag = "constant-axis"
axis = [0.0, 0.0, 1.0]
"#
        );
        load_spec(&text)
            .unwrap()
            .eval_point(&Vector::zeros(3))
            .unwrap()
    }

    #[test]
    fn worked_example_zeta() {
        let fr = flat_frame(1.0);
        let y = Vector::from_vec(vec![1.0, 0.0, 0.0]);
        let fe = finsler::eval(&fr, &y).unwrap();
        let z = forward(&fe, &fr);
        // ζ = (h, 0, A)·K^h/√B with A = 1/2, B = 1
        assert!((z[0] - 0.51302033).abs() < 1e-7);
        assert!(z[1].abs() < 1e-15);
        assert!((z[2] - 0.29619242).abs() < 1e-7);
        // angle form: ζ = (v/q sin(hχ) + b cos(hχ)) K^h
        let kh = fe.K.powf(fe.h);
        let alt = (&fe.v * ((fe.h * fe.chi).sin() / fe.q)
            + &fr.b_up * (fe.h * fe.chi).cos())
            * kh;
        assert!((z - alt).amax() < 1e-12);
    }

    #[test]
    fn riemannian_limit_is_identity() {
        let fr = flat_frame(0.0);
        let y = Vector::from_vec(vec![0.3, -0.8, 0.4]);
        let fe = finsler::eval(&fr, &y).unwrap();
        let j = jet(&fe, &fr);
        assert!((&j.zeta - &y).amax() < 1e-14);
        assert!((&j.dzeta - Matrix::identity(3, 3)).norm() < 1e-12);
        assert!(j.d2zeta.max_abs() < 1e-12);
        assert!((j.kappa - 1.0).abs() < 1e-15);
    }

    #[test]
    fn jet_identities() {
        let fr = curved_frame();
        let y = Vector::from_vec(vec![0.7, 0.4, -0.8]);
        let fe = finsler::eval(&fr, &y).unwrap();
        let j = jet(&fe, &fr);
        let n = 3;
        // S = K^h
        let s_direct = (&fr.a * &j.zeta).dot(&j.zeta).sqrt();
        assert!((s_direct - j.S).abs() / j.S < 1e-12);
        // roundtrip
        let back = inverse(&fr, &j.zeta).unwrap();
        assert!((&back - &y).amax() < 1e-12);
        // axis proper element: ζ(b) = b (axis-limit entry point)
        let zb = inverse_axis(&fr, 1.0).unwrap();
        assert!((&zb - &fr.b_up).amax() < 1e-12);
        // Euler: y^n ζ^i_n = h ζ^i
        let euler = &j.dzeta * &y - &j.zeta * fe.h;
        assert!(euler.amax() < 1e-12);
        // det ζ^i_m = (J/κ)^N
        let det = j.dzeta.determinant();
        let expect = (fe.J / j.kappa).powi(n as i32);
        assert!((det - expect).abs() / expect.abs() < 1e-12);
        // dzeta·dy = I
        let prod = &j.dzeta * &j.dy;
        assert!((prod - Matrix::identity(n, n)).norm() < 1e-12);
        // isometry: κ² ζ^i_m ζ^j_n a_ij = g_mn
        let pull = j.dzeta.transpose() * &fr.a * &j.dzeta * (j.kappa * j.kappa);
        assert!((&pull - &fe.g_low).norm() < 1e-12);
        // g_nm y^m_i = κ² ζ^j_n a_ij  (lowered-index form of the same isometry)
        let lhs = &fe.g_low * &j.dy;
        let rhs = (&fr.a * &j.dzeta).transpose() * (j.kappa * j.kappa);
        assert!((lhs - rhs).norm() < 1e-11);
        // y_i y^i_j = (K²/hS²) ζ_j with ζ_j = a_jk ζ^k
        let zl = &fr.a * &j.zeta;
        let lhs = j.dy.transpose() * &fe.y_low;
        let rhs = zl * (fe.K * fe.K / (fe.h * j.S * j.S));
        assert!((lhs - rhs).amax() < 1e-11);
        // FD cross-checks
        let dz_fd = dzeta_fd(&fr, &y, 1e-5).unwrap();
        assert!((&j.dzeta - &dz_fd).amax() < 1e-6);
        let d2_fd = d2zeta_fd(&fr, &y, 1e-4).unwrap();
        assert!((&j.d2zeta - &d2_fd).max_abs() < 1e-5);
        // d2zeta symmetric in the two lower slots
        for hh in 0..n {
            for kk in 0..n {
                for m in 0..n {
                    let d = j.d2zeta[(hh, kk, m)] - j.d2zeta[(hh, m, kk)];
                    assert!(d.abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn roundtrip_batch() {
        let fr = curved_frame();
        let mut worst = 0.0f64;
        for t in 0..100 {
            let tt = t as f64;
            let y = Vector::from_vec(vec![
                (0.3 + 0.01 * tt) * (1.0 + 0.5 * (tt * 0.7).sin()),
                -0.5 + 0.013 * tt,
                0.8 * (tt * 0.3).cos(),
            ]);
            let fe = match finsler::eval(&fr, &y) {
                Ok(fe) => fe,
                Err(_) => continue,
            };
            let z = forward(&fe, &fr);
            let back = inverse(&fr, &z).unwrap();
            worst = worst.max((&back - &y).amax() / y.amax());
        }
        assert!(worst < 1e-10, "roundtrip {worst}");
    }

    #[test]
    fn homogeneity() {
        let fr = curved_frame();
        let y = Vector::from_vec(vec![0.5, -0.6, 0.9]);
        for gamma in [0.5, 2.0] {
            let r = homogeneity_residual(&fr, &y, gamma).unwrap();
            assert!(r < 1e-12, "homogeneity residual {r}");
        }
    }
}
