//! The two-vector angle of the space: α(y₁,y₂) = arccos(λ)/h with
//! λ = (A₁A₂ + h²·v₁₂)/√(B₁B₂), the induced scalar product K₁K₂α, and the
//! analytic λ-derivatives used by the angle-preservation identities.

use crate::error::{EvalError, Result};
use crate::finsler;
use crate::manifold::PointFrame;
use crate::{fd, Vector};

/// |λ| may exceed 1 by at most this much before the pair is rejected.
pub const LAMBDA_SLACK: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct AnglePair {
    pub y1: Vector,
    pub y2: Vector,
    pub lambda: f64,
    pub alpha: f64,
    /// v₁₂ = a_mn y₁^m y₂^n − b₁b₂.
    pub v12: f64,
    pub dlam_dy1: Vector,
    pub dlam_dy2: Vector,
    pub dlam_dg: f64,
}

struct PairScalars {
    b: f64,
    q: f64,
    a_cap: f64,
    b_cap: f64,
}

/// Per-vector scalars for the angle; tolerates q = 0 (axis vectors) since
/// λ itself has no 1/q pole.
fn pair_scalars(frame: &PointFrame, y: &Vector) -> Result<PairScalars> {
    let ayy = (&frame.a * y).dot(y);
    if ayy <= 0.0 {
        return Err(EvalError::NullVector);
    }
    let b = frame.b_low.dot(y);
    let q = (ayy - b * b).max(0.0).sqrt();
    let g = frame.g;
    Ok(PairScalars {
        b,
        q,
        a_cap: b + g * q / 2.0,
        b_cap: b * b + g * b * q + q * q,
    })
}

pub(crate) fn lambda_of(frame: &PointFrame, y1: &Vector, y2: &Vector) -> Result<(f64, f64)> {
    let s1 = pair_scalars(frame, y1)?;
    let s2 = pair_scalars(frame, y2)?;
    let h2 = frame.h * frame.h;
    let v12 = (&frame.a * y1).dot(y2) - s1.b * s2.b;
    let lam = (s1.a_cap * s2.a_cap + h2 * v12) / (s1.b_cap * s2.b_cap).sqrt();
    Ok((lam, v12))
}

fn clamp_lambda(lam: f64) -> Result<f64> {
    if lam.abs() > 1.0 + LAMBDA_SLACK {
        return Err(EvalError::AngleDomain);
    }
    Ok(lam.clamp(-1.0, 1.0))
}

/// λ and α only; axis vectors (q = 0) are admissible here.
pub fn angle_scalars(frame: &PointFrame, y1: &Vector, y2: &Vector) -> Result<(f64, f64)> {
    let (lam_raw, _) = lambda_of(frame, y1, y2)?;
    let lam = clamp_lambda(lam_raw)?;
    Ok((lam, lam.acos() / frame.h))
}

/// Full angle data including the analytic λ-gradients (off-slit arguments).
pub fn angle(frame: &PointFrame, y1: &Vector, y2: &Vector) -> Result<AnglePair> {
    finsler::eval_scalars(frame, y1)?;
    finsler::eval_scalars(frame, y2)?;
    let (lam_raw, v12) = lambda_of(frame, y1, y2)?;
    let lam = clamp_lambda(lam_raw)?;
    let alpha = lam.acos() / frame.h;
    let dlam_dy1 = dlam_first(frame, y1, y2);
    let dlam_dy2 = dlam_first(frame, y2, y1);
    let s1 = pair_scalars(frame, y1)?;
    let s2 = pair_scalars(frame, y2)?;
    let g = frame.g;
    let dlam_dg = -0.5 * (s1.b * s1.q / s1.b_cap + s2.b * s2.q / s2.b_cap) * lam_raw
        + (s1.q * s2.a_cap + s2.q * s1.a_cap - g * v12)
            / (2.0 * (s1.b_cap * s2.b_cap).sqrt());
    Ok(AnglePair { y1: y1.clone(), y2: y2.clone(), lambda: lam, alpha, v12, dlam_dy1, dlam_dy2, dlam_dg })
}

/// ∂λ/∂y₁ in closed form (swap arguments for ∂λ/∂y₂).
fn dlam_first(frame: &PointFrame, y1: &Vector, y2: &Vector) -> Vector {
    let (g, h) = (frame.g, frame.h);
    let h2 = h * h;
    let bl = &frame.b_low;
    let u1 = &frame.a * y1;
    let u2 = &frame.a * y2;
    let b1 = bl.dot(y1);
    let b2 = bl.dot(y2);
    let q1 = ((&frame.a * y1).dot(y1) - b1 * b1).max(0.0).sqrt();
    let q2 = ((&frame.a * y2).dot(y2) - b2 * b2).max(0.0).sqrt();
    let a1 = b1 + g * q1 / 2.0;
    let a2 = b2 + g * q2 / 2.0;
    let bb1 = b1 * b1 + g * b1 * q1 + q1 * q1;
    let bb2 = b2 * b2 + g * b2 * q2 + q2 * q2;
    let v1l = &u1 - bl * b1;
    let v2l = &u2 - bl * b2;
    let v12 = u1.dot(y2) - b1 * b2;
    let term = &v2l * bb1 + bl * (q1 * q1 * a2) - &v1l * (b1 * a2)
        - (&v1l * h2 + (bl + &v1l * (g / (2.0 * q1))) * a1) * v12;
    term * (h2 / (bb1 * (bb1 * bb2).sqrt()))
}

/// ⟨y₁, y₂⟩ = K₁ K₂ α.
pub fn scalar_product(frame: &PointFrame, y1: &Vector, y2: &Vector) -> Result<f64> {
    let k1 = finsler::eval_scalars(frame, y1)?.K;
    let k2 = finsler::eval_scalars(frame, y2)?.K;
    let (_, alpha) = angle_scalars(frame, y1, y2)?;
    Ok(k1 * k2 * alpha)
}

/// The opposed axis b⁻ = −e^{gπ/(2h)}·b^i, scaled so K(b⁻) = 1; it sits at
/// angle π/h from b and anchors the lower covering chart.
pub fn opposed_axis(frame: &PointFrame) -> Vector {
    &frame.b_up * (-(frame.g * std::f64::consts::PI / (2.0 * frame.h)).exp())
}

/// FD gradient of λ in the first argument (cross-check route).
pub fn dlam_dy1_fd(frame: &PointFrame, y1: &Vector, y2: &Vector, step: f64) -> Result<Vector> {
    let f = |yy: &Vector| -> Result<f64> { Ok(lambda_of(frame, yy, y2)?.0) };
    fd::grad(&f, y1, step)
}
