//! Central finite differences used by the definitional (non-closed-form)
//! routes and by the finite-difference derivative mode.

use crate::error::Result;
use crate::tensor::T3;
use crate::{Matrix, Vector};

fn shifted(x: &Vector, k: usize, dx: f64) -> Vector {
    let mut s = x.clone();
    s[k] += dx;
    s
}

pub fn d_scalar(f: &dyn Fn(&Vector) -> Result<f64>, x: &Vector, k: usize, step: f64) -> Result<f64> {
    Ok((f(&shifted(x, k, step))? - f(&shifted(x, k, -step))?) / (2.0 * step))
}

pub fn grad(f: &dyn Fn(&Vector) -> Result<f64>, x: &Vector, step: f64) -> Result<Vector> {
    let n = x.len();
    let mut g = Vector::zeros(n);
    for k in 0..n {
        g[k] = d_scalar(f, x, k, step)?;
    }
    Ok(g)
}

pub fn d_vector(
    f: &dyn Fn(&Vector) -> Result<Vector>,
    x: &Vector,
    k: usize,
    step: f64,
) -> Result<Vector> {
    Ok((f(&shifted(x, k, step))? - f(&shifted(x, k, -step))?) / (2.0 * step))
}

/// jac[i,k] = ∂f_i/∂x^k.
pub fn jacobian(f: &dyn Fn(&Vector) -> Result<Vector>, x: &Vector, step: f64) -> Result<Matrix> {
    let n = x.len();
    let mut j = Matrix::zeros(f(x)?.len(), n);
    for k in 0..n {
        j.set_column(k, &d_vector(f, x, k, step)?);
    }
    Ok(j)
}

pub fn d_matrix(
    f: &dyn Fn(&Vector) -> Result<Matrix>,
    x: &Vector,
    k: usize,
    step: f64,
) -> Result<Matrix> {
    Ok((f(&shifted(x, k, step))? - f(&shifted(x, k, -step))?) / (2.0 * step))
}

/// out[i,j,k] = ∂m_ij/∂x^k.
pub fn d_matrix_all(f: &dyn Fn(&Vector) -> Result<Matrix>, x: &Vector, step: f64) -> Result<T3> {
    let n = x.len();
    let mut out = T3::zeros(n);
    for k in 0..n {
        let d = d_matrix(f, x, k, step)?;
        for i in 0..n {
            for j in 0..n {
                out[(i, j, k)] = d[(i, j)];
            }
        }
    }
    Ok(out)
}

pub fn d_t3(f: &dyn Fn(&Vector) -> Result<T3>, x: &Vector, k: usize, step: f64) -> Result<T3> {
    let p = f(&shifted(x, k, step))?;
    let m = f(&shifted(x, k, -step))?;
    Ok(&(&p - &m) * (1.0 / (2.0 * step)))
}

/// Hessian of a scalar: out[i,j] = ∂²f/∂x^i∂x^j by nested central differences.
pub fn hessian(f: &dyn Fn(&Vector) -> Result<f64>, x: &Vector, step: f64) -> Result<Matrix> {
    let n = x.len();
    let mut out = Matrix::zeros(n, n);
    let f0 = f(x)?;
    for i in 0..n {
        for j in 0..n {
            let v = if i == j {
                (f(&shifted(x, i, step))? - 2.0 * f0 + f(&shifted(x, i, -step))?) / (step * step)
            } else {
                let pp = f(&shifted(&shifted(x, i, step), j, step))?;
                let pm = f(&shifted(&shifted(x, i, step), j, -step))?;
                let mp = f(&shifted(&shifted(x, i, -step), j, step))?;
                let mm = f(&shifted(&shifted(x, i, -step), j, -step))?;
                (pp - pm - mp + mm) / (4.0 * step * step)
            };
            out[(i, j)] = v;
        }
    }
    Ok(out)
}
