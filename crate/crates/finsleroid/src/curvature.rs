//! Curvature of the angle-preserving connection: the y-contracted curvature
//! M^n_{ij}, its y-derivative companion E_k{}^n{}_{ij}, the commutator
//! curvature ρ_k{}^n{}_{ij}, the antisymmetric factor tensor T with
//! ρ_{knij} = T_{kn}{}^{hm} a_{hmij}, and the identity / contraction /
//! Bianchi residuals connecting them to the curvature of a.

use crate::connection::{connection, ConnectionEval};
use crate::error::{EvalError, Result};
use crate::finsler::{self, FinslerEval};
use crate::kappa::{self, KappaJet};
use crate::manifold::{ManifoldSpec, PointFrame};
use crate::tensor::{T3, T4, T5};
use crate::{Matrix, Vector};

#[derive(Debug, Clone)]
pub struct CurvatureEval {
    /// M^n_{ij}, indexed [n, i, j]; antisymmetric in (i, j), y_n M^n = 0.
    pub m: T3,
    /// E_k{}^n{}_{ij} = −∂M^n_{ij}/∂y^k, indexed [k, n, i, j].
    pub e: T4,
    /// ρ_k{}^n{}_{ij} = E_k{}^n{}_{ij} − M^h_{ij} C^n{}_{hk}, indexed [k, n, i, j].
    pub rho: T4,
    /// ρ_{knij} (second slot lowered with g); antisymmetric in (k, n).
    pub rho_low: T4,
    /// P_{tij}: the axis/transverse projection of the curvature of a that
    /// enters the η-projected closed form of ρ, indexed [t, i, j].
    pub p: T3,
    /// T_{kn}{}^{hm}: bilinear in the ζ-jet, with ρ_{knij} = T_{kn}{}^{hm} a_{hmij}.
    pub t_fac: T4,
}

/// a_{tlij} = a_{lu} a_t{}^u{}_{ij}, indexed [t, l, i, j].
pub(crate) fn a_low4(frame: &PointFrame) -> T4 {
    let n = frame.a.nrows();
    T4::from_fn(n, |t, l, i, j| {
        (0..n)
            .map(|u| frame.a[(l, u)] * frame.riem_curv[(t, u, i, j)])
            .sum()
    })
}

/// C^n{}_{hk} = g^{nt} A_{thk} / K, indexed [n, h, k].
fn cartan_up(fe: &FinslerEval) -> T3 {
    let n = fe.y.len();
    T3::from_fn(n, |nn, h, k| {
        (0..n)
            .map(|t| fe.g_up[(nn, t)] * fe.cartan[(t, h, k)])
            .sum::<f64>()
            / fe.K
    })
}

/// b_l a_t{}^l{}_{ij}, indexed [t, i, j].
fn b_dot_curv(fe: &FinslerEval, frame: &PointFrame) -> T3 {
    let n = fe.y.len();
    T3::from_fn(n, |t, i, j| {
        (0..n)
            .map(|l| frame.b_low[l] * frame.riem_curv[(t, l, i, j)])
            .sum()
    })
}

/// Closed form of M^n_{ij} alone (cheap path for FD probes).
pub(crate) fn m_closed(fe: &FinslerEval, frame: &PointFrame) -> T3 {
    let n = fe.y.len();
    let (g, h) = (fe.g, fe.h);
    let (b, q) = (fe.b_scalar, fe.q);
    let blrc = b_dot_curv(fe, frame);
    let cf1 = (1.0 - h) * b + g * q / 2.0;
    let vecu = &fe.v * (g / (2.0 * q)) - &frame.b_up * (1.0 - h);
    T3::from_fn(n, |nn, i, j| {
        let raised: f64 = (0..n).map(|t| frame.a_inv[(nn, t)] * blrc[(t, i, j)]).sum();
        let ybl: f64 = (0..n).map(|t| fe.y[t] * blrc[(t, i, j)]).sum();
        let yrc: f64 = (0..n).map(|t| fe.y[t] * frame.riem_curv[(t, nn, i, j)]).sum();
        (cf1 * raised + vecu[nn] * ybl) / h - yrc
    })
}

pub fn curvature(fe: &FinslerEval, frame: &PointFrame) -> CurvatureEval {
    let n = fe.y.len();
    let (g, h) = (fe.g, fe.h);
    let (b, q, big_b, k_norm) = (fe.b_scalar, fe.q, fe.B, fe.K);
    let rc = &frame.riem_curv;
    let blrc = b_dot_curv(fe, frame);
    let raised = T3::from_fn(n, |nn, i, j| {
        (0..n).map(|t| frame.a_inv[(nn, t)] * blrc[(t, i, j)]).sum()
    });
    let ybl = Matrix::from_fn(n, n, |i, j| {
        (0..n).map(|t| fe.y[t] * blrc[(t, i, j)]).sum()
    });
    let m = m_closed(fe, frame);
    let vecu = &fe.v * (g / (2.0 * q)) - &frame.b_up * (1.0 - h);
    let dm_low = &frame.b_low * (1.0 - h) + &fe.v_low * (g / (2.0 * q));
    let e = T4::from_fn(n, |k, nn, i, j| {
        -(dm_low[k] * raised[(nn, i, j)]
            + (g / (2.0 * q)) * fe.eta_mixed[(nn, k)] * ybl[(i, j)]
            + vecu[nn] * blrc[(k, i, j)])
            / h
            + rc[(k, nn, i, j)]
    });
    let cup = cartan_up(fe);
    let rho = T4::from_fn(n, |k, nn, i, j| {
        e[(k, nn, i, j)]
            - (0..n)
                .map(|hh| m[(hh, i, j)] * cup[(nn, hh, k)])
                .sum::<f64>()
    });
    let rho_low = T4::from_fn(n, |k, nn, i, j| {
        (0..n).map(|mm| fe.g_low[(nn, mm)] * rho[(k, mm, i, j)]).sum()
    });
    let alow4 = a_low4(frame);
    let p = T3::from_fn(n, |t, i, j| {
        (0..n)
            .map(|l| {
                (-h * q * q * frame.b_up[l] + (b + g * q / 2.0) * fe.v[l])
                    * alow4[(t, l, i, j)]
            })
            .sum::<f64>()
            * k_norm
            / (q * big_b)
    });
    let jet = kappa::jet(fe, frame);
    let kap2 = jet.kappa * jet.kappa;
    let k2 = k_norm * k_norm;
    let t_fac = T4::from_fn(n, |k, nn, hh, mm| {
        kap2 * (0.5
            * (jet.dzeta[(hh, k)] * jet.dzeta[(mm, nn)]
                - jet.dzeta[(mm, k)] * jet.dzeta[(hh, nn)])
            + (1.0 - h) / k2
                * (fe.y_low[k] * jet.zeta[hh] * jet.dzeta[(mm, nn)]
                    - fe.y_low[nn] * jet.zeta[hh] * jet.dzeta[(mm, k)]))
    });
    CurvatureEval { m, e, rho, rho_low, p, t_fac }
}

/// Definitional M from the x-curl of N along the horizontal distribution:
/// M^n_{ij} = ∂_iN^n_j − ∂_jN^n_i − (N^h_i D^n_{jh} − N^h_j D^n_{ih}),
/// with the x-partials taken by central differences.
pub fn m_definitional(spec: &ManifoldSpec, x: &Vector, y: &Vector) -> Result<T3> {
    let frame = spec.eval_point(x)?;
    let fe = finsler::eval(&frame, y)?;
    let conn = connection(&fe, &frame);
    let n = y.len();
    let step = 1e-6;
    // dn_x[n,j,i] = ∂N^n_j/∂x^i
    let mut dn_x = T3::zeros(n);
    for i in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += step;
        xm[i] -= step;
        let fp = spec.eval_point(&xp)?;
        let np = connection(&finsler::eval(&fp, y)?, &fp).n_coef;
        let fm = spec.eval_point(&xm)?;
        let nm = connection(&finsler::eval(&fm, y)?, &fm).n_coef;
        for nn in 0..n {
            for j in 0..n {
                dn_x[(nn, j, i)] = (np[(nn, j)] - nm[(nn, j)]) / (2.0 * step);
            }
        }
    }
    Ok(T3::from_fn(n, |nn, i, j| {
        dn_x[(nn, j, i)] - dn_x[(nn, i, j)]
            - (0..n)
                .map(|hh| {
                    conn.n_coef[(hh, i)] * conn.d_coef[(nn, j, hh)]
                        - conn.n_coef[(hh, j)] * conn.d_coef[(nn, i, hh)]
                })
                .sum::<f64>()
    }))
}

/// E as the definitional −∂M^n_{ij}/∂y^k by central differences of the
/// closed form, indexed [k, n, i, j].
pub fn e_definitional(spec: &ManifoldSpec, x: &Vector, y: &Vector) -> Result<T4> {
    let frame = spec.eval_point(x)?;
    let n = y.len();
    let step = 1e-6 * y.norm();
    let mut out = T4::zeros(n);
    for k in 0..n {
        let mut yp = y.clone();
        let mut ym = y.clone();
        yp[k] += step;
        ym[k] -= step;
        let mp = m_closed(&finsler::eval(&frame, &yp)?, &frame);
        let mm = m_closed(&finsler::eval(&frame, &ym)?, &frame);
        for nn in 0..n {
            for i in 0..n {
                for j in 0..n {
                    out[(k, nn, i, j)] = -(mp[(nn, i, j)] - mm[(nn, i, j)]) / (2.0 * step);
                }
            }
        }
    }
    Ok(out)
}

/// Max-abs deviations between independent closed forms of the same tensors.
#[derive(Debug, Clone, Copy)]
pub struct RouteResiduals {
    /// M via the image-jet contraction −y^n_t ζ^h a_h{}^t{}_{ij} vs the direct form.
    pub m_image: f64,
    /// Lowered closed form of M_{nij} vs g_{nm} M^m_{ij}.
    pub m_lowered: f64,
    /// E via the ζ-jet second-derivative route vs the direct form.
    pub e_image: f64,
    /// η-projected closed form of ρ_{knij} vs the commutator-path value.
    pub rho_projected: f64,
    /// ρ via the image-jet route vs the commutator-path value.
    pub rho_image: f64,
    /// Pullback y^t_k ζ^n_l ρ_t{}^l{}_{ij} vs a_k{}^n{}_{ij} plus its M-correction.
    pub rho_pullback: f64,
    /// ρ_{knij} vs T_{kn}{}^{hm} a_{hmij}.
    pub rho_factorized: f64,
}

pub fn route_residuals(
    fe: &FinslerEval,
    frame: &PointFrame,
    jet: &KappaJet,
    ce: &CurvatureEval,
) -> RouteResiduals {
    let n = fe.y.len();
    let (g, h) = (fe.g, fe.h);
    let (b, q, big_b, k_norm) = (fe.b_scalar, fe.q, fe.B, fe.K);
    let rc = &frame.riem_curv;
    let dyj = &jet.dy;
    let dz = &jet.dzeta;
    let z = &jet.zeta;
    let s2 = jet.S * jet.S;
    let alow4 = a_low4(frame);
    let blrc = b_dot_curv(fe, frame);
    let ybl = Matrix::from_fn(n, n, |i, j| {
        (0..n).map(|t| fe.y[t] * blrc[(t, i, j)]).sum()
    });

    let m_image = T3::from_fn(n, |nn, i, j| {
        -(0..n)
            .flat_map(|t| (0..n).map(move |hh| (t, hh)))
            .map(|(t, hh)| dyj[(nn, t)] * z[hh] * rc[(hh, t, i, j)])
            .sum::<f64>()
    });
    let r_m_image = (&m_image - &ce.m).max_abs();

    let m_low = T3::from_fn(n, |nn, i, j| {
        (0..n).map(|mm| fe.g_low[(nn, mm)] * ce.m[(mm, i, j)]).sum()
    });
    let cf1 = (1.0 - h) * b + g * q / 2.0;
    let m_lowered = T3::from_fn(n, |nn, i, j| {
        let y_alow: f64 = (0..n).map(|t| fe.y[t] * alow4[(t, nn, i, j)]).sum();
        (k_norm * k_norm / big_b)
            * (cf1 / h * blrc[(nn, i, j)]
                - (g / (2.0 * q) * fe.v_low[nn] + (1.0 - h) * frame.b_low[nn])
                    * ybl[(i, j)]
                    / h
                - y_alow)
    });
    let r_m_lowered = (&m_lowered - &m_low).max_abs();

    let e_image = T4::from_fn(n, |k, nn, i, j| {
        let t1: f64 = (0..n)
            .flat_map(|hh| (0..n).map(move |mm| (hh, mm)))
            .map(|(hh, mm)| dyj[(nn, hh)] * jet.d2zeta[(hh, k, mm)] * ce.m[(mm, i, j)])
            .sum();
        let t2: f64 = (0..n)
            .flat_map(|mm| (0..n).map(move |hh| (mm, hh)))
            .map(|(mm, hh)| dyj[(nn, mm)] * rc[(hh, mm, i, j)] * dz[(hh, k)])
            .sum();
        t1 + t2
    });
    let r_e_image = (&e_image - &ce.e).max_abs();

    // η-projected form of ρ_{knij}.
    let l_low = &fe.y_low / k_norm;
    let eta = &fe.eta_mixed;
    let rho_projected = T4::from_fn(n, |k, nn, i, j| {
        let mut r = -(l_low[k] * m_low[(nn, i, j)] - l_low[nn] * m_low[(k, i, j)]) / k_norm;
        for t in 0..n {
            r += (fe.m_low[k] * eta[(t, nn)] - fe.m_low[nn] * eta[(t, k)]) * ce.p[(t, i, j)];
        }
        for t in 0..n {
            for l in 0..n {
                r += eta[(t, k)] * eta[(l, nn)] * alow4[(t, l, i, j)] * k_norm * k_norm / big_b;
            }
        }
        r
    });
    let r_rho_projected = (&rho_projected - &ce.rho_low).max_abs();

    let rho_image = T4::from_fn(n, |k, nn, i, j| {
        let t0: f64 = (0..n)
            .flat_map(|mm| (0..n).map(move |hh| (mm, hh)))
            .map(|(mm, hh)| dyj[(nn, mm)] * rc[(hh, mm, i, j)] * dz[(hh, k)])
            .sum();
        let gm_k: f64 = (0..n).map(|mm| fe.g_low[(k, mm)] * ce.m[(mm, i, j)]).sum();
        t0 + (1.0 - h) / (k_norm * k_norm) * (fe.y[nn] * gm_k - fe.y_low[k] * ce.m[(nn, i, j)])
    });
    let r_rho_image = (&rho_image - &ce.rho).max_abs();

    let z_low = &frame.a * z;
    let pull_lhs = T4::from_fn(n, |k, nn, i, j| {
        (0..n)
            .flat_map(|t| (0..n).map(move |l| (t, l)))
            .map(|(t, l)| dyj[(t, k)] * dz[(nn, l)] * ce.rho[(t, l, i, j)])
            .sum()
    });
    let adz_m = T3::from_fn(n, |k, i, j| {
        (0..n)
            .flat_map(|r| (0..n).map(move |l| (r, l)))
            .map(|(r, l)| frame.a[(k, r)] * dz[(r, l)] * ce.m[(l, i, j)])
            .sum()
    });
    let dz_m = T3::from_fn(n, |nn, i, j| {
        (0..n).map(|l| dz[(nn, l)] * ce.m[(l, i, j)]).sum()
    });
    let pull_rhs = T4::from_fn(n, |k, nn, i, j| {
        rc[(k, nn, i, j)]
            + (1.0 - h) / (h * s2)
                * (z[nn] * adz_m[(k, i, j)] - z_low[k] * dz_m[(nn, i, j)])
    });
    let r_rho_pullback = (&pull_lhs - &pull_rhs).max_abs();

    let factorized = T4::from_fn(n, |k, nn, i, j| {
        (0..n)
            .flat_map(|hh| (0..n).map(move |mm| (hh, mm)))
            .map(|(hh, mm)| ce.t_fac[(k, nn, hh, mm)] * alow4[(hh, mm, i, j)])
            .sum()
    });
    let r_rho_factorized = (&factorized - &ce.rho_low).max_abs();

    RouteResiduals {
        m_image: r_m_image,
        m_lowered: r_m_lowered,
        e_image: r_e_image,
        rho_projected: r_rho_projected,
        rho_image: r_rho_image,
        rho_pullback: r_rho_pullback,
        rho_factorized: r_rho_factorized,
    }
}

/// Max-abs residuals of the algebraic identities tying M, E and ρ together.
#[derive(Debug, Clone, Copy)]
pub struct IdentityResiduals {
    /// y_n M^n_{ij} = 0.
    pub y_dot_m: f64,
    /// y^k E_k{}^n{}_{ij} + M^n_{ij} = 0.
    pub y_dot_e: f64,
    /// y_n E_k{}^n{}_{ij} − M_{kij} = 0.
    pub y_dot_e_low: f64,
    /// E_{mnij} + E_{nmij} − 2 C_{mnh} M^h_{ij} = 0 (C = A/K).
    pub e_symmetric_pair: f64,
    /// ρ_{knij} + ρ_{nkij} = 0.
    pub rho_antisymmetric: f64,
    /// M, E, ρ antisymmetric in the last index pair.
    pub last_pair_antisymmetric: f64,
}

pub fn identity_residuals(fe: &FinslerEval, ce: &CurvatureEval) -> IdentityResiduals {
    let n = fe.y.len();
    let mut y_dot_m: f64 = 0.0;
    let mut y_dot_e: f64 = 0.0;
    let mut y_dot_e_low: f64 = 0.0;
    let mut last_pair: f64 = 0.0;
    let m_low = T3::from_fn(n, |nn, i, j| {
        (0..n).map(|mm| fe.g_low[(nn, mm)] * ce.m[(mm, i, j)]).sum()
    });
    for i in 0..n {
        for j in 0..n {
            for nn in 0..n {
                let s: f64 = (0..n).map(|k| fe.y_low[k] * ce.m[(k, i, j)]).sum();
                y_dot_m = y_dot_m.max(s.abs());
                let se: f64 = (0..n).map(|k| fe.y[k] * ce.e[(k, nn, i, j)]).sum();
                y_dot_e = y_dot_e.max((se + ce.m[(nn, i, j)]).abs());
                let sl: f64 = (0..n).map(|k| fe.y_low[k] * ce.e[(nn, k, i, j)]).sum();
                y_dot_e_low = y_dot_e_low.max((sl - m_low[(nn, i, j)]).abs());
                last_pair = last_pair
                    .max((ce.m[(nn, i, j)] + ce.m[(nn, j, i)]).abs())
                    .max((ce.rho_low[(0, nn, i, j)] + ce.rho_low[(0, nn, j, i)]).abs());
                for k in 0..n {
                    last_pair = last_pair.max((ce.e[(k, nn, i, j)] + ce.e[(k, nn, j, i)]).abs());
                }
            }
        }
    }
    let e_low = T4::from_fn(n, |k, nn, i, j| {
        (0..n).map(|mm| fe.g_low[(nn, mm)] * ce.e[(k, mm, i, j)]).sum()
    });
    let mut e_sym: f64 = 0.0;
    let mut rho_anti: f64 = 0.0;
    for m in 0..n {
        for nn in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let c_m: f64 = (0..n)
                        .map(|hh| fe.cartan[(m, nn, hh)] / fe.K * ce.m[(hh, i, j)])
                        .sum();
                    e_sym = e_sym
                        .max((e_low[(m, nn, i, j)] + e_low[(nn, m, i, j)] - 2.0 * c_m).abs());
                    rho_anti = rho_anti
                        .max((ce.rho_low[(m, nn, i, j)] + ce.rho_low[(nn, m, i, j)]).abs());
                }
            }
        }
    }
    IdentityResiduals {
        y_dot_m,
        y_dot_e,
        y_dot_e_low,
        e_symmetric_pair: e_sym,
        rho_antisymmetric: rho_anti,
        last_pair_antisymmetric: last_pair,
    }
}

/// Full-contraction squares of ρ, M and E, each with the independently
/// assembled decomposition it must equal.  The first index pair is raised
/// with g, the last with a.
#[derive(Debug, Clone, Copy)]
pub struct ContractionValues {
    pub rho_square: f64,
    pub rho_square_decomposed: f64,
    pub m_square: f64,
    pub m_square_decomposed: f64,
    pub e_square: f64,
    pub e_square_decomposed: f64,
}

pub fn contraction_values(
    fe: &FinslerEval,
    frame: &PointFrame,
    jet: &KappaJet,
    ce: &CurvatureEval,
) -> ContractionValues {
    let n = fe.y.len();
    let (g, h) = (fe.g, fe.h);
    let (b, q, big_b) = (fe.b_scalar, fe.q, fe.B);
    let ai = &frame.a_inv;
    let gi = &fe.g_up;
    let alow4 = a_low4(frame);
    let s2 = jet.S * jet.S;
    let kap2 = jet.kappa * jet.kappa;

    let raise = |low: &T4, first: &Matrix| {
        T4::from_fn(n, |k, nn, i, j| {
            let mut s = 0.0;
            for p in 0..n {
                for qq in 0..n {
                    for mm in 0..n {
                        for l in 0..n {
                            s += first[(p, k)]
                                * first[(qq, nn)]
                                * ai[(mm, i)]
                                * ai[(l, j)]
                                * low[(p, qq, mm, l)];
                        }
                    }
                }
            }
            s
        })
    };
    let dot4 = |up: &T4, low: &T4| {
        let mut s = 0.0;
        for k in 0..n {
            for nn in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        s += up[(k, nn, i, j)] * low[(k, nn, i, j)];
                    }
                }
            }
        }
        s
    };

    let rho_up = raise(&ce.rho_low, gi);
    let rho_square = dot4(&rho_up, &ce.rho_low);

    // (ζ·a)², fully a-contracted.
    let za = T3::from_fn(n, |nn, i, j| {
        (0..n).map(|l| jet.zeta[l] * frame.riem_curv[(l, nn, i, j)]).sum()
    });
    let mut zaza = 0.0;
    for nn in 0..n {
        for mm in 0..n {
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        for l in 0..n {
                            zaza += frame.a[(nn, mm)]
                                * za[(nn, i, j)]
                                * za[(mm, k, l)]
                                * ai[(i, k)]
                                * ai[(j, l)];
                        }
                    }
                }
            }
        }
    }
    let a_up = raise(&alow4, ai);
    let aa = dot4(&a_up, &alow4);
    let rho_square_decomposed = aa + (2.0 / s2) * (1.0 / (h * h) - 1.0) * zaza;

    let m_low = T3::from_fn(n, |nn, i, j| {
        (0..n).map(|mm| fe.g_low[(nn, mm)] * ce.m[(mm, i, j)]).sum()
    });
    let m_up = T3::from_fn(n, |nn, i, j| {
        let mut s = 0.0;
        for mm in 0..n {
            for aa_ in 0..n {
                for cc in 0..n {
                    s += gi[(nn, mm)] * ai[(i, aa_)] * ai[(j, cc)] * m_low[(mm, aa_, cc)];
                }
            }
        }
        s
    });
    let mut m_square = 0.0;
    for nn in 0..n {
        for i in 0..n {
            for j in 0..n {
                m_square += m_up[(nn, i, j)] * m_low[(nn, i, j)];
            }
        }
    }
    let m_square_decomposed = kap2 * zaza;

    let e_low = T4::from_fn(n, |k, nn, i, j| {
        (0..n).map(|mm| fe.g_low[(nn, mm)] * ce.e[(k, mm, i, j)]).sum()
    });
    let e_up = raise(&e_low, gi);
    let e_square = dot4(&e_up, &e_low);
    let x2 = Matrix::from_fn(n, n, |i, j| {
        let mut s = 0.0;
        for t in 0..n {
            for l in 0..n {
                s += frame.b_up[t] * fe.y[l] * alow4[(t, l, i, j)];
            }
        }
        s
    });
    let x2_up = ai * &x2 * ai.transpose();
    let cb = b - (b + g * q / 2.0) / h;
    let blrc = b_dot_curv(fe, frame);
    let u_low = T3::from_fn(n, |nn, i, j| {
        let xy: f64 = (0..n).map(|hh| fe.y[hh] * alow4[(nn, hh, i, j)]).sum();
        cb * blrc[(nn, i, j)] - xy
    });
    let u_up = T3::from_fn(n, |nn, i, j| {
        let mut s = 0.0;
        for t in 0..n {
            for k in 0..n {
                for l in 0..n {
                    s += ai[(nn, t)] * ai[(i, k)] * ai[(j, l)] * u_low[(t, k, l)];
                }
            }
        }
        s
    });
    let mut x2x2 = 0.0;
    let mut uu = 0.0;
    for i in 0..n {
        for j in 0..n {
            x2x2 += x2_up[(i, j)] * x2[(i, j)];
            for nn in 0..n {
                uu += u_up[(nn, i, j)] * u_low[(nn, i, j)];
            }
        }
    }
    let e_square_decomposed =
        aa + g * g / (h * h * q * q) * (n as f64 / 4.0) * x2x2 + g * g / big_b * uu;

    ContractionValues {
        rho_square,
        rho_square_decomposed,
        m_square,
        m_square_decomposed,
        e_square,
        e_square_decomposed,
    }
}

/// Residual of the jet decomposition y^n_h ζ^h_{km} M^m_{ij} =
/// C^n{}_{km} M^m_{ij} + (1−h)/K² (y^n g_{km} M^m_{ij} − y_k M^n_{ij}).
pub fn jet_decomposition_residual(
    fe: &FinslerEval,
    jet: &KappaJet,
    ce: &CurvatureEval,
) -> f64 {
    let n = fe.y.len();
    let h = fe.h;
    let cup = cartan_up(fe);
    let k2 = fe.K * fe.K;
    let mut worst: f64 = 0.0;
    for k in 0..n {
        for nn in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut lhs = 0.0;
                    for hh in 0..n {
                        for mm in 0..n {
                            lhs += jet.dy[(nn, hh)] * jet.d2zeta[(hh, k, mm)] * ce.m[(mm, i, j)];
                        }
                    }
                    let gm_k: f64 =
                        (0..n).map(|mm| fe.g_low[(k, mm)] * ce.m[(mm, i, j)]).sum();
                    let cup_m: f64 =
                        (0..n).map(|mm| cup[(nn, k, mm)] * ce.m[(mm, i, j)]).sum();
                    let rhs = cup_m
                        + (1.0 - h) / k2 * (fe.y[nn] * gm_k - fe.y_low[k] * ce.m[(nn, i, j)]);
                    worst = worst.max((lhs - rhs).abs());
                }
            }
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// Horizontal finite differences and the commutator / Bianchi machinery.

/// Probe points for the horizontal derivative d_i = ∂_i + N^m_i ∂/∂y^m:
/// (x ± s e_i, y ± s N_{·i}) with s scaled down for large y.
struct HorizProbe {
    xp: Vector,
    yp: Vector,
    xm: Vector,
    ym: Vector,
    inv2s: f64,
}

fn horiz_probe(x: &Vector, y: &Vector, n_coef: &Matrix, i: usize, step: f64) -> HorizProbe {
    let sc = step / y.norm().max(1.0);
    let mut xp = x.clone();
    let mut xm = x.clone();
    xp[i] += sc;
    xm[i] -= sc;
    let dir = n_coef.column(i).clone_owned();
    HorizProbe {
        xp,
        yp: y + &dir * sc,
        xm,
        ym: y - &dir * sc,
        inv2s: 1.0 / (2.0 * sc),
    }
}

/// A (1,1) tensor section w^n_k(x,y) given with its analytic y-gradient
/// dwy[m,n,k] = ∂w^n_k/∂y^m, both computed from the frame and fiber data.
type Section = dyn Fn(&PointFrame, &FinslerEval) -> (Matrix, T3);

/// (𝒟_j w)^n_k = d_j w^n_k + D^n_{jt} w^t_k − w^n_t D^t_{jk}, indexed [j,n,k];
/// x-partial by central differences, y-partial analytic.
fn dw_section(spec: &ManifoldSpec, x: &Vector, y: &Vector, section: &Section) -> Result<T3> {
    let frame = spec.eval_point(x)?;
    let fe = finsler::eval(&frame, y)?;
    let conn = connection(&fe, &frame);
    let (w, dwy) = section(&frame, &fe);
    let n = y.len();
    let step = 1e-6;
    let mut out = T3::zeros(n);
    for j in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += step;
        xm[j] -= step;
        let fp = spec.eval_point(&xp)?;
        let wp = section(&fp, &finsler::eval(&fp, y)?).0;
        let fm = spec.eval_point(&xm)?;
        let wm = section(&fm, &finsler::eval(&fm, y)?).0;
        for nn in 0..n {
            for k in 0..n {
                let mut r = (wp[(nn, k)] - wm[(nn, k)]) / (2.0 * step);
                for m in 0..n {
                    r += conn.n_coef[(m, j)] * dwy[(m, nn, k)];
                    r += conn.d_coef[(nn, j, m)] * w[(m, k)];
                    r -= w[(nn, m)] * conn.d_coef[(m, j, k)];
                }
                out[(j, nn, k)] = r;
            }
        }
    }
    Ok(out)
}

/// [𝒟_i, 𝒟_j] w^n_k by nested horizontal differencing, indexed [i,j,n,k].
fn commutator_lhs(
    spec: &ManifoldSpec,
    x: &Vector,
    y: &Vector,
    conn: &ConnectionEval,
    section: &Section,
) -> Result<T4> {
    let n = y.len();
    let dw0 = dw_section(spec, x, y, section)?;
    // second horizontal derivative, outer step coarse to sit above the
    // noise floor of the inner differences
    let mut ddw = T4::zeros(n);
    for i in 0..n {
        let p = horiz_probe(x, y, &conn.n_coef, i, 1e-3);
        let dp = dw_section(spec, &p.xp, &p.yp, section)?;
        let dm = dw_section(spec, &p.xm, &p.ym, section)?;
        for j in 0..n {
            for nn in 0..n {
                for k in 0..n {
                    let mut r = (dp[(j, nn, k)] - dm[(j, nn, k)]) * p.inv2s;
                    for t in 0..n {
                        r += conn.d_coef[(nn, i, t)] * dw0[(j, t, k)];
                        r -= dw0[(j, nn, t)] * conn.d_coef[(t, i, k)];
                    }
                    ddw[(i, j, nn, k)] = r;
                }
            }
        }
    }
    Ok(T4::from_fn(n, |i, j, nn, k| {
        ddw[(i, j, nn, k)] - ddw[(j, i, nn, k)]
    }))
}

/// Commutator residuals for analytic test sections.
#[derive(Debug, Clone, Copy)]
pub struct CommutatorResiduals {
    /// [𝒟_i,𝒟_j]w vs M^h_{ij} ∂w/∂y^h − E_k{}^h{}_{ij} w^n_h + E_h{}^n{}_{ij} w^h_k,
    /// for the section w^n_k = b^n y_k.
    pub e_form: f64,
    /// Same commutator vs the ρ-form with the Cartan-corrected fiber
    /// derivative 𝒮_h w = ∂w/∂y^h + C·w − w·C.
    pub rho_form: f64,
    /// w^n_k = y^n y_k / K² is parallel: 𝒟w = 0.
    pub parallel_section: f64,
    /// w = δ^n_k: both sides vanish identically.
    pub identity_section: f64,
}

pub fn commutator_residuals(
    spec: &ManifoldSpec,
    x: &Vector,
    y: &Vector,
) -> Result<CommutatorResiduals> {
    let frame = spec.eval_point(x)?;
    let fe = finsler::eval(&frame, y)?;
    let conn = connection(&fe, &frame);
    let ce = curvature(&fe, &frame);
    let n = y.len();

    let axis_section: Box<Section> = Box::new(|fr: &PointFrame, fv: &FinslerEval| {
        let nn = fv.y.len();
        let w = &fr.b_up * fv.y_low.transpose();
        let dwy = T3::from_fn(nn, |m, n_, k| fr.b_up[n_] * fv.g_low[(k, m)]);
        (w, dwy)
    });
    let comm = commutator_lhs(spec, x, y, &conn, &axis_section)?;
    let (w0, dwy0) = axis_section(&frame, &fe);

    let rhs_with = |curv4: &T4, fiber: &T3| {
        T4::from_fn(n, |i, j, nn, k| {
            let mut r = 0.0;
            for hh in 0..n {
                r += ce.m[(hh, i, j)] * fiber[(hh, nn, k)];
                r -= curv4[(k, hh, i, j)] * w0[(nn, hh)];
                r += curv4[(hh, nn, i, j)] * w0[(hh, k)];
            }
            r
        })
    };
    let e_form = (&comm - &rhs_with(&ce.e, &dwy0)).max_abs();

    let cup = cartan_up(&fe);
    let sw = T3::from_fn(n, |hh, nn, k| {
        let mut r = dwy0[(hh, nn, k)];
        for t in 0..n {
            r += cup[(nn, hh, t)] * w0[(t, k)];
            r -= w0[(nn, t)] * cup[(t, hh, k)];
        }
        r
    });
    let rho_form = (&comm - &rhs_with(&ce.rho, &sw)).max_abs();

    let parallel: Box<Section> = Box::new(|_fr: &PointFrame, fv: &FinslerEval| {
        let nn = fv.y.len();
        let k2 = fv.K * fv.K;
        let w = (&fv.y * fv.y_low.transpose()) / k2;
        let dwy = T3::from_fn(nn, |m, n_, k| {
            (if n_ == m { fv.y_low[k] } else { 0.0 }
                + fv.y[n_] * fv.g_low[(k, m)]
                - 2.0 * fv.y_low[m] * fv.y[n_] * fv.y_low[k] / k2)
                / k2
        });
        (w, dwy)
    });
    let parallel_section = dw_section(spec, x, y, &parallel)?.max_abs();

    let identity: Box<Section> = Box::new(|fr: &PointFrame, _fv: &FinslerEval| {
        let nn = fr.a.nrows();
        (Matrix::identity(nn, nn), T3::zeros(nn))
    });
    let comm_id = commutator_lhs(spec, x, y, &conn, &identity)?;
    // rhs for w = δ cancels pairwise; the residual is the raw commutator
    let identity_section = comm_id.max_abs();

    Ok(CommutatorResiduals {
        e_form,
        rho_form,
        parallel_section,
        identity_section,
    })
}

/// Horizontal-derivative (Bianchi-type) residuals.  Requires the analytic
/// ∇-derivative of the curvature of a.
#[derive(Debug, Clone, Copy)]
pub struct BianchiResiduals {
    /// 𝒟_kM^n_{ij} + 𝒟_jM^n_{ki} + 𝒟_iM^n_{jk} = 0.
    pub m_cyclic: f64,
    /// 𝒟_kM^n_{ij} = −y^n_t ζ^h ∇_k a_h{}^t{}_{ij}.
    pub m_derivative_image: f64,
    /// 𝒟_l T_{kn}{}^{hm} = 0.
    pub t_parallel: f64,
    /// 𝒟_l ρ_{knij} = T_{kn}{}^{hm} ∇_l a_{hmij}.
    pub rho_derivative_factorized: f64,
    /// Cyclic identity for 𝒟ρ in (l,i,j).
    pub rho_cyclic: f64,
}

pub fn bianchi_residuals(spec: &ManifoldSpec, x: &Vector, y: &Vector) -> Result<BianchiResiduals> {
    let frame = spec.eval_point(x)?;
    let nr = frame
        .d_riem_curv
        .as_ref()
        .ok_or(EvalError::MissingRiemannDerivative)?;
    let fe = finsler::eval(&frame, y)?;
    let conn = connection(&fe, &frame);
    let ce = curvature(&fe, &frame);
    let jet = kappa::jet(&fe, &frame);
    let n = y.len();
    let chr = &frame.christoffel;
    let step = 1e-5;

    // 𝒟_k M^n_{ij}: + D on the upper slot, − Christoffel on the lower pair.
    let mut dm = T4::zeros(n);
    for k in 0..n {
        let p = horiz_probe(x, y, &conn.n_coef, k, step);
        let fp = spec.eval_point(&p.xp)?;
        let mp = m_closed(&finsler::eval(&fp, &p.yp)?, &fp);
        let fm = spec.eval_point(&p.xm)?;
        let mm = m_closed(&finsler::eval(&fm, &p.ym)?, &fm);
        for nn in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut r = (mp[(nn, i, j)] - mm[(nn, i, j)]) * p.inv2s;
                    for t in 0..n {
                        r += conn.d_coef[(nn, k, t)] * ce.m[(t, i, j)];
                        r -= chr[(t, k, i)] * ce.m[(nn, t, j)];
                        r -= chr[(t, k, j)] * ce.m[(nn, i, t)];
                    }
                    dm[(k, nn, i, j)] = r;
                }
            }
        }
    }
    let mut m_cyclic: f64 = 0.0;
    for k in 0..n {
        for nn in 0..n {
            for i in 0..n {
                for j in 0..n {
                    m_cyclic = m_cyclic.max(
                        (dm[(k, nn, i, j)] + dm[(j, nn, k, i)] + dm[(i, nn, j, k)]).abs(),
                    );
                }
            }
        }
    }
    let mut m_derivative_image: f64 = 0.0;
    for k in 0..n {
        for nn in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut rhs = 0.0;
                    for t in 0..n {
                        for hh in 0..n {
                            rhs -= jet.dy[(nn, t)] * jet.zeta[hh] * nr[(k, hh, t, i, j)];
                        }
                    }
                    m_derivative_image = m_derivative_image.max((dm[(k, nn, i, j)] - rhs).abs());
                }
            }
        }
    }

    // 𝒟_l T_{kn}{}^{hm}: − D on the two lower slots, + Christoffel on the
    // two upper ones.
    let t_at = |xx: &Vector, yy: &Vector| -> Result<T4> {
        let fr = spec.eval_point(xx)?;
        let fv = finsler::eval(&fr, yy)?;
        Ok(curvature(&fv, &fr).t_fac)
    };
    let mut t_parallel: f64 = 0.0;
    for l in 0..n {
        let p = horiz_probe(x, y, &conn.n_coef, l, step);
        let tp = t_at(&p.xp, &p.yp)?;
        let tm = t_at(&p.xm, &p.ym)?;
        for k in 0..n {
            for nn in 0..n {
                for hh in 0..n {
                    for mm in 0..n {
                        let mut r = (tp[(k, nn, hh, mm)] - tm[(k, nn, hh, mm)]) * p.inv2s;
                        for u in 0..n {
                            r -= conn.d_coef[(u, l, k)] * ce.t_fac[(u, nn, hh, mm)];
                            r -= conn.d_coef[(u, l, nn)] * ce.t_fac[(k, u, hh, mm)];
                            r += chr[(hh, l, u)] * ce.t_fac[(k, nn, u, mm)];
                            r += chr[(mm, l, u)] * ce.t_fac[(k, nn, hh, u)];
                        }
                        t_parallel = t_parallel.max(r.abs());
                    }
                }
            }
        }
    }

    // 𝒟_l ρ_{knij} (all slots lower) against T ∇a with the ∇-derivative's
    // raised slot lowered by a.
    let rho_at = |xx: &Vector, yy: &Vector| -> Result<T4> {
        let fr = spec.eval_point(xx)?;
        let fv = finsler::eval(&fr, yy)?;
        Ok(curvature(&fv, &fr).rho_low)
    };
    let nr_low = T5::from_fn(n, |k, hh, t, i, j| {
        (0..n).map(|s| frame.a[(t, s)] * nr[(k, hh, s, i, j)]).sum()
    });
    let mut drho = T5::zeros(n);
    for l in 0..n {
        let p = horiz_probe(x, y, &conn.n_coef, l, step);
        let rp = rho_at(&p.xp, &p.yp)?;
        let rm = rho_at(&p.xm, &p.ym)?;
        for k in 0..n {
            for nn in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        let mut r = (rp[(k, nn, i, j)] - rm[(k, nn, i, j)]) * p.inv2s;
                        for u in 0..n {
                            r -= conn.d_coef[(u, l, k)] * ce.rho_low[(u, nn, i, j)];
                            r -= conn.d_coef[(u, l, nn)] * ce.rho_low[(k, u, i, j)];
                            r -= chr[(u, l, i)] * ce.rho_low[(k, nn, u, j)];
                            r -= chr[(u, l, j)] * ce.rho_low[(k, nn, i, u)];
                        }
                        drho[(l, k, nn, i, j)] = r;
                    }
                }
            }
        }
    }
    let mut rho_derivative_factorized: f64 = 0.0;
    let mut rho_cyclic: f64 = 0.0;
    for l in 0..n {
        for k in 0..n {
            for nn in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        let mut rhs = 0.0;
                        for hh in 0..n {
                            for mm in 0..n {
                                rhs += ce.t_fac[(k, nn, hh, mm)] * nr_low[(l, hh, mm, i, j)];
                            }
                        }
                        rho_derivative_factorized =
                            rho_derivative_factorized.max((drho[(l, k, nn, i, j)] - rhs).abs());
                        rho_cyclic = rho_cyclic.max(
                            (drho[(l, k, nn, i, j)]
                                + drho[(j, k, nn, l, i)]
                                + drho[(i, k, nn, j, l)])
                                .abs(),
                        );
                    }
                }
            }
        }
    }

    Ok(BianchiResiduals {
        m_cyclic,
        m_derivative_image,
        t_parallel,
        rho_derivative_factorized,
        rho_cyclic,
    })
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

    // b = dx¹ with a independent of x¹ makes b parallel while a stays curved.
    const PARALLEL_B: &str = r#"
dim = 3
g = 1.1

[metric_family]
tag = "diagonal-exp"
coeff = [[0.0, 0.0, 0.0], [0.0, 0.08, 0.05], [0.0, 0.04, -0.07]]

[b_family]
tag = "constant-axis"
axis = [1.0, 0.0, 0.0]
"#;

    const FLAT: &str = r#"
dim = 3
g = 0.8

[metric_family]
tag = "flat"

[b_family]
tag = "constant-axis"
axis = [0.0, 0.0, 1.0]
"#;

    fn setup() -> (ManifoldSpec, Vector, Vector) {
        let spec = load_spec(CURVED).unwrap();
        let x = Vector::from_vec(vec![0.15, -0.2, 0.1]);
        let y = Vector::from_vec(vec![0.7, 0.4, -0.8]);
        (spec, x, y)
    }

    fn eval_all(
        spec: &ManifoldSpec,
        x: &Vector,
        y: &Vector,
    ) -> (PointFrame, FinslerEval, CurvatureEval, KappaJet) {
        let frame = spec.eval_point(x).unwrap();
        let fe = finsler::eval(&frame, y).unwrap();
        let ce = curvature(&fe, &frame);
        let jet = kappa::jet(&fe, &frame);
        (frame, fe, ce, jet)
    }

    #[test]
    fn closed_forms_match_definitional_routes() {
        let (spec, x, y) = setup();
        let (_, _, ce, _) = eval_all(&spec, &x, &y);
        let m_def = m_definitional(&spec, &x, &y).unwrap();
        assert!((&m_def - &ce.m).max_abs() < 1e-6, "M definitional route");
        let e_def = e_definitional(&spec, &x, &y).unwrap();
        assert!((&e_def - &ce.e).max_abs() < 1e-6, "E definitional route");
    }

    #[test]
    fn alternative_closed_forms_agree() {
        let (spec, x, y) = setup();
        let (frame, fe, ce, jet) = eval_all(&spec, &x, &y);
        let r = route_residuals(&fe, &frame, &jet, &ce);
        assert!(r.m_image < 1e-9, "M image route: {:.2e}", r.m_image);
        assert!(r.m_lowered < 1e-9, "M lowered route: {:.2e}", r.m_lowered);
        assert!(r.e_image < 1e-9, "E image route: {:.2e}", r.e_image);
        assert!(r.rho_projected < 1e-8, "rho projected: {:.2e}", r.rho_projected);
        assert!(r.rho_image < 1e-9, "rho image: {:.2e}", r.rho_image);
        assert!(r.rho_pullback < 1e-9, "rho pullback: {:.2e}", r.rho_pullback);
        assert!(r.rho_factorized < 1e-8, "rho factorized: {:.2e}", r.rho_factorized);
    }

    #[test]
    fn algebraic_identities_hold() {
        let (spec, x, y) = setup();
        let (_, fe, ce, jet) = eval_all(&spec, &x, &y);
        let idr = identity_residuals(&fe, &ce);
        assert!(idr.y_dot_m < 1e-8, "y·M: {:.2e}", idr.y_dot_m);
        assert!(idr.y_dot_e < 1e-8, "y·E: {:.2e}", idr.y_dot_e);
        assert!(idr.y_dot_e_low < 1e-8, "y_n E: {:.2e}", idr.y_dot_e_low);
        assert!(idr.e_symmetric_pair < 1e-8, "E sym: {:.2e}", idr.e_symmetric_pair);
        assert!(idr.rho_antisymmetric < 1e-9, "rho antisym: {:.2e}", idr.rho_antisymmetric);
        assert!(
            idr.last_pair_antisymmetric < 1e-9,
            "(i,j) antisym: {:.2e}",
            idr.last_pair_antisymmetric
        );
        let d4 = jet_decomposition_residual(&fe, &jet, &ce);
        assert!(d4 < 1e-7, "jet decomposition: {d4:.2e}");
    }

    #[test]
    fn contractions_decompose() {
        let (spec, x, y) = setup();
        let (frame, fe, ce, jet) = eval_all(&spec, &x, &y);
        let c = contraction_values(&fe, &frame, &jet, &ce);
        let rel = |lhs: f64, rhs: f64| (lhs - rhs).abs() / lhs.abs().max(1e-300);
        assert!(
            rel(c.rho_square, c.rho_square_decomposed) < 1e-7,
            "rho²: {} vs {}",
            c.rho_square,
            c.rho_square_decomposed
        );
        assert!(
            rel(c.m_square, c.m_square_decomposed) < 1e-7,
            "M²: {} vs {}",
            c.m_square,
            c.m_square_decomposed
        );
        assert!(
            rel(c.e_square, c.e_square_decomposed) < 1e-7,
            "E²: {} vs {}",
            c.e_square,
            c.e_square_decomposed
        );
        assert!(c.rho_square > 1e-8, "nontrivial contraction");
    }

    #[test]
    fn commutator_matches_curvature() {
        let (spec, x, y) = setup();
        let r = commutator_residuals(&spec, &x, &y).unwrap();
        assert!(r.e_form < 1e-5, "E-form: {:.2e}", r.e_form);
        assert!(r.rho_form < 1e-5, "rho-form: {:.2e}", r.rho_form);
        assert!(r.parallel_section < 1e-7, "parallel: {:.2e}", r.parallel_section);
        assert!(r.identity_section < 1e-12, "identity: {:.2e}", r.identity_section);
    }

    #[test]
    fn bianchi_identities_hold() {
        let (spec, x, y) = setup();
        let r = bianchi_residuals(&spec, &x, &y).unwrap();
        assert!(r.m_cyclic < 1e-6, "M cyclic: {:.2e}", r.m_cyclic);
        assert!(
            r.m_derivative_image < 1e-6,
            "M derivative: {:.2e}",
            r.m_derivative_image
        );
        assert!(r.t_parallel < 1e-6, "T parallel: {:.2e}", r.t_parallel);
        assert!(
            r.rho_derivative_factorized < 1e-6,
            "rho derivative: {:.2e}",
            r.rho_derivative_factorized
        );
        assert!(r.rho_cyclic < 1e-6, "rho cyclic: {:.2e}", r.rho_cyclic);
    }

    #[test]
    fn finite_difference_mode_refuses_bianchi() {
        let fd_spec = load_spec(
            r#"
dim = 3
g = 1.1
derivative_mode = "finite-difference"

[metric_family]
tag = "diagonal-exp"
coeff = [[0.10, -0.06, 0.04], [-0.03, 0.08, 0.05], [0.02, 0.04, -0.07]]

[b_family]
tag = "constant-axis"
axis = [0.3, -0.2, 1.0]
"#,
        )
        .unwrap();
        let x = Vector::from_vec(vec![0.15, -0.2, 0.1]);
        let y = Vector::from_vec(vec![0.7, 0.4, -0.8]);
        let err = bianchi_residuals(&fd_spec, &x, &y).unwrap_err();
        assert_eq!(err, EvalError::MissingRiemannDerivative);
        assert_eq!(
            err.to_string(),
            "curvature derivatives unavailable in finite-difference mode"
        );
    }

    #[test]
    fn flat_space_has_no_curvature() {
        let spec = load_spec(FLAT).unwrap();
        let x = Vector::from_vec(vec![0.3, -0.1, 0.2]);
        let y = Vector::from_vec(vec![0.5, -0.6, 0.4]);
        let (_, _, ce, _) = eval_all(&spec, &x, &y);
        assert!(ce.m.max_abs() < 1e-15);
        assert!(ce.e.max_abs() < 1e-15);
        assert!(ce.rho.max_abs() < 1e-15);
        let r = commutator_residuals(&spec, &x, &y).unwrap();
        assert!(r.e_form < 1e-9, "flat commutator: {:.2e}", r.e_form);
        let b = bianchi_residuals(&spec, &x, &y).unwrap();
        assert!(b.m_derivative_image < 1e-12);
        assert!(b.rho_derivative_factorized < 1e-12);
    }

    #[test]
    fn vanishing_charge_reduces_to_riemann() {
        let spec = load_spec(
            r#"
dim = 3
g = 0.0

[metric_family]
tag = "diagonal-exp"
coeff = [[0.10, -0.06, 0.04], [-0.03, 0.08, 0.05], [0.02, 0.04, -0.07]]

[b_family]
tag = "constant-axis"
axis = [0.3, -0.2, 1.0]
"#,
        )
        .unwrap();
        let x = Vector::from_vec(vec![0.15, -0.2, 0.1]);
        let y = Vector::from_vec(vec![0.7, 0.4, -0.8]);
        let (frame, fe, ce, jet) = eval_all(&spec, &x, &y);
        let n = y.len();
        // ρ and E collapse onto the curvature of a; M keeps its y-contraction.
        let mut r_rho: f64 = 0.0;
        let mut r_e: f64 = 0.0;
        let mut r_m: f64 = 0.0;
        for k in 0..n {
            for nn in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        r_rho = r_rho
                            .max((ce.rho[(k, nn, i, j)] - frame.riem_curv[(k, nn, i, j)]).abs());
                        r_e =
                            r_e.max((ce.e[(k, nn, i, j)] - frame.riem_curv[(k, nn, i, j)]).abs());
                    }
                }
            }
        }
        for nn in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let yrc: f64 =
                        (0..n).map(|t| y[t] * frame.riem_curv[(t, nn, i, j)]).sum();
                    r_m = r_m.max((ce.m[(nn, i, j)] + yrc).abs());
                }
            }
        }
        assert!(r_rho < 1e-9, "rho → a-curvature: {r_rho:.2e}");
        assert!(r_e < 1e-12, "E → a-curvature: {r_e:.2e}");
        assert!(r_m < 1e-12, "M → −y·a-curvature: {r_m:.2e}");
        assert!(fe.cartan.max_abs() < 1e-12, "Cartan vanishes");
        let c = contraction_values(&fe, &frame, &jet, &ce);
        assert!(
            (c.rho_square - c.rho_square_decomposed).abs() / c.rho_square.abs() < 1e-9,
            "charge-free contraction has no correction term"
        );
    }

    #[test]
    fn parallel_axis_collapses_onto_riemann_curvature() {
        let spec = load_spec(PARALLEL_B).unwrap();
        let x = Vector::from_vec(vec![0.15, -0.2, 0.1]);
        let y = Vector::from_vec(vec![0.7, 0.4, -0.8]);
        let frame = spec.eval_point(&x).unwrap();
        assert!(frame.nabla_b.amax() < 1e-12, "axis parallel");
        assert!(frame.riem_curv.max_abs() > 1e-3, "curvature nontrivial");
        let fe = finsler::eval(&frame, &y).unwrap();
        let ce = curvature(&fe, &frame);
        let jet = kappa::jet(&fe, &frame);
        let n = y.len();
        // a parallel axis annihilates the curvature: b_l a_t{}^l{}_{ij} = 0,
        // so E is the curvature of a and M its plain y-contraction.
        let blrc = b_dot_curv(&fe, &frame);
        assert!(blrc.max_abs() < 1e-12, "b·curv: {:.2e}", blrc.max_abs());
        let mut r_e: f64 = 0.0;
        let mut r_m: f64 = 0.0;
        for k in 0..n {
            for nn in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        r_e =
                            r_e.max((ce.e[(k, nn, i, j)] - frame.riem_curv[(k, nn, i, j)]).abs());
                    }
                }
            }
        }
        for nn in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let yrc: f64 =
                        (0..n).map(|t| y[t] * frame.riem_curv[(t, nn, i, j)]).sum();
                    r_m = r_m.max((ce.m[(nn, i, j)] + yrc).abs());
                }
            }
        }
        assert!(r_e < 1e-12, "E = a-curvature: {r_e:.2e}");
        assert!(r_m < 1e-12, "M = −y·a-curvature: {r_m:.2e}");
        // ρ itself keeps its Cartan correction (the charge is nonzero), but
        // every route still agrees on it.
        let r = route_residuals(&fe, &frame, &jet, &ce);
        assert!(r.rho_image < 1e-9);
        assert!(r.rho_pullback < 1e-9);
    }
}
