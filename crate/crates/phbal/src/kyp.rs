//! Extremal solutions of the KYP inequality and its dual.

use log::{debug, warn};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, C64};
use crate::mateq::{self, CareMode, FreqResponse};
use crate::ph::StateSpace;

pub const DEFAULT_EPS: f64 = 1e-12;

/// Above this order the primal anti-stabilizing cross-check of `X_max` is
/// skipped (it costs another QZ of the extended pencil).
pub const CROSS_CHECK_MAX_STATES: usize = 300;

#[derive(Clone, Debug)]
pub struct KypPair {
    pub x_min: Mat,
    pub x_max: Mat,
    /// `X_max⁻¹` as computed (the dual stabilizing solution); prefer it over
    /// inverting `x_max` when the inverse is what is needed.
    pub y_min: Mat,
    pub regularization_eps: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExtremalReport {
    pub ordering: bool,
    pub dual_residual_psd: bool,
    pub dual_ordering: bool,
}

impl ExtremalReport {
    pub fn all(&self) -> bool {
        self.ordering && self.dual_residual_psd && self.dual_ordering
    }
}

/// `[[−AY − YAᵀ, B − YCᵀ], [Bᵀ − CY, 0]]`.
pub fn dual_kyp_residual(ss: &StateSpace, y: &Mat) -> Mat {
    let n = ss.order();
    let m = ss.b.ncols();
    let mut w = Mat::zeros(n + m, n + m);
    w.view_mut((0, 0), (n, n)).copy_from(&linalg::symmetrize(&(-(&ss.a * y) - y * ss.a.transpose())));
    let off = &ss.b - y * ss.c.transpose();
    w.view_mut((0, n), (n, m)).copy_from(&off);
    w.view_mut((n, 0), (m, n)).copy_from(&off.transpose());
    w
}

/// Smallest eigenvalue of the Hermitian part of the Popov function over a
/// probe grid, relative to its largest value.
pub fn popov_margin(ss: &StateSpace) -> Result<f64> {
    let fr = FreqResponse::new(ss)?;
    let scale = linalg::norm2(&ss.a).max(1.0);
    let mut freqs = vec![0.0];
    for k in -12..=12 {
        freqs.push(scale * 10f64.powf(k as f64 / 4.0));
    }
    let m = ss.b.ncols();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for w in freqs {
        let g = fr.eval(C64::new(0.0, w))?;
        // Hermitian matrix G + Gᴴ embedded as a real symmetric 2m×2m matrix
        let mut h = Mat::zeros(2 * m, 2 * m);
        for i in 0..m {
            for j in 0..m {
                let z = g[(i, j)] + g[(j, i)].conj();
                h[(i, j)] = z.re;
                h[(i + m, j + m)] = z.re;
                h[(i, j + m)] = -z.im;
                h[(i + m, j)] = z.im;
            }
        }
        let ev = linalg::sym_eigvals(&h)?;
        lo = lo.min(ev[0]);
        hi = hi.max(ev[2 * m - 1].abs());
    }
    Ok(if hi > 0.0 { lo / hi } else { 0.0 })
}

/// Regularized extremal solutions: `X_min` is the stabilizing solution of
/// `AᵀX + XA + (Cᵀ − XB)(C − BᵀX)/ε = 0`; `X_max` is the inverse of the
/// stabilizing solution of the dual equation.
pub fn solve_extremal(ss: &StateSpace, eps: f64) -> Result<KypPair> {
    let n = ss.order();
    let m = ss.b.ncols();
    if ss.b.norm() == 0.0 || ss.c.norm() == 0.0 {
        return Err(Error::UnboundedSolution);
    }
    let abscissa = mateq::spectral_abscissa(&ss.a)?;
    if abscissa >= 0.0 {
        return Err(Error::UnstableSystem(abscissa));
    }
    let margin = popov_margin(ss)?;
    if margin < -1e-8 {
        return Err(Error::NotPassive(margin));
    }
    let r = Mat::identity(m, m) * (-eps);
    let z = Mat::zeros(n, n);
    let x_min = mateq::solve_care_pencil(&ss.a, &ss.b, &z, &r, &(-ss.c.transpose()), CareMode::Stabilizing)?;
    let y_min = mateq::solve_care_pencil(&ss.a.transpose(), &ss.c.transpose(), &z, &r, &(-&ss.b), CareMode::Stabilizing)?;
    let y_min = linalg::symmetrize(&y_min);
    let x_max = linalg::symmetrize(&linalg::inv(&y_min)?);
    if n <= CROSS_CHECK_MAX_STATES {
        match mateq::solve_care_pencil(&ss.a, &ss.b, &z, &r, &(-ss.c.transpose()), CareMode::Antistabilizing) {
            Ok(xp) => {
                let d = linalg::rel_diff(&xp, &x_max);
                debug!("X_max primal/dual relative difference {d:.2e}");
                if d > 1e-6 {
                    warn!("X_max primal and dual routes differ by {d:.2e}");
                }
            }
            Err(e) => warn!("primal anti-stabilizing solve failed: {e}"),
        }
    }
    Ok(KypPair { x_min, x_max, y_min, regularization_eps: eps })
}

fn psd_rel(s: &Mat, scale: f64, tol: f64) -> bool {
    match mateq::lambda_min(s) {
        Ok(l) => l >= -tol * scale.max(f64::MIN_POSITIVE),
        Err(_) => false,
    }
}

pub fn check_extremal_identities(pair: &KypPair, ss: &StateSpace, q: &Mat) -> ExtremalReport {
    let tol = 1e-6;
    // X_max ⪰ Q is tested as Y_min ⪯ Q⁻¹: Y_min is often numerically singular
    let lower = psd_rel(&(q - &pair.x_min), linalg::sym_norm2(q), tol);
    let upper = match linalg::spd_inv(q) {
        Ok(qi) => psd_rel(&(&qi - &pair.y_min), linalg::sym_norm2(&qi), tol),
        Err(_) => false,
    };
    let w = dual_kyp_residual(ss, &pair.y_min);
    let sc = linalg::sym_norm2(&pair.y_min) * linalg::norm2(&ss.a) + ss.b.norm();
    let dual_residual_psd = psd_rel(&w, sc, 1e-6);
    let dual_ordering = match linalg::inv(&pair.x_min) {
        Ok(ymax) => {
            let ymax = linalg::symmetrize(&ymax);
            psd_rel(&(&ymax - &pair.y_min), linalg::sym_norm2(&ymax), tol)
        }
        Err(_) => false,
    };
    ExtremalReport { ordering: lower && upper, dual_residual_psd, dual_ordering }
}
