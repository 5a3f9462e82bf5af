//! Coprime factors, a-priori error bounds and the dissipation condition.

use crate::error::{Error, Result};
use crate::kyp::KypPair;
use crate::linalg::{self, Mat};
use crate::lqg;
use crate::mateq::{self, PsdFactor, SolverTolerances};
use crate::ph::{self, PhSystem, StateSpace};

/// Realization of the stacked normalized right coprime factors `[M; N]`.
#[derive(Clone, Debug)]
pub struct CoprimeFactors {
    pub realization: StateSpace,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DissipationCondition {
    pub feasible: bool,
    pub alpha_opt: f64,
    pub c_opt: f64,
}

#[derive(Clone, Debug)]
pub struct LyapCertificate {
    pub residual: Mat,
    /// Largest eigenvalue of the residual; the inequality holds when ≤ 0.
    pub lambda_max: f64,
    pub holds: bool,
    /// ‖sharp identity + 2R‖, relative to max(‖R‖, 1).
    pub sharp_residual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeedbackVerdict {
    pub preserved: bool,
    pub lambda_min: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BoundReport {
    pub r: usize,
    pub err_coprime: Option<f64>,
    pub bound_coprime: Option<f64>,
    pub err_hinf: Option<f64>,
    pub bound_hinf: Option<f64>,
    pub err_spectral: Option<f64>,
    pub bound_spectral: Option<f64>,
    pub representation: String,
    pub method: String,
}

impl BoundReport {
    /// Pairs (error, bound) where both are present, with labels.
    pub fn checked_pairs(&self) -> Vec<(&'static str, f64, f64)> {
        let mut out = vec![];
        for (name, e, b) in [
            ("coprime", self.err_coprime, self.bound_coprime),
            ("hinf", self.err_hinf, self.bound_hinf),
            ("spectral", self.err_spectral, self.bound_spectral),
        ] {
            if let (Some(e), Some(b)) = (e, b) {
                out.push((name, e, b));
            }
        }
        out
    }

    /// Error ≤ bound for every present pair, allowing the H∞ tolerance.
    pub fn violations(&self, hinf_rel: f64) -> Vec<String> {
        self.checked_pairs()
            .into_iter()
            .filter(|(_, e, b)| *e > b * (1.0 + 10.0 * hinf_rel) + 1e-12)
            .map(|(n, e, b)| format!("r={} {}: error {:.6e} > bound {:.6e}", self.r, n, e, b))
            .collect()
    }
}

pub fn coprime_from_state_space(ss: &StateSpace, p_c: &Mat) -> Result<CoprimeFactors> {
    let n = ss.order();
    let m = ss.b.ncols();
    let p = ss.c.nrows();
    let f = ss.b.transpose() * p_c;
    let a = &ss.a - &ss.b * &f;
    if n > 0 {
        let abscissa = mateq::spectral_abscissa(&a)?;
        if abscissa >= 0.0 {
            return Err(Error::NotStabilizing(abscissa));
        }
    }
    let c = linalg::vstack(&(-&f), &ss.c);
    let d = linalg::vstack(&Mat::identity(m, m), &Mat::zeros(p, m));
    Ok(CoprimeFactors { realization: StateSpace::new(a, ss.b.clone(), c, d) })
}

/// `A − BBᵀP̂_c`, input `B`, output `[−BᵀP̂_c; C]`, feedthrough `[I; 0]`.
pub fn coprime_realization(sys: &PhSystem, p_c: &Mat) -> Result<CoprimeFactors> {
    coprime_from_state_space(&ph::to_state_space(sys), p_c)
}

pub fn gap_bound(sigma_truncated: &[f64]) -> f64 {
    2.0 * sigma_truncated.iter().map(|s| lqg::theta_of(*s)).sum::<f64>()
}

pub fn coprime_error(full: &CoprimeFactors, red: &CoprimeFactors) -> Result<f64> {
    let diff = full.realization.difference(&red.realization);
    mateq::hinf_norm(&diff, &SolverTolerances::default())
}

pub fn lyap_inequality_certificate(sys: &PhSystem, p_c: &Mat, p_f: &Mat) -> Result<LyapCertificate> {
    let n = sys.order();
    let a = sys.a();
    let bbt = &sys.b * sys.b.transpose();
    let ap = &a - &bbt * p_c;
    let i = Mat::identity(n, n);
    let fp = &i + p_f * p_c;
    let l = linalg::solve(&fp, p_f)?;
    let residual = linalg::symmetrize(&(&ap * &l + &l * ap.transpose() + &bbt));
    let lambda_max = -mateq::lambda_min(&(-&residual))?;
    let scale = linalg::norm2(&ap) * linalg::norm2(&l) + linalg::norm2(&bbt);
    let holds = lambda_max <= 1e-10 * scale.max(f64::MIN_POSITIVE);
    let sharp = &fp * &ap * p_f + p_f * ap.transpose() * fp.transpose() + &fp * &bbt * fp.transpose() + &sys.r * 2.0;
    let sharp_residual = sharp.norm() / sys.r.norm().max(1.0);
    Ok(LyapCertificate { residual, lambda_max, holds, sharp_residual })
}

/// Feasibility of `cR ⪰ ½BBᵀ` and the optimal constants
/// `ᾱ = 1/λ_max(BᵀR⁺B)`, `c̄ = 1/(2ᾱ)`.
pub fn dissipation_condition(r: &Mat, b: &Mat) -> Result<DissipationCondition> {
    let infeasible = DissipationCondition { feasible: false, alpha_opt: 0.0, c_opt: 0.0 };
    let n = r.nrows();
    if b.norm() == 0.0 {
        return Ok(DissipationCondition { feasible: true, alpha_opt: f64::INFINITY, c_opt: 0.0 });
    }
    let (w, u) = linalg::sym_eig(&linalg::symmetrize(r))?;
    let lmax = if n > 0 { w[n - 1] } else { 0.0 };
    let range: Vec<usize> = (0..n).filter(|&i| w[i] > 1e-11 * lmax && w[i] > 0.0).collect();
    if range.is_empty() {
        return Ok(infeasible);
    }
    let mut u1 = Mat::zeros(n, range.len());
    for (k, &i) in range.iter().enumerate() {
        u1.set_column(k, &u.column(i));
    }
    let coef = u1.transpose() * b;
    let resid = (b - &u1 * &coef).norm() / b.norm();
    if resid > 1e-10 {
        return Ok(infeasible);
    }
    let mut scaled = coef;
    for (k, &i) in range.iter().enumerate() {
        scaled.row_mut(k).scale_mut(w[i].powf(-0.5));
    }
    let top = linalg::norm2(&scaled).powi(2);
    let alpha = 1.0 / top;
    Ok(DissipationCondition { feasible: true, alpha_opt: alpha, c_opt: 0.5 * top })
}

/// Checks `R − B·sym(F)·Bᵀ ⪰ 0` for the output feedback `u = F y`.
pub fn feedback_radius_check(sys: &PhSystem, f: &Mat) -> Result<FeedbackVerdict> {
    let fs = linalg::symmetrize(f);
    let rf = linalg::symmetrize(&(&sys.r - &sys.b * fs * sys.b.transpose()));
    let lambda_min = mateq::lambda_min(&rf)?;
    let scale = linalg::sym_norm2(&sys.r).max(1.0);
    Ok(FeedbackVerdict { preserved: lambda_min >= -1e-10 * scale, lambda_min })
}

/// Feedback `F = factor·ᾱ·I`; violates the structure for `factor > 1`.
pub fn feedback_witness(cond: &DissipationCondition, m: usize, factor: f64) -> Mat {
    Mat::identity(m, m) * (factor * cond.alpha_opt)
}

/// Whether ‖F‖₂ is within the guaranteed radius `1/(2c̄)`.
pub fn within_radius(cond: &DissipationCondition, f: &Mat) -> bool {
    cond.feasible && linalg::norm2(f) <= 1.0 / (2.0 * cond.c_opt)
}

pub fn hinf_bound_bt(pi_truncated: &[f64], c: f64) -> f64 {
    2.0 * c.sqrt() * pi_truncated.iter().sum::<f64>()
}

pub fn hinf_error(full: &StateSpace, red: &StateSpace) -> Result<f64> {
    mateq::hinf_norm(&full.difference(red), &SolverTolerances::default())
}

pub fn spectral_bound(pi_truncated: &[f64]) -> f64 {
    2.0 * pi_truncated.iter().sum::<f64>()
}

/// `V(s) = C(sI − A)⁻¹L_Rᵀ` with `2R = L_RᵀL_R`.
pub fn spectral_factor(sys: &PhSystem) -> Result<(StateSpace, PsdFactor)> {
    let f = mateq::psd_factor(&(&sys.r * 2.0), &SolverTolerances::default())?;
    let ss = ph::to_state_space(sys);
    let lt = f.factor.transpose();
    let p = ss.c.nrows();
    let k = lt.ncols();
    Ok((StateSpace::new(ss.a, lt, ss.c, Mat::zeros(p, k)), f))
}

/// Input map `WᵀL_Rᵀ` of the reduced spectral factor.
pub fn reduced_spectral_input(w: &Mat, l_r: &PsdFactor) -> Mat {
    w.transpose() * l_r.factor.transpose()
}

/// `√λᵢ(X⁻¹G)` in descending order, for SPD X.
pub fn relative_values(x: &Mat, g: &Mat) -> Result<Vec<f64>> {
    relative_values_inv(&linalg::spd_inv(x)?, g)
}

/// Same values from `X⁻¹` directly, for X too close to singular to factor.
/// Uses `λ(X⁻¹G) = λ(G^½ X⁻¹ G^½)` with G symmetric positive semidefinite.
pub fn relative_values_inv(x_inv: &Mat, g: &Mat) -> Result<Vec<f64>> {
    let (d, u) = linalg::sym_eig(&linalg::symmetrize(g))?;
    let mut s = u;
    for (j, dj) in d.iter().enumerate() {
        s.column_mut(j).scale_mut(dj.max(0.0).sqrt());
    }
    let m = linalg::symmetrize(&(s.transpose() * x_inv * &s));
    let w = linalg::sym_eigvals(&m)?;
    let mut out: Vec<f64> = w.iter().map(|v| v.max(0.0).sqrt()).collect();
    out.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct RepresentationTable {
    pub theta_q: Vec<f64>,
    pub theta_xmin: Vec<f64>,
    pub theta_xmax: Vec<f64>,
    pub pi_q: Vec<f64>,
    pub pi_xmin: Vec<f64>,
    pub pi_xmax: Vec<f64>,
}

impl RepresentationTable {
    /// Entrywise `v(X_max) ≤ v(Q) ≤ v(X_min)` with relative slack.
    pub fn ordered(&self, slack: f64) -> bool {
        let chk = |lo: &[f64], mid: &[f64], hi: &[f64]| {
            lo.iter().zip(mid).zip(hi).all(|((a, b), c)| {
                let s = slack * c.abs().max(1e-300);
                *a <= b + s && *b <= c + s
            })
        };
        chk(&self.theta_xmax, &self.theta_q, &self.theta_xmin) && chk(&self.pi_xmax, &self.pi_q, &self.pi_xmin)
    }
}

/// LQG characteristic values θᵢ and modified Hankel-type values πᵢ for the
/// representations Q, X_min and X_max.
pub fn representation_comparison(sys: &PhSystem, pair: &KypPair) -> Result<RepresentationTable> {
    let p_c = lqg::solve_ph_lqg(sys)?.p_c;
    let mo = crate::balancing::modified_bt_gramians(sys)?.mo;
    // X_max⁻¹ is the dual solution; X_min is often near singular, so invert by LU
    let q_inv = linalg::spd_inv(&sys.q)?;
    let xmin_inv = linalg::symmetrize(&linalg::inv(&pair.x_min)?);
    let th = |x: &Mat| -> Result<Vec<f64>> { Ok(relative_values_inv(x, &p_c)?.into_iter().map(lqg::theta_of).collect()) };
    Ok(RepresentationTable {
        theta_q: th(&q_inv)?,
        theta_xmin: th(&xmin_inv)?,
        theta_xmax: th(&pair.y_min)?,
        pi_q: relative_values_inv(&q_inv, &mo)?,
        pi_xmin: relative_values_inv(&xmin_inv, &mo)?,
        pi_xmax: relative_values_inv(&pair.y_min, &mo)?,
    })
}
