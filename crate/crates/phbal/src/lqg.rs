//! LQG controller synthesis that keeps the port-Hamiltonian structure, the
//! classical and Q-conjugated variants, and closed-loop assembly.

use log::{debug, warn};
use nalgebra::DVector;

use crate::balancing::{self, BalancingTransform};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::mateq::{self, CareMode, SolverTolerances};
use crate::ph::{self, CoEnergyPh, PhSystem, StateSpace};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GramianVariant {
    PhModified,
    Classical,
    QConjugated,
    ModifiedCare,
}

impl GramianVariant {
    pub fn name(self) -> &'static str {
        match self {
            GramianVariant::PhModified => "ph_modified",
            GramianVariant::Classical => "classical",
            GramianVariant::QConjugated => "q_conjugated",
            GramianVariant::ModifiedCare => "modified_care",
        }
    }
}

#[derive(Clone, Debug)]
pub struct LqgGramians {
    pub p_c: Mat,
    pub p_f: Mat,
    pub variant: GramianVariant,
}

#[derive(Clone, Debug)]
pub struct Controller {
    pub state_space: StateSpace,
    pub ph_realization: Option<PhSystem>,
}

#[derive(Clone, Debug)]
pub struct ClosedLoop {
    pub a: Mat,
}

fn rel_check(res: &Mat, scale: f64, tol: f64, what: &str) -> Result<()> {
    let r = res.norm() / scale.max(f64::MIN_POSITIVE);
    debug!("{what}: relative residual {r:.2e}");
    if r > tol {
        return Err(Error::NotConverged(format!("{what} residual {r:.3e}")));
    }
    Ok(())
}

/// Residual of `A P + P Aᵀ − P CᵀC P + BBᵀ + 2R` at `P = Q⁻¹`.
pub fn modified_fare_residual(sys: &PhSystem, p: &Mat) -> Mat {
    let a = sys.a();
    let c = sys.c();
    &a * p + p * a.transpose() - p * c.transpose() * &c * p + &sys.b * sys.b.transpose() + &sys.r * 2.0
}

/// Control Riccati solution with weight `CᵀC` and the analytic filter
/// solution `Q⁻¹`.
pub fn solve_ph_lqg(sys: &PhSystem) -> Result<LqgGramians> {
    let a = sys.a();
    let c = sys.c();
    let p_c = mateq::solve_care(&a, &sys.b, &(c.transpose() * &c), CareMode::Stabilizing)?;
    let p_f = linalg::spd_inv(&sys.q)?;
    let res = modified_fare_residual(sys, &p_f);
    let scale = 2.0 * linalg::norm2(&a) * linalg::norm2(&p_f) + (&sys.b * sys.b.transpose()).norm() + sys.r.norm() + 1.0;
    rel_check(&res, scale, 1e-8, "filter Riccati at Q⁻¹")?;
    Ok(LqgGramians { p_c, p_f, variant: GramianVariant::PhModified })
}

/// Controller `Â_c = A − BBᵀP̂_c − P̂_f CᵀC`, `B̂_c = P̂_f Cᵀ`, `Ĉ_c = BᵀP̂_c`
/// with the pH realization whose Hamiltonian matrix is `P̂_c`.
pub fn build_ph_controller(sys: &PhSystem, g: &LqgGramians) -> Result<Controller> {
    if g.variant != GramianVariant::PhModified {
        return Err(Error::GramianVariantMismatch { expected: "ph_modified", got: g.variant.name() });
    }
    let n = sys.order();
    let a = sys.a();
    let c = sys.c();
    let ac = &a - &sys.b * sys.b.transpose() * &g.p_c - &g.p_f * c.transpose() * &c;
    let bc = &g.p_f * c.transpose();
    let cc = sys.b.transpose() * &g.p_c;
    let pci = linalg::spd_inv(&g.p_c)?;
    let j = linalg::skew_part(&(&ac * &pci));
    let f = &pci * &sys.q + Mat::identity(n, n);
    let r = linalg::symmetrize(&(&f * &sys.b * sys.b.transpose() * f.transpose() * 0.5));
    let realization = PhSystem { j, r, q: g.p_c.clone(), b: sys.b.clone() };
    let d = linalg::rel_diff(&realization.a(), &ac);
    if d > 1e-6 {
        warn!("pH controller realization deviates from the state-space form by {d:.2e}");
    }
    let ss = StateSpace::strictly_proper(ac, bc, cc);
    Ok(Controller { state_space: ss, ph_realization: Some(realization) })
}

/// Output feedback `u = −y`: `P_c = Q` for the weight `CᵀC + 2QRQ`, filter
/// Riccati with `BBᵀ`; the controller's Hamiltonian matrix is `P_f⁻¹`.
pub fn modified_care_controller(sys: &PhSystem) -> Result<(LqgGramians, Controller)> {
    let a = sys.a();
    let c = sys.c();
    let bbt = &sys.b * sys.b.transpose();
    let qt = c.transpose() * &c + &sys.q * &sys.r * &sys.q * 2.0;
    let p_c = sys.q.clone();
    let res = a.transpose() * &p_c + &p_c * &a - &p_c * &bbt * &p_c + &qt;
    rel_check(&res, 2.0 * linalg::norm2(&a) * linalg::norm2(&p_c) + qt.norm() + 1.0, 1e-8, "control Riccati at Q")?;
    let p_f = mateq::solve_care(&a.transpose(), &c.transpose(), &bbt, CareMode::Stabilizing)?;
    let ac = &a - &bbt * &p_c - &p_f * c.transpose() * &c;
    let bc = &p_f * c.transpose();
    let cc = c.clone();
    let f = &sys.b + &bc;
    let realization = PhSystem {
        j: linalg::skew_part(&(&ac * &p_f)),
        r: linalg::symmetrize(&(&f * f.transpose() * 0.5)),
        q: linalg::symmetrize(&linalg::spd_inv(&p_f)?),
        b: bc.clone(),
    };
    let g = LqgGramians { p_c, p_f, variant: GramianVariant::ModifiedCare };
    Ok((g, Controller { state_space: StateSpace::strictly_proper(ac, bc, cc), ph_realization: Some(realization) }))
}

#[derive(Clone, Debug)]
pub struct Alg1Result {
    pub reduced: PhSystem,
    pub controller: Controller,
    pub transform: BalancingTransform,
    pub balanced: PhSystem,
    pub gramians: LqgGramians,
    pub order: usize,
}

/// Balances `(P̂_f, P̂_c)`, truncates (equal to the effort-constraint
/// reduction) and synthesizes the reduced pH controller.
pub fn algorithm1_pipeline(sys: &PhSystem, r: usize) -> Result<Alg1Result> {
    let g = solve_ph_lqg(sys)?;
    let tol = SolverTolerances::default();
    let bal = balancing::square_root_balance(&g.p_f, &g.p_c, Some(r), &tol)?;
    let balanced = balancing::balanced_system(sys, &bal)?;
    let order = balancing::adjust_order(&bal.sigma, r);
    let reduced = balancing::truncate(&balanced, order);
    let ec = balancing::effort_constraint_reduce(&balanced, order)?;
    let d = linalg::rel_diff(&reduced.q, &ec.q);
    if d > 1e-8 {
        warn!("effort-constraint reduction differs from truncation by {d:.2e}");
    }
    let gr = solve_ph_lqg(&reduced)?;
    let controller = build_ph_controller(&reduced, &gr)?;
    Ok(Alg1Result { reduced, controller, transform: bal, balanced, gramians: g, order })
}

#[derive(Clone, Debug)]
pub struct CoEnergyLqg {
    pub p_c: Mat,
    pub p_f: Mat,
    pub controller: CoEnergyPh,
}

/// Co-energy form of the pH-LQG design: `Ẽ_c = P̃_c⁻¹`, `B̃_c = B`,
/// `C̃_c = Bᵀ`.
pub fn coenergy_lqg(ce: &CoEnergyPh) -> Result<CoEnergyLqg> {
    let q = linalg::spd_inv(&ce.e)?;
    let sys = PhSystem { j: ce.j.clone(), r: ce.r.clone(), q: q.clone(), b: ce.b.clone() };
    let p_c = solve_ph_lqg(&sys)?.p_c;
    let p_f = q;
    let jr = &ce.j - &ce.r;
    let bbt = &ce.b * ce.b.transpose();
    let res = &jr * &p_f * ce.e.transpose() + &ce.e * &p_f * jr.transpose() - &ce.e * &p_f * &bbt * &p_f * ce.e.transpose() + &bbt + &ce.r * 2.0;
    rel_check(&res, jr.norm() * 2.0 + bbt.norm() + 1.0, 1e-8, "co-energy filter Riccati at E⁻¹")?;
    let ei = &p_f;
    let pci = linalg::spd_inv(&p_c)?;
    let inner = &jr - &bbt * &p_c * &ce.e - &ce.e * &p_f * &bbt;
    let pfi = &ce.e;
    let ac = pfi * ei * inner * ei * &pci;
    let controller = CoEnergyPh {
        e: linalg::symmetrize(&pci),
        j: linalg::skew_part(&ac),
        r: linalg::symmetrize(&(-&ac)),
        b: ce.b.clone(),
    };
    Ok(CoEnergyLqg { p_c, p_f, controller })
}

fn weighted_input(b: &Mat, w: &Mat) -> Result<Mat> {
    // B W^{-1/2} with W = LLᵀ, returned as B L⁻ᵀ
    let l = linalg::cholesky_lower(w)?;
    let li = linalg::tri_inv_lower(&l)?;
    Ok(b * li.transpose())
}

/// Classical LQG design with weights `(Q̃, R̃)` and covariances `(Q_f, R_f)`.
pub fn classical_lqg(ss: &StateSpace, qt: &Mat, rt: &Mat, qf: &Mat, rf: &Mat) -> Result<(LqgGramians, Controller)> {
    let bw = weighted_input(&ss.b, rt)?;
    let cw = weighted_input(&ss.c.transpose(), rf)?;
    let p_c = mateq::solve_care(&ss.a, &bw, qt, CareMode::Stabilizing)?;
    let p_f = mateq::solve_care(&ss.a.transpose(), &cw, qf, CareMode::Stabilizing)?;
    let rti = linalg::spd_inv(rt)?;
    let rfi = linalg::spd_inv(rf)?;
    let ac = &ss.a - &ss.b * &rti * ss.b.transpose() * &p_c - &p_f * ss.c.transpose() * &rfi * &ss.c;
    let bc = &p_f * ss.c.transpose() * &rfi;
    let cc = &rti * ss.b.transpose() * &p_c;
    let g = LqgGramians { p_c, p_f, variant: GramianVariant::Classical };
    Ok((g, Controller { state_space: StateSpace::strictly_proper(ac, bc, cc), ph_realization: None }))
}

/// Filter covariance that makes the LQG Gramians Q-conjugate:
/// `Q⁻¹(2QJᵀP_c + 2P_cJQ + Q̃)Q⁻¹`.
pub fn conjugating_filter_weight(sys: &PhSystem, p_c: &Mat, qt: &Mat) -> Result<Mat> {
    let qi = linalg::spd_inv(&sys.q)?;
    let inner = &sys.q * sys.j.transpose() * p_c * 2.0 + p_c * &sys.j * &sys.q * 2.0 + qt;
    Ok(linalg::symmetrize(&(&qi * inner * &qi)))
}

#[derive(Clone, Debug)]
pub struct QConjResult {
    pub reduced: PhSystem,
    pub controller: Controller,
    pub gramians: LqgGramians,
    pub transform: BalancingTransform,
    /// ‖Q_b − I‖ of the balanced system.
    pub q_balanced_dev: f64,
    /// Residuals of the two Riccati identities after the `Υ₁^{1/4}` scaling.
    pub scaled_residuals: (f64, f64),
    /// `λ_min(−A_cᵀQ_r − Q_rA_c)`: negative means the controller has no pH
    /// realization with the plant's Hamiltonian.
    pub kyp_margin: f64,
    pub order: usize,
}

/// Gramians with `Q̃ = CᵀC`, `R̃ = R_f = I` and the conjugating filter weight;
/// `P_f = Q⁻¹P_cQ⁻¹` is residual-checked.
pub fn q_conjugated_gramians(sys: &PhSystem) -> Result<(LqgGramians, Mat)> {
    q_conjugated_gramians_weighted(sys, None)
}

/// As [`q_conjugated_gramians`] with an explicit control weight `Q̃`.
pub fn q_conjugated_gramians_weighted(sys: &PhSystem, weight: Option<&Mat>) -> Result<(LqgGramians, Mat)> {
    let a = sys.a();
    let c = sys.c();
    let qt = weight.cloned().unwrap_or_else(|| c.transpose() * &c);
    let p_c = mateq::solve_care(&a, &sys.b, &qt, CareMode::Stabilizing)?;
    let qf = conjugating_filter_weight(sys, &p_c, &qt)?;
    let qi = linalg::spd_inv(&sys.q)?;
    let p_f = linalg::symmetrize(&(&qi * &p_c * &qi));
    let res = &a * &p_f + &p_f * a.transpose() - &p_f * c.transpose() * &c * &p_f + &qf;
    let scale = 2.0 * linalg::norm2(&a) * linalg::norm2(&p_f) + qf.norm() + 1.0;
    rel_check(&res, scale, 1e-8, "conjugated filter Riccati")?;
    Ok((LqgGramians { p_c, p_f, variant: GramianVariant::QConjugated }, qf))
}

pub fn q_conjugated_pipeline(sys: &PhSystem, r: usize) -> Result<QConjResult> {
    q_conjugated_pipeline_weighted(sys, r, None)
}

/// Algorithm with a user control weight `Q̃` (default `CᵀC`); the reduced
/// weight is `VᵀQ̃V` for the retained balancing directions `V`.
pub fn q_conjugated_pipeline_weighted(sys: &PhSystem, r: usize, weight: Option<&Mat>) -> Result<QConjResult> {
    let (g, _) = q_conjugated_gramians_weighted(sys, weight)?;
    let tol = SolverTolerances::default();
    let bal = balancing::square_root_balance(&g.p_f, &g.p_c, Some(r), &tol)?;
    let balanced = balancing::balanced_system(sys, &bal)?;
    let k = bal.order();
    let q_balanced_dev = (&balanced.q - Mat::identity(k, k)).norm();
    let order = balancing::adjust_order(&bal.sigma, r);
    let reduced = balancing::effort_constraint_reduce(&balanced, order)?;
    let rs = ph::to_state_space(&reduced);
    let qt = match weight {
        Some(w) => {
            let v = bal.t_inv.columns(0, order);
            linalg::symmetrize(&(v.transpose() * w * v))
        }
        None => rs.c.transpose() * &rs.c,
    };
    let p_cr = mateq::solve_care(&rs.a, &rs.b, &qt, CareMode::Stabilizing)?;
    let qf = conjugating_filter_weight(&reduced, &p_cr, &qt)?;
    let im = Mat::identity(rs.b.ncols(), rs.b.ncols());
    let (_, controller) = classical_lqg(&rs, &qt, &im, &qf, &im)?;
    let ac = &controller.state_space.a;
    let kyp_margin = mateq::lambda_min(&linalg::symmetrize(&(-(ac.transpose() * &reduced.q) - &reduced.q * ac)))?;

    // Υ₁^{1/4} scaling maps the reduced model onto the one of algorithm 1
    let ups: Vec<f64> = bal.sigma[..order].to_vec();
    let t = Mat::from_diagonal(&DVector::from_iterator(order, ups.iter().map(|u| u.powf(0.25))));
    let ti = Mat::from_diagonal(&DVector::from_iterator(order, ups.iter().map(|u| u.powf(-0.25))));
    let s = Mat::from_diagonal(&DVector::from_iterator(order, ups.iter().map(|u| u.sqrt())));
    let ah = &t * &rs.a * &ti;
    let bh = &t * &rs.b;
    let ch = &rs.c * &ti;
    let rh = &t * &reduced.r * &t;
    let res1 = &ah * &s + &s * ah.transpose() - &s * ch.transpose() * &ch * &s + &bh * bh.transpose() + &rh * 2.0;
    let res2 = ah.transpose() * &s + &s * &ah - &s * &bh * bh.transpose() * &s + ch.transpose() * &ch;
    let sc = 1.0 + linalg::norm2(&ah) * linalg::norm2(&s);
    let scaled_residuals = (res1.norm() / sc, res2.norm() / sc);
    Ok(QConjResult { reduced, controller, gramians: g, transform: bal, q_balanced_dev, scaled_residuals, kyp_margin, order })
}

/// `u = −y_c`, `u_c = y`: `A_cl = [[A, −B C_c], [B_c C, A_c]]`.
pub fn interconnect(plant: &PhSystem, ctrl: &Controller) -> Result<ClosedLoop> {
    let ss = ph::to_state_space(plant);
    let k = &ctrl.state_space;
    if k.b.ncols() != ss.c.nrows() || k.c.nrows() != ss.b.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "plant has {} inputs / {} outputs, controller {} inputs / {} outputs",
            ss.b.ncols(),
            ss.c.nrows(),
            k.b.ncols(),
            k.c.nrows()
        )));
    }
    let n = ss.order();
    let nc = k.order();
    let mut a = Mat::zeros(n + nc, n + nc);
    a.view_mut((0, 0), (n, n)).copy_from(&ss.a);
    a.view_mut((0, n), (n, nc)).copy_from(&(-(&ss.b * &k.c)));
    a.view_mut((n, 0), (nc, n)).copy_from(&(&k.b * &ss.c));
    a.view_mut((n, n), (nc, nc)).copy_from(&k.a);
    Ok(ClosedLoop { a })
}

/// Closed loop of two pH systems as a single pH system with block Hamiltonian.
pub fn closed_loop_ph(plant: &PhSystem, ctrl: &PhSystem) -> PhSystem {
    let n = plant.order();
    let nc = ctrl.order();
    let mut j = linalg::block_diag(&plant.j, &ctrl.j);
    let cpl = &plant.b * ctrl.b.transpose();
    j.view_mut((0, n), (n, nc)).copy_from(&(-&cpl));
    j.view_mut((n, 0), (nc, n)).copy_from(&cpl.transpose());
    PhSystem {
        j,
        r: linalg::block_diag(&plant.r, &ctrl.r),
        q: linalg::block_diag(&plant.q, &ctrl.q),
        b: Mat::zeros(n + nc, 0),
    }
}

/// `σᵢ = √λᵢ(P_f P_c)` (descending) and `θᵢ = σᵢ/√(1+σᵢ²)`.
pub fn characteristic_values(g: &LqgGramians) -> Result<(Vec<f64>, Vec<f64>)> {
    let l = linalg::cholesky_lower(&g.p_c)?;
    let m = linalg::symmetrize(&(l.transpose() * &g.p_f * &l));
    let w = linalg::sym_eigvals(&m)?;
    let sigma: Vec<f64> = w.iter().rev().map(|x| x.max(0.0).sqrt()).collect();
    let theta = sigma.iter().map(|s| theta_of(*s)).collect();
    Ok((sigma, theta))
}

pub fn theta_of(sigma: f64) -> f64 {
    sigma / (1.0 + sigma * sigma).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(r: f64) -> PhSystem {
        let o = Mat::from_element(1, 1, 1.0);
        PhSystem::new(Mat::zeros(1, 1), Mat::from_element(1, 1, r), o.clone(), o)
    }

    fn ex_a1() -> PhSystem {
        PhSystem::new(
            Mat::zeros(2, 2),
            Mat::identity(2, 2),
            Mat::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]),
            Mat::from_row_slice(2, 2, &[1.0, 0.0, 2.0, 1.0]),
        )
    }

    #[test]
    fn scalar_gramians() {
        let g = solve_ph_lqg(&scalar(1.0)).unwrap();
        assert!((g.p_c[(0, 0)] - (2f64.sqrt() - 1.0)).abs() < 1e-12);
        assert_eq!(g.p_f[(0, 0)], 1.0);
        let g = solve_ph_lqg(&PhSystem::new(Mat::zeros(1, 1), Mat::zeros(1, 1), Mat::from_element(1, 1, 1.0), Mat::from_element(1, 1, 1.0))).unwrap();
        assert!((g.p_c[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scalar_controller() {
        let sys = scalar(1.0);
        let k = build_ph_controller(&sys, &solve_ph_lqg(&sys).unwrap()).unwrap();
        assert!((k.state_space.a[(0, 0)] + 1.0 + 2f64.sqrt()).abs() < 1e-12);
        assert!((k.state_space.b[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((k.state_space.c[(0, 0)] - (2f64.sqrt() - 1.0)).abs() < 1e-12);
        let cl = interconnect(&sys, &k).unwrap();
        assert!(mateq::spectral_abscissa(&cl.a).unwrap() < 0.0);
        let bad = LqgGramians { variant: GramianVariant::Classical, ..solve_ph_lqg(&sys).unwrap() };
        assert!(matches!(build_ph_controller(&sys, &bad), Err(Error::GramianVariantMismatch { .. })));
    }

    #[test]
    fn modified_care_is_output_feedback() {
        let (g, k) = modified_care_controller(&scalar(1.0)).unwrap();
        assert_eq!(g.p_c[(0, 0)], 1.0);
        assert!((k.state_space.c[(0, 0)] - 1.0).abs() < 1e-15);
        let real = k.ph_realization.unwrap();
        assert!(linalg::rel_diff(&real.a(), &k.state_space.a) < 1e-10);
    }

    #[test]
    fn example_a1_classical() {
        let sys = ex_a1();
        let ss = ph::to_state_space(&sys);
        let qt = Mat::from_row_slice(2, 2, &[5.0, 4.0, 4.0, 7.0]);
        let p_c = mateq::solve_care(&ss.a, &ss.b, &qt, CareMode::Stabilizing).unwrap();
        assert!((&p_c - Mat::identity(2, 2)).norm() < 1e-10);
        let qf = conjugating_filter_weight(&sys, &p_c, &qt).unwrap();
        assert!((&qf - Mat::from_row_slice(2, 2, &[4.0, -7.0, -7.0, 17.0])).norm() < 1e-10);
        let i2 = Mat::identity(2, 2);
        let (g, k) = classical_lqg(&ss, &qt, &i2, &qf, &i2).unwrap();
        assert!((&g.p_f - Mat::from_row_slice(2, 2, &[2.0, -3.0, -3.0, 5.0])).norm() < 1e-9);
        assert!((&k.state_space.a - Mat::from_row_slice(2, 2, &[2.0, 1.0, -17.0, -17.0])).norm() < 1e-8);
        assert!((mateq::spectral_abscissa(&k.state_space.a).unwrap() - 1.0586).abs() < 1e-3);
        let cl = interconnect(&sys, &k).unwrap();
        assert!(mateq::spectral_abscissa(&cl.a).unwrap() < 0.0);
    }

    #[test]
    fn example_a1_weighted_pipeline() {
        let qt = Mat::from_row_slice(2, 2, &[5.0, 4.0, 4.0, 7.0]);
        let out = q_conjugated_pipeline_weighted(&ex_a1(), 2, Some(&qt)).unwrap();
        let ab = mateq::spectral_abscissa(&out.controller.state_space.a).unwrap();
        assert!((ab - 1.0586).abs() < 1e-3, "{ab}");
        assert!(out.kyp_margin < 0.0);
        let plain = q_conjugated_pipeline(&ex_a1(), 2).unwrap();
        assert!(mateq::spectral_abscissa(&plain.controller.state_space.a).unwrap() < 0.0);
    }

    #[test]
    fn theta_values() {
        assert!((theta_of(1.0) - 0.5f64.sqrt()).abs() < 1e-15);
        let g = solve_ph_lqg(&scalar(1.0)).unwrap();
        let (s, t) = characteristic_values(&g).unwrap();
        assert!((s[0] - (2f64.sqrt() - 1.0).sqrt()).abs() < 1e-12);
        assert!(t[0] > 0.0 && t[0] < 1.0);
    }

    #[test]
    fn coenergy_scalar() {
        let ce = ph::to_coenergy(&scalar(1.0)).unwrap();
        let out = coenergy_lqg(&ce).unwrap();
        assert_eq!(out.p_f[(0, 0)], 1.0);
        assert!(out.controller.r[(0, 0)] >= 0.0);
    }
}
