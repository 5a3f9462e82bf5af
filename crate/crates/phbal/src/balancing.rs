//! Square-root balancing of Gramian pairs and the truncations built on it.

use log::info;

use crate::error::{Error, Result};
use crate::kyp::KypPair;
use crate::linalg::{self, Mat};
use crate::mateq::{self, SolverTolerances};
use crate::ph::{self, PhSystem, StateSpace};

/// Contragredient transform. `t` is k×n and `t_inv` is n×k where k is the
/// number of retained (numerically nonzero) balanced values.
#[derive(Clone, Debug)]
pub struct BalancingTransform {
    pub t: Mat,
    pub t_inv: Mat,
    pub sigma: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct TruncationProjector {
    pub v: Mat,
    pub w: Mat,
    pub r: usize,
}

/// Controllability-type and observability-type Gramians.
#[derive(Clone, Debug)]
pub struct Gramians {
    pub lc: Mat,
    pub mo: Mat,
}

impl BalancingTransform {
    pub fn order(&self) -> usize {
        self.sigma.len()
    }

    pub fn projector(&self, r: usize) -> TruncationProjector {
        TruncationProjector {
            v: self.t_inv.columns(0, r).into_owned(),
            w: self.t.rows(0, r).transpose(),
            r,
        }
    }
}

/// Square factor `L` (rows scaled eigenvectors) with `LᵀL = G`; negative
/// rounding dust is clipped and exactly-zero directions dropped.
fn gram_factor(g: &Mat) -> Result<Mat> {
    let (w, v) = linalg::sym_eig(&linalg::symmetrize(g))?;
    let n = g.nrows();
    let keep: Vec<usize> = (0..n).rev().filter(|&i| w[i] > 0.0).collect();
    let mut l = Mat::zeros(keep.len(), n);
    for (row, &i) in keep.iter().enumerate() {
        let s = w[i].sqrt();
        for j in 0..n {
            l[(row, j)] = s * v[(j, i)];
        }
    }
    Ok(l)
}

/// Balances `(G_c, G_o)` keeping values above `cutoff_rel · σ₁`.
pub fn square_root_balance_trunc(gc: &Mat, go: &Mat, cutoff_rel: f64) -> Result<BalancingTransform> {
    let lc = gram_factor(gc)?;
    let lo = gram_factor(go)?;
    let n = gc.nrows();
    if lc.nrows() == 0 || lo.nrows() == 0 {
        return Ok(BalancingTransform { t: Mat::zeros(0, n), t_inv: Mat::zeros(n, 0), sigma: vec![] });
    }
    let (mut u, s, vt) = linalg::svd(&(&lc * lo.transpose()))?;
    let mut z = vt.transpose();
    let k = s.iter().take_while(|&&x| x > cutoff_rel * s[0]).count();
    for j in 0..k {
        let col = u.column(j);
        let imax = col.iamax();
        if col[imax] < 0.0 {
            u.column_mut(j).neg_mut();
            z.column_mut(j).neg_mut();
        }
    }
    let mut t = z.columns(0, k).transpose() * &lo;
    let mut t_inv = lc.transpose() * u.columns(0, k);
    for j in 0..k {
        let f = s[j].powf(-0.5);
        t.row_mut(j).scale_mut(f);
        t_inv.column_mut(j).scale_mut(f);
    }
    Ok(BalancingTransform { t, t_inv, sigma: s.iter().take(k).copied().collect() })
}

pub fn square_root_balance(gc: &Mat, go: &Mat, r_max: Option<usize>, tol: &SolverTolerances) -> Result<BalancingTransform> {
    let bal = square_root_balance_trunc(gc, go, tol.rank_rel)?;
    if let Some(r) = r_max {
        if r > bal.order() {
            return Err(Error::RankDeficient { requested: r, rank: bal.order() });
        }
    }
    Ok(bal)
}

pub fn standard_gramians(ss: &StateSpace) -> Result<Gramians> {
    let lyap = mateq::Lyapunov::new(&ss.a)?;
    let tol = SolverTolerances::default().riccati_residual_rel;
    let lc = lyap.solve(&ss.a, &(&ss.b * ss.b.transpose()), false, tol)?;
    let mo = lyap.solve(&ss.a, &(ss.c.transpose() * &ss.c), true, tol)?;
    Ok(Gramians { lc, mo })
}

/// `L_c = Q⁻¹` (analytic, residual-checked) and the observability Gramian.
pub fn modified_bt_gramians(sys: &PhSystem) -> Result<Gramians> {
    let a = sys.a();
    let lc = linalg::spd_inv(&sys.q)?;
    let res = &a * &lc + &lc * a.transpose() + &sys.r * 2.0;
    let scale = linalg::norm2(&a) * linalg::norm2(&lc) + linalg::norm2(&sys.r);
    if res.norm() > 1e-8 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NotConverged(format!("Q⁻¹ Lyapunov residual {:.3e}", res.norm() / scale)));
    }
    let c = sys.c();
    let mo = mateq::solve_lyapunov_t(&a, &(c.transpose() * &c))?;
    Ok(Gramians { lc, mo })
}

/// Lowers `r` while it would split a cluster of values equal within 1e-10.
pub fn adjust_order(sigma: &[f64], r: usize) -> usize {
    let mut k = r.min(sigma.len());
    while k > 0 && k < sigma.len() && (sigma[k - 1] - sigma[k]).abs() <= 1e-10 * sigma[k - 1] {
        k -= 1;
    }
    if k != r.min(sigma.len()) {
        info!("reduced order {r} splits a repeated balanced value; using {k}");
    }
    k
}

/// Petrov–Galerkin projection onto the leading `r` balanced coordinates.
pub fn project_balanced(sys: &PhSystem, bal: &BalancingTransform, r: usize) -> Result<PhSystem> {
    let p = bal.projector(r);
    Ok(PhSystem {
        j: linalg::skew_part(&(p.w.transpose() * &sys.j * &p.w)),
        r: linalg::symmetrize(&(p.w.transpose() * &sys.r * &p.w)),
        q: linalg::symmetrize(&(p.v.transpose() * &sys.q * &p.v)),
        b: p.w.transpose() * &sys.b,
    })
}

/// Full balanced system (all retained coordinates).
pub fn balanced_system(sys: &PhSystem, bal: &BalancingTransform) -> Result<PhSystem> {
    project_balanced(sys, bal, bal.order())
}

/// Keeps the leading `r` coordinates: `J₁₁, R₁₁, B₁` and the Schur complement
/// `Q₁₁ − Q₁₂Q₂₂⁻¹Q₂₁`.
pub fn effort_constraint_reduce(sys: &PhSystem, r: usize) -> Result<PhSystem> {
    let n = sys.order();
    assert!(r <= n, "reduced order exceeds state dimension");
    let q11 = sys.q.view((0, 0), (r, r)).into_owned();
    let qr = if r == n {
        q11
    } else {
        let q12 = sys.q.view((0, r), (r, n - r)).into_owned();
        let q22 = sys.q.view((r, r), (n - r, n - r)).into_owned();
        let x = linalg::Lu::new(&q22)
            .and_then(|lu| lu.solve(&q12.transpose()))
            .map_err(|_| Error::SingularQ22)?;
        linalg::symmetrize(&(q11 - q12 * x))
    };
    Ok(PhSystem {
        j: sys.j.view((0, 0), (r, r)).into_owned(),
        r: sys.r.view((0, 0), (r, r)).into_owned(),
        q: qr,
        b: sys.b.rows(0, r).into_owned(),
    })
}

/// Plain truncation to the leading `r` coordinates.
pub fn truncate(sys: &PhSystem, r: usize) -> PhSystem {
    PhSystem {
        j: sys.j.view((0, 0), (r, r)).into_owned(),
        r: sys.r.view((0, 0), (r, r)).into_owned(),
        q: sys.q.view((0, 0), (r, r)).into_owned(),
        b: sys.b.rows(0, r).into_owned(),
    }
}

#[derive(Clone, Debug)]
pub struct ModBtResult {
    pub reduced: PhSystem,
    pub balanced: PhSystem,
    pub transform: BalancingTransform,
    pub projector: TruncationProjector,
}

/// Balances `(Q⁻¹, M_o)` and truncates; cross-checks the truncation
/// against the effort-constraint reduction.
pub fn modified_bt_reduce(sys: &PhSystem, r: usize) -> Result<ModBtResult> {
    let g = modified_bt_gramians(sys)?;
    let tol = SolverTolerances::default();
    let bal = square_root_balance(&g.lc, &g.mo, Some(r), &tol)?;
    let balanced = balanced_system(sys, &bal)?;
    let reduced = truncate(&balanced, r);
    let ec = effort_constraint_reduce(&balanced, r)?;
    let d = linalg::rel_diff(&reduced.q, &ec.q);
    if d > 1e-6 {
        log::warn!("effort-constraint and truncation differ by {d:.2e}");
    }
    let projector = bal.projector(r);
    Ok(ModBtResult { reduced, balanced, transform: bal, projector })
}

/// Balances `X_min` against `X_max⁻¹` and truncates.
pub fn positive_real_balance_reduce(sys: &PhSystem, pair: &KypPair, r: usize) -> Result<(StateSpace, BalancingTransform)> {
    let ss = ph::to_state_space(sys);
    let tol = SolverTolerances::default();
    let bal = square_root_balance(&pair.y_min, &pair.x_min, Some(r), &tol)?;
    let p = bal.projector(r);
    let red = StateSpace::new(
        p.w.transpose() * &ss.a * &p.v,
        p.w.transpose() * &ss.b,
        &ss.c * &p.v,
        ss.d.clone(),
    );
    Ok((red, bal))
}

/// Truncated state-space model `(WᵀAV, WᵀB, CV, D)` of a projector.
pub fn project_state_space(ss: &StateSpace, p: &TruncationProjector) -> StateSpace {
    StateSpace::new(p.w.transpose() * &ss.a * &p.v, p.w.transpose() * &ss.b, &ss.c * &p.v, ss.d.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_identities(gc: &Mat, go: &Mat, bal: &BalancingTransform) {
        let s = Mat::from_diagonal(&nalgebra::DVector::from_vec(bal.sigma.clone()));
        let tol = 1e-8 * bal.sigma[0];
        assert!((&bal.t * gc * bal.t.transpose() - &s).norm() < tol);
        assert!((bal.t_inv.transpose() * go * &bal.t_inv - &s).norm() < tol);
        let k = bal.order();
        assert!((&bal.t * &bal.t_inv - Mat::identity(k, k)).norm() < 1e-8);
    }

    #[test]
    fn identity_gramians() {
        let i = Mat::identity(3, 3);
        let bal = square_root_balance(&i, &i, None, &SolverTolerances::default()).unwrap();
        assert_eq!(bal.sigma, vec![1.0; 3]);
        check_identities(&i, &i, &bal);
    }

    #[test]
    fn diagonal_pair() {
        let gc = Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![4.0, 1.0]));
        let go = Mat::identity(2, 2);
        let bal = square_root_balance(&gc, &go, None, &SolverTolerances::default()).unwrap();
        assert!((bal.sigma[0] - 2.0).abs() < 1e-14 && (bal.sigma[1] - 1.0).abs() < 1e-14);
        check_identities(&gc, &go, &bal);
        let r = square_root_balance(&gc, &Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.0])), Some(2), &SolverTolerances::default());
        assert!(matches!(r, Err(Error::RankDeficient { requested: 2, rank: 1 })));
    }

    #[test]
    fn scalar_gramians() {
        let ss = StateSpace::strictly_proper(Mat::from_element(1, 1, -1.0), Mat::from_element(1, 1, 1.0), Mat::from_element(1, 1, 1.0));
        let g = standard_gramians(&ss).unwrap();
        assert!((g.lc[(0, 0)] - 0.5).abs() < 1e-15 && (g.mo[(0, 0)] - 0.5).abs() < 1e-15);
        let ss = StateSpace::strictly_proper(-Mat::identity(2, 2), Mat::identity(2, 2), Mat::from_row_slice(1, 2, &[1.0, 0.0]));
        let g = standard_gramians(&ss).unwrap();
        assert!((g.lc - Mat::identity(2, 2) * 0.5).norm() < 1e-15);
        assert!((g.mo - Mat::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.0])).norm() < 1e-15);
        let sys = PhSystem::new(Mat::zeros(1, 1), Mat::from_element(1, 1, 1.0), Mat::from_element(1, 1, 2.0), Mat::from_element(1, 1, 1.0));
        assert!((modified_bt_gramians(&sys).unwrap().lc[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn order_adjustment() {
        assert_eq!(adjust_order(&[3.0, 2.0, 2.0, 1.0], 2), 1);
        assert_eq!(adjust_order(&[3.0, 2.0, 2.0, 1.0], 3), 3);
        assert_eq!(adjust_order(&[3.0, 2.0], 2), 2);
    }

    #[test]
    fn effort_constraint_block_diagonal_q() {
        let sys = PhSystem::new(
            Mat::from_row_slice(3, 3, &[0.0, 1.0, 2.0, -1.0, 0.0, 3.0, -2.0, -3.0, 0.0]),
            Mat::identity(3, 3),
            Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0, 3.0])),
            Mat::from_row_slice(3, 1, &[1.0, 1.0, 1.0]),
        );
        let red = effort_constraint_reduce(&sys, 2).unwrap();
        assert_eq!(red, truncate(&sys, 2));
        assert_eq!(effort_constraint_reduce(&sys, 3).unwrap(), sys);
    }

    #[test]
    fn effort_constraint_matches_projection() {
        let q = Mat::from_row_slice(3, 3, &[3.0, 1.0, 0.5, 1.0, 2.0, 0.3, 0.5, 0.3, 1.5]);
        let sys = PhSystem::new(
            Mat::from_row_slice(3, 3, &[0.0, 1.0, 0.0, -1.0, 0.0, 2.0, 0.0, -2.0, 0.0]),
            Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.5, 0.2])),
            q.clone(),
            Mat::from_row_slice(3, 1, &[1.0, 0.0, 1.0]),
        );
        let r = 2;
        let q12 = q.view((0, r), (r, 1)).into_owned();
        let q22 = q.view((r, r), (1, 1)).into_owned();
        let k = q12 * linalg::inv(&q22).unwrap();
        let mut v = Mat::zeros(3, r);
        v.view_mut((0, 0), (r, r)).copy_from(&Mat::identity(r, r));
        v.view_mut((r, 0), (1, r)).copy_from(&(-k.transpose()));
        let mut w = Mat::zeros(3, r);
        w.view_mut((0, 0), (r, r)).copy_from(&Mat::identity(r, r));
        let pg = ph::petrov_galerkin(&sys, &v, &w, 1e-10).unwrap();
        let ec = effort_constraint_reduce(&sys, r).unwrap();
        assert!((pg.q - ec.q).norm() < 1e-13 && (pg.j - ec.j).norm() < 1e-13);
    }
}
