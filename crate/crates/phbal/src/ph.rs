//! Port-Hamiltonian systems `ẋ = (J − R) Q x + B u`, `y = Bᵀ Q x`, their
//! state-space form, representation changes, projections and simulation.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, C64};

/// Default relative tolerance for structural checks.
pub const STRUCT_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct StateSpace {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub d: Mat,
}

impl StateSpace {
    pub fn new(a: Mat, b: Mat, c: Mat, d: Mat) -> StateSpace {
        assert_eq!(a.nrows(), a.ncols(), "A must be square");
        assert_eq!(b.nrows(), a.nrows(), "B rows");
        assert_eq!(c.ncols(), a.nrows(), "C columns");
        assert_eq!(d.shape(), (c.nrows(), b.ncols()), "D shape");
        StateSpace { a, b, c, d }
    }

    pub fn strictly_proper(a: Mat, b: Mat, c: Mat) -> StateSpace {
        let d = Mat::zeros(c.nrows(), b.ncols());
        StateSpace::new(a, b, c, d)
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    /// Realization of `self − other` (parallel connection, state dim n₁+n₂).
    pub fn difference(&self, other: &StateSpace) -> StateSpace {
        StateSpace::new(
            linalg::block_diag(&self.a, &other.a),
            linalg::vstack(&self.b, &other.b),
            linalg::hstack(&self.c, &(-&other.c)),
            &self.d - &other.d,
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhSystem {
    pub j: Mat,
    pub r: Mat,
    pub q: Mat,
    pub b: Mat,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoEnergyPh {
    pub e: Mat,
    pub j: Mat,
    pub r: Mat,
    pub b: Mat,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    JNotSkew(f64),
    RNotSymmetric(f64),
    RNotPsd(f64),
    QNotSymmetric(f64),
    QNotPositiveDefinite(f64),
    Dimensions(String),
}

impl PhSystem {
    pub fn new(j: Mat, r: Mat, q: Mat, b: Mat) -> PhSystem {
        PhSystem { j, r, q, b }
    }

    /// Checks dimensions and structure, then removes the sub-tolerance
    /// asymmetry of J, R and Q.
    pub fn checked(j: Mat, r: Mat, q: Mat, b: Mat) -> Result<PhSystem> {
        let sys = PhSystem { j, r, q, b };
        let v = validate(&sys, STRUCT_TOL);
        if !v.is_empty() {
            return Err(Error::InvalidSystem(format!("{:?}", v)));
        }
        Ok(sys.cleaned())
    }

    pub fn cleaned(self) -> PhSystem {
        PhSystem {
            j: linalg::skew_part(&self.j),
            r: linalg::symmetrize(&self.r),
            q: linalg::symmetrize(&self.q),
            b: self.b,
        }
    }

    pub fn order(&self) -> usize {
        self.j.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn a(&self) -> Mat {
        (&self.j - &self.r) * &self.q
    }

    pub fn c(&self) -> Mat {
        self.b.transpose() * &self.q
    }

    pub fn hamiltonian(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.q * x))
    }
}

pub fn validate(sys: &PhSystem, tol: f64) -> Vec<Violation> {
    let n = sys.j.nrows();
    let mut out = vec![];
    for (name, m) in [("J", &sys.j), ("R", &sys.r), ("Q", &sys.q)] {
        if m.shape() != (n, n) {
            out.push(Violation::Dimensions(format!("{} is {:?}, expected {n}×{n}", name, m.shape())));
        }
    }
    if sys.b.nrows() != n {
        out.push(Violation::Dimensions(format!("B has {} rows, expected {n}", sys.b.nrows())));
    }
    if !out.is_empty() {
        return out;
    }
    let rel = |d: f64, m: &Mat| d / linalg::norm2(m).max(f64::MIN_POSITIVE);
    let js = linalg::norm2(&(&sys.j + sys.j.transpose()));
    if js > tol * linalg::norm2(&sys.j) {
        out.push(Violation::JNotSkew(rel(js, &sys.j)));
    }
    let ra = linalg::norm2(&(&sys.r - sys.r.transpose()));
    if ra > tol * linalg::norm2(&sys.r) {
        out.push(Violation::RNotSymmetric(rel(ra, &sys.r)));
    }
    if let Ok(w) = linalg::sym_eigvals(&sys.r) {
        if n > 0 {
            let nr = w[0].abs().max(w[n - 1].abs());
            if w[0] < -tol * nr {
                out.push(Violation::RNotPsd(w[0]));
            }
        }
    }
    let qa = linalg::norm2(&(&sys.q - sys.q.transpose()));
    if qa > tol * linalg::norm2(&sys.q) {
        out.push(Violation::QNotSymmetric(rel(qa, &sys.q)));
    }
    if let Ok(w) = linalg::sym_eigvals(&sys.q) {
        if n > 0 && w[0] <= 0.0 {
            out.push(Violation::QNotPositiveDefinite(w[0]));
        }
    }
    out
}

pub fn to_state_space(sys: &PhSystem) -> StateSpace {
    StateSpace::strictly_proper(sys.a(), sys.b.clone(), sys.c())
}

/// `W(X) = [[−AᵀX − XA, Cᵀ − XB], [C − BᵀX, 0]]`.
pub fn kyp_residual(ss: &StateSpace, x: &Mat) -> Mat {
    let n = ss.order();
    let m = ss.b.ncols();
    let mut w = Mat::zeros(n + m, n + m);
    w.view_mut((0, 0), (n, n)).copy_from(&linalg::symmetrize(&(-(ss.a.transpose() * x) - x * &ss.a)));
    let off = ss.c.transpose() - x * &ss.b;
    w.view_mut((0, n), (n, m)).copy_from(&off);
    w.view_mut((n, 0), (m, n)).copy_from(&off.transpose());
    w
}

/// Rewrites the system with Hamiltonian `½ xᵀ X x` for a KYP solution X.
pub fn change_representation(sys: &PhSystem, x: &Mat, tol: f64) -> Result<PhSystem> {
    let ss = to_state_space(sys);
    let w = kyp_residual(&ss, x);
    let scale = linalg::sym_norm2(&w).max(linalg::sym_norm2(x) * linalg::norm2(&ss.a));
    let lmin = crate::mateq::lambda_min(&w)?;
    if lmin < -tol * scale {
        return Err(Error::NotAKypSolution(lmin));
    }
    let xi = linalg::spd_inv(x)?;
    let axi = &ss.a * &xi;
    let j = linalg::skew_part(&axi);
    let r = linalg::symmetrize(&(-axi));
    Ok(PhSystem { j, r, q: linalg::symmetrize(x), b: sys.b.clone() })
}

/// `x̃ = T x`: J̃ = TJTᵀ, R̃ = TRTᵀ, Q̃ = T⁻ᵀQT⁻¹, B̃ = TB.
pub fn state_transform(sys: &PhSystem, t: &Mat) -> Result<PhSystem> {
    let lu = linalg::Lu::new(t).map_err(|_| Error::SingularTransform)?;
    if lu.pivot_ratio() < 1e-15 {
        return Err(Error::SingularTransform);
    }
    let n = t.nrows();
    let ti = lu.solve(&Mat::identity(n, n))?;
    Ok(PhSystem {
        j: linalg::skew_part(&(t * &sys.j * t.transpose())),
        r: linalg::symmetrize(&(t * &sys.r * t.transpose())),
        q: linalg::symmetrize(&(ti.transpose() * &sys.q * &ti)),
        b: t * &sys.b,
    })
}

/// Petrov–Galerkin reduction with `WᵀV = I`, `J_p = WᵀJW`, `R_p = WᵀRW`,
/// `B_p = WᵀB`, `Q_p = VᵀQV`.
pub fn petrov_galerkin(sys: &PhSystem, v: &Mat, w: &Mat, tol: f64) -> Result<PhSystem> {
    let r = v.ncols();
    let bi = (w.transpose() * v - Mat::identity(r, r)).norm();
    if bi > tol.max(1e-12) * (r as f64).sqrt() * 1e2 {
        return Err(Error::BiorthogonalityViolated(bi));
    }
    let qp = linalg::symmetrize(&(v.transpose() * &sys.q * v));
    let comp = (&sys.q * v - w * &qp).norm();
    let scale = (&sys.q * v).norm().max(f64::MIN_POSITIVE);
    if comp > 1e2 * tol.max(1e-12) * scale {
        return Err(Error::CompatibilityViolated(comp / scale));
    }
    Ok(PhSystem {
        j: linalg::skew_part(&(w.transpose() * &sys.j * w)),
        r: linalg::symmetrize(&(w.transpose() * &sys.r * w)),
        q: qp,
        b: w.transpose() * &sys.b,
    })
}

pub fn to_coenergy(sys: &PhSystem) -> Result<CoEnergyPh> {
    Ok(CoEnergyPh { e: linalg::spd_inv(&sys.q)?, j: sys.j.clone(), r: sys.r.clone(), b: sys.b.clone() })
}

pub fn from_coenergy(ce: &CoEnergyPh) -> Result<PhSystem> {
    Ok(PhSystem { j: ce.j.clone(), r: ce.r.clone(), q: linalg::spd_inv(&ce.e)?, b: ce.b.clone() })
}

/// Transfer function of the co-energy form `E ż = (J − R) z + B u`, `y = Bᵀ z`.
pub fn coenergy_transfer(ce: &CoEnergyPh, s: C64) -> Result<DMatrix<C64>> {
    let n = ce.e.nrows();
    let mut m = DMatrix::<C64>::zeros(n, n);
    for i in 0..n {
        for k in 0..n {
            m[(i, k)] = s * ce.e[(i, k)] - C64::new(ce.j[(i, k)] - ce.r[(i, k)], 0.0);
        }
    }
    let b = ce.b.map(|x| C64::new(x, 0.0));
    let z = m.lu().solve(&b).ok_or(Error::ResolventSingular)?;
    Ok(b.transpose() * z)
}

/// Reduces to a numerically minimal pH realization by truncating the
/// balancing of `(Q⁻¹, M_o)` at values ≤ `eps_trunc · π₁`.
pub fn minimal_realization(sys: &PhSystem, eps_trunc: f64) -> Result<(PhSystem, usize)> {
    let g = crate::balancing::modified_bt_gramians(sys)?;
    let bal = crate::balancing::square_root_balance_trunc(&g.lc, &g.mo, eps_trunc)?;
    let k = bal.sigma.len();
    let red = crate::balancing::project_balanced(sys, &bal, k)?;
    Ok((red, k))
}

pub fn transfer_eval(ss: &StateSpace, s: C64) -> Result<DMatrix<C64>> {
    let n = ss.order();
    let mut m = DMatrix::<C64>::zeros(n, n);
    for i in 0..n {
        for k in 0..n {
            let v = -ss.a[(i, k)];
            m[(i, k)] = if i == k { s + v } else { C64::new(v, 0.0) };
        }
    }
    let b = ss.b.map(|x| C64::new(x, 0.0));
    let lu = m.lu();
    let z = lu.solve(&b).ok_or(Error::ResolventSingular)?;
    if z.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::ResolventSingular);
    }
    Ok(ss.c.map(|x| C64::new(x, 0.0)) * z + ss.d.map(|x| C64::new(x, 0.0)))
}

/// Popov function `Φ(s) = G(−s)ᵀ + G(s)`.
pub fn popov_eval(ss: &StateSpace, s: C64) -> Result<DMatrix<C64>> {
    let g = transfer_eval(ss, s)?;
    let gm = transfer_eval(ss, -s)?;
    Ok(gm.transpose() + g)
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
    pub energy: Vec<f64>,
    /// Trapezoidal approximation of ∫ yᵀu over each step.
    pub supplied: Vec<f64>,
}

/// Implicit midpoint integration; exact for the quadratic Hamiltonian when
/// R = 0 and u = 0.
pub fn simulate(
    sys: &PhSystem,
    x0: &DVector<f64>,
    u: &dyn Fn(f64) -> DVector<f64>,
    h: f64,
    t_end: f64,
) -> Result<Trajectory> {
    assert!(h > 0.0, "step must be positive");
    let n = sys.order();
    let a = sys.a();
    let c = sys.c();
    let lhs = Mat::identity(n, n) - &a * (0.5 * h);
    let rhs = Mat::identity(n, n) + &a * (0.5 * h);
    let lu = linalg::Lu::new(&lhs)?;
    let steps = (t_end / h).round() as usize;
    let mut tr = Trajectory { t: vec![0.0], x: vec![x0.clone()], y: vec![], energy: vec![sys.hamiltonian(x0)], supplied: vec![] };
    let mut x = x0.clone();
    tr.y.push(&c * &x);
    for k in 0..steps {
        let t0 = k as f64 * h;
        let um = u(t0 + 0.5 * h);
        let f = &rhs * &x + &sys.b * &um * h;
        let xn = lu.solve(&Mat::from_column_slice(n, 1, f.as_slice()))?;
        let xn = DVector::from_column_slice(xn.as_slice());
        // power through the port with the midpoint input, consistent with the scheme
        let ym = &c * (&x + &xn) * 0.5;
        tr.supplied.push(h * ym.dot(&um));
        x = xn;
        tr.t.push(t0 + h);
        tr.energy.push(sys.hamiltonian(&x));
        tr.y.push(&c * &x);
        tr.x.push(x.clone());
    }
    Ok(tr)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar() -> PhSystem {
        let o = Mat::from_element(1, 1, 1.0);
        PhSystem::new(Mat::zeros(1, 1), o.clone(), o.clone(), o)
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
    fn validate_examples() {
        assert!(validate(&scalar(), STRUCT_TOL).is_empty());
        let bad = PhSystem::new(
            Mat::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
            -Mat::identity(2, 2),
            Mat::identity(2, 2),
            Mat::identity(2, 1),
        );
        assert!(validate(&bad, STRUCT_TOL).iter().any(|v| matches!(v, Violation::RNotPsd(_))));
        assert!(validate(&ex_a1(), STRUCT_TOL).is_empty());
    }

    #[test]
    fn state_space_forms() {
        let ss = to_state_space(&scalar());
        assert_eq!(ss.a[(0, 0)], -1.0);
        assert_eq!(ss.c[(0, 0)], 1.0);
        let ss = to_state_space(&ex_a1());
        assert_eq!(ss.a, Mat::from_row_slice(2, 2, &[-2.0, -1.0, -1.0, -1.0]));
    }

    #[test]
    fn kyp_residual_at_q() {
        let sys = ex_a1();
        let w = kyp_residual(&to_state_space(&sys), &sys.q);
        let expect = linalg::block_diag(&(&sys.q * &sys.r * &sys.q * 2.0), &Mat::zeros(2, 2));
        assert!((w - expect).norm() < 1e-13);
    }

    #[test]
    fn representation_at_q_is_identity() {
        let sys = ex_a1();
        let s2 = change_representation(&sys, &sys.q, 1e-10).unwrap();
        assert!((s2.j - &sys.j).norm() < 1e-13 && (s2.r - &sys.r).norm() < 1e-13);
    }

    #[test]
    fn transform_by_two() {
        let sys = scalar();
        let t = Mat::from_element(1, 1, 2.0);
        let s2 = state_transform(&sys, &t).unwrap();
        assert_eq!(s2.r[(0, 0)], 4.0);
        assert_eq!(s2.q[(0, 0)], 0.25);
        assert_eq!(s2.b[(0, 0)], 2.0);
        assert_eq!(s2.a(), sys.a());
    }

    #[test]
    fn coenergy_roundtrip() {
        let ce = to_coenergy(&ex_a1()).unwrap();
        let back = from_coenergy(&ce).unwrap();
        assert!((back.q - ex_a1().q).norm() < 1e-12);
        let g1 = transfer_eval(&to_state_space(&ex_a1()), C64::new(0.3, 1.2)).unwrap();
        let g2 = coenergy_transfer(&ce, C64::new(0.3, 1.2)).unwrap();
        assert!((g1 - g2).norm() < 1e-12);
    }

    #[test]
    fn popov_scalar() {
        let ss = to_state_space(&scalar());
        for w in [0.0, 0.5, 3.0] {
            let p = popov_eval(&ss, C64::new(0.0, w)).unwrap();
            assert!((p[(0, 0)].re - 2.0 / (1.0 + w * w)).abs() < 1e-14);
        }
    }

    #[test]
    fn midpoint_conserves_lossless_energy() {
        let sys = PhSystem::new(
            Mat::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
            Mat::zeros(2, 2),
            Mat::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
            Mat::from_row_slice(2, 1, &[0.0, 1.0]),
        );
        let x0 = DVector::from_vec(vec![1.0, -0.5]);
        let tr = simulate(&sys, &x0, &|_| DVector::zeros(1), 0.01, 5.0).unwrap();
        for w in tr.energy.windows(2) {
            assert!((w[1] - w[0]).abs() < 1e-10);
        }
    }
}
