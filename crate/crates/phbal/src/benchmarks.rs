//! Generators for the mass-spring-damper chain and the damped wave equation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::{self, Mat};
use crate::ph::{CoEnergyPh, PhSystem};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MsdParams {
    pub ell: usize,
    pub m: f64,
    pub k: f64,
    pub c: f64,
}

impl Default for MsdParams {
    fn default() -> Self {
        MsdParams { ell: 500, m: 4.0, k: 4.0, c: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WaveParams {
    pub n: usize,
    pub a: f64,
    pub b: f64,
    pub d: f64,
    pub ell: f64,
}

impl Default for WaveParams {
    fn default() -> Self {
        WaveParams { n: 500, a: 1.0, b: 1.0, d: 50.0, ell: 1.0 }
    }
}

impl WaveParams {
    pub fn h(&self) -> f64 {
        self.ell / (self.n as f64 + 1.0)
    }

    pub fn order(&self) -> usize {
        2 * self.n + 3
    }
}

/// Chain of `ell` masses with states `(q₁, p₁, …, q_ℓ, p_ℓ)`. Neighbouring
/// masses are coupled by springs, the last mass is tied to the wall, every
/// mass has a damper, and the two inputs are forces on masses 1 and 2.
pub fn msd_generate(p: &MsdParams) -> PhSystem {
    assert!(p.ell >= 2, "need at least two masses");
    assert!(p.m > 0.0 && p.k > 0.0 && p.c > 0.0, "parameters must be positive");
    let n = 2 * p.ell;
    let mut j = Mat::zeros(n, n);
    let mut r = Mat::zeros(n, n);
    let mut q = Mat::zeros(n, n);
    for i in 0..p.ell {
        let (qi, pi) = (2 * i, 2 * i + 1);
        j[(qi, pi)] = 1.0;
        j[(pi, qi)] = -1.0;
        r[(pi, pi)] = p.c;
        q[(pi, pi)] = 1.0 / p.m;
        q[(qi, qi)] = if i == 0 { p.k } else { 2.0 * p.k };
        if i + 1 < p.ell {
            q[(qi, qi + 2)] = -p.k;
            q[(qi + 2, qi)] = -p.k;
        }
    }
    let mut b = Mat::zeros(n, 2);
    b[(1, 0)] = 1.0;
    b[(3, 1)] = 1.0;
    PhSystem { j, r, q, b }
}

fn m2(p: &WaveParams) -> Mat {
    let n2 = p.n + 2;
    let h = p.h();
    let mut m = Mat::zeros(n2, n2);
    for i in 0..n2 {
        m[(i, i)] = if i == 0 || i == n2 - 1 { 2.0 } else { 4.0 } * h / 6.0;
        if i + 1 < n2 {
            m[(i, i + 1)] = h / 6.0;
            m[(i + 1, i)] = h / 6.0;
        }
    }
    m
}

fn difference_matrix(n: usize) -> Mat {
    let mut d = Mat::zeros(n + 1, n + 2);
    for i in 0..=n {
        d[(i, i)] = -1.0;
        d[(i, i + 1)] = 1.0;
    }
    d
}

/// Co-energy form of the mixed finite element discretization and the
/// energy form obtained from `E = LLᵀ`, `x = Lᵀz` (so `Q = I`).
pub fn wave_generate(p: &WaveParams) -> (CoEnergyPh, PhSystem) {
    assert!(p.n >= 2, "need at least two inner grid points");
    let n1 = p.n + 1;
    let n2 = p.n + 2;
    let nt = n1 + n2;
    let h = p.h();
    let m2 = m2(p);
    let d = difference_matrix(p.n);
    let mut b2 = Mat::zeros(n2, 2);
    b2[(0, 0)] = 1.0;
    b2[(n2 - 1, 1)] = -1.0;

    let e = linalg::block_diag(&(Mat::identity(n1, n1) * (p.a * h)), &(&m2 * p.b));
    let mut jt = Mat::zeros(nt, nt);
    jt.view_mut((0, n1), (n1, n2)).copy_from(&(-&d));
    jt.view_mut((n1, 0), (n2, n1)).copy_from(&d.transpose());
    let rt = linalg::block_diag(&Mat::zeros(n1, n1), &(&m2 * p.d));
    let mut bt = Mat::zeros(nt, 2);
    bt.view_mut((n1, 0), (n2, 2)).copy_from(&b2);
    let raw = CoEnergyPh { e, j: jt, r: rt, b: bt };

    // L = blkdiag(√(ah)·I, chol(bM₂)); the coupling block is L₁⁻¹ D L₂⁻ᵀ
    let l2 = (&m2 * p.b).cholesky().expect("mass matrix is SPD").l();
    let s1 = (p.a * h).sqrt();
    let kt = l2.solve_lower_triangular(&(d.transpose() / s1)).expect("triangular solve");
    let mut j = Mat::zeros(nt, nt);
    j.view_mut((0, n1), (n1, n2)).copy_from(&(-kt.transpose()));
    j.view_mut((n1, 0), (n2, n1)).copy_from(&kt);
    let lb = l2.solve_lower_triangular(&b2).expect("triangular solve");
    let mut b = Mat::zeros(nt, 2);
    b.view_mut((n1, 0), (n2, 2)).copy_from(&lb);
    let rblock = {
        let x = l2.solve_lower_triangular(&(&m2 * p.d)).expect("triangular solve");
        l2.solve_lower_triangular(&x.transpose()).expect("triangular solve")
    };
    let target = Mat::identity(n2, n2) * (p.d / p.b);
    let dev = (&rblock - &target).amax();
    assert!(dev <= 1e-12 * (p.d / p.b).max(1.0), "transformed damping block deviates by {dev:e}");
    let r = linalg::block_diag(&Mat::zeros(n1, n1), &target);
    (raw, PhSystem { j, r, q: Mat::identity(nt, nt), b })
}

/// Random asymptotically stable pH system: `J` skew, `R = MMᵀ + δI`,
/// `Q = NNᵀ + δI`, Gaussian-ish `B`. Deterministic in `seed`.
pub fn random_ph(n: usize, m: usize, seed: u64) -> PhSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = |r: usize, c: usize| Mat::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0));
    let j = linalg::skew_part(&(g(n, n) * 2.0));
    let mr = g(n, n);
    let nq = g(n, n);
    let b = g(n, m);
    let eye = Mat::identity(n, n);
    let r = linalg::symmetrize(&(&mr * mr.transpose() * 0.5 + &eye * 0.1));
    let q = linalg::symmetrize(&(&nq * nq.transpose() * 0.5 + &eye * 0.2));
    PhSystem { j, r, q, b }
}
