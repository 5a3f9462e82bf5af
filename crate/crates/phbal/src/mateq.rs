//! Dense matrix-equation kernels: Lyapunov and Riccati solvers, the H∞ norm,
//! and semidefinite factorizations.

use log::debug;
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{self, Half, Mat, C64};
use crate::ph::StateSpace;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverTolerances {
    pub riccati_residual_rel: f64,
    pub psd_floor_rel: f64,
    pub hinf_rel: f64,
    pub rank_rel: f64,
}

impl Default for SolverTolerances {
    fn default() -> Self {
        SolverTolerances {
            riccati_residual_rel: 1e-10,
            psd_floor_rel: 1e-8,
            hinf_rel: 1e-6,
            rank_rel: 1e-11,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CareMode {
    Stabilizing,
    Antistabilizing,
}

impl CareMode {
    fn half(self) -> Half {
        match self {
            CareMode::Stabilizing => Half::Left,
            CareMode::Antistabilizing => Half::Right,
        }
    }
}

/// Reusable Bartels–Stewart solver for `A X + X Aᵀ + W = 0` and
/// `Aᵀ X + X A + W = 0` sharing one Schur decomposition of A.
pub struct Lyapunov {
    t: Mat,
    z: Mat,
    norm_a: f64,
}

impl Lyapunov {
    pub fn new(a: &Mat) -> Result<Lyapunov> {
        let s = linalg::schur(a, None)?;
        Ok(Lyapunov { t: s.t, z: s.z, norm_a: a.norm() })
    }

    fn solve_once(&self, w: &Mat, transposed: bool) -> Result<Mat> {
        let wt = self.z.transpose() * w * &self.z;
        // transposed: Tᵀ Y + Y T = −W̃, otherwise T Y + Y Tᵀ = −W̃
        let (y, scale) = linalg::trsyl(transposed, !transposed, 1, &self.t, &self.t, &(-wt))?;
        if scale == 0.0 {
            return Err(Error::SingularSylvester);
        }
        Ok(linalg::symmetrize(&(&self.z * (y / scale) * self.z.transpose())))
    }

    fn residual(&self, a: &Mat, x: &Mat, w: &Mat, transposed: bool) -> Mat {
        if transposed {
            a.transpose() * x + x * a + w
        } else {
            a * x + x * a.transpose() + w
        }
    }

    /// Solves with one step of iterative refinement when the first residual is
    /// above `tol`.
    pub fn solve(&self, a: &Mat, w: &Mat, transposed: bool, tol: f64) -> Result<Mat> {
        let mut x = self.solve_once(w, transposed)?;
        let scale = |x: &Mat| 2.0 * self.norm_a * x.norm() + w.norm();
        let mut res = self.residual(a, &x, w, transposed);
        if res.norm() > tol * scale(&x) {
            let dx = self.solve_once(&res, transposed)?;
            let x2 = &x + dx;
            let res2 = self.residual(a, &x2, w, transposed);
            if res2.norm() < res.norm() {
                x = x2;
                res = res2;
            }
        }
        let s = scale(&x);
        if !(res.norm() <= 1e3 * tol * s) {
            return Err(Error::NotConverged(format!(
                "Lyapunov residual {:.3e} relative",
                res.norm() / s
            )));
        }
        Ok(x)
    }
}

/// Solves `A X + X Aᵀ + W = 0`.
pub fn solve_lyapunov(a: &Mat, w: &Mat) -> Result<Mat> {
    let tol = SolverTolerances::default().riccati_residual_rel;
    Lyapunov::new(a)?.solve(a, w, false, tol)
}

/// Solves `Aᵀ X + X A + W = 0`.
pub fn solve_lyapunov_t(a: &Mat, w: &Mat) -> Result<Mat> {
    let tol = SolverTolerances::default().riccati_residual_rel;
    Lyapunov::new(a)?.solve(a, w, true, tol)
}

fn care_residual(a: &Mat, g: &Mat, q: &Mat, p: &Mat) -> Mat {
    a.transpose() * p + p * a - p * g * p + q
}

fn care_scale(a: &Mat, g: &Mat, q: &Mat, p: &Mat) -> f64 {
    let np = p.norm();
    2.0 * a.norm() * np + g.norm() * np * np + q.norm()
}

/// Solves `Aᵀ P + P A − P B Bᵀ P + Qw = 0` for the stabilizing (or
/// anti-stabilizing) solution.
pub fn solve_care(a: &Mat, b: &Mat, qw: &Mat, mode: CareMode) -> Result<Mat> {
    solve_care_tol(a, b, qw, mode, &SolverTolerances::default())
}

pub fn solve_care_tol(a: &Mat, b: &Mat, qw: &Mat, mode: CareMode, tol: &SolverTolerances) -> Result<Mat> {
    let n = a.nrows();
    let g = b * b.transpose();
    let mut h = Mat::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-&g));
    h.view_mut((n, 0), (n, n)).copy_from(&(-qw));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));
    let s = linalg::schur(&h, Some(mode.half()))?;
    let hn = h.norm();
    if s.eig.iter().any(|e| e.re.abs() <= 1e-13 * hn) || s.sdim != n {
        return Err(Error::NoStabilizingSolution);
    }
    let u1 = s.z.view((0, 0), (n, n)).into_owned();
    let u2 = s.z.view((n, 0), (n, n)).into_owned();
    let p = subspace_solution(&u1, &u2)?;
    let p = newton_polish(a, &g, qw, p, mode);
    let res = care_residual(a, &g, qw, &p).norm();
    let sc = care_scale(a, &g, qw, &p);
    debug!("CARE n={} relative residual {:.2e}", n, res / sc);
    if res > tol.riccati_residual_rel * sc * 1e3 {
        return Err(Error::NotConverged(format!("CARE residual {:.3e} relative", res / sc)));
    }
    Ok(p)
}

// X = U₂ U₁⁻¹ from a basis [U₁; U₂] of an n-dimensional invariant subspace.
fn subspace_solution(u1: &Mat, u2: &Mat) -> Result<Mat> {
    let sv = linalg::singular_values(u1)?;
    let n = u1.nrows();
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let rc = sv[n - 1] / sv[0];
    if !(rc > 1e-8) {
        return Err(Error::IllConditioned(rc));
    }
    let lu = linalg::Lu::new(&u1.transpose())?;
    let xt = lu.solve(&u2.transpose())?;
    Ok(linalg::symmetrize(&xt.transpose()))
}

fn newton_polish(a: &Mat, g: &Mat, q: &Mat, p: Mat, mode: CareMode) -> Mat {
    let r0 = care_residual(a, g, q, &p).norm();
    let ak = a - g * &p;
    let w = q + &p * g * &p;
    let step = Lyapunov::new(&ak).and_then(|l| l.solve(&ak, &w, true, 1e-12));
    match step {
        Ok(p1) => {
            let r1 = care_residual(a, g, q, &p1).norm();
            let ok_mode = match spectral_abscissa(&(a - g * &p1)) {
                Ok(x) => match mode {
                    CareMode::Stabilizing => x < 0.0,
                    CareMode::Antistabilizing => true,
                },
                Err(_) => false,
            };
            if r1 < r0 && ok_mode {
                p1
            } else {
                p
            }
        }
        Err(_) => p,
    }
}

/// Solves the Riccati equation with cross term and indefinite weight
/// `Aᵀ X + X A − (X B + S) R⁻¹ (Bᵀ X + Sᵀ) + Q = 0` through the extended
/// pencil, never forming `R⁻¹`. The selected solution makes
/// `A − B R⁻¹(BᵀX + Sᵀ)` stable (or anti-stable).
pub fn solve_care_pencil(a: &Mat, b: &Mat, q: &Mat, r: &Mat, s: &Mat, mode: CareMode) -> Result<Mat> {
    let n = a.nrows();
    let m = b.ncols();
    let big = 2 * n + m;
    let mut mm = Mat::zeros(big, 2 * n);
    mm.view_mut((0, 0), (n, n)).copy_from(a);
    mm.view_mut((n, 0), (n, n)).copy_from(&(-q));
    mm.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));
    mm.view_mut((2 * n, 0), (m, n)).copy_from(&s.transpose());
    mm.view_mut((2 * n, n), (m, n)).copy_from(&b.transpose());
    let mut nn = Mat::zeros(big, 2 * n);
    for i in 0..2 * n {
        nn[(i, i)] = 1.0;
    }
    // last block column [B; −S; R], annihilated by an orthogonal left transform
    let mut w = Mat::zeros(big, m);
    w.view_mut((0, 0), (n, m)).copy_from(b);
    w.view_mut((n, 0), (n, m)).copy_from(&(-s));
    w.view_mut((2 * n, 0), (m, m)).copy_from(r);
    householder_compress(&mut w, &mut [&mut mm, &mut nn]);
    let mc = mm.rows(m, 2 * n).into_owned();
    let nc = nn.rows(m, 2 * n).into_owned();
    let qz = linalg::qz(&mc, &nc, mode.half())?;
    if qz.sdim != n {
        debug!("pencil selected {} of {} eigenvalues", qz.sdim, n);
        return Err(Error::NoStabilizingSolution);
    }
    let u1 = qz.z.view((0, 0), (n, n)).into_owned();
    let u2 = qz.z.view((n, 0), (n, n)).into_owned();
    subspace_solution(&u1, &u2)
}

// Applies the Householder reflectors that triangularize `w` to every matrix in
// `targets` from the left.
fn householder_compress(w: &mut Mat, targets: &mut [&mut Mat]) {
    let (rows, cols) = w.shape();
    for k in 0..cols {
        let x = w.view((k, k), (rows - k, 1)).into_owned();
        let alpha = x.norm();
        if alpha == 0.0 {
            continue;
        }
        let sign = if x[0] >= 0.0 { 1.0 } else { -1.0 };
        let mut v = x.clone();
        v[0] += sign * alpha;
        let vn = v.norm();
        if vn == 0.0 {
            continue;
        }
        v /= vn;
        let apply = |t: &mut Mat| {
            let ncols = t.ncols();
            let mut block = t.view_mut((k, 0), (rows - k, ncols));
            let proj = v.transpose() * &block;
            block -= &v * proj * 2.0;
        };
        apply(w);
        for t in targets.iter_mut() {
            apply(t);
        }
    }
}

pub fn is_psd(s: &Mat, tol: f64) -> bool {
    match linalg::sym_eigvals(s) {
        Ok(w) => {
            if w.is_empty() {
                return true;
            }
            let nrm = w.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            w[0] >= -tol * nrm.max(1.0)
        }
        Err(_) => false,
    }
}

pub fn lambda_min(s: &Mat) -> Result<f64> {
    let w = linalg::sym_eigvals(s)?;
    Ok(if w.is_empty() { 0.0 } else { w[0] })
}

pub fn spectral_abscissa(a: &Mat) -> Result<f64> {
    Ok(linalg::eigvals(a)?.iter().fold(f64::NEG_INFINITY, |m, e| m.max(e.re)))
}

/// Low-rank factor with `factorᵀ factor = S`.
#[derive(Clone, Debug)]
pub struct PsdFactor {
    pub factor: Mat,
    pub rank: usize,
    pub tolerance: f64,
}

pub fn psd_factor(s: &Mat, tol: &SolverTolerances) -> Result<PsdFactor> {
    let n = s.nrows();
    if n == 0 {
        return Ok(PsdFactor { factor: Mat::zeros(0, 0), rank: 0, tolerance: tol.rank_rel });
    }
    let (w, v) = linalg::sym_eig(s)?;
    let lmax = w[n - 1].max(0.0);
    let nrm = w[0].abs().max(w[n - 1].abs());
    if w[0] < -tol.psd_floor_rel * nrm {
        return Err(Error::NotPsd(w[0]));
    }
    // descending, ties kept in eigensolver order
    let mut keep: Vec<usize> = (0..n).filter(|&i| w[i] > tol.rank_rel * lmax && w[i] > 0.0).collect();
    keep.sort_by(|&i, &j| w[j].partial_cmp(&w[i]).unwrap());
    let mut f = Mat::zeros(keep.len(), n);
    for (row, &i) in keep.iter().enumerate() {
        let col = v.column(i);
        let pivot = col.iter().copied().find(|x| x.abs() > 1e-14).unwrap_or(1.0);
        let sgn = if pivot < 0.0 { -1.0 } else { 1.0 };
        let sq = w[i].sqrt();
        for j in 0..n {
            f[(row, j)] = sgn * sq * col[j];
        }
    }
    Ok(PsdFactor { rank: keep.len(), factor: f, tolerance: tol.rank_rel })
}

/// Frequency response evaluator based on a Hessenberg reduction of A, so each
/// evaluation of `C (sI − A)⁻¹ B + D` costs O(n²).
/// Systems with fewer outputs than inputs are evaluated through the
/// transposed realization so the triangular solves involve few columns.
pub struct FreqResponse {
    h: Mat,
    ub: Mat,
    cu: Mat,
    d: Mat,
    transposed: bool,
}

impl FreqResponse {
    pub fn new(sys: &StateSpace) -> Result<FreqResponse> {
        let transposed = sys.c.nrows() < sys.b.ncols();
        let (a, b, c, d) = if transposed {
            (sys.a.transpose(), sys.c.transpose(), sys.b.transpose(), sys.d.transpose())
        } else {
            (sys.a.clone(), sys.b.clone(), sys.c.clone(), sys.d.clone())
        };
        let (h, u) = linalg::hessenberg(&a, true)?;
        let u = u.unwrap();
        Ok(FreqResponse { ub: u.transpose() * &b, cu: &c * &u, h, d, transposed })
    }

    pub fn hessenberg(&self) -> &Mat {
        &self.h
    }

    pub fn eval(&self, s: C64) -> Result<DMatrix<C64>> {
        let n = self.h.nrows();
        let m = self.ub.ncols();
        // column-major copy of sI − H with a right-hand side block appended
        let mut a: Vec<C64> = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                let hij = self.h[(i, j)];
                a.push(if i == j { s - hij } else { C64::new(-hij, 0.0) });
            }
        }
        let mut x: Vec<C64> = self.ub.iter().map(|&v| C64::new(v, 0.0)).collect();
        let idx = |i: usize, j: usize| j * n + i;
        // Gaussian elimination with adjacent-row pivoting
        for k in 0..n.saturating_sub(1) {
            if a[idx(k + 1, k)].norm() > a[idx(k, k)].norm() {
                for j in k..n {
                    a.swap(idx(k, j), idx(k + 1, j));
                }
                for c in 0..m {
                    x.swap(c * n + k, c * n + k + 1);
                }
            }
            let piv = a[idx(k, k)];
            if piv.norm() == 0.0 {
                return Err(Error::ResolventSingular);
            }
            let l = a[idx(k + 1, k)] / piv;
            if l.norm() != 0.0 {
                for j in (k + 1)..n {
                    let t = a[idx(k, j)];
                    a[idx(k + 1, j)] -= l * t;
                }
                for c in 0..m {
                    let t = x[c * n + k];
                    x[c * n + k + 1] -= l * t;
                }
            }
        }
        for c in 0..m {
            for k in (0..n).rev() {
                let mut acc = x[c * n + k];
                for j in (k + 1)..n {
                    acc -= a[idx(k, j)] * x[c * n + j];
                }
                let piv = a[idx(k, k)];
                if piv.norm() == 0.0 {
                    return Err(Error::ResolventSingular);
                }
                x[c * n + k] = acc / piv;
            }
        }
        let p = self.cu.nrows();
        let mut g = DMatrix::<C64>::zeros(p, m);
        for c in 0..m {
            for i in 0..p {
                let mut acc = C64::new(self.d[(i, c)], 0.0);
                for k in 0..n {
                    acc += self.cu[(i, k)] * x[c * n + k];
                }
                g[(i, c)] = acc;
            }
        }
        Ok(if self.transposed { g.transpose() } else { g })
    }

    /// Largest singular value of the response at `s = iω`.
    pub fn sigma_max(&self, omega: f64) -> Result<f64> {
        let g = self.eval(C64::new(0.0, omega))?;
        Ok(complex_norm2(&g))
    }
}

/// Spectral norm of a complex matrix via its real embedding.
pub fn complex_norm2(g: &DMatrix<C64>) -> f64 {
    let (p, m) = g.shape();
    if p == 0 || m == 0 {
        return 0.0;
    }
    let mut r = Mat::zeros(2 * p, 2 * m);
    for i in 0..p {
        for j in 0..m {
            let z = g[(i, j)];
            r[(i, j)] = z.re;
            r[(i + p, j + m)] = z.re;
            r[(i, j + m)] = -z.im;
            r[(i + p, j)] = z.im;
        }
    }
    linalg::norm2(&r)
}

/// Systems up to this state dimension get the Hamiltonian-certified H∞ norm;
/// larger ones use the refined frequency sweep.
pub const HAMILTONIAN_MAX_STATES: usize = 400;

fn candidate_frequencies(poles: &[C64]) -> Vec<f64> {
    let mut w: Vec<f64> = vec![0.0];
    let mags: Vec<f64> = poles.iter().map(|p| p.norm()).filter(|x| *x > 0.0).collect();
    let lo = mags.iter().cloned().fold(f64::INFINITY, f64::min).min(1.0);
    let hi = mags.iter().cloned().fold(0.0, f64::max).max(1.0);
    let (l0, l1) = ((lo * 1e-3).log10(), (hi * 1e2).log10());
    let npts = 400 + 4 * poles.len().min(500);
    for k in 0..npts {
        w.push(10f64.powf(l0 + (l1 - l0) * k as f64 / (npts - 1) as f64));
    }
    for p in poles {
        if p.im >= 0.0 {
            let wi = p.im.abs();
            w.push(wi);
            // lightly damped peaks sit within a few |Re λ| of Im λ
            let d = p.re.abs();
            w.push((wi - 0.5 * d).max(0.0));
            w.push(wi + 0.5 * d);
        }
    }
    w.sort_by(|a, b| a.partial_cmp(b).unwrap());
    w.dedup();
    w
}

fn golden_max(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, rel: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if (b - a).abs() <= rel * (a.abs() + b.abs()).max(1e-12) {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc > fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Peak of `‖G(iω)‖₂` over a candidate grid, with the largest local maxima
/// refined by golden-section search. Returns `(peak, ω at peak)`.
pub fn sweep_peak(sys: &StateSpace, fr: &FreqResponse, poles: &[C64]) -> Result<(f64, f64)> {
    let grid = candidate_frequencies(poles);
    let vals: Vec<f64> = grid.iter().map(|&w| fr.sigma_max(w)).collect::<Result<_>>()?;
    let dc = if sys.d.is_empty() { 0.0 } else { linalg::norm2(&sys.d) };
    let mut best = (vals[0], grid[0]);
    for (v, w) in vals.iter().zip(&grid) {
        if *v > best.0 {
            best = (*v, *w);
        }
    }
    if dc > best.0 {
        best = (dc, f64::INFINITY);
    }
    let mut peaks: Vec<usize> = (0..grid.len())
        .filter(|&i| {
            let l = if i == 0 { f64::NEG_INFINITY } else { vals[i - 1] };
            let r = if i + 1 == grid.len() { f64::NEG_INFINITY } else { vals[i + 1] };
            vals[i] >= l && vals[i] >= r
        })
        .collect();
    peaks.sort_by(|&i, &j| vals[j].partial_cmp(&vals[i]).unwrap());
    peaks.truncate(12);
    let f = |w: f64| fr.sigma_max(w).unwrap_or(0.0);
    for i in peaks {
        let a = if i == 0 { 0.0 } else { grid[i - 1] };
        let b = if i + 1 == grid.len() { grid[i] * 2.0 + 1.0 } else { grid[i + 1] };
        let (w, v) = golden_max(&f, a, b, 1e-10);
        if v > best.0 {
            best = (v, w);
        }
    }
    Ok(best)
}

/// H∞ distance from a fixed (possibly large) system to many small ones. The
/// response of the large system on the candidate grid is cached.
pub struct HinfDistance {
    full: StateSpace,
    fr: FreqResponse,
    poles: Vec<C64>,
    grid: Vec<f64>,
    vals: Vec<DMatrix<C64>>,
}

/// Local maxima refined per distance evaluation on large systems.
const LARGE_REFINED_PEAKS: usize = 6;

impl HinfDistance {
    pub fn new(full: &StateSpace) -> Result<HinfDistance> {
        let fr = FreqResponse::new(full)?;
        let poles = linalg::hessenberg_eigvals(fr.hessenberg())?;
        let abscissa = poles.iter().fold(f64::NEG_INFINITY, |m, e| m.max(e.re));
        if abscissa >= 0.0 {
            return Err(Error::UnstableSystem(abscissa));
        }
        let grid = candidate_frequencies(&poles);
        let vals = grid.iter().map(|&w| fr.eval(C64::new(0.0, w))).collect::<Result<_>>()?;
        Ok(HinfDistance { full: full.clone(), fr, poles, grid, vals })
    }

    pub fn full(&self) -> &StateSpace {
        &self.full
    }

    /// `‖G − G_r‖_H∞`; exact level-set certification when the difference
    /// realization is small, cached refined sweep otherwise.
    pub fn distance(&self, red: &StateSpace, tol: &SolverTolerances) -> Result<f64> {
        if self.full.order() + red.order() <= HAMILTONIAN_MAX_STATES {
            return hinf_norm(&self.full.difference(red), tol);
        }
        self.sweep_distance(red, tol)
    }

    fn sweep_distance(&self, red: &StateSpace, tol: &SolverTolerances) -> Result<f64> {
        let rfr = FreqResponse::new(red)?;
        let rpoles = if red.order() > 0 { linalg::hessenberg_eigvals(rfr.hessenberg())? } else { vec![] };
        if let Some(p) = rpoles.iter().find(|p| p.re >= 0.0) {
            return Err(Error::UnstableSystem(p.re));
        }
        let mut pts: Vec<(f64, f64)> = Vec::with_capacity(self.grid.len() + 3 * rpoles.len());
        for (w, g) in self.grid.iter().zip(&self.vals) {
            let gr = rfr.eval(C64::new(0.0, *w))?;
            pts.push((*w, complex_norm2(&(g - gr))));
        }
        let f = |w: f64| -> f64 {
            match (self.fr.eval(C64::new(0.0, w)), rfr.eval(C64::new(0.0, w))) {
                (Ok(g), Ok(gr)) => complex_norm2(&(g - gr)),
                _ => 0.0,
            }
        };
        for p in rpoles.iter().filter(|p| p.im >= 0.0) {
            for w in [p.im, (p.im - 0.5 * p.re.abs()).max(0.0), p.im + 0.5 * p.re.abs()] {
                pts.push((w, f(w)));
            }
        }
        pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        pts.dedup_by(|a, b| a.0 == b.0);
        let dd = &self.full.d - &red.d;
        let mut best = if dd.is_empty() { 0.0 } else { linalg::norm2(&dd) };
        for p in &pts {
            best = best.max(p.1);
        }
        let mut peaks: Vec<usize> = (0..pts.len())
            .filter(|&i| {
                let l = if i == 0 { f64::NEG_INFINITY } else { pts[i - 1].1 };
                let r = if i + 1 == pts.len() { f64::NEG_INFINITY } else { pts[i + 1].1 };
                pts[i].1 >= l && pts[i].1 >= r
            })
            .collect();
        peaks.sort_by(|&i, &j| pts[j].1.partial_cmp(&pts[i].1).unwrap());
        peaks.truncate(LARGE_REFINED_PEAKS);
        for i in peaks {
            let a = if i == 0 { 0.0 } else { pts[i - 1].0 };
            let b = if i + 1 == pts.len() { pts[i].0 * 2.0 + 1.0 } else { pts[i + 1].0 };
            let (_, v) = golden_max(&f, a, b, 1e-8);
            best = best.max(v);
        }
        debug!("sweep distance over {} points, {} full poles", pts.len(), self.poles.len());
        Ok(best * (1.0 + tol.hinf_rel))
    }
}

fn hamiltonian(sys: &StateSpace, gamma: f64) -> Result<Mat> {
    let n = sys.a.nrows();
    let (p, m) = sys.d.shape();
    let g2 = gamma * gamma;
    let r = sys.d.transpose() * &sys.d - Mat::identity(m, m) * g2;
    let s = &sys.d * sys.d.transpose() - Mat::identity(p, p) * g2;
    let rinv = linalg::inv(&r)?;
    let sinv = linalg::inv(&s)?;
    let mut h = Mat::zeros(2 * n, 2 * n);
    let a11 = &sys.a - &sys.b * &rinv * sys.d.transpose() * &sys.c;
    h.view_mut((0, 0), (n, n)).copy_from(&a11);
    h.view_mut((0, n), (n, n)).copy_from(&(&sys.b * &rinv * sys.b.transpose() * (-gamma)));
    h.view_mut((n, 0), (n, n)).copy_from(&(sys.c.transpose() * &sinv * &sys.c * gamma));
    h.view_mut((n, n), (n, n)).copy_from(&(-a11.transpose()));
    Ok(h)
}

/// H∞ norm of a stable system, relative accuracy `tol.hinf_rel`.
///
/// Small systems are certified with the Hamiltonian imaginary-eigenvalue test
/// (two-sided level-set iteration); large ones use the refined sweep.
pub fn hinf_norm(sys: &StateSpace, tol: &SolverTolerances) -> Result<f64> {
    let n = sys.a.nrows();
    if n == 0 {
        return Ok(if sys.d.is_empty() { 0.0 } else { linalg::norm2(&sys.d) });
    }
    if sys.b.ncols() == 0 || sys.c.nrows() == 0 {
        return Ok(0.0);
    }
    let fr = FreqResponse::new(sys)?;
    let poles = linalg::hessenberg_eigvals(fr.hessenberg())?;
    let abscissa = poles.iter().fold(f64::NEG_INFINITY, |m, e| m.max(e.re));
    if abscissa >= 0.0 {
        return Err(Error::UnstableSystem(abscissa));
    }
    let (mut lb, _) = sweep_peak(sys, &fr, &poles)?;
    if lb == 0.0 || n > HAMILTONIAN_MAX_STATES {
        return Ok(lb);
    }
    for _ in 0..60 {
        let gamma = lb * (1.0 + tol.hinf_rel);
        let h = hamiltonian(sys, gamma)?;
        let hn = h.norm();
        let eig = linalg::eigvals(&h)?;
        let mut ws: Vec<f64> = eig
            .iter()
            .filter(|e| e.re.abs() <= 1e-9 * hn.max(1.0) && e.im >= 0.0)
            .map(|e| e.im)
            .collect();
        if ws.is_empty() {
            break;
        }
        ws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut improved = false;
        let mut cand: Vec<f64> = ws.windows(2).map(|p| 0.5 * (p[0] + p[1])).collect();
        cand.extend(ws.iter().copied());
        for w in cand {
            let v = fr.sigma_max(w)?;
            if v > lb * (1.0 + 1e-14) {
                lb = v;
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    // the norm is certified to lie in [lb, lb(1 + hinf_rel)]
    Ok(lb * (1.0 + 0.5 * tol.hinf_rel))
}
