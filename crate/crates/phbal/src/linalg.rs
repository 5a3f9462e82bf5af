//! Thin safe wrappers around the LAPACK routines the solvers are built on.
//!
//! Matrices are nalgebra `DMatrix<f64>`, which is column-major and therefore
//! hands its storage to Fortran without copies beyond the ones LAPACK needs.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type C64 = Complex<f64>;

fn check(routine: &'static str, info: i32) -> Result<()> {
    if info == 0 {
        Ok(())
    } else {
        Err(Error::Lapack { routine, info })
    }
}

fn lwork_of(query: f64) -> usize {
    (query as usize).max(1)
}

/// Eigenvalue selection used by ordered Schur decompositions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Half {
    /// Re λ < 0
    Left,
    /// Re λ > 0
    Right,
}

extern "C" fn select_left(wr: *const f64, _wi: *const f64) -> i32 {
    unsafe { (*wr < 0.0) as i32 }
}

extern "C" fn select_right(wr: *const f64, _wi: *const f64) -> i32 {
    unsafe { (*wr > 0.0) as i32 }
}

// Generalized eigenvalues with |λ| above ~1e10 belong to the infinite part of a
// singular pencil and are never selected.
fn finite(ar: f64, ai: f64, b: f64) -> bool {
    b > 1e-10 * ar.hypot(ai)
}

extern "C" fn gselect_left(ar: *const f64, ai: *const f64, b: *const f64) -> i32 {
    unsafe { (finite(*ar, *ai, *b) && *ar < 0.0) as i32 }
}

extern "C" fn gselect_right(ar: *const f64, ai: *const f64, b: *const f64) -> i32 {
    unsafe { (finite(*ar, *ai, *b) && *ar > 0.0) as i32 }
}

/// Real Schur form `A = Z T Zᵀ`.
pub struct Schur {
    pub t: Mat,
    pub z: Mat,
    pub eig: Vec<C64>,
    /// Number of leading eigenvalues that satisfied the selection.
    pub sdim: usize,
}

pub fn schur(a: &Mat, sel: Option<Half>) -> Result<Schur> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "schur: square matrix expected");
    let mut t = a.clone();
    let mut z = Mat::zeros(n, n);
    let mut wr = vec![0.0; n];
    let mut wi = vec![0.0; n];
    let mut bwork = vec![0i32; n];
    let mut sdim = 0;
    let mut info = 0;
    let (sort, f): (u8, lapack::Select2F64) = match sel {
        None => (b'N', None),
        Some(Half::Left) => (b'S', Some(select_left)),
        Some(Half::Right) => (b'S', Some(select_right)),
    };
    let ni = n as i32;
    let mut q = [0.0];
    unsafe {
        lapack::dgees(
            b'V', sort, f, ni, t.as_mut_slice(), ni.max(1), &mut sdim, &mut wr, &mut wi,
            z.as_mut_slice(), ni.max(1), &mut q, -1, &mut bwork, &mut info,
        );
    }
    check("dgees", info)?;
    let lw = lwork_of(q[0]);
    let mut work = vec![0.0; lw];
    unsafe {
        lapack::dgees(
            b'V', sort, f, ni, t.as_mut_slice(), ni.max(1), &mut sdim, &mut wr, &mut wi,
            z.as_mut_slice(), ni.max(1), &mut work, lw as i32, &mut bwork, &mut info,
        );
    }
    check("dgees", info)?;
    let eig = wr.iter().zip(&wi).map(|(&r, &i)| C64::new(r, i)).collect();
    Ok(Schur { t, z, eig, sdim: sdim as usize })
}

/// Ordered generalized real Schur form `A = Q S Zᵀ`, `B = Q T Zᵀ`.
pub struct QzSchur {
    pub z: Mat,
    pub sdim: usize,
    pub alpha: Vec<C64>,
    pub beta: Vec<f64>,
}

pub fn qz(a: &Mat, b: &Mat, sel: Half) -> Result<QzSchur> {
    let n = a.nrows();
    let mut s = a.clone();
    let mut t = b.clone();
    let mut ql = Mat::zeros(n, n);
    let mut zr = Mat::zeros(n, n);
    let mut ar = vec![0.0; n];
    let mut ai = vec![0.0; n];
    let mut be = vec![0.0; n];
    let mut bwork = vec![0i32; n];
    let mut sdim = 0;
    let mut info = 0;
    let f: lapack::Select3F64 = match sel {
        Half::Left => Some(gselect_left),
        Half::Right => Some(gselect_right),
    };
    let ni = n as i32;
    let mut q = [0.0];
    unsafe {
        lapack::dgges(
            b'V', b'V', b'S', f, ni, s.as_mut_slice(), ni, t.as_mut_slice(), ni, &mut sdim,
            &mut ar, &mut ai, &mut be, ql.as_mut_slice(), ni, zr.as_mut_slice(), ni, &mut q, -1,
            &mut bwork, &mut info,
        );
    }
    check("dgges", info)?;
    let lw = lwork_of(q[0]).max(8 * n + 16);
    let mut work = vec![0.0; lw];
    unsafe {
        lapack::dgges(
            b'V', b'V', b'S', f, ni, s.as_mut_slice(), ni, t.as_mut_slice(), ni, &mut sdim,
            &mut ar, &mut ai, &mut be, ql.as_mut_slice(), ni, zr.as_mut_slice(), ni, &mut work,
            lw as i32, &mut bwork, &mut info,
        );
    }
    check("dgges", info)?;
    let alpha = ar.iter().zip(&ai).map(|(&r, &i)| C64::new(r, i)).collect();
    Ok(QzSchur { z: zr, sdim: sdim as usize, alpha, beta: be })
}

/// Solves `op(A) X + isgn X op(B) = scale C` for quasi-triangular A, B.
/// Returns `(X, scale)`.
pub fn trsyl(trana: bool, tranb: bool, isgn: i32, a: &Mat, b: &Mat, c: &Mat) -> Result<(Mat, f64)> {
    let m = a.nrows() as i32;
    let n = b.nrows() as i32;
    let mut x = c.clone();
    let mut scale = [1.0];
    let mut info = 0;
    unsafe {
        lapack::dtrsyl(
            if trana { b'T' } else { b'N' },
            if tranb { b'T' } else { b'N' },
            &[isgn], m, n, a.as_slice(), m.max(1), b.as_slice(), n.max(1), x.as_mut_slice(),
            m.max(1), &mut scale, &mut info,
        );
    }
    if info == 1 {
        return Err(Error::SingularSylvester);
    }
    check("dtrsyl", info)?;
    Ok((x, scale[0]))
}

/// Symmetric eigendecomposition; eigenvalues ascending, eigenvectors as columns.
pub fn sym_eig(a: &Mat) -> Result<(DVector<f64>, Mat)> {
    let n = a.nrows();
    if n == 0 {
        return Ok((DVector::zeros(0), Mat::zeros(0, 0)));
    }
    let mut s = symmetrize(a);
    let ni = n as i32;
    let mut w = vec![0.0; n];
    let mut z = Mat::zeros(n, n);
    let mut isuppz = vec![0i32; 2 * n];
    let mut m = 0;
    let mut info = 0;
    let mut q = [0.0];
    let mut iq = [0i32];
    unsafe {
        lapack::dsyevr(
            b'V', b'A', b'L', ni, s.as_mut_slice(), ni, 0.0, 0.0, 0, 0, 0.0, &mut m, &mut w,
            z.as_mut_slice(), ni, &mut isuppz, &mut q, -1, &mut iq, -1, &mut info,
        );
    }
    check("dsyevr", info)?;
    let lw = lwork_of(q[0]);
    let liw = (iq[0] as usize).max(1);
    let mut work = vec![0.0; lw];
    let mut iwork = vec![0i32; liw];
    unsafe {
        lapack::dsyevr(
            b'V', b'A', b'L', ni, s.as_mut_slice(), ni, 0.0, 0.0, 0, 0, 0.0, &mut m, &mut w,
            z.as_mut_slice(), ni, &mut isuppz, &mut work, lw as i32, &mut iwork, liw as i32,
            &mut info,
        );
    }
    check("dsyevr", info)?;
    Ok((DVector::from_vec(w), z))
}

pub fn sym_eigvals(a: &Mat) -> Result<DVector<f64>> {
    Ok(sym_eig(a)?.0)
}

/// Thin SVD `A = U diag(s) Vᵀ`; returns `(U, s, Vᵀ)` with s descending.
pub fn svd(a: &Mat) -> Result<(Mat, DVector<f64>, Mat)> {
    let (m, n) = a.shape();
    let k = m.min(n);
    if k == 0 {
        return Ok((Mat::zeros(m, 0), DVector::zeros(0), Mat::zeros(0, n)));
    }
    let mut x = a.clone();
    let mut s = vec![0.0; k];
    let mut u = Mat::zeros(m, k);
    let mut vt = Mat::zeros(k, n);
    let mut iwork = vec![0i32; 8 * k];
    let mut info = 0;
    let mut q = [0.0];
    let (mi, ni, ki) = (m as i32, n as i32, k as i32);
    unsafe {
        lapack::dgesdd(
            b'S', mi, ni, x.as_mut_slice(), mi, &mut s, u.as_mut_slice(), mi, vt.as_mut_slice(),
            ki, &mut q, -1, &mut iwork, &mut info,
        );
    }
    check("dgesdd", info)?;
    let lw = lwork_of(q[0]);
    let mut work = vec![0.0; lw];
    unsafe {
        lapack::dgesdd(
            b'S', mi, ni, x.as_mut_slice(), mi, &mut s, u.as_mut_slice(), mi, vt.as_mut_slice(),
            ki, &mut work, lw as i32, &mut iwork, &mut info,
        );
    }
    if info > 0 {
        // divide and conquer occasionally fails to converge; QR iteration is the fallback
        return svd_qr(a);
    }
    check("dgesdd", info)?;
    Ok((u, DVector::from_vec(s), vt))
}

fn svd_qr(a: &Mat) -> Result<(Mat, DVector<f64>, Mat)> {
    let (m, n) = a.shape();
    let k = m.min(n);
    let mut x = a.clone();
    let mut s = vec![0.0; k];
    let mut u = Mat::zeros(m, k);
    let mut vt = Mat::zeros(k, n);
    let mut info = 0;
    let mut q = [0.0];
    let (mi, ni, ki) = (m as i32, n as i32, k as i32);
    unsafe {
        lapack::dgesvd(
            b'S', b'S', mi, ni, x.as_mut_slice(), mi, &mut s, u.as_mut_slice(), mi,
            vt.as_mut_slice(), ki, &mut q, -1, &mut info,
        );
    }
    check("dgesvd", info)?;
    let lw = lwork_of(q[0]);
    let mut work = vec![0.0; lw];
    unsafe {
        lapack::dgesvd(
            b'S', b'S', mi, ni, x.as_mut_slice(), mi, &mut s, u.as_mut_slice(), mi,
            vt.as_mut_slice(), ki, &mut work, lw as i32, &mut info,
        );
    }
    check("dgesvd", info)?;
    Ok((u, DVector::from_vec(s), vt))
}

pub fn singular_values(a: &Mat) -> Result<DVector<f64>> {
    let (m, n) = a.shape();
    let k = m.min(n);
    if k == 0 {
        return Ok(DVector::zeros(0));
    }
    let mut x = a.clone();
    let mut s = vec![0.0; k];
    let mut u = [0.0];
    let mut vt = [0.0];
    let mut iwork = vec![0i32; 8 * k];
    let mut info = 0;
    let mut q = [0.0];
    let (mi, ni) = (m as i32, n as i32);
    unsafe {
        lapack::dgesdd(b'N', mi, ni, x.as_mut_slice(), mi, &mut s, &mut u, 1, &mut vt, 1, &mut q, -1, &mut iwork, &mut info);
    }
    check("dgesdd", info)?;
    let lw = lwork_of(q[0]);
    let mut work = vec![0.0; lw];
    unsafe {
        lapack::dgesdd(b'N', mi, ni, x.as_mut_slice(), mi, &mut s, &mut u, 1, &mut vt, 1, &mut work, lw as i32, &mut iwork, &mut info);
    }
    if info > 0 {
        return Ok(svd_qr(a)?.1);
    }
    check("dgesdd", info)?;
    Ok(DVector::from_vec(s))
}

/// Eigenvalues of a general real matrix.
pub fn eigvals(a: &Mat) -> Result<Vec<C64>> {
    let n = a.nrows();
    if n == 0 {
        return Ok(vec![]);
    }
    let (h, _) = hessenberg(a, false)?;
    hessenberg_eigvals(&h)
}

/// Eigenvalues of an upper Hessenberg matrix.
pub fn hessenberg_eigvals(h: &Mat) -> Result<Vec<C64>> {
    let n = h.nrows();
    if n == 0 {
        return Ok(vec![]);
    }
    let mut x = h.clone();
    let ni = n as i32;
    let mut wr = vec![0.0; n];
    let mut wi = vec![0.0; n];
    let mut z = [0.0];
    let mut info = 0;
    let mut q = [0.0];
    unsafe {
        lapack::dhseqr(b'E', b'N', ni, 1, ni, x.as_mut_slice(), ni, &mut wr, &mut wi, &mut z, 1, &mut q, -1, &mut info);
    }
    check("dhseqr", info)?;
    let lw = lwork_of(q[0]).max(n);
    let mut work = vec![0.0; lw];
    unsafe {
        lapack::dhseqr(b'E', b'N', ni, 1, ni, x.as_mut_slice(), ni, &mut wr, &mut wi, &mut z, 1, &mut work, lw as i32, &mut info);
    }
    check("dhseqr", info)?;
    Ok(wr.iter().zip(&wi).map(|(&r, &i)| C64::new(r, i)).collect())
}

/// Hessenberg reduction `A = U H Uᵀ`. U is only formed when asked for.
pub fn hessenberg(a: &Mat, want_u: bool) -> Result<(Mat, Option<Mat>)> {
    let n = a.nrows();
    let mut h = a.clone();
    if n <= 1 {
        return Ok((h, want_u.then(|| Mat::identity(n, n))));
    }
    let ni = n as i32;
    let mut tau = vec![0.0; n - 1];
    let mut info = 0;
    let mut q = [0.0];
    unsafe {
        lapack::dgehrd(ni, 1, ni, h.as_mut_slice(), ni, &mut tau, &mut q, -1, &mut info);
    }
    check("dgehrd", info)?;
    let lw = lwork_of(q[0]);
    let mut work = vec![0.0; lw];
    unsafe {
        lapack::dgehrd(ni, 1, ni, h.as_mut_slice(), ni, &mut tau, &mut work, lw as i32, &mut info);
    }
    check("dgehrd", info)?;
    let u = if want_u {
        let mut u = h.clone();
        unsafe {
            lapack::dorghr(ni, 1, ni, u.as_mut_slice(), ni, &tau, &mut q, -1, &mut info);
        }
        check("dorghr", info)?;
        let lw = lwork_of(q[0]);
        let mut work = vec![0.0; lw];
        unsafe {
            lapack::dorghr(ni, 1, ni, u.as_mut_slice(), ni, &tau, &mut work, lw as i32, &mut info);
        }
        check("dorghr", info)?;
        Some(u)
    } else {
        None
    };
    for j in 0..n {
        for i in (j + 2)..n {
            h[(i, j)] = 0.0;
        }
    }
    Ok((h, u))
}

/// LU factorization with partial pivoting, kept for repeated solves.
pub struct Lu {
    lu: Mat,
    ipiv: Vec<i32>,
}

impl Lu {
    pub fn new(a: &Mat) -> Result<Lu> {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "lu: square matrix expected");
        let mut lu = a.clone();
        let mut ipiv = vec![0i32; n];
        let mut info = 0;
        let ni = n as i32;
        unsafe {
            lapack::dgetrf(ni, ni, lu.as_mut_slice(), ni.max(1), &mut ipiv, &mut info);
        }
        if info > 0 {
            return Err(Error::Singular("LU factorization"));
        }
        check("dgetrf", info)?;
        Ok(Lu { lu, ipiv })
    }

    fn solve_impl(&self, b: &Mat, trans: u8) -> Result<Mat> {
        let n = self.lu.nrows() as i32;
        let mut x = b.clone();
        let mut info = 0;
        unsafe {
            lapack::dgetrs(trans, n, b.ncols() as i32, self.lu.as_slice(), n.max(1), &self.ipiv, x.as_mut_slice(), n.max(1), &mut info);
        }
        check("dgetrs", info)?;
        Ok(x)
    }

    /// A⁻¹ B
    pub fn solve(&self, b: &Mat) -> Result<Mat> {
        self.solve_impl(b, b'N')
    }

    /// A⁻ᵀ B
    pub fn solve_t(&self, b: &Mat) -> Result<Mat> {
        self.solve_impl(b, b'T')
    }

    /// Reciprocal-free sanity: smallest |u_ii| relative to the largest.
    pub fn pivot_ratio(&self) -> f64 {
        let d = self.lu.diagonal().map(f64::abs);
        let mx = d.max();
        if mx == 0.0 {
            0.0
        } else {
            d.min() / mx
        }
    }
}

pub fn solve(a: &Mat, b: &Mat) -> Result<Mat> {
    Lu::new(a)?.solve(b)
}

pub fn inv(a: &Mat) -> Result<Mat> {
    let n = a.nrows();
    solve(a, &Mat::identity(n, n))
}

/// Inverse of a symmetric positive definite matrix, symmetrized.
pub fn spd_inv(a: &Mat) -> Result<Mat> {
    let l = cholesky_lower(a)?;
    let li = tri_inv_lower(&l)?;
    Ok(symmetrize(&(li.transpose() * li)))
}

/// Lower Cholesky factor `A = L Lᵀ`.
pub fn cholesky_lower(a: &Mat) -> Result<Mat> {
    let n = a.nrows();
    let mut l = symmetrize(a);
    let mut info = 0;
    let ni = n as i32;
    unsafe {
        lapack::dpotrf(b'L', ni, l.as_mut_slice(), ni.max(1), &mut info);
    }
    if info > 0 {
        return Err(Error::NotPositiveDefinite);
    }
    check("dpotrf", info)?;
    for j in 0..n {
        for i in 0..j {
            l[(i, j)] = 0.0;
        }
    }
    Ok(l)
}

pub fn tri_inv_lower(l: &Mat) -> Result<Mat> {
    let n = l.nrows();
    let mut x = l.clone();
    let mut info = 0;
    let ni = n as i32;
    unsafe {
        lapack::dtrtri(b'L', b'N', ni, x.as_mut_slice(), ni.max(1), &mut info);
    }
    if info > 0 {
        return Err(Error::Singular("triangular inverse"));
    }
    check("dtrtri", info)?;
    Ok(x)
}

pub fn symmetrize(a: &Mat) -> Mat {
    (a + a.transpose()) * 0.5
}

pub fn skew_part(a: &Mat) -> Mat {
    (a - a.transpose()) * 0.5
}

/// Spectral norm.
pub fn norm2(a: &Mat) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    singular_values(a).map(|s| s[0]).unwrap_or(f64::NAN)
}

/// Largest eigenvalue magnitude of a symmetric matrix, which is its 2-norm.
pub fn sym_norm2(a: &Mat) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    match sym_eigvals(a) {
        Ok(w) => w.iter().fold(0.0f64, |m, &x| m.max(x.abs())),
        Err(_) => f64::NAN,
    }
}

pub fn block_diag(a: &Mat, b: &Mat) -> Mat {
    let (m1, n1) = a.shape();
    let (m2, n2) = b.shape();
    let mut out = Mat::zeros(m1 + m2, n1 + n2);
    out.view_mut((0, 0), (m1, n1)).copy_from(a);
    out.view_mut((m1, n1), (m2, n2)).copy_from(b);
    out
}

pub fn vstack(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.ncols(), b.ncols());
    let mut out = Mat::zeros(a.nrows() + b.nrows(), a.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((a.nrows(), 0), b.shape()).copy_from(b);
    out
}

pub fn hstack(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.nrows(), b.nrows());
    let mut out = Mat::zeros(a.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((0, a.ncols()), b.shape()).copy_from(b);
    out
}

pub fn rel_diff(a: &Mat, b: &Mat) -> f64 {
    let d = (a - b).norm();
    let s = a.norm().max(b.norm());
    if s == 0.0 {
        d
    } else {
        d / s
    }
}
