//! Small complex linear-algebra helpers shared by the solvers.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CVec = DVector<Complex64>;
pub type CMat = DMatrix<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[inline]
pub fn real(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

#[inline]
pub fn norm_sq(v: &CVec) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// `a^H b`.
#[inline]
pub fn inner(a: &CVec, b: &CVec) -> Complex64 {
    a.dotc(b)
}

/// `1 - |a^H b| / (‖a‖ ‖b‖)`; zero for collinear vectors regardless of the
/// complex scale between them.
pub fn cosine_distance(a: &CVec, b: &CVec) -> f64 {
    let na = norm_sq(a).sqrt();
    let nb = norm_sq(b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    1.0 - (inner(a, b).norm() / (na * nb)).min(1.0)
}

pub fn relative_error(a: &CVec, reference: &CVec) -> f64 {
    let denom = norm_sq(reference).sqrt();
    let diff = norm_sq(&(a - reference)).sqrt();
    if denom == 0.0 {
        diff
    } else {
        diff / denom
    }
}

/// Adds `scale * u u^H` to `m`.
pub fn add_outer_scaled(m: &mut CMat, u: &CVec, scale: f64) {
    let n = u.len();
    for c in 0..n {
        let uc = u[c].conj() * scale;
        for r in 0..n {
            m[(r, c)] += u[r] * uc;
        }
    }
}

/// Solves `a x = b` for Hermitian positive (semi)definite `a`: Cholesky first,
/// LU as a fallback.
pub fn solve_hermitian(a: &CMat, b: &CVec) -> Option<CVec> {
    if let Some(ch) = a.clone().cholesky() {
        let x = ch.solve(b);
        if x.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Some(x);
        }
    }
    solve_general(a, b)
}

pub fn solve_general(a: &CMat, b: &CVec) -> Option<CVec> {
    let x = a.clone().lu().solve(b)?;
    x.iter().all(|z| z.re.is_finite() && z.im.is_finite()).then_some(x)
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue_hermitian(a: &CMat) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    let herm = (a + a.adjoint()) * real(0.5);
    herm.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn trace_re(a: &CMat) -> f64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)].re).sum()
}
