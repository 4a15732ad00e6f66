//! Small dense linear-algebra helpers shared by the matrix-level modules.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type RMat = DMatrix<f64>;
pub type CMat = DMatrix<Complex64>;

pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn complexify(m: &RMat) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}

/// Standard symplectic matrix `[[0, I], [-I, 0]]` of size `m = 2n`.
pub fn j_std(m: usize) -> RMat {
    let n = m / 2;
    let mut j = RMat::zeros(m, m);
    for k in 0..n {
        j[(k, n + k)] = 1.0;
        j[(n + k, k)] = -1.0;
    }
    j
}

pub fn max_abs(m: &RMat) -> f64 {
    m.iter().fold(0.0, |a, &x| a.max(x.abs()))
}

pub fn max_abs_c(m: &CMat) -> f64 {
    m.iter().fold(0.0, |a, x| a.max(x.norm()))
}

/// `max |M + M^T|`, relative to `max(1, max |M|)`.
pub fn skew_defect(m: &RMat) -> f64 {
    max_abs(&(m + m.transpose())) / max_abs(m).max(1.0)
}

/// `max |M - M^T|`, relative to `max(1, max |M|)`.
pub fn sym_defect(m: &RMat) -> f64 {
    max_abs(&(m - m.transpose())) / max_abs(m).max(1.0)
}

pub fn sym_defect_c(m: &CMat) -> f64 {
    max_abs_c(&(m - m.transpose())) / max_abs_c(m).max(1.0)
}

pub fn symmetrize_c(m: &CMat) -> CMat {
    (m + m.transpose()) * c(0.5, 0.0)
}

pub fn norm1_c(m: &CMat) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|x| x.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn det_c(m: &CMat) -> Complex64 {
    m.clone().lu().determinant()
}

pub fn inverse_c(m: &CMat) -> Option<CMat> {
    m.clone().lu().try_inverse()
}

pub fn inverse(m: &RMat) -> Option<RMat> {
    m.clone().lu().try_inverse()
}

/// Largest singular value.
pub fn spectral_norm(m: &RMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0, |a, &x| a.max(x))
}

/// Smallest singular value.
pub fn smallest_singular(m: &RMat) -> f64 {
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(f64::INFINITY, |a, &x| a.min(x))
}

/// 2-norm condition number of a complex matrix.
pub fn cond_c(m: &CMat) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let hi = sv.iter().fold(0.0_f64, |a, &x| a.max(x));
    let lo = sv.iter().fold(f64::INFINITY, |a, &x| a.min(x));
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Eigenvalues of a symmetric real matrix, ascending.
pub fn sym_eigenvalues(m: &RMat) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Eigenvalues of a complex matrix via the complex Schur form.
pub fn eigenvalues_c(m: &CMat) -> Vec<Complex64> {
    let (_, t) = m.clone().schur().unpack();
    (0..t.nrows()).map(|k| t[(k, k)]).collect()
}

pub fn eigenvalues(m: &RMat) -> Vec<Complex64> {
    eigenvalues_c(&complexify(m))
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by Padé(13) scaling and squaring.
pub fn expm(a: &CMat) -> CMat {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");
    if n == 0 {
        return a.clone();
    }
    let norm = norm1_c(a);
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = a * c(2f64.powi(-s), 0.0);
    let id = CMat::identity(n, n);
    let b = |k: usize| c(PADE13[k], 0.0);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * (&a6 * b(13) + &a4 * b(11) + &a2 * b(9))
        + &a6 * b(7)
        + &a4 * b(5)
        + &a2 * b(3)
        + &id * b(1);
    let u = &a * inner_u;
    let v = &a6 * (&a6 * b(12) + &a4 * b(10) + &a2 * b(8))
        + &a6 * b(6)
        + &a4 * b(4)
        + &a2 * b(2)
        + &id * b(0);
    let mut r = (&v - &u)
        .lu()
        .solve(&(&v + &u))
        .expect("Pade denominator is invertible after scaling");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

pub fn expm_r(a: &RMat) -> CMat {
    expm(&complexify(a))
}

/// Principal square root, with `-0` imaginary parts mapped onto the upper branch.
pub fn csqrt(z: Complex64) -> Complex64 {
    let z = if z.im == 0.0 { c(z.re, 0.0) } else { z };
    z.sqrt()
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expm_of_rotation_generator() {
        let theta = 0.7;
        let m = RMat::from_row_slice(2, 2, &[0.0, -theta, theta, 0.0]);
        let e = expm_r(&m);
        assert!((e[(0, 0)].re - theta.cos()).abs() < 1e-14);
        assert!((e[(1, 0)].re - theta.sin()).abs() < 1e-14);
    }

    #[test]
    fn expm_large_norm_diagonal() {
        let m = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![c(3.0, 40.0), c(-20.0, 0.0)]));
        let e = expm(&m);
        let want = c(3.0, 40.0).exp();
        assert!((e[(0, 0)] - want).norm() / want.norm() < 1e-12);
        assert!((e[(1, 1)].re - (-20f64).exp()).abs() < 1e-20);
    }

    #[test]
    fn expm_nilpotent_is_polynomial() {
        let m = RMat::from_row_slice(3, 3, &[0.0, 1.0, 2.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0]);
        let e = expm_r(&m);
        // I + M + M^2/2, M^2 has a single entry 3 at (0,2).
        assert!((e[(0, 2)].re - 3.5).abs() < 1e-13);
        assert!((e[(0, 1)].re - 1.0).abs() < 1e-13);
    }

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 0.5, 0.25, 0.125];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powi(2)).collect();
        assert!((loglog_slope(&x, &y) - 2.0).abs() < 1e-12);
    }
}
