//! Pfaffians, symplectic frames `R(mu)`, the generators `S_mu`, `S(mu)`, `D(mu)`,
//! analytic matrix functions and signature counts.

use crate::error::{Error, Result};
use crate::lie::{j_matrix, LieAlgebra2Step, GENERIC_TOL};
use crate::linalg::{
    c, complexify, cond_c, det_c, eigenvalues_c, expm, inverse, inverse_c, j_std, max_abs, max_abs_c,
    norm1_c, skew_defect, sym_defect, sym_eigenvalues, CMat, RMat,
};
use num_complex::Complex64;

/// Pfaffian by skew-symmetric Gaussian elimination with partial pivoting.
///
/// The sign convention is the one fixed by this elimination order.
pub fn pfaffian(m: &RMat) -> Result<f64> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::DimensionMismatch("Pfaffian needs a square matrix".into()));
    }
    if n % 2 == 1 {
        return Err(Error::OddDimension(n));
    }
    let defect = max_abs(&(m + m.transpose()));
    if defect > 1e-12 * max_abs(m).max(1.0) {
        return Err(Error::NotSkew(defect));
    }
    let mut a = m.clone();
    let mut pf = 1.0;
    for k in (0..n.saturating_sub(1)).step_by(2) {
        let mut kp = k + 1;
        for i in k + 2..n {
            if a[(i, k)].abs() > a[(kp, k)].abs() {
                kp = i;
            }
        }
        if kp != k + 1 {
            a.swap_rows(k + 1, kp);
            a.swap_columns(k + 1, kp);
            pf = -pf;
        }
        let piv = a[(k, k + 1)];
        if piv == 0.0 {
            return Ok(0.0);
        }
        pf *= piv;
        if k + 2 < n {
            let tau: Vec<f64> = (k + 2..n).map(|j| a[(k, j)] / piv).collect();
            let col: Vec<f64> = (k + 2..n).map(|i| a[(i, k + 1)]).collect();
            for (ii, i) in (k + 2..n).enumerate() {
                for (jj, j) in (k + 2..n).enumerate() {
                    a[(i, j)] += tau[ii] * col[jj] - col[ii] * tau[jj];
                }
            }
        }
    }
    Ok(pf)
}

/// Per-`mu` symplectic data: `R^T J_mu R = J`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticFrame {
    pub mu: Vec<f64>,
    pub jmu: RMat,
    pub pf: f64,
    pub r: RMat,
    pub r_inv: RMat,
    pub jstd: RMat,
}

/// Defects of the four frame identities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameDefects {
    /// `max |R^T J_mu R - J|`.
    pub transform: f64,
    /// `|Pf^2 - det J_mu| / |det J_mu|`.
    pub pf_squared: f64,
    /// `|det(J_mu) det(R)^2 - 1|`.
    pub det_r: f64,
    /// `max |R(mu) - |mu|^{-1/2} R(mu/|mu|)|`.
    pub homogeneity: f64,
}

impl FrameDefects {
    pub fn max(&self) -> f64 {
        self.transform.max(self.pf_squared).max(self.det_r).max(self.homogeneity)
    }
}

impl SymplecticFrame {
    pub fn m(&self) -> usize {
        self.jmu.nrows()
    }

    pub fn n(&self) -> usize {
        self.m() / 2
    }

    pub fn pf_abs(&self) -> f64 {
        self.pf.abs()
    }

    pub fn mu_norm(&self) -> f64 {
        self.mu.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Builds the frame of an arbitrary nondegenerate skew form; `scale` is the
    /// homogeneity factor `|mu|` with `jmu = scale * jhat`.
    pub fn from_form(jmu: &RMat, scale: f64, mu: Vec<f64>) -> Result<Self> {
        let m = jmu.nrows();
        if skew_defect(jmu) > 1e-12 {
            return Err(Error::NotSkew(skew_defect(jmu)));
        }
        if scale <= 0.0 || m % 2 == 1 {
            return Err(Error::DegenerateForm { det: 0.0 });
        }
        let jhat = jmu / scale;
        let det_hat = jhat.determinant();
        if det_hat.abs() <= GENERIC_TOL {
            return Err(Error::DegenerateForm { det: jmu.determinant() });
        }
        let r = gram_schmidt(&jhat)? / scale.sqrt();
        let r_inv = inverse(&r).ok_or(Error::DegenerateForm { det: 0.0 })?;
        let pf = pfaffian(jmu)?;
        Ok(Self { mu, jmu: jmu.clone(), pf, r, r_inv, jstd: j_std(m) })
    }

    pub fn defects(&self) -> FrameDefects {
        let transform = max_abs(&(self.r.transpose() * &self.jmu * &self.r - &self.jstd));
        let det = self.jmu.determinant();
        let pf_squared = (self.pf * self.pf - det).abs() / det.abs();
        let det_r = (det * self.r.determinant().powi(2) - 1.0).abs();
        let scale = self.mu_norm();
        let homogeneity = match gram_schmidt(&(&self.jmu / scale)) {
            Ok(r1) => max_abs(&(&self.r - r1 / scale.sqrt())),
            Err(_) => f64::INFINITY,
        };
        FrameDefects { transform, pf_squared, det_r, homogeneity }
    }

    /// `A(mu) = R^{-1} A R^{-T}`.
    pub fn a_of_mu(&self, a: &RMat) -> RMat {
        &self.r_inv * a * self.r_inv.transpose()
    }

    /// `B(mu) = -R^{-1} R^{-T}`.
    pub fn b_of_mu(&self) -> RMat {
        -(&self.r_inv * self.r_inv.transpose())
    }
}

/// Symplectic Gram-Schmidt for `omega(v, w) = v^T J w`: pivot on the pair with the
/// largest `|omega|`, ties broken lexicographically. Columns `[a_1..a_n, b_1..b_n]`.
fn gram_schmidt(j: &RMat) -> Result<RMat> {
    let m = j.nrows();
    let n = m / 2;
    let omega = |v: &[f64], w: &[f64]| -> f64 {
        let mut acc = 0.0;
        for p in 0..m {
            for q in 0..m {
                acc += v[p] * j[(p, q)] * w[q];
            }
        }
        acc
    };
    let mut pool: Vec<Vec<f64>> = (0..m).map(|i| (0..m).map(|k| (i == k) as i32 as f64).collect()).collect();
    let mut r = RMat::zeros(m, m);
    for step in 0..n {
        let (mut bi, mut bj, mut best) = (0, 1, -1.0);
        for i in 0..pool.len() {
            for k in i + 1..pool.len() {
                let w = omega(&pool[i], &pool[k]).abs();
                if w > best {
                    best = w;
                    bi = i;
                    bj = k;
                }
            }
        }
        if best <= 1e-12 {
            return Err(Error::DegenerateForm { det: j.determinant() });
        }
        let a = pool[bi].clone();
        let w = omega(&pool[bi], &pool[bj]);
        let b: Vec<f64> = pool[bj].iter().map(|v| v / w).collect();
        pool.remove(bj);
        pool.remove(bi);
        for v in pool.iter_mut() {
            let (vb, va) = (omega(v, &b), omega(v, &a));
            for p in 0..m {
                v[p] += -vb * a[p] + va * b[p];
            }
        }
        for p in 0..m {
            r[(p, step)] = a[p];
            r[(p, n + step)] = b[p];
        }
    }
    Ok(r)
}

/// Frame at `mu`: fails with `DegenerateForm` off the generic cone.
pub fn build_frame(alg: &LieAlgebra2Step, mu: &[f64]) -> Result<SymplecticFrame> {
    let jmu = j_matrix(alg, mu);
    let scale = mu.iter().map(|v| v * v).sum::<f64>().sqrt();
    if scale == 0.0 {
        return Err(Error::DegenerateForm { det: 0.0 });
    }
    SymplecticFrame::from_form(&jmu, scale, mu.to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorKind {
    SMu,
    SOfMu,
    DMu,
    DEpsMu,
    Custom,
}

/// A generator in `sp`, tagged with its origin.
#[derive(Debug, Clone, PartialEq)]
pub struct SpGenerator {
    pub s: RMat,
    pub kind: GeneratorKind,
    pub a: Option<RMat>,
}

impl SpGenerator {
    pub fn custom(s: RMat) -> Self {
        Self { s, kind: GeneratorKind::Custom, a: None }
    }

    pub fn dim(&self) -> usize {
        self.s.nrows()
    }

    /// Defect of the Lie-algebra membership: `J_mu S + S^T J_mu` for `S_mu`
    /// (needs the frame), `J S + S^T J` otherwise.
    pub fn sp_defect(&self, frame: Option<&SymplecticFrame>) -> f64 {
        let j = match (self.kind, frame) {
            (GeneratorKind::SMu, Some(f)) => f.jmu.clone(),
            _ => j_std(self.dim()),
        };
        max_abs(&(&j * &self.s + self.s.transpose() * &j)) / max_abs(&self.s).max(1.0)
    }
}

/// Builds `S_mu = -A J_mu`, `S(mu) = R^{-1} S_mu R` or `D(mu) = -B(mu) J`.
pub fn generator(a: &RMat, frame: &SymplecticFrame, kind: GeneratorKind) -> Result<SpGenerator> {
    let m = frame.m();
    if a.nrows() != m || a.ncols() != m {
        return Err(Error::DimensionMismatch(format!("A must be {m} x {m}")));
    }
    let d = sym_defect(a);
    if d > 1e-12 {
        return Err(Error::NotSymmetric(d));
    }
    let s_mu = -(a * &frame.jmu);
    let s = match kind {
        GeneratorKind::SMu => s_mu,
        GeneratorKind::SOfMu => &frame.r_inv * s_mu * &frame.r,
        GeneratorKind::DMu => -(frame.b_of_mu() * &frame.jstd),
        GeneratorKind::DEpsMu | GeneratorKind::Custom => {
            return Err(Error::InvalidInput("use sp_combine / ad_conjugate for derived generators".into()))
        }
    };
    let a = (kind != GeneratorKind::DMu).then(|| a.clone());
    Ok(SpGenerator { s, kind, a })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatFn {
    Sinh,
    Cosh,
    Coth,
    Exp,
    Log,
}

fn scalar(kind: MatFn, z: Complex64) -> Result<Complex64> {
    Ok(match kind {
        MatFn::Sinh => z.sinh(),
        MatFn::Cosh => z.cosh(),
        MatFn::Exp => z.exp(),
        MatFn::Coth => {
            let s = z.sinh();
            if s.norm() < 1e-14 * z.cosh().norm().max(1.0) {
                return Err(Error::SingularSinh);
            }
            z.cosh() / s
        }
        MatFn::Log => {
            if z.norm() == 0.0 || (z.im.abs() <= 1e-14 * z.norm() && z.re < 0.0) {
                return Err(Error::BranchFailure(format!("{z}")));
            }
            z.ln()
        }
    })
}

/// Eigenvectors grouped by eigenvalue cluster; `None` for defective or badly
/// conditioned matrices.
fn diagonalize(m: &CMat) -> Option<(CMat, Vec<Complex64>)> {
    let n = m.nrows();
    let ev = eigenvalues_c(m);
    let scale = ev.iter().fold(max_abs_c(m), |a, z| a.max(z.norm())).max(1.0);
    let tol = 1e-7 * scale;
    let mut used = vec![false; n];
    let mut cols: Vec<nalgebra::DVector<Complex64>> = Vec::with_capacity(n);
    let mut lams = Vec::with_capacity(n);
    for i in 0..n {
        if used[i] {
            continue;
        }
        let members: Vec<usize> = (i..n).filter(|&k| !used[k] && (ev[k] - ev[i]).norm() <= tol).collect();
        let center = members.iter().map(|&k| ev[k]).sum::<Complex64>() / c(members.len() as f64, 0.0);
        for &k in &members {
            used[k] = true;
        }
        let shifted = m - CMat::identity(n, n) * center;
        let svd = shifted.svd(false, true);
        let v_t = svd.v_t?;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
        let k = members.len();
        if svd.singular_values[order[k - 1]] > 1e-6 * scale {
            return None;
        }
        for &idx in &order[..k] {
            cols.push(v_t.row(idx).adjoint());
            lams.push(center);
        }
    }
    let v = CMat::from_columns(&cols);
    if cond_c(&v) > 1e8 {
        return None;
    }
    Some((v, lams))
}

fn taylor_sinh(m: &CMat) -> CMat {
    let n = m.nrows();
    let m2 = m * m;
    let mut term = m.clone();
    let mut acc = m.clone();
    for k in 1..40 {
        term = &term * &m2 / c(((2 * k) * (2 * k + 1)) as f64, 0.0);
        acc += &term;
        if max_abs_c(&term) < 1e-18 * max_abs_c(&acc).max(1e-300) {
            break;
        }
    }
    let _ = n;
    acc
}

fn denman_beavers_sqrt(a: &CMat) -> Result<CMat> {
    let n = a.nrows();
    let mut y = a.clone();
    let mut z = CMat::identity(n, n);
    for _ in 0..100 {
        let yi = inverse_c(&y).ok_or_else(|| Error::BranchFailure("singular square-root iterate".into()))?;
        let zi = inverse_c(&z).ok_or_else(|| Error::BranchFailure("singular square-root iterate".into()))?;
        let y_next = (&y + zi) * c(0.5, 0.0);
        let z_next = (&z + yi) * c(0.5, 0.0);
        let change = max_abs_c(&(&y_next - &y)) / max_abs_c(&y_next).max(1e-300);
        y = y_next;
        z = z_next;
        if change < 1e-15 {
            return Ok(y);
        }
    }
    Ok(y)
}

fn series_function(kind: MatFn, m: &CMat) -> Result<CMat> {
    let n = m.nrows();
    let id = CMat::identity(n, n);
    let small = norm1_c(m) <= 1.0;
    let sinh = |m: &CMat| -> CMat {
        if small {
            taylor_sinh(m)
        } else {
            (expm(m) - expm(&-m)) * c(0.5, 0.0)
        }
    };
    let cosh = |m: &CMat| -> CMat { (expm(m) + expm(&-m)) * c(0.5, 0.0) };
    match kind {
        MatFn::Exp => Ok(expm(m)),
        MatFn::Sinh => Ok(sinh(m)),
        MatFn::Cosh => Ok(cosh(m)),
        MatFn::Coth => {
            let s = sinh(m);
            if cond_c(&s) > 1e14 {
                return Err(Error::SingularSinh);
            }
            let si = inverse_c(&s).ok_or(Error::SingularSinh)?;
            Ok(cosh(m) * si)
        }
        MatFn::Log => {
            for z in eigenvalues_c(m) {
                scalar(MatFn::Log, z)?;
            }
            let mut x = m.clone();
            let mut k = 0;
            while max_abs_c(&(&x - &id)) > 0.25 && k < 60 {
                x = denman_beavers_sqrt(&x)?;
                k += 1;
            }
            let y = &x - &id;
            let mut term = y.clone();
            let mut acc = y.clone();
            for j in 2..200 {
                term = &term * &y;
                let sign = if j % 2 == 0 { -1.0 } else { 1.0 };
                let add = &term * c(sign / j as f64, 0.0);
                acc += &add;
                if max_abs_c(&add) < 1e-18 {
                    break;
                }
            }
            Ok(acc * c(2f64.powi(k), 0.0))
        }
    }
}

/// `f(M)` for `f` in {sinh, cosh, coth, exp, log}: eigen-decomposition when the
/// eigenvector basis is well conditioned, series/scaling-squaring otherwise.
pub fn matrix_function(kind: MatFn, m: &CMat) -> Result<CMat> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch("matrix function needs a square matrix".into()));
    }
    if m.nrows() == 0 {
        return Ok(m.clone());
    }
    match diagonalize(m) {
        Some((v, lams)) => {
            let vi = inverse_c(&v).ok_or_else(|| Error::InvalidInput("singular eigenvector basis".into()))?;
            let mut fv = v.clone();
            for (j, &lam) in lams.iter().enumerate() {
                let f = scalar(kind, lam)?;
                for i in 0..fv.nrows() {
                    fv[(i, j)] *= f;
                }
            }
            Ok(fv * vi)
        }
        None => series_function(kind, m),
    }
}

pub fn matrix_function_r(kind: MatFn, m: &RMat) -> Result<CMat> {
    matrix_function(kind, &complexify(m))
}

/// Signature `#{lambda > tol} - #{lambda < -tol}` with a count of eigenvalues
/// inside the tolerance band.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Signature {
    pub k: i32,
    pub near_zero: usize,
}

pub fn signature_count(m: &RMat) -> Result<Signature> {
    let d = sym_defect(m);
    if d > 1e-9 {
        return Err(Error::NotSymmetric(d));
    }
    let sym = (m + m.transpose()) * 0.5;
    let ev = sym_eigenvalues(&sym);
    let tol = 1e-10 * ev.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    let pos = ev.iter().filter(|&&v| v > tol).count() as i32;
    let neg = ev.iter().filter(|&&v| v < -tol).count() as i32;
    Ok(Signature { k: pos - neg, near_zero: ev.len() - (pos + neg) as usize })
}

fn real_part_checked(m: &CMat, what: &str) -> Result<RMat> {
    let im = m.iter().fold(0.0_f64, |a, z| a.max(z.im.abs()));
    let re = m.map(|z| z.re);
    if im > 1e-9 * max_abs(&re).max(1.0) {
        return Err(Error::BranchFailure(format!("{what} has no real value (imaginary part {im:.3e})")));
    }
    Ok(re)
}

/// `Z = log(exp(t S1) exp(t S2)) / t`, the exact two-term BCH combination.
pub fn sp_combine(t: f64, s1: &SpGenerator, s2: &SpGenerator) -> Result<SpGenerator> {
    if t == 0.0 {
        return Ok(SpGenerator::custom(&s1.s + &s2.s));
    }
    let g = expm(&complexify(&(&s1.s * t))) * expm(&complexify(&(&s2.s * t)));
    let lg = matrix_function(MatFn::Log, &g)?;
    let z = real_part_checked(&lg, "log(exp(tS1) exp(tS2))")? / t;
    Ok(SpGenerator::custom(z))
}

/// `exp(-tS) D exp(tS)`.
pub fn ad_conjugate(t: f64, s: &SpGenerator, d: &SpGenerator) -> SpGenerator {
    let e = expm(&complexify(&(&s.s * t)));
    let ei = expm(&complexify(&(&s.s * -t)));
    let conj = (ei * complexify(&d.s) * e).map(|z| z.re);
    let kind = if d.kind == GeneratorKind::DMu { GeneratorKind::DEpsMu } else { GeneratorKind::Custom };
    SpGenerator { s: conj, kind, a: None }
}

/// `det f(M)` convenience for the kernel prefactors.
pub fn det_of(kind: MatFn, m: &CMat) -> Result<Complex64> {
    Ok(det_c(&matrix_function(kind, m)?))
}
