//! Gaussian kernels of the slice propagators: real-time Schrödinger kernels,
//! complex-time oscillator kernels, their domains, closed-form twisted
//! composition, and envelope checks for the damped kernels.

use crate::error::{Error, Result};
use crate::hardy::weighted_sup;
use crate::linalg::{
    c, complexify, csqrt, det_c, eigenvalues, eigenvalues_c, inverse_c, j_std, max_abs_c, smallest_singular, sym_defect_c,
    symmetrize_c, CMat, RMat,
};
use crate::symplectic::{generator, matrix_function, signature_count, GeneratorKind, MatFn, SpGenerator, SymplecticFrame};
use crate::twisted::{sample, FieldSpace, Grid, SampledField, TwistForm};
use num_complex::Complex64;
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coords {
    SymplecticZ,
    OriginalX,
}

/// `k(z) = prefactor * exp(-(i pi / 2) z^T Q z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKernel {
    pub prefactor: Complex64,
    pub q: CMat,
    pub coords: Coords,
}

impl GaussianKernel {
    pub fn new(prefactor: Complex64, q: CMat, coords: Coords) -> Self {
        Self { prefactor, q, coords }
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn value(&self, z: &[f64]) -> Complex64 {
        let m = z.len();
        let mut quad = c(0.0, 0.0);
        for i in 0..m {
            if z[i] == 0.0 {
                continue;
            }
            let mut row = c(0.0, 0.0);
            for j in 0..m {
                row += self.q[(i, j)] * z[j];
            }
            quad += row * z[i];
        }
        self.prefactor * (c(0.0, -PI / 2.0) * quad).exp()
    }

    pub fn sample(&self, grid: &Grid, space: FieldSpace) -> SampledField {
        sample(|z| self.value(z), grid, space)
    }

    /// Re-expresses a `z`-kernel in `x = R z`: `Q_x = R^{-T} Q_z R^{-1}`.
    pub fn to_original(&self, frame: &SymplecticFrame) -> GaussianKernel {
        match self.coords {
            Coords::OriginalX => self.clone(),
            Coords::SymplecticZ => {
                let ri = complexify(&frame.r_inv);
                GaussianKernel::new(self.prefactor, symmetrize_c(&(ri.transpose() * &self.q * ri)), Coords::OriginalX)
            }
        }
    }

    pub fn to_symplectic(&self, frame: &SymplecticFrame) -> GaussianKernel {
        match self.coords {
            Coords::SymplecticZ => self.clone(),
            Coords::OriginalX => {
                let r = complexify(&frame.r);
                GaussianKernel::new(self.prefactor, symmetrize_c(&(r.transpose() * &self.q * r)), Coords::SymplecticZ)
            }
        }
    }

    /// CSV dump: header line, prefactor, then `Q` row-major as `re,im` pairs.
    pub fn to_csv(&self, parameter: &str, mu: &[f64]) -> String {
        let coords = match self.coords {
            Coords::SymplecticZ => "symplectic_z",
            Coords::OriginalX => "original_x",
        };
        let mu: Vec<String> = mu.iter().map(|v| format!("{v:e}")).collect();
        let mut out = format!("# coords={coords},m={},param={parameter},mu={}\n", self.dim(), mu.join(";"));
        out.push_str(&format!("{:e},{:e}\n", self.prefactor.re, self.prefactor.im));
        for i in 0..self.dim() {
            let row: Vec<String> = (0..self.dim()).map(|j| format!("{:e},{:e}", self.q[(i, j)].re, self.q[(i, j)].im)).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Times where `det sinh(tS) != 0`, together with the zeros of `det sinh(tS/2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelDomain {
    pub kappa: f64,
    pub singular_times: Vec<f64>,
    /// `S` itself is singular; no kernel exists.
    pub degenerate: bool,
}

pub fn kernel_domain(s: &SpGenerator, t_max: f64) -> KernelDomain {
    let ev = eigenvalues(&s.s);
    let scale = ev.iter().fold(0.0_f64, |a, z| a.max(z.norm())).max(1e-300);
    let degenerate = ev.iter().any(|z| z.norm() <= 1e-10 * scale);
    // sinh(t lambda) vanishes only on the imaginary axis, first at t = pi / |Im lambda|.
    let mut freqs: Vec<f64> = ev
        .iter()
        .filter(|z| z.norm() > 1e-10 * scale && z.re.abs() <= 1e-10 * scale)
        .map(|z| z.im.abs())
        .collect();
    freqs.sort_by(|a, b| a.total_cmp(b));
    freqs.dedup_by(|a, b| (*a - *b).abs() <= 1e-10 * scale);
    let kappa = freqs.iter().map(|w| PI / w).fold(t_max, f64::min);
    let mut singular_times: Vec<f64> = Vec::new();
    for w in &freqs {
        let mut k = 1.0;
        while 2.0 * PI * k / w <= t_max && singular_times.len() < 10_000 {
            singular_times.push(2.0 * PI * k / w);
            k += 1.0;
        }
    }
    singular_times.sort_by(|a, b| a.total_cmp(b));
    KernelDomain { kappa, singular_times, degenerate }
}

fn check_generator(s: &SpGenerator, t: f64) -> Result<()> {
    let det = s.s.determinant();
    let dom = kernel_domain(s, f64::INFINITY);
    if dom.degenerate {
        return Err(Error::DegenerateGenerator { det: det.abs() });
    }
    if t == 0.0 || t.abs() >= dom.kappa {
        return Err(Error::OutsideDomain { t, kappa: dom.kappa });
    }
    Ok(())
}

/// Prefactor and `J coth(tS/2)` of the real-time kernel for the form `j`.
fn real_time_kernel(t: f64, s: &RMat, j: &RMat) -> Result<(Complex64, CMat, i32, Complex64)> {
    let m = s.nrows();
    let n = m / 2;
    let js = j * s;
    let sig = signature_count(&((&js + js.transpose()) * 0.5))?;
    let half = complexify(&(s * (t / 2.0)));
    let sinh = matrix_function(MatFn::Sinh, &half)?;
    let det = det_c(&sinh);
    let coth = matrix_function(MatFn::Coth, &half)?;
    let q = complexify(j) * coth;
    let defect = sym_defect_c(&q);
    if defect > 1e-8 {
        return Err(Error::NotSymmetric(defect));
    }
    let phase = Complex64::cis(-PI / 4.0 * sig.k as f64 * t.signum());
    let pref = phase / (2f64.powi(n as i32) * det.norm().sqrt());
    Ok((pref, symmetrize_c(&q), sig.k, det))
}

/// Real-time kernel in symplectic coordinates for `S` in `sp(n)`.
pub fn schrodinger_kernel_sympl(t: f64, s: &SpGenerator) -> Result<GaussianKernel> {
    let m = s.dim();
    if m % 2 == 1 {
        return Err(Error::OddDimension(m));
    }
    let d = s.sp_defect(None);
    if d > 1e-8 {
        return Err(Error::InvalidInput(format!("generator is not in sp(n) for the standard form (defect {d:.2e})")));
    }
    check_generator(s, t)?;
    let (pref, q, _, _) = real_time_kernel(t, &s.s, &j_std(m))?;
    Ok(GaussianKernel::new(pref, q, Coords::SymplecticZ))
}

/// Real-time kernel in the original coordinates, built from `S_mu = -A J_mu`.
/// The signature, determinant and quadratic-form identities linking it to the
/// symplectic version are checked before returning.
pub fn schrodinger_kernel_orig(t: f64, a: &RMat, frame: &SymplecticFrame) -> Result<GaussianKernel> {
    let s_mu = generator(a, frame, GeneratorKind::SMu)?;
    check_generator(&s_mu, t)?;
    let (pref, q, k_mu, det_mu) = real_time_kernel(t, &s_mu.s, &frame.jmu)?;
    let s_of = generator(a, frame, GeneratorKind::SOfMu)?;
    let (_, q_z, k_z, det_z) = real_time_kernel(t, &s_of.s, &frame.jstd)?;
    if k_mu != k_z {
        return Err(Error::IdentityCheck(format!("signatures differ: {k_mu} vs {k_z}")));
    }
    if (det_mu - det_z).norm() > 1e-9 * det_mu.norm().max(1.0) {
        return Err(Error::IdentityCheck(format!("det sinh differs: {det_mu} vs {det_z}")));
    }
    let r = complexify(&frame.r);
    let pulled = r.transpose() * &q * &r;
    if max_abs_c(&(&pulled - &q_z)) > 1e-9 * max_abs_c(&q_z).max(1.0) {
        return Err(Error::IdentityCheck("R^T J_mu coth R differs from J coth(tS(mu)/2)".into()));
    }
    Ok(GaussianKernel::new(pref, q, Coords::OriginalX))
}

/// `sqrt(sgn(det D) det sinh(tau D / 2))` continued along `sigma tau`, `sigma` in `(0, 1]`.
fn tracked_sqrt(tau: Complex64, d: &RMat) -> Result<Complex64> {
    let m = d.nrows();
    let n = (m / 2) as i32;
    let det_d = d.determinant();
    let sgn = det_d.signum();
    let f = |sigma: f64| -> Result<Complex64> {
        let half = complexify(d) * (tau * (sigma / 2.0));
        let sinh = matrix_function(MatFn::Sinh, &half)?;
        Ok(det_c(&sinh) * sgn / sigma.powi(2 * n))
    };
    let start = (tau / 2.0).powi(n) * det_d.abs().sqrt();
    let mut steps = 64usize;
    'refine: while steps <= 1 << 14 {
        let mut r = start;
        for k in 1..=steps {
            let w = f(k as f64 / steps as f64)?;
            if w.norm() <= 1e-13 * start.norm().powi(2).max(1e-300) {
                return Err(Error::BranchTrackingFailed(format!(
                    "det sinh(sigma tau D / 2) vanishes near sigma = {}",
                    k as f64 / steps as f64
                )));
            }
            let root = csqrt(w);
            let (d1, d2) = ((root - r).norm(), (root + r).norm());
            if d1.min(d2) >= 0.5 * d1.max(d2) {
                steps *= 2;
                continue 'refine;
            }
            r = if d1 <= d2 { root } else { -root };
        }
        return Ok(r);
    }
    Err(Error::BranchTrackingFailed("subdivision cap reached".into()))
}

/// Oscillator-semigroup kernel for `e^{(i tau / 4 pi) Delta_D}`, `Im tau >= 0`,
/// in symplectic coordinates. The square root of `det sinh(tau D / 2)` is
/// continued from `tau -> 0+`, and the signature phase `e^{-i pi k(JD)/4}` makes
/// the kernel agree with [`schrodinger_kernel_sympl`] on the real axis.
pub fn oscillator_kernel(tau: Complex64, d: &SpGenerator) -> Result<GaussianKernel> {
    if tau.im < 0.0 {
        return Err(Error::InvalidInput(format!("Im tau must be nonnegative, got {tau}")));
    }
    if tau.im == 0.0 {
        return schrodinger_kernel_sympl(tau.re, d);
    }
    let m = d.dim();
    if m % 2 == 1 {
        return Err(Error::OddDimension(m));
    }
    let det_d = d.s.determinant();
    if kernel_domain(d, 1.0).degenerate {
        return Err(Error::DegenerateGenerator { det: det_d.abs() });
    }
    let j = j_std(m);
    let jd = &j * &d.s;
    let sig = signature_count(&((&jd + jd.transpose()) * 0.5))?;
    let root = tracked_sqrt(tau, &d.s)?;
    let half = complexify(&d.s) * (tau / 2.0);
    let coth = matrix_function(MatFn::Coth, &half)?;
    let q = complexify(&j) * coth;
    let defect = sym_defect_c(&q);
    if defect > 1e-8 {
        return Err(Error::NotSymmetric(defect));
    }
    let pref = Complex64::cis(-PI / 4.0 * sig.k as f64) / (root * 2f64.powi((m / 2) as i32));
    Ok(GaussianKernel::new(pref, symmetrize_c(&q), Coords::SymplecticZ))
}

/// Prefactor and quadratic form of `k1 x_J k2` for a given complex `P`
/// correction `-(2 i eps / pi) I`.
fn compose_at(k1: &GaussianKernel, k2: &GaussianKernel, form: &TwistForm, eps: f64) -> Result<(Complex64, CMat)> {
    let m = k1.dim();
    let j = complexify(&form.j);
    let p = &k1.q + &k2.q - CMat::identity(m, m) * c(0.0, 2.0 * eps / PI);
    let pinv = inverse_c(&p).ok_or(Error::NonInvertibleMap)?;
    let q3 = symmetrize_c(&(&k1.q - (&k1.q - &j) * pinv * (&k1.q + &j)));
    let ev = eigenvalues_c(&(&p * c(0.0, PI)));
    let mut gauss = c((2.0 * PI).powf(m as f64 / 2.0), 0.0);
    for lam in ev {
        if lam.norm() == 0.0 {
            return Err(Error::NonInvertibleMap);
        }
        gauss /= csqrt(lam);
    }
    Ok((k1.prefactor * k2.prefactor * form.measure * gauss, q3))
}

/// Kernel of `k1 x_J k2` (twist `e^{-i pi x^T J y}`, measure factor from `form`).
/// When the combined form has no strictly damped part the composition is taken
/// as the limit of `e^{-eps |y|^2}`-damped integrals, Richardson-extrapolated.
pub fn gaussian_twisted_compose(k1: &GaussianKernel, k2: &GaussianKernel, form: &TwistForm) -> Result<GaussianKernel> {
    if k1.coords != k2.coords {
        return Err(Error::InvalidInput("kernels are in different coordinates".into()));
    }
    if k1.dim() != k2.dim() || form.j.nrows() != k1.dim() {
        return Err(Error::DimensionMismatch("kernel and form dimensions differ".into()));
    }
    let im_p = (&k1.q + &k2.q).map(|z| z.im);
    let damped = smallest_singular(&im_p) > 0.0 && crate::linalg::sym_eigenvalues(&im_p).last().copied().unwrap_or(0.0) < 0.0;
    if damped {
        let (pref, q) = compose_at(k1, k2, form, 0.0)?;
        return Ok(GaussianKernel::new(pref, q, k1.coords));
    }
    let xs: Vec<(Complex64, CMat)> =
        [1e-2, 5e-3, 2.5e-3].iter().map(|&e| compose_at(k1, k2, form, e)).collect::<Result<_>>()?;
    let rich = |a: &(Complex64, CMat), b: &(Complex64, CMat)| (b.0 * 2.0 - a.0, &b.1 * c(2.0, 0.0) - &a.1);
    let r1 = rich(&xs[0], &xs[1]);
    let r2 = rich(&xs[1], &xs[2]);
    let pref = (r2.0 * 4.0 - r1.0) / 3.0;
    let q = (&r2.1 * c(4.0, 0.0) - &r1.1) / c(3.0, 0.0);
    let spread = ((r2.0 - r1.0).norm() / pref.norm().max(1e-300)).max(max_abs_c(&(&r2.1 - &r1.1)) / max_abs_c(&q).max(1.0));
    if !spread.is_finite() || spread > 1e-2 {
        return Err(Error::NonConvergent { spread });
    }
    Ok(GaussianKernel::new(pref, symmetrize_c(&q), k1.coords))
}

/// Result of checking `|Gamma_tau(z)| <= C (eps'|mu|)^{-n} e^{-|R z|^2 / 4 eps}` for
/// `tau = 4 pi T eps' (sigma + i)` over sampled `sigma`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelEnvelope {
    pub eps: f64,
    pub eps_prime: f64,
    /// Fitted constant (max ratio over the grid).
    pub c_fit: f64,
    /// Ratio of the full-box fit to the inner-region fit.
    pub growth: f64,
    pub passed: bool,
}

/// z-grid on which the weight `e^{|Rz|^2 / 4 eps}` exceeds `1e13` at the box edge.
pub fn envelope_grid(eps: f64, frame: &SymplecticFrame, points: usize) -> Result<Grid> {
    let lo = smallest_singular(&frame.r);
    Grid::uniform(frame.m(), (120.0 * eps).sqrt() / lo, points)
}

pub fn oscillator_envelope(
    t_big: f64,
    eps: f64,
    eps_prime: f64,
    d: &SpGenerator,
    frame: &SymplecticFrame,
    grid: &Grid,
    sigmas: &[f64],
    ceiling: f64,
) -> Result<KernelEnvelope> {
    let n = (frame.m() / 2) as i32;
    let scale = (eps_prime * frame.mu_norm()).powi(n);
    let inner = grid.inner_half_mask();
    let weights: Vec<f64> = (0..grid.len())
        .map(|i| {
            let z = nalgebra::DVector::from_vec(grid.point(i));
            ((&frame.r * z).norm_squared() / (4.0 * eps)).exp()
        })
        .collect();
    let mut c_fit = 0.0_f64;
    let mut growth = 1.0_f64;
    for &sigma in sigmas {
        let tau = c(sigma, 1.0) * (4.0 * PI * t_big * eps_prime);
        let k = oscillator_kernel(tau, d)?;
        let mags: Vec<f64> = (0..grid.len()).map(|i| k.value(&grid.point(i)).norm() * scale).collect();
        let sup = weighted_sup(&mags, &weights, &inner);
        c_fit = c_fit.max(sup.full);
        growth = growth.max(sup.growth());
    }
    let passed = c_fit.is_finite() && c_fit <= ceiling && growth <= 2.0;
    Ok(KernelEnvelope { eps, eps_prime, c_fit, growth, passed })
}

/// Largest `eps' = eps 2^{-k}`, `k = 1..=12`, for which the envelope check passes
/// for every supplied `(frame, generator)` pair.
pub fn epsilon0_sweep(
    t_big: f64,
    eps: f64,
    gens: &[(SymplecticFrame, SpGenerator)],
    sigmas: &[f64],
    points: usize,
    ceiling: f64,
) -> Result<Option<KernelEnvelope>> {
    for k in 1..=12 {
        let eps_prime = eps * 0.5f64.powi(k);
        let mut worst: Option<KernelEnvelope> = None;
        let mut ok = true;
        for (frame, d) in gens {
            let grid = envelope_grid(eps, frame, points)?;
            let env = oscillator_envelope(t_big, eps, eps_prime, d, frame, &grid, sigmas, ceiling)?;
            ok &= env.passed;
            if worst.as_ref().map_or(true, |w| env.c_fit > w.c_fit) {
                worst = Some(env);
            }
        }
        if ok {
            return Ok(worst);
        }
    }
    Ok(None)
}
