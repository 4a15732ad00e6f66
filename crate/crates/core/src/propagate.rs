//! Schrödinger, heat and regularized propagators on slices and on the group,
//! the free Euclidean propagator, and the finite-difference exponential oracle.
//!
//! Times in this module are physical: `propagate_mu` applies `e^{i t L_A^mu}`.
//! The slice kernels are evaluated at `4 pi t`.

use crate::error::{Error, Result};
use crate::fourier::{fourier_transform, map_axis};
use crate::kernels::{
    oscillator_envelope, oscillator_kernel, schrodinger_kernel_orig, schrodinger_kernel_sympl, envelope_grid,
    kernel_domain, GaussianKernel, KernelEnvelope,
};
use crate::lie::LieAlgebra2Step;
use crate::linalg::{c, complexify, expm, inverse, j_std, smallest_singular, sym_defect, CMat, RMat};
use crate::symplectic::{ad_conjugate, generator, matrix_function, sp_combine, GeneratorKind, MatFn, SpGenerator, SymplecticFrame};
use crate::twisted::{
    apply_kernel, central_inversion, operator_matrix, slice_group_field, Axis, FieldSpace, Grid, MuGrid, QuadratureOptions,
    SampledField, SliceSet, SparseOperator, TwistForm, DEFAULT_NODE_CAP,
};
use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;

/// Slice kernel parameter for physical time `t`.
pub fn kernel_time(t: f64) -> f64 {
    4.0 * PI * t
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagatorSpec {
    pub a: RMat,
    /// Physical time of `e^{i t L_A}`.
    pub t: f64,
    /// Complex oscillator time, when used.
    pub tau: Option<Complex64>,
    /// Experiment time `T`.
    pub t_big: f64,
}

impl PropagatorSpec {
    pub fn new(a: RMat, t: f64) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::DimensionMismatch("A must be square".into()));
        }
        let d = sym_defect(&a);
        if d > 1e-12 {
            return Err(Error::NotSymmetric(d));
        }
        Ok(Self { a, t, tau: None, t_big: t })
    }

    pub fn with_time(&self, t: f64) -> Self {
        Self { t, ..self.clone() }
    }
}

/// `0 < eps' < eps0 < eps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizationSchedule {
    pub eps: f64,
    pub eps_prime: f64,
    pub eps0: f64,
}

impl RegularizationSchedule {
    pub fn new(eps: f64, eps_prime: f64, eps0: f64) -> Result<Self> {
        if !(0.0 < eps_prime && eps_prime < eps0 && eps0 < eps) {
            return Err(Error::InvalidInput(format!(
                "schedule needs 0 < eps' < eps0 < eps, got eps = {eps}, eps' = {eps_prime}, eps0 = {eps0}"
            )));
        }
        Ok(Self { eps, eps_prime, eps0 })
    }
}

/// `e^{i t L_A^mu} f^mu` as `f^mu x_mu gamma_{4 pi t, mu}`.
pub fn propagate_mu(f: &SampledField, spec: &PropagatorSpec, frame: &SymplecticFrame) -> Result<SampledField> {
    propagate_mu_with(f, spec, frame, QuadratureOptions::default())
}

pub fn propagate_mu_with(
    f: &SampledField,
    spec: &PropagatorSpec,
    frame: &SymplecticFrame,
    opts: QuadratureOptions,
) -> Result<SampledField> {
    if spec.t == 0.0 {
        return Ok(f.clone());
    }
    let k = schrodinger_kernel_orig(kernel_time(spec.t), &spec.a, frame)?;
    apply_kernel(f, &k, &TwistForm::of_frame(frame), opts)
}

/// Number of equal substeps keeping each slice kernel time inside the domain.
pub fn substeps_needed(spec: &PropagatorSpec, frame: &SymplecticFrame) -> Result<usize> {
    let s = generator(&spec.a, frame, GeneratorKind::SMu)?;
    let dom = kernel_domain(&s, f64::INFINITY);
    if dom.degenerate {
        return Err(Error::DegenerateGenerator { det: s.s.determinant().abs() });
    }
    let tk = kernel_time(spec.t).abs();
    Ok(((tk / (0.9 * dom.kappa)).floor() as usize + 1).max(1))
}

/// `J_mu (coth(t S_mu / 2) - I)` for kernel time `t`.
pub fn fourier_map(t_kernel: f64, a: &RMat, frame: &SymplecticFrame) -> Result<RMat> {
    let s = generator(a, frame, GeneratorKind::SMu)?;
    let m = frame.m();
    let coth = matrix_function(MatFn::Coth, &complexify(&(&s.s * (t_kernel / 2.0))))?;
    let map = complexify(&frame.jmu) * (coth - CMat::identity(m, m));
    Ok(map.map(|z| z.re))
}

/// `|| (J_mu (coth(t S_mu/2) - I))^{-1} + (t/2) A ||`, which is `O(|mu|)`.
pub fn fourier_map_residual(t_kernel: f64, a: &RMat, frame: &SymplecticFrame) -> Result<f64> {
    let map = fourier_map(t_kernel, a, frame)?;
    let inv = inverse(&map).ok_or(Error::NonInvertibleMap)?;
    Ok((inv + a * (t_kernel / 2.0)).norm())
}

/// Evaluation of the Euclidean Fourier transform at off-grid frequencies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FourierEval {
    /// FFT on a zero-padded box, multilinear interpolation in frequency.
    Interpolated { pad: usize },
    /// Direct trapezoidal sum at each requested frequency, on the input
    /// spectrally upsampled by `oversample` so the chirped integrand is resolved.
    Exact { oversample: usize },
}

impl Default for FourierEval {
    fn default() -> Self {
        FourierEval::Interpolated { pad: 4 }
    }
}

fn multilinear(field: &SampledField, p: &[f64]) -> Complex64 {
    let d = p.len();
    let mut base = vec![0usize; d];
    let mut frac = vec![0.0; d];
    for a in 0..d {
        let ax = &field.grid.axes[a];
        let s = (p[a] + ax.half_width) / ax.spacing();
        if s < 0.0 || s >= (ax.points - 1) as f64 {
            return c(0.0, 0.0);
        }
        base[a] = s.floor() as usize;
        frac[a] = s - s.floor();
    }
    let mut acc = c(0.0, 0.0);
    for corner in 0..(1usize << d) {
        let mut w = 1.0;
        let mut idx = base.clone();
        for a in 0..d {
            if corner >> a & 1 == 1 {
                idx[a] += 1;
                w *= frac[a];
            } else {
                w *= 1.0 - frac[a];
            }
        }
        acc += field.values[field.grid.flat_index(&idx)] * w;
    }
    acc
}

/// The propagator evaluated as chirp, Euclidean Fourier transform, chirp and a
/// linear change of frequency variable.
pub fn fourier_form_mu(f: &SampledField, spec: &PropagatorSpec, frame: &SymplecticFrame) -> Result<SampledField> {
    fourier_form_mu_with(f, spec, frame, FourierEval::default())
}

pub fn fourier_form_mu_with(
    f: &SampledField,
    spec: &PropagatorSpec,
    frame: &SymplecticFrame,
    eval: FourierEval,
) -> Result<SampledField> {
    if spec.t == 0.0 {
        return Ok(f.clone());
    }
    let tk = kernel_time(spec.t);
    let k = schrodinger_kernel_orig(tk, &spec.a, frame)?;
    let map = fourier_map(tk, &spec.a, frame)?;
    if smallest_singular(&map) <= 1e-12 * crate::linalg::spectral_norm(&map).max(1.0) {
        return Err(Error::NonInvertibleMap);
    }
    let grid = &f.grid;
    let d = grid.dim();
    let chirp = GaussianKernel::new(c(1.0, 0.0), k.q.clone(), k.coords);
    let src = match eval {
        FourierEval::Exact { oversample } => crate::fourier::upsample(f, oversample.max(1)),
        FourierEval::Interpolated { .. } => f.clone(),
    };
    let ft_input = src.with_values(
        src.values.iter().enumerate().map(|(i, v)| v * chirp.value(&src.grid.point(i))).collect(),
    );
    let freq = |x: &[f64]| -> Vec<f64> {
        (0..d).map(|a| -PI * (0..d).map(|b| map[(a, b)] * x[b]).sum::<f64>()).collect()
    };
    let transform: Box<dyn Fn(&[f64]) -> Complex64 + Sync> = match eval {
        FourierEval::Interpolated { pad } => {
            let pad = pad.max(1);
            let big = Grid {
                axes: grid
                    .axes
                    .iter()
                    .map(|a| Axis { half_width: a.half_width * pad as f64, points: a.points * pad })
                    .collect(),
            };
            let offs: Vec<usize> = grid.axes.iter().map(|a| a.points * (pad - 1) / 2).collect();
            let mut vals = vec![c(0.0, 0.0); big.len()];
            for i in 0..grid.len() {
                let mi = grid.multi_index(i);
                let bi: Vec<usize> = mi.iter().zip(&offs).map(|(k, o)| k + o).collect();
                vals[big.flat_index(&bi)] = ft_input.values[i];
            }
            let spectrum = fourier_transform(&SampledField { grid: big, values: vals, space: FieldSpace::Euclidean });
            Box::new(move |xi: &[f64]| multilinear(&spectrum, xi))
        }
        FourierEval::Exact { .. } => {
            let g = src.grid.clone();
            let nodes: Vec<Vec<f64>> = g.axes.iter().map(|a| a.nodes()).collect();
            let cell = g.cell_volume();
            let inp = ft_input.values.clone();
            Box::new(move |xi: &[f64]| {
                let ph: Vec<Vec<Complex64>> =
                    (0..d).map(|a| nodes[a].iter().map(|y| Complex64::cis(-xi[a] * y)).collect()).collect();
                let mut acc = c(0.0, 0.0);
                let last = d - 1;
                let row_len = g.axes[last].points;
                for (r, row) in inp.chunks(row_len).enumerate() {
                    let mi = g.multi_index(r * row_len);
                    let mut pre = c(1.0, 0.0);
                    for a in 0..last {
                        pre *= ph[a][mi[a]];
                    }
                    let s: Complex64 = row.iter().zip(&ph[last]).map(|(v, p)| v * p).sum();
                    acc += pre * s;
                }
                acc * cell
            })
        }
    };
    let measure = frame.pf_abs();
    let values = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let x = grid.point(i);
            k.value(&x) * transform(&freq(&x)) * measure
        })
        .collect();
    Ok(f.with_values(values))
}

/// `e^{z M} v` by a scaled Taylor series (`||z M / s||_1 <= 2` per step).
pub fn expm_action(op: &SparseOperator, v: &[Complex64], z: Complex64) -> Vec<Complex64> {
    let norm = z.norm() * op.norm1();
    let steps = ((norm / 2.0).ceil() as usize).max(1);
    let zs = z / steps as f64;
    let mut out = v.to_vec();
    let vnorm = |x: &[Complex64]| x.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    for _ in 0..steps {
        let mut term = out.clone();
        let mut acc = out.clone();
        let mut small = 0;
        for k in 1..80 {
            term = op.apply(&term);
            let fac = zs / k as f64;
            term.iter_mut().for_each(|x| *x *= fac);
            acc.iter_mut().zip(&term).for_each(|(a, t)| *a += t);
            if vnorm(&term) <= 1e-16 * vnorm(&acc) {
                small += 1;
                if small == 2 {
                    break;
                }
            } else {
                small = 0;
            }
        }
        out = acc;
    }
    out
}

/// Brute-force `e^{i t M} f` with `M` the finite-difference `L_A^mu`. Grids up to
/// 256 nodes use a dense Padé exponential, larger ones the Taylor action.
pub fn oracle_expm(f: &SampledField, spec: &PropagatorSpec, frame: &SymplecticFrame) -> Result<SampledField> {
    oracle_expm_with_form(f, &spec.a, spec.t, &frame.jmu, DEFAULT_NODE_CAP)
}

pub fn oracle_expm_with_form(f: &SampledField, a: &RMat, t: f64, j: &RMat, cap: usize) -> Result<SampledField> {
    let op = operator_matrix(a, j, &f.grid, cap)?;
    if t == 0.0 {
        return Ok(f.clone());
    }
    let z = c(0.0, t);
    let values = if op.n <= 256 {
        let e = expm(&(op.to_dense() * z));
        let v = nalgebra::DVector::from_column_slice(&f.values);
        (e * v).as_slice().to_vec()
    } else {
        expm_action(&op, &f.values, z)
    };
    Ok(f.with_values(values))
}

/// How each slice is propagated inside [`propagate_group_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SliceMethod {
    Kernel,
    Oracle,
}

/// Propagates every included slice of `set`; errors carry the slice's `mu`.
pub fn propagate_slices(set: &SliceSet, spec: &PropagatorSpec, method: SliceMethod) -> Result<SliceSet> {
    let nodes = set
        .nodes
        .par_iter()
        .map(|node| {
            let (Some(frame), Some(field)) = (&node.frame, &node.field) else {
                return Ok(node.clone());
            };
            let wrap = |e: Error| Error::Slice { mu: node.mu.clone(), source: Box::new(e) };
            let out = match method {
                SliceMethod::Oracle => oracle_expm(field, spec, frame).map_err(wrap)?,
                SliceMethod::Kernel => {
                    let k = substeps_needed(spec, frame).map_err(wrap)?;
                    let step = spec.with_time(spec.t / k as f64);
                    let mut cur = field.clone();
                    for _ in 0..k {
                        cur = propagate_mu(&cur, &step, frame).map_err(wrap)?;
                    }
                    cur
                }
            };
            let mut n = node.clone();
            n.field = Some(out);
            Ok(n)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SliceSet { mu_grid: set.mu_grid.clone(), nodes })
}

/// `e^{i t L_A} f` on the group through the slice decomposition.
pub fn propagate_group(
    f: &SampledField,
    spec: &PropagatorSpec,
    alg: &LieAlgebra2Step,
    mu_grid: &MuGrid,
) -> Result<SampledField> {
    propagate_group_with(f, spec, alg, mu_grid, SliceMethod::Kernel)
}

pub fn propagate_group_with(
    f: &SampledField,
    spec: &PropagatorSpec,
    alg: &LieAlgebra2Step,
    mu_grid: &MuGrid,
    method: SliceMethod,
) -> Result<SampledField> {
    let set = slice_group_field(f, alg, mu_grid)?;
    let out = propagate_slices(&set, spec, method)?;
    central_inversion(&out, &f.grid.sub(alg.m()..f.grid.dim()))
}

/// Euclidean `e^{i t Delta}` as the Fourier multiplier `e^{-i t |xi|^2}`.
pub fn free_propagator(f: &SampledField, t: f64) -> SampledField {
    if t == 0.0 {
        return f.clone();
    }
    let fh = fourier_transform(f);
    let scaled = fh.with_values(
        fh.values
            .iter()
            .enumerate()
            .map(|(k, v)| {
                let xi = fh.grid.point(k);
                v * Complex64::cis(-t * xi.iter().map(|a| a * a).sum::<f64>())
            })
            .collect(),
    );
    let mut out = crate::fourier::inverse_fourier_transform(&scaled, &f.grid);
    out.space = f.space.clone();
    out
}

/// The same propagator as `e^{i|x|^2/4t} (4 pi i t)^{-n/2} g^(x / 2t)` with
/// `g = e^{i|y|^2/4t} f`; the transform is summed directly, axis by axis.
pub fn free_propagator_chirp(f: &SampledField, t: f64) -> SampledField {
    if t == 0.0 {
        return f.clone();
    }
    let grid = &f.grid;
    let n = grid.dim();
    let g: Vec<Complex64> = (0..grid.len())
        .map(|i| {
            let y = grid.point(i);
            f.values[i] * Complex64::cis(y.iter().map(|a| a * a).sum::<f64>() / (4.0 * t))
        })
        .collect();
    let shape = grid.shape();
    let mut values = g;
    for (a, ax) in grid.axes.iter().enumerate() {
        let nodes = ax.nodes();
        let h = ax.spacing();
        let table: Vec<Vec<Complex64>> = nodes
            .iter()
            .map(|x| nodes.iter().map(|y| Complex64::cis(-x * y / (2.0 * t)) * h).collect())
            .collect();
        values = map_axis(&values, &shape, a, ax.points, |line| {
            table.iter().map(|row| row.iter().zip(line).map(|(e, v)| e * v).sum()).collect()
        });
    }
    let root = (4.0 * PI * t.abs()).sqrt() * Complex64::cis(PI / 4.0 * t.signum());
    let norm = root.powi(n as i32).inv();
    let values = values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let x = grid.point(i);
            v * norm * Complex64::cis(x.iter().map(|a| a * a).sum::<f64>() / (4.0 * t))
        })
        .collect();
    f.with_values(values)
}

/// Slice heat kernel `h_s^mu` (kernel of `e^{s L^mu}`, `A = I`) in original
/// coordinates: the oscillator kernel at `tau = 4 pi i s` with `D(mu)`.
pub fn heat_kernel_mu(s: f64, frame: &SymplecticFrame) -> Result<GaussianKernel> {
    if !(s > 0.0) {
        return Err(Error::InvalidInput(format!("heat time must be positive, got {s}")));
    }
    let d = generator(&RMat::identity(frame.m(), frame.m()), frame, GeneratorKind::DMu)?;
    Ok(oscillator_kernel(c(0.0, 4.0 * PI * s), &d)?.to_original(frame))
}

/// Grids for sampling `h_s`: `L_x ~ 11 sqrt(s)`, `L_u ~ 12 s`, `mu` up to `4.8 / s`,
/// with the `mu` spacing small enough that the central period exceeds `2 L_u`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatBox {
    pub x_grid: Grid,
    pub u_grid: Grid,
    pub mu_grid: MuGrid,
}

impl HeatBox {
    /// `scale` multiplies every half-width (and the point counts), `1` or `2`.
    pub fn for_time(s: f64, m: usize, l: usize, scale: usize) -> Result<Self> {
        let sc = scale as f64;
        let x_grid = Grid::uniform(m, 11.0 * s.sqrt() * sc, 48 * scale)?;
        let u_grid = Grid::uniform(l, 12.0 * s * sc, 64 * scale)?;
        let mu_max = 4.8 / s;
        let dmu = 1.0 / (2.2 * 12.0 * s * sc);
        // An even node count keeps mu = 0 off the grid, so no node needs filling.
        let half = (mu_max / dmu).ceil() as usize;
        let mu_grid = MuGrid::new(vec![(half as f64 - 0.5) * dmu; l], vec![2 * half; l], 1e-12)?;
        Ok(Self { x_grid, u_grid, mu_grid })
    }
}

/// `h_s` on the group by central inversion of the slice kernels (real part).
pub fn heat_group(s: f64, alg: &LieAlgebra2Step, hb: &HeatBox) -> Result<SampledField> {
    let h = GaussianSlices::heat(s, alg, &hb.mu_grid)?.to_group(&hb.x_grid, &hb.u_grid)?;
    Ok(h.with_values(h.values.iter().map(|v| c(v.re, 0.0)).collect()))
}

/// Fitted constants of the two-sided Gaussian-exponential heat bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatBoundFit {
    pub s: f64,
    /// `max h s^{D/2} e^{|x|^2/4(1+eps)s} e^{|u|/(k_up s)}`.
    pub c_upper: f64,
    /// `min h s^{D/2} e^{|x|^2/4(1-eps)s} e^{k_lo |u|/s}`.
    pub c_lower: f64,
    pub mass: f64,
    /// Most negative value relative to the maximum.
    pub min_ratio: f64,
}

/// Fits over the nodes with `h >= 1e-9 max h`.
pub fn heat_bound_fit(h: &SampledField, s: f64, m: usize, eps: f64, k_up: f64, k_lo: f64) -> HeatBoundFit {
    let l = h.grid.dim() - m;
    let dd = (m + 2 * l) as f64;
    let mx = h.values.iter().fold(0.0_f64, |a, v| a.max(v.re));
    let mn = h.values.iter().fold(0.0_f64, |a, v| a.min(v.re));
    let sd = s.powf(dd / 2.0);
    let mut up = 0.0_f64;
    let mut lo = f64::INFINITY;
    for (i, v) in h.values.iter().enumerate() {
        if v.re < 1e-9 * mx {
            continue;
        }
        let p = h.grid.point(i);
        let x2: f64 = p[..m].iter().map(|a| a * a).sum();
        let un: f64 = p[m..].iter().map(|a| a * a).sum::<f64>().sqrt();
        up = up.max(v.re * sd * (x2 / (4.0 * (1.0 + eps) * s) + un / (k_up * s)).exp());
        lo = lo.min(v.re * sd * (x2 / (4.0 * (1.0 - eps) * s) + k_lo * un / s).exp());
    }
    let mass = h.values.iter().map(|v| v.re).sum::<f64>() * h.grid.cell_volume();
    HeatBoundFit { s, c_upper: up, c_lower: lo, mass, min_ratio: if mx > 0.0 { mn / mx } else { 0.0 } }
}

/// `S_eps'(mu) = log(e^{t eps' D} e^{t S}) / t` and
/// `D_eps'(mu) = e^{-t S_eps'} D e^{t S_eps'}` for kernel time `t`.
pub fn regularized_generators(
    t_kernel: f64,
    eps_prime: f64,
    a: &RMat,
    frame: &SymplecticFrame,
) -> Result<(SpGenerator, SpGenerator)> {
    let d = generator(&RMat::identity(frame.m(), frame.m()), frame, GeneratorKind::DMu)?;
    let s = generator(a, frame, GeneratorKind::SOfMu)?;
    let eps_d = SpGenerator::custom(&d.s * eps_prime);
    let s_eps = sp_combine(t_kernel, &eps_d, &s)?;
    let d_eps = ad_conjugate(t_kernel, &s_eps, &d);
    Ok((s_eps, d_eps))
}

/// `A^mu_eps'` in original coordinates: `R (S_eps' J) R^T`.
pub fn regularized_a(s_eps: &SpGenerator, frame: &SymplecticFrame) -> RMat {
    &frame.r * (&s_eps.s * j_std(frame.m())) * frame.r.transpose()
}

/// `f^mu_eps' = e^{-eps' T Delta_{D_eps'}} f^mu`, the damped data.
pub fn regularized_data(
    f: &SampledField,
    spec: &PropagatorSpec,
    eps_prime: f64,
    frame: &SymplecticFrame,
) -> Result<SampledField> {
    let tk = kernel_time(spec.t_big);
    let (_, d_eps) = regularized_generators(tk, eps_prime, &spec.a, frame)?;
    let k = oscillator_kernel(c(0.0, eps_prime * tk), &d_eps)?.to_original(frame);
    apply_kernel(f, &k, &TwistForm::of_frame(frame), QuadratureOptions::default())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorizationReport {
    pub mu: Vec<f64>,
    /// `||left - right|| / ||left||`.
    pub discrepancy: f64,
    /// The real-time factor of the left side used the finite-difference oracle.
    pub used_oracle: bool,
    /// Smallest singular value of `A^mu_eps'`.
    pub a_eps_min_singular: f64,
    pub envelope_damped: KernelEnvelope,
    pub envelope_conjugated: KernelEnvelope,
}

/// Both sides of `P_{t eps'(1+i)} T_t = e^{(it/4pi) Delta_{S_eps'}} e^{(i eps' (it)/4pi) Delta_{D_eps'}}`,
/// `t = 4 pi T`, applied to `f^mu`. Returns the left side and the report.
pub fn regularized_propagate(
    f: &SampledField,
    spec: &PropagatorSpec,
    sched: &RegularizationSchedule,
    frame: &SymplecticFrame,
) -> Result<(SampledField, FactorizationReport)> {
    let tk = kernel_time(spec.t_big);
    let ep = sched.eps_prime;
    let form = TwistForm::of_frame(frame);
    let opts = QuadratureOptions::default();
    let d = generator(&RMat::identity(frame.m(), frame.m()), frame, GeneratorKind::DMu)?;
    let real_spec = spec.with_time(spec.t_big);
    let (t_f, used_oracle) = match propagate_mu(f, &real_spec, frame) {
        Ok(v) => (v, false),
        Err(Error::DegenerateGenerator { .. }) => (oracle_expm(f, &real_spec, frame)?, true),
        Err(e) => return Err(e),
    };
    let damp = oscillator_kernel(c(1.0, 1.0) * (tk * ep), &d)?.to_original(frame);
    let left = apply_kernel(&t_f, &damp, &form, opts)?;

    let (s_eps, d_eps) = regularized_generators(tk, ep, &spec.a, frame)?;
    let inner = oscillator_kernel(c(0.0, ep * tk), &d_eps)?.to_original(frame);
    let outer = schrodinger_kernel_sympl(tk, &s_eps)?.to_original(frame);
    // The real-time factor alone chirps too fast for grid quadrature when
    // `A^mu_eps'` is nearly singular; its composite with the damped factor does not.
    let composite = crate::kernels::gaussian_twisted_compose(&inner, &outer, &form)?;
    let right = apply_kernel(f, &composite, &form, opts)?;

    let a_eps = regularized_a(&s_eps, frame);
    let grid = envelope_grid(sched.eps, frame, 32)?;
    let sigmas = [0.0, 0.5, 1.0];
    let envelope_damped = oscillator_envelope(spec.t_big, sched.eps, ep, &d, frame, &grid, &sigmas, 1e6)?;
    let envelope_conjugated = oscillator_envelope(spec.t_big, sched.eps, ep, &d_eps, frame, &grid, &[0.0], 1e6)?;
    let report = FactorizationReport {
        mu: frame.mu.clone(),
        discrepancy: right.rel_l2_error(&left),
        used_oracle,
        a_eps_min_singular: smallest_singular(&a_eps),
        envelope_damped,
        envelope_conjugated,
    };
    Ok((left, report))
}

/// Slice data that is Gaussian at every node: propagation and convolution are
/// carried out by closed-form kernel composition, and sampling is exact.
#[derive(Debug, Clone)]
pub struct GaussianSlices {
    pub mu_grid: MuGrid,
    /// Node metadata; `field` is unused.
    pub nodes: Vec<crate::twisted::SliceNode>,
    /// `x`-coordinate kernel per node, `None` on excluded nodes.
    pub kernels: Vec<Option<GaussianKernel>>,
}

impl GaussianSlices {
    /// Slices `h_s^mu` of the heat kernel.
    pub fn heat(s: f64, alg: &LieAlgebra2Step, mu_grid: &MuGrid) -> Result<Self> {
        let nodes = SliceSet::frames(alg, mu_grid)?;
        let kernels = nodes
            .par_iter()
            .map(|n| n.frame.as_ref().map(|fr| heat_kernel_mu(s, fr)).transpose())
            .collect::<Result<_>>()?;
        Ok(Self { mu_grid: mu_grid.clone(), nodes, kernels })
    }

    /// `e^{i t L_A}` applied slice-wise as `k x_mu gamma_{4 pi t / n}` repeated `n`
    /// times, `n` chosen per slice to stay inside the kernel domain.
    pub fn propagate(&self, spec: &PropagatorSpec) -> Result<Self> {
        let kernels = self
            .nodes
            .par_iter()
            .zip(&self.kernels)
            .map(|(n, k)| {
                let (Some(fr), Some(k)) = (&n.frame, k) else { return Ok(None) };
                if spec.t == 0.0 {
                    return Ok(Some(k.clone()));
                }
                let wrap = |e: Error| Error::Slice { mu: n.mu.clone(), source: Box::new(e) };
                let steps = substeps_needed(spec, fr).map_err(wrap)?;
                let gamma = schrodinger_kernel_orig(kernel_time(spec.t / steps as f64), &spec.a, fr).map_err(wrap)?;
                let form = TwistForm::of_frame(fr);
                let mut cur = k.clone();
                for _ in 0..steps {
                    cur = crate::kernels::gaussian_twisted_compose(&cur, &gamma, &form).map_err(wrap)?;
                }
                Ok(Some(cur))
            })
            .collect::<Result<_>>()?;
        Ok(Self { kernels, ..self.clone() })
    }

    /// Group convolution `f * g` as slice-wise twisted convolution.
    pub fn convolve(&self, other: &GaussianSlices) -> Result<Self> {
        if self.mu_grid != other.mu_grid {
            return Err(Error::GridMismatch);
        }
        let kernels = self
            .nodes
            .par_iter()
            .zip(self.kernels.par_iter().zip(&other.kernels))
            .map(|(n, (a, b))| match (&n.frame, a, b) {
                (Some(fr), Some(a), Some(b)) => crate::kernels::gaussian_twisted_compose(a, b, &TwistForm::of_frame(fr))
                    .map(Some)
                    .map_err(|e| Error::Slice { mu: n.mu.clone(), source: Box::new(e) }),
                _ => Ok(None),
            })
            .collect::<Result<_>>()?;
        Ok(Self { kernels, ..self.clone() })
    }

    /// Samples every slice on `x_grid`.
    pub fn slice_set(&self, x_grid: &Grid) -> SliceSet {
        let nodes = self
            .nodes
            .iter()
            .zip(&self.kernels)
            .map(|(n, k)| {
                let mut n = n.clone();
                n.field = k.as_ref().map(|k| k.sample(x_grid, FieldSpace::Slice(n.mu.clone())));
                n
            })
            .collect();
        SliceSet { mu_grid: self.mu_grid.clone(), nodes }
    }

    /// The group function by central inversion.
    pub fn to_group(&self, x_grid: &Grid, u_grid: &Grid) -> Result<SampledField> {
        central_inversion(&self.slice_set(x_grid), u_grid)
    }
}
