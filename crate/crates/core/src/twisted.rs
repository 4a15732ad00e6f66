//! Uniform grids and sampled fields, the partial Fourier transform in the central
//! variable and its inverse, twisted convolution, twisted vector fields and the
//! sparse discretisation of `L_A^mu`.

use crate::error::{Error, Result};
use crate::fourier::upsample;
use crate::kernels::GaussianKernel;
use crate::lie::{j_matrix, LieAlgebra2Step};
use crate::linalg::{c, j_std, spectral_norm, sym_eigenvalues, CMat, RMat};
use crate::symplectic::{build_frame, pfaffian, SymplecticFrame};
use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// One grid axis: nodes `-L + k h`, `h = 2L / N`, `k = 0..N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub half_width: f64,
    pub points: usize,
}

impl Axis {
    pub fn new(half_width: f64, points: usize) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidInput(format!("half-width must be positive, got {half_width}")));
        }
        if points == 0 || points % 2 == 1 {
            return Err(Error::InvalidInput(format!("point count must be even and positive, got {points}")));
        }
        Ok(Self { half_width, points })
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.points as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        -self.half_width + k as f64 * self.spacing()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.points).map(|k| self.node(k)).collect()
    }
}

/// Rectangular product grid; flat indices run with the last axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub axes: Vec<Axis>,
}

impl Grid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::InvalidInput("grid needs at least one axis".into()));
        }
        for a in &axes {
            Axis::new(a.half_width, a.points)?;
        }
        Ok(Self { axes })
    }

    pub fn uniform(dim: usize, half_width: f64, points: usize) -> Result<Self> {
        Self::new(vec![Axis::new(half_width, points)?; dim])
    }

    /// Grid over the group: `x` axes followed by `u` axes.
    pub fn group(x: &Grid, u: &Grid) -> Self {
        Self { axes: x.axes.iter().chain(&u.axes).cloned().collect() }
    }

    pub fn sub(&self, range: std::ops::Range<usize>) -> Grid {
        Grid { axes: self.axes[range].to_vec() }
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.points).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.points).collect()
    }

    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(|a| a.spacing()).product()
    }

    pub fn max_spacing(&self) -> f64 {
        self.axes.iter().map(|a| a.spacing()).fold(0.0, f64::max)
    }

    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for a in (0..self.dim()).rev() {
            out[a] = idx % self.axes[a].points;
            idx /= self.axes[a].points;
        }
        out
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.axes).fold(0, |acc, (&k, a)| acc * a.points + k)
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        self.multi_index(idx).iter().zip(&self.axes).map(|(&k, a)| a.node(k)).collect()
    }

    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.dim()];
        for a in (0..self.dim().saturating_sub(1)).rev() {
            s[a] = s[a + 1] * self.axes[a + 1].points;
        }
        s
    }

    /// The dual grid of [`crate::fourier::fourier_transform`]: half-width `pi / h`.
    pub fn frequency_grid(&self) -> Grid {
        Grid {
            axes: self
                .axes
                .iter()
                .map(|a| Axis { half_width: PI / a.spacing(), points: a.points })
                .collect(),
        }
    }

    /// Same spacing, twice the half-width.
    pub fn doubled(&self) -> Grid {
        Grid { axes: self.axes.iter().map(|a| Axis { half_width: 2.0 * a.half_width, points: 2 * a.points }).collect() }
    }

    /// Mask of the nodes inside the central half of the box.
    pub fn inner_half_mask(&self) -> Vec<bool> {
        (0..self.len())
            .map(|i| self.point(i).iter().zip(&self.axes).all(|(x, a)| x.abs() <= 0.5 * a.half_width))
            .collect()
    }
}

/// What a field lives on.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldSpace {
    /// A slice over `g1` at the central form `mu`.
    Slice(Vec<f64>),
    /// The group: the first `m` axes are `x`, the rest `u`.
    Group { m: usize },
    Euclidean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledField {
    pub grid: Grid,
    pub values: Vec<Complex64>,
    pub space: FieldSpace,
}

impl SampledField {
    pub fn zeros(grid: &Grid, space: FieldSpace) -> Self {
        Self { grid: grid.clone(), values: vec![ZERO; grid.len()], space }
    }

    pub fn with_values(&self, values: Vec<Complex64>) -> Self {
        Self { grid: self.grid.clone(), values, space: self.space.clone() }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// `(sum |f|^2 h^d)^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.cell_volume()).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.norm()))
    }

    pub fn inner(&self, other: &SampledField) -> Complex64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a.conj() * b).sum::<Complex64>() * self.grid.cell_volume()
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        self.with_values(self.values.iter().map(|v| v * s).collect())
    }

    pub fn add(&self, other: &SampledField) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(self.with_values(self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect()))
    }

    pub fn sub(&self, other: &SampledField) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(self.with_values(self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect()))
    }

    /// `||self - reference|| / ||reference||` in grid L2.
    pub fn rel_l2_error(&self, reference: &SampledField) -> f64 {
        let diff: f64 = self.values.iter().zip(&reference.values).map(|(a, b)| (a - b).norm_sqr()).sum();
        let den: f64 = reference.values.iter().map(|b| b.norm_sqr()).sum();
        if den == 0.0 {
            diff.sqrt()
        } else {
            (diff / den).sqrt()
        }
    }

    /// Largest `|f(x)|` over nodes with `|x| > radius`.
    pub fn max_abs_outside(&self, radius: f64) -> f64 {
        (0..self.values.len())
            .filter(|&i| self.grid.point(i).iter().map(|v| v * v).sum::<f64>().sqrt() > radius)
            .fold(0.0, |a, i| a.max(self.values[i].norm()))
    }

    /// Largest value on the outermost layer of nodes, relative to the maximum.
    pub fn boundary_ratio(&self) -> f64 {
        let mx = self.max_abs();
        if mx == 0.0 {
            return 0.0;
        }
        let mut b = 0.0_f64;
        for i in 0..self.values.len() {
            let mi = self.grid.multi_index(i);
            if mi.iter().zip(&self.grid.axes).any(|(&k, a)| k == 0 || k + 1 == a.points) {
                b = b.max(self.values[i].norm());
            }
        }
        b / mx
    }

    /// Header `# dim=..,L=..,N=..,space=..,mu=..` and one `re,im` line per node
    /// in flat-index order.
    pub fn to_csv(&self) -> String {
        let join = |v: Vec<String>| v.join(";");
        let (space, mu) = match &self.space {
            FieldSpace::Slice(mu) => ("slice".to_string(), join(mu.iter().map(|v| format!("{v:e}")).collect())),
            FieldSpace::Group { m } => (format!("group(m={m})"), String::new()),
            FieldSpace::Euclidean => ("euclidean".to_string(), String::new()),
        };
        let mut out = format!(
            "# dim={},L={},N={},space={space},mu={mu}\n",
            self.grid.dim(),
            join(self.grid.axes.iter().map(|a| format!("{:e}", a.half_width)).collect()),
            join(self.grid.axes.iter().map(|a| a.points.to_string()).collect()),
        );
        for v in &self.values {
            out.push_str(&format!("{:e},{:e}\n", v.re, v.im));
        }
        out
    }
}

/// Pointwise evaluation of `f` on the grid nodes.
pub fn sample<F>(f: F, grid: &Grid, space: FieldSpace) -> SampledField
where
    F: Fn(&[f64]) -> Complex64 + Sync,
{
    let values = (0..grid.len()).into_par_iter().map(|i| f(&grid.point(i))).collect();
    SampledField { grid: grid.clone(), values, space }
}

/// Uniform grid of central forms with nodes `lo + k (hi - lo)/(n - 1)`;
/// nodes with `|Pf(omega_mu)| < exclusion` are treated as excluded.
#[derive(Debug, Clone, PartialEq)]
pub struct MuGrid {
    pub half_width: Vec<f64>,
    pub points: Vec<usize>,
    pub exclusion: f64,
}

impl MuGrid {
    pub fn new(half_width: Vec<f64>, points: Vec<usize>, exclusion: f64) -> Result<Self> {
        if half_width.is_empty() || half_width.len() != points.len() {
            return Err(Error::EmptyMuGrid);
        }
        if points.iter().any(|&n| n < 2) || half_width.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::InvalidInput("mu-grid needs at least two nodes and a positive width per axis".into()));
        }
        Ok(Self { half_width, points, exclusion })
    }

    /// 65 nodes on `[-3, 3]^l`, exclusion `1e-6`.
    pub fn default_for(l: usize) -> Self {
        Self { half_width: vec![3.0; l], points: vec![65; l], exclusion: 1e-6 }
    }

    pub fn symmetric(l: usize, half_width: f64, points: usize, exclusion: f64) -> Result<Self> {
        Self::new(vec![half_width; l], vec![points; l], exclusion)
    }

    pub fn l(&self) -> usize {
        self.points.len()
    }

    pub fn len(&self) -> usize {
        self.points.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, a: usize) -> f64 {
        2.0 * self.half_width[a] / (self.points[a] - 1) as f64
    }

    pub fn cell(&self) -> f64 {
        (0..self.l()).map(|a| self.spacing(a)).product()
    }

    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.l()];
        for a in (0..self.l()).rev() {
            out[a] = idx % self.points[a];
            idx /= self.points[a];
        }
        out
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.points).fold(0, |acc, (&k, &n)| acc * n + k)
    }

    pub fn node(&self, idx: usize) -> Vec<f64> {
        self.multi_index(idx)
            .iter()
            .enumerate()
            .map(|(a, &k)| -self.half_width[a] + k as f64 * self.spacing(a))
            .collect()
    }
}

/// One node of a slice decomposition. Excluded nodes carry no field.
#[derive(Debug, Clone)]
pub struct SliceNode {
    pub mu: Vec<f64>,
    pub pf_abs: f64,
    pub frame: Option<SymplecticFrame>,
    pub field: Option<SampledField>,
}

/// Slices `f^mu` over a mu-grid.
#[derive(Debug, Clone)]
pub struct SliceSet {
    pub mu_grid: MuGrid,
    pub nodes: Vec<SliceNode>,
}

impl SliceSet {
    /// Frames for every node of `mu_grid`, with the exclusion rule applied.
    pub fn frames(alg: &LieAlgebra2Step, mu_grid: &MuGrid) -> Result<Vec<SliceNode>> {
        if mu_grid.l() != alg.l() {
            return Err(Error::DimensionMismatch(format!("mu-grid has {} axes, algebra l = {}", mu_grid.l(), alg.l())));
        }
        Ok((0..mu_grid.len())
            .map(|i| {
                let mu = mu_grid.node(i);
                let jm = j_matrix(alg, &mu);
                let pf_abs = if alg.m() % 2 == 0 { pfaffian(&jm).map(f64::abs).unwrap_or(0.0) } else { 0.0 };
                let frame = if pf_abs >= mu_grid.exclusion { build_frame(alg, &mu).ok() } else { None };
                SliceNode { mu, pf_abs, frame, field: None }
            })
            .collect())
    }

    pub fn included(&self) -> impl Iterator<Item = &SliceNode> {
        self.nodes.iter().filter(|n| n.field.is_some())
    }
}

/// `int f(x, u) e^{-2 pi i mu.u} du` by the trapezoidal rule (no Pfaffian factor).
pub fn central_ft_raw(f: &SampledField, mu: &[f64]) -> Result<SampledField> {
    let m = match f.space {
        FieldSpace::Group { m } => m,
        _ => return Err(Error::InvalidInput("central transform needs a field over the group".into())),
    };
    let xg = f.grid.sub(0..m);
    let ug = f.grid.sub(m..f.grid.dim());
    if ug.dim() != mu.len() {
        return Err(Error::DimensionMismatch(format!("mu has length {}, centre has dimension {}", mu.len(), ug.dim())));
    }
    let du = ug.cell_volume();
    let phase: Vec<Complex64> = (0..ug.len())
        .map(|k| {
            let u = ug.point(k);
            let arg: f64 = u.iter().zip(mu).map(|(a, b)| a * b).sum();
            Complex64::from_polar(du, -2.0 * PI * arg)
        })
        .collect();
    let nu = ug.len();
    let values = (0..xg.len())
        .into_par_iter()
        .map(|i| f.values[i * nu..(i + 1) * nu].iter().zip(&phase).map(|(a, p)| a * p).sum())
        .collect();
    Ok(SampledField { grid: xg, values, space: FieldSpace::Slice(mu.to_vec()) })
}

/// `f^mu(x) = |Pf|^{-1} int f(x, u) e^{-2 pi i mu.u} du`.
pub fn partial_central_ft(f: &SampledField, frame: &SymplecticFrame) -> Result<SampledField> {
    if frame.pf_abs() < 1e-12 {
        return Err(Error::DegenerateForm { det: frame.jmu.determinant() });
    }
    let raw = central_ft_raw(f, &frame.mu)?;
    Ok(raw.scaled(c(1.0 / frame.pf_abs(), 0.0)))
}

/// Slices of a group field at every included node of `mu_grid`.
pub fn slice_group_field(f: &SampledField, alg: &LieAlgebra2Step, mu_grid: &MuGrid) -> Result<SliceSet> {
    let mut nodes = SliceSet::frames(alg, mu_grid)?;
    let fields: Vec<Option<SampledField>> = nodes
        .par_iter()
        .map(|n| n.frame.as_ref().map(|fr| partial_central_ft(f, fr)).transpose())
        .collect::<Result<_>>()?;
    for (n, fld) in nodes.iter_mut().zip(fields) {
        n.field = fld;
    }
    Ok(SliceSet { mu_grid: mu_grid.clone(), nodes })
}

/// `f(x, u) = sum_j f^{mu_j}(x) e^{2 pi i mu_j.u} |Pf(mu_j)| dmu`. Excluded
/// nodes are filled by 6-, 4- or 2-point interpolation of `F = f^mu |Pf|` along the
/// first mu-axis.
pub fn central_inversion(set: &SliceSet, u_grid: &Grid) -> Result<SampledField> {
    let first = set.included().next().ok_or(Error::EmptyMuGrid)?;
    let xg = first.field.as_ref().expect("included").grid.clone();
    let mg = &set.mu_grid;
    if u_grid.dim() != mg.l() {
        return Err(Error::DimensionMismatch("u-grid and mu-grid dimensions differ".into()));
    }
    let weighted: Vec<Option<Vec<Complex64>>> = set
        .nodes
        .iter()
        .map(|n| n.field.as_ref().map(|f| f.values.iter().map(|v| v * n.pf_abs).collect()))
        .collect();
    for n in set.included() {
        if n.field.as_ref().unwrap().grid != xg {
            return Err(Error::GridMismatch);
        }
    }
    let mut filled: Vec<Option<Vec<Complex64>>> = weighted.clone();
    for (idx, slot) in filled.iter_mut().enumerate() {
        if slot.is_some() {
            continue;
        }
        let mi = mg.multi_index(idx);
        let nb = |d: i64| -> Option<&Vec<Complex64>> {
            let k = mi[0] as i64 + d;
            if k < 0 || k >= mg.points[0] as i64 {
                return None;
            }
            let mut mj = mi.clone();
            mj[0] = k as usize;
            weighted[mg.flat_index(&mj)].as_ref()
        };
        *slot = match (nb(-3), nb(-2), nb(-1), nb(1), nb(2), nb(3)) {
            (Some(a), Some(b), Some(cc), Some(d), Some(e), Some(g)) => Some(
                (0..xg.len())
                    .map(|i| (a[i] + g[i]) * 0.05 - (b[i] + e[i]) * 0.3 + (cc[i] + d[i]) * 0.75)
                    .collect(),
            ),
            (_, Some(a), Some(b), Some(cc), Some(d), _) => Some(
                (0..xg.len()).map(|i| (-a[i] + b[i] * 4.0 + cc[i] * 4.0 - d[i]) / 6.0).collect(),
            ),
            (_, _, Some(b), Some(cc), _, _) => Some((0..xg.len()).map(|i| (b[i] + cc[i]) * 0.5).collect()),
            _ => None,
        };
    }
    let active: Vec<(Vec<f64>, &Vec<Complex64>)> = set
        .nodes
        .iter()
        .zip(&filled)
        .filter_map(|(n, f)| f.as_ref().map(|v| (n.mu.clone(), v)))
        .collect();
    let dmu = mg.cell();
    let nu = u_grid.len();
    let phase: Vec<Vec<Complex64>> = active
        .iter()
        .map(|(mu, _)| {
            (0..nu)
                .map(|k| {
                    let u = u_grid.point(k);
                    let arg: f64 = u.iter().zip(mu).map(|(a, b)| a * b).sum();
                    Complex64::from_polar(dmu, 2.0 * PI * arg)
                })
                .collect()
        })
        .collect();
    let values: Vec<Complex64> = (0..xg.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let mut row = vec![ZERO; nu];
            for (j, (_, vals)) in active.iter().enumerate() {
                let a = vals[i];
                for (r, p) in row.iter_mut().zip(&phase[j]) {
                    *r += a * p;
                }
            }
            row
        })
        .collect();
    let grid = Grid::group(&xg, u_grid);
    Ok(SampledField { grid, values, space: FieldSpace::Group { m: xg.dim() } })
}

/// The data of a twisted convolution: phase `e^{-i pi x^T J y}` and measure factor.
#[derive(Debug, Clone, PartialEq)]
pub struct TwistForm {
    pub j: RMat,
    pub measure: f64,
}

impl TwistForm {
    /// `J_mu` with `d_mu x = |Pf| dx`, for fields in original coordinates.
    pub fn of_frame(frame: &SymplecticFrame) -> Self {
        Self { j: frame.jmu.clone(), measure: frame.pf_abs() }
    }

    /// Standard `J` with Lebesgue measure, for symplectic coordinates.
    pub fn standard(m: usize) -> Self {
        Self { j: j_std(m), measure: 1.0 }
    }

    /// No twist: ordinary convolution.
    pub fn untwisted(m: usize) -> Self {
        Self { j: RMat::zeros(m, m), measure: 1.0 }
    }
}

/// `phi x_mu psi (x) = int phi(x - y) psi(y) e^{-i pi x^T J_mu y} d_mu y` on the grid.
pub fn twisted_convolve(phi: &SampledField, psi: &SampledField, frame: &SymplecticFrame) -> Result<SampledField> {
    twisted_convolve_form(phi, psi, &TwistForm::of_frame(frame))
}

/// Direct on-grid quadrature with zero extension outside the box.
pub fn twisted_convolve_form(phi: &SampledField, psi: &SampledField, form: &TwistForm) -> Result<SampledField> {
    if phi.grid != psi.grid {
        return Err(Error::GridMismatch);
    }
    let grid = &phi.grid;
    let d = grid.dim();
    if form.j.nrows() != d {
        return Err(Error::DimensionMismatch("form and grid dimensions differ".into()));
    }
    let shape = grid.shape();
    let strides = grid.strides();
    let weight = form.measure * grid.cell_volume();
    let active: Vec<(usize, Vec<usize>)> = (0..grid.len())
        .filter(|&j| psi.values[j] != ZERO)
        .map(|j| (j, grid.multi_index(j)))
        .collect();
    let nodes: Vec<Vec<f64>> = grid.axes.iter().map(|a| a.nodes()).collect();
    let values = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let mi = grid.multi_index(i);
            let x = grid.point(i);
            let w: Vec<f64> = (0..d).map(|b| (0..d).map(|a| x[a] * form.j[(a, b)]).sum()).collect();
            let phases: Vec<Vec<Complex64>> =
                (0..d).map(|b| nodes[b].iter().map(|y| Complex64::cis(-PI * w[b] * y)).collect()).collect();
            let mut acc = ZERO;
            'inputs: for (j, mj) in &active {
                let mut idx = 0;
                let mut ph = c(1.0, 0.0);
                for a in 0..d {
                    let k = mi[a] as i64 - mj[a] as i64 + (shape[a] / 2) as i64;
                    if k < 0 || k >= shape[a] as i64 {
                        continue 'inputs;
                    }
                    idx += k as usize * strides[a];
                    ph *= phases[a][mj[a]];
                }
                acc += phi.values[idx] * psi.values[*j] * ph;
            }
            acc * weight
        })
        .collect();
    Ok(phi.with_values(values))
}

/// Options for [`apply_kernel`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct QuadratureOptions {
    /// Refinement factor of the quadrature grid; chosen from the kernel's
    /// chirp rate when `None`.
    pub oversample: Option<usize>,
}

/// Refinement needed to resolve `y -> phi(y) k(x - y) e^{i pi x^T J y}` for every
/// pair of nodes of the box. Depends on the grid only, so the quadrature is linear in `phi`.
pub fn auto_oversample(phi: &SampledField, kernel: &GaussianKernel, form: &TwistForm) -> usize {
    let grid = &phi.grid;
    let box_radius = grid.axes.iter().map(|a| a.half_width * a.half_width).sum::<f64>().sqrt();
    let re_q = kernel.q.map(|z| z.re);
    let im_q = kernel.q.map(|z| z.im);
    let mut reach = 2.0 * box_radius;
    let decay = -sym_eigenvalues(&im_q).last().copied().unwrap_or(0.0);
    if decay > 0.0 {
        reach = reach.min((80.0 / (PI * decay)).sqrt());
    }
    let omega = PI * spectral_norm(&re_q) * reach
        + PI * spectral_norm(&form.j) * box_radius
        + PI / grid.max_spacing()
        + 6.0 * (PI * spectral_norm(&im_q)).sqrt();
    let r = (1.1 * grid.max_spacing() * omega / (2.0 * PI)).ceil() as usize;
    r.clamp(1, 24)
}

/// Largest refined grid [`apply_kernel`] will build (256 MB of samples).
pub const FINE_NODE_CAP: usize = 1 << 24;

/// `phi x k` for an analytic kernel: `phi` is interpolated onto a refined grid,
/// the kernel is evaluated exactly, and the sum is taken at the coarse nodes.
pub fn apply_kernel(
    phi: &SampledField,
    kernel: &GaussianKernel,
    form: &TwistForm,
    opts: QuadratureOptions,
) -> Result<SampledField> {
    let grid = &phi.grid;
    let d = grid.dim();
    if kernel.dim() != d || form.j.nrows() != d {
        return Err(Error::DimensionMismatch("kernel, form and grid dimensions differ".into()));
    }
    let r = opts.oversample.unwrap_or_else(|| auto_oversample(phi, kernel, form));
    let fine_len = grid.shape().iter().try_fold(1usize, |acc, &v| acc.checked_mul(v * r)).unwrap_or(usize::MAX);
    if fine_len > FINE_NODE_CAP {
        return Err(Error::CapExceeded { nodes: fine_len, cap: FINE_NODE_CAP });
    }
    let fine = upsample(phi, r);
    let fg = &fine.grid;
    let hf: Vec<f64> = fg.axes.iter().map(|a| a.spacing()).collect();
    let weight = form.measure * fg.cell_volume();
    let nf: Vec<usize> = fg.shape();
    let n: Vec<usize> = grid.shape();
    // Difference table over d = r i - j, offset so indices are nonnegative.
    let offs: Vec<usize> = nf.iter().map(|&v| v - 1).collect();
    let tsize: Vec<usize> = (0..d).map(|a| r * (n[a] - 1) + nf[a]).collect();
    let table_len: usize = tsize.iter().product();
    let mut tstr = vec![1usize; d];
    for a in (0..d.saturating_sub(1)).rev() {
        tstr[a] = tstr[a + 1] * tsize[a + 1];
    }
    // Up to 192 MB; covers the largest refinement at N = 64 in two dimensions.
    let use_table = table_len <= 12_000_000;
    let table: Vec<Complex64> = if use_table {
        (0..table_len)
            .into_par_iter()
            .map(|t| {
                let mut rem = t;
                let mut z = vec![0.0; d];
                for a in 0..d {
                    let k = rem / tstr[a];
                    rem %= tstr[a];
                    z[a] = (k as f64 - offs[a] as f64) * hf[a];
                }
                kernel.value(&z) * weight
            })
            .collect()
    } else {
        Vec::new()
    };
    // Active fine nodes grouped by row (all axes but the last).
    let last = d - 1;
    let mut rows: Vec<(Vec<usize>, Vec<(usize, usize)>)> = Vec::new();
    let row_len = nf[last];
    for row_start in (0..fg.len()).step_by(row_len) {
        let entries: Vec<(usize, usize)> = (0..row_len)
            .filter(|&k| fine.values[row_start + k] != ZERO)
            .map(|k| (row_start + k, k))
            .collect();
        if !entries.is_empty() {
            let mi = fg.multi_index(row_start);
            rows.push((mi[..last].to_vec(), entries));
        }
    }
    let fnodes: Vec<Vec<f64>> = fg.axes.iter().map(|a| a.nodes()).collect();
    let values = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let mi = grid.multi_index(i);
            let x = grid.point(i);
            let w: Vec<f64> = (0..d).map(|b| (0..d).map(|a| x[a] * form.j[(a, b)]).sum()).collect();
            let phases: Vec<Vec<Complex64>> =
                (0..d).map(|b| fnodes[b].iter().map(|y| Complex64::cis(PI * w[b] * y)).collect()).collect();
            let base: usize = (0..d).map(|a| (r * mi[a] + offs[a]) * tstr[a]).sum();
            let mut acc = ZERO;
            for (prefix, entries) in &rows {
                let mut ph = c(1.0, 0.0);
                let mut shift = 0usize;
                for (a, &k) in prefix.iter().enumerate() {
                    ph *= phases[a][k];
                    shift += k * tstr[a];
                }
                let mut row_acc = ZERO;
                if use_table {
                    let row_base = base - shift;
                    for &(flat, k) in entries {
                        row_acc += fine.values[flat] * table[row_base - k] * phases[last][k];
                    }
                } else {
                    let mut z = vec![0.0; d];
                    for (a, &k) in prefix.iter().enumerate() {
                        z[a] = x[a] - fnodes[a][k];
                    }
                    for &(flat, k) in entries {
                        z[last] = x[last] - fnodes[last][k];
                        row_acc += fine.values[flat] * kernel.value(&z) * weight * phases[last][k];
                    }
                }
                acc += row_acc * ph;
            }
            acc
        })
        .collect();
    Ok(phi.with_values(values))
}

const D1: [f64; 5] = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];

/// `X^mu f = partial_X f + i pi (x^T J X) f`: fourth-order central differences
/// with zero extension, multiplication term exact.
pub fn twisted_vf_apply(xvec: &[f64], f: &SampledField, j: &RMat) -> Result<SampledField> {
    let grid = &f.grid;
    let d = grid.dim();
    if xvec.len() != d || j.nrows() != d {
        return Err(Error::DimensionMismatch("vector, form and grid dimensions differ".into()));
    }
    let strides = grid.strides();
    let jx = j * nalgebra::DVector::from_column_slice(xvec);
    let values = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let mi = grid.multi_index(i);
            let x = grid.point(i);
            let mut acc = ZERO;
            for a in 0..d {
                if xvec[a] == 0.0 {
                    continue;
                }
                let h = grid.axes[a].spacing();
                let mut der = ZERO;
                for (s, &cf) in D1.iter().enumerate() {
                    if cf == 0.0 {
                        continue;
                    }
                    let k = mi[a] as i64 + s as i64 - 2;
                    if k < 0 || k >= grid.axes[a].points as i64 {
                        continue;
                    }
                    let idx = (i as i64 + (k - mi[a] as i64) * strides[a] as i64) as usize;
                    der += f.values[idx] * cf;
                }
                acc += der * (xvec[a] / h);
            }
            let omega: f64 = (0..d).map(|a| x[a] * jx[a]).sum();
            acc + f.values[i] * Complex64::new(0.0, PI * omega)
        })
        .collect();
    Ok(f.with_values(values))
}

/// Row-compressed sparse complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    pub n: usize,
    pub rows: Vec<Vec<(usize, Complex64)>>,
}

impl SparseOperator {
    pub fn identity(n: usize) -> Self {
        Self { n, rows: (0..n).map(|i| vec![(i, c(1.0, 0.0))]).collect() }
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(|r| r.len()).sum()
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        self.rows.par_iter().map(|row| row.iter().map(|(k, a)| a * v[*k]).sum()).collect()
    }

    pub fn mul(&self, other: &SparseOperator) -> SparseOperator {
        let rows = self
            .rows
            .par_iter()
            .map(|row| {
                let mut acc: Vec<(usize, Complex64)> = Vec::new();
                for (k, a) in row {
                    for (j, b) in &other.rows[*k] {
                        acc.push((*j, a * b));
                    }
                }
                acc.sort_by_key(|e| e.0);
                let mut merged: Vec<(usize, Complex64)> = Vec::with_capacity(acc.len());
                for (j, v) in acc {
                    match merged.last_mut() {
                        Some(last) if last.0 == j => last.1 += v,
                        _ => merged.push((j, v)),
                    }
                }
                merged
            })
            .collect();
        SparseOperator { n: self.n, rows }
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, other: &SparseOperator, s: Complex64) -> SparseOperator {
        let rows = self
            .rows
            .iter()
            .zip(&other.rows)
            .map(|(a, b)| {
                let mut acc: Vec<(usize, Complex64)> = a.clone();
                acc.extend(b.iter().map(|(j, v)| (*j, v * s)));
                acc.sort_by_key(|e| e.0);
                let mut merged: Vec<(usize, Complex64)> = Vec::with_capacity(acc.len());
                for (j, v) in acc {
                    match merged.last_mut() {
                        Some(last) if last.0 == j => last.1 += v,
                        _ => merged.push((j, v)),
                    }
                }
                merged
            })
            .collect();
        SparseOperator { n: self.n, rows }
    }

    pub fn scaled(&self, s: Complex64) -> SparseOperator {
        SparseOperator {
            n: self.n,
            rows: self.rows.iter().map(|r| r.iter().map(|(j, v)| (*j, v * s)).collect()).collect(),
        }
    }

    pub fn adjoint(&self) -> SparseOperator {
        let mut rows: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); self.n];
        for (i, row) in self.rows.iter().enumerate() {
            for (j, v) in row {
                rows[*j].push((i, v.conj()));
            }
        }
        SparseOperator { n: self.n, rows }
    }

    /// Maximum absolute column sum.
    pub fn norm1(&self) -> f64 {
        let mut col = vec![0.0; self.n];
        for row in &self.rows {
            for (j, v) in row {
                col[*j] += v.norm();
            }
        }
        col.into_iter().fold(0.0, f64::max)
    }

    /// Frobenius norm.
    pub fn frobenius(&self) -> f64 {
        self.rows.iter().flatten().map(|(_, v)| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self) -> CMat {
        let mut m = CMat::zeros(self.n, self.n);
        for (i, row) in self.rows.iter().enumerate() {
            for (j, v) in row {
                m[(i, *j)] += v;
            }
        }
        m
    }
}

pub const DEFAULT_NODE_CAP: usize = 4096;

/// Sparse `V_X^mu` on the grid.
pub fn vector_field_matrix(xvec: &[f64], j: &RMat, grid: &Grid) -> SparseOperator {
    let d = grid.dim();
    let strides = grid.strides();
    let jx = j * nalgebra::DVector::from_column_slice(xvec);
    let rows = (0..grid.len())
        .map(|i| {
            let mi = grid.multi_index(i);
            let x = grid.point(i);
            let mut row: Vec<(usize, Complex64)> = Vec::new();
            for a in 0..d {
                if xvec[a] == 0.0 {
                    continue;
                }
                let h = grid.axes[a].spacing();
                for (s, &cf) in D1.iter().enumerate() {
                    if cf == 0.0 {
                        continue;
                    }
                    let k = mi[a] as i64 + s as i64 - 2;
                    if k < 0 || k >= grid.axes[a].points as i64 {
                        continue;
                    }
                    let idx = (i as i64 + (k - mi[a] as i64) * strides[a] as i64) as usize;
                    row.push((idx, c(cf * xvec[a] / h, 0.0)));
                }
            }
            let omega: f64 = (0..d).map(|a| x[a] * jx[a]).sum();
            row.push((i, c(0.0, PI * omega)));
            row.sort_by_key(|e| e.0);
            row
        })
        .collect();
    SparseOperator { n: grid.len(), rows }
}

/// `L_A^mu = sum_{jk} a_jk V_j^mu V_k^mu` assembled from the vector-field stencils.
pub fn operator_matrix(a: &RMat, j: &RMat, grid: &Grid, cap: usize) -> Result<SparseOperator> {
    let d = grid.dim();
    if a.nrows() != d || j.nrows() != d {
        return Err(Error::DimensionMismatch("A, form and grid dimensions differ".into()));
    }
    if grid.len() > cap {
        return Err(Error::CapExceeded { nodes: grid.len(), cap });
    }
    let basis = |k: usize| -> Vec<f64> { (0..d).map(|i| (i == k) as i32 as f64).collect() };
    let v: Vec<SparseOperator> = (0..d).map(|k| vector_field_matrix(&basis(k), j, grid)).collect();
    let mut total = SparseOperator { n: grid.len(), rows: vec![Vec::new(); grid.len()] };
    for p in 0..d {
        for q in 0..d {
            if a[(p, q)] != 0.0 {
                total = total.add_scaled(&v[p].mul(&v[q]), c(a[(p, q)], 0.0));
            }
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss(x: &[f64]) -> Complex64 {
        c((-x.iter().map(|v| v * v).sum::<f64>() / 2.0).exp(), 0.0)
    }

    #[test]
    fn sample_examples() {
        let g = Grid::uniform(2, 8.0, 64).unwrap();
        let f = sample(gauss, &g, FieldSpace::Euclidean);
        assert!((f.max_abs() - 1.0).abs() < 1e-15);
        assert_eq!(f.values[g.flat_index(&[32, 32])], c(1.0, 0.0));
        let z = sample(|_| ZERO, &g, FieldSpace::Euclidean);
        assert_eq!(z.max_abs(), 0.0);
        let w = sample(|x| Complex64::cis(3.0 * x[0] - x[1]), &g, FieldSpace::Euclidean);
        assert!(w.values.iter().all(|v| (v.norm() - 1.0).abs() < 1e-14));
    }

    #[test]
    fn field_dump_layout() {
        let g = Grid::new(vec![Axis::new(1.0, 2).unwrap(), Axis::new(2.0, 4).unwrap()]).unwrap();
        let f = sample(|x| c(x[0], x[1]), &g, FieldSpace::Slice(vec![0.5]));
        let csv = f.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "# dim=2,L=1e0;2e0,N=2;4,space=slice,mu=5e-1");
        assert_eq!(lines.len(), 9);
        assert_eq!(lines[1], "-1e0,-2e0");
        assert_eq!(lines[2], "-1e0,-1e0");
    }

    #[test]
    fn grid_indexing_round_trip() {
        let g = Grid::new(vec![Axis::new(1.0, 4).unwrap(), Axis::new(2.0, 6).unwrap()]).unwrap();
        for i in 0..g.len() {
            assert_eq!(g.flat_index(&g.multi_index(i)), i);
        }
        assert_eq!(g.point(0), vec![-1.0, -2.0]);
        assert!(Axis::new(1.0, 5).is_err());
    }

    #[test]
    fn untwisted_matches_fft_convolution() {
        use crate::fourier::{fourier_transform, inverse_fourier_transform};
        let g = Grid::uniform(2, 6.0, 32).unwrap();
        let phi = sample(|x| c((-(x[0] - 0.5).powi(2) - x[1] * x[1]).exp(), 0.0), &g, FieldSpace::Euclidean);
        let psi = sample(|x| c((-2.0 * (x[0] * x[0] + (x[1] + 0.3).powi(2))).exp(), 0.2), &g, FieldSpace::Euclidean);
        let direct = twisted_convolve_form(&phi, &psi, &TwistForm::untwisted(2)).unwrap();
        // Zero-padded FFT convolution on the doubled box.
        let big = g.doubled();
        let embed = |f: &SampledField| {
            sample(
                |x| {
                    if x.iter().zip(&g.axes).all(|(v, a)| *v >= -a.half_width - 1e-12 && *v < a.half_width - 1e-12) {
                        let k: Vec<usize> = x
                            .iter()
                            .zip(&g.axes)
                            .map(|(v, a)| ((v + a.half_width) / a.spacing()).round() as usize)
                            .collect();
                        f.values[g.flat_index(&k)]
                    } else {
                        ZERO
                    }
                },
                &big,
                FieldSpace::Euclidean,
            )
        };
        let (a, b) = (fourier_transform(&embed(&phi)), fourier_transform(&embed(&psi)));
        let prod = a.with_values(a.values.iter().zip(&b.values).map(|(p, q)| p * q).collect());
        let conv = inverse_fourier_transform(&prod, &big);
        for i in 0..g.len() {
            let x = g.point(i);
            let k: Vec<usize> = x.iter().zip(&big.axes).map(|(v, a)| ((v + a.half_width) / a.spacing()).round() as usize).collect();
            assert!((direct.values[i] - conv.values[big.flat_index(&k)]).norm() < 1e-10);
        }
    }

    #[test]
    fn narrow_bump_is_an_approximate_identity() {
        let alg = LieAlgebra2Step::heisenberg(1);
        let fr = build_frame(&alg, &[0.7]).unwrap();
        let g = Grid::uniform(2, 6.0, 128).unwrap();
        let phi = sample(|x| c((-(x[0] * x[0] + x[1] * x[1]) / 2.0).exp(), 0.0), &g, FieldSpace::Slice(vec![0.7]));
        let eta: f64 = 0.08;
        let norm = 1.0 / (PI * eta * eta * fr.pf_abs());
        let psi = sample(|x| c(norm * (-(x[0] * x[0] + x[1] * x[1]) / (eta * eta)).exp(), 0.0), &g, phi.space.clone());
        let out = twisted_convolve(&phi, &psi, &fr).unwrap();
        let err = out.values.iter().zip(&phi.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-3 * 5.0, "sup error {err}");
    }

    #[test]
    fn plateau_derivative_vanishes() {
        let g = Grid::uniform(2, 4.0, 64).unwrap();
        let f = sample(|_| c(1.0, 0.0), &g, FieldSpace::Euclidean);
        let j = RMat::from_row_slice(2, 2, &[0.0, 0.8, -0.8, 0.0]);
        let out = twisted_vf_apply(&[1.0, 0.0], &f, &j).unwrap();
        for i in 0..g.len() {
            let mi = g.multi_index(i);
            if mi[0] < 2 || mi[0] + 2 >= 64 {
                continue;
            }
            let x = g.point(i);
            let want = Complex64::new(0.0, PI * (x[1] * j[(1, 0)]));
            assert!((out.values[i] - want).norm() < 1e-12);
        }
    }

    #[test]
    fn commutator_is_central() {
        let mu = 0.9;
        let g = Grid::uniform(2, 6.0, 128).unwrap();
        let j = RMat::from_row_slice(2, 2, &[0.0, mu, -mu, 0.0]);
        let f = sample(|x| c((-(x[0] * x[0] + 2.0 * x[1] * x[1]) / 2.0).exp(), 0.1 * x[0]), &g, FieldSpace::Euclidean);
        let v1 = |f: &SampledField| twisted_vf_apply(&[1.0, 0.0], f, &j).unwrap();
        let v2 = |f: &SampledField| twisted_vf_apply(&[0.0, 1.0], f, &j).unwrap();
        let comm = v1(&v2(&f)).sub(&v2(&v1(&f))).unwrap();
        let want = f.scaled(c(0.0, 2.0 * PI * mu));
        // Compare away from the box edge where the data has decayed.
        let mask: Vec<usize> = (0..g.len()).filter(|&i| g.point(i).iter().all(|v| v.abs() < 5.0)).collect();
        let num: f64 = mask.iter().map(|&i| (comm.values[i] - want.values[i]).norm_sqr()).sum();
        let den: f64 = mask.iter().map(|&i| want.values[i].norm_sqr()).sum();
        assert!((num / den).sqrt() < 1e-4, "{}", (num / den).sqrt());
    }

    #[test]
    fn untwisted_field_is_spectral_derivative() {
        use crate::fourier::{fourier_transform, inverse_fourier_transform};
        let g = Grid::uniform(1, 8.0, 512).unwrap();
        let f = sample(|x| c((-x[0] * x[0]).exp(), 0.0), &g, FieldSpace::Euclidean);
        let out = twisted_vf_apply(&[1.0], &f, &RMat::zeros(1, 1)).unwrap();
        let fh = fourier_transform(&f);
        let dfh = fh.with_values(
            fh.values.iter().enumerate().map(|(k, v)| v * Complex64::new(0.0, fh.grid.point(k)[0])).collect(),
        );
        let spec = inverse_fourier_transform(&dfh, &g);
        assert!(out.rel_l2_error(&spec) < 1e-6);
    }

    #[test]
    fn operator_matrix_matches_stencils_and_is_hermitian() {
        let g = Grid::uniform(2, 4.0, 16).unwrap();
        let j = RMat::from_row_slice(2, 2, &[0.0, 1.3, -1.3, 0.0]);
        let a = RMat::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 2.0]);
        let op = operator_matrix(&a, &j, &g, DEFAULT_NODE_CAP).unwrap();
        let f = sample(|x| c((-(x[0] * x[0] + x[1] * x[1])).exp(), x[1].sin()), &g, FieldSpace::Euclidean);
        let e = |k: usize| -> Vec<f64> { (0..2).map(|i| (i == k) as i32 as f64).collect() };
        let mut want = SampledField::zeros(&g, FieldSpace::Euclidean);
        for p in 0..2 {
            for q in 0..2 {
                let vq = twisted_vf_apply(&e(q), &f, &j).unwrap();
                let vpq = twisted_vf_apply(&e(p), &vq, &j).unwrap();
                want = want.add(&vpq.scaled(c(a[(p, q)], 0.0))).unwrap();
            }
        }
        let got = f.with_values(op.apply(&f.values));
        assert!(got.rel_l2_error(&want) < 1e-10);
        let im = op.scaled(c(0.0, 1.0));
        let skew = im.add_scaled(&im.adjoint(), c(1.0, 0.0));
        assert!(skew.frobenius() / im.frobenius() < 1e-12);
        assert!(matches!(operator_matrix(&a, &j, &g, 100), Err(Error::CapExceeded { .. })));
    }

    #[test]
    fn untwisted_operator_is_laplacian_stencil() {
        let g = Grid::uniform(2, 4.0, 16).unwrap();
        let op = operator_matrix(&RMat::identity(2, 2), &RMat::zeros(2, 2), &g, DEFAULT_NODE_CAP).unwrap();
        let h = g.axes[0].spacing();
        let centre = g.flat_index(&[8, 8]);
        let row: std::collections::BTreeMap<usize, Complex64> = op.rows[centre].iter().cloned().collect();
        // Square of the five-point first-derivative stencil: centre weight -2*(1/144+4/9+...)
        let d1 = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];
        let centre_weight: f64 = -2.0 * d1.iter().map(|v| v * v).sum::<f64>() / (h * h);
        assert!((row[&centre].re - centre_weight).abs() < 1e-12);
        assert!(row.values().all(|v| v.im.abs() < 1e-15));
    }

    #[test]
    fn central_round_trip() {
        let alg = LieAlgebra2Step::heisenberg(1);
        let xg = Grid::uniform(2, 6.0, 32).unwrap();
        // u-spacing 1/4 keeps the central spectrum on [-2, 2] alias-free.
        let ug = Grid::uniform(1, 8.0, 64).unwrap();
        let g = Grid::group(&xg, &ug);
        let f = sample(
            |p| c((-(p[0] * p[0] + p[1] * p[1]) / 2.0 - p[2] * p[2] * 1.5).exp(), 0.0),
            &g,
            FieldSpace::Group { m: 2 },
        );
        let mg = MuGrid::symmetric(1, 2.0, 65, 1e-6).unwrap();
        let set = slice_group_field(&f, &alg, &mg).unwrap();
        assert_eq!(set.included().count(), 64);
        let back = central_inversion(&set, &ug).unwrap();
        assert!(back.rel_l2_error(&f) < 1e-3, "{}", back.rel_l2_error(&f));
        let imag = back.values.iter().fold(0.0_f64, |a, v| a.max(v.im.abs()));
        assert!(imag < 1e-9);
        // Conjugate symmetry of the slices of a real field.
        let pos = set.nodes.iter().find(|n| (n.mu[0] - 0.5).abs() < 1e-12).unwrap();
        let neg = set.nodes.iter().find(|n| (n.mu[0] + 0.5).abs() < 1e-12).unwrap();
        let (p, q) = (pos.field.as_ref().unwrap(), neg.field.as_ref().unwrap());
        assert!(p.values.iter().zip(&q.values).all(|(a, b)| (a - b.conj()).norm() < 1e-13));
    }

    #[test]
    fn separable_slice() {
        let alg = LieAlgebra2Step::heisenberg(1);
        let xg = Grid::uniform(2, 4.0, 16).unwrap();
        let ug = Grid::uniform(1, 8.0, 64).unwrap();
        let s2: f64 = 0.8;
        let f = sample(
            |p| c((-(p[0] * p[0] + p[1] * p[1])).exp() * (-p[2] * p[2] / (2.0 * s2)).exp(), 0.0),
            &Grid::group(&xg, &ug),
            FieldSpace::Group { m: 2 },
        );
        let mu = 0.6;
        let fr = build_frame(&alg, &[mu]).unwrap();
        let sl = partial_central_ft(&f, &fr).unwrap();
        let hhat = (2.0 * PI * s2).sqrt() * (-2.0 * PI * PI * s2 * mu * mu).exp();
        for i in 0..xg.len() {
            let x = xg.point(i);
            let want = (-(x[0] * x[0] + x[1] * x[1])).exp() * hhat / mu;
            assert!((sl.values[i] - want).norm() < 1e-12);
        }
    }

    #[test]
    fn apply_kernel_refuses_oversized_refinement() {
        use crate::kernels::{Coords, GaussianKernel};
        let g = Grid::uniform(4, 5.0, 8).unwrap();
        let k = GaussianKernel::new(c(1.0, 0.0), CMat::identity(4, 4) * c(1.0, -1.0), Coords::OriginalX);
        let phi = SampledField::zeros(&g, FieldSpace::Euclidean);
        let r = apply_kernel(&phi, &k, &TwistForm::standard(4), QuadratureOptions { oversample: Some(24) });
        assert!(matches!(r, Err(Error::CapExceeded { nodes, .. }) if nodes == 192usize.pow(4)));
    }

    #[test]
    fn apply_kernel_matches_direct_quadrature_for_decaying_kernel() {
        use crate::kernels::{Coords, GaussianKernel};
        let g = Grid::uniform(2, 5.0, 40).unwrap();
        let form = TwistForm { j: RMat::from_row_slice(2, 2, &[0.0, 0.5, -0.5, 0.0]), measure: 0.5 };
        let k = GaussianKernel::new(c(1.0, 0.5), CMat::from_fn(2, 2, |i, j| if i == j { c(0.3, -0.4) } else { ZERO }), Coords::OriginalX);
        let phi = sample(|x| c((-(x[0] * x[0] + x[1] * x[1]) / 2.0).exp(), 0.0), &g, FieldSpace::Euclidean);
        let psi = sample(|x| k.value(x), &g, FieldSpace::Euclidean);
        let direct = twisted_convolve_form(&phi, &psi, &form).unwrap();
        let fast = apply_kernel(&phi, &k, &form, QuadratureOptions { oversample: Some(1) }).unwrap();
        // Same quadrature nodes; the only difference is the zero extension of phi vs psi.
        let mask: Vec<usize> = (0..g.len()).filter(|&i| g.point(i).iter().all(|v| v.abs() < 2.5)).collect();
        for &i in &mask {
            assert!((direct.values[i] - fast.values[i]).norm() < 1e-8);
        }
    }
}
