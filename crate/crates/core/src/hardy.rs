//! Decay envelopes and the Hardy-type certifiers.
//!
//! Verdicts combine hypothesis checks on sampled data with threshold arithmetic.
//! A finite grid cannot show that a function vanishes; a `ForcedZero` verdict
//! only states that the hypotheses hold and the product is below threshold.

use crate::error::{Error, Result};
use crate::fourier::fourier_transform;
use crate::lie::{is_mw, mw_lift, LieAlgebra2Step, MwLift};
use crate::linalg::{smallest_singular, spectral_norm, sym_defect, RMat};
use crate::propagate::{propagate_group_with, GaussianSlices, PropagatorSpec, SliceMethod};
use crate::twisted::{Axis, FieldSpace, Grid, MuGrid, SampledField};
use std::fmt::Write as _;

/// Weighted suprema `max |f| w` over the nodes with `w < 1e12` (full) and over
/// the inner half of the box with `w < 1e6` (inner).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedSup {
    pub full: f64,
    pub inner: f64,
}

impl WeightedSup {
    /// `full / inner`; 1 when both vanish.
    pub fn growth(&self) -> f64 {
        if self.full == 0.0 {
            1.0
        } else if self.inner == 0.0 {
            f64::INFINITY
        } else {
            self.full / self.inner
        }
    }
}

pub const WEIGHT_CAP: f64 = 1e12;
pub const INNER_WEIGHT_CAP: f64 = 1e6;
pub const DEFAULT_CEILING: f64 = 1e6;
pub const DEFAULT_DELTA: f64 = 0.1;
/// Products within this distance of the threshold count as equal.
pub const THRESHOLD_TOL: f64 = 1e-12;

pub fn weighted_sup(mags: &[f64], weights: &[f64], inner: &[bool]) -> WeightedSup {
    let mut full = 0.0_f64;
    let mut inn = 0.0_f64;
    for ((&m, &w), &i) in mags.iter().zip(weights).zip(inner) {
        if w < WEIGHT_CAP {
            full = full.max(m * w);
            if i && w < INNER_WEIGHT_CAP {
                inn = inn.max(m * w);
            }
        }
    }
    WeightedSup { full, inner: inn }
}

/// `|f(x, u)| <= C e^{-|x|^2 / 4a} e^{-delta |u|}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayEnvelope {
    pub c: f64,
    pub a: f64,
    pub delta: f64,
}

impl DecayEnvelope {
    pub fn new(c: f64, a: f64, delta: f64) -> Result<Self> {
        if !(c > 0.0 && a > 0.0 && delta >= 0.0) {
            return Err(Error::InvalidInput(format!("envelope needs C, a > 0 and delta >= 0, got C = {c}, a = {a}, delta = {delta}")));
        }
        Ok(Self { c, a, delta })
    }

    /// Rate and central decay only; `C` is what gets fitted.
    pub fn rate(a: f64, delta: f64) -> Result<Self> {
        Self::new(1.0, a, delta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeFit {
    /// Smallest admissible `C` over the full box.
    pub c_min: f64,
    /// The same over the inner half of the box.
    pub c_inner: f64,
    /// `c_min / c_inner`; above 2 the envelope is declared unbounded.
    pub growth: f64,
    pub passed: bool,
}

fn fit_from_logw(f: &SampledField, log_weight: impl Fn(&[f64]) -> f64, ceiling: f64) -> EnvelopeFit {
    let grid = &f.grid;
    let weights: Vec<f64> = (0..grid.len()).map(|i| log_weight(&grid.point(i)).exp()).collect();
    let mags: Vec<f64> = f.values.iter().map(|v| v.norm()).collect();
    let sup = weighted_sup(&mags, &weights, &grid.inner_half_mask());
    let growth = sup.growth();
    let passed = sup.full.is_finite() && sup.full <= ceiling && growth <= 2.0;
    EnvelopeFit { c_min: sup.full, c_inner: sup.inner, growth, passed }
}

fn x_dims(f: &SampledField) -> usize {
    match f.space {
        FieldSpace::Group { m } => m,
        _ => f.grid.dim(),
    }
}

/// Fits `C` in `|f(x, u)| <= C e^{-|x|^2/4a} e^{-delta |u|}`; on Euclidean and
/// slice fields every axis is an `x` axis.
pub fn envelope_fit(f: &SampledField, a: f64, delta: f64, ceiling: f64) -> EnvelopeFit {
    let m = x_dims(f);
    fit_from_logw(
        f,
        |p| {
            let x2: f64 = p[..m].iter().map(|v| v * v).sum();
            let u: f64 = p[m..].iter().map(|v| v * v).sum::<f64>().sqrt();
            x2 / (4.0 * a) + delta * u
        },
        ceiling,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    ForcedZero,
    GaussianExtremal,
    Unconstrained,
    /// Equality in a strict-inequality theorem; no conclusion.
    Boundary,
    /// A decay hypothesis failed on the data.
    NotApplicable,
}

impl Classification {
    pub fn as_str(&self) -> &'static str {
        match self {
            Classification::ForcedZero => "forced_zero",
            Classification::GaussianExtremal => "gaussian_extremal",
            Classification::Unconstrained => "unconstrained",
            Classification::Boundary => "boundary",
            Classification::NotApplicable => "not_applicable",
        }
    }
}

fn classify(margin: f64, at_equality: Classification) -> Classification {
    if margin > THRESHOLD_TOL {
        Classification::ForcedZero
    } else if margin >= -THRESHOLD_TOL {
        at_equality
    } else {
        Classification::Unconstrained
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HardyVerdict {
    /// Final classification; `NotApplicable` when a hypothesis fails.
    pub classification: Classification,
    /// What the threshold arithmetic alone gives.
    pub arithmetic: Classification,
    pub product: f64,
    pub threshold: f64,
    /// `threshold - product`; positive in the forced-zero regime.
    pub margin: f64,
    pub physical: EnvelopeFit,
    pub spectral: EnvelopeFit,
    pub l2_norm: f64,
    /// Relative L2 residual of the best `c e^{-|x|^2/4a}` fit, at equality.
    pub gaussian_fit_residual: Option<f64>,
    /// `(lambda, a b / lambda^2)` per eigenvalue of `A`.
    pub eigen_products: Vec<(f64, f64)>,
}

impl HardyVerdict {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "classification: {}", self.classification.as_str());
        let _ = writeln!(s, "arithmetic: {}", self.arithmetic.as_str());
        let _ = writeln!(s, "product: {:.12e}", self.product);
        let _ = writeln!(s, "threshold: {:.12e}", self.threshold);
        let _ = writeln!(s, "margin: {:.12e}", self.margin);
        let _ = writeln!(s, "physical_c: {:.6e}", self.physical.c_min);
        let _ = writeln!(s, "physical_growth: {:.6e}", self.physical.growth);
        let _ = writeln!(s, "spectral_c: {:.6e}", self.spectral.c_min);
        let _ = writeln!(s, "spectral_growth: {:.6e}", self.spectral.growth);
        let _ = writeln!(s, "l2_norm: {:.6e}", self.l2_norm);
        if let Some(r) = self.gaussian_fit_residual {
            let _ = writeln!(s, "gaussian_fit_residual: {r:.6e}");
        }
        for (lam, p) in &self.eigen_products {
            let _ = writeln!(s, "eigen_product: {lam:.12e} {p:.12e}");
        }
        s
    }
}

fn check_decayed(g: &SampledField) -> Result<()> {
    let r = g.boundary_ratio();
    if r > 1e-8 {
        return Err(Error::InvalidInput(format!("data is {r:.2e} of its maximum at the box edge; enlarge the box")));
    }
    Ok(())
}

fn gaussian_residual(g: &SampledField, a: f64) -> f64 {
    let model: Vec<f64> =
        (0..g.grid.len()).map(|i| (-g.grid.point(i).iter().map(|v| v * v).sum::<f64>() / (4.0 * a)).exp()).collect();
    let mm: f64 = model.iter().map(|v| v * v).sum();
    let proj = g.values.iter().zip(&model).map(|(v, w)| v * *w).sum::<num_complex::Complex64>() / mm;
    let res: f64 = g.values.iter().zip(&model).map(|(v, w)| (v - proj * *w).norm_sqr()).sum();
    let nrm: f64 = g.values.iter().map(|v| v.norm_sqr()).sum();
    if nrm == 0.0 {
        0.0
    } else {
        (res / nrm).sqrt()
    }
}

fn finish(
    g: &SampledField,
    a: f64,
    product: f64,
    threshold: f64,
    physical: EnvelopeFit,
    spectral: EnvelopeFit,
    eigen_products: Vec<(f64, f64)>,
) -> HardyVerdict {
    let margin = threshold - product;
    let arithmetic = classify(margin, Classification::GaussianExtremal);
    let classification = if physical.passed && spectral.passed { arithmetic } else { Classification::NotApplicable };
    let gaussian_fit_residual = (arithmetic == Classification::GaussianExtremal).then(|| gaussian_residual(g, a));
    HardyVerdict {
        classification,
        arithmetic,
        product,
        threshold,
        margin,
        physical,
        spectral,
        l2_norm: g.l2_norm(),
        gaussian_fit_residual,
        eigen_products,
    }
}

/// `|g| <= C e^{-|x|^2/4 alpha}` and `|g^(xi)| <= C e^{-|xi|^2/beta}` with
/// `g^(xi) = int g(x) e^{-i xi.x} dx`; threshold `alpha beta` vs 1.
pub fn hardy_certify(g: &SampledField, alpha: f64, beta: f64) -> Result<HardyVerdict> {
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(Error::InvalidInput("alpha and beta must be positive".into()));
    }
    check_decayed(g)?;
    let e = SampledField { space: FieldSpace::Euclidean, ..g.clone() };
    let gh = fourier_transform(&e);
    let physical = envelope_fit(&e, alpha, 0.0, DEFAULT_CEILING);
    let spectral = fit_from_logw(&gh, |xi| xi.iter().map(|v| v * v).sum::<f64>() / beta, DEFAULT_CEILING);
    Ok(finish(&e, alpha, alpha * beta, 1.0, physical, spectral, Vec::new()))
}

/// Largest `|eigenvalue|` of a symmetric matrix.
pub fn operator_norm(a: &RMat) -> f64 {
    a.clone().symmetric_eigen().eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Matrix version: `|F| <= C e^{-|x|^2/4a}`, `|F^(y)| <= C e^{-|Ay|^2/b}`;
/// threshold `ab` vs `||A||^2`.
pub fn matrix_hardy_certify(f: &SampledField, a_mat: &RMat, a: f64, b: f64) -> Result<HardyVerdict> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::InvalidInput("a and b must be positive".into()));
    }
    let d = sym_defect(a_mat);
    if d > 1e-12 {
        return Err(Error::NotSymmetric(d));
    }
    let norm = operator_norm(a_mat);
    if norm == 0.0 {
        return Err(Error::InvalidInput("A = 0 is excluded: the matrix must be non-trivial".into()));
    }
    if a_mat.nrows() != f.grid.dim() {
        return Err(Error::DimensionMismatch("A and grid dimensions differ".into()));
    }
    check_decayed(f)?;
    let e = SampledField { space: FieldSpace::Euclidean, ..f.clone() };
    let fh = fourier_transform(&e);
    let physical = envelope_fit(&e, a, 0.0, DEFAULT_CEILING);
    let spectral = fit_from_logw(
        &fh,
        |y| {
            let ay = a_mat * nalgebra::DVector::from_column_slice(y);
            ay.norm_squared() / b
        },
        DEFAULT_CEILING,
    );
    let eigen_products = a_mat
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|&l| (l, if l == 0.0 { f64::INFINITY } else { a * b / (l * l) }))
        .collect();
    Ok(finish(&e, a, a * b, norm * norm, physical, spectral, eigen_products))
}

/// `a' = a / (1 - delta a)`, the Gaussian rate after lifting.
pub fn lifted_rate(a: f64, delta: f64) -> Result<f64> {
    let da = delta * a;
    if da >= 1.0 {
        return Err(Error::EnvelopeTransfer(da));
    }
    Ok(a / (1.0 - da))
}

/// `f~(x, xi, u, s) = e^{-|xi|^2/4a} e^{-delta |s + xi.x/2|} f(x, u)` on the
/// lifted grid with axes `(x, xi, u, s)`.
pub fn lift_field(f: &SampledField, a: f64, delta: f64, lift: &MwLift, xi_axis: &Axis, s_axis: &Axis) -> Result<SampledField> {
    lifted_rate(a, delta)?;
    let m = lift.base_m;
    if f.space != (FieldSpace::Group { m }) || f.grid.dim() != m + lift.base_l {
        return Err(Error::DimensionMismatch("field does not live on the base group of the lift".into()));
    }
    let mut axes = f.grid.axes[..m].to_vec();
    axes.extend(std::iter::repeat(xi_axis.clone()).take(m));
    axes.extend_from_slice(&f.grid.axes[m..]);
    axes.push(s_axis.clone());
    let grid = Grid::new(axes)?;
    let l = lift.base_l;
    let fstrides = f.grid.strides();
    let values = (0..grid.len())
        .map(|i| {
            let mi = grid.multi_index(i);
            let p = grid.point(i);
            let (x, xi, s) = (&p[..m], &p[m..2 * m], p[2 * m + l]);
            let base: usize = (0..m).map(|k| mi[k] * fstrides[k]).sum::<usize>()
                + (0..l).map(|k| mi[2 * m + k] * fstrides[m + k]).sum::<usize>();
            let xi2: f64 = xi.iter().map(|v| v * v).sum();
            let dot: f64 = xi.iter().zip(x).map(|(a, b)| a * b).sum();
            f.values[base] * ((-xi2 / (4.0 * a)) - delta * (s + 0.5 * dot).abs()).exp()
        })
        .collect();
    Ok(SampledField { grid, values, space: FieldSpace::Group { m: 2 * m } })
}

/// `||A||^2 T^2 - ab`: positive when the uniqueness condition holds.
pub fn uniqueness_margin(a: f64, b: f64, op_norm: f64, t_big: f64) -> f64 {
    op_norm * op_norm * t_big * t_big - a * b
}

/// Grids on which a non-MW problem is lifted.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftGrids {
    pub xi: Axis,
    pub s: Axis,
    pub mu_grid: MuGrid,
}

/// Initial data for [`uniqueness_experiment`].
#[derive(Debug, Clone)]
pub enum ExperimentData {
    /// Sampled over the group; propagated through the slice decomposition.
    Field { f: SampledField, mu_grid: MuGrid, lift: Option<LiftGrids> },
    /// Gaussian slices, propagated by closed-form composition.
    Gaussian { slices: GaussianSlices, x_grid: Grid, u_grid: Grid },
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniquenessReport {
    /// The `b < a` case was reduced by time reversal: `a`, `b` and `T` below are
    /// the swapped values actually tested.
    pub case2: bool,
    pub lifted: bool,
    pub a: f64,
    pub b: f64,
    pub delta: f64,
    pub t_big: f64,
    pub op_norm: f64,
    pub product: f64,
    pub threshold: f64,
    pub margin: f64,
    pub arithmetic: Classification,
    pub classification: Classification,
    pub fit0: EnvelopeFit,
    pub fit_t: EnvelopeFit,
    pub f_norm: f64,
    pub w_norm: f64,
    /// Forced-zero verdict on data with `||f|| > 1e-8`: a grid artifact.
    pub artifact: bool,
    pub failed: Vec<String>,
}

impl UniquenessReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "case2: {}", self.case2);
        let _ = writeln!(s, "lifted: {}", self.lifted);
        let _ = writeln!(s, "a: {:.12e}", self.a);
        let _ = writeln!(s, "b: {:.12e}", self.b);
        let _ = writeln!(s, "delta: {:.12e}", self.delta);
        let _ = writeln!(s, "T: {:.12e}", self.t_big);
        let _ = writeln!(s, "op_norm: {:.12e}", self.op_norm);
        let _ = writeln!(s, "product: {:.12e}", self.product);
        let _ = writeln!(s, "threshold: {:.12e}", self.threshold);
        let _ = writeln!(s, "margin: {:.12e}", self.margin);
        let _ = writeln!(s, "arithmetic: {}", self.arithmetic.as_str());
        let _ = writeln!(s, "classification: {}", self.classification.as_str());
        let _ = writeln!(s, "f_norm: {:.6e}", self.f_norm);
        let _ = writeln!(s, "w_norm: {:.6e}", self.w_norm);
        let _ = writeln!(s, "artifact: {}", self.artifact);
        for f in &self.failed {
            let _ = writeln!(s, "failed: {f}");
        }
        s
    }

    /// Columns `t, norm, c_min, growth, passed`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,norm,c_min,growth,passed\n");
        for (t, n, fit) in [(0.0, self.f_norm, &self.fit0), (self.t_big, self.w_norm, &self.fit_t)] {
            let _ = writeln!(s, "{t:.12e},{n:.12e},{:.12e},{:.12e},{}", fit.c_min, fit.growth, fit.passed);
        }
        s
    }
}

struct Propagated {
    f: SampledField,
    w: SampledField,
}

fn run_data(data: &ExperimentData, alg: &LieAlgebra2Step, spec: &PropagatorSpec) -> Result<(Propagated, ExperimentData)> {
    match data {
        ExperimentData::Field { f, mu_grid, lift } => {
            // A singular `A` (always the case after lifting) has no kernel.
            let method = if smallest_singular(&spec.a) <= 1e-12 * spectral_norm(&spec.a) {
                SliceMethod::Oracle
            } else {
                SliceMethod::Kernel
            };
            let w = propagate_group_with(f, spec, alg, mu_grid, method)?;
            let next = ExperimentData::Field { f: w.clone(), mu_grid: mu_grid.clone(), lift: lift.clone() };
            Ok((Propagated { f: f.clone(), w }, next))
        }
        ExperimentData::Gaussian { slices, x_grid, u_grid } => {
            let f = slices.to_group(x_grid, u_grid)?;
            let ws = slices.propagate(spec)?;
            let w = ws.to_group(x_grid, u_grid)?;
            let next = ExperimentData::Gaussian { slices: ws, x_grid: x_grid.clone(), u_grid: u_grid.clone() };
            Ok((Propagated { f, w }, next))
        }
    }
}

/// Runs the uniqueness pipeline: propagate to `T`, fit the envelopes at 0 and `T`,
/// and compare `ab` with `||A||^2 T^2`. Non-MW algebras are lifted first; `b < a`
/// is reduced to `a <= b` by starting from `e^{iTL_A} f` and running to `-T`.
pub fn uniqueness_experiment(
    alg: &LieAlgebra2Step,
    data: &ExperimentData,
    a_mat: &RMat,
    t_big: f64,
    env0: DecayEnvelope,
    env_t: DecayEnvelope,
    ceiling: f64,
) -> Result<UniquenessReport> {
    if env0.delta != env_t.delta {
        return Err(Error::InvalidInput("both envelopes must use the same delta".into()));
    }
    let mw = is_mw(alg, 64, 7).is_mw;
    let (alg, data, a_mat, env0, env_t, lifted) = if mw {
        (alg.clone(), data.clone(), a_mat.clone(), env0, env_t, false)
    } else {
        let ExperimentData::Field { f, lift: Some(lg), .. } = data else {
            return Err(Error::InvalidInput("non-MW algebra: sampled data with lift grids is required".into()));
        };
        let lift = mw_lift(alg);
        let ft = lift_field(f, env0.a, env0.delta, &lift, &lg.xi, &lg.s)?;
        let m = alg.m();
        let mut al = RMat::zeros(2 * m, 2 * m);
        al.view_mut((0, 0), (m, m)).copy_from(a_mat);
        let a0 = DecayEnvelope { a: lifted_rate(env0.a, env0.delta)?, ..env0 };
        let at = DecayEnvelope { a: lifted_rate(env_t.a, env_t.delta)?, ..env_t };
        let d = ExperimentData::Field { f: ft, mu_grid: lg.mu_grid.clone(), lift: None };
        (lift.algebra, d, al, a0, at, true)
    };
    let spec = PropagatorSpec::new(a_mat.clone(), t_big)?;
    let (case2, prop, a, b, t_used) = if env_t.a < env0.a {
        // g = e^{iTL} f, then back to f over -T: the roles of a and b swap.
        let (_, g_data) = run_data(&data, &alg, &spec)?;
        let (p, _) = run_data(&g_data, &alg, &spec.with_time(-t_big))?;
        (true, p, env_t.a, env0.a, -t_big)
    } else {
        let (p, _) = run_data(&data, &alg, &spec)?;
        (false, p, env0.a, env_t.a, t_big)
    };
    let delta = env0.delta;
    let fit0 = envelope_fit(&prop.f, a, delta, ceiling);
    let fit_t = envelope_fit(&prop.w, b, delta, ceiling);
    let op_norm = operator_norm(&a_mat);
    let product = a * b;
    let threshold = op_norm * op_norm * t_used * t_used;
    let margin = threshold - product;
    let arithmetic = classify(margin, Classification::Boundary);
    let mut failed = Vec::new();
    if !fit0.passed {
        failed.push(format!("t=0 envelope (a = {a}): C = {:.3e}, growth = {:.3}", fit0.c_min, fit0.growth));
    }
    if !fit_t.passed {
        failed.push(format!("t=T envelope (b = {b}): C = {:.3e}, growth = {:.3}", fit_t.c_min, fit_t.growth));
    }
    let classification = if failed.is_empty() { arithmetic } else { Classification::NotApplicable };
    let f_norm = prop.f.l2_norm();
    let w_norm = prop.w.l2_norm();
    Ok(UniquenessReport {
        case2,
        lifted,
        a,
        b,
        delta,
        t_big: t_used,
        op_norm,
        product,
        threshold,
        margin,
        arithmetic,
        classification,
        fit0,
        fit_t,
        f_norm,
        w_norm,
        artifact: classification == Classification::ForcedZero && f_norm > 1e-8,
        failed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;
    use crate::twisted::sample;

    fn gauss(grid: &Grid, a: f64) -> SampledField {
        sample(|x| c((-x.iter().map(|v| v * v).sum::<f64>() / (4.0 * a)).exp(), 0.0), grid, FieldSpace::Euclidean)
    }

    #[test]
    fn exact_envelope_has_unit_constant() {
        let g = Grid::group(&Grid::uniform(2, 6.0, 24).unwrap(), &Grid::uniform(1, 10.0, 40).unwrap());
        let (a, d) = (0.8, 0.1);
        let f = sample(
            |p| c((-(p[0] * p[0] + p[1] * p[1]) / (4.0 * a) - d * p[2].abs()).exp(), 0.0),
            &g,
            FieldSpace::Group { m: 2 },
        );
        let fit = envelope_fit(&f, a, d, DEFAULT_CEILING);
        assert!((fit.c_min - 1.0).abs() < 1e-12 && fit.passed);
    }

    #[test]
    fn slower_decay_is_detected() {
        let g = Grid::uniform(1, 40.0, 400).unwrap();
        let f = gauss(&g, 1.2);
        let fit = envelope_fit(&f, 1.0, 0.0, DEFAULT_CEILING);
        assert!(!fit.passed && fit.growth > 2.0, "{fit:?}");
    }

    #[test]
    fn equality_case_is_extremal() {
        let g = Grid::uniform(1, 20.0, 256).unwrap();
        let alpha = 0.7;
        let v = hardy_certify(&gauss(&g, alpha), alpha, 1.0 / alpha).unwrap();
        assert_eq!(v.classification, Classification::GaussianExtremal);
        assert!(v.gaussian_fit_residual.unwrap() < 1e-8);
    }

    #[test]
    fn stricter_fourier_bound_is_not_applicable() {
        let g = Grid::uniform(1, 20.0, 256).unwrap();
        let alpha = 0.7;
        let v = hardy_certify(&gauss(&g, alpha), alpha, 0.9 / alpha).unwrap();
        assert!(!v.spectral.passed);
        assert_eq!(v.classification, Classification::NotApplicable);
        assert_eq!(v.arithmetic, Classification::ForcedZero);
    }

    #[test]
    fn zero_data_is_forced_zero() {
        let g = Grid::uniform(2, 5.0, 16).unwrap();
        let z = SampledField::zeros(&g, FieldSpace::Euclidean);
        let v = hardy_certify(&z, 0.5, 1.0).unwrap();
        assert_eq!(v.classification, Classification::ForcedZero);
        assert_eq!(v.l2_norm, 0.0);
    }

    #[test]
    fn undecayed_data_is_rejected() {
        let g = Grid::uniform(1, 2.0, 32).unwrap();
        assert!(hardy_certify(&gauss(&g, 1.0), 1.0, 1.0).is_err());
    }

    #[test]
    fn corollary_threshold_arithmetic() {
        let g = Grid::uniform(2, 12.0, 64).unwrap();
        let a_mat = RMat::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 1.0]));
        let v = matrix_hardy_certify(&gauss(&g, 1.0), &a_mat, 1.0, 3.0).unwrap();
        assert_eq!(v.product, 3.0);
        assert_eq!(v.threshold, 4.0);
        assert_eq!(v.margin, 1.0);
        assert_eq!(v.arithmetic, Classification::ForcedZero);
        // F^ = 4 pi e^{-|y|^2}: along the lambda = 2 axis the bound needs b >= 4.
        assert!(!v.spectral.passed);
        assert_eq!(v.classification, Classification::NotApplicable);
        let mut eig = v.eigen_products.clone();
        eig.sort_by(|x, y| x.0.total_cmp(&y.0));
        assert_eq!(eig, vec![(1.0, 3.0), (2.0, 0.75)]);
    }

    #[test]
    fn zero_matrix_rejected() {
        let g = Grid::uniform(2, 12.0, 32).unwrap();
        assert!(matrix_hardy_certify(&gauss(&g, 1.0), &RMat::zeros(2, 2), 1.0, 1.0).is_err());
    }

    #[test]
    fn operator_norm_examples() {
        assert_eq!(operator_norm(&RMat::identity(3, 3)), 1.0);
        assert_eq!(operator_norm(&RMat::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, -3.0]))), 3.0);
    }

    #[test]
    fn uniqueness_threshold_arithmetic() {
        assert!((uniqueness_margin(1.0, 1.0, 1.0, 1.1) - 0.21).abs() < 1e-12);
    }

    #[test]
    fn lift_rejects_large_delta() {
        assert_eq!(lifted_rate(2.0, 0.5), Err(Error::EnvelopeTransfer(1.0)));
        assert!((lifted_rate(1.0, 0.1).unwrap() - 1.0 / 0.9).abs() < 1e-15);
    }
}
