//! FFT plumbing on centred grids: continuous Fourier transform with the
//! convention `g^(xi) = int g(x) e^{-i xi.x} dx`, and band-limited upsampling.

use crate::twisted::{Axis, FieldSpace, Grid, SampledField};
use num_complex::Complex64;
use rustfft::FftPlanner;

/// Runs `f` over every 1-D line of `values` along `axis`; `shape` is row-major
/// (last axis fastest). The closure may return a line of a different length.
pub(crate) fn map_axis<F>(values: &[Complex64], shape: &[usize], axis: usize, new_len: usize, mut f: F) -> Vec<Complex64>
where
    F: FnMut(&[Complex64]) -> Vec<Complex64>,
{
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut out = vec![Complex64::new(0.0, 0.0); outer * new_len * inner];
    let mut line = vec![Complex64::new(0.0, 0.0); len];
    for o in 0..outer {
        for i in 0..inner {
            for k in 0..len {
                line[k] = values[(o * len + k) * inner + i];
            }
            let res = f(&line);
            debug_assert_eq!(res.len(), new_len);
            for (k, v) in res.into_iter().enumerate() {
                out[(o * new_len + k) * inner + i] = v;
            }
        }
    }
    out
}

/// Continuous Fourier transform of a field sampled on a centred grid, returned on
/// the frequency grid `xi_k = (k - N/2) pi / L` (half-width `pi / h`).
pub fn fourier_transform(f: &SampledField) -> SampledField {
    let grid = &f.grid;
    let shape = grid.shape();
    let mut planner = FftPlanner::<f64>::new();
    let mut values = f.values.clone();
    for (a, axis) in grid.axes.iter().enumerate() {
        let n = axis.points;
        let h = axis.spacing();
        let fft = planner.plan_fft_forward(n);
        values = map_axis(&values, &shape, a, n, |line| {
            let mut buf: Vec<Complex64> =
                line.iter().enumerate().map(|(k, v)| if k % 2 == 0 { *v } else { -*v }).collect();
            fft.process(&mut buf);
            buf.iter()
                .enumerate()
                .map(|(k, v)| {
                    let sign = if (k + n / 2) % 2 == 0 { 1.0 } else { -1.0 };
                    v * (h * sign)
                })
                .collect()
        });
    }
    SampledField { grid: grid.frequency_grid(), values, space: FieldSpace::Euclidean }
}

/// Inverse of [`fourier_transform`]: takes samples on the frequency grid of
/// `grid` and returns the function on `grid`.
pub fn inverse_fourier_transform(fhat: &SampledField, grid: &Grid) -> SampledField {
    let shape = grid.shape();
    let mut planner = FftPlanner::<f64>::new();
    let mut values = fhat.values.clone();
    for (a, axis) in grid.axes.iter().enumerate() {
        let n = axis.points;
        let dxi = std::f64::consts::PI / axis.half_width;
        let fft = planner.plan_fft_inverse(n);
        values = map_axis(&values, &shape, a, n, |line| {
            let mut buf: Vec<Complex64> = line
                .iter()
                .enumerate()
                .map(|(k, v)| if (k + n / 2) % 2 == 0 { *v } else { -*v })
                .collect();
            fft.process(&mut buf);
            let scale = dxi / (2.0 * std::f64::consts::PI);
            buf.iter()
                .enumerate()
                .map(|(k, v)| if k % 2 == 0 { v * scale } else { -v * scale })
                .collect()
        });
    }
    SampledField { grid: grid.clone(), values, space: FieldSpace::Euclidean }
}

/// Trigonometric interpolation onto a grid `r` times finer along every axis.
/// Node `r*k` of the fine grid is node `k` of the coarse one.
pub fn upsample(f: &SampledField, r: usize) -> SampledField {
    assert!(r >= 1);
    let grid = &f.grid;
    if r == 1 {
        return f.clone();
    }
    let mut shape = grid.shape();
    let mut planner = FftPlanner::<f64>::new();
    let mut values = f.values.clone();
    for a in 0..grid.dim() {
        let n = shape[a];
        let nf = n * r;
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(nf);
        values = map_axis(&values, &shape, a, nf, |line| {
            let mut spec = line.to_vec();
            fwd.process(&mut spec);
            let mut pad = vec![Complex64::new(0.0, 0.0); nf];
            for k in 0..n / 2 {
                pad[k] = spec[k];
            }
            for k in n / 2 + 1..n {
                pad[k + nf - n] = spec[k];
            }
            pad[n / 2] = spec[n / 2] * 0.5;
            pad[nf - n / 2] = spec[n / 2] * 0.5;
            inv.process(&mut pad);
            pad.iter().map(|v| v / n as f64).collect()
        });
        shape[a] = nf;
    }
    let axes = grid.axes.iter().map(|ax| Axis { half_width: ax.half_width, points: ax.points * r }).collect();
    SampledField { grid: Grid { axes }, values, space: f.space.clone() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::twisted::sample;
    use std::f64::consts::PI;

    #[test]
    fn gaussian_transform() {
        let grid = Grid::uniform(1, 10.0, 128).unwrap();
        let alpha = 0.7;
        let g = sample(|x| Complex64::new((-x[0] * x[0] / (4.0 * alpha)).exp(), 0.0), &grid, FieldSpace::Euclidean);
        let gh = fourier_transform(&g);
        for (k, v) in gh.values.iter().enumerate() {
            let xi = gh.grid.point(k)[0];
            let want = (4.0 * PI * alpha).sqrt() * (-alpha * xi * xi).exp();
            assert!((v - want).norm() < 1e-12, "xi = {xi}");
        }
        let back = inverse_fourier_transform(&gh, &grid);
        assert!(back.rel_l2_error(&g) < 1e-13);
    }

    #[test]
    fn shifted_gaussian_phase() {
        let grid = Grid::uniform(2, 8.0, 64).unwrap();
        let g = sample(|x| Complex64::new((-(x[0] - 1.0).powi(2) - x[1] * x[1]).exp(), 0.0), &grid, FieldSpace::Euclidean);
        let gh = fourier_transform(&g);
        for (k, v) in gh.values.iter().enumerate().step_by(97) {
            let xi = gh.grid.point(k);
            let mag = PI * (-(xi[0] * xi[0] + xi[1] * xi[1]) / 4.0).exp();
            let want = Complex64::from_polar(mag, -xi[0]);
            assert!((v - want).norm() < 1e-12);
        }
    }

    #[test]
    fn upsampling_is_spectrally_accurate() {
        let grid = Grid::uniform(2, 6.0, 48).unwrap();
        let f = |x: &[f64]| Complex64::new((-(x[0] * x[0] + x[1] * x[1])).exp(), x[0] * (-x[0] * x[0]).exp());
        let g = sample(f, &grid, FieldSpace::Euclidean);
        let up = upsample(&g, 3);
        assert_eq!(up.grid.axes[0].points, 144);
        let exact = sample(f, &up.grid, FieldSpace::Euclidean);
        assert!(up.rel_l2_error(&exact) < 1e-9);
    }
}
