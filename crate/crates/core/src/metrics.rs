//! Figures of merit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ScalarImage;
use crate::tomo::Sinogram;

/// Dynamic range used for phantoms with grey values in `[0, 1]`.
pub const UNIT_RANGE: f64 = 1.0;

const WINDOW: usize = 11;
const WINDOW_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub ssim: f64,
    /// `None` when the images are identical.
    pub psnr_db: Option<f64>,
    pub snr_db: Option<f64>,
}

impl MetricReport {
    /// SSIM and PSNR of `result` against `reference` with unit dynamic range.
    pub fn compare(result: &ScalarImage, reference: &ScalarImage) -> Result<Self> {
        let ssim = ssim(result, reference, UNIT_RANGE)?;
        let psnr_db = match psnr(result, reference, UNIT_RANGE) {
            Ok(p) => Some(p),
            Err(Error::InfinitePsnr) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            ssim,
            psnr_db,
            snr_db: None,
        })
    }
}

fn gaussian_window() -> [f64; WINDOW] {
    let mut w = [0.0; WINDOW];
    let c = (WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        *v = (-(i as f64 - c).powi(2) / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Separable filtering keeping only positions where the window fits.
fn filter_valid(values: &[f64], nx: usize, ny: usize, w: &[f64; WINDOW]) -> Vec<f64> {
    let ox = nx + 1 - WINDOW;
    let oy = ny + 1 - WINDOW;
    let mut rows = vec![0.0; ox * ny];
    for j in 0..ny {
        for i in 0..ox {
            rows[j * ox + i] = (0..WINDOW).map(|t| w[t] * values[j * nx + i + t]).sum();
        }
    }
    let mut out = vec![0.0; ox * oy];
    for j in 0..oy {
        for i in 0..ox {
            out[j * ox + i] = (0..WINDOW).map(|t| w[t] * rows[(j + t) * ox + i]).sum();
        }
    }
    out
}

/// Mean structural similarity with an 11×11 Gaussian window (σ = 1.5).
pub fn ssim(a: &ScalarImage, b: &ScalarImage, dynamic_range: f64) -> Result<f64> {
    a.grid().check_same(b.grid(), "ssim operands")?;
    if !(dynamic_range > 0.0) {
        return Err(Error::Config(format!(
            "dynamic range must be positive, got {dynamic_range}"
        )));
    }
    let g = a.grid();
    if g.nx < WINDOW || g.ny < WINDOW {
        return Err(Error::Config(format!("ssim needs at least {WINDOW}×{WINDOW} pixels")));
    }
    let w = gaussian_window();
    let (x, y) = (a.values(), b.values());
    let prod = |f: &dyn Fn(usize) -> f64| (0..x.len()).map(f).collect::<Vec<_>>();
    let mx = filter_valid(x, g.nx, g.ny, &w);
    let my = filter_valid(y, g.nx, g.ny, &w);
    let sxx = filter_valid(&prod(&|k| x[k] * x[k]), g.nx, g.ny, &w);
    let syy = filter_valid(&prod(&|k| y[k] * y[k]), g.nx, g.ny, &w);
    let sxy = filter_valid(&prod(&|k| x[k] * y[k]), g.nx, g.ny, &w);
    let c1 = (K1 * dynamic_range).powi(2);
    let c2 = (K2 * dynamic_range).powi(2);
    let total: f64 = (0..mx.len())
        .map(|k| {
            let (ux, uy) = (mx[k], my[k]);
            let vx = sxx[k] - ux * ux;
            let vy = syy[k] - uy * uy;
            let cxy = sxy[k] - ux * uy;
            ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(total / mx.len() as f64)
}

/// `10 log10(L² / MSE)`; identical images give [`Error::InfinitePsnr`].
pub fn psnr(a: &ScalarImage, reference: &ScalarImage, dynamic_range: f64) -> Result<f64> {
    a.grid().check_same(reference.grid(), "psnr operands")?;
    let n = a.values().len() as f64;
    let mse = a
        .values()
        .iter()
        .zip(reference.values())
        .map(|(p, q)| (p - q).powi(2))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Err(Error::InfinitePsnr);
    }
    Ok(10.0 * (dynamic_range * dynamic_range / mse).log10())
}

fn centered_energy(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (sum, n) = values.clone().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    let mean = sum / n as f64;
    values.map(|v| (v - mean).powi(2)).sum()
}

/// SNR in dB of `noisy` relative to its noise-free part, with mean-subtracted energies.
pub fn measure_snr(ideal: &Sinogram, noisy: &Sinogram) -> Result<f64> {
    if ideal.geometry() != noisy.geometry() {
        return Err(Error::GridMismatch("sinogram geometries differ".into()));
    }
    let signal = centered_energy(ideal.values().iter().copied());
    let noise = centered_energy(noisy.values().iter().zip(ideal.values()).map(|(n, i)| n - i));
    if !(noise > 0.0) {
        return Err(Error::UndefinedSnr("noise has zero variance".into()));
    }
    Ok(10.0 * (signal / noise).log10())
}

/// Number of 8-connected components of pixels strictly above `threshold`.
pub fn count_components(img: &ScalarImage, threshold: f64) -> usize {
    let g = img.grid();
    let (nx, ny) = (g.nx, g.ny);
    let on: Vec<bool> = img.values().iter().map(|&v| v > threshold).collect();
    let mut seen = vec![false; on.len()];
    let mut stack = Vec::new();
    let mut count = 0;
    for start in 0..on.len() {
        if !on[start] || seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(k) = stack.pop() {
            let (i, j) = ((k % nx) as isize, (k / nx) as isize);
            for dj in -1..=1 {
                for di in -1..=1 {
                    let (a, b) = (i + di, j + dj);
                    if a < 0 || b < 0 || a >= nx as isize || b >= ny as isize {
                        continue;
                    }
                    let m = b as usize * nx + a as usize;
                    if on[m] && !seen[m] {
                        seen[m] = true;
                        stack.push(m);
                    }
                }
            }
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid2D;
    use crate::tomo::SinogramGeometry;

    fn grid() -> Grid2D {
        Grid2D::square(32, 16.0).unwrap()
    }

    fn pattern(a: f64) -> ScalarImage {
        ScalarImage::from_fn(grid(), |x, y| 0.5 + 0.4 * (a * x).sin() * (0.3 * y).cos())
    }

    #[test]
    fn ssim_identity_and_symmetry() {
        let a = pattern(0.4);
        assert_eq!(ssim(&a, &a, 1.0).unwrap(), 1.0);
        let b = pattern(0.5);
        let (ab, ba) = (ssim(&a, &b, 1.0).unwrap(), ssim(&b, &a, 1.0).unwrap());
        assert!((ab - ba).abs() < 1e-12);
        assert!(ab < 1.0 && ab > -1.0);
    }

    #[test]
    fn ssim_of_inverted_checkerboard_is_low() {
        let g = grid();
        let f = ScalarImage::from_fn(g, |x, y| {
            if ((x + 16.0) as i64 + (y + 16.0) as i64) % 2 == 0 {
                1.0
            } else {
                0.0
            }
        });
        let inv = f.map(|v| 1.0 - v);
        assert!(ssim(&f, &inv, 1.0).unwrap() < 0.2);
    }

    #[test]
    fn ssim_affine_invariance() {
        let (a, b) = (pattern(0.4), pattern(0.55));
        let s = ssim(&a, &b, 1.0).unwrap();
        let (a2, b2) = (a.map(|v| 3.0 * v), b.map(|v| 3.0 * v));
        assert!((ssim(&a2, &b2, 3.0).unwrap() - s).abs() < 1e-12);
    }

    #[test]
    fn ssim_matches_direct_window_sum() {
        let (a, b) = (pattern(0.4), pattern(0.7));
        let w = gaussian_window();
        let (nx, ny) = (32, 32);
        let (c1, c2) = (1e-4, 9e-4);
        let mut acc = 0.0;
        let mut count = 0;
        for j in 0..=ny - WINDOW {
            for i in 0..=nx - WINDOW {
                let (mut ux, mut uy, mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for q in 0..WINDOW {
                    for p in 0..WINDOW {
                        let wt = w[p] * w[q];
                        let (u, v) = (a.at(i + p, j + q), b.at(i + p, j + q));
                        ux += wt * u;
                        uy += wt * v;
                        xx += wt * u * u;
                        yy += wt * v * v;
                        xy += wt * u * v;
                    }
                }
                let (vx, vy, cxy) = (xx - ux * ux, yy - uy * uy, xy - ux * uy);
                acc += ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
                count += 1;
            }
        }
        assert!((ssim(&a, &b, 1.0).unwrap() - acc / count as f64).abs() < 1e-12);
    }

    #[test]
    fn psnr_cases() {
        let a = pattern(0.4);
        let shifted = a.map(|v| v + 0.1);
        assert!((psnr(&shifted, &a, 1.0).unwrap() - 20.0).abs() < 1e-9);
        let half = a.map(|v| v + 0.05);
        let gain = psnr(&half, &a, 1.0).unwrap() - 20.0;
        assert!((gain - 20.0 * 2f64.log10()).abs() < 1e-9);
        assert!(matches!(psnr(&a, &a, 1.0), Err(Error::InfinitePsnr)));
        assert!(MetricReport::compare(&a, &a).unwrap().psnr_db.is_none());
    }

    #[test]
    fn psnr_decreases_with_noise() {
        let a = pattern(0.4);
        let noise = pattern(1.7).map(|v| v - 0.5);
        let values: Vec<f64> = [0.01, 0.05, 0.2]
            .iter()
            .map(|amp| psnr(&a.zip_map(&noise, |p, n| p + amp * n).unwrap(), &a, 1.0).unwrap())
            .collect();
        assert!(values[0] > values[1] && values[1] > values[2]);
    }

    #[test]
    fn snr_cases() {
        let geom = SinogramGeometry::new(2, 4, -1.0, 1.0).unwrap();
        let ideal = Sinogram::new(geom, vec![1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0]).unwrap();
        let noise = [1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0];
        let with = |scale: f64, offset: f64| {
            Sinogram::new(
                geom,
                ideal
                    .values()
                    .iter()
                    .zip(&noise)
                    .map(|(i, n)| i + scale * n + offset)
                    .collect(),
            )
            .unwrap()
        };
        assert!(measure_snr(&ideal, &with(1.0, 0.0)).unwrap().abs() < 1e-12);
        assert!((measure_snr(&ideal, &with(0.1f64.sqrt(), 0.0)).unwrap() - 10.0).abs() < 1e-9);
        assert!((measure_snr(&ideal, &with(1.0, 5.0)).unwrap()).abs() < 1e-12);
        assert!(matches!(
            measure_snr(&ideal, &with(0.0, 2.0)),
            Err(Error::UndefinedSnr(_))
        ));
    }

    #[test]
    fn component_counting() {
        let g = Grid2D::new(6, 4, (0.0, 6.0), (0.0, 4.0)).unwrap();
        #[rustfmt::skip]
        let v = vec![
            1.0, 0.0, 0.0, 0.0, 1.0, 1.0,
            0.0, 1.0, 0.0, 0.0, 0.0, 0.0,
            0.0, 0.0, 0.0, 0.6, 0.0, 0.0,
            1.0, 0.0, 0.0, 0.0, 0.0, 0.4,
        ];
        let img = ScalarImage::new(g, v).unwrap();
        // The diagonal pair joins under 8-connectivity.
        assert_eq!(count_components(&img, 0.5), 4);
        assert_eq!(count_components(&img, 0.3), 5);
        assert_eq!(count_components(&img, 1.0), 0);
    }
}
