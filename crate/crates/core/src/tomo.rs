//! Parallel-beam ray transform, its matched transpose, and filtered back projection.
//!
//! A ray is parametrised by its angle `θ_k = kπ/M` and signed detector offset
//! `s`; it is the line `{ s ω(θ) + t ω⊥(θ) }` with `ω = (cos θ, sin θ)` and
//! `ω⊥ = (-sin θ, cos θ)`. Line integrals are approximated by bilinear samples
//! spaced `Δs = min(hx, hy) / 2` apart.
//!
//! Data space carries the inner product `⟨g, h⟩_Y = hs (π/M) Σ g h` and image
//! space `⟨f, e⟩_X = hx hy Σ f e`; [`back_projection`] is the exact adjoint of
//! [`ray_transform`] with respect to these products.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{Grid2D, ScalarImage};

/// Angles and detector layout of a parallel-beam scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinogramGeometry {
    pub n_angles: usize,
    pub n_detectors: usize,
    pub s_min: f64,
    pub s_max: f64,
}

impl SinogramGeometry {
    pub fn new(n_angles: usize, n_detectors: usize, s_min: f64, s_max: f64) -> Result<Self> {
        if n_angles == 0 {
            return Err(Error::Config("n_angles must be at least 1".into()));
        }
        if n_detectors < 2 {
            return Err(Error::Config("n_detectors must be at least 2".into()));
        }
        if !(s_max > s_min) || !s_min.is_finite() || !s_max.is_finite() {
            return Err(Error::Config(format!("invalid detector extent [{s_min}, {s_max}]")));
        }
        Ok(Self {
            n_angles,
            n_detectors,
            s_min,
            s_max,
        })
    }

    /// Detector row covering the grid's diagonal plus one detector cell of margin.
    pub fn for_grid(grid: &Grid2D, n_angles: usize, n_detectors: usize) -> Result<Self> {
        if n_detectors < 2 {
            return Err(Error::Config("n_detectors must be at least 2".into()));
        }
        let reach = corner_radius(grid);
        let hs = 2.0 * reach / (n_detectors - 1) as f64;
        let half = reach + 0.5 * hs;
        Self::new(n_angles, n_detectors, -half, half)
    }

    /// Detector spacing `hs`.
    #[inline]
    pub fn spacing(&self) -> f64 {
        (self.s_max - self.s_min) / self.n_detectors as f64
    }

    /// Angle `k` in radians.
    #[inline]
    pub fn angle(&self, k: usize) -> f64 {
        k as f64 * PI / self.n_angles as f64
    }

    #[inline]
    pub fn detector(&self, j: usize) -> f64 {
        self.s_min + (j as f64 + 0.5) * self.spacing()
    }

    /// Quadrature weight `hs π / M` of one sinogram entry.
    #[inline]
    pub fn cell_weight(&self) -> f64 {
        self.spacing() * PI / self.n_angles as f64
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n_angles * self.n_detectors
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Distance from the origin to the farthest grid corner.
fn corner_radius(grid: &Grid2D) -> f64 {
    let xs = grid.x_min.abs().max(grid.x_max.abs());
    let ys = grid.y_min.abs().max(grid.y_max.abs());
    xs.hypot(ys)
}

/// Line-integral data, angle-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    geometry: SinogramGeometry,
    values: Vec<f64>,
}

impl Sinogram {
    pub fn new(geometry: SinogramGeometry, values: Vec<f64>) -> Result<Self> {
        if values.len() != geometry.len() {
            return Err(Error::Config(format!(
                "sinogram has {} values, geometry expects {}",
                values.len(),
                geometry.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite sinogram value".into()));
        }
        Ok(Self { geometry, values })
    }

    pub fn zeros(geometry: SinogramGeometry) -> Self {
        Self {
            geometry,
            values: vec![0.0; geometry.len()],
        }
    }

    pub(crate) fn from_vec_unchecked(geometry: SinogramGeometry, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), geometry.len());
        Self { geometry, values }
    }

    #[inline]
    pub fn geometry(&self) -> &SinogramGeometry {
        &self.geometry
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Projection at angle index `k`.
    pub fn row(&self, k: usize) -> &[f64] {
        let p = self.geometry.n_detectors;
        &self.values[k * p..(k + 1) * p]
    }

    /// Weighted data-space inner product.
    pub fn dot(&self, other: &Sinogram) -> f64 {
        debug_assert_eq!(self.geometry, other.geometry);
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>() * self.geometry.cell_weight()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn zip_map(&self, other: &Sinogram, f: impl Fn(f64, f64) -> f64) -> Result<Sinogram> {
        if self.geometry != other.geometry {
            return Err(Error::GridMismatch("sinogram geometries differ".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(Sinogram {
            geometry: self.geometry,
            values,
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Sinogram {
        Sinogram {
            geometry: self.geometry,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Visits every bilinear stencil entry of every ray sample.
///
/// The callback receives `(ray index, pixel index, weight)` where the weight
/// already includes the ray step. Samples whose stencil lies entirely outside
/// the lattice are skipped; they contribute exactly zero.
fn trace_rays(grid: &Grid2D, geom: &SinogramGeometry, mut visit: impl FnMut(usize, usize, f64)) {
    let hx = grid.hx();
    let hy = grid.hy();
    let step = 0.5 * hx.min(hy);
    let reach = corner_radius(grid) + hx.max(hy);
    let n_samples = (2.0 * reach / step).ceil() as usize + 1;
    let t0 = -0.5 * (n_samples - 1) as f64 * step;
    // A sample influences the lattice only inside this box.
    let (bx0, bx1) = (grid.x_min - hx, grid.x_max + hx);
    let (by0, by1) = (grid.y_min - hy, grid.y_max + hy);
    let nx = grid.nx as isize;
    let ny = grid.ny as isize;

    for a in 0..geom.n_angles {
        let theta = geom.angle(a);
        let (sin, cos) = theta.sin_cos();
        let (dx, dy) = (-sin, cos);
        for d in 0..geom.n_detectors {
            let ray = a * geom.n_detectors + d;
            let s = geom.detector(d);
            let (px, py) = (s * cos, s * sin);
            // Slab clipping of t to the influence box.
            let mut t_lo = f64::NEG_INFINITY;
            let mut t_hi = f64::INFINITY;
            for (p, dir, lo, hi) in [(px, dx, bx0, bx1), (py, dy, by0, by1)] {
                if dir.abs() < 1e-14 {
                    if p <= lo || p >= hi {
                        t_lo = f64::INFINITY;
                    }
                } else {
                    let ta = (lo - p) / dir;
                    let tb = (hi - p) / dir;
                    t_lo = t_lo.max(ta.min(tb));
                    t_hi = t_hi.min(ta.max(tb));
                }
            }
            if !(t_hi > t_lo) {
                continue;
            }
            let k_lo = (((t_lo - t0) / step).floor().max(0.0)) as usize;
            let k_hi = (((t_hi - t0) / step).ceil() as usize).min(n_samples - 1);
            for k in k_lo..=k_hi {
                let t = t0 + k as f64 * step;
                let x = px + t * dx;
                let y = py + t * dy;
                let u = (x - grid.x_min) / hx - 0.5;
                let v = (y - grid.y_min) / hy - 0.5;
                let fu = u.floor();
                let fv = v.floor();
                let i0 = fu as isize;
                let j0 = fv as isize;
                if i0 < -1 || j0 < -1 || i0 >= nx || j0 >= ny {
                    continue;
                }
                let tx = u - fu;
                let ty = v - fv;
                let weights = [
                    (0, 0, (1.0 - tx) * (1.0 - ty)),
                    (1, 0, tx * (1.0 - ty)),
                    (0, 1, (1.0 - tx) * ty),
                    (1, 1, tx * ty),
                ];
                for (oi, oj, w) in weights {
                    let i = i0 + oi;
                    let j = j0 + oj;
                    if i >= 0 && j >= 0 && i < nx && j < ny {
                        visit(ray, j as usize * grid.nx + i as usize, w * step);
                    }
                }
            }
        }
    }
}

/// Discrete parallel-beam ray transform.
pub fn ray_transform(img: &ScalarImage, geom: &SinogramGeometry) -> Sinogram {
    let f = img.values();
    let mut out = vec![0.0; geom.len()];
    trace_rays(img.grid(), geom, |ray, pix, w| out[ray] += w * f[pix]);
    Sinogram::from_vec_unchecked(*geom, out)
}

/// Exact adjoint of [`ray_transform`] under the weighted inner products.
pub fn back_projection(sino: &Sinogram, grid: &Grid2D) -> ScalarImage {
    let g = sino.values();
    let mut out = vec![0.0; grid.len()];
    trace_rays(grid, sino.geometry(), |ray, pix, w| out[pix] += w * g[ray]);
    let scale = sino.geometry().cell_weight() / grid.cell_area();
    out.iter_mut().for_each(|v| *v *= scale);
    ScalarImage::from_vec_unchecked(*grid, out)
}

/// Frequency response of the Hamming-windowed ramp filter on a padded row of length `len`.
fn ramp_hamming_response(len: usize, hs: f64, freq_scaling: f64, fft: &Arc<dyn Fft<f64>>) -> Vec<f64> {
    // Band-limited ramp kernel sampled in space; its DFT has the correct DC value.
    let mut kernel = vec![Complex::new(0.0, 0.0); len];
    kernel[0].re = 1.0 / (4.0 * hs * hs);
    for n in 1..len / 2 {
        if n % 2 == 1 {
            let v = -1.0 / (PI * PI * (n * n) as f64 * hs * hs);
            kernel[n].re = v;
            kernel[len - n].re = v;
        }
    }
    fft.process(&mut kernel);
    let cutoff = freq_scaling * 0.5 / hs;
    (0..len)
        .map(|k| {
            let kk = if k <= len / 2 { k as f64 } else { k as f64 - len as f64 };
            let rho = kk / (len as f64 * hs);
            let window = if rho.abs() <= cutoff {
                0.54 + 0.46 * (PI * rho / cutoff).cos()
            } else {
                0.0
            };
            // hs turns the discrete convolution into a quadrature of the continuous one.
            kernel[k].re * hs * window
        })
        .collect()
}

/// Filtered back projection with a Hamming-windowed ramp filter.
///
/// `freq_scaling` sets the cutoff as a fraction of the detector Nyquist
/// frequency. Filtered rows are back-projected with linear interpolation in
/// the detector coordinate.
pub fn fbp(sino: &Sinogram, grid: &Grid2D, freq_scaling: f64) -> Result<ScalarImage> {
    if !(freq_scaling > 0.0 && freq_scaling <= 1.0) {
        return Err(Error::Config(format!(
            "freq_scaling must lie in (0, 1], got {freq_scaling}"
        )));
    }
    let geom = sino.geometry();
    let p = geom.n_detectors;
    let hs = geom.spacing();
    let len = (2 * p).next_power_of_two();
    let mut planner = FftPlanner::new();
    let forward = planner.plan_fft_forward(len);
    let inverse = planner.plan_fft_inverse(len);
    let response = ramp_hamming_response(len, hs, freq_scaling, &forward);

    let mut filtered = vec![0.0; geom.len()];
    let mut buf = vec![Complex::new(0.0, 0.0); len];
    for a in 0..geom.n_angles {
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for (c, &v) in buf.iter_mut().zip(sino.row(a)) {
            c.re = v;
        }
        forward.process(&mut buf);
        for (c, &r) in buf.iter_mut().zip(&response) {
            *c *= r;
        }
        inverse.process(&mut buf);
        for (j, c) in buf.iter().take(p).enumerate() {
            filtered[a * p + j] = c.re / len as f64;
        }
    }

    let dtheta = PI / geom.n_angles as f64;
    let trig: Vec<(f64, f64)> = (0..geom.n_angles).map(|a| geom.angle(a).sin_cos()).collect();
    let values = grid
        .centers()
        .map(|(_, x, y)| {
            let mut acc = 0.0;
            for (a, &(sin, cos)) in trig.iter().enumerate() {
                let s = x * cos + y * sin;
                let u = (s - geom.s_min) / hs - 0.5;
                let fu = u.floor();
                let j0 = fu as isize;
                let tw = u - fu;
                let row = &filtered[a * p..(a + 1) * p];
                let at = |j: isize| {
                    if j >= 0 && (j as usize) < p {
                        row[j as usize]
                    } else {
                        0.0
                    }
                };
                acc += (1.0 - tw) * at(j0) + tw * at(j0 + 1);
            }
            acc * dtheta
        })
        .collect();
    Ok(ScalarImage::from_vec_unchecked(*grid, values))
}
