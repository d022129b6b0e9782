//! Gaussian reproducing kernel and FFT-based kernel smoothing.
//!
//! The kernel is diagonal, so vector fields are smoothed componentwise. The
//! smoothing integral `∫ K(x, y) η(y) dy` is evaluated as a linear (zero
//! padded) convolution with the sampled kernel times the pixel area.

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Grid2D, VectorField2D};

/// Kernel support in units of sigma.
pub const TRUNCATION_SIGMAS: f64 = 4.0;

/// Gaussian kernel bound to a grid, with its padded transform precomputed.
#[derive(Clone)]
pub struct KernelSpec {
    sigma: f64,
    grid: Grid2D,
    /// Padded sizes along x and y.
    lx: usize,
    ly: usize,
    /// Transform of the weighted kernel, stored transposed (x-major).
    freq: Vec<f64>,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for KernelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KernelSpec")
            .field("sigma", &self.sigma)
            .field("grid", &self.grid)
            .field("padded", &(self.lx, self.ly))
            .finish()
    }
}

/// Smallest `n >= m` whose prime factors are 2, 3 and 5.
fn fast_len(m: usize) -> usize {
    let mut n = m.max(1);
    loop {
        let mut r = n;
        for p in [2, 3, 5] {
            while r.is_multiple_of(p) {
                r /= p;
            }
        }
        if r == 1 {
            return n;
        }
        n += 1;
    }
}

/// `exp(-r^2 / (2 sigma^2))` inside the truncation radius, zero beyond it.
#[inline]
fn profile(sigma: f64, r_sq: f64) -> f64 {
    // Relative slack so that offsets lying exactly on the cutoff are kept
    // regardless of rounding in how the offset was computed.
    let cut = TRUNCATION_SIGMAS * sigma;
    if r_sq > cut * cut * (1.0 + 1e-9) {
        0.0
    } else {
        (-r_sq / (2.0 * sigma * sigma)).exp()
    }
}

impl KernelSpec {
    pub fn new(sigma: f64, grid: Grid2D) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::Config(format!("kernel sigma must be positive, got {sigma}")));
        }
        let hx = grid.hx();
        let hy = grid.hy();
        let radius = TRUNCATION_SIGMAS * sigma;
        // Offsets beyond the image extent never meet another pixel.
        let rx = ((radius / hx + 1e-9).floor() as usize).min(grid.nx - 1);
        let ry = ((radius / hy + 1e-9).floor() as usize).min(grid.ny - 1);
        let lx = fast_len(grid.nx + rx);
        let ly = fast_len(grid.ny + ry);

        let mut planner = FftPlanner::new();
        let row_fwd = planner.plan_fft_forward(lx);
        let row_inv = planner.plan_fft_inverse(lx);
        let col_fwd = planner.plan_fft_forward(ly);
        let col_inv = planner.plan_fft_inverse(ly);

        let weight = grid.cell_area();
        let mut buf = vec![Complex::new(0.0, 0.0); lx * ly];
        for oy in -(ry as isize)..=(ry as isize) {
            let wy = oy.rem_euclid(ly as isize) as usize;
            let dy = oy as f64 * hy;
            for ox in -(rx as isize)..=(rx as isize) {
                let wx = ox.rem_euclid(lx as isize) as usize;
                let dx = ox as f64 * hx;
                buf[wy * lx + wx].re = weight * profile(sigma, dx * dx + dy * dy);
            }
        }
        let mut spec = Self {
            sigma,
            grid,
            lx,
            ly,
            freq: Vec::new(),
            row_fwd,
            row_inv,
            col_fwd,
            col_inv,
        };
        let transformed = spec.forward_2d(buf);
        // The kernel is real and even, so its transform is real.
        spec.freq = transformed.iter().map(|c| c.re).collect();
        Ok(spec)
    }

    #[inline]
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    #[inline]
    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    #[inline]
    pub fn truncation_radius(&self) -> f64 {
        TRUNCATION_SIGMAS * self.sigma
    }

    /// Padded FFT size `(lx, ly)`.
    pub fn padded_shape(&self) -> (usize, usize) {
        (self.lx, self.ly)
    }

    /// Scalar kernel value between two points.
    pub fn kernel_value(&self, x: (f64, f64), y: (f64, f64)) -> f64 {
        let dx = x.0 - y.0;
        let dy = x.1 - y.1;
        profile(self.sigma, dx * dx + dy * dy)
    }

    /// Row transforms on a y-major buffer, then column transforms; result is x-major.
    fn forward_2d(&self, mut buf: Vec<Complex<f64>>) -> Vec<Complex<f64>> {
        self.row_fwd.process(&mut buf);
        let mut t = transpose(&buf, self.lx, self.ly);
        self.col_fwd.process(&mut t);
        t
    }

    /// Inverse of [`forward_2d`](Self::forward_2d) without normalisation.
    fn inverse_2d(&self, mut t: Vec<Complex<f64>>) -> Vec<Complex<f64>> {
        self.col_inv.process(&mut t);
        let mut buf = transpose(&t, self.ly, self.lx);
        self.row_inv.process(&mut buf);
        buf
    }

    /// Realises `x ↦ ∫ K(x, y) v(y) dy` on the grid.
    ///
    /// Both components travel through a single complex transform as
    /// `vx + i vy`, which is exact because the kernel is real.
    pub fn smooth(&self, vf: &VectorField2D) -> Result<VectorField2D> {
        self.grid.check_same(vf.grid(), "kernel and vector field")?;
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let mut buf = vec![Complex::new(0.0, 0.0); self.lx * self.ly];
        for j in 0..ny {
            for i in 0..nx {
                let k = j * nx + i;
                buf[j * self.lx + i] = Complex::new(vf.vx[k], vf.vy[k]);
            }
        }
        let mut spectrum = self.forward_2d(buf);
        for (c, &w) in spectrum.iter_mut().zip(&self.freq) {
            *c *= w;
        }
        let out = self.inverse_2d(spectrum);
        let norm = 1.0 / (self.lx * self.ly) as f64;
        let mut vx = Vec::with_capacity(nx * ny);
        let mut vy = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let c = out[j * self.lx + i];
                vx.push(c.re * norm);
                vy.push(c.im * norm);
            }
        }
        VectorField2D::new(self.grid, vx, vy)
    }
}

/// Transposes a `rows x cols` row-major buffer.
fn transpose(src: &[Complex<f64>], cols: usize, rows: usize) -> Vec<Complex<f64>> {
    let mut dst = vec![Complex::new(0.0, 0.0); src.len()];
    for r in 0..rows {
        for c in 0..cols {
            dst[c * rows + r] = src[r * cols + c];
        }
    }
    dst
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct quadratic-cost evaluation of the smoothing sum.
    fn brute_force(spec: &KernelSpec, vf: &VectorField2D) -> VectorField2D {
        let g = *vf.grid();
        let w = g.cell_area();
        let centers: Vec<_> = g.centers().collect();
        let mut out = VectorField2D::zeros(g);
        for &(k, x, y) in &centers {
            let (mut sx, mut sy) = (0.0, 0.0);
            for &(m, u, v) in &centers {
                let kv = spec.kernel_value((x, y), (u, v));
                sx += kv * vf.vx[m];
                sy += kv * vf.vy[m];
            }
            out.vx[k] = w * sx;
            out.vy[k] = w * sy;
        }
        out
    }

    fn random_field(g: Grid2D, rng: &mut ChaCha8Rng) -> VectorField2D {
        VectorField2D::from_fn(g, |_, _| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    fn rel_err(a: &VectorField2D, b: &VectorField2D) -> f64 {
        let mut d = a.clone();
        d.axpy(-1.0, b);
        (d.norm_sq() / b.norm_sq()).sqrt()
    }

    #[test]
    fn fast_lengths() {
        assert_eq!(fast_len(7), 8);
        assert_eq!(fast_len(11), 12);
        assert_eq!(fast_len(97), 100);
        assert_eq!(fast_len(128), 128);
    }

    #[test]
    fn kernel_values() {
        let spec = KernelSpec::new(2.0, Grid2D::square(8, 4.0).unwrap()).unwrap();
        assert_eq!(spec.kernel_value((1.0, 2.0), (1.0, 2.0)), 1.0);
        let r = 2.0 * (2.0 * 2f64.ln()).sqrt();
        assert!((spec.kernel_value((0.0, 0.0), (r, 0.0)) - 0.5).abs() < 1e-15);
        assert_eq!(spec.kernel_value((0.0, 0.0), (0.0, 10.0)), 0.0);
        assert!(KernelSpec::new(0.0, Grid2D::square(8, 4.0).unwrap()).is_err());
    }

    #[test]
    fn zero_field_stays_zero() {
        let g = Grid2D::square(16, 16.0).unwrap();
        let spec = KernelSpec::new(3.0, g).unwrap();
        let out = spec.smooth(&VectorField2D::zeros(g)).unwrap();
        assert!(out.vx.iter().chain(&out.vy).all(|v| v.abs() < 1e-300 || *v == 0.0));
    }

    #[test]
    fn impulse_reproduces_the_kernel_profile() {
        let g = Grid2D::square(16, 16.0).unwrap();
        let spec = KernelSpec::new(3.0, g).unwrap();
        let mut vf = VectorField2D::zeros(g);
        let c = g.index(7, 8);
        vf.vx[c] = 1.0;
        let out = spec.smooth(&vf).unwrap();
        let (cx, cy) = (g.x_center(7), g.y_center(8));
        for (k, x, y) in g.centers() {
            let expect = g.cell_area() * spec.kernel_value((x, y), (cx, cy));
            assert!((out.vx[k] - expect).abs() < 1e-13);
            assert!(out.vy[k].abs() < 1e-13);
        }
    }

    #[test]
    fn fft_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(n, sigma) in &[(16, 2.0), (20, 6.0), (12, 0.5)] {
            let g = Grid2D::square(n, 16.0).unwrap();
            let spec = KernelSpec::new(sigma, g).unwrap();
            let vf = random_field(g, &mut rng);
            let err = rel_err(&spec.smooth(&vf).unwrap(), &brute_force(&spec, &vf));
            assert!(err <= 1e-10, "n={n} sigma={sigma}: {err}");
        }
    }

    #[test]
    fn smoothing_is_symmetric_and_psd() {
        let g = Grid2D::new(18, 14, (-9.0, 9.0), (-5.0, 9.0)).unwrap();
        let spec = KernelSpec::new(2.5, g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let u = random_field(g, &mut rng);
            let v = random_field(g, &mut rng);
            let a = spec.smooth(&u).unwrap().dot(&v);
            let b = u.dot(&spec.smooth(&v).unwrap());
            assert!((a - b).abs() <= 1e-10 * a.abs().max(b.abs()).max(1e-300));
            assert!(spec.smooth(&u).unwrap().dot(&u) >= -1e-12 * u.norm_sq());
        }
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let spec = KernelSpec::new(1.0, Grid2D::square(8, 4.0).unwrap()).unwrap();
        let other = VectorField2D::zeros(Grid2D::square(9, 4.0).unwrap());
        assert!(matches!(spec.smooth(&other), Err(Error::GridMismatch(_))));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]
            #[test]
            fn smoothing_is_linear(a in -2.0..2.0f64, b in -2.0..2.0f64, seed in 0u64..1000) {
                let g = Grid2D::square(12, 6.0).unwrap();
                let spec = KernelSpec::new(1.5, g).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let u = random_field(g, &mut rng);
                let v = random_field(g, &mut rng);
                let mut combo = u.clone();
                combo.scale(a);
                combo.axpy(b, &v);
                let lhs = spec.smooth(&combo).unwrap();
                let mut rhs = spec.smooth(&u).unwrap();
                rhs.scale(a);
                rhs.axpy(b, &spec.smooth(&v).unwrap());
                let mut d = lhs.clone();
                d.axpy(-1.0, &rhs);
                prop_assert!(d.norm_sq().sqrt() <= 1e-12 * (1.0 + rhs.norm_sq().sqrt()));
            }
        }
    }
}
