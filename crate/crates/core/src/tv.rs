//! Total-variation reconstruction baseline solved with Chambolle–Pock.
//!
//! Minimizes `mu TV(f) + ||T f - g||^2` with isotropic TV built from forward
//! differences (Neumann boundary). All inner products carry the grid and
//! detector cell weights, so `back_projection` is the exact adjoint.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid2D, ScalarImage};
use crate::tomo::{back_projection, ray_transform, Sinogram, SinogramGeometry};

const POWER_ITERS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TVConfig {
    pub mu: f64,
    pub n_iters: usize,
    /// Primal step; `None` picks `0.99 / ||A||`.
    #[serde(default)]
    pub tau: Option<f64>,
    /// Dual step; `None` picks `0.99 / ||A||`.
    #[serde(default)]
    pub sigma_pd: Option<f64>,
    #[serde(default = "default_theta")]
    pub theta: f64,
}

fn default_theta() -> f64 {
    1.0
}

impl TVConfig {
    pub fn new(mu: f64, n_iters: usize) -> Self {
        Self {
            mu,
            n_iters,
            tau: None,
            sigma_pd: None,
            theta: 1.0,
        }
    }

    /// Checks ranges and returns the step sizes to use for an operator of norm `norm`.
    fn steps(&self, norm: f64) -> Result<(f64, f64)> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::Config(format!("tv.mu must be positive, got {}", self.mu)));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::Config(format!(
                "tv.theta must lie in [0, 1], got {}",
                self.theta
            )));
        }
        let tau = self.tau.unwrap_or(0.99 / norm);
        let sigma = self.sigma_pd.unwrap_or(0.99 / norm);
        if !(tau > 0.0 && sigma > 0.0) {
            return Err(Error::Config("tv step sizes must be positive".into()));
        }
        if tau * sigma * norm * norm > 1.0 {
            return Err(Error::Config(format!(
                "tv step sizes violate tau*sigma*||A||^2 <= 1 (got {:.4})",
                tau * sigma * norm * norm
            )));
        }
        Ok((tau, sigma))
    }
}

fn forward_gradient(f: &[f64], grid: &Grid2D) -> (Vec<f64>, Vec<f64>) {
    let (nx, ny) = (grid.nx, grid.ny);
    let (hx, hy) = (grid.hx(), grid.hy());
    let mut gx = vec![0.0; f.len()];
    let mut gy = vec![0.0; f.len()];
    for j in 0..ny {
        for i in 0..nx {
            let k = j * nx + i;
            if i + 1 < nx {
                gx[k] = (f[k + 1] - f[k]) / hx;
            }
            if j + 1 < ny {
                gy[k] = (f[k + nx] - f[k]) / hy;
            }
        }
    }
    (gx, gy)
}

/// Transpose of [`forward_gradient`], i.e. minus the backward-difference divergence.
fn forward_gradient_adjoint(px: &[f64], py: &[f64], grid: &Grid2D) -> Vec<f64> {
    let (nx, ny) = (grid.nx, grid.ny);
    let (hx, hy) = (grid.hx(), grid.hy());
    let mut out = vec![0.0; px.len()];
    for j in 0..ny {
        for i in 0..nx {
            let k = j * nx + i;
            if i + 1 < nx {
                out[k + 1] += px[k] / hx;
                out[k] -= px[k] / hx;
            }
            if j + 1 < ny {
                out[k + nx] += py[k] / hy;
                out[k] -= py[k] / hy;
            }
        }
    }
    out
}

/// Isotropic total variation `sum |grad f| hx hy`.
pub fn total_variation(img: &ScalarImage) -> f64 {
    let (gx, gy) = forward_gradient(img.values(), img.grid());
    gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).sum::<f64>() * img.grid().cell_area()
}

/// `mu TV(f) + ||T f - g||^2`.
pub fn tv_objective(img: &ScalarImage, data: &Sinogram, mu: f64) -> Result<f64> {
    let residual = ray_transform(img, data.geometry()).zip_map(data, |a, b| a - b)?;
    Ok(mu * total_variation(img) + residual.norm_sq())
}

fn power_iteration(grid: &Grid2D, start: Vec<f64>, normal: impl Fn(&[f64]) -> Vec<f64>) -> f64 {
    let w = grid.cell_area();
    let norm = |x: &[f64]| (x.iter().map(|v| v * v).sum::<f64>() * w).sqrt();
    let mut x = start;
    let n0 = norm(&x);
    x.iter_mut().for_each(|v| *v /= n0);
    let mut lambda = 0.0;
    for _ in 0..POWER_ITERS {
        let y = normal(&x);
        lambda = norm(&y);
        if !(lambda > 0.0) {
            return 0.0;
        }
        x = y.into_iter().map(|v| v / lambda).collect();
    }
    lambda.sqrt()
}

fn default_start(grid: &Grid2D) -> Vec<f64> {
    // Fixed pseudo-random start with a nonzero component along every mode.
    (0..grid.len())
        .map(|k| 1.0 + 0.5 * ((k as f64 * 0.754_877_666).fract() - 0.5))
        .collect()
}

fn stacked_normal(geom: &SinogramGeometry, grid: &Grid2D, x: &[f64]) -> Vec<f64> {
    let img = ScalarImage::from_vec_unchecked(*grid, x.to_vec());
    let mut out = back_projection(&ray_transform(&img, geom), grid).into_values();
    let (gx, gy) = forward_gradient(x, grid);
    for (o, v) in out.iter_mut().zip(forward_gradient_adjoint(&gx, &gy, grid)) {
        *o += v;
    }
    out
}

/// Norm of the stacked operator `(T, grad)` by power iteration on its normal operator.
pub fn operator_norm_estimate(geom: &SinogramGeometry, grid: &Grid2D) -> f64 {
    power_iteration(grid, default_start(grid), |x| stacked_normal(geom, grid, x))
}

/// Chambolle–Pock from a zero image.
pub fn tv_reconstruct(data: &Sinogram, grid: &Grid2D, cfg: &TVConfig) -> Result<ScalarImage> {
    tv_reconstruct_observed(data, grid, cfg, |_, _| {})
}

/// Like [`tv_reconstruct`], calling `observe(iteration, image)` after every iteration.
pub fn tv_reconstruct_observed(
    data: &Sinogram,
    grid: &Grid2D,
    cfg: &TVConfig,
    mut observe: impl FnMut(usize, &ScalarImage),
) -> Result<ScalarImage> {
    let geom = data.geometry();
    let norm = operator_norm_estimate(geom, grid);
    let (tau, sigma) = cfg.steps(norm)?;
    let n = grid.len();
    let g = data.values();

    let mut f = ScalarImage::zeros(*grid);
    let mut f_bar = f.clone();
    let mut q = vec![0.0; geom.len()];
    let (mut px, mut py) = (vec![0.0; n], vec![0.0; n]);

    for it in 0..cfg.n_iters {
        // Dual step on the data term: prox of sigma F* with F(y) = ||y - g||^2.
        let tf = ray_transform(&f_bar, geom);
        for ((qk, t), gk) in q.iter_mut().zip(tf.values()).zip(g) {
            *qk = (*qk + sigma * (t - gk)) / (1.0 + 0.5 * sigma);
        }
        // Dual step on TV: projection onto the ball of radius mu.
        let (gx, gy) = forward_gradient(f_bar.values(), grid);
        for k in 0..n {
            let (a, b) = (px[k] + sigma * gx[k], py[k] + sigma * gy[k]);
            let scale = (a.hypot(b) / cfg.mu).max(1.0);
            px[k] = a / scale;
            py[k] = b / scale;
        }

        let bp = back_projection(&Sinogram::from_vec_unchecked(*geom, q.clone()), grid);
        let div = forward_gradient_adjoint(&px, &py, grid);
        let prev = f.clone();
        for ((fk, b), d) in f.values_mut().iter_mut().zip(bp.values()).zip(&div) {
            *fk -= tau * (b + d);
        }
        for ((fb, fk), pk) in f_bar.values_mut().iter_mut().zip(f.values()).zip(prev.values()) {
            *fb = fk + cfg.theta * (fk - pk);
        }
        if !f.is_finite() {
            return Err(Error::Numerical(format!(
                "tv iterate became non-finite at iteration {it}"
            )));
        }
        observe(it + 1, &f);
    }
    Ok(f)
}
