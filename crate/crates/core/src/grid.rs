//! Image domain discretization.
//!
//! Values are stored at pixel centers in row-major order (y outer, x inner):
//! pixel `(i, j)` sits at `x_min + (i + 0.5) hx`, `y_min + (j + 0.5) hy` and
//! lives at index `j * nx + i`. Interpolation treats everything outside the
//! lattice as zero unless a caller explicitly asks for edge clamping.

use crate::error::{Error, Result};

/// Uniform rectangular pixel grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    pub nx: usize,
    pub ny: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Grid2D {
    pub fn new(nx: usize, ny: usize, x_range: (f64, f64), y_range: (f64, f64)) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::Config(format!("grid needs at least 2x2 pixels, got {nx}x{ny}")));
        }
        let (x_min, x_max) = x_range;
        let (y_min, y_max) = y_range;
        if !(x_max > x_min) || !(y_max > y_min) || ![x_min, x_max, y_min, y_max].iter().all(|v| v.is_finite()) {
            return Err(Error::Config(format!(
                "invalid grid extent [{x_min}, {x_max}] x [{y_min}, {y_max}]"
            )));
        }
        Ok(Self {
            nx,
            ny,
            x_min,
            x_max,
            y_min,
            y_max,
        })
    }

    /// Square `n x n` grid on `[-half_width, half_width]^2`.
    pub fn square(n: usize, half_width: f64) -> Result<Self> {
        Self::new(n, n, (-half_width, half_width), (-half_width, half_width))
    }

    #[inline]
    pub fn hx(&self) -> f64 {
        (self.x_max - self.x_min) / self.nx as f64
    }

    #[inline]
    pub fn hy(&self) -> f64 {
        (self.y_max - self.y_min) / self.ny as f64
    }

    /// Area of one pixel, the quadrature weight of the midpoint rule.
    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.hx() * self.hy()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn x_center(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.hx()
    }

    #[inline]
    pub fn y_center(&self, j: usize) -> f64 {
        self.y_min + (j as f64 + 0.5) * self.hy()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// Iterator over `(index, x, y)` for every pixel center.
    pub fn centers(&self) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        (0..self.ny).flat_map(move |j| {
            let y = self.y_center(j);
            (0..self.nx).map(move |i| (j * self.nx + i, self.x_center(i), y))
        })
    }

    /// Pixels on the outermost ring of the lattice.
    #[inline]
    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i + 1 == self.nx || j + 1 == self.ny
    }

    pub fn diagonal(&self) -> f64 {
        (self.x_max - self.x_min).hypot(self.y_max - self.y_min)
    }

    pub(crate) fn check_same(&self, other: &Grid2D, what: &str) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(what.to_string()))
        }
    }
}

/// How interpolation treats points beyond the pixel lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extension {
    /// Values outside the lattice are zero.
    Zero,
    /// Coordinates are clamped onto the lattice (nearest edge value).
    Clamp,
}

/// Bilinear interpolation of pixel-center samples at a physical point.
#[inline]
pub(crate) fn interpolate(values: &[f64], grid: &Grid2D, x: f64, y: f64, ext: Extension) -> f64 {
    let nx = grid.nx;
    let ny = grid.ny;
    let mut u = (x - grid.x_min) / grid.hx() - 0.5;
    let mut v = (y - grid.y_min) / grid.hy() - 0.5;
    match ext {
        Extension::Zero => {
            // Also rejects NaN coordinates.
            if !(u > -1.0 && v > -1.0 && u < nx as f64 && v < ny as f64) {
                return 0.0;
            }
        }
        Extension::Clamp => {
            u = if u.is_nan() { 0.0 } else { u.clamp(0.0, (nx - 1) as f64) };
            v = if v.is_nan() { 0.0 } else { v.clamp(0.0, (ny - 1) as f64) };
        }
    }
    let fu = u.floor();
    let fv = v.floor();
    let i0 = fu as isize;
    let j0 = fv as isize;
    let tx = u - fu;
    let ty = v - fv;
    let fetch = |i: isize, j: isize| -> f64 {
        if i < 0 || j < 0 || i >= nx as isize || j >= ny as isize {
            0.0
        } else {
            values[j as usize * nx + i as usize]
        }
    };
    let f00 = fetch(i0, j0);
    let f10 = fetch(i0 + 1, j0);
    let f01 = fetch(i0, j0 + 1);
    let f11 = fetch(i0 + 1, j0 + 1);
    (1.0 - ty) * ((1.0 - tx) * f00 + tx * f10) + ty * ((1.0 - tx) * f01 + tx * f11)
}

/// A real function sampled at pixel centers.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarImage {
    grid: Grid2D,
    values: Vec<f64>,
}

impl ScalarImage {
    pub fn new(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Config(format!(
                "image has {} values, grid expects {}",
                values.len(),
                grid.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite image value at index {k}")));
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_vec_unchecked(grid: Grid2D, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn zeros(grid: Grid2D) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid2D, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
        }
    }

    /// Samples `f(x, y)` at every pixel center.
    pub fn from_fn(grid: Grid2D, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let values = grid.centers().map(|(_, x, y)| f(x, y)).collect();
        Self { grid, values }
    }

    #[inline]
    pub fn grid(&self) -> &Grid2D {
        &self.grid
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

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    /// Bilinear value at a physical point, zero outside the lattice.
    #[inline]
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        interpolate(&self.values, &self.grid, x, y, Extension::Zero)
    }

    #[inline]
    pub fn sample_with(&self, x: f64, y: f64, ext: Extension) -> f64 {
        interpolate(&self.values, &self.grid, x, y, ext)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pixelwise combination of two images on the same grid.
    pub fn zip_map(&self, other: &ScalarImage, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.grid.check_same(&other.grid, "zip_map operands")?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self {
            grid: self.grid,
            values,
        })
    }

    /// Weighted L2 inner product `sum a b hx hy`.
    pub fn dot(&self, other: &ScalarImage) -> f64 {
        debug_assert_eq!(self.grid, other.grid);
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>() * self.grid.cell_area()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// A 2D vector field sampled at pixel centers.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField2D {
    grid: Grid2D,
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
}

impl VectorField2D {
    pub fn new(grid: Grid2D, vx: Vec<f64>, vy: Vec<f64>) -> Result<Self> {
        if vx.len() != grid.len() || vy.len() != grid.len() {
            return Err(Error::Config(format!(
                "vector field components have {} and {} values, grid expects {}",
                vx.len(),
                vy.len(),
                grid.len()
            )));
        }
        if vx.iter().chain(&vy).any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite vector field component".into()));
        }
        Ok(Self { grid, vx, vy })
    }

    pub fn zeros(grid: Grid2D) -> Self {
        Self {
            grid,
            vx: vec![0.0; grid.len()],
            vy: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn(grid: Grid2D, mut f: impl FnMut(f64, f64) -> (f64, f64)) -> Self {
        let mut vx = Vec::with_capacity(grid.len());
        let mut vy = Vec::with_capacity(grid.len());
        for (_, x, y) in grid.centers() {
            let (a, b) = f(x, y);
            vx.push(a);
            vy.push(b);
        }
        Self { grid, vx, vy }
    }

    #[inline]
    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    /// Weighted L2 inner product of two vector fields.
    pub fn dot(&self, other: &VectorField2D) -> f64 {
        debug_assert_eq!(self.grid, other.grid);
        let sx: f64 = self.vx.iter().zip(&other.vx).map(|(a, b)| a * b).sum();
        let sy: f64 = self.vy.iter().zip(&other.vy).map(|(a, b)| a * b).sum();
        (sx + sy) * self.grid.cell_area()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn scale(&mut self, a: f64) {
        self.vx.iter_mut().chain(self.vy.iter_mut()).for_each(|v| *v *= a);
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &VectorField2D) {
        debug_assert_eq!(self.grid, other.grid);
        for (s, o) in self.vx.iter_mut().zip(&other.vx) {
            *s += a * o;
        }
        for (s, o) in self.vy.iter_mut().zip(&other.vy) {
            *s += a * o;
        }
    }

    /// Largest pointwise Euclidean magnitude.
    pub fn max_norm(&self) -> f64 {
        self.vx
            .iter()
            .zip(&self.vy)
            .map(|(a, b)| a.hypot(*b))
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.vx.iter().chain(&self.vy).all(|v| v.is_finite())
    }
}

/// `N + 1` samples of a time-dependent vector field, sample `i` at `t = i / N`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeVelocityField {
    fields: Vec<VectorField2D>,
}

impl TimeVelocityField {
    pub fn new(fields: Vec<VectorField2D>) -> Result<Self> {
        if fields.len() < 2 {
            return Err(Error::Config(
                "a time velocity field needs N >= 1 (at least two samples)".into(),
            ));
        }
        let grid = *fields[0].grid();
        if fields.iter().any(|f| *f.grid() != grid) {
            return Err(Error::GridMismatch("time samples live on different grids".into()));
        }
        Ok(Self { fields })
    }

    pub fn zeros(grid: Grid2D, n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::Config("n_steps must be at least 1".into()));
        }
        Ok(Self {
            fields: vec![VectorField2D::zeros(grid); n_steps + 1],
        })
    }

    /// Samples `f(t, x, y)` at every time point and pixel center.
    pub fn from_fn(grid: Grid2D, n_steps: usize, f: impl Fn(f64, f64, f64) -> (f64, f64)) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::Config("n_steps must be at least 1".into()));
        }
        let fields = (0..=n_steps)
            .map(|i| {
                let t = i as f64 / n_steps as f64;
                VectorField2D::from_fn(grid, |x, y| f(t, x, y))
            })
            .collect();
        Ok(Self { fields })
    }

    #[inline]
    pub fn n_steps(&self) -> usize {
        self.fields.len() - 1
    }

    #[inline]
    pub fn grid(&self) -> &Grid2D {
        self.fields[0].grid()
    }

    #[inline]
    pub fn fields(&self) -> &[VectorField2D] {
        &self.fields
    }

    #[inline]
    pub fn fields_mut(&mut self) -> &mut [VectorField2D] {
        &mut self.fields
    }

    #[inline]
    pub fn at(&self, i: usize) -> &VectorField2D {
        &self.fields[i]
    }

    /// Trapezoidal quadrature weight of time sample `i`.
    #[inline]
    pub fn time_weight(&self, i: usize) -> f64 {
        let n = self.n_steps();
        let w = 1.0 / n as f64;
        if i == 0 || i == n {
            0.5 * w
        } else {
            w
        }
    }

    /// Space-time inner product: trapezoid in time over per-sample L2 products.
    pub fn dot(&self, other: &TimeVelocityField) -> f64 {
        debug_assert_eq!(self.fields.len(), other.fields.len());
        self.fields
            .iter()
            .zip(&other.fields)
            .enumerate()
            .map(|(i, (a, b))| self.time_weight(i) * a.dot(b))
            .sum()
    }

    pub fn scale(&mut self, a: f64) {
        self.fields.iter_mut().for_each(|f| f.scale(a));
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &TimeVelocityField) {
        for (s, o) in self.fields.iter_mut().zip(&other.fields) {
            s.axpy(a, o);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.fields.iter().all(VectorField2D::is_finite)
    }
}

/// A sampled map `x -> x + (dx, dy)(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementMap {
    grid: Grid2D,
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
}

impl DisplacementMap {
    pub fn identity(grid: Grid2D) -> Self {
        Self {
            grid,
            dx: vec![0.0; grid.len()],
            dy: vec![0.0; grid.len()],
        }
    }

    /// Displacement `scale * v`.
    pub fn from_velocity(v: &VectorField2D, scale: f64) -> Self {
        Self {
            grid: *v.grid(),
            dx: v.vx.iter().map(|a| scale * a).collect(),
            dy: v.vy.iter().map(|a| scale * a).collect(),
        }
    }

    #[inline]
    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    /// Physical coordinates of the mapped pixel center `k`.
    #[inline]
    pub fn point(&self, k: usize) -> (f64, f64) {
        let i = k % self.grid.nx;
        let j = k / self.grid.nx;
        (self.grid.x_center(i) + self.dx[k], self.grid.y_center(j) + self.dy[k])
    }
}

/// Evaluates `img` at the mapped pixel centers (composition `img ∘ map`), zero extension.
pub fn sample_bilinear(img: &ScalarImage, map: &DisplacementMap) -> Result<ScalarImage> {
    sample_bilinear_with(img, map, Extension::Zero)
}

pub fn sample_bilinear_with(img: &ScalarImage, map: &DisplacementMap, ext: Extension) -> Result<ScalarImage> {
    img.grid.check_same(&map.grid, "image and displacement map")?;
    let grid = img.grid;
    let values = (0..grid.len())
        .map(|k| {
            let (x, y) = map.point(k);
            interpolate(&img.values, &grid, x, y, ext)
        })
        .collect();
    Ok(ScalarImage { grid, values })
}

/// Evaluates `img` at `x + scale * v(x)` for every pixel center.
pub(crate) fn compose_with_step(img: &ScalarImage, v: &VectorField2D, scale: f64, ext: Extension) -> ScalarImage {
    debug_assert_eq!(img.grid, v.grid);
    let grid = img.grid;
    let hx = grid.hx();
    let hy = grid.hy();
    let mut values = Vec::with_capacity(grid.len());
    for j in 0..grid.ny {
        let y = grid.y_min + (j as f64 + 0.5) * hy;
        for i in 0..grid.nx {
            let k = j * grid.nx + i;
            let x = grid.x_min + (i as f64 + 0.5) * hx;
            let (dx, dy) = (scale * v.vx[k], scale * v.vy[k]);
            if dx == 0.0 && dy == 0.0 {
                // Exact at nodes; lattice-coordinate roundoff would otherwise blur it.
                values.push(img.values[k]);
            } else {
                values.push(interpolate(&img.values, &grid, x + dx, y + dy, ext));
            }
        }
    }
    ScalarImage { grid, values }
}

/// Lattice coordinates of a point, or `None` when zero extension makes it vanish.
#[inline]
fn lattice_coords(grid: &Grid2D, x: f64, y: f64, ext: Extension) -> Option<(f64, f64, bool, bool)> {
    let u = (x - grid.x_min) / grid.hx() - 0.5;
    let v = (y - grid.y_min) / grid.hy() - 0.5;
    let (nx, ny) = (grid.nx as f64, grid.ny as f64);
    match ext {
        Extension::Zero => (u > -1.0 && v > -1.0 && u < nx && v < ny).then_some((u, v, false, false)),
        Extension::Clamp => {
            let u = if u.is_nan() { 0.0 } else { u };
            let v = if v.is_nan() { 0.0 } else { v };
            let cu = u.clamp(0.0, nx - 1.0);
            let cv = v.clamp(0.0, ny - 1.0);
            Some((cu, cv, cu != u || u >= nx - 1.0, cv != v || v >= ny - 1.0))
        }
    }
}

/// Spatial derivative `(∂x, ∂y)` of the bilinear interpolant at a point.
///
/// Directions in which a clamped coordinate sits on or beyond the last
/// lattice line have zero derivative.
#[inline]
pub(crate) fn interpolate_gradient(values: &[f64], grid: &Grid2D, x: f64, y: f64, ext: Extension) -> (f64, f64) {
    let Some((u, v, frozen_u, frozen_v)) = lattice_coords(grid, x, y, ext) else {
        return (0.0, 0.0);
    };
    let (nx, ny) = (grid.nx as isize, grid.ny as isize);
    let (i0, j0) = (u.floor() as isize, v.floor() as isize);
    let (tx, ty) = (u - u.floor(), v - v.floor());
    let fetch = |i: isize, j: isize| -> f64 {
        if i < 0 || j < 0 || i >= nx || j >= ny {
            0.0
        } else {
            values[(j * nx + i) as usize]
        }
    };
    let f00 = fetch(i0, j0);
    let f10 = fetch(i0 + 1, j0);
    let f01 = fetch(i0, j0 + 1);
    let f11 = fetch(i0 + 1, j0 + 1);
    let du = if frozen_u {
        0.0
    } else {
        (1.0 - ty) * (f10 - f00) + ty * (f11 - f01)
    };
    let dv = if frozen_v {
        0.0
    } else {
        (1.0 - tx) * (f01 - f00) + tx * (f11 - f10)
    };
    (du / grid.hx(), dv / grid.hy())
}

/// Transpose of [`compose_with_step`]: scatters `weights` back onto the lattice.
pub(crate) fn compose_with_step_transpose(
    weights: &ScalarImage,
    v: &VectorField2D,
    scale: f64,
    ext: Extension,
) -> ScalarImage {
    debug_assert_eq!(weights.grid, v.grid);
    let grid = weights.grid;
    let (nx, ny) = (grid.nx as isize, grid.ny as isize);
    let mut out = vec![0.0; grid.len()];
    for (k, x, y) in grid.centers() {
        let w = weights.values[k];
        if w == 0.0 {
            continue;
        }
        let (dx, dy) = (scale * v.vx[k], scale * v.vy[k]);
        if dx == 0.0 && dy == 0.0 {
            out[k] += w;
            continue;
        }
        let Some((u, vv, _, _)) = lattice_coords(&grid, x + dx, y + dy, ext) else {
            continue;
        };
        let (i0, j0) = (u.floor() as isize, vv.floor() as isize);
        let (tx, ty) = (u - u.floor(), vv - vv.floor());
        for (di, dj, c) in [
            (0, 0, (1.0 - tx) * (1.0 - ty)),
            (1, 0, tx * (1.0 - ty)),
            (0, 1, (1.0 - tx) * ty),
            (1, 1, tx * ty),
        ] {
            let (i, j) = (i0 + di, j0 + dj);
            if i >= 0 && j >= 0 && i < nx && j < ny {
                out[(j * nx + i) as usize] += c * w;
            }
        }
    }
    ScalarImage { grid, values: out }
}

/// Derivative of a row-major array along x (`axis_x`) or y at pixel `(i, j)`.
#[inline]
fn partial(values: &[f64], grid: &Grid2D, i: usize, j: usize, axis_x: bool) -> f64 {
    let nx = grid.nx;
    let (n, h, pos) = if axis_x {
        (nx, grid.hx(), i)
    } else {
        (grid.ny, grid.hy(), j)
    };
    let at = |p: usize| if axis_x { values[j * nx + p] } else { values[p * nx + i] };
    if pos == 0 {
        (at(1) - at(0)) / h
    } else if pos + 1 == n {
        (at(n - 1) - at(n - 2)) / h
    } else {
        (at(pos + 1) - at(pos - 1)) / (2.0 * h)
    }
}

/// Central differences inside, one-sided differences on the boundary ring.
pub fn gradient(img: &ScalarImage) -> VectorField2D {
    let grid = img.grid;
    let mut vx = Vec::with_capacity(grid.len());
    let mut vy = Vec::with_capacity(grid.len());
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            vx.push(partial(&img.values, &grid, i, j, true));
            vy.push(partial(&img.values, &grid, i, j, false));
        }
    }
    VectorField2D { grid, vx, vy }
}

/// `∂x vx + ∂y vy` with the same difference scheme as [`gradient`].
pub fn divergence(vf: &VectorField2D) -> ScalarImage {
    let grid = vf.grid;
    let mut values = Vec::with_capacity(grid.len());
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            values.push(partial(&vf.vx, &grid, i, j, true) + partial(&vf.vy, &grid, i, j, false));
        }
    }
    ScalarImage { grid, values }
}

/// Transpose of one difference operator of [`gradient`] (x when `axis_x`).
fn partial_transpose(values: &[f64], grid: &Grid2D, axis_x: bool) -> Vec<f64> {
    let nx = grid.nx;
    let (n, h) = if axis_x { (nx, grid.hx()) } else { (grid.ny, grid.hy()) };
    let mut out = vec![0.0; grid.len()];
    for j in 0..grid.ny {
        for i in 0..nx {
            let s = values[j * nx + i];
            let pos = if axis_x { i } else { j };
            let idx = |p: usize| if axis_x { j * nx + p } else { p * nx + i };
            let (lo, hi, d) = if pos == 0 {
                (0, 1, h)
            } else if pos + 1 == n {
                (n - 2, n - 1, h)
            } else {
                (pos - 1, pos + 1, 2.0 * h)
            };
            out[idx(hi)] += s / d;
            out[idx(lo)] -= s / d;
        }
    }
    out
}

/// Transpose of [`divergence`] with respect to the pixel sum.
pub(crate) fn divergence_transpose(img: &ScalarImage) -> VectorField2D {
    let grid = img.grid;
    VectorField2D {
        grid,
        vx: partial_transpose(&img.values, &grid, true),
        vy: partial_transpose(&img.values, &grid, false),
    }
}

/// Midpoint-rule integral over the domain.
pub fn integrate(img: &ScalarImage) -> f64 {
    img.values.iter().sum::<f64>() * img.grid.cell_area()
}
