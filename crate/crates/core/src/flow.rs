//! Discrete flows of time-dependent velocity fields.
//!
//! With `t_i = i/N`, small deformations are approximated as
//! `φ_{t_i, t_{i±1}} ≈ Id ± ν(t_i)/N`, and the chains needed for the gradient
//! are advanced one step at a time by bilinear resampling:
//!
//! * `I ∘ φ_{t_i,0} = (I ∘ φ_{t_{i-1},0}) ∘ (Id - ν(t_i)/N)`, `i = 1..N`
//! * `|Dφ_{t_i,1}| = (1 + div ν(t_i)/N) · |Dφ_{t_{i+1},1}| ∘ (Id + ν(t_i)/N)`, `i = N-1..0`
//! * `|Dφ_{t_i,0}| = (1 - div ν(t_i)/N) · |Dφ_{t_{i-1},0}| ∘ (Id - ν(t_i)/N)`, `i = 1..N`
//! * `h ∘ φ_{t_i,1} = (h ∘ φ_{t_{i+1},1}) ∘ (Id + ν(t_i)/N)`, `i = N-1..0`
//!
//! Only these scalar chains are stored; the maps themselves never are.
//! Images use zero extension. Jacobian determinants are resampled with edge
//! clamping, since a determinant has no reason to vanish outside the grid.

use crate::action::GroupAction;
use crate::error::{Error, Result};
use crate::grid::{
    self, compose_with_step, divergence, DisplacementMap, Extension, ScalarImage, TimeVelocityField, VectorField2D,
};

/// Displacement of the small forward step `Id + v/N`.
pub fn step_forward_map(v: &VectorField2D, n_steps: usize) -> DisplacementMap {
    DisplacementMap::from_velocity(v, 1.0 / n_steps as f64)
}

fn check(a: &ScalarImage, v: &VectorField2D) -> Result<()> {
    if a.grid() == v.grid() {
        Ok(())
    } else {
        Err(Error::GridMismatch("image and velocity field".into()))
    }
}

/// One semi-Lagrangian pull-back: `prev ∘ (Id - v_i/N)`.
pub fn advance_transported_template(prev: &ScalarImage, v_i: &VectorField2D, n_steps: usize) -> Result<ScalarImage> {
    check(prev, v_i)?;
    Ok(compose_with_step(prev, v_i, -1.0 / n_steps as f64, Extension::Zero))
}

/// `(1 + div v_i/N) · next_jac ∘ (Id + v_i/N)`.
pub fn jacobian_recursion_to_one(next_jac: &ScalarImage, v_i: &VectorField2D, n_steps: usize) -> Result<ScalarImage> {
    check(next_jac, v_i)?;
    let tau = 1.0 / n_steps as f64;
    let moved = compose_with_step(next_jac, v_i, tau, Extension::Clamp);
    let div = divergence(v_i);
    moved.zip_map(&div, |j, d| (1.0 + tau * d) * j)
}

/// `(1 - div v_i/N) · prev_jac ∘ (Id - v_i/N)`.
pub fn jacobian_recursion_to_zero(prev_jac: &ScalarImage, v_i: &VectorField2D, n_steps: usize) -> Result<ScalarImage> {
    check(prev_jac, v_i)?;
    let tau = 1.0 / n_steps as f64;
    let moved = compose_with_step(prev_jac, v_i, -tau, Extension::Clamp);
    let div = divergence(v_i);
    moved.zip_map(&div, |j, d| (1.0 - tau * d) * j)
}

/// `next ∘ (Id + v_i/N)`.
pub fn backpropagate_field(next: &ScalarImage, v_i: &VectorField2D, n_steps: usize) -> Result<ScalarImage> {
    check(next, v_i)?;
    Ok(compose_with_step(next, v_i, 1.0 / n_steps as f64, Extension::Zero))
}

fn ensure_positive(jac: &ScalarImage, i: usize) -> Result<()> {
    let grid = *jac.grid();
    for (k, &v) in jac.values().iter().enumerate() {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Numerical(format!(
                "Jacobian determinant {v} at time index {i}, pixel ({}, {}); reduce the step size or increase gamma",
                k % grid.nx,
                k / grid.nx
            )));
        }
    }
    Ok(())
}

/// Scalar chains of one gradient evaluation.
#[derive(Debug, Clone)]
pub struct FlowChain {
    n_steps: usize,
    action: GroupAction,
    /// Entry `i` holds `I ∘ φ_{t_i,0}`.
    pub transported_template: Vec<ScalarImage>,
    /// Entry `i` holds `|Dφ_{t_i,1}|` (geometric) or `|Dφ_{t_i,0}|` (mass preserving).
    pub jacobian: Vec<ScalarImage>,
    /// Entry `i` holds `∇L ∘ φ_{t_i,1}` once [`backpropagate`](Self::backpropagate) ran.
    pub backprop_field: Vec<ScalarImage>,
}

impl FlowChain {
    /// A chain holding only the template at `t = 0`.
    pub fn new(template: &ScalarImage, n_steps: usize, action: GroupAction) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::Config("n_steps must be at least 1".into()));
        }
        Ok(Self {
            n_steps,
            action,
            transported_template: vec![template.clone()],
            jacobian: Vec::new(),
            backprop_field: Vec::new(),
        })
    }

    /// Builds the forward chains for `nu` in one go.
    pub fn forward(template: &ScalarImage, nu: &TimeVelocityField, action: GroupAction) -> Result<Self> {
        let mut chain = Self::new(template, nu.n_steps(), action)?;
        chain.advance(nu)?;
        Ok(chain)
    }

    #[inline]
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    #[inline]
    pub fn action(&self) -> GroupAction {
        self.action
    }

    /// True once the transported template and Jacobian chains cover all `N + 1` times.
    pub fn is_advanced(&self) -> bool {
        self.transported_template.len() == self.n_steps + 1 && self.jacobian.len() == self.n_steps + 1
    }

    pub fn has_backprop(&self) -> bool {
        self.backprop_field.len() == self.n_steps + 1
    }

    /// Runs the transported-template and Jacobian recursions.
    pub fn advance(&mut self, nu: &TimeVelocityField) -> Result<()> {
        let n = self.n_steps;
        if nu.n_steps() != n {
            return Err(Error::Config(format!(
                "velocity has N = {}, chain expects {n}",
                nu.n_steps()
            )));
        }
        let template = self.transported_template[0].clone();
        if template.grid() != nu.grid() {
            return Err(Error::GridMismatch("template and velocity field".into()));
        }
        let mut transported = Vec::with_capacity(n + 1);
        transported.push(template);
        for i in 1..=n {
            let next = advance_transported_template(&transported[i - 1], nu.at(i), n)?;
            transported.push(next);
        }
        let grid = *nu.grid();
        let one = ScalarImage::constant(grid, 1.0);
        let jacobian = match self.action {
            GroupAction::Geometric => {
                let mut rev = Vec::with_capacity(n + 1);
                rev.push(one);
                for i in (0..n).rev() {
                    let next = jacobian_recursion_to_one(rev.last().expect("seeded"), nu.at(i), n)?;
                    ensure_positive(&next, i)?;
                    rev.push(next);
                }
                rev.reverse();
                rev
            }
            GroupAction::MassPreserving => {
                let mut fwd = Vec::with_capacity(n + 1);
                fwd.push(one);
                for i in 1..=n {
                    let next = jacobian_recursion_to_zero(&fwd[i - 1], nu.at(i), n)?;
                    ensure_positive(&next, i)?;
                    fwd.push(next);
                }
                fwd
            }
        };
        if let Some(i) = transported.iter().position(|img| !img.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite transported template at time index {i}"
            )));
        }
        self.transported_template = transported;
        self.jacobian = jacobian;
        self.backprop_field.clear();
        Ok(())
    }

    /// Transports a data-space gradient image backwards in time, seeded at `t = 1`.
    pub fn backpropagate(&mut self, grad_l: &ScalarImage, nu: &TimeVelocityField) -> Result<()> {
        let n = self.n_steps;
        if nu.n_steps() != n {
            return Err(Error::Config(format!(
                "velocity has N = {}, chain expects {n}",
                nu.n_steps()
            )));
        }
        let mut rev = Vec::with_capacity(n + 1);
        rev.push(grad_l.clone());
        for i in (0..n).rev() {
            let next = backpropagate_field(rev.last().expect("seeded"), nu.at(i), n)?;
            rev.push(next);
        }
        rev.reverse();
        self.backprop_field = rev;
        Ok(())
    }

    /// Pixelwise positivity of all stored Jacobian images.
    pub fn jacobians_positive(&self) -> bool {
        self.jacobian.iter().all(|j| j.values().iter().all(|&v| v > 0.0))
    }
}

/// Pull-back of `img` through the composition of `steps` identical steps `Id - v/N`.
pub fn transport(img: &ScalarImage, v: &VectorField2D, n_steps: usize) -> Result<ScalarImage> {
    let mut cur = img.clone();
    for _ in 0..n_steps {
        cur = advance_transported_template(&cur, v, n_steps)?;
    }
    Ok(cur)
}

/// Sup-norm distance from identity of `(Id + a/N)` followed by `(Id - b/N)`.
pub fn inverse_consistency_error(a: &VectorField2D, b: &VectorField2D, n_steps: usize) -> f64 {
    let grid = *a.grid();
    let tau = 1.0 / n_steps as f64;
    let bx = ScalarImage::from_vec_unchecked(grid, b.vx.clone());
    let by = ScalarImage::from_vec_unchecked(grid, b.vy.clone());
    let mut worst: f64 = 0.0;
    for (k, x, y) in grid.centers() {
        let px = x + tau * a.vx[k];
        let py = y + tau * a.vy[k];
        let qx = px - tau * grid::interpolate(bx.values(), &grid, px, py, Extension::Clamp);
        let qy = py - tau * grid::interpolate(by.values(), &grid, px, py, Extension::Clamp);
        worst = worst.max((qx - x).hypot(qy - y));
    }
    worst
}
