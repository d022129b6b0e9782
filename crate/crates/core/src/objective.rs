//! The registration objective `E(ν) = γ ‖ν‖²_V + ‖T(W(ν, I)) − g‖²_Y` and its V-gradient.
//!
//! Velocity fields are kept together with the momentum they were generated
//! from, `ν(t) = K μ(t)`. The discrete RKHS norm is then exact:
//! `‖ν(t)‖²_V = ⟨μ(t), K μ(t)⟩_{L²}`, and the V-gradient `2γν − K m` pairs with
//! a perturbation `K ζ` through `⟨·, ζ⟩_{L²}`. Time integrals use the
//! trapezoidal rule over the `N + 1` samples.
//!
//! Two gradients are available. [`GradientScheme::Continuous`] evaluates the
//! closed-form continuum expression on the stored chains; it agrees with the
//! discrete objective only up to `O(h + 1/N)`. [`GradientScheme::DiscreteAdjoint`]
//! differentiates the semi-Lagrangian recursions themselves and is exact for
//! the objective as implemented.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::action::{deform, GroupAction};
use crate::error::{Error, Result};
use crate::flow::FlowChain;
use crate::grid::{
    compose_with_step, compose_with_step_transpose, divergence, divergence_transpose, gradient, interpolate_gradient,
    Extension, ScalarImage, TimeVelocityField, VectorField2D,
};
use crate::kernel::KernelSpec;
use crate::tomo::{back_projection, ray_transform, Sinogram};

/// Which expression produces the data-driven forces.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientScheme {
    /// Closed-form continuum gradient evaluated on the flow chains.
    Continuous,
    /// Reverse sweep through the discrete recursions.
    #[default]
    DiscreteAdjoint,
}

impl fmt::Display for GradientScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GradientScheme::Continuous => "continuous",
            GradientScheme::DiscreteAdjoint => "discrete-adjoint",
        })
    }
}

impl FromStr for GradientScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "continuous" => Ok(GradientScheme::Continuous),
            "discrete-adjoint" => Ok(GradientScheme::DiscreteAdjoint),
            other => Err(Error::Config(format!(
                "unknown gradient scheme '{other}' (expected continuous or discrete-adjoint)"
            ))),
        }
    }
}

/// Objective value split into its two terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObjectiveValue {
    pub total: f64,
    pub penalty: f64,
    pub discrepancy: f64,
}

impl ObjectiveValue {
    pub fn new(penalty: f64, discrepancy: f64) -> Self {
        Self {
            total: penalty + discrepancy,
            penalty,
            discrepancy,
        }
    }
}

/// `‖T f − g‖²_Y`.
pub fn data_discrepancy(f: &ScalarImage, g: &Sinogram) -> Result<f64> {
    let residual = ray_transform(f, g.geometry()).zip_map(g, |a, b| a - b)?;
    Ok(residual.norm_sq())
}

/// `∇L(f) = 2 T*(T f − g)`, the L²(Ω) gradient of the data discrepancy.
pub fn discrepancy_gradient_image(f: &ScalarImage, g: &Sinogram) -> Result<ScalarImage> {
    let residual = ray_transform(f, g.geometry()).zip_map(g, |a, b| 2.0 * (a - b))?;
    Ok(back_projection(&residual, f.grid()))
}

/// Trapezoid-in-time integral of the per-sample L² norms.
pub fn velocity_norm_sq(nu: &TimeVelocityField) -> f64 {
    nu.dot(nu)
}

/// A velocity field `ν = K μ` stored with its momentum `μ`.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityParam {
    pub momentum: TimeVelocityField,
    pub velocity: TimeVelocityField,
}

impl VelocityParam {
    pub fn zeros(kernel: &KernelSpec, n_steps: usize) -> Result<Self> {
        let z = TimeVelocityField::zeros(*kernel.grid(), n_steps)?;
        Ok(Self {
            momentum: z.clone(),
            velocity: z,
        })
    }

    pub fn from_momentum(kernel: &KernelSpec, momentum: TimeVelocityField) -> Result<Self> {
        let fields = momentum
            .fields()
            .iter()
            .map(|m| kernel.smooth(m))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            velocity: TimeVelocityField::new(fields)?,
            momentum,
        })
    }

    #[inline]
    pub fn n_steps(&self) -> usize {
        self.velocity.n_steps()
    }

    /// `‖ν‖²_{V²} = ∫ ⟨μ(t), ν(t)⟩ dt`.
    pub fn rkhs_norm_sq(&self) -> f64 {
        self.momentum.dot(&self.velocity)
    }

    /// `self -= step * direction` on both representations.
    pub fn descend(&mut self, step: f64, direction: &Gradient) {
        self.momentum.axpy(-step, &direction.momentum);
        self.velocity.axpy(-step, &direction.velocity);
    }
}

/// V-gradient of the objective with its momentum representation.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    /// `2γν − K f`, the field the descent step subtracts.
    pub velocity: TimeVelocityField,
    /// `2γμ − f`; `velocity = K momentum`.
    pub momentum: TimeVelocityField,
}

impl Gradient {
    /// Squared `V²` norm of the gradient.
    pub fn norm_sq(&self) -> f64 {
        self.momentum.dot(&self.velocity)
    }

    /// `⟨∇E, K ζ⟩_{V²}` for a perturbation given by its momentum `ζ`.
    pub fn pair_with_momentum(&self, zeta: &TimeVelocityField) -> f64 {
        self.velocity.dot(zeta)
    }
}

/// Data-driven forces `f_i` whose kernel smoothing enters the gradient as `2γν − K f_i`.
///
/// Geometric action: `f = |Dφ_{t,1}| (∇L ∘ φ_{t,1}) ∇(I ∘ φ_{t,0})`.
/// Mass-preserving action: `f = −|Dφ_{t,0}| (I ∘ φ_{t,0}) ∇(∇L ∘ φ_{t,1})`.
/// Forces are zeroed on the boundary ring where one-sided differences are used.
pub fn discrepancy_forces(chain: &FlowChain) -> Result<Vec<VectorField2D>> {
    if !chain.is_advanced() || !chain.has_backprop() {
        return Err(Error::State("flow chain lacks forward or backpropagated fields".into()));
    }
    let n = chain.n_steps();
    let grid = *chain.transported_template[0].grid();
    let mut forces = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let jac = chain.jacobian[i].values();
        let transported = &chain.transported_template[i];
        let back = &chain.backprop_field[i];
        let (grad, weight, sign) = match chain.action() {
            GroupAction::Geometric => (gradient(transported), back.values(), 1.0),
            GroupAction::MassPreserving => (gradient(back), transported.values(), -1.0),
        };
        let mut f = VectorField2D::zeros(grid);
        for j in 0..grid.ny {
            for ii in 0..grid.nx {
                if grid.is_boundary(ii, j) {
                    continue;
                }
                let k = grid.index(ii, j);
                let c = sign * jac[k] * weight[k];
                f.vx[k] = c * grad.vx[k];
                f.vy[k] = c * grad.vy[k];
            }
        }
        forces.push(f);
    }
    Ok(forces)
}

/// Forces of the exact discrete gradient, scaled to the trapezoid time product.
///
/// `grad_l` is the L² gradient of the discrepancy at the deformed template.
/// Step `i` moves `J_{i-1}` (and `D_{i-1}`) by `Id - ν(t_i)/N`, so `ν(t_0)`
/// receives no force.
pub fn discrete_adjoint_forces(
    chain: &FlowChain,
    nu: &TimeVelocityField,
    grad_l: &ScalarImage,
) -> Result<Vec<VectorField2D>> {
    if !chain.is_advanced() {
        return Err(Error::State("flow chain has not been advanced to t = 1".into()));
    }
    let n = chain.n_steps();
    if nu.n_steps() != n {
        return Err(Error::Config("chain and velocity field differ in N".into()));
    }
    let grid = *grad_l.grid();
    let tau = 1.0 / n as f64;
    let mass = chain.action() == GroupAction::MassPreserving;
    let transported = &chain.transported_template;
    let jac = &chain.jacobian;
    let mut forces = vec![VectorField2D::zeros(grid); n + 1];
    // Adjoint states of the transported template and of the mass Jacobian.
    let (mut lam_j, mut lam_d) = if mass {
        (
            grad_l.zip_map(&jac[n], |a, d| a * d)?,
            grad_l.zip_map(&transported[n], |a, f| a * f)?,
        )
    } else {
        (grad_l.clone(), ScalarImage::zeros(grid))
    };
    for i in (1..=n).rev() {
        let v = nu.at(i);
        let scale = tau / nu.time_weight(i);
        let f = &mut forces[i];
        for (k, x, y) in grid.centers() {
            let (px, py) = (x - tau * v.vx[k], y - tau * v.vy[k]);
            let (gx, gy) = interpolate_gradient(transported[i - 1].values(), &grid, px, py, Extension::Zero);
            f.vx[k] = scale * lam_j.values()[k] * gx;
            f.vy[k] = scale * lam_j.values()[k] * gy;
        }
        lam_j = compose_with_step_transpose(&lam_j, v, -tau, Extension::Zero);
        if mass {
            let div = divergence(v);
            let moved = compose_with_step(&jac[i - 1], v, -tau, Extension::Clamp);
            let weighted = lam_d.zip_map(&div, |l, d| l * (1.0 - tau * d))?;
            for (k, x, y) in grid.centers() {
                let (px, py) = (x - tau * v.vx[k], y - tau * v.vy[k]);
                let (gx, gy) = interpolate_gradient(jac[i - 1].values(), &grid, px, py, Extension::Clamp);
                f.vx[k] += scale * weighted.values()[k] * gx;
                f.vy[k] += scale * weighted.values()[k] * gy;
            }
            let through_div = divergence_transpose(&lam_d.zip_map(&moved, |l, m| l * m)?);
            f.axpy(scale, &through_div);
            lam_d = compose_with_step_transpose(&weighted, v, -tau, Extension::Clamp);
        }
    }
    Ok(forces)
}

fn assemble(
    nu: &TimeVelocityField,
    forces: &[VectorField2D],
    kernel: &KernelSpec,
    gamma: f64,
) -> Result<TimeVelocityField> {
    let fields = nu
        .fields()
        .iter()
        .zip(forces)
        .map(|(v, f)| {
            let mut out = kernel.smooth(f)?;
            out.scale(-1.0);
            out.axpy(2.0 * gamma, v);
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    TimeVelocityField::new(fields)
}

fn check_chain(chain: &FlowChain, nu: &TimeVelocityField, action: GroupAction) -> Result<()> {
    if chain.action() != action {
        return Err(Error::Config(format!(
            "chain was built for the {} action",
            chain.action()
        )));
    }
    if chain.n_steps() != nu.n_steps() {
        return Err(Error::Config("chain and velocity field differ in N".into()));
    }
    Ok(())
}

/// `∇E(ν)(t_i) = 2γ ν(t_i) − ∫ |Dφ_{t_i,1}(y)| ∇L(φ_{t_i,1}(y)) K(·, y) ∇(I ∘ φ_{t_i,0})(y) dy`.
pub fn gradient_geometric(
    nu: &TimeVelocityField,
    chain: &FlowChain,
    kernel: &KernelSpec,
    gamma: f64,
) -> Result<TimeVelocityField> {
    check_chain(chain, nu, GroupAction::Geometric)?;
    assemble(nu, &discrepancy_forces(chain)?, kernel, gamma)
}

/// `∇E(ν)(t_i) = 2γ ν(t_i) + ∫ |Dφ_{t_i,0}(y)| (I ∘ φ_{t_i,0})(y) K(·, y) ∇(∇L ∘ φ_{t_i,1})(y) dy`.
pub fn gradient_mass_preserving(
    nu: &TimeVelocityField,
    chain: &FlowChain,
    kernel: &KernelSpec,
    gamma: f64,
) -> Result<TimeVelocityField> {
    check_chain(chain, nu, GroupAction::MassPreserving)?;
    assemble(nu, &discrepancy_forces(chain)?, kernel, gamma)
}

/// The full objective for a fixed template and data set.
#[derive(Debug, Clone)]
pub struct Objective<'a> {
    pub template: &'a ScalarImage,
    pub data: &'a Sinogram,
    pub kernel: &'a KernelSpec,
    pub gamma: f64,
    pub action: GroupAction,
    pub scheme: GradientScheme,
}

/// Everything one gradient evaluation produces.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: ObjectiveValue,
    pub gradient: Gradient,
    pub chain: FlowChain,
    pub deformed: ScalarImage,
}

impl<'a> Objective<'a> {
    pub fn new(
        template: &'a ScalarImage,
        data: &'a Sinogram,
        kernel: &'a KernelSpec,
        gamma: f64,
        action: GroupAction,
    ) -> Result<Self> {
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(Error::Config(format!("gamma must be non-negative, got {gamma}")));
        }
        template.grid().check_same(kernel.grid(), "template and kernel")?;
        Ok(Self {
            template,
            data,
            kernel,
            gamma,
            action,
            scheme: GradientScheme::default(),
        })
    }

    pub fn with_scheme(mut self, scheme: GradientScheme) -> Self {
        self.scheme = scheme;
        self
    }

    fn check(&self, param: &VelocityParam) -> Result<()> {
        if param.velocity.grid() != self.template.grid() {
            return Err(Error::GridMismatch("velocity field and template".into()));
        }
        Ok(())
    }

    /// Objective value only.
    pub fn value(&self, param: &VelocityParam) -> Result<ObjectiveValue> {
        self.check(param)?;
        let chain = FlowChain::forward(self.template, &param.velocity, self.action)?;
        let deformed = deform(self.action, &chain)?;
        let discrepancy = data_discrepancy(&deformed, self.data)?;
        Ok(ObjectiveValue::new(self.gamma * param.rkhs_norm_sq(), discrepancy))
    }

    /// Value, gradient and the chains behind them.
    pub fn evaluate(&self, param: &VelocityParam) -> Result<Evaluation> {
        self.check(param)?;
        let nu = &param.velocity;
        let mut chain = FlowChain::forward(self.template, nu, self.action)?;
        let deformed = deform(self.action, &chain)?;
        let discrepancy = data_discrepancy(&deformed, self.data)?;
        let grad_l = discrepancy_gradient_image(&deformed, self.data)?;
        let forces = match self.scheme {
            GradientScheme::Continuous => {
                chain.backpropagate(&grad_l, nu)?;
                discrepancy_forces(&chain)?
            }
            GradientScheme::DiscreteAdjoint => discrete_adjoint_forces(&chain, nu, &grad_l)?,
        };
        let velocity = assemble(nu, &forces, self.kernel, self.gamma)?;
        let momentum = TimeVelocityField::new(
            param
                .momentum
                .fields()
                .iter()
                .zip(&forces)
                .map(|(m, f)| {
                    let mut out = f.clone();
                    out.scale(-1.0);
                    out.axpy(2.0 * self.gamma, m);
                    out
                })
                .collect(),
        )?;
        if !velocity.is_finite() {
            return Err(Error::Numerical("non-finite gradient".into()));
        }
        Ok(Evaluation {
            value: ObjectiveValue::new(self.gamma * param.rkhs_norm_sq(), discrepancy),
            gradient: Gradient { velocity, momentum },
            chain,
            deformed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid2D;
    use crate::tomo::SinogramGeometry;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(n: usize) -> (Grid2D, SinogramGeometry, ScalarImage) {
        let g = Grid2D::square(n, 16.0).unwrap();
        let geom = SinogramGeometry::for_grid(&g, 4, 2 * n).unwrap();
        let template = ScalarImage::from_fn(g, |x, y| (-((x - 1.0).powi(2) + 2.0 * y * y) / 20.0).exp());
        (g, geom, template)
    }

    fn smooth_image(g: Grid2D, rng: &mut ChaCha8Rng) -> ScalarImage {
        let (a, b, c) = (
            rng.random_range(-1.0..1.0),
            rng.random_range(0.1..0.4),
            rng.random_range(0.1..0.4),
        );
        ScalarImage::from_fn(g, move |x, y| a * (b * x).sin() * (c * y + a).cos())
    }

    #[test]
    fn discrepancy_cases() {
        let (_, geom, f) = setup(16);
        let tf = ray_transform(&f, &geom);
        assert_eq!(data_discrepancy(&f, &tf).unwrap(), 0.0);
        let zero = Sinogram::zeros(geom);
        let direct: f64 = tf.values().iter().map(|v| v * v).sum::<f64>() * geom.cell_weight();
        assert!((data_discrepancy(&f, &zero).unwrap() - direct).abs() <= 1e-12 * direct);
        let doubled = tf.map(|v| 2.0 * v);
        let a = data_discrepancy(&f, &doubled).unwrap();
        let b = data_discrepancy(&f, &zero).unwrap();
        assert!((a - b).abs() <= 1e-12 * b);
    }

    #[test]
    fn discrepancy_gradient_matches_central_differences() {
        let (g, geom, f) = setup(32);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data = ray_transform(&smooth_image(g, &mut rng), &geom);
        let grad = discrepancy_gradient_image(&f, &data).unwrap();
        for _ in 0..4 {
            let delta = smooth_image(g, &mut rng);
            let eps = 1e-4;
            let plus = f.zip_map(&delta, |a, d| a + eps * d).unwrap();
            let minus = f.zip_map(&delta, |a, d| a - eps * d).unwrap();
            let fd = (data_discrepancy(&plus, &data).unwrap() - data_discrepancy(&minus, &data).unwrap()) / (2.0 * eps);
            let an = grad.dot(&delta);
            assert!(
                (fd - an).abs() <= 1e-6 * an.abs().max(fd.abs()),
                "fd {fd} vs analytic {an}"
            );
        }
    }

    #[test]
    fn discrepancy_gradient_is_linear_in_data() {
        let (g, geom, f) = setup(16);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g1 = ray_transform(&smooth_image(g, &mut rng), &geom);
        let g2 = ray_transform(&smooth_image(g, &mut rng), &geom);
        let d1 = discrepancy_gradient_image(&f, &g1).unwrap();
        let d2 = discrepancy_gradient_image(&f, &g2).unwrap();
        let expect = back_projection(&g1.zip_map(&g2, |a, b| -2.0 * (a - b)).unwrap(), &g);
        for k in 0..g.len() {
            let lhs = d1.values()[k] - d2.values()[k];
            assert!((lhs - expect.values()[k]).abs() <= 1e-10 * (1.0 + lhs.abs()));
        }
        assert!(discrepancy_gradient_image(&f, &ray_transform(&f, &geom))
            .unwrap()
            .values()
            .iter()
            .all(|v| *v == 0.0));
    }

    #[test]
    fn velocity_norm_cases() {
        let g = Grid2D::square(8, 4.0).unwrap();
        assert_eq!(velocity_norm_sq(&TimeVelocityField::zeros(g, 3).unwrap()), 0.0);
        let w = VectorField2D::from_fn(g, |x, y| (x.sin(), y * 0.5));
        let c = TimeVelocityField::new(vec![w.clone(); 5]).unwrap();
        assert!((velocity_norm_sq(&c) - w.norm_sq()).abs() < 1e-12 * w.norm_sq());
        for n in [8usize, 16] {
            let lin = TimeVelocityField::from_fn(g, n, |t, x, y| (t * x.sin(), t * y * 0.5)).unwrap();
            // Trapezoid on t^2 overshoots by exactly 1/(6 N^2).
            let expect = w.norm_sq() * (1.0 / 3.0 + 1.0 / (6.0 * (n * n) as f64));
            assert!((velocity_norm_sq(&lin) - expect).abs() < 1e-12 * expect);
        }
    }

    #[test]
    fn perfect_match_gives_zero_gradient_for_both_actions() {
        let (g, geom, template) = setup(16);
        let kernel = KernelSpec::new(3.0, g).unwrap();
        let data = ray_transform(&template, &geom);
        for action in [GroupAction::Geometric, GroupAction::MassPreserving] {
            let obj = Objective::new(&template, &data, &kernel, 0.7, action).unwrap();
            let eval = obj.evaluate(&VelocityParam::zeros(&kernel, 5).unwrap()).unwrap();
            assert_eq!(eval.value.total, 0.0);
            assert!(eval
                .gradient
                .velocity
                .fields()
                .iter()
                .all(|f| f.vx.iter().chain(&f.vy).all(|v| *v == 0.0)));
        }
    }

    #[test]
    fn gamma_term_alone_when_there_is_nothing_to_match() {
        let (g, geom, _) = setup(16);
        let kernel = KernelSpec::new(3.0, g).unwrap();
        let zero_template = ScalarImage::zeros(g);
        let data = Sinogram::zeros(geom);
        let mom = TimeVelocityField::from_fn(g, 4, |t, x, y| (0.1 * (x + t).sin(), 0.05 * (y * x).cos())).unwrap();
        let param = VelocityParam::from_momentum(&kernel, mom).unwrap();
        let gamma = 0.3;
        for action in [GroupAction::Geometric, GroupAction::MassPreserving] {
            let obj = Objective::new(&zero_template, &data, &kernel, gamma, action).unwrap();
            let eval = obj.evaluate(&param).unwrap();
            for (gv, v) in eval.gradient.velocity.fields().iter().zip(param.velocity.fields()) {
                for k in 0..g.len() {
                    assert_eq!(gv.vx[k], 2.0 * gamma * v.vx[k]);
                    assert_eq!(gv.vy[k], 2.0 * gamma * v.vy[k]);
                }
            }
        }
    }

    #[test]
    fn free_gradient_functions_agree_with_evaluate() {
        let (g, geom, template) = setup(16);
        let kernel = KernelSpec::new(3.0, g).unwrap();
        let target = ScalarImage::from_fn(g, |x, y| (-((x + 1.0).powi(2) + y * y) / 16.0).exp());
        let data = ray_transform(&target, &geom);
        let param = VelocityParam::zeros(&kernel, 3).unwrap();
        for action in [GroupAction::Geometric, GroupAction::MassPreserving] {
            let obj = Objective::new(&template, &data, &kernel, 1e-3, action)
                .unwrap()
                .with_scheme(GradientScheme::Continuous);
            let eval = obj.evaluate(&param).unwrap();
            let free = match action {
                GroupAction::Geometric => gradient_geometric(&param.velocity, &eval.chain, &kernel, 1e-3).unwrap(),
                GroupAction::MassPreserving => {
                    gradient_mass_preserving(&param.velocity, &eval.chain, &kernel, 1e-3).unwrap()
                }
            };
            assert_eq!(free, eval.gradient.velocity);
        }
        let eval = Objective::new(&template, &data, &kernel, 0.0, GroupAction::Geometric)
            .unwrap()
            .with_scheme(GradientScheme::Continuous)
            .evaluate(&param)
            .unwrap();
        assert!(gradient_mass_preserving(&param.velocity, &eval.chain, &kernel, 0.0).is_err());
    }

    #[test]
    fn negative_gamma_is_rejected() {
        let (g, geom, template) = setup(8);
        let kernel = KernelSpec::new(1.0, g).unwrap();
        let data = Sinogram::zeros(geom);
        assert!(Objective::new(&template, &data, &kernel, -1.0, GroupAction::Geometric).is_err());
    }

    fn random_smooth_field(g: Grid2D, n: usize, amp: f64, rng: &mut ChaCha8Rng) -> TimeVelocityField {
        let c: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        TimeVelocityField::from_fn(g, n, move |t, x, y| {
            let w = (-(x * x + y * y) / 80.0).exp();
            (
                amp * w * (c[0] + c[1] * (0.2 * y + c[2]).sin() + c[3] * t),
                amp * w * (c[4] + c[5] * (0.2 * x + c[6]).cos() + c[7] * t * (0.1 * y + c[8]).sin() + c[9]),
            )
        })
        .unwrap()
    }

    fn fd_relative_errors(action: GroupAction, scheme: GradientScheme, trials: usize) -> Vec<f64> {
        let (g, geom, template) = setup(16);
        let target = ScalarImage::from_fn(g, |x, y| (-((x + 1.5).powi(2) + 1.5 * (y - 1.0).powi(2)) / 18.0).exp());
        let data = ray_transform(&target, &geom);
        let kernel = KernelSpec::new(3.0, g).unwrap();
        let obj = Objective::new(&template, &data, &kernel, 1e-2, action)
            .unwrap()
            .with_scheme(scheme);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let param = VelocityParam::from_momentum(&kernel, random_smooth_field(g, 5, 0.003, &mut rng)).unwrap();
        let grad = obj.evaluate(&param).unwrap().gradient;
        (0..trials)
            .map(|_| {
                let mut zeta = random_smooth_field(g, 5, 1.0, &mut rng);
                let peak = VelocityParam::from_momentum(&kernel, zeta.clone())
                    .unwrap()
                    .velocity
                    .fields()
                    .iter()
                    .map(|f| f.max_norm())
                    .fold(0.0, f64::max);
                zeta.scale(1.0 / peak);
                let eta = VelocityParam::from_momentum(&kernel, zeta.clone()).unwrap();
                // Departure points of a small field sit next to lattice nodes, where
                // the bilinear interpolant has kinks; keep the probe well inside one cell.
                let eps = 1e-6;
                let shifted = |s: f64| {
                    let mut p = param.clone();
                    p.momentum.axpy(s, &eta.momentum);
                    p.velocity.axpy(s, &eta.velocity);
                    obj.value(&p).unwrap().total
                };
                let fd = (shifted(eps) - shifted(-eps)) / (2.0 * eps);
                let an = grad.pair_with_momentum(&zeta);
                (fd - an).abs() / an.abs()
            })
            .collect()
    }

    #[test]
    fn discrete_adjoint_matches_central_differences() {
        for action in [GroupAction::Geometric, GroupAction::MassPreserving] {
            let errs = fd_relative_errors(action, GradientScheme::DiscreteAdjoint, 4);
            assert!(errs.iter().all(|e| *e < 1e-5), "{action}: {errs:?}");
        }
    }

    #[test]
    fn continuous_gradient_is_a_coarse_approximation() {
        for action in [GroupAction::Geometric, GroupAction::MassPreserving] {
            let errs = fd_relative_errors(action, GradientScheme::Continuous, 4);
            assert!(errs.iter().all(|e| *e < 0.5), "{action}: {errs:?}");
        }
    }

    #[test]
    fn scheme_parse_and_default() {
        assert_eq!(GradientScheme::default(), GradientScheme::DiscreteAdjoint);
        for s in [GradientScheme::Continuous, GradientScheme::DiscreteAdjoint] {
            assert_eq!(s.to_string().parse::<GradientScheme>().unwrap(), s);
        }
        assert!("adjoint".parse::<GradientScheme>().is_err());
    }
}
