//! Gradient descent on the time-sampled velocity field.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::action::{deform, GroupAction};
use crate::error::{Error, Result};
use crate::flow::FlowChain;
use crate::grid::{ScalarImage, TimeVelocityField};
use crate::kernel::KernelSpec;
use crate::objective::{GradientScheme, Objective, ObjectiveValue, VelocityParam};
use crate::tomo::Sinogram;

/// Parameters of one registration run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegistrationConfig {
    /// Weight of the deformation penalty.
    pub gamma: f64,
    /// Gaussian kernel width.
    pub sigma: f64,
    /// Fixed step size.
    pub alpha: f64,
    /// Number of time steps `N`.
    pub n_steps: usize,
    /// Maximum number of descent updates.
    pub max_iters: usize,
    /// Stop once the V² norm of the gradient is at most this.
    pub grad_tol: f64,
    pub action: GroupAction,
    pub gradient: GradientScheme,
    /// Halve the step until the objective decreases. Off for reproduction runs.
    pub backtracking: bool,
    /// Unused with the zero initial field; kept for reproducible manifests.
    pub seed: u64,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            gamma: 1e-7,
            sigma: 6.0,
            alpha: 0.02,
            n_steps: 20,
            max_iters: 200,
            grad_tol: 0.0,
            action: GroupAction::Geometric,
            gradient: GradientScheme::default(),
            backtracking: false,
            seed: 0,
        }
    }
}

impl RegistrationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| Err(Error::Config(format!("registration.{key}: {msg}")));
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad("gamma", "must be a finite number >= 0");
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad("sigma", "must be a finite number > 0");
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("alpha", "must be a finite number > 0");
        }
        if self.n_steps == 0 {
            return bad("n_steps", "must be at least 1");
        }
        if self.max_iters == 0 {
            return bad("max_iters", "must be at least 1");
        }
        if !(self.grad_tol >= 0.0) {
            return bad("grad_tol", "must be >= 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    GradTol,
    MaxIters,
    NumericalFailure,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::GradTol => "grad-tol",
            StopReason::MaxIters => "max-iters",
            StopReason::NumericalFailure => "numerical-failure",
        })
    }
}

/// One line of the progress log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub total: f64,
    pub penalty: f64,
    pub discrepancy: f64,
    pub grad_norm: f64,
    pub step: f64,
}

#[derive(Debug, Clone)]
pub struct RegistrationResult {
    pub final_velocity: VelocityParam,
    /// `I ∘ φ_{t_i,0}` for `i = 0..=N` at the returned iterate.
    pub trajectory: Vec<ScalarImage>,
    /// The deformed template `W(ν, I)`; differs from the last trajectory
    /// entry for the mass-preserving action.
    pub deformed: ScalarImage,
    /// Entry `k` is the objective at the `k`-th iterate, starting from the initial field.
    pub objective_history: Vec<ObjectiveValue>,
    pub log: Vec<IterationRecord>,
    /// Number of descent updates applied.
    pub iterations_run: usize,
    pub stop_reason: StopReason,
    /// Message of the error behind a numerical failure.
    pub failure: Option<String>,
}

/// Runs descent from the zero field.
pub fn register(template: &ScalarImage, data: &Sinogram, cfg: &RegistrationConfig) -> Result<RegistrationResult> {
    register_with(template, data, cfg, None, |_| {})
}

fn numerical(err: Error) -> Result<String> {
    match err {
        Error::Numerical(msg) => Ok(msg),
        other => Err(other),
    }
}

/// Runs descent from `initial_momentum` (zero when absent), reporting every iterate to `observer`.
pub fn register_with(
    template: &ScalarImage,
    data: &Sinogram,
    cfg: &RegistrationConfig,
    initial_momentum: Option<TimeVelocityField>,
    mut observer: impl FnMut(&IterationRecord),
) -> Result<RegistrationResult> {
    cfg.validate()?;
    if !template.is_finite() {
        return Err(Error::Config("template contains non-finite values".into()));
    }
    let grid = *template.grid();
    let kernel = KernelSpec::new(cfg.sigma, grid)?;
    let objective = Objective::new(template, data, &kernel, cfg.gamma, cfg.action)?.with_scheme(cfg.gradient);
    let mut param = match initial_momentum {
        Some(m) => {
            if m.n_steps() != cfg.n_steps || m.grid() != &grid {
                return Err(Error::Config("initial field does not match the grid or n_steps".into()));
            }
            VelocityParam::from_momentum(&kernel, m)?
        }
        None => VelocityParam::zeros(&kernel, cfg.n_steps)?,
    };

    let mut history = Vec::new();
    let mut log = Vec::new();
    let mut eval = match objective.evaluate(&param) {
        Ok(e) => e,
        Err(err) => {
            let msg = numerical(err)?;
            return Err(Error::Numerical(format!("initial field is already invalid: {msg}")));
        }
    };
    let mut step = cfg.alpha;
    let mut updates = 0;
    let mut failure = None;
    let stop_reason = loop {
        let grad_norm = eval.gradient.norm_sq().max(0.0).sqrt();
        let record = IterationRecord {
            iteration: updates,
            total: eval.value.total,
            penalty: eval.value.penalty,
            discrepancy: eval.value.discrepancy,
            grad_norm,
            step,
        };
        observer(&record);
        log.push(record);
        history.push(eval.value);
        if grad_norm <= cfg.grad_tol {
            break StopReason::GradTol;
        }
        if updates == cfg.max_iters {
            break StopReason::MaxIters;
        }
        step = cfg.alpha;
        let next = loop {
            let mut candidate = param.clone();
            candidate.descend(step, &eval.gradient);
            let outcome = if candidate.velocity.is_finite() {
                objective.evaluate(&candidate)
            } else {
                Err(Error::Numerical("non-finite velocity field".into()))
            };
            match outcome {
                Ok(e) if !cfg.backtracking || e.value.total < eval.value.total => break Ok((candidate, e)),
                Ok(_) if step > cfg.alpha * 1e-6 => step *= 0.5,
                Ok(e) => break Ok((candidate, e)),
                Err(err) => {
                    let msg = numerical(err)?;
                    if cfg.backtracking && step > cfg.alpha * 1e-6 {
                        step *= 0.5;
                    } else {
                        break Err(msg);
                    }
                }
            }
        };
        match next {
            Ok((p, e)) => {
                param = p;
                eval = e;
                updates += 1;
            }
            Err(msg) => {
                failure = Some(msg);
                break StopReason::NumericalFailure;
            }
        }
    };

    let deformed = deform(cfg.action, &eval.chain)?;
    Ok(RegistrationResult {
        final_velocity: param,
        trajectory: eval.chain.transported_template,
        deformed,
        objective_history: history,
        log,
        iterations_run: updates,
        stop_reason,
        failure,
    })
}

/// Deformed template for an arbitrary field, without any optimization.
pub fn apply_deformation(template: &ScalarImage, nu: &TimeVelocityField, action: GroupAction) -> Result<ScalarImage> {
    let chain = FlowChain::forward(template, nu, action)?;
    deform(action, &chain)
}
