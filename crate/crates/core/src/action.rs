//! Group actions of diffeomorphisms on grey-scale images.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowChain;
use crate::grid::ScalarImage;

/// How a diffeomorphism acts on an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupAction {
    /// `I ∘ φ⁻¹`: grey values are moved, never rescaled.
    Geometric,
    /// `|Dφ⁻¹| (I ∘ φ⁻¹)`: total intensity is conserved.
    MassPreserving,
}

impl fmt::Display for GroupAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GroupAction::Geometric => "geometric",
            GroupAction::MassPreserving => "mass-preserving",
        })
    }
}

impl FromStr for GroupAction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "geometric" => Ok(GroupAction::Geometric),
            "mass-preserving" => Ok(GroupAction::MassPreserving),
            other => Err(Error::Config(format!(
                "unknown group action '{other}' (expected geometric or mass-preserving)"
            ))),
        }
    }
}

/// The deformed template at `t = 1` from a fully advanced chain.
pub fn deform(action: GroupAction, chain: &FlowChain) -> Result<ScalarImage> {
    if !chain.is_advanced() {
        return Err(Error::State("flow chain has not been advanced to t = 1".into()));
    }
    let n = chain.n_steps();
    let transported = &chain.transported_template[n];
    match action {
        GroupAction::Geometric => Ok(transported.clone()),
        GroupAction::MassPreserving => {
            if chain.action() != GroupAction::MassPreserving {
                return Err(Error::State(
                    "mass-preserving deformation needs a chain built with the mass-preserving Jacobian".into(),
                ));
            }
            transported.zip_map(&chain.jacobian[n], |f, j| f * j)
        }
    }
}
