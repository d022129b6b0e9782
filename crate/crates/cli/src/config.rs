//! Experiment configuration file (TOML).
//!
//! ```toml
//! [phantom]
//! template = "single-star-template"
//! target = "single-star-target"
//! size = 64
//!
//! [geometry]
//! n_angles = 10
//! n_detectors = 92
//!
//! [noise]
//! snr_db = 4.87
//! seed = 7
//!
//! [registration]
//! gamma = 1e-7
//! sigma = 6.0
//! alpha = 0.02
//! n_steps = 20
//! max_iters = 200
//! action = "geometric"
//!
//! [baselines]
//! fbp_freq_scaling = 0.4
//! tv_mu = 3.0
//! tv_iters = 1000
//!
//! [output]
//! dir = "out/suite1"
//! ```
//!
//! Every section except `[baselines]` and `[output]` is required. Unknown keys
//! are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use indireg::experiments::ProblemSpec;
use indireg::optimize::RegistrationConfig;
use indireg::phantom::PhantomKind;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSection {
    pub template: String,
    pub target: String,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub n_angles: usize,
    pub n_detectors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    /// Omit for noise-free data.
    #[serde(default)]
    pub snr_db: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSection {
    pub fbp_freq_scaling: Option<f64>,
    pub tv_mu: Option<f64>,
    pub tv_iters: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub phantom: PhantomSection,
    pub geometry: GeometrySection,
    pub noise: NoiseSection,
    pub registration: RegistrationConfig,
    #[serde(default)]
    pub baselines: Option<BaselineSection>,
    #[serde(default)]
    pub output: Option<OutputSection>,
}

fn invalid(key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {msg}"))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.template_kind()?;
        self.target_kind()?;
        if self.phantom.size < 16 {
            return Err(invalid(
                "phantom.size",
                format!("must be at least 16, got {}", self.phantom.size),
            ));
        }
        if self.geometry.n_angles == 0 {
            return Err(invalid("geometry.n_angles", "must be at least 1"));
        }
        if self.geometry.n_detectors < 2 {
            return Err(invalid("geometry.n_detectors", "must be at least 2"));
        }
        if let Some(snr) = self.noise.snr_db {
            if !snr.is_finite() {
                return Err(invalid(
                    "noise.snr_db",
                    "must be finite; omit the key for noise-free data",
                ));
            }
        }
        self.registration.validate().map_err(|e| match e {
            indireg::Error::Config(msg) => CliError::Config(msg),
            other => CliError::Core(other),
        })?;
        if let Some(b) = &self.baselines {
            if let Some(s) = b.fbp_freq_scaling {
                if !(s > 0.0 && s <= 1.0) {
                    return Err(invalid(
                        "baselines.fbp_freq_scaling",
                        format!("must lie in (0, 1], got {s}"),
                    ));
                }
            }
            if let Some(mu) = b.tv_mu {
                if !(mu > 0.0 && mu.is_finite()) {
                    return Err(invalid("baselines.tv_mu", format!("must be positive, got {mu}")));
                }
            }
            if b.tv_iters == Some(0) {
                return Err(invalid("baselines.tv_iters", "must be at least 1"));
            }
        }
        Ok(())
    }

    pub fn template_kind(&self) -> Result<PhantomKind, CliError> {
        self.phantom
            .template
            .parse()
            .map_err(|e| invalid("phantom.template", e))
    }

    pub fn target_kind(&self) -> Result<PhantomKind, CliError> {
        self.phantom.target.parse().map_err(|e| invalid("phantom.target", e))
    }

    pub fn problem(&self) -> Result<ProblemSpec, CliError> {
        Ok(ProblemSpec {
            size: self.phantom.size,
            n_angles: self.geometry.n_angles,
            n_detectors: self.geometry.n_detectors,
            snr_db: self.noise.snr_db.unwrap_or(f64::INFINITY),
            template: self.template_kind()?,
            target: self.target_kind()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[phantom]
template = "single-star-template"
target = "single-star-target"
size = 64

[geometry]
n_angles = 10
n_detectors = 92

[noise]
snr_db = 4.87
seed = 7

[registration]
gamma = 1e-7
sigma = 6.0
"#;

    fn message(text: &str) -> String {
        match ExperimentConfig::from_toml(text) {
            Err(CliError::Config(m)) => m,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn parses_and_fills_defaults() {
        let cfg = ExperimentConfig::from_toml(BASE).unwrap();
        assert_eq!(cfg.registration.n_steps, 20);
        assert_eq!(cfg.registration.alpha, 0.02);
        assert_eq!(cfg.problem().unwrap().snr_db, 4.87);
        assert!(cfg.baselines.is_none());
    }

    #[test]
    fn invalid_values_name_their_key() {
        assert!(message(&BASE.replace("sigma = 6.0", "sigma = 0.0")).contains("registration.sigma"));
        assert!(message(&BASE.replace("size = 64", "size = 4")).contains("phantom.size"));
        assert!(message(&BASE.replace("\"single-star-target\"", "\"blob\"")).contains("phantom.target"));
        let tv = format!("{BASE}\n[baselines]\ntv_mu = -1.0\n");
        assert!(message(&tv).contains("baselines.tv_mu"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(message(&BASE.replace("n_angles = 10", "n_angles = 10\nn_angels = 3")).contains("n_angels"));
        assert!(message(&format!("{BASE}\n[extra]\nx = 1\n")).contains("extra"));
        assert!(message(&BASE.replace("gamma = 1e-7", "gamma = 1e-7\nlearning_rate = 1")).contains("learning_rate"));
    }
}
