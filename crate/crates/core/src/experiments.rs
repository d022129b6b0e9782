//! Test-suite definitions and the regularization-theory experiments.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Grid2D, ScalarImage};
use crate::metrics::MetricReport;
use crate::optimize::{register_with, IterationRecord, RegistrationConfig, RegistrationResult};
use crate::phantom::{add_noise, make_phantom, NoiseSpec, PhantomKind, Role, SheppLoganVariant};
use crate::tomo::{fbp, ray_transform, Sinogram, SinogramGeometry};
use crate::tv::{tv_reconstruct, TVConfig};

/// Half-width of the square reconstruction domain used by every suite.
pub const DOMAIN_HALF_WIDTH: f64 = 16.0;

/// Forward-simulation setup shared by registration and the baselines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProblemSpec {
    pub size: usize,
    pub n_angles: usize,
    pub n_detectors: usize,
    pub snr_db: f64,
    pub template: PhantomKind,
    pub target: PhantomKind,
}

/// A concrete instance: phantoms plus clean and noisy data.
#[derive(Debug, Clone)]
pub struct Problem {
    pub grid: Grid2D,
    pub geometry: SinogramGeometry,
    pub template: ScalarImage,
    pub target: ScalarImage,
    pub clean: Sinogram,
    pub data: Sinogram,
}

impl ProblemSpec {
    pub fn build(&self, seed: u64) -> Result<Problem> {
        let grid = Grid2D::square(self.size, DOMAIN_HALF_WIDTH)?;
        let geometry = SinogramGeometry::for_grid(&grid, self.n_angles, self.n_detectors)?;
        let template = make_phantom(self.template, &grid);
        let target = make_phantom(self.target, &grid);
        let clean = ray_transform(&target, &geometry);
        let data = add_noise(&clean, &NoiseSpec::new(self.snr_db, seed))?;
        Ok(Problem {
            grid,
            geometry,
            template,
            target,
            clean,
            data,
        })
    }
}

/// Direct reconstruction baselines run next to registration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Baselines {
    pub fbp_freq_scaling: f64,
    pub tv_mu: f64,
    pub tv_iters: usize,
    /// Extra multiples of `tv_mu` tried when tuning TV against the target.
    pub tv_mu_factors: Vec<f64>,
}

/// One registration run of a suite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteCase {
    pub label: String,
    pub problem: ProblemSpec,
    pub registration: RegistrationConfig,
    pub baselines: Option<Baselines>,
}

/// Kernel widths of the sensitivity table.
pub const SENSITIVITY_SIGMAS: [f64; 6] = [1.0, 2.0, 2.5, 3.0, 4.0, 8.0];
/// Penalty weights of the sensitivity table.
pub const SENSITIVITY_GAMMAS: [f64; 5] = [1e-7, 1e-5, 1e-3, 1e-1, 10.0];

/// Registration settings shared by suites 3 and 4.
fn shepp_logan_registration(max_iters: usize) -> RegistrationConfig {
    RegistrationConfig {
        gamma: 1e-7,
        sigma: 2.0,
        alpha: 0.02,
        n_steps: 20,
        max_iters,
        ..Default::default()
    }
}

/// Cases of suite `id`; `full` selects the original resolutions.
pub fn suite_cases(id: u32, full: bool) -> Result<Vec<SuiteCase>> {
    let half = |n: usize| if full { n } else { n / 2 };
    match id {
        1 => Ok(vec![SuiteCase {
            label: "single-star".into(),
            problem: ProblemSpec {
                size: 64,
                n_angles: 10,
                n_detectors: 92,
                snr_db: 4.87,
                template: PhantomKind::SingleStar(Role::Template),
                target: PhantomKind::SingleStar(Role::Target),
            },
            registration: RegistrationConfig {
                gamma: 1e-7,
                sigma: 6.0,
                alpha: 0.02,
                n_steps: 20,
                max_iters: 200,
                ..Default::default()
            },
            baselines: Some(Baselines {
                fbp_freq_scaling: 0.4,
                tv_mu: 3.0,
                tv_iters: 1000,
                tv_mu_factors: vec![0.01, 0.1, 10.0],
            }),
        }]),
        2 => Ok(vec![SuiteCase {
            label: "six-stars".into(),
            problem: ProblemSpec {
                size: half(438),
                n_angles: 6,
                n_detectors: half(620),
                snr_db: 4.75,
                template: PhantomKind::SixStars(Role::Template),
                target: PhantomKind::SixStars(Role::Target),
            },
            registration: RegistrationConfig {
                gamma: 1e-7,
                sigma: 2.0,
                alpha: 0.04,
                n_steps: 20,
                max_iters: 200,
                ..Default::default()
            },
            baselines: Some(Baselines {
                fbp_freq_scaling: 0.4,
                tv_mu: 1.0,
                tv_iters: 1000,
                tv_mu_factors: vec![0.01, 0.1, 10.0],
            }),
        }]),
        3 => {
            let problem = ProblemSpec {
                size: half(256),
                n_angles: 10,
                n_detectors: half(362),
                snr_db: 7.06,
                template: PhantomKind::SheppLoganVariant(SheppLoganVariant::Deformed),
                target: PhantomKind::SheppLogan,
            };
            let mut cases = Vec::new();
            for sigma in SENSITIVITY_SIGMAS {
                for gamma in SENSITIVITY_GAMMAS {
                    cases.push(SuiteCase {
                        label: format!("sigma{sigma}_gamma{gamma:e}"),
                        problem,
                        registration: RegistrationConfig {
                            gamma,
                            sigma,
                            ..shepp_logan_registration(500)
                        },
                        baselines: None,
                    });
                }
            }
            Ok(cases)
        }
        4 => {
            let case = |label: &str, variant, snr_db| SuiteCase {
                label: label.into(),
                problem: ProblemSpec {
                    size: half(256),
                    n_angles: 10,
                    n_detectors: half(362),
                    snr_db,
                    template: PhantomKind::SheppLoganVariant(variant),
                    target: PhantomKind::SheppLogan,
                },
                registration: shepp_logan_registration(1000),
                baselines: None,
            };
            Ok(vec![
                case("missing-object", SheppLoganVariant::MissingObject, 7.06),
                case("extra-object", SheppLoganVariant::ExtraObject, 6.46),
            ])
        }
        _ => Err(Error::Config(format!("suite id must be 1, 2, 3 or 4, got {id}"))),
    }
}

/// Template lacking the bright extra object of the target.
///
/// All interior ellipses of the canonical phantom lie below grey value 0.5, so
/// at that threshold the plain phantom has one component (the skull) and the
/// extra-object variant has two.
pub fn topology_case(full: bool) -> SuiteCase {
    let size = if full { 256 } else { 128 };
    SuiteCase {
        label: "template-lacks-object".into(),
        problem: ProblemSpec {
            size,
            n_angles: 10,
            n_detectors: if full { 362 } else { 181 },
            snr_db: 7.06,
            template: PhantomKind::SheppLogan,
            target: PhantomKind::SheppLoganVariant(SheppLoganVariant::ExtraObject),
        },
        registration: shepp_logan_registration(1000),
        baselines: None,
    }
}

#[derive(Debug, Clone)]
pub struct TvOutcome {
    pub mu: f64,
    pub image: ScalarImage,
    pub metrics: MetricReport,
}

#[derive(Debug, Clone)]
pub struct CaseOutcome {
    pub problem: Problem,
    pub registration: RegistrationResult,
    pub metrics: MetricReport,
    pub fbp: Option<(ScalarImage, MetricReport)>,
    /// Reference weight first, then the other tried weights.
    pub tv: Vec<TvOutcome>,
}

impl CaseOutcome {
    /// TV result with the best SSIM against the target.
    pub fn best_tv(&self) -> Option<&TvOutcome> {
        self.tv.iter().max_by(|a, b| a.metrics.ssim.total_cmp(&b.metrics.ssim))
    }
}

/// Runs registration and the baselines for one case.
pub fn run_case(case: &SuiteCase, seed: u64, observer: impl FnMut(&IterationRecord)) -> Result<CaseOutcome> {
    let problem = case.problem.build(seed)?;
    let registration = register_with(&problem.template, &problem.data, &case.registration, None, observer)?;
    let metrics = MetricReport::compare(&registration.deformed, &problem.target)?;
    let mut fbp_out = None;
    let mut tv = Vec::new();
    if let Some(b) = &case.baselines {
        let img = fbp(&problem.data, &problem.grid, b.fbp_freq_scaling)?;
        let m = MetricReport::compare(&img, &problem.target)?;
        fbp_out = Some((img, m));
        for factor in std::iter::once(1.0).chain(b.tv_mu_factors.iter().copied()) {
            let mu = b.tv_mu * factor;
            let image = tv_reconstruct(&problem.data, &problem.grid, &TVConfig::new(mu, b.tv_iters))?;
            let metrics = MetricReport::compare(&image, &problem.target)?;
            tv.push(TvOutcome { mu, image, metrics });
        }
    }
    Ok(CaseOutcome {
        problem,
        registration,
        metrics,
        fbp: fbp_out,
        tv,
    })
}

/// Small instance for the stability and convergence experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheorySetup {
    pub problem: ProblemSpec,
    pub registration: RegistrationConfig,
    /// SNR of the coarsest noise level.
    pub base_snr_db: f64,
    pub levels: usize,
}

impl Default for TheorySetup {
    fn default() -> Self {
        Self {
            problem: ProblemSpec {
                size: 32,
                n_angles: 10,
                n_detectors: 46,
                snr_db: f64::INFINITY,
                template: PhantomKind::SingleStar(Role::Template),
                target: PhantomKind::SingleStar(Role::Target),
            },
            registration: RegistrationConfig {
                gamma: 1e-2,
                sigma: 3.0,
                alpha: 0.01,
                n_steps: 10,
                max_iters: 100,
                ..Default::default()
            },
            base_snr_db: 5.0,
            levels: 3,
        }
    }
}

/// Noise realization `noisy - clean` at the given SNR.
fn noise_draw(clean: &Sinogram, snr_db: f64, seed: u64) -> Result<Sinogram> {
    add_noise(clean, &NoiseSpec::new(snr_db, seed))?.zip_map(clean, |a, b| a - b)
}

fn perturbed(clean: &Sinogram, noise: &Sinogram, scale: f64) -> Result<Sinogram> {
    clean.zip_map(noise, |c, n| c + scale * n)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub noise_scales: Vec<f64>,
    /// `||W(ν, I) - W(ν', I)||` for the two data realizations at each scale.
    pub distances: Vec<f64>,
}

/// Registers against two noisy realizations whose noise shrinks by halves.
pub fn stability_experiment(setup: &TheorySetup, seeds: (u64, u64)) -> Result<StabilityReport> {
    let p = setup.problem.build(0)?;
    let n1 = noise_draw(&p.clean, setup.base_snr_db, seeds.0)?;
    let n2 = noise_draw(&p.clean, setup.base_snr_db, seeds.1)?;
    let mut report = StabilityReport {
        noise_scales: Vec::new(),
        distances: Vec::new(),
    };
    for k in 0..setup.levels {
        let scale = 0.5f64.powi(k as i32);
        let run = |noise: &Sinogram| -> Result<ScalarImage> {
            let data = perturbed(&p.clean, noise, scale)?;
            Ok(register_with(&p.template, &data, &setup.registration, None, |_| {})?.deformed)
        };
        let (a, b) = (run(&n1)?, run(&n2)?);
        report.noise_scales.push(scale);
        report.distances.push(a.zip_map(&b, |x, y| x - y)?.norm_sq().sqrt());
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    /// Noise norms `δ_k`.
    pub deltas: Vec<f64>,
    pub gammas: Vec<f64>,
    /// Final `||T W(ν, I) - g_k||²` against the noisy data.
    pub discrepancies: Vec<f64>,
    /// Final `||T W(ν, I) - T f_true||²`.
    pub clean_discrepancies: Vec<f64>,
}

/// Halves the noise and `γ` together, so `γ → 0` and `δ²/γ → 0`.
pub fn convergence_experiment(setup: &TheorySetup, seed: u64) -> Result<ConvergenceReport> {
    let p = setup.problem.build(0)?;
    let noise = noise_draw(&p.clean, setup.base_snr_db, seed)?;
    let mut report = ConvergenceReport {
        deltas: Vec::new(),
        gammas: Vec::new(),
        discrepancies: Vec::new(),
        clean_discrepancies: Vec::new(),
    };
    for k in 0..setup.levels {
        let scale = 0.5f64.powi(k as i32);
        let data = perturbed(&p.clean, &noise, scale)?;
        let cfg = RegistrationConfig {
            gamma: setup.registration.gamma * scale,
            ..setup.registration
        };
        let res = register_with(&p.template, &data, &cfg, None, |_| {})?;
        let projected = ray_transform(&res.deformed, &p.geometry);
        report.deltas.push(scale * noise.norm_sq().sqrt());
        report.gammas.push(cfg.gamma);
        report
            .discrepancies
            .push(projected.zip_map(&data, |a, b| a - b)?.norm_sq());
        report
            .clean_discrepancies
            .push(projected.zip_map(&p.clean, |a, b| a - b)?.norm_sq());
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::measure_snr;

    #[test]
    fn suite_tables() {
        assert_eq!(suite_cases(1, false).unwrap().len(), 1);
        let s3 = suite_cases(3, false).unwrap();
        assert_eq!(s3.len(), 30);
        assert!(s3
            .iter()
            .all(|c| c.problem.size == 128 && c.registration.max_iters == 500));
        assert_eq!(suite_cases(3, true).unwrap()[0].problem.size, 256);
        assert_eq!(suite_cases(2, false).unwrap()[0].problem.size, 219);
        let s4 = suite_cases(4, false).unwrap();
        assert_eq!(s4.len(), 2);
        assert!(s4.iter().all(|c| c.registration.max_iters == 1000));
        assert!(matches!(suite_cases(5, false), Err(Error::Config(_))));
        for id in 1..=4 {
            for c in suite_cases(id, true).unwrap() {
                c.registration.validate().unwrap();
            }
        }
    }

    #[test]
    fn problem_noise_matches_target_snr() {
        let spec = suite_cases(1, false).unwrap()[0].problem;
        let p = spec.build(3).unwrap();
        assert!((measure_snr(&p.clean, &p.data).unwrap() - 4.87).abs() < 0.01);
        assert_eq!(p.geometry.n_detectors, 92);
        let q = spec.build(3).unwrap();
        assert_eq!(p.data.values(), q.data.values());
    }

    #[test]
    fn perturbation_scales_noise() {
        let p = TheorySetup::default().problem.build(0).unwrap();
        let n = noise_draw(&p.clean, 5.0, 1).unwrap();
        let half = perturbed(&p.clean, &n, 0.5)
            .unwrap()
            .zip_map(&p.clean, |a, b| a - b)
            .unwrap();
        assert!((half.norm_sq() - 0.25 * n.norm_sq()).abs() < 1e-9 * n.norm_sq());
    }
}
