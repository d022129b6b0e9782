use std::fs::File;
use std::path::{Path, PathBuf};

use serde::Serialize;

use indireg::experiments::{run_case, suite_cases, CaseOutcome, SuiteCase, DOMAIN_HALF_WIDTH};
use indireg::grid::Grid2D;
use indireg::io::{load_igrd, load_isin};
use indireg::metrics::{count_components, measure_snr, MetricReport};
use indireg::optimize::{register_with, IterationRecord, RegistrationResult, StopReason};
use indireg::phantom::{add_noise, make_phantom, NoiseSpec, PhantomKind};
use indireg::tomo::{fbp, ray_transform, SinogramGeometry};
use indireg::tv::{tv_reconstruct, TVConfig};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::{config_hash, OutputDir};

/// Options shared by every subcommand.
#[derive(Debug, Clone)]
pub struct Global {
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub threads: usize,
    pub log_csv: Option<PathBuf>,
}

impl Global {
    fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}

/// Grey level used to count objects in registered images.
const COMPONENT_THRESHOLD: f64 = 0.5;

/// Per-iteration progress: a line on stderr and, optionally, a CSV row.
struct ProgressLog {
    csv: Option<csv::Writer<File>>,
}

#[derive(Serialize)]
struct LogRow<'a> {
    case: &'a str,
    iteration: usize,
    total: f64,
    penalty: f64,
    discrepancy: f64,
    grad_norm: f64,
}

impl ProgressLog {
    fn open(path: Option<&Path>) -> Result<Self, CliError> {
        let csv = match path {
            Some(p) => Some(csv::Writer::from_path(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?),
            None => None,
        };
        Ok(Self { csv })
    }

    fn record(&mut self, case: &str, r: &IterationRecord) -> Result<(), CliError> {
        eprintln!(
            "{case} iter {:>5} total {:.6e} penalty {:.6e} discrepancy {:.6e} grad {:.6e}",
            r.iteration, r.total, r.penalty, r.discrepancy, r.grad_norm
        );
        if let Some(w) = &mut self.csv {
            w.serialize(LogRow {
                case,
                iteration: r.iteration,
                total: r.total,
                penalty: r.penalty,
                discrepancy: r.discrepancy,
                grad_norm: r.grad_norm,
            })?;
        }
        Ok(())
    }

    fn finish(&mut self) -> Result<(), CliError> {
        if let Some(w) = &mut self.csv {
            w.flush()?;
        }
        Ok(())
    }
}

/// Runs an observer-driven registration while streaming the progress log.
fn logged<T>(
    log: &mut ProgressLog,
    case: &str,
    run: impl FnOnce(&mut dyn FnMut(&IterationRecord)) -> indireg::Result<T>,
) -> Result<T, CliError> {
    let mut failure = None;
    let out = run(&mut |r| {
        if failure.is_none() {
            failure = log.record(case, r).err();
        }
    })?;
    match failure {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

#[derive(Serialize)]
struct ObjectiveRow {
    iteration: usize,
    total: f64,
    penalty: f64,
    discrepancy: f64,
}

#[derive(Serialize)]
struct MetricRow {
    method: String,
    gamma: Option<f64>,
    sigma: Option<f64>,
    mu: Option<f64>,
    ssim: f64,
    psnr: Option<f64>,
}

impl MetricRow {
    fn new(method: &str, m: &MetricReport) -> Self {
        Self {
            method: method.into(),
            gamma: None,
            sigma: None,
            mu: None,
            ssim: m.ssim,
            psnr: m.psnr_db,
        }
    }
}

fn write_registration(
    out: &mut OutputDir,
    prefix: &str,
    result: &RegistrationResult,
    with_trajectory: bool,
) -> Result<(), CliError> {
    if with_trajectory {
        for (i, img) in result.trajectory.iter().enumerate() {
            out.image(&format!("{prefix}trajectory_{i:02}"), img)?;
        }
    }
    out.image(&format!("{prefix}deformed"), &result.deformed)?;
    out.csv(
        &format!("{prefix}objective.csv"),
        result
            .objective_history
            .iter()
            .enumerate()
            .map(|(iteration, v)| ObjectiveRow {
                iteration,
                total: v.total,
                penalty: v.penalty,
                discrepancy: v.discrepancy,
            }),
    )
}

fn numerical_failure(result: &RegistrationResult) -> Option<CliError> {
    (result.stop_reason == StopReason::NumericalFailure).then(|| {
        CliError::Numerical(format!(
            "stopped after {} iterations: {}",
            result.iterations_run,
            result.failure.as_deref().unwrap_or("unknown cause")
        ))
    })
}

pub fn register(config_path: &Path, global: &Global) -> Result<(), CliError> {
    let cfg = ExperimentConfig::load(config_path)?;
    let seed = cfg.noise.seed.unwrap_or(global.seed);
    let root = global
        .out
        .clone()
        .or_else(|| cfg.output.as_ref().and_then(|o| o.dir.clone()))
        .unwrap_or_else(|| global.out_dir());
    let mut out = OutputDir::create(&root, "register", config_hash(&cfg)?, seed, global.threads)?;

    let problem = cfg.problem()?.build(seed)?;
    let mut log = ProgressLog::open(global.log_csv.as_deref())?;
    let result = logged(&mut log, "register", |obs| {
        register_with(&problem.template, &problem.data, &cfg.registration, None, obs)
    })?;
    log.finish()?;

    out.image("template", &problem.template)?;
    out.image("target", &problem.target)?;
    out.sinogram("data", &problem.data)?;
    write_registration(&mut out, "", &result, true)?;

    let report = MetricReport::compare(&result.deformed, &problem.target)?;
    let mut rows = vec![MetricRow {
        gamma: Some(cfg.registration.gamma),
        sigma: Some(cfg.registration.sigma),
        ..MetricRow::new("registration", &report)
    }];
    if let Some(b) = &cfg.baselines {
        if let Some(s) = b.fbp_freq_scaling {
            let img = fbp(&problem.data, &problem.grid, s)?;
            rows.push(MetricRow::new("fbp", &MetricReport::compare(&img, &problem.target)?));
            out.image("fbp", &img)?;
        }
        if let Some(mu) = b.tv_mu {
            let img = tv_reconstruct(
                &problem.data,
                &problem.grid,
                &TVConfig::new(mu, b.tv_iters.unwrap_or(1000)),
            )?;
            rows.push(MetricRow {
                mu: Some(mu),
                ..MetricRow::new("tv", &MetricReport::compare(&img, &problem.target)?)
            });
            out.image("tv", &img)?;
        }
    }
    out.csv("metrics.csv", rows)?;
    out.finish()?;
    println!(
        "registration: {} after {} iterations, ssim {:.4}",
        result.stop_reason, result.iterations_run, report.ssim
    );
    match numerical_failure(&result) {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn square_grid(size: usize) -> Result<Grid2D, CliError> {
    Ok(Grid2D::square(size, DOMAIN_HALF_WIDTH)?)
}

#[derive(Serialize)]
struct Args<'a, T: Serialize> {
    command: &'a str,
    args: T,
}

fn open_out(global: &Global, command: &str, args: &impl Serialize) -> Result<OutputDir, CliError> {
    let hash = config_hash(&Args { command, args })?;
    OutputDir::create(&global.out_dir(), command, hash, global.seed, global.threads)
}

pub fn phantom(kind: &str, size: usize, global: &Global) -> Result<(), CliError> {
    let kind: PhantomKind = kind
        .parse()
        .map_err(|e: indireg::Error| CliError::Config(format!("--kind: {e}")))?;
    let grid = square_grid(size)?;
    let mut out = open_out(global, "phantom", &(kind.to_string(), size))?;
    out.image(&kind.to_string(), &make_phantom(kind, &grid))?;
    out.finish()?;
    Ok(())
}

pub fn project(input: &Path, n_angles: usize, n_detectors: usize, global: &Global) -> Result<(), CliError> {
    let img = load_igrd(input)?;
    let geom = SinogramGeometry::for_grid(img.grid(), n_angles, n_detectors)?;
    let mut out = open_out(global, "project", &(input, n_angles, n_detectors))?;
    out.sinogram("sinogram", &ray_transform(&img, &geom))?;
    out.finish()?;
    Ok(())
}

pub fn noise(input: &Path, snr_db: f64, global: &Global) -> Result<(), CliError> {
    if !snr_db.is_finite() {
        return Err(CliError::Config(format!("--snr must be finite, got {snr_db}")));
    }
    let clean = load_isin(input)?;
    let noisy = add_noise(&clean, &NoiseSpec::new(snr_db, global.seed))?;
    let mut out = open_out(global, "noise", &(input, snr_db))?;
    out.sinogram("noisy", &noisy)?;
    out.finish()?;
    println!("measured snr {:.4} dB", measure_snr(&clean, &noisy)?);
    Ok(())
}

pub fn fbp_cmd(input: &Path, size: usize, freq_scaling: f64, global: &Global) -> Result<(), CliError> {
    let data = load_isin(input)?;
    let img = fbp(&data, &square_grid(size)?, freq_scaling)?;
    let mut out = open_out(global, "fbp", &(input, size, freq_scaling))?;
    out.image("fbp", &img)?;
    out.finish()?;
    Ok(())
}

pub fn tv_cmd(input: &Path, size: usize, mu: f64, iters: usize, global: &Global) -> Result<(), CliError> {
    let data = load_isin(input)?;
    let img = tv_reconstruct(&data, &square_grid(size)?, &TVConfig::new(mu, iters))?;
    let mut out = open_out(global, "tv", &(input, size, mu, iters))?;
    out.image("tv", &img)?;
    out.finish()?;
    Ok(())
}

#[derive(Serialize)]
struct EvalRow {
    gamma: Option<f64>,
    sigma: Option<f64>,
    ssim: f64,
    psnr: Option<f64>,
}

pub fn evaluate(
    result: &Path,
    reference: &Path,
    gamma: Option<f64>,
    sigma: Option<f64>,
    global: &Global,
) -> Result<(), CliError> {
    let (a, b) = (load_igrd(result)?, load_igrd(reference)?);
    let m = MetricReport::compare(&a, &b)?;
    let mut out = open_out(global, "evaluate", &(result, reference, gamma, sigma))?;
    out.csv(
        "evaluate.csv",
        [EvalRow {
            gamma,
            sigma,
            ssim: m.ssim,
            psnr: m.psnr_db,
        }],
    )?;
    out.finish()?;
    let psnr = m.psnr_db.map_or_else(|| "inf".to_string(), |p| format!("{p:.4}"));
    println!("ssim {:.6} psnr {psnr}", m.ssim);
    Ok(())
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    case: &'a str,
    gamma: f64,
    sigma: f64,
    ssim: f64,
    psnr: Option<f64>,
    template_ssim: f64,
    stop_reason: String,
    iterations_run: usize,
    template_components: usize,
    result_components: usize,
    target_components: usize,
}

#[derive(Serialize)]
struct TableRow {
    sigma: f64,
    gamma: f64,
    ssim: f64,
    psnr: Option<f64>,
}

fn summary<'a>(case: &'a SuiteCase, o: &CaseOutcome) -> Result<SummaryRow<'a>, CliError> {
    let p = &o.problem;
    Ok(SummaryRow {
        case: &case.label,
        gamma: case.registration.gamma,
        sigma: case.registration.sigma,
        ssim: o.metrics.ssim,
        psnr: o.metrics.psnr_db,
        template_ssim: MetricReport::compare(&p.template, &p.target)?.ssim,
        stop_reason: o.registration.stop_reason.to_string(),
        iterations_run: o.registration.iterations_run,
        template_components: count_components(&p.template, COMPONENT_THRESHOLD),
        result_components: count_components(&o.registration.deformed, COMPONENT_THRESHOLD),
        target_components: count_components(&p.target, COMPONENT_THRESHOLD),
    })
}

pub fn suite(id: u32, full: bool, global: &Global) -> Result<(), CliError> {
    let cases = suite_cases(id, full)?;
    let root = global
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("out/suite{id}")));
    let mut out = OutputDir::create(
        &root,
        "suite",
        config_hash(&(id, full, &cases))?,
        global.seed,
        global.threads,
    )?;
    let mut log = ProgressLog::open(global.log_csv.as_deref())?;
    let mut summaries = Vec::new();
    let mut table = Vec::new();
    let mut failures = Vec::new();
    for case in &cases {
        let outcome = logged(&mut log, &case.label, |obs| run_case(case, global.seed, obs))?;
        let prefix = format!("{}/", case.label);
        out.image(&format!("{prefix}template"), &outcome.problem.template)?;
        out.image(&format!("{prefix}target"), &outcome.problem.target)?;
        out.sinogram(&format!("{prefix}data"), &outcome.problem.data)?;
        write_registration(&mut out, &prefix, &outcome.registration, id != 3)?;
        let mut rows = vec![MetricRow {
            gamma: Some(case.registration.gamma),
            sigma: Some(case.registration.sigma),
            ..MetricRow::new("registration", &outcome.metrics)
        }];
        if let Some((img, m)) = &outcome.fbp {
            out.image(&format!("{prefix}fbp"), img)?;
            rows.push(MetricRow::new("fbp", m));
        }
        for tv in &outcome.tv {
            out.image(&format!("{prefix}tv_mu{}", tv.mu), &tv.image)?;
            rows.push(MetricRow {
                mu: Some(tv.mu),
                ..MetricRow::new("tv", &tv.metrics)
            });
        }
        out.csv(&format!("{prefix}metrics.csv"), rows)?;
        summaries.push(summary(case, &outcome)?);
        table.push(TableRow {
            sigma: case.registration.sigma,
            gamma: case.registration.gamma,
            ssim: outcome.metrics.ssim,
            psnr: outcome.metrics.psnr_db,
        });
        if let Some(e) = numerical_failure(&outcome.registration) {
            failures.push(format!("{}: {e}", case.label));
        }
    }
    log.finish()?;
    out.csv("summary.csv", summaries)?;
    if id == 3 {
        out.csv("table.csv", table)?;
    }
    let manifest = out.finish()?;
    println!("suite {id}: {} cases, manifest {}", cases.len(), manifest.display());
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Numerical(failures.join("; ")))
    }
}
