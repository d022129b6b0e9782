use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use indireg::io::{load_igrd, load_isin};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_indireg"))
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn suite1_config() -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/suite1.toml");
    fs::read_to_string(path).unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            out.extend(files_under(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

#[test]
fn phantom_writes_image_preview_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["phantom", "--kind", "shepp-logan", "--size", "32"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let img = load_igrd(&tmp.path().join("shepp-logan.igrd")).unwrap();
    assert_eq!(img.grid().nx, 32);
    assert!(tmp.path().join("shepp-logan.pgm").exists());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "phantom");
    assert_eq!(manifest["files"].as_array().unwrap().len(), 2);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn invalid_arguments_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(
        run(&["phantom", "--kind", "teapot", "--size", "32"], tmp.path())
            .status
            .code(),
        Some(2)
    );
    let o = run(&["suite", "7"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("suite id"));
    assert_eq!(
        run(
            &["--threads", "0", "phantom", "--kind", "shepp-logan", "--size", "32"],
            tmp.path()
        )
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn io_failures_exit_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.isin");
    let o = run(
        &["fbp", "--input", missing.to_str().unwrap(), "--size", "32"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let junk = tmp.path().join("junk.igrd");
    fs::write(&junk, b"IGRX\x01garbage").unwrap();
    let o = run(
        &[
            "project",
            "--input",
            junk.to_str().unwrap(),
            "--angles",
            "4",
            "--detectors",
            "20",
        ],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let o = run(
        &["register", tmp.path().join("absent.toml").to_str().unwrap()],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn register_rejects_zero_sigma_naming_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &suite1_config().replace("sigma = 6.0", "sigma = 0.0"));
    let o = run(&["register", cfg.to_str().unwrap()], &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("registration.sigma"), "{}", stderr(&o));
    let cfg = write_config(tmp.path(), &suite1_config().replace("[noise]", "[noise]\nlevel = 3"));
    let o = run(&["register", cfg.to_str().unwrap()], &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("level"));
}

#[test]
fn suite1_register_writes_trajectory_and_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let text = suite1_config().replace("tv_iters = 1000", "tv_iters = 50");
    let cfg = write_config(tmp.path(), &text);
    let out = tmp.path().join("out");
    let log = tmp.path().join("log.csv");
    let o = bin()
        .args([
            "register",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--log-csv",
            log.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let trajectory: Vec<_> = files_under(&out)
        .into_iter()
        .filter(|p| {
            let name = p.file_name().unwrap().to_str().unwrap();
            name.starts_with("trajectory_") && name.ends_with(".igrd")
        })
        .collect();
    assert_eq!(trajectory.len(), 21);
    let first = load_igrd(&out.join("trajectory_00.igrd")).unwrap();
    assert_eq!(first, load_igrd(&out.join("template.igrd")).unwrap());

    let objective = fs::read_to_string(out.join("objective.csv")).unwrap();
    assert!(objective.starts_with("iteration,total,penalty,discrepancy\n"));
    assert_eq!(objective.lines().count(), 1 + 201);
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let methods: Vec<_> = metrics
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().to_string())
        .collect();
    assert_eq!(methods, ["registration", "fbp", "tv"]);
    let log = fs::read_to_string(log).unwrap();
    assert!(log.starts_with("case,iteration,total,penalty,discrepancy,grad_norm\n"));
    assert_eq!(log.lines().count(), 1 + 201);
    assert!(String::from_utf8_lossy(&o.stderr).contains("iter   200"));
}

#[test]
fn register_is_bitwise_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let text = suite1_config()
        .replace("max_iters = 200", "max_iters = 5")
        .replace("tv_iters = 1000", "tv_iters = 20");
    let cfg = write_config(tmp.path(), &text);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        assert!(run(&["register", cfg.to_str().unwrap()], dir).status.success());
    }
    let (fa, fb) = (files_under(&a), files_under(&b));
    assert_eq!(fa.len(), fb.len());
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(x.strip_prefix(&a).unwrap(), y.strip_prefix(&b).unwrap());
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap(), "{}", x.display());
    }
}

#[test]
fn pipeline_phantom_project_noise_fbp_tv_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let p = |s: &str| d.join(s).to_str().unwrap().to_string();
    assert!(run(
        &["phantom", "--kind", "single-star-target", "--size", "64"],
        &d.join("ph")
    )
    .status
    .success());
    assert!(run(
        &[
            "project",
            "--input",
            &p("ph/single-star-target.igrd"),
            "--angles",
            "10",
            "--detectors",
            "92"
        ],
        &d.join("pr")
    )
    .status
    .success());
    let o = bin()
        .args([
            "noise",
            "--input",
            &p("pr/sinogram.isin"),
            "--snr",
            "4.87",
            "--seed",
            "3",
            "--out",
            &p("no"),
        ])
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("measured snr 4.87"));
    assert_eq!(load_isin(&d.join("no/noisy.isin")).unwrap().geometry().n_detectors, 92);

    let o = run(
        &[
            "fbp",
            "--input",
            &p("no/noisy.isin"),
            "--size",
            "64",
            "--freq-scaling",
            "0.4",
        ],
        &d.join("fbp"),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let igrd: Vec<_> = files_under(&d.join("fbp"))
        .into_iter()
        .filter(|f| f.extension().unwrap() == "igrd")
        .collect();
    assert_eq!(igrd.len(), 1);

    let o = run(
        &[
            "tv",
            "--input",
            &p("no/noisy.isin"),
            "--size",
            "64",
            "--mu",
            "3.0",
            "--iters",
            "1000",
        ],
        &d.join("tv"),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let igrd: Vec<_> = files_under(&d.join("tv"))
        .into_iter()
        .filter(|f| f.extension().unwrap() == "igrd")
        .collect();
    assert_eq!(igrd.len(), 1);

    let o = run(
        &[
            "evaluate",
            "--result",
            &p("tv/tv.igrd"),
            "--reference",
            &p("ph/single-star-target.igrd"),
            "--gamma",
            "0.1",
            "--sigma",
            "2",
        ],
        &d.join("ev"),
    );
    assert!(o.status.success());
    let table = fs::read_to_string(d.join("ev/evaluate.csv")).unwrap();
    let lines: Vec<_> = table.lines().collect();
    assert_eq!(lines[0], "gamma,sigma,ssim,psnr");
    let fields: Vec<f64> = lines[1].split(',').map(|f| f.parse().unwrap()).collect();
    assert_eq!(&fields[..2], &[0.1, 2.0]);
    assert!(fields[2] > 0.0 && fields[2] < 1.0 && fields[3] > 0.0);
}
