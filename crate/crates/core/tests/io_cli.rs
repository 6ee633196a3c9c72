use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use image::{GrayImage, ImageBuffer, Luma};
use oitk::io::{load_density, load_field, load_image, load_warp, save_field, save_warp};
use oitk::{Grid, ScalarField, VectorField, Warp};
use proptest::prelude::*;
use serde_json::Value;
use tempfile::TempDir;

fn oitk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oitk"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) -> Value {
    let out = oitk(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("report on stdout")
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

fn write_gray(dir: &Path, name: &str, w: u32, h: u32, f: impl Fn(u32, u32) -> u8) -> PathBuf {
    let p = dir.join(name);
    GrayImage::from_fn(w, h, |c, r| Luma([f(c, r)])).save(&p).unwrap();
    p
}

#[test]
fn white_image_is_uniform() {
    let dir = TempDir::new().unwrap();
    let p = write_gray(dir.path(), "white.png", 16, 8, |_, _| 255);
    let mu = load_density(&p, 0.0, true).unwrap();
    assert_eq!((mu.grid().nx(), mu.grid().ny()), (16, 8));
    assert!(mu.intensity().values().iter().all(|&v| (v - 1.0).abs() < 1e-14));
}

#[test]
fn top_image_row_is_the_last_grid_row() {
    let dir = TempDir::new().unwrap();
    let p = write_gray(dir.path(), "top.png", 8, 8, |_, r| if r == 0 { 255 } else { 0 });
    let img = load_image(&p, 1.0, 1.0).unwrap();
    for i in 0..8 {
        assert_eq!(img.at(i, 7), 1.0);
        assert_eq!(img.at(i, 0), 0.0);
    }
}

#[test]
fn sixteen_bit_pgm_keeps_its_depth() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("deep.pgm");
    let img: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_fn(4, 4, |c, _| Luma([1000 * c as u16 + 1]));
    img.save(&p).unwrap();
    let f = load_image(&p, 1.0, 1.0).unwrap();
    assert_eq!(f.at(2, 0), 2001.0 / 65535.0);
}

#[test]
fn warp_round_trip_is_bit_exact() {
    let dir = TempDir::new().unwrap();
    let g = Grid::new(16, 8, 3.0, 2.0).unwrap();
    let u = VectorField::from_fn(g, |x, y| (0.05 * (2.0 * y).sin(), 0.03 * x.cos()));
    let v = VectorField::from_fn(g, |x, y| (-0.05 * (2.0 * y).sin() + 1e-3 * x, -0.03 * x.cos()));
    let w = Warp::from_displacements(u, v).unwrap();
    let p = dir.path().join("w.f64");
    save_warp(&p, &w).unwrap();
    let back = load_warp(&p).unwrap();
    assert_eq!(back.forward_displacement(), w.forward_displacement());
    assert_eq!(back.inverse_displacement(), w.inverse_displacement());
    assert_eq!(back.inverse_jacobian(), w.inverse_jacobian());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn raw_fields_round_trip_bit_exactly(values in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 64)) {
        let dir = TempDir::new().unwrap();
        let g = Grid::new(8, 8, 1.5, 2.5).unwrap();
        let f = ScalarField::from_values(g, values).unwrap();
        let p = dir.path().join("f.f64");
        save_field(&p, &f).unwrap();
        let back = load_field(&p).unwrap();
        prop_assert_eq!(back.grid(), f.grid());
        let same = back.values().iter().zip(f.values()).all(|(a, b)| a.to_bits() == b.to_bits());
        prop_assert!(same);
    }
}

#[test]
fn letters_with_background_are_strict() {
    let dir = TempDir::new().unwrap();
    let report = run_ok(&[
        "distances",
        "--source",
        "builtin:J",
        "--target",
        "builtin:V",
        "--nx",
        "64",
    ]);
    assert!(report["result"]["kl"].is_number(), "{report}");
    // without a floor the letter has empty pixels, which matching refuses
    let out = oitk(&[
        "match-exact",
        "--target",
        "builtin:J",
        "--floor",
        "0",
        "--nx",
        "64",
        "-o",
        &path(dir.path(), "x"),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn uniform_target_writes_the_identity() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("id");
    let report = run_ok(&[
        "match-exact",
        "--target",
        "builtin:uniform",
        "--nx",
        "32",
        "-o",
        out.to_str().unwrap(),
    ]);
    assert_eq!(report["result"]["quality"]["min_jacobian"], 1.0);
    let w = load_warp(&out.join("warp.f64")).unwrap();
    assert_eq!(w.forward_displacement().max_norm(), 0.0);
    assert_eq!(w.inverse_displacement().max_norm(), 0.0);
    let jac = image::open(out.join("jacobian.png")).unwrap().into_rgb8();
    assert!(jac.pixels().all(|p| p.0 == [255, 255, 255]));
}

#[test]
fn energy_csv_has_one_row_per_iteration() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("reg");
    let report = run_ok(&[
        "register",
        "--source",
        "builtin:uniform",
        "--target",
        "builtin:cosine",
        "--nx",
        "32",
        "--max-iter",
        "7",
        "-o",
        out.to_str().unwrap(),
    ]);
    let iterations = report["result"]["iterations"].as_u64().unwrap();
    assert_eq!(iterations, 7);
    let csv = fs::read_to_string(out.join("energy.csv")).unwrap();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines[0], "iter,E,sigma_term,mismatch");
    assert_eq!(lines.len() as u64, iterations + 1);
}

#[test]
fn exit_codes_follow_the_error_class() {
    let dir = TempDir::new().unwrap();
    let small = write_gray(dir.path(), "a.png", 16, 16, |_, _| 200);
    let large = write_gray(dir.path(), "b.png", 32, 32, |_, _| 200);
    let holes = write_gray(dir.path(), "c.png", 16, 16, |c, _| if c < 8 { 0 } else { 255 });
    let (small, large, holes) = (
        small.to_str().unwrap(),
        large.to_str().unwrap(),
        holes.to_str().unwrap(),
    );
    let code = |args: &[&str]| oitk(args).status.code();

    assert_eq!(code(&["distances", "--source", small, "--target", large]), Some(3));
    assert_eq!(code(&["match-exact", "--target", small, "--nx", "32"]), Some(3));
    assert_eq!(code(&["match-exact", "--target", holes]), Some(3));
    assert_eq!(
        code(&["match-exact", "--target", &path(dir.path(), "missing.png")]),
        Some(5)
    );
    assert_eq!(code(&["match-exact"]), Some(2));
    assert_eq!(code(&["register", "--target", small]), Some(2));
    assert_eq!(code(&["match-exact", "--target", small, "--eps", "0.3"]), Some(2));
    assert_eq!(code(&["frobnicate"]), Some(2));

    // a plain file where the output directory should go
    let blocker = dir.path().join("blocker");
    fs::write(&blocker, "").unwrap();
    let out = blocker.join("out");
    assert_eq!(
        code(&["match-exact", "--target", small, "-o", out.to_str().unwrap()]),
        Some(5)
    );
}

#[test]
fn cached_warp_reproduces_the_samples() {
    let dir = TempDir::new().unwrap();
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    let report = run_ok(&[
        "sample",
        "--target",
        "builtin:cosine",
        "--nx",
        "64",
        "-n",
        "5000",
        "--seed",
        "9",
        "-o",
        first.to_str().unwrap(),
    ]);
    assert_eq!(report["result"]["warp_reused"], false);
    let cached = first.join("warp.f64");
    let report = run_ok(&[
        "sample",
        "--warp",
        cached.to_str().unwrap(),
        "-n",
        "5000",
        "--seed",
        "9",
        "-o",
        second.to_str().unwrap(),
    ]);
    assert_eq!(report["result"]["warp_reused"], true);
    assert_eq!(
        fs::read(first.join("samples.csv")).unwrap(),
        fs::read(second.join("samples.csv")).unwrap()
    );
}

#[test]
fn single_thread_runs_match() {
    let dir = TempDir::new().unwrap();
    let run = |name: &str, threads: &str| {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_oitk"))
            .env("OITK_THREADS", threads)
            .args([
                "match-exact",
                "--target",
                "builtin:cosine",
                "--nx",
                "64",
                "-o",
                out.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert!(status.status.success());
        fs::read(out.join("warp.f64")).unwrap()
    };
    assert_eq!(run("one", "1"), run("two", "2"));
    assert_eq!(oitk_env_threads("0"), Some(2));
}

fn oitk_env_threads(threads: &str) -> Option<i32> {
    Command::new(env!("CARGO_BIN_EXE_oitk"))
        .env("OITK_THREADS", threads)
        .args([
            "distances",
            "--source",
            "builtin:uniform",
            "--target",
            "builtin:cosine",
            "--nx",
            "16",
        ])
        .output()
        .unwrap()
        .status
        .code()
}

#[test]
fn reports_match_the_schema() {
    let schema: Value = serde_json::from_str(
        &fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../schemas/report.schema.json")).unwrap(),
    )
    .unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let dir = TempDir::new().unwrap();
    let jobs: [&[&str]; 8] = [
        &["match-exact", "--target", "builtin:cosine"],
        &[
            "match-exact",
            "--source",
            "builtin:cosine",
            "--target",
            "builtin:uniform",
        ],
        &["match-inexact", "--target", "builtin:cosine", "--sigma", "2"],
        &[
            "register",
            "--source",
            "builtin:uniform",
            "--target",
            "builtin:cosine",
            "--max-iter",
            "3",
        ],
        &[
            "morph",
            "--source",
            "builtin:uniform",
            "--target",
            "builtin:cosine",
            "--checkpoint",
            "5",
        ],
        &["sample", "--target", "builtin:cosine", "-n", "2000"],
        &["distances", "--source", "builtin:uniform", "--target", "builtin:cosine"],
        &["lift", "--target", "builtin:cosine", "--t-end", "0.5"],
    ];
    for (k, job) in jobs.iter().enumerate() {
        let out = path(dir.path(), &format!("job{k}"));
        let mut args = job.to_vec();
        args.extend(["--nx", "32", "-o", &out]);
        let stdout = run_ok(&args);
        let saved: Value =
            serde_json::from_str(&fs::read_to_string(Path::new(&out).join("report.json")).unwrap()).unwrap();
        let errors: Vec<String> = validator.iter_errors(&saved).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{job:?}: {errors:?}");
        assert_eq!(saved["result"], stdout["result"]);
        for name in saved["outputs"].as_array().unwrap() {
            assert!(Path::new(&out).join(name.as_str().unwrap()).exists(), "{name}");
        }
    }
}
