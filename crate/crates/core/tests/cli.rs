use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sarid::cli::dataset::DatasetReader;
use sarid::cli::report::Report;
use sarid::gpca::CandidatePool;
use sarid::pipeline::{run, NoiseSpec};
use sarid::{
    simulate, Error, ModelOrders, NoiseModel, NoiseSource, ScaleFamily, ScanOptions, SimConfig,
    Submodel, SubmodelSet,
};

const TRUE_C: [f64; 6] = [1.0, 0.2, 0.0, -0.15, -0.8, -1.0];

fn sarid(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sarid"));
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("SARID_THREADS", t),
        None => cmd.env_remove("SARID_THREADS"),
    };
    cmd.output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = sarid(args, None);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate_file(dir: &Path, name: &str, s2: &str, n: &str, seed: &str) -> PathBuf {
    let path = dir.join(name);
    ok(&[
        "simulate",
        "--s2",
        s2,
        "--n",
        n,
        "--seed",
        seed,
        "--out",
        path_str(&path),
    ]);
    path
}

fn read_report(path: &Path) -> Report {
    Report::read(std::fs::File::open(path).unwrap()).unwrap()
}

fn without_timing(r: &Report) -> Vec<(String, String, f64)> {
    r.rows
        .iter()
        .filter(|row| row.section != "timing")
        .map(|row| (row.section.clone(), row.label.clone(), row.value))
        .collect()
}

fn coefficients(r: &Report) -> Vec<f64> {
    r.section("coefficient").map(|row| row.value).collect()
}

fn table_system() -> SubmodelSet {
    SubmodelSet::new(
        vec![
            Submodel::new(vec![0.3], vec![1.0]),
            Submodel::new(vec![-0.5], vec![-1.0]),
        ],
        ModelOrders::new(2, 1, 1).unwrap(),
    )
    .unwrap()
}

#[test]
fn simulate_writes_initial_rows_and_samples() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    let out = ok(&[
        "simulate",
        "--a1",
        "0.3",
        "--b1",
        "1",
        "--a2",
        "-0.5",
        "--b2",
        "-1",
        "--n",
        "10",
        "--seed",
        "3",
        "--out",
        path_str(&path),
    ]);
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("gamma "));
    let rows: Vec<_> = DatasetReader::open(&path)
        .unwrap()
        .collect::<Result<_, _>>()
        .unwrap();
    assert_eq!(rows.len(), 11);
    assert_eq!(rows[0].k, -1);
    assert_eq!(rows[0].mode, None);
    assert!(rows[1..].iter().all(|r| r.mode.is_some()));
    // No noise: x and y columns agree.
    assert!(rows.iter().all(|r| r.x == Some(r.y)));
}

#[test]
fn file_round_trip_matches_in_process_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate_file(dir.path(), "d.csv", "0.5", "150000", "21");
    let cfg = SimConfig::new(
        table_system(),
        NoiseSource::gaussian_variance(0.5),
        150_000,
        21,
    );
    let ds = simulate(&cfg).unwrap();
    let o = ModelOrders::new(2, 1, 1).unwrap();

    let spec = NoiseSpec::Known(NoiseModel::gaussian_variance(0.5));
    let local = run(ds.io(), o, &spec, 1, CandidatePool::DEFAULT_CAPACITY).unwrap();
    let expected =
        Report::identification(o, &local.identification, &local.factorization, Some(0.5));
    for threads in ["1", "3"] {
        let report = dir.path().join(format!("r{threads}.csv"));
        let out = sarid(
            &[
                "identify",
                "--data",
                path_str(&data),
                "--orders",
                "2,1,1",
                "--s2",
                "0.5",
                "--out",
                path_str(&report),
            ],
            Some(threads),
        );
        assert!(out.status.success());
        assert_eq!(
            without_timing(&read_report(&report)),
            without_timing(&expected)
        );
    }

    let spec = NoiseSpec::Scan {
        family: ScaleFamily::Gaussian,
        options: ScanOptions {
            grid_points: 32,
            ..ScanOptions::new(1.1)
        },
    };
    let local = run(ds.io(), o, &spec, 2, CandidatePool::DEFAULT_CAPACITY).unwrap();
    let expected = Report::identification(o, &local.identification, &local.factorization, None);
    let report = dir.path().join("scan.csv");
    let curve = dir.path().join("curve.csv");
    ok(&[
        "scan",
        "--data",
        path_str(&data),
        "--orders",
        "2,1,1",
        "--smax",
        "1.1",
        "--grid",
        "32",
        "--out",
        path_str(&report),
        "--curve",
        path_str(&curve),
    ]);
    let got = read_report(&report);
    assert_eq!(without_timing(&got), without_timing(&expected));
    let curve_rows = std::fs::read_to_string(&curve).unwrap().lines().count() - 1;
    assert_eq!(curve_rows, got.section("curve").count());
    assert!(curve_rows >= 32);
}

#[test]
fn noiseless_identification_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate_file(dir.path(), "d.csv", "0", "5000", "2");
    let report = dir.path().join("r.csv");
    ok(&[
        "identify",
        "--data",
        path_str(&data),
        "--orders",
        "2,1,1",
        "--s2",
        "0",
        "--out",
        path_str(&report),
    ]);
    let r = read_report(&report);
    for (a, b) in coefficients(&r).iter().zip(TRUE_C) {
        assert!((a - b).abs() < 1e-6);
    }
    let labels: Vec<String> = r
        .section("coefficient")
        .map(|row| row.label.clone())
        .collect();
    assert_eq!(labels[1], "x0^1*x1^1");

    let out = ok(&[
        "assign",
        "--data",
        path_str(&data),
        "--model",
        path_str(&report),
    ]);
    assert_eq!(String::from_utf8_lossy(&out.stderr).trim(), "accuracy 1");
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("k,mode,residual,ambiguous"));
    assert_eq!(text.lines().count(), 5001);

    // Without ground truth no accuracy is printed.
    let bare = dir.path().join("bare.csv");
    let stripped: String = std::fs::read_to_string(&data)
        .unwrap()
        .lines()
        .map(|l| l.splitn(4, ',').take(3).collect::<Vec<_>>().join(",") + "\n")
        .collect();
    std::fs::write(&bare, stripped).unwrap();
    let out = ok(&[
        "assign",
        "--data",
        path_str(&bare),
        "--model",
        path_str(&report),
    ]);
    assert!(out.stderr.is_empty());
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 5001);
}

#[test]
fn table_system_at_full_size() {
    let dir = tempfile::tempdir().unwrap();
    let low = simulate_file(dir.path(), "low.csv", "0.1", "1000000", "7");
    let report = dir.path().join("low_r.csv");
    ok(&[
        "identify",
        "--data",
        path_str(&low),
        "--orders",
        "2,1,1",
        "--s2",
        "0.1",
        "--out",
        path_str(&report),
    ]);
    for (a, b) in coefficients(&read_report(&report)).iter().zip(TRUE_C) {
        assert!((a - b).abs() <= 0.02, "{a} vs {b}");
    }
    let out = ok(&[
        "assign",
        "--data",
        path_str(&low),
        "--model",
        path_str(&report),
        "--out",
        path_str(&dir.path().join("a.csv")),
    ]);
    let accuracy: f64 = String::from_utf8_lossy(&out.stderr)
        .trim()
        .strip_prefix("accuracy ")
        .unwrap()
        .parse()
        .unwrap();
    assert!(accuracy >= 0.9, "{accuracy}");

    let high = simulate_file(dir.path(), "high.csv", "2", "1000000", "7");
    let report = dir.path().join("high_r.csv");
    ok(&[
        "identify",
        "--data",
        path_str(&high),
        "--orders",
        "2,1,1",
        "--scan",
        "--smax",
        "3",
        "--grid",
        "64",
        "--out",
        path_str(&report),
    ]);
    let s2 = read_report(&report).value("summary", "s2_star").unwrap();
    assert!((s2 - 2.0).abs() <= 0.04, "{s2}");
}

#[test]
fn sweep_rows() {
    let out = ok(&[
        "sweep", "--s2", "0.5", "--n", "2000", "--seeds", "1", "--seed", "4",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines, vec!["s2,n,seed,error,runtime_s", lines[1]]);
    assert!(lines[1].starts_with("0.5,2000,4,"));

    let out = ok(&["sweep", "--s2", "0", "--n", "1000,10000", "--seeds", "2"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let errors: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(3).unwrap().parse().unwrap())
        .collect();
    assert_eq!(errors.len(), 4);
    assert!(errors.iter().all(|e| *e < 1e-9));
}

#[test]
fn failures_exit_with_distinct_codes_and_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.csv");
    let r = path_str(&report);

    let missing = sarid(
        &[
            "identify",
            "--data",
            "/nonexistent.csv",
            "--orders",
            "2,1,1",
            "--s2",
            "1",
            "--out",
            r,
        ],
        None,
    );
    assert_eq!(
        missing.status.code(),
        Some(Error::Io(String::new()).exit_code())
    );

    let data = simulate_file(dir.path(), "d.csv", "0", "3", "1");
    let short = sarid(
        &[
            "identify",
            "--data",
            path_str(&data),
            "--orders",
            "2,1,1",
            "--s2",
            "0",
            "--out",
            r,
        ],
        None,
    );
    assert_eq!(
        short.status.code(),
        Some(Error::SeriesTooShort(String::new()).exit_code())
    );

    let no_noise = sarid(
        &[
            "identify",
            "--data",
            path_str(&data),
            "--orders",
            "2,1,1",
            "--out",
            r,
        ],
        None,
    );
    assert_eq!(
        no_noise.status.code(),
        Some(Error::InvalidConfig(String::new()).exit_code())
    );

    let garbage = dir.path().join("g.csv");
    std::fs::write(&garbage, "k,u,y\n0,1,2\n5,1,2\n").unwrap();
    let bad = sarid(
        &[
            "identify",
            "--data",
            path_str(&garbage),
            "--orders",
            "1,1,1",
            "--s2",
            "0",
            "--out",
            r,
        ],
        None,
    );
    assert_eq!(
        bad.status.code(),
        Some(Error::Format(String::new()).exit_code())
    );

    let bad_orders = sarid(
        &[
            "identify",
            "--data",
            path_str(&data),
            "--orders",
            "0,1,1",
            "--s2",
            "0",
        ],
        None,
    );
    assert_eq!(bad_orders.status.code(), Some(2));

    let unstable = sarid(&["simulate", "--submodel", "1.5;1", "--n", "5000"], None);
    assert_eq!(
        unstable.status.code(),
        Some(Error::TrajectoryUnbounded { k: 0, value: 0.0 }.exit_code())
    );
    for out in [&missing, &short, &no_noise, &bad] {
        assert_eq!(String::from_utf8_lossy(&out.stderr).lines().count(), 1);
    }
    assert!(!report.exists());
}
