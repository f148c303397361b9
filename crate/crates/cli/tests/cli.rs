use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn stochan(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stochan"))
        .args(args)
        .current_dir(cwd)
        .env_remove("STOCHAN_SEED")
        .output()
        .expect("spawn stochan")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &[&str] = &["--Kx", "2", "--My", "3", "--T", "0.2", "--ny", "20"];

#[test]
fn ramp_flux_reaches_one() {
    let tmp = tempfile::tempdir().unwrap();
    let o = stochan(&["flux", "--kind", "ramp", "--slope", "1", "--T", "1", "--dt", "1e-3", "--out", "f"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(tmp.path().join("f/flux.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,F,dFdt"));
    let last: Vec<f64> = csv.lines().last().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(last[0], 1.0);
    assert!((last[1] - 1.0).abs() < 1e-12);
    let manifest = fs::read_to_string(tmp.path().join("f/manifest.json")).unwrap();
    assert!(manifest.contains("flux.csv") && manifest.contains("timings.json"));
}

#[test]
fn flux_reruns_are_identical() {
    let tmp = tempfile::tempdir().unwrap();
    for kind in ["sinusoid", "smoothed_brownian"] {
        for out in ["a", "b"] {
            let o = stochan(&["flux", "--kind", kind, "--seed", "11", "--out", out], tmp.path());
            assert_eq!(code(&o), 0, "{}", stderr(&o));
        }
        for file in ["flux.csv", "manifest.json"] {
            let a = fs::read(tmp.path().join("a").join(file)).unwrap();
            let b = fs::read(tmp.path().join("b").join(file)).unwrap();
            assert_eq!(a, b, "{kind}: {file} differs");
        }
    }
}

#[test]
fn unresolvable_smoothing_width_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = stochan(&["flux", "--kind", "smoothed_brownian", "--width", "1e-4", "--dt", "1e-3"], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("not resolvable"), "{}", stderr(&o));
}

#[test]
fn verify_on_empty_directory_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    fs::create_dir(tmp.path().join("empty")).unwrap();
    for check in ["all", "apriori", "monotonicity"] {
        let o = stochan(&["verify", check, "--dir", "empty"], tmp.path());
        assert_eq!(code(&o), 2, "{check}: {}", stderr(&o));
    }
    let o = stochan(&["verify", "apriori"], tmp.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn monotonicity_passes_at_unit_ball() {
    let tmp = tempfile::tempdir().unwrap();
    let o = stochan(&["verify", "monotonicity", "--samples", "1000", "--ball", "1.0", "--out", "m"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp.path().join("m/verify_monotonicity.json")).unwrap()).unwrap();
    assert_eq!(report["check"], "monotonicity");
    assert_eq!(report["pass"], true);
    assert_eq!(report["n_samples"], 1000);
    for key in ["statistic", "tolerance", "seed"] {
        assert!(report.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn simulate_then_apriori() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["simulate", "--paths", "16", "--seed", "5", "--out", "sim", "--binary"];
    args.extend_from_slice(SMALL);
    let o = stochan(&args, tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["config.json", "ledgers.json", "trajectories.csv", "states.bin", "manifest.json", "timings.json"] {
        assert!(tmp.path().join("sim").join(f).exists(), "missing {f}");
    }
    let o = stochan(&["verify", "apriori", "--dir", "sim", "--delta", "1.0"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("\"pass\":true"), "{stdout}");
    let o = stochan(&["verify", "apriori", "--dir", "sim", "--delta", "2.0"], tmp.path());
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    for check in ["gronwall", "monotonicity"] {
        let o = stochan(&["verify", check, "--dir", "sim", "--samples", "50"], tmp.path());
        assert_eq!(code(&o), 0, "{check}: {}", stderr(&o));
    }
}

#[test]
fn outputs_do_not_depend_on_threads_and_replay_is_exact() {
    let tmp = tempfile::tempdir().unwrap();
    for (threads, out) in [("1", "t1"), ("3", "t3")] {
        let mut args = vec!["simulate", "--paths", "6", "--seed", "9", "--threads", threads, "--out", out];
        args.extend_from_slice(SMALL);
        let o = stochan(&args, tmp.path());
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let o = stochan(&["replay", "t1/manifest.json", "--out", "r"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for file in ["trajectories.csv", "ledgers.json", "config.json", "manifest.json"] {
        let a = fs::read(tmp.path().join("t1").join(file)).unwrap();
        assert_eq!(a, fs::read(tmp.path().join("t3").join(file)).unwrap(), "threads: {file}");
        assert_eq!(a, fs::read(tmp.path().join("r").join(file)).unwrap(), "replay: {file}");
    }
}

#[test]
fn config_file_and_seed_environment() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("run.cfg"), "# flux run\nkind = sinusoid\nT = 0.5\ndt = 1e-3\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_stochan"))
        .args(["flux", "--config", "run.cfg", "--out", "c"])
        .current_dir(tmp.path())
        .env("STOCHAN_SEED", "42")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp.path().join("c/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 42);
    assert_eq!(m["config"]["kind"], "sinusoid");
    assert_eq!(m["config"]["T"], 0.5);

    fs::write(tmp.path().join("bad.cfg"), "viscosity = 1\n").unwrap();
    let o = stochan(&["flux", "--config", "bad.cfg"], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("unknown configuration key"));
}

#[test]
fn numerical_blow_up_exits_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let o = stochan(
        &[
            "simulate", "--Kx", "1", "--My", "3", "--nu", "1e-3", "--sigma0", "1e12", "--dt", "0.1", "--T", "50",
            "--paths", "1", "--ny", "20",
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn two_outlet_field_exports() {
    let tmp = tempfile::tempdir().unwrap();
    let o = stochan(&["basicfield", "--geometry", "two_outlet", "--L", "4", "--ny", "40", "--out", "bf"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let cfg = fs::read_to_string(tmp.path().join("bf/geometry.cfg")).unwrap();
    assert!(cfg.contains("geometry=two_outlet"));
    let header = |f: &str| fs::read_to_string(tmp.path().join("bf").join(f)).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header("velocity.csv"), "x,y,t,w_x,w_y");
    assert_eq!(header("fw.csv"), "x,y,t,fw_x,fw_y");
    assert_eq!(header("volterra.csv"), "t,dFdt,f,residual");
}
