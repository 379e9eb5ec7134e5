use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_splitree"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("splitree-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("model.conf");
    std::fs::write(&p, text).unwrap();
    p
}

const YULE: &str = "birth_rate = 1\nlifetime.kind = immortal\nmutation_rate = 2\nhorizons = 0.693147180559945\nreplicates = 2000\nseed = 7\n";

fn run(args: &[&str], config: &PathBuf) -> Output {
    bin().args(args).arg("--config").arg(config).output().unwrap()
}

#[test]
fn constants_for_subcritical_yule() {
    let dir = scratch("constants");
    let cfg = write_config(&dir, YULE);
    let out = run(&["constants"], &cfg);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["regime"], "subcritical");
    assert_eq!(v["phi_theta"].as_f64().unwrap(), 0.5);
    assert!((v["A_theta"].as_f64().unwrap() - 1.92181).abs() < 1e-5);
}

#[test]
fn verify_spectrum_passes_and_is_reproducible() {
    let dir = scratch("verify");
    let cfg = write_config(&dir, YULE);
    let mut reports = Vec::new();
    for workers in ["1", "3"] {
        let path = dir.join(format!("report-{workers}.json"));
        let out = bin()
            .args(["verify", "--suite", "spectrum", "--workers", workers, "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&path)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        reports.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    let v: serde_json::Value = serde_json::from_slice(&reports[0]).unwrap();
    let r = &v[0];
    assert_eq!(r["suite"], "spectrum");
    assert_eq!(r["seed"], 7);
    for key in ["name", "empirical", "target", "se", "z_or_p", "pass"] {
        assert!(r["checks"][0].get(key).is_some(), "missing {key}");
    }
}

#[test]
fn verify_reports_failures_with_status_one() {
    // an absurdly small z_max forces failing checks
    let dir = scratch("fail");
    let cfg = write_config(&dir, &format!("{YULE}z_max = 1e-9\n"));
    let out = run(&["verify", "--suite", "spectrum"], &cfg);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("FAIL"));
}

#[test]
fn usage_and_config_errors_exit_two() {
    let out = bin().arg("--no-such-flag").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    let dir = scratch("bad");
    let cfg = write_config(&dir, "birth_rate = 1\nlifetime.kind = immortal\nmutationrate = 2\n");
    let out = run(&["constants"], &cfg);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mutationrate"));
    let out = run(&["verify", "--suite", "nonsense"], &write_config(&dir, YULE));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn csv_outputs_have_single_header() {
    let dir = scratch("csv");
    let cfg = write_config(&dir, YULE);
    let out = run(&["scalefn", "--format", "csv"], &cfg);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("t,W,W_theta\n"));
    assert!(!text.contains('\r'));
    let out = run(&["expect", "--format", "csv"], &cfg);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("t,")).count(), 1);
    let k1 = text.lines().find(|l| l.contains(",spectrum,1,")).unwrap();
    let a1: f64 = k1.split(',').nth(5).unwrap().parse().unwrap();
    assert!((a1 - 1.0448).abs() < 1e-3);
}

#[test]
fn simulate_dump_is_byte_stable() {
    let dir = scratch("simulate");
    let cfg = write_config(&dir, YULE);
    let a = dir.join("a.csv");
    let b = dir.join("b.csv");
    for p in [&a, &b] {
        let out = bin().args(["simulate", "--format", "csv", "--config"]).arg(&cfg).arg("--out").arg(p).output().unwrap();
        assert!(out.status.success());
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with('#'));
    assert!(lines.next().unwrap().starts_with("replicate,N,num_families,X1,X2,A1,A2"));
    assert_eq!(lines.count(), 2000);
}
