use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn csos(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_csos")).args(args).current_dir(dir).env_remove("CSOS_CACHE_DIR").output().unwrap()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

// line parameters ξ_l = 1/2 + δ_l/η̃ at τ = 0.5i, L = 3, r = 1
const INHOMOGENEOUS: &str = "xi = 0.5 0.5 0.5 0.5 0.5 0.5\nxi_im = 0.075 -0.06 0.045 0 0 0\n";

#[test]
fn malformed_configs_are_usage_errors() {
    let d = tempfile::tempdir().unwrap();
    for bad in ["L 3\n", "colour = red\n", "tau_im = x\n", "r = 2\nL = 4\n"] {
        let cfg = write(d.path(), "bad.cfg", bad);
        let o = csos(&["lhp", "thermo", "--config", &cfg], d.path());
        assert_eq!(o.status.code(), Some(2), "{bad}");
    }
    let missing = csos(&["lhp", "thermo", "--config", "nowhere.cfg"], d.path());
    assert_eq!(missing.status.code(), Some(2));
    let path = write(d.path(), "p.json", "{\"vertices\": [[2, 1]], \"heights\": [0]}");
    assert_eq!(csos(&["lhp", "thermo", "--path", &path], d.path()).status.code(), Some(2));
    assert_eq!(csos(&["identities", "nonsense"], d.path()).status.code(), Some(2));
}

#[test]
fn identity_suites_pass() {
    let d = tempfile::tempdir().unwrap();
    let o = csos(&["identities", "elliptic"], d.path());
    assert_eq!(o.status.code(), Some(0));
    let r = json(&o);
    assert!(r["max_residual"].as_f64().unwrap() < 1e-11);
    for suite in ["lattice", "appendixB", "appendixC", "appendixD"] {
        let o = csos(&["identities", suite, "--seed", "7"], d.path());
        assert_eq!(o.status.code(), Some(0), "{suite}: {}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(json(&o)["pass"], Value::Bool(true));
    }
}

#[test]
fn one_point_thermo_table_is_normalized() {
    let d = tempfile::tempdir().unwrap();
    let o = csos(&["lhp", "thermo"], d.path());
    assert_eq!(o.status.code(), Some(0));
    let rows = json(&o);
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 2 * 2 * 3);
    for label in rows.chunks(3) {
        let tot: f64 = label.iter().map(|r| r["value"][0].as_f64().unwrap()).sum();
        assert!((tot - 1.0).abs() < 1e-9);
    }
    // L even: the parity-forbidden rows are exact zeros
    let cfg = write(d.path(), "l4.cfg", "L = 4\ntau_im = 0.7\n");
    let out = d.path().join("t.csv");
    let o = csos(&["lhp", "thermo", "--config", &cfg, "--out", out.to_str().unwrap()], d.path());
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(out).unwrap();
    let mut zeros = 0;
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let (eps, t, h): (i64, i64, i64) = (f[2].parse().unwrap(), f[3].parse().unwrap(), f[4].parse().unwrap());
        if (eps + t - h).rem_euclid(2) == 1 {
            assert_eq!((f[5], f[6]), ("0", "0"));
            zeros += 1;
        }
    }
    assert_eq!(zeros, 12);
}

#[test]
fn finite_table_reports_deviation_and_caches_roots() {
    let d = tempfile::tempdir().unwrap();
    let cache = d.path().join("cache");
    std::fs::create_dir(&cache).unwrap();
    let cfg = write(d.path(), "c.cfg", INHOMOGENEOUS);
    let path = write(d.path(), "p.json", "{\"vertices\": [[1, 1], [2, 1]], \"heights\": [0, 1]}");
    let run = || {
        Command::new(env!("CARGO_BIN_EXE_csos"))
            .args(["lhp", "finite", "--config", &cfg, "--path", &path, "--resolution", "64"])
            .env("CSOS_CACHE_DIR", &cache)
            .output()
            .unwrap()
    };
    let first = run();
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
    let rows = json(&first);
    for r in rows.as_array().unwrap() {
        assert!(r["deviation"].as_f64().unwrap() < 1e-2);
        assert_eq!(r["N"], 4);
    }
    assert_eq!(std::fs::read_dir(&cache).unwrap().count(), 4);
    assert_eq!(run().stdout, first.stdout);
}

#[test]
fn reports_are_deterministic() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "c.cfg", INHOMOGENEOUS);
    let path = write(d.path(), "p.json", "{\"vertices\": [[1, 1], [2, 1], [3, 1]], \"heights\": [0, 1, 0]}");
    let args = ["lhp", "thermo", "--config", &cfg, "--path", &path, "--resolution", "32", "--tolerance", "1e-6"];
    let a = csos(&args, d.path());
    let b = csos(&args, d.path());
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let e1 = csos(&["identities", "appendixD", "--seed", "3"], d.path());
    let e2 = csos(&["identities", "appendixD", "--seed", "3"], d.path());
    assert_eq!(e1.stdout, e2.stdout);
}

#[test]
fn convergence_reports() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "c.cfg", &format!("{INHOMOGENEOUS}eps = 0\nt = 0\nn_list = 4, 6\n"));
    let path = write(d.path(), "p.json", "{\"vertices\": [[1, 1], [2, 1]], \"heights\": [0, 1]}");
    let o = csos(&["converge", "--config", &cfg, "--path", &path, "--resolution", "64"], d.path());
    assert_eq!(o.status.code(), Some(0));
    let r = json(&o);
    assert_eq!(r[0]["monotone"], Value::Bool(true));
    // a single size carries no monotonicity claim
    let one = write(d.path(), "one.cfg", &format!("{INHOMOGENEOUS}eps = 0\nt = 0\nn_list = 4\n"));
    let r = json(&csos(&["converge", "--config", &one, "--path", &path, "--resolution", "64"], d.path()));
    assert_eq!(r[0]["monotone"], Value::Null);
    // down and back up: {ξ̃_1, ξ̃_1 − η̃} without the fallback
    let back = write(d.path(), "b.json", "{\"vertices\": [[1, 1], [2, 1], [1, 1]], \"heights\": [0, -1, 0]}");
    let o = csos(&["converge", "--config", &one, "--path", &back, "--resolution", "64"], d.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&o);
    assert!(r[0]["thermo"].as_str().unwrap().starts_with("skipped"));
    assert_eq!(r[0]["rows"][0]["deviation"], Value::Null);
}
