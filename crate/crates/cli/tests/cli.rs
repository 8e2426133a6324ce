use std::path::PathBuf;
use std::process::{Command, Output};

fn qiclock(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qiclock")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("qiclock-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn version_reports_convention_hash() {
    let o = qiclock(&["--version"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("conventions"));
    assert!(text.contains(&qiclock::experiments::convention_hash()));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(qiclock(&["bogus"]).status.code(), Some(2));
    assert_eq!(qiclock(&["correlate", "--query", "1:x"]).status.code(), Some(2));
    assert_eq!(qiclock(&["correlate", "--query", "13"]).status.code(), Some(2));
    assert_eq!(qiclock(&["correlate", "--d", "100", "--query", "1:3"]).status.code(), Some(2));
    assert_eq!(qiclock(&["sweep", "--preset", "nope"]).status.code(), Some(2));
    assert_eq!(qiclock(&["sweep", "--config", "/nonexistent/cfg.json"]).status.code(), Some(2));
}

#[test]
fn correlate_prints_factor_breakdown() {
    let o = qiclock(&["correlate", "--d", "101", "--query", "-1:3", "--query", "1:5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let p = v["product"].as_array().unwrap();
    let (re, im) = (p[0].as_f64().unwrap(), p[1].as_f64().unwrap());
    assert!(re * re + im * im <= 1.0);
    let c2 = v["c2"].as_f64().unwrap();
    assert!(c2 > 0.0 && c2 <= 1.0);
}

#[test]
fn chain_writes_trajectory() {
    let o = qiclock(&["chain", "--d", "31", "--steps", "4", "--seed", "5"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().next().unwrap(), "step,delta,outcome");
    assert_eq!(text.lines().count(), 5);
    assert_eq!(text, stdout(&qiclock(&["chain", "--d", "31", "--steps", "4", "--seed", "5"])));
}

#[test]
fn qnd_decay_rows() {
    let o = qiclock(&["qnd-decay", "--dims", "11,21,41"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().next().unwrap(), "d,magnitude");
    let mags: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(mags.len(), 3);
    assert!(mags.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn sweep_is_deterministic_for_a_seed() {
    let args = ["sweep", "--d-grid", "101,201", "--samples", "500", "--seed", "7"];
    let a = qiclock(&args);
    assert!(a.status.success());
    let text = stdout(&a);
    assert!(text.starts_with("d,sigma_m_sq,xi_sq,c1,c2,c3_re,c3_im,c3_stderr,"));
    assert_eq!(text.lines().count(), 3);
    let mut threaded = args.to_vec();
    threaded.extend(["--threads", "2"]);
    assert_eq!(text, stdout(&qiclock(&threaded)));

    let exact = stdout(&qiclock(&["sweep", "--d-grid", "101", "--exact"]));
    let row: Vec<&str> = exact.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[7].parse::<f64>().unwrap(), 0.0);
}

#[test]
fn oscillator_and_out_file() {
    let out = scratch("osc.csv");
    let o = qiclock(&["oscillator", "--points", "3", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().next().unwrap(), "tau,center,best_sigma_sq,min_variance,floor");
    for line in text.lines().skip(1) {
        let f: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert!(f[3] >= f[4]);
    }
}

#[test]
fn oracle_check_on_small_grid() {
    let cfg = scratch("grid.json");
    std::fs::write(&cfg, r#"{"dims": [3, 5], "max_readings": 2}"#).unwrap();
    let o = qiclock(&["oracle-check", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["cases"].as_u64().unwrap() > 0);
    assert!(v["max_deviation"].as_f64().unwrap() < 1e-8);

    std::fs::write(&cfg, r#"{"dims": [3], "bogus": 1}"#).unwrap();
    assert_eq!(qiclock(&["oracle-check", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn timebasis_json() {
    let o = qiclock(&["timebasis", "--d", "101", "--chains", "20000"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let se = v["stderr"].as_f64().unwrap();
    assert!((v["empirical_re"].as_f64().unwrap() - v["analytic_re"].as_f64().unwrap()).abs() < 5.0 * se);
}
