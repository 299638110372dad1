use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use fk_thermo_cli::{parse_config, run_verify};
use serde_json::Value;
use tempfile::TempDir;

const COS: &str = "[grid]\nn = 128\n[potential]\nharmonics = [[1, 1, 0]]\n";

struct Run {
    code: i32,
    out: PathBuf,
    stderr: String,
}

fn fk(dir: &Path, config: &str, args: &[&str], out: &str) -> Run {
    let cfg = dir.join(format!("{out}.cfg"));
    fs::write(&cfg, config).unwrap();
    let out = dir.join(out);
    let result = Command::new(env!("CARGO_BIN_EXE_fk-thermo"))
        .args(&args[..1])
        .arg("--config")
        .arg(&cfg)
        .arg("-o")
        .arg(&out)
        .args(&args[1..])
        .output()
        .unwrap();
    Run {
        code: result.status.code().unwrap(),
        out,
        stderr: String::from_utf8_lossy(&result.stderr).into_owned(),
    }
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: PathBuf) -> (String, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    assert!(!text.contains('\r'));
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_string();
    let rows = lines
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

#[test]
fn eigen_writes_table_and_report() {
    let dir = TempDir::new().unwrap();
    let run = fk(dir.path(), COS, &["eigen"], "eigen");
    assert_eq!(run.code, 0, "{}", run.stderr);
    let (header, rows) = csv_rows(run.out.join("eigen.csv"));
    assert_eq!(header, "x,V,F,density_muV,drift");
    assert_eq!(rows.len(), 128);
    assert!(rows.iter().all(|r| r[2] > 0.0));
    let mass: f64 = rows.iter().map(|r| r[3]).sum::<f64>() / 128.0;
    assert!((mass - 1.0).abs() < 1e-12);

    let report = json(run.out.join("eigen.json"));
    let keys: Vec<&str> = report.as_object().unwrap().keys().map(|k| k.as_str()).collect();
    assert_eq!(keys, ["lambda", "gamma", "spectral_gap", "n", "critical_points_F"]);
    assert_eq!(report["n"], 128);
    assert_eq!(report["critical_points_F"], 2);
    assert!(report["spectral_gap"].as_f64().unwrap() > 0.0);

    let meta = json(run.out.join("meta.json"));
    assert_eq!(meta["command"], "eigen");
    assert_eq!(meta["config"]["grid"]["laplacian"], "second-difference");
    assert_eq!(meta["config"]["run"]["seed"], 42);
    assert_eq!(meta["config"]["run"]["bins"], 64);
}

#[test]
fn csv_potential_matches_harmonic_spec() {
    let dir = TempDir::new().unwrap();
    let mut csv = String::from("x,value\n");
    for i in 0..128 {
        let x = i as f64 / 128.0;
        csv.push_str(&format!("{x},{:e}\n", (2.0 * std::f64::consts::PI * x).cos()));
    }
    let path = dir.path().join("v.csv");
    fs::write(&path, csv).unwrap();
    let from_file = format!("[grid]\nn = 128\n[potential]\nfile = \"{}\"\n", path.display());
    let a = fk(dir.path(), COS, &["eigen"], "spec");
    let b = fk(dir.path(), &from_file, &["eigen"], "file");
    assert_eq!(b.code, 0, "{}", b.stderr);
    let la = json(a.out.join("eigen.json"))["lambda"].as_f64().unwrap();
    let lb = json(b.out.join("eigen.json"))["lambda"].as_f64().unwrap();
    assert!((la - lb).abs() < 1e-12);

    let shifted = fs::read_to_string(&path).unwrap().replacen("0.0078125,", "0.0078126,", 1);
    fs::write(&path, shifted).unwrap();
    let bad = fk(dir.path(), &from_file, &["eigen"], "bad");
    assert_eq!(bad.code, 2);
    assert!(bad.stderr.contains("grid node"), "{}", bad.stderr);
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let cases: [(&str, &[&str]); 4] = [
        ("eigen", &["eigen"]),
        ("mc", &["propagate", "--method", "mc", "--paths", "2000", "--t", "0.2"]),
        ("sim", &["simulate", "--paths", "500", "--T", "0.2", "--write-paths"]),
        ("max", &["maximize", "--K", "2", "--iters", "50"]),
    ];
    for (name, args) in cases {
        let a = fk(dir.path(), COS, args, &format!("{name}_a"));
        let b = fk(dir.path(), COS, args, &format!("{name}_b"));
        assert_eq!(a.code, 0, "{name}: {}", a.stderr);
        let mut files: Vec<_> = fs::read_dir(&a.out).unwrap().map(|e| e.unwrap().file_name()).collect();
        files.sort();
        assert!(files.len() >= 2, "{name}");
        for file in files {
            if file == "meta.json" {
                continue; // echoes the differing output directory
            }
            assert_eq!(
                fs::read(a.out.join(&file)).unwrap(),
                fs::read(b.out.join(&file)).unwrap(),
                "{name}/{file:?}"
            );
        }
    }
}

#[test]
fn propagate_routes_agree() {
    let dir = TempDir::new().unwrap();
    let config = format!("{COS}[f]\nconstant = 1\nharmonics = [[1, 0, 0.5]]\n");
    let pde = fk(dir.path(), &config, &["propagate", "--t", "0.5", "--x", "0.3"], "pde");
    let mc = fk(
        dir.path(),
        &config,
        &["propagate", "--t", "0.5", "--x", "0.3", "--method", "mc", "--paths", "20000"],
        "mc",
    );
    assert_eq!(pde.code + mc.code, 0);
    let (header, rows) = csv_rows(pde.out.join("propagate.csv"));
    assert_eq!(header, "x,u(x)");
    assert_eq!(rows.len(), 128);
    let p = json(pde.out.join("propagate.json"));
    let m = json(mc.out.join("propagate.json"));
    assert_eq!(p["method"], "pde");
    assert!(p.get("std_error").is_none());
    let se = m["std_error"].as_f64().unwrap();
    let diff = (p["value"].as_f64().unwrap() - m["value"].as_f64().unwrap()).abs();
    assert!(diff <= 3.0 * se + 5e-3, "{diff} vs se {se}");
}

#[test]
fn simulate_reports_histogram() {
    let dir = TempDir::new().unwrap();
    let run = fk(
        dir.path(),
        COS,
        &["simulate", "--paths", "4000", "--T", "0.5", "--init", "point:0.5", "--write-paths"],
        "sim",
    );
    assert_eq!(run.code, 0, "{}", run.stderr);
    let (header, rows) = csv_rows(run.out.join("histogram.csv"));
    assert_eq!(header, "bin_left,count,empirical_density,target_density");
    assert_eq!(rows.len(), 64);
    assert_eq!(rows.iter().map(|r| r[1]).sum::<f64>(), 4000.0);
    let target: f64 = rows.iter().map(|r| r[3]).sum::<f64>() / 64.0;
    assert!((target - 1.0).abs() < 1e-9);
    let summary = json(run.out.join("simulate.json"));
    assert_eq!(summary["n_paths"], 4000);
    assert!(summary["tv_distance"].as_f64().unwrap() < 0.1);
    let (header, rows) = csv_rows(run.out.join("paths.csv"));
    assert_eq!(header, "path_id,step,x");
    assert_eq!(rows.len(), 4000 * 501);
    assert_eq!(rows[0], vec![0.0, 0.0, 0.5]);
}

#[test]
fn simulate_with_admissible_drift_and_file_density() {
    let dir = TempDir::new().unwrap();
    let density = dir.path().join("init.csv");
    let mut csv = String::from("x,value\n");
    for i in 0..128 {
        csv.push_str(&format!("{},{}\n", i as f64 / 128.0, if i < 64 { 2.0 } else { 0.0 }));
    }
    fs::write(&density, csv).unwrap();
    let config = format!("{COS}[g]\nharmonics = [[1, 0.2, 0]]\n");
    let init = format!("density:{}", density.display());
    let run = fk(
        dir.path(),
        &config,
        &["simulate", "--paths", "4000", "--T", "2", "--drift", "g-spec", "--init", &init],
        "sim",
    );
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert!(json(run.out.join("simulate.json"))["tv_distance"].as_f64().unwrap() < 0.1);
}

#[test]
fn entropy_and_maximize_reports() {
    let dir = TempDir::new().unwrap();
    let config = format!("{COS}[g]\nharmonics = [[1, 0.3, 0], [2, 0, 0.1]]\n");
    let run = fk(dir.path(), &config, &["entropy"], "entropy");
    assert_eq!(run.code, 0, "{}", run.stderr);
    let r = json(run.out.join("entropy.json"));
    let f = |k: &str| r[k].as_f64().unwrap();
    assert!(f("h") < 0.0);
    assert!((f("pressure_value") + f("gap") - f("lambda_ref")).abs() < 1e-8);
    assert_eq!(json(run.out.join("meta.json"))["config"]["grid"]["laplacian"], "fourier");

    let run = fk(dir.path(), COS, &["maximize", "--K", "2", "--lr", "0.5", "--iters", "200"], "max");
    assert_eq!(run.code, 0, "{}", run.stderr);
    let (header, rows) = csv_rows(run.out.join("trace.csv"));
    assert_eq!(header, "iter,value,grad_norm");
    assert!(rows.windows(2).all(|w| w[1][1] >= w[0][1] - 1e-14));
    let r = json(run.out.join("maximize.json"));
    assert!(r["gap"].as_f64().unwrap() < 1e-8);
    assert_eq!(r["g"]["harmonics"].as_array().unwrap().len(), 2);
}

#[test]
fn verify_free_and_cosine_batteries_pass() {
    let dir = TempDir::new().unwrap();
    let free = fk(dir.path(), "[grid]\nn = 128\n[run]\npaths = 4000\n", &["verify"], "free");
    assert_eq!(free.code, 0, "{}", free.stderr);
    let report = json(free.out.join("verify.json"));
    assert!(report["lambda"].as_f64().unwrap().abs() < 1e-10);
    assert_eq!(report["pass"], true);

    let cos = fk(dir.path(), "[grid]\nn = 512\n[potential]\nharmonics = [[1,1,0]]\n", &["verify"], "cos");
    assert_eq!(cos.code, 0, "{}", cos.stderr);
    let report = json(cos.out.join("verify.json"));
    for check in report["checks"].as_array().unwrap() {
        let keys: Vec<&str> = check.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        assert_eq!(keys, ["name", "value", "tolerance", "pass"]);
        assert_eq!(check["pass"], true, "{check}");
    }
}

#[test]
fn perturbed_eigenvalue_fails_decomposition() {
    let dir = TempDir::new().unwrap();
    let run = fk(dir.path(), COS, &["verify", "--perturb-eigenvalue", "1e-3"], "fault");
    assert_eq!(run.code, 1);
    let report = json(run.out.join("verify.json"));
    let failed: Vec<&str> = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["pass"] == false)
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert_eq!(failed, ["pressure_decomposition"]);
}

#[test]
fn configuration_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let cases: [(&str, &[&str], &str); 6] = [
        ("[grid]\nn = 255\n", &["eigen"], "grid.n"),
        ("[grid]\nn = 64\nn = 128\n", &["eigen"], "line 3"),
        ("[grid]\nsize = 64\n", &["eigen"], "unknown key"),
        (COS, &["entropy"], "[g]"),
        (COS, &["propagate", "--dt", "0.3"], "run.t"),
        (COS, &["eigen", "--bogus"], "--bogus"),
    ];
    for (i, (config, args, needle)) in cases.iter().enumerate() {
        let run = fk(dir.path(), config, args, &format!("e{i}"));
        assert_eq!(run.code, 2, "case {i}: {}", run.stderr);
        assert!(run.stderr.contains(needle), "case {i}: {}", run.stderr);
    }
}

#[test]
fn overrides_reach_resolved_config() {
    let dir = TempDir::new().unwrap();
    let run = fk(dir.path(), COS, &["eigen", "--run.seed=7", "--grid.n", "64", "--grid.laplacian=fourier"], "o");
    assert_eq!(run.code, 0, "{}", run.stderr);
    let meta = json(run.out.join("meta.json"));
    assert_eq!(meta["config"]["run"]["seed"], 7);
    assert_eq!(meta["config"]["grid"]["n"], 64);
    assert_eq!(meta["config"]["grid"]["laplacian"], "fourier");
    assert_eq!(json(run.out.join("eigen.json"))["n"], 64);
}

#[test]
fn library_verify_matches_binary_contract() {
    let dir = TempDir::new().unwrap();
    let text = format!("{COS}[run]\npaths = 2000\noutput = \"{}\"\n", dir.path().join("lib").display());
    let report = run_verify(&parse_config(&text).unwrap()).unwrap();
    assert!(report.all_pass(), "{report:?}");
    assert!(dir.path().join("lib/verify.json").exists());
    assert!(dir.path().join("lib/meta.json").exists());
}
