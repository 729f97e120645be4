use std::path::Path;
use std::process::{Command, Output};

use gnormal_core::gheat::GridSpec;
use gnormal_core::special_fn::{norm_cdf, norm_quantile};
use serde_json::Value;

fn gnormal<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_gnormal"))
        .args(args)
        .env_remove("GNORMAL_WORKERS")
        .output()
        .expect("spawn gnormal")
}

fn ok_json(out: &Output) -> Value {
    assert!(out.status.success(), "exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn split(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

#[test]
fn capacity_examples() {
    let v = ok_json(&gnormal(split("capacity --sigma-lo 0.8 --sigma-hi 1 --alpha 0.05 --sided two")));
    assert_eq!(format!("{:.3}", v["p2_approx"].as_f64().unwrap()), "0.056");

    let v = ok_json(&gnormal(split("capacity --sigma-lo 1 --sigma-hi 1 --c 1.96")));
    assert!((v["p1"].as_f64().unwrap() - norm_cdf(-1.96)).abs() < 1e-15);

    let v = ok_json(&gnormal(split("capacity --sigma-lo 0.8 --sigma-hi 1 --alpha 0.05 --sided one")));
    assert!((v["p1"].as_f64().unwrap() - 0.1 / 1.8).abs() < 1e-12);
    assert!(v.get("bounds").is_none());
}

#[test]
fn capacity_bounds_and_pde() {
    let v = ok_json(&gnormal(split("capacity --sigma-lo 0.8 --sigma-hi 1 --c 1.959963984540054 --bounds --pde --dx 0.04")));
    let b = &v["bounds"];
    for key in ["two_sided_error_bound", "absolute_error_bound", "relative_error_bound", "asymptotic_relative_error"] {
        assert!(b[key].as_f64().unwrap() > 0.0, "{key}");
    }
    let approx = v["p2_approx"].as_f64().unwrap();
    let pde = &v["p2_numeric"];
    let gap = approx - pde["extrapolated"].as_f64().unwrap();
    assert!(gap > -pde["eps_grid"].as_f64().unwrap());
    assert!(gap <= b["two_sided_error_bound"].as_f64().unwrap() + pde["eps_grid"].as_f64().unwrap());
}

#[test]
fn capacity_bounds_below_half_sigma_fail() {
    let out = gnormal(split("capacity --sigma-lo 0.8 --sigma-hi 1 --c 0.3 --bounds"));
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("c > sigma_hi"));

    // Without --bounds the approximation is simply absent.
    let v = ok_json(&gnormal(split("capacity --sigma-lo 0.8 --sigma-hi 1 --c 0.3")));
    assert!(v["p2_approx"].is_null());
}

#[test]
fn usage_errors_exit_2() {
    for args in [
        "capacity --sigma-lo 1.2 --sigma-hi 1 --c 1",
        "capacity --sigma-lo 0.8 --sigma-hi 1",
        "simulate --n 1 --reps 10 --policy constant --sigma-lo 1 --sigma-hi 1 --stat t",
        "simulate --n 5 --reps 10 --policy nonsense --sigma-lo 1 --sigma-hi 1",
        "threshold --alpha 1.5 --sigma-lo 0.8 --sigma-hi 1 --levels 3",
        "sandwich --c 0.4 --sigma-lo 0.8 --sigma-hi 1",
    ] {
        let out = gnormal(split(args));
        assert_eq!(out.status.code(), Some(2), "{args}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn threshold_csv() {
    let out = gnormal(split("threshold --alpha 0.05 --sigma-lo 0.8 --sigma-hi 1 --levels 10"));
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "time_remaining,threshold,flag");
    assert_eq!(lines.len(), 11);
    let q = norm_quantile(0.975).unwrap();
    let last: Vec<&str> = lines[10].split(',').collect();
    assert_eq!(last[0], "1.0");
    assert!((last[1].parse::<f64>().unwrap() - q).abs() < 0.01);
    assert_eq!(last[2], "ok");

    let out = gnormal(split("threshold --alpha 0.05 --sigma-lo 1 --sigma-hi 1 --levels 4"));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().skip(1).all(|l| l.ends_with(",classical")));
}

#[test]
fn one_sided_solve_matches_closed_form_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("u.csv");
    let out = gnormal([
        "solve", "--ic", "one-sided", "--c", "0", "--sigma-lo", "0.8", "--sigma-hi", "1", "--x-min", "-10",
        "--x-max", "10", "--nx", "2001", "--t-end", "1", "--safety", "0.5", "--levels", "4", "--out",
    ]
    .iter()
    .map(|s| s.to_string())
    .chain([csv.display().to_string()]));
    let v = ok_json(&out);
    assert!(v["closed_form_sup_error"].as_f64().unwrap() <= 5e-3);

    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some("t,x,u"));
    assert_eq!(text.lines().count(), 1 + 5 * 2001);

    let manifest_path = dir.path().join("u.csv.manifest.json");
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(&manifest_path).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "solve");
    assert_eq!(manifest["params"]["nx"], 2001);
    assert!(manifest["checksums"]["out"].is_string());

    let replay = ok_json(&gnormal([Path::new("replay"), manifest_path.as_path()]));
    assert_eq!(replay["reproduced"], true);

    // A doctored checksum is caught.
    let mut doctored = manifest.clone();
    doctored["checksums"]["out"] = Value::from("0".repeat(64));
    let doctored_path = dir.path().join("doctored.json");
    std::fs::write(&doctored_path, doctored.to_string()).unwrap();
    let out = gnormal([Path::new("replay"), doctored_path.as_path()]);
    assert_eq!(out.status.code(), Some(4));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["mismatched"], serde_json::json!(["out"]));
}

#[test]
fn classical_solve_is_the_heat_equation() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("heat.csv");
    let args = format!(
        "solve --ic one-sided --c 0.5 --sigma-lo 1 --sigma-hi 1 --nx 2001 --levels 1 --out {}",
        csv.display()
    );
    let v = ok_json(&gnormal(split(&args)));
    let u0 = v["value_at_origin"].as_f64().unwrap();
    assert!((u0 - norm_cdf(-0.5)).abs() < 5e-3, "{u0}");
    assert!(v["closed_form_sup_error"].as_f64().unwrap() < 5e-3);
}

#[test]
fn two_sided_solve_agrees_with_capacity_pde() {
    let c = 1.959963984540054;
    let grid = GridSpec::aligned(c, c + 10.0, 0.04, 1.0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("w.csv");
    let args = format!(
        "solve --ic two-sided --c {c} --sigma-lo 0.8 --sigma-hi 1 --x-min {:?} --x-max {:?} --nx {} --levels 1 --out {}",
        grid.x_min,
        grid.x_max,
        grid.nx,
        csv.display()
    );
    let solved = ok_json(&gnormal(split(&args)));
    let cap = ok_json(&gnormal(split(&format!("capacity --sigma-lo 0.8 --sigma-hi 1 --c {c} --pde --dx 0.04"))));
    assert_eq!(solved["value_at_origin"], cap["p2_numeric"]["coarse"]);
}

#[test]
fn table_initial_condition_and_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("phi.csv");
    std::fs::write(&table, "x,y\n-5,0\n0,0\n5,5\n").unwrap();
    let csv = dir.path().join("call.csv");
    let args = format!(
        "solve --ic table:{} --sigma-lo 0.5 --sigma-hi 1 --x-min -5 --x-max 5 --nx 201 --levels 2 --out {}",
        table.display(),
        csv.display()
    );
    let v = ok_json(&gnormal(split(&args)));
    // E[X⁺] under the upper volatility: σ̄/√(2π).
    let want = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    assert!((v["value_at_origin"].as_f64().unwrap() - want).abs() < 0.01);
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("call.csv.manifest.json")).unwrap()).unwrap();
    assert!(manifest["checksums"].as_object().unwrap().keys().any(|k| k.starts_with("input:table:")));

    std::fs::write(&table, "x,y\n-1,1e308\n0,-1e308\n1,1e308\n").unwrap();
    let args = format!(
        "solve --ic table:{} --sigma-lo 0.8 --sigma-hi 1 --x-min -1 --x-max 1 --nx 101 --out {}",
        table.display(),
        csv.display()
    );
    let out = gnormal(split(&args));
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("step"));
}

#[test]
fn simulate_null_calibration_and_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let hist = dir.path().join("h.csv");
    let manifest = dir.path().join("m.json");
    let args = format!(
        "simulate --n 10 --reps 20000 --policy constant --sigma-lo 1 --sigma-hi 1 --alpha 0.05 --sided one --stat z --seed 4 --hist {} --manifest {}",
        hist.display(),
        manifest.display()
    );
    let v = ok_json(&gnormal(split(&args)));
    let rate = v["rate"].as_f64().unwrap();
    assert!((rate - 0.05).abs() < 4.0 * (0.05f64 * 0.95 / 20_000.0).sqrt(), "{rate}");
    assert!(v.get("runtime_seconds").is_none());
    assert_eq!(v["config_echo"]["policy"], "constant");

    let h = std::fs::read_to_string(&hist).unwrap();
    assert_eq!(h.lines().next(), Some("bin_lo,bin_hi,count"));
    assert_eq!(h.lines().count(), 241);

    let m: Value = serde_json::from_str(&std::fs::read_to_string(&manifest).unwrap()).unwrap();
    assert_eq!(m["seed"], 4);
    assert!(m["checksums"]["hist"].is_string() && m["checksums"]["stdout"].is_string());
}

#[test]
fn simulate_timing_is_opt_in() {
    let v = ok_json(&gnormal(split(
        "simulate --n 5 --reps 100 --policy one-sided-opt --sigma-lo 0.8 --sigma-hi 1 --sided one --stat z --timing",
    )));
    assert!(v["runtime_seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn workers_flag_and_environment_give_identical_output() {
    let base = "simulate --n 30 --reps 5000 --policy two-sided-thresh --sigma-lo 0.8 --sigma-hi 1 --stat z --seed 9";
    let one = gnormal(split(&format!("{base} --workers 1")));
    let many = gnormal(split(&format!("{base} --workers 7")));
    let env = Command::new(env!("CARGO_BIN_EXE_gnormal"))
        .args(split(base))
        .env("GNORMAL_WORKERS", "3")
        .output()
        .unwrap();
    assert!(one.status.success());
    assert_eq!(one.stdout, many.stdout);
    assert_eq!(one.stdout, env.stdout);
    let manifest: Value = serde_json::from_slice(&env.stderr[env.stderr.iter().position(|&b| b == b'{').unwrap()..]).unwrap();
    assert_eq!(manifest["params"]["workers"], 3);
}

#[test]
fn heuristic_critical_value_options() {
    let base = "simulate --n 20 --reps 2000 --policy heuristic-t --sigma-lo 0.8 --sigma-hi 1 --seed 2";
    let normal = ok_json(&gnormal(split(base)));
    let student = ok_json(&gnormal(split(&format!("{base} --critical t"))));
    let fixed = ok_json(&gnormal(split(&format!("{base} --critical 1.959963984540054"))));
    assert_eq!(normal["config_echo"]["critical"]["rule"], "normal");
    assert_eq!(student["config_echo"]["critical"]["rule"], "student_by_step");
    assert_eq!(normal["rejections"], fixed["rejections"]);
    assert_eq!(gnormal(split(&format!("{base} --critical -1"))).status.code(), Some(2));
}

#[test]
fn sandwich_and_convergence() {
    let v = ok_json(&gnormal(split("sandwich --c 1.5 --sigma-lo 0.8 --sigma-hi 1 --dx 0.08 --levels 10")));
    assert_eq!(v["holds"], true);
    assert_eq!(v["levels"].as_array().unwrap().len(), 10);

    let v = ok_json(&gnormal(split(
        "convergence --sigma-lo 0.8 --sigma-hi 1 --alpha 0.05 --sided one --n-list 10,40 --reps 4000 --seed 3",
    )));
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1]["n"], 40);
    assert!((rows[0]["target"].as_f64().unwrap() - 0.1 / 1.8).abs() < 1e-12);
}

#[test]
fn repro_reports_the_known_red_check() {
    let out = gnormal(split("repro --sim-reps 2000 --limit-n 50 --limit-reps 2000 --json"));
    // The relative bound at the 0.95 quantile is above 0.002, so the table
    // always contains at least one failure.
    assert_eq!(out.status.code(), Some(4));
    let checks: Value = serde_json::from_slice(&out.stdout).unwrap();
    let checks = checks.as_array().unwrap();
    assert_eq!(checks.len(), 13);
    let find = |name: &str| checks.iter().find(|c| c["name"] == name).unwrap_or_else(|| panic!("{name}"));
    assert_eq!(find("relative_error_bound(q0.95)")["pass"], false);
    assert_eq!(find("relative_error_bound(q0.975)")["pass"], true);
    for name in ["p2_approx(q0.95)", "p2_approx(q0.975)", "p2_approx(q0.995)"] {
        assert_eq!(find(name)["pass"], true);
    }

    let text = gnormal(split("repro --sim-reps 500 --limit-n 20 --limit-reps 500"));
    let table = String::from_utf8(text.stdout).unwrap();
    assert_eq!(table.lines().count(), 13);
    assert!(table.lines().all(|l| l.starts_with("PASS") || l.starts_with("FAIL")));
}
