use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

use ifd_lab::comparable;

const R: &str = "1.5 + 0.5*sin(2*pi*t) + 0.3*cos(pi*x)";
const K: &str = "2 + 0.5*cos(pi*x)*sin(2*pi*t)";

struct Run {
    out: PathBuf,
    output: Output,
    _tmp: TempDir,
}

impl Run {
    fn code(&self) -> i32 {
        self.output.status.code().expect("exited normally")
    }

    fn report(&self) -> Value {
        read_json(&self.out.join("report.json"))
    }

    fn error(&self) -> Value {
        let stderr: Value = serde_json::from_slice(&self.output.stderr).expect("stderr is a JSON error object");
        assert_eq!(stderr, read_json(&self.out.join("error.json")));
        stderr
    }

    fn csv(&self, name: &str) -> (String, Vec<Vec<f64>>) {
        let text = std::fs::read_to_string(self.out.join(name)).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap().to_string();
        let rows = lines
            .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
            .collect();
        (header, rows)
    }
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ifd-lab"))
}

fn run_with(config: &Value, extra: &[&str]) -> Run {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("config.json");
    std::fs::write(&cfg, serde_json::to_string_pretty(config).unwrap()).unwrap();
    let out = tmp.path().join("out");
    let output = bin()
        .arg("run")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(extra)
        .output()
        .unwrap();
    Run { out, output, _tmp: tmp }
}

fn run(config: &Value) -> Run {
    run_with(config, &[])
}

fn scenario(nx: usize, nt: usize, strategies: Value, run: Value) -> Value {
    json!({
        "domain": { "L": 1.0, "nx": nx },
        "time": { "T": 1.0, "nt": nt },
        "environment": { "r": R, "K": K },
        "strategies": strategies,
        "run": run,
    })
}

fn validation_pointer(config: &Value) -> String {
    let r = run(config);
    assert_eq!(r.code(), 2, "stderr: {}", String::from_utf8_lossy(&r.output.stderr));
    let e = r.error();
    assert_eq!(e["stage"], "validate");
    assert!(!e["message"].as_str().unwrap().is_empty());
    e["diagnostics"]["pointer"].as_str().unwrap().to_string()
}

#[test]
fn constant_environment_is_feasible_with_margin_r() {
    let cfg = json!({
        "domain": { "L": 1.0, "nx": 16 },
        "time": { "T": 1.0, "nt": 16 },
        "environment": { "r": "2", "K": "3" },
        "run": { "kind": "feasibility" },
    });
    let r = run(&cfg);
    assert_eq!(r.code(), 0);
    let rep = r.report();
    let res = &rep["results"];
    assert_eq!(res["feasibility"]["feasible"], true);
    assert!((res["feasibility"]["margin"].as_f64().unwrap() - 2.0).abs() < 1e-12);
    assert!((res["envelope"]["m_min"].as_f64().unwrap() - 3.0).abs() < 1e-12);
    assert!((res["envelope"]["m_max"].as_f64().unwrap() - 3.0).abs() < 1e-12);
    for name in ["ktilde.csv", "margin.csv"] {
        let (header, rows) = r.csv(name);
        assert_eq!(header, "x,t,value");
        assert_eq!(rows.len(), 16 * 16);
    }
    let (header, rows) = r.csv("envelope.csv");
    assert_eq!(header, "t,M,logderiv");
    assert_eq!(rows.len(), 16);
}

#[test]
fn report_echoes_every_tolerance_with_its_source() {
    let mut cfg = scenario(16, 32, json!([]), json!({ "kind": "feasibility" }));
    cfg["tolerances"] = json!({ "eps_feas": 1e-7 });
    let r = run(&cfg);
    assert_eq!(r.code(), 0);
    let rep = r.report();
    let tol = rep["tolerances"].as_object().unwrap();
    for key in [
        "orbit_tol",
        "max_periods",
        "eig_tol",
        "eig_window",
        "eig_max_iters",
        "eps_feas",
        "ifd_tol",
        "eps_eig",
        "path_modes",
        "delta_fraction",
        "invader_mu",
        "invader_alpha",
        "min_substeps",
        "poisson_compat_tol",
        "bernoulli_residual_tol",
    ] {
        let s = &tol[key];
        assert!(!s["value"].is_null(), "{key} has no value");
        let expected = if key == "eps_feas" { "config" } else { "default" };
        assert_eq!(s["source"], expected, "{key}");
    }
    assert_eq!(tol["eps_feas"]["value"], 1e-7);
    assert_eq!(rep["results"]["feasibility"]["eps"], 1e-7);
    assert_eq!(rep["grid"]["nx"], 16);
    assert_eq!(rep["config"]["environment"]["r"], R);
    assert!(rep["timing"]["wall_seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn infeasible_environment_exits_4_when_feasibility_is_required() {
    let mut cfg = scenario(
        32,
        64,
        json!([]),
        json!({ "kind": "feasibility", "require_feasible": true }),
    );
    cfg["environment"] = json!({ "r": "0.3 + 0.25*cos(pi*x)", "K": "exp(2*sin(2*pi*t))" });
    let r = run(&cfg);
    assert_eq!(r.code(), 4);
    let e = r.error();
    assert_eq!(e["stage"], "feasibility");
    assert_eq!(e["diagnostics"]["feasible"], false);
    assert!(e["diagnostics"]["margin"].as_f64().unwrap() < 0.0);
    assert!(!r.out.join("report.json").exists());

    // Without the requirement infeasibility is just a finding.
    cfg["run"] = json!({ "kind": "feasibility" });
    let r = run(&cfg);
    assert_eq!(r.code(), 0);
    assert_eq!(r.report()["results"]["feasibility"]["feasible"], false);
}

#[test]
fn ifd_strategy_in_an_infeasible_environment_exits_4() {
    let mut cfg = scenario(32, 64, json!([{ "P": "ifd" }]), json!({ "kind": "orbit" }));
    cfg["environment"] = json!({ "r": "0.3 + 0.25*cos(pi*x)", "K": "exp(2*sin(2*pi*t))" });
    let r = run(&cfg);
    assert_eq!(r.code(), 4);
    assert!(r.error()["message"].as_str().unwrap().contains("ideal free"));
}

#[test]
fn non_convergence_exits_3_with_diagnostics() {
    let mut cfg = scenario(32, 32, json!([{ "P": "0" }]), json!({ "kind": "orbit" }));
    cfg["tolerances"] = json!({ "max_periods": 2 });
    let r = run(&cfg);
    assert_eq!(r.code(), 3);
    let e = r.error();
    assert_eq!(e["stage"], "find_periodic_orbit");
    assert_eq!(e["diagnostics"]["periods"], 2);
    assert_eq!(e["diagnostics"]["last_defects"].as_array().unwrap().len(), 2);
}

#[test]
fn ifd_orbit_matches_the_constructed_profile() {
    let cfg = scenario(
        32,
        32,
        json!([{ "mu": "0.1 + 0.05*cos(pi*x)", "P": "ifd", "label": "ideal" }]),
        json!({ "kind": "orbit" }),
    );
    let r = run(&cfg);
    assert_eq!(r.code(), 0, "{}", String::from_utf8_lossy(&r.output.stderr));
    let res = r.report()["results"].clone();
    assert_eq!(res["orbit"]["label"], "ideal");
    assert_eq!(res["orbit"]["positive"], true);
    assert_eq!(res["fitness"]["is_ifd"], true);
    assert!(res["ifd"]["relative_error"].as_f64().unwrap() < 1e-6);
    let (header, rows) = r.csv("orbit.csv");
    assert_eq!(header, "x,t,value");
    assert_eq!(rows.len(), 32 * 32);
    assert!(rows.iter().all(|row| row.len() == 3 && row[2] > 0.0));
    // cell centres, time levels in [0, T)
    assert!((rows[0][0] - 1.0 / 64.0).abs() < 1e-15);
    assert!(rows.iter().all(|row| row[1] >= 0.0 && row[1] < 1.0));
}

#[test]
fn seed_grid_overrides_the_resolution() {
    let cfg = scenario(64, 64, json!([{ "P": "ifd" }]), json!({ "kind": "orbit" }));
    let r = run_with(&cfg, &["--seed-grid", "16,24"]);
    assert_eq!(r.code(), 0);
    let rep = r.report();
    assert_eq!(rep["grid"]["nx"], 16);
    assert_eq!(rep["grid"]["nt"], 24);
    assert_eq!(r.csv("orbit.csv").1.len(), 16 * 24);
}

#[test]
fn invasion_of_an_ideal_free_resident_fails() {
    let cfg = scenario(
        32,
        64,
        json!([{ "P": "ifd" }, { "P": { "pursuit": { "alpha": 16 } } }]),
        json!({ "kind": "invasion", "resident": 0, "invader": 1 }),
    );
    let r = run(&cfg);
    assert_eq!(r.code(), 0, "{}", String::from_utf8_lossy(&r.output.stderr));
    let res = r.report()["results"].clone();
    assert_eq!(res["verdict"], "no invasion");
    let lambda = res["floquet"]["lambda1"].as_f64().unwrap();
    assert!(lambda >= -1e-6, "lambda1 = {lambda}");
    for name in ["orbit.csv", "fitness.csv", "eigenfunction.csv"] {
        assert_eq!(r.csv(name).1.len(), 32 * 64, "{name}");
    }
    let (header, rows) = r.csv("path.csv");
    assert_eq!(header, "t,gamma");
    assert!(rows.iter().all(|row| row[1] > 0.0 && row[1] < 1.0));
}

#[test]
fn invasion_of_a_diffusing_resident_succeeds() {
    let cfg = scenario(32, 64, json!([{ "P": "0" }]), json!({ "kind": "invasion" }));
    let r = run(&cfg);
    assert_eq!(r.code(), 0, "{}", String::from_utf8_lossy(&r.output.stderr));
    let res = r.report()["results"].clone();
    assert_eq!(res["verdict"], "invades");
    assert!(res["floquet"]["lambda1"].as_f64().unwrap() < -1e-3);
    assert_eq!(res["invader"]["alpha"], 16.0);
}

#[test]
fn alpha_sweep_writes_one_row_per_alpha_below_the_bound() {
    let alphas = [1.0, 4.0, 16.0];
    let cfg = scenario(
        32,
        32,
        json!([{ "P": "0" }]),
        json!({ "kind": "alpha_sweep", "alphas": alphas }),
    );
    let r = run(&cfg);
    assert_eq!(r.code(), 0, "{}", String::from_utf8_lossy(&r.output.stderr));
    let (header, rows) = r.csv("sweep.csv");
    assert_eq!(header, "alpha,lambda1,rho,iters,bound");
    assert_eq!(rows.len(), alphas.len());
    for (row, a) in rows.iter().zip(alphas) {
        assert_eq!(row[0], a);
        assert!(row[1] >= row[4] - 1e-9, "lambda1 {} below bound {}", row[1], row[4]);
        assert!((row[2] - (-row[1]).exp()).abs() < 1e-9 * row[2]);
    }
    assert_eq!(r.report()["results"]["sweep"]["non_increasing"], true);
}

#[test]
fn competition_mass_series_has_a_row_per_period_and_species() {
    let cfg = scenario(
        24,
        32,
        json!([{ "mu": "0.2", "P": "ifd" }, { "mu": "0.2", "P": "0" }]),
        json!({ "kind": "competition", "strategies": [0, 1], "periods": 12, "initial": ["0.5", "0.5"] }),
    );
    let r = run(&cfg);
    assert_eq!(r.code(), 0, "{}", String::from_utf8_lossy(&r.output.stderr));
    let (header, rows) = r.csv("mass.csv");
    assert_eq!(header, "period,species,mass");
    assert_eq!(rows.len(), 13 * 2);
    for (n, row) in rows.iter().enumerate() {
        assert_eq!(row[0] as usize, n / 2);
        assert_eq!(row[1] as usize, n % 2);
        assert!(row[2] > 0.0);
    }
    assert!((rows[0][2] - 0.5).abs() < 1e-12);
    let res = r.report()["results"].clone();
    assert_eq!(res["periods"], 12);
    assert_eq!(res["species"].as_array().unwrap().len(), 2);
}

#[test]
fn remark_d_reports_infeasibility_and_exits_0() {
    let cfg = json!({
        "domain": { "L": 1.0, "nx": 32 },
        "time": { "T": 1.0, "nt": 64 },
        "strategies": [{ "P": "0" }],
        "run": { "kind": "remark_d", "rho": "1 + 0.8*sin(2*pi*t)" },
    });
    let r = run(&cfg);
    assert_eq!(r.code(), 0, "{}", String::from_utf8_lossy(&r.output.stderr));
    let res = r.report()["results"].clone();
    assert_eq!(res["feasibility"]["feasible"], false);
    assert!(res["feasibility"]["margin"].as_f64().unwrap() < 0.0);
    let runs = res["strategies"].as_array().unwrap();
    assert_eq!(runs.len(), 1);
    assert_eq!(runs[0]["fitness"]["is_ifd"], false);
    let (header, rows) = r.csv("envelope.csv");
    assert_eq!(header, "t,M,logderiv,min_margin");
    assert_eq!(rows.len(), 64);
}

#[test]
fn reports_are_reproducible_apart_from_timing() {
    let cfg = scenario(
        32,
        32,
        json!([{ "P": "0" }]),
        json!({ "kind": "alpha_sweep", "alphas": [2, 8] }),
    );
    let a = run(&cfg);
    let b = run(&cfg);
    let c = run_with(&cfg, &["--jobs", "1"]);
    for r in [&a, &b, &c] {
        assert_eq!(r.code(), 0);
    }
    assert_eq!(comparable(&a.report()), comparable(&b.report()));
    assert_eq!(comparable(&a.report()), comparable(&c.report()));
    assert!(a.report().get("timing").is_some());
    for name in ["orbit.csv", "fitness.csv", "path.csv", "sweep.csv"] {
        let bytes = |r: &Run| std::fs::read(r.out.join(name)).unwrap();
        assert_eq!(bytes(&a), bytes(&b), "{name}");
        assert_eq!(bytes(&a), bytes(&c), "{name}");
    }
}

#[test]
fn validation_errors_cite_json_pointers() {
    let base = scenario(16, 16, json!([{ "P": "0" }]), json!({ "kind": "orbit" }));

    let mut c = base.clone();
    c["environment"]["r"] = json!("1 + sin(");
    assert_eq!(validation_pointer(&c), "/environment/r");

    let mut c = base.clone();
    c["environment"]["K"] = json!("x - 0.5");
    assert_eq!(validation_pointer(&c), "/environment/K");

    let mut c = base.clone();
    c["strategies"][0]["P"] = json!("foo(x)");
    assert_eq!(validation_pointer(&c), "/strategies/0/P");

    let mut c = base.clone();
    c["strategies"][0]["mu"] = json!("cos(pi*x)");
    assert_eq!(validation_pointer(&c), "/strategies/0/mu");

    let mut c = base.clone();
    c["domain"]["ny"] = json!(3);
    assert_eq!(validation_pointer(&c), "/domain/ny");

    let mut c = base.clone();
    c["time"]["nt"] = json!(-4);
    assert_eq!(validation_pointer(&c), "/time/nt");

    let mut c = base.clone();
    c["run"]["strategy"] = json!(3);
    assert_eq!(validation_pointer(&c), "/run/strategy");

    let mut c = base.clone();
    c["run"] = json!({ "kind": "remark_d", "rho": "1 + x" });
    assert_eq!(validation_pointer(&c), "/run/rho");

    let mut c = base.clone();
    c["tolerances"] = json!({ "orbit_tol": -1.0 });
    assert_eq!(validation_pointer(&c), "/tolerances/orbit_tol");

    let mut c = base.clone();
    c.as_object_mut().unwrap().remove("environment");
    assert_eq!(validation_pointer(&c), "/environment");

    let mut c = base;
    c["params"] = json!({ "a": 2.0 });
    c["environment"]["r"] = json!("a + b");
    assert_eq!(validation_pointer(&c), "/environment/r");
}

#[test]
fn params_are_substituted_into_expressions() {
    let cfg = json!({
        "domain": { "L": 1.0, "nx": 8 },
        "time": { "T": 1.0, "nt": 8 },
        "params": { "r0": 2.0, "k0": 3.0 },
        "environment": { "r": "r0", "K": "k0" },
        "run": { "kind": "feasibility" },
    });
    let r = run(&cfg);
    assert_eq!(r.code(), 0);
    assert!((r.report()["results"]["feasibility"]["margin"].as_f64().unwrap() - 2.0).abs() < 1e-12);
}

#[test]
fn validate_command_checks_without_running() {
    let tmp = TempDir::new().unwrap();
    let good = tmp.path().join("good.json");
    std::fs::write(
        &good,
        scenario(16, 16, json!([]), json!({ "kind": "feasibility" })).to_string(),
    )
    .unwrap();
    let out = bin().arg("validate").arg(&good).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok"));

    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, "{ \"domain\": ").unwrap();
    let out = bin().arg("validate").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let e: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(e["stage"], "validate");

    let out = bin()
        .arg("validate")
        .arg(tmp.path().join("missing.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn schema_command_prints_the_config_schema() {
    let out = bin().arg("schema").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let s: Value = serde_json::from_slice(&out.stdout).unwrap();
    let props = s["properties"].as_object().unwrap();
    for key in [
        "domain",
        "time",
        "environment",
        "params",
        "strategies",
        "run",
        "tolerances",
        "output",
    ] {
        assert!(props.contains_key(key), "schema lacks {key}");
    }
    assert_eq!(s, ifd_lab::schema());
}
