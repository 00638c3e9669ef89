use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mvsmooth"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Deterministic rows: three correlated responses and three covariates.
fn write_data(path: &Path, n: usize) {
    let mut text = String::from("y1,y2,y3,x1,x2,x3\n");
    let mut s = 12345u64;
    let mut u = || {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (s >> 11) as f64 / (1u64 << 53) as f64
    };
    for _ in 0..n {
        let (x1, x2, x3) = (u(), u(), u());
        let e = u() - 0.5;
        let y1 = (4.0 * x1).sin() + e + 0.3 * (u() - 0.5);
        let y2 = x2 + 0.8 * e + 0.3 * (u() - 0.5);
        let y3 = 0.5 * x1 + 0.3 * (u() - 0.5);
        text.push_str(&format!("{y1},{y2},{y3},{x1},{x2},{x3}\n"));
    }
    fs::write(path, text).unwrap();
}

fn write_config(dir: &Path, extra: &str) -> String {
    let cfg = dir.join("run.toml");
    fs::write(
        &cfg,
        format!(
            r#"data = "data.csv"
responses = ["y1", "y2", "y3"]
seed = 11
[[mean]]
column = "x1"
kind = "smooth"
basis = 4
[[mean]]
column = "x2"
[[variance]]
column = "x3"
{extra}"#
        ),
    )
    .unwrap();
    cfg.display().to_string()
}

const SHORT: &str = "[schedule]\nsweeps = 400\nburn-in = 200\nthin = 2\n";

#[test]
fn fit_then_summarize_reproduces_tables() {
    let dir = tempfile::tempdir().unwrap();
    write_data(&dir.path().join("data.csv"), 17);
    let cfg = write_config(dir.path(), SHORT);
    let out = dir.path().join("out");
    let out_s = out.display().to_string();
    let o = run(&["fit", "--config", &cfg, "--out", &out_s]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("read 17 rows x 6 columns"));
    let draws = fs::read_to_string(out.join("draws.csv")).unwrap();
    assert_eq!(draws.lines().count(), 1 + 100);
    let names = ["curves.csv", "inclusion.csv", "correlations.csv", "precision.csv"];
    let before: Vec<Vec<u8>> = names.iter().map(|f| fs::read(out.join(f)).unwrap()).collect();
    for f in names {
        fs::remove_file(out.join(f)).unwrap();
    }
    let o = run(&["summarize", "--config", &cfg, "--out", &out_s]);
    assert!(o.status.success(), "{}", stderr(&o));
    let after: Vec<Vec<u8>> = names.iter().map(|f| fs::read(out.join(f)).unwrap()).collect();
    assert_eq!(before, after);
    let manifest = fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"seed\": 11"));
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    write_data(&dir.path().join("data.csv"), 30);
    let cfg = write_config(dir.path(), &format!("[correlation]\nmodel = \"grouped-variables\"\ngroups = 2\n{SHORT}"));
    let mut files = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = run(&["fit", "--config", &cfg, "--seed", "3", "--out", &out.display().to_string()]);
        assert!(o.status.success(), "{}", stderr(&o));
        files.push((fs::read(out.join("draws.csv")).unwrap(), fs::read(out.join("manifest.json")).unwrap()));
    }
    assert_eq!(files[0], files[1]);
    let out = dir.path().join("c");
    run(&["fit", "--config", &cfg, "--seed", "4", "--out", &out.display().to_string()]);
    assert_ne!(fs::read(out.join("draws.csv")).unwrap(), files[0].0);
}

#[test]
fn config_errors_stop_before_sampling() {
    let dir = tempfile::tempdir().unwrap();
    write_data(&dir.path().join("data.csv"), 17);
    let out = dir.path().join("out");
    let cases = [
        ("[correlation]\nmodel = \"banded\"\n", "grouped-variables"),
        ("[schedule]\nsweeps = 10\nburn-in = 20\n", "schedule.burn-in"),
        ("[priors]\nc-beta = { shape = 1.0 }\n", "priors.c-beta"),
        ("[[mean]]\ncolumn = \"age\"\n", "age"),
    ];
    for (extra, needle) in cases {
        let cfg = write_config(dir.path(), extra);
        let o = run(&["fit", "--config", &cfg, "--out", &out.display().to_string()]);
        assert!(!o.status.success());
        assert!(stderr(&o).contains(needle), "{extra}: {}", stderr(&o));
        assert!(!out.join("draws.csv").exists());
    }
}

#[test]
fn bad_cells_are_located() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("data.csv"), "y1,y2,y3,x1,x2,x3\n1,2,3,4,5,6\n1,2,x,4,5,6\n").unwrap();
    let cfg = write_config(dir.path(), SHORT);
    let o = run(&["fit", "--config", &cfg, "--out", &dir.path().join("o").display().to_string()]);
    assert!(!o.status.success());
    let e = stderr(&o);
    assert!(e.contains("y3") && e.contains('3'), "{e}");
}

#[test]
fn exam_shaped_file_is_read() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("mech,vect,alg,anl,stat\n");
    for i in 0..88 {
        let f = i as f64;
        text.push_str(&format!("{},{},{},{},{}\n", (f * 0.37).sin(), (f * 0.11).cos(), f % 7.0, (f * 0.5).sin() + f % 3.0, f));
    }
    fs::write(dir.path().join("exam.csv"), text).unwrap();
    let cfg = dir.path().join("exam.toml");
    fs::write(
        &cfg,
        "data = \"exam.csv\"\nresponses = [\"mech\", \"vect\", \"alg\", \"anl\", \"stat\"]\n[schedule]\nsweeps = 60\nburn-in = 30\n",
    )
    .unwrap();
    let o = run(&["fit", "--config", &cfg.display().to_string(), "--out", &dir.path().join("o").display().to_string()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("read 88 rows x 5 columns"));
    let prec = fs::read_to_string(dir.path().join("o/precision.csv")).unwrap();
    assert_eq!(prec.lines().count(), 1 + 25);
}

#[test]
fn adapted_acceptance_lands_in_band() {
    let dir = tempfile::tempdir().unwrap();
    write_data(&dir.path().join("data.csv"), 60);
    let cfg = write_config(dir.path(), "[schedule]\nsweeps = 12000\nburn-in = 10000\nthin = 10\n");
    let out = dir.path().join("out");
    let o = run(&["fit", "--config", &cfg, "--out", &out.display().to_string()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    for a in m["report"]["acceptance"].as_array().unwrap() {
        if a["adapted"].as_bool().unwrap() {
            let r = a["burn_in_tail"].as_f64().unwrap();
            assert!((0.15..=0.30).contains(&r), "{}: {r}", a["name"]);
        }
    }
}

#[test]
fn simulate_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.toml");
    fs::write(
        &cfg,
        "seed = 5\n[schedule]\nsweeps = 200\nburn-in = 100\nthin = 2\n[simulate]\nn = [30]\nrho = [0.5]\ndims = [1, 2]\nreplicates = 2\n",
    )
    .unwrap();
    let out = dir.path().join("sim");
    let o = run(&["simulate", "--config", &cfg.display().to_string(), "--out", &out.display().to_string()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let t = fs::read_to_string(out.join("simulation.csv")).unwrap();
    assert!(t.contains("# relative bias (%)"));
    assert!(t.contains("1,30,1,100.00"));
    assert!(out.join("simulation.json").exists());
}
