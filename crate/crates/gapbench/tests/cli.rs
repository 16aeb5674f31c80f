use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gapbench::ExperimentConfig;
use tempfile::TempDir;

const SMALL_FINITE: &str = r#"
kind = "finite-gap"
seed = 7
ns = [16, 32, 64, 128]
trials = 30
"#;

fn gapbench(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_gapbench"));
    cmd.args(args).env_remove(gapbench::THREADS_ENV);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path
}

fn run_config(config: &Path, out: &Path, extra: &[&str], env: &[(&str, &str)]) -> Output {
    let mut args = vec!["run", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    gapbench(&args, env)
}

fn report_without_timing(dir: &Path) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("timing");
    v
}

#[test]
fn kinds_lists_every_kind() {
    let o = gapbench(&["kinds"], &[]);
    assert!(o.status.success());
    let text = stdout(&o);
    for k in gapbench::Kind::ALL {
        assert!(text.contains(k.name()), "{text}");
    }
}

#[test]
fn describe_prints_a_loadable_default() {
    let o = gapbench(&["describe", "finite-gap"], &[]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("ℓ* ≥ 3"));
    let toml = text
        .split("Default configuration:\n\n")
        .nth(1)
        .expect("default section");
    let parsed = ExperimentConfig::parse(toml, Path::new("describe")).unwrap();
    assert_eq!(parsed.kind(), gapbench::Kind::FiniteGap);
    parsed.validate().unwrap();
}

#[test]
fn unknown_kind_suggests_the_closest() {
    let o = gapbench(&["describe", "finite-gaps"], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("did you mean finite-gap"), "{}", stderr(&o));
}

#[test]
fn shallow_depth_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "shallow.toml",
        "kind = \"finite-gap\"\n[params]\nalpha = 2.0\np = 2.0\nd = 2\n[params.ell]\nkind = \"constant\"\nvalue = 2\n",
    );
    let o = run_config(&cfg, &dir.path().join("out"), &[], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("ℓ* ≥ 3"), "{}", stderr(&o));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn unparsable_config_and_bad_thread_env_exit_two() {
    let dir = TempDir::new().unwrap();
    let broken = write_config(&dir, "broken.toml", "kind = [");
    assert_eq!(run_config(&broken, dir.path(), &[], &[]).status.code(), Some(2));
    let ok = write_config(&dir, "ok.toml", SMALL_FINITE);
    let o = run_config(&ok, &dir.path().join("out"), &[], &[(gapbench::THREADS_ENV, "many")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(gapbench::THREADS_ENV));
}

#[test]
fn reports_are_identical_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "small.toml", SMALL_FINITE);
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert_eq!(run_config(&cfg, &a, &["--threads", "1"], &[]).status.code(), Some(0));
    assert_eq!(run_config(&cfg, &b, &["--threads", "3"], &[]).status.code(), Some(0));
    assert_eq!(
        run_config(&cfg, &c, &[], &[(gapbench::THREADS_ENV, "2")]).status.code(),
        Some(0)
    );
    let ra = report_without_timing(&a);
    assert_eq!(ra, report_without_timing(&b));
    assert_eq!(ra, report_without_timing(&c));
    for file in ["curve.csv", "plotdata.csv"] {
        assert_eq!(
            fs::read(a.join(file)).unwrap(),
            fs::read(b.join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn verify_accepts_reports_and_rejects_tampering() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "small.toml", SMALL_FINITE);
    let out = dir.path().join("out");
    assert!(run_config(&cfg, &out, &[], &[]).status.success());
    let report = out.join("report.json");
    assert_eq!(
        gapbench(&["verify", report.to_str().unwrap()], &[]).status.code(),
        Some(0)
    );

    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    v["config"]["trials"] = serde_json::json!(31);
    let tampered = dir.path().join("tampered.json");
    fs::write(&tampered, serde_json::to_string(&v).unwrap()).unwrap();
    let o = gapbench(&["verify", tampered.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn failed_verdict_exits_one() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "strict.toml", &format!("{SMALL_FINITE}zero_tolerance = 1e-6\n"));
    let o = run_config(&cfg, &dir.path().join("out"), &[], &[]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn protocol_failures_exit_three() {
    let dir = TempDir::new().unwrap();
    let text = format!(
        "{SMALL_FINITE}\n[[algorithms]]\nkind = \"external\"\ncommand = [\"@self\", \"fixture-client\", \"short\"]\n"
    );
    let cfg = write_config(&dir, "short.toml", &text);
    let out = dir.path().join("out");
    let o = run_config(&cfg, &out, &[], &[]);
    assert_eq!(o.status.code(), Some(3), "{}{}", stdout(&o), stderr(&o));
    let report = fs::read_to_string(out.join("report.json")).unwrap();
    assert!(report.contains("PROTO_POINTCOUNT"));
}

#[test]
fn protocol_fixture_matches_the_shipped_vectors() {
    let shipped = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/protocol-vectors.jsonl");
    let o = gapbench(&["protocol-fixture"], &[]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), fs::read_to_string(shipped).unwrap());
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 6);
}
