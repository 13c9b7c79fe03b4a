//! End-to-end tests of the `nullcone` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nullcone::RunManifest;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nullcone"))
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, text).unwrap();
    p
}

fn invoke(cmd: &str, config: &Path, out: &Path, threads: Option<&str>) -> Output {
    let mut c = bin();
    c.args([cmd, "--config"]).arg(config).arg("--out").arg(out);
    if let Some(t) = threads {
        c.env("NULLCONE_THREADS", t);
    }
    c.output().unwrap()
}

fn manifest(out: &Path) -> RunManifest {
    serde_json::from_str(&fs::read_to_string(out.join("run.json")).unwrap()).unwrap()
}

const VERIFY: &str = r#"{"model":{"type":"schwarzschild","mass":1.0},"grid":{"bandlimit":24},
  "initial":{"profile":"perturbed","sigma":20.0,"modes":[{"l":2,"m":1,"amplitude":0.4}],"random":{"degree":5,"amplitude":0.5}},
  "task":{"kind":"verify"},"seed":3}"#;

#[test]
fn verify_on_schwarzschild_passes_with_three_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), VERIFY);
    let out = dir.path().join("out");
    let res = invoke("verify", &cfg, &out, None);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let m = manifest(&out);
    assert!(m.completed);
    assert_eq!(m.status, 0);
    let reports: Vec<_> = m.outputs.iter().filter(|f| f.starts_with("report_")).collect();
    assert_eq!(reports.len(), 3);
    for name in ["gauss", "codazzi", "simon"] {
        let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join(format!("report_{name}.json"))).unwrap()).unwrap();
        for key in ["name", "max_residual", "scale", "relative", "bandlimit"] {
            assert!(r.get(key).is_some(), "{name} lacks {key}");
        }
    }
}

#[test]
fn flow_hitting_step_budget_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"model":{"type":"schwarzschild","mass":1.0},"grid":{"bandlimit":12},
            "initial":{"profile":"perturbed","sigma":20.0,"modes":[{"l":2,"m":0,"amplitude":0.5}]},
            "task":{"kind":"flow","settings":{"max_steps":5,"cadence":2}}}"#,
    );
    let out = dir.path().join("out");
    let res = invoke("flow", &cfg, &out, None);
    assert_eq!(res.status.code(), Some(2));
    let m = manifest(&out);
    assert_eq!(m.reason.as_deref(), Some("max_steps"));
    assert_eq!(m.termination.as_deref(), Some("max_steps"));
    for f in ["series.csv", "decay.csv", "field_t0000.sphere", "report_flow.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let series = fs::read_to_string(out.join("series.csv")).unwrap();
    assert!(series.starts_with("step,t,area,rho,mean_h2,l2_dev,sup_dev,a_x,a_y,a_z,a_tf_scaled,grad_a_tf_scaled"));
    assert_eq!(series.lines().count(), 1 + 4);
}

fn read_outputs(out: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "run.json")
        .collect();
    files.sort();
    files.into_iter().map(|n| (n.clone(), fs::read(out.join(&n)).unwrap())).collect()
}

#[test]
fn identical_config_and_seed_give_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"model":{"type":"schwarzschild","mass":1.0},"grid":{"bandlimit":12},
            "initial":{"profile":"perturbed","sigma":20.0,"random":{"degree":4,"amplitude":0.5}},
            "task":{"kind":"flow","settings":{"max_steps":40,"cadence":10}}}"#,
    );
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    invoke("flow", &cfg, &a, Some("1"));
    invoke("flow", &cfg, &b, Some("3"));
    let (fa, fb) = (read_outputs(&a), read_outputs(&b));
    assert!(!fa.is_empty());
    assert_eq!(fa, fb);
    let c = dir.path().join("c");
    bin().args(["flow", "--config"]).arg(&cfg).arg("--out").arg(&c).args(["--seed", "9"]).output().unwrap();
    assert_ne!(read_outputs(&c), fa);
    assert_eq!(manifest(&c).seed, 9);
}

#[test]
fn concurrent_foliation_is_schedule_independent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"model":{"type":"schwarzschild","mass":1.0},"grid":{"bandlimit":10},
            "initial":{"profile":"perturbed","sigma":15.0,"modes":[{"l":2,"m":1,"amplitude":0.3}]},
            "task":{"kind":"foliate","foliation":{"sigma_min":15.0,"sigma_max":19.0,"continuation":"from_first_leaf"}}}"#,
    );
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(invoke("foliate", &cfg, &a, Some("1")).status.code(), Some(0));
    assert_eq!(invoke("foliate", &cfg, &b, Some("4")).status.code(), Some(0));
    assert_eq!(read_outputs(&a), read_outputs(&b));
    let series = fs::read_to_string(a.join("series.csv")).unwrap();
    assert_eq!(series.lines().count(), 1 + 5);
}

#[test]
fn solve_writes_log_and_final_surface() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"model":{"type":"schwarzschild","mass":1.0},"grid":{"bandlimit":12},
            "initial":{"profile":"perturbed","sigma":20.0,"modes":[{"l":2,"m":0,"amplitude":0.5}]},
            "task":{"kind":"solve"}}"#,
    );
    let out = dir.path().join("out");
    assert_eq!(invoke("solve", &cfg, &out, None).status.code(), Some(0));
    let log = fs::read_to_string(out.join("series.csv")).unwrap();
    assert!(log.starts_with("iter,residual,c,damping"));
    assert!(out.join("field_t0001.sphere").exists());
}

#[test]
fn configuration_errors_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"model":{"type":"minkowski"},"grid":{"bandlimit":-1},"task":{"kind":"verify"}}"#);
    let res = invoke("verify", &cfg, &dir.path().join("out"), None);
    assert_eq!(res.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&res.stderr).contains("grid.bandlimit"));

    let cfg = write_config(dir.path(), r#"{"model":{"type":"minkowski"},"grid":{"bandlimit":16},"task":{"kind":"verify"}}"#);
    let res = invoke("flow", &cfg, &dir.path().join("out2"), None);
    assert_eq!(res.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&res.stderr).contains("task.kind"));

    let res = invoke("verify", &cfg, &dir.path().join("out3"), Some("zero"));
    assert_eq!(res.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&res.stderr).contains("NULLCONE_THREADS"));
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for e in fs::read_dir(dir).unwrap() {
        let text = fs::read_to_string(e.unwrap().path()).unwrap();
        nullcone::parse_config(&text).unwrap();
        n += 1;
    }
    assert!(n >= 4);
}
