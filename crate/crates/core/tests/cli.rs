use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_finsler-forge"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn command_of(cfg: &Path) -> String {
    let text = std::fs::read_to_string(cfg).unwrap();
    let line = text.lines().find(|l| l.starts_with("command")).expect("example configs name their command");
    line.split('"').nth(1).unwrap().to_string()
}

fn run(command: &str, cfg: &Path, out: &Path, extra: &[&str]) -> (i32, String, String) {
    let o = bin()
        .arg(command)
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .args(extra)
        .env_remove("FINSLER_FORGE_THREADS")
        .output()
        .unwrap();
    (o.status.code().unwrap(), String::from_utf8_lossy(&o.stdout).into(), String::from_utf8_lossy(&o.stderr).into())
}

#[test]
fn every_example_config_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut seen = 0;
    for entry in std::fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("toml") {
            continue;
        }
        let name = path.file_stem().unwrap().to_str().unwrap().to_string();
        let cmd = command_of(&path);
        let (code, _, err) = run(&cmd, &path, &dir.path().join(&name), &[]);
        let expected = if name.ends_with("perturbed") { 1 } else { 0 };
        assert_eq!(code, expected, "{name}: {err}");
        let csv = std::fs::read_to_string(dir.path().join(&name).join(format!("{cmd}.csv"))).unwrap();
        assert!(csv.lines().count() > 1, "{name}");
        seen += 1;
    }
    assert!(seen >= 7);
}

#[test]
fn perturbed_model_names_the_equation() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = run("verify", &configs().join("verify_perturbed.toml"), dir.path(), &[]);
    assert_eq!(code, 1);
    assert!(err.contains("ricci_3_3"), "{err}");
    let csv = std::fs::read_to_string(dir.path().join("verify.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("ricci_3_3,") && l.contains(",fail,")));
    // a loose tolerance lets the same model pass
    let (code, _, _) = run("verify", &configs().join("verify_perturbed.toml"), dir.path(), &["--tolerance", "1"]);
    assert_eq!(code, 0);
}

#[test]
fn outputs_are_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    for cfg in ["verify.toml", "cosmo-classify.toml", "curvature.toml"] {
        let path = configs().join(cfg);
        let cmd = command_of(&path);
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        assert_eq!(run(&cmd, &path, &a, &["--threads", "1"]).0, 0);
        assert_eq!(run(&cmd, &path, &b, &["--threads", "3"]).0, 0);
        let file = format!("{cmd}.csv");
        assert_eq!(std::fs::read(a.join(&file)).unwrap(), std::fs::read(b.join(&file)).unwrap(), "{cfg}");
    }
}

#[test]
fn malformed_expression_exits_2_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("verify.toml")).unwrap();
    let bad: String = text
        .lines()
        .map(|l| if l.starts_with("psi") { "psi = \"sin(\"".to_string() } else { l.to_string() })
        .collect::<Vec<_>>()
        .join("\n");
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, bad).unwrap();
    let (code, _, err) = run("verify", &cfg, dir.path(), &[]);
    assert_eq!(code, 2);
    assert!(err.contains("model.psi:1:5"), "{err}");

    std::fs::write(&cfg, "spec_version = 1\n[cosmo\n").unwrap();
    let (code, _, err) = run("cosmo-evolve", &cfg, dir.path(), &[]);
    assert_eq!(code, 2);
    assert!(err.contains("bad.toml:2:"), "{err}");
}

#[test]
fn mismatched_command_and_bad_threads() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, _) = run("soliton", &configs().join("verify.toml"), dir.path(), &[]);
    assert_eq!(code, 2);
    let o = bin()
        .args(["soliton", "--config"])
        .arg(configs().join("soliton.toml"))
        .arg("--out")
        .arg(dir.path())
        .env("FINSLER_FORGE_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = bin()
        .args(["soliton", "--threads", "2", "--config"])
        .arg(configs().join("soliton.toml"))
        .arg("--out")
        .arg(dir.path())
        .env("FINSLER_FORGE_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "the flag wins over the environment");
}

#[test]
fn single_sample_trajectory_has_seven_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("one.toml");
    std::fs::write(&cfg, "spec_version = 1\n[cosmo]\nhh = 0.5\nvh = 0.5\nt1 = 0.0\ndt = 0.1\n").unwrap();
    assert_eq!(run("cosmo-evolve", &cfg, dir.path(), &[]).0, 0);
    let text = std::fs::read_to_string(dir.path().join("cosmo-evolve.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "t,hH,vH,gamma,ha,va,rho");
    assert_eq!(lines[1].split(',').count(), 7);
}

#[test]
fn model_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("m.toml");
    // slope of the profile vanishes: the generator refuses it
    std::fs::write(
        &cfg,
        "spec_version = 1\n[model]\nkind = \"sol1\"\npsi = \"0\"\nf = \"1\"\n[points]\nkind = \"list\"\npoints = [[0.1, 0.2, 0.3, 0.4]]\n",
    )
    .unwrap();
    let (code, _, err) = run("verify", &cfg, dir.path(), &[]);
    assert_eq!(code, 3, "{err}");
}
