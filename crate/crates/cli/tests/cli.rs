use std::fs;
use std::path::Path;

use assert_cmd::Command;
use fishswim_core::calibrate::{run_excitation, Excitation, ServoParams};
use fishswim_core::harness::RunConfig;

const SANITY: &str = r#"
[env]
kind = "sanity"

[sac]
hidden = [32, 32]
batch_size = 32
warmup_steps = 100
checkpoint_every = 10

[training]
total_steps = 2500
"#;

/// Small pool and short horizon; same network shape as `SANITY`.
const SMALL_FISH: &str = r#"
[env]
grid = 48
domain_size = 0.9
spawn_margin = 0.2

[sac]
hidden = [32, 32]

[eval]
max_time = 0.4
episodes = 2

[calibration]
grid_points = 2
latency_max = 0.04
refine_sweeps = 1
"#;

fn fishswim() -> Command {
    Command::cargo_bin("fishswim").unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn train(cfg: &str, out: &Path, seed: &str) {
    fishswim()
        .args(["train", "--config", cfg, "--seed", seed, "--out"])
        .arg(out)
        .assert()
        .success();
}

#[test]
fn train_writes_logs_checkpoints_and_snapshots() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "run.toml", SANITY);
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    train(&cfg, &a, "7");
    train(&cfg, &b, "7");
    train(&cfg, &c, "8");
    let ma = fs::read(a.join("metrics.jsonl")).unwrap();
    assert!(!ma.is_empty());
    assert_eq!(ma, fs::read(b.join("metrics.jsonl")).unwrap());
    assert_ne!(ma, fs::read(c.join("metrics.jsonl")).unwrap());
    assert!(a.join("final.ckpt").exists());
    assert!(a.join("ckpt_000010.bin").exists());
    let snap = fs::read_to_string(a.join("eval_000010.jsonl")).unwrap();
    assert_eq!(snap.lines().count(), 10);
    for line in snap.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(!v["trajectory"].as_array().unwrap().is_empty());
    }
}

#[test]
fn eval_and_compare_on_a_small_pool() {
    let tmp = tempfile::tempdir().unwrap();
    let sanity = write_config(tmp.path(), "sanity.toml", SANITY);
    let fish = write_config(tmp.path(), "fish.toml", SMALL_FISH);
    let run = tmp.path().join("run");
    train(&sanity, &run, "1");
    let ckpt = run.join("final.ckpt");

    let ev = tmp.path().join("eval");
    fishswim()
        .args([
            "eval", "--config", &fish, "--task", "position", "--seed", "3", "--out",
        ])
        .arg(&ev)
        .arg("--checkpoint")
        .arg(&ckpt)
        .assert()
        .success();
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(ev.join("eval.json")).unwrap()).unwrap();
    assert_eq!(report["controller"], "policy");
    assert_eq!(report["episodes"].as_array().unwrap().len(), 2);
    assert!(ev.join("trajectories/episode_001.jsonl").exists());

    let base = tmp.path().join("base");
    fishswim()
        .args(["eval", "--config", &fish, "--task", "uturn", "--out"])
        .arg(&base)
        .assert()
        .success();
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(base.join("eval.json")).unwrap()).unwrap();
    assert_eq!(report["controller"], "baseline");

    let cmp = tmp.path().join("cmp");
    fishswim()
        .args([
            "compare", "--config", &fish, "--task", "uturn", "--trials", "2", "--out",
        ])
        .arg(&cmp)
        .arg("--checkpoint")
        .arg(&ckpt)
        .assert()
        .success();
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(cmp.join("compare.json")).unwrap()).unwrap();
    assert_eq!(report["differences"].as_array().unwrap().len(), 2);
}

#[test]
fn checkpoint_shape_mismatch_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let sanity = write_config(tmp.path(), "sanity.toml", SANITY);
    let run = tmp.path().join("run");
    train(&sanity, &run, "1");
    let other = write_config(
        tmp.path(),
        "other.toml",
        "[sac]\nhidden = [16]\n[eval]\nmax_time = 0.2\n",
    );
    fishswim()
        .args(["eval", "--config", &other, "--out"])
        .arg(tmp.path().join("e"))
        .arg("--checkpoint")
        .arg(run.join("final.ckpt"))
        .assert()
        .failure()
        .stderr(predicates::str::contains("checkpoint"));
}

#[test]
fn config_errors_name_line_and_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.toml", "[sac]\ngamma = 0.9\nbatchsize = 3\n");
    let out = fishswim()
        .args(["train", "--config", &cfg, "--out"])
        .arg(tmp.path().join("o"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("bad.toml") && err.contains("line 3") && err.contains("batchsize"),
        "{err}"
    );
}

#[test]
fn calibrate_recovers_synthetic_reference_and_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let fish = write_config(tmp.path(), "fish.toml", SMALL_FISH);
    let cfg = RunConfig::load(Path::new(&fish)).unwrap();
    let setup = cfg.calibration.setup().unwrap();
    let refs = tmp.path().join("refs");
    fs::create_dir_all(&refs).unwrap();
    // on the coarse grid so the search can land on it exactly
    let truth = ServoParams {
        kp: setup.kp_grid[1],
        kd: setup.kd_grid[0],
        latency: 0.04,
    };
    let ex = Excitation::step(20f64.to_radians(), 0.3, 1.0);
    let tr = run_excitation(&setup, &ex, &truth).unwrap();
    tr.write_csv(fs::File::create(refs.join("step.csv")).unwrap())
        .unwrap();

    let out = tmp.path().join("cal");
    fishswim()
        .args(["calibrate", "--config", &fish, "--refs"])
        .arg(&refs)
        .arg("--out")
        .arg(&out)
        .assert()
        .success();
    let report = fishswim_core::calibrate::CalibrationReport::from_json(
        &fs::read_to_string(out.join("calibration.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report.params, truth);
    assert!(report.total_rmse <= report.initial_rmse);
    let servo = fs::read_to_string(out.join("servo.toml")).unwrap();
    let merged = RunConfig::from_toml_str(&servo, "servo.toml").unwrap();
    assert_eq!(merged.env.servo, Some(report.params));

    let empty = tmp.path().join("empty");
    fs::create_dir_all(&empty).unwrap();
    fishswim()
        .args(["calibrate", "--config", &fish, "--refs"])
        .arg(&empty)
        .arg("--out")
        .arg(tmp.path().join("cal2"))
        .assert()
        .failure()
        .stderr(predicates::str::contains("data error"));
}

#[test]
fn dump_field_writes_every_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let fish = write_config(tmp.path(), "fish.toml", SMALL_FISH);
    let out = tmp.path().join("dump");
    fishswim()
        .args(["dump-field", "--config", &fish, "--steps", "5", "--out"])
        .arg(&out)
        .assert()
        .success();
    let field = fs::read_to_string(out.join("field.csv")).unwrap();
    assert_eq!(field.lines().count(), 48 * 48 + 1);
    assert!(
        fs::read_to_string(out.join("markers.csv"))
            .unwrap()
            .lines()
            .count()
            > 10
    );
}
