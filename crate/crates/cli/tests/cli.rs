use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use reagent::data::{generate_shape, save_cloud, ShapeKind};
use reagent::model::{self, AgentParams, Arch};

const TINY_CONFIG: &str = r#"{
    "dataset": {"kinds": ["two-box", "cube"], "train_shapes": 3, "test_shapes": 4},
    "corruption": {"n_total": 80, "n_sample": 40},
    "train": {"arch": {"encoder": [4, 8, 16], "head": [8, 4], "value_hidden": 4},
              "epochs": 2, "batch_observations": 2, "n_trajectories": 2},
    "checkpoint_every": 1
}"#;

fn reagent(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reagent")).args(args).output().unwrap()
}

fn s(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("config.json"), config).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn config(&self) -> String {
        s(&self.path("config.json"))
    }

    fn checkpoint(&self) -> String {
        let p = self.path("init.ragt");
        model::save(&AgentParams::init(Arch::TINY, 0), &p).unwrap();
        s(&p)
    }

    fn generate(&self) -> String {
        let data = s(&self.path("data"));
        let out = reagent(&["generate", "--config", &self.config(), "--out", &data]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        data
    }
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn column(rows: &[Vec<String>], method: &str, name: &str) -> f64 {
    let col = rows[0].iter().position(|c| c == name).unwrap();
    rows.iter().find(|r| r[0] == method).unwrap()[col].parse().unwrap()
}

#[test]
fn generate_writes_both_splits() {
    let ws = Workspace::new(TINY_CONFIG);
    let data = ws.generate();
    let count = |split: &str| std::fs::read_dir(Path::new(&data).join(split)).unwrap().count();
    assert_eq!(count("train"), 3);
    assert_eq!(count("test"), 4);
}

#[test]
fn train_writes_log_and_checkpoints() {
    let ws = Workspace::new(TINY_CONFIG);
    let data = ws.generate();
    let run = ws.path("run");
    let out = reagent(&["train", "--config", &ws.config(), "--data", &data, "--out", &s(&run)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let log = std::fs::read_to_string(run.join("train_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);
    for line in log.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["total_loss"].as_f64().unwrap().is_finite());
    }
    assert!(run.join("checkpoints/epoch-0002.ragt").exists());
    model::load_expecting(run.join("model.ragt"), Arch::TINY).unwrap();
}

#[test]
fn register_identical_clouds_is_near_identity() {
    let ws = Workspace::new(TINY_CONFIG);
    let cloud = ws.path("a.xyz");
    save_cloud(&generate_shape(ShapeKind::TwoBox, 64, 1).unwrap(), &cloud).unwrap();
    let out = reagent(&[
        "register", "--config", &ws.config(), "--source", &s(&cloud), "--target", &s(&cloud), "--ckpt", &ws.checkpoint(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    // An untrained policy still only has ten small steps to wander with.
    let t: Vec<f64> = serde_json::from_value(v["translation"].clone()).unwrap();
    assert!(t.iter().all(|x| x.abs() <= 10.0 * 0.27));
    let r: Vec<Vec<f64>> = serde_json::from_value(v["rotation"].clone()).unwrap();
    assert_eq!(r.len(), 3);
    assert_eq!(v["steps"], 10);
}

#[test]
fn trace_has_distributions_for_every_step() {
    let ws = Workspace::new(TINY_CONFIG);
    let cloud = ws.path("a.xyz");
    save_cloud(&generate_shape(ShapeKind::Cone, 48, 2).unwrap(), &cloud).unwrap();
    let out = reagent(&[
        "trace", "--config", &ws.config(), "--source", &s(&cloud), "--target", &s(&cloud), "--ckpt", &ws.checkpoint(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 10);
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let dist: Vec<Vec<f64>> = serde_json::from_value(v["distributions"].clone()).unwrap();
        assert_eq!(dist.len(), 6);
        for row in dist {
            assert_eq!(row.len(), 11);
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn eval_is_byte_identical_across_runs() {
    let ws = Workspace::new(TINY_CONFIG);
    let data = ws.generate();
    let ckpt = ws.checkpoint();
    let run = || {
        let out = reagent(&[
            "eval", "--config", &ws.config(), "--data", &data, "--methods", "icp,agent,expert", "--seed", "7", "--ckpt", &ckpt,
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let rows = csv_rows(&String::from_utf8(out.stdout).unwrap());
        rows.into_iter().map(|mut r| {
            r.pop();
            r
        })
        .collect::<Vec<_>>()
    };
    let a = run();
    assert_eq!(a, run());
    assert_eq!(
        a[0],
        ["method", "mae_r", "mae_t", "iso_r", "iso_t", "adi_auc", "modified_chamfer"]
    );
    assert_eq!(a.len(), 4);
}

#[test]
fn expert_oracle_and_icp_on_small_offsets() {
    let ws = Workspace::new(
        r#"{
        "dataset": {"kinds": ["two-box", "cube"], "train_shapes": 1, "test_shapes": 12},
        "corruption": {"n_total": 200, "n_sample": 200, "rot_max_deg": 2.0, "trans_max": 0.02,
                       "jitter_sigma": 0.0, "jitter_clip": 0.0}
    }"#,
    );
    let data = ws.generate();
    let out = reagent(&["eval", "--config", &ws.config(), "--data", &data, "--methods", "icp,expert"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&String::from_utf8(out.stdout).unwrap());
    assert!(column(&rows, "expert", "iso_r") < 0.0033f64.to_degrees());
    assert!(column(&rows, "icp", "adi_auc") > 0.99);
}

#[test]
fn unknown_config_key_exits_1_and_names_it() {
    let ws = Workspace::new(r#"{"train": {"epocs": 3}}"#);
    let out = reagent(&["train", "--config", &ws.config(), "--data", "x", "--out", "y"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epocs"));
}

#[test]
fn empty_dataset_exits_1() {
    let ws = Workspace::new(TINY_CONFIG);
    std::fs::create_dir_all(ws.path("empty/test")).unwrap();
    let out = reagent(&["eval", "--config", &ws.config(), "--data", &s(&ws.path("empty")), "--methods", "icp"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn agent_without_checkpoint_exits_1() {
    let ws = Workspace::new(TINY_CONFIG);
    let data = ws.generate();
    let out = reagent(&["eval", "--config", &ws.config(), "--data", &data, "--methods", "agent"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn io_failures_exit_2() {
    let ws = Workspace::new(TINY_CONFIG);
    let missing = s(&ws.path("nope.xyz"));
    let out = reagent(&["register", "--config", &ws.config(), "--source", &missing, "--target", &missing, "--ckpt", &ws.checkpoint()]);
    assert_eq!(out.status.code(), Some(2));
    let out = reagent(&["train", "--config", &s(&ws.path("missing.json"))]);
    assert_eq!(out.status.code(), Some(2));
    let bad = ws.path("bad.xyz");
    std::fs::write(&bad, "1 2 3\n4 five 6\n").unwrap();
    let out = reagent(&["register", "--config", &ws.config(), "--source", &s(&bad), "--target", &s(&bad), "--ckpt", &ws.checkpoint()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn usage_errors_exit_1_and_help_exits_0() {
    assert_eq!(reagent(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(reagent(&["eval", "--bogus"]).status.code(), Some(1));
    assert_eq!(reagent(&["--help"]).status.code(), Some(0));
    assert_eq!(reagent(&["eval", "--methods", "icp,warp"]).status.code(), Some(1));
}
