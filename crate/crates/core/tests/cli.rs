mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use common::tiny_config;

struct Env {
    _tmp: tempfile::TempDir,
    root: std::path::PathBuf,
    cfg: String,
}

fn env() -> Env {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("tiny.cfg");
    tiny_config().save(&cfg).unwrap();
    Env {
        root: tmp.path().join("runs"),
        cfg: cfg.to_str().unwrap().to_string(),
        _tmp: tmp,
    }
}

impl Env {
    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_rewardloc"))
            .env("REWARDLOC_OUT", &self.root)
            .env("RUST_LOG", "warn")
            .args(args)
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) {
        let o = self.run(args);
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }

    fn path(&self, rel: &str) -> std::path::PathBuf {
        self.root.join(rel)
    }
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn list(dir: &Path) -> Vec<String> {
    fs::read_to_string(dir.join("list.txt")).unwrap().lines().map(String::from).collect()
}

#[test]
fn usage_errors_exit_with_one() {
    let e = env();
    assert_eq!(e.run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(e.run(&["train", "--optimizer", "sgd"]).status.code(), Some(1));
    assert_eq!(e.run(&["train", "--warmup", "x", "--no-warmup"]).status.code(), Some(1));
    assert_eq!(e.run(&["--help"]).status.code(), Some(0));
}

#[test]
fn gen_counts_refuses_reuse_and_is_reproducible() {
    let e = env();
    e.ok(&["gen", "--config", &e.cfg, "--count", "2"]);
    for split in ["train", "val", "shifted_test"] {
        assert_eq!(list(&e.path("data").join(split)).len(), 2);
    }
    let o = e.run(&["gen", "--config", &e.cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--overwrite"));

    let other = e.path("data2");
    e.ok(&["gen", "--config", &e.cfg, "--count", "2", "--out", other.to_str().unwrap()]);
    let a = e.path("data/val/val-0001");
    let b = other.join("val/val-0001");
    for f in ["groundtruth.txt", "00000001.png", "00000010.png"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let manifest = fs::read_to_string(e.path("data/manifest.txt")).unwrap();
    assert!(manifest.contains("command=gen") && manifest.contains("config_sha256="));
}

#[test]
fn train_without_warmup_names_the_expected_checkpoint() {
    let e = env();
    e.ok(&["gen", "--config", &e.cfg]);
    let o = e.run(&["train", "--config", &e.cfg]);
    assert_eq!(o.status.code(), Some(2));
    let expected = e.path("warmup/checkpoint/params.bin");
    assert!(stderr(&o).contains(expected.to_str().unwrap()), "{}", stderr(&o));
    // the ablation row without warmup trains from scratch
    e.ok(&["train", "--config", &e.cfg, "--no-warmup"]);
    assert!(e.path("train/checkpoint/params.bin").exists());
}

#[test]
fn pipeline_outputs_and_mismatches() {
    let e = env();
    e.ok(&["gen", "--config", &e.cfg]);
    e.ok(&["warmup", "--config", &e.cfg]);
    let log = fs::read_to_string(e.path("warmup/log.csv")).unwrap();
    assert!(log.starts_with("epoch,loss,mean_reward,mean_clip_iou,lr\n"));
    assert_eq!(log.lines().count(), 3);
    assert!(e.path("warmup/epoch_001/params.bin").exists());

    e.ok(&["train", "--config", &e.cfg, "--optimizer", "grpo"]);
    let o = e.run(&["train", "--config", &e.cfg, "--propagation", "deep-to-shallow", "--out", e.path("t2").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "warmup routing differs from the requested one");

    e.ok(&["track", "--dump-scoremaps"]);
    let names = list(&e.path("data/val"));
    for n in &names {
        assert!(e.path(&format!("track/{n}.txt")).exists());
        let maps = fs::read_dir(e.path(&format!("track/scoremaps/{n}"))).unwrap().count();
        assert_eq!(maps, 10, "one score map per frame");
    }

    let mut other = tiny_config();
    other.model.embed_dim = 16;
    let bad = e.path("bad.cfg");
    other.save(&bad).unwrap();
    let o = e.run(&["track", "--config", bad.to_str().unwrap(), "--out", e.path("t3").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("embed_dim"), "{}", stderr(&o));

    e.ok(&["eval"]);
    let csv = fs::read_to_string(e.path("eval/success.csv")).unwrap();
    assert_eq!(csv.lines().count(), 22);
    assert!(fs::read_to_string(e.path("eval/success.svg")).unwrap().contains("<polyline"));
}

#[test]
fn eval_of_ground_truth_and_order_invariance() {
    let e = env();
    e.ok(&["gen", "--config", &e.cfg]);
    let val = e.path("data/val");
    let results = e.path("gt-results");
    fs::create_dir_all(&results).unwrap();
    let names = list(&val);
    for n in &names {
        fs::copy(val.join(n).join("groundtruth.txt"), results.join(format!("{n}.txt"))).unwrap();
    }
    let r = results.to_str().unwrap();
    e.ok(&["eval", "--results", r, "--out", e.path("e1").to_str().unwrap()]);
    let report = fs::read_to_string(e.path("e1/report.txt")).unwrap();
    let get = |k: &str| -> f64 {
        report.lines().find_map(|l| l.strip_prefix(&format!("{k}="))).unwrap().parse().unwrap()
    };
    assert!((get("auc") - 20.0 / 21.0).abs() < 1e-12);
    assert_eq!(get("ao"), 1.0);

    let mut reversed = names.clone();
    reversed.reverse();
    fs::write(val.join("list.txt"), reversed.join("\n") + "\n").unwrap();
    e.ok(&["eval", "--results", r, "--out", e.path("e2").to_str().unwrap()]);
    assert_eq!(report, fs::read_to_string(e.path("e2/report.txt")).unwrap());

    // truncate two result files: both sequences are reported
    for n in &names[..2] {
        let p = results.join(format!("{n}.txt"));
        let text = fs::read_to_string(&p).unwrap();
        let short: Vec<&str> = text.lines().take(4).collect();
        fs::write(&p, short.join("\n") + "\n").unwrap();
    }
    let o = e.run(&["eval", "--results", r, "--out", e.path("e3").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    for n in &names[..2] {
        assert!(stderr(&o).contains(n.as_str()), "{}", stderr(&o));
    }
}
