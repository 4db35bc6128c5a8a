use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use nalgebra::{DMatrix, DVector};
use softclik::dataset::{Dataset, DatasetMeta};
use softclik::neuralop::{AffineMap, OperatorNet};
use softclik::rng::Rng;
use softclik::trainer::save_checkpoint;
use softclik::{ActuationBox, ShapeModel};
use tempfile::TempDir;

fn softclik(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_softclik"))
        .current_dir(dir)
        .args(args)
        .env_remove("SOFTCLIK_THREADS")
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn value(out: &str, key: &str) -> f64 {
    out.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no `{key}=` in output:\n{out}"))
        .parse()
        .unwrap()
}

/// A checkpoint and a dataset whose shapes are the network's own predictions.
fn perfect_pair(dir: &Path) {
    let bounds = ActuationBox::three_fiber();
    let net = OperatorNet::three_fiber(&bounds, AffineMap::identity(3), 5).unwrap();
    let (n, n_s) = (40, 12);
    let mut rng = Rng::new(1);
    let q = DMatrix::from_fn(n, 3, |_, _| rng.uniform_in(-1.67, 0.0));
    let mut shapes = Vec::with_capacity(n * n_s * 3);
    for i in 0..n {
        let qi = DVector::from_fn(3, |k, _| q[(i, k)]);
        for k in 0..n_s {
            shapes.extend(net.shape(&qi, k as f64 / (n_s - 1) as f64).iter());
        }
    }
    let ds = Dataset::new(q, shapes, n_s, 3, DatasetMeta::default()).unwrap();
    ds.save(&dir.join("perfect.bin")).unwrap();
    save_checkpoint(&net, &dir.join("perfect.ckpt")).unwrap();
}

#[test]
fn generate_is_deterministic_across_workers_and_config_echo() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let a = softclik(d, &["generate", "--n", "24", "--ns", "10", "--seed", "9", "--out", "a.bin", "--workers", "1"]);
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(value(&stdout(&a), "stored"), 24.0);
    assert_eq!(value(&stdout(&a), "failed_solves"), 0.0);
    let b = softclik(d, &["generate", "--n", "24", "--ns", "10", "--seed", "9", "--out", "b.bin", "--workers", "3"]);
    assert!(b.status.success());
    assert_eq!(fs::read(d.join("a.bin")).unwrap(), fs::read(d.join("b.bin")).unwrap());

    let c = softclik(d, &["--config", "a.bin.resolved.toml", "generate", "--out", "c.bin"]);
    assert!(c.status.success(), "{}", stderr(&c));
    assert_eq!(fs::read(d.join("a.bin")).unwrap(), fs::read(d.join("c.bin")).unwrap());

    let report = fs::read_to_string(d.join("a.bin.report.txt")).unwrap();
    assert!(report.contains("wall_time_s="));

    let other = softclik(d, &["generate", "--n", "24", "--ns", "10", "--seed", "10", "--out", "o.bin"]);
    assert!(other.status.success());
    assert_ne!(fs::read(d.join("a.bin")).unwrap(), fs::read(d.join("o.bin")).unwrap());
}

#[test]
fn thread_cap_from_environment() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let run = |threads: &str, out: &str| {
        Command::new(env!("CARGO_BIN_EXE_softclik"))
            .current_dir(d)
            .args(["generate", "--n", "8", "--ns", "5", "--out", out])
            .env("SOFTCLIK_THREADS", threads)
            .output()
            .unwrap()
    };
    assert!(run("2", "a.bin").status.success());
    assert_eq!(fs::read(d.join("a.bin")).unwrap(), {
        assert!(run("1", "b.bin").status.success());
        fs::read(d.join("b.bin")).unwrap()
    });
    assert_eq!(run("zero", "c.bin").status.code(), Some(2));
}

#[test]
fn usage_errors_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    assert_eq!(softclik(d, &["generate", "--ns", "1"]).status.code(), Some(2));
    assert_eq!(softclik(d, &["generate", "--n", "0"]).status.code(), Some(2));
    assert_eq!(softclik(d, &["generate", "--box", "0,-1"]).status.code(), Some(2));
    assert_eq!(softclik(d, &["frobnicate"]).status.code(), Some(2));
    assert_eq!(softclik(d, &["run", "--bogus"]).status.code(), Some(2));

    fs::write(d.join("bad.toml"), "[train]\nepoch = 3\n").unwrap();
    let o = softclik(d, &["--config", "bad.toml", "generate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("epoch"));

    let o = softclik(d, &["run", "--model", "cc", "--task", "pos_fixed", "--target", "0.5,0.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("square"), "{}", stderr(&o));
    assert_eq!(softclik(d, &["run", "--model", "cc", "--task", "dist_fixed"]).status.code(), Some(2));
    assert_eq!(softclik(d, &["run", "--model", "cc", "--task", "dist_fixed", "--target", "1,2,3"]).status.code(), Some(2));
    assert_eq!(softclik(d, &["run", "--model", "tube", "--target", "1,2"]).status.code(), Some(2));
    assert_eq!(softclik(d, &["run", "--model", "cc", "--task", "dist_fixed", "--target", "0.5,0.5", "--K", "1,2"]).status.code(), Some(2));
}

#[test]
fn missing_files_are_runtime_failures_naming_the_path() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    perfect_pair(d);
    let o = softclik(d, &["eval", "--data", "perfect.bin", "--checkpoint", "absent.ckpt"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("absent.ckpt"));
    let o = softclik(d, &["eval", "--data", "absent.bin", "--checkpoint", "perfect.ckpt"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("absent.bin"));
    let o = softclik(d, &["--config", "absent.toml", "generate"]);
    assert_eq!(o.status.code(), Some(1));
    let o = softclik(d, &["run", "--model", "neural", "--checkpoint", "absent.ckpt", "--target", "0,0,-0.1"]);
    assert_eq!(o.status.code(), Some(1));

    fs::write(d.join("junk.ckpt"), b"not a checkpoint").unwrap();
    let o = softclik(d, &["eval", "--data", "perfect.bin", "--checkpoint", "junk.ckpt"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn perfect_checkpoint_scores_zero() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    perfect_pair(d);
    for extra in [&["--all"][..], &[][..]] {
        let mut args = vec!["eval", "--data", "perfect.bin", "--checkpoint", "perfect.ckpt"];
        args.extend_from_slice(extra);
        let o = softclik(d, &args);
        assert!(o.status.success(), "{}", stderr(&o));
        let out = stdout(&o);
        assert!(value(&out, "mse") < 1e-24, "{out}");
        assert!(value(&out, "mse_physical") < 1e-24);
        assert!(value(&out, "l2_relative") < 1e-12);
    }
}

#[test]
fn train_writes_checkpoint_and_history_reproducibly() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    assert!(softclik(d, &["generate", "--n", "30", "--ns", "8", "--seed", "2", "--out", "d.bin"]).status.success());
    let args = ["train", "--data", "d.bin", "--epochs", "2", "--batch", "4", "--seed", "4"];
    let a = softclik(d, &[&args[..], &["--out", "a.ckpt"]].concat());
    assert!(a.status.success(), "{}", stderr(&a));
    let history = fs::read_to_string(d.join("a.ckpt.history.csv")).unwrap();
    assert_eq!(history.lines().next().unwrap(), "epoch,lr,train_mse,val_mse");
    assert_eq!(history.lines().count(), 3);

    let b = softclik(d, &["--config", "a.ckpt.resolved.toml", "train", "--data", "d.bin", "--out", "b.ckpt"]);
    assert!(b.status.success(), "{}", stderr(&b));
    assert_eq!(fs::read(d.join("a.ckpt")).unwrap(), fs::read(d.join("b.ckpt")).unwrap());

    let e = softclik(d, &["eval", "--data", "d.bin", "--checkpoint", "a.ckpt", "--seed", "4"]);
    assert!(e.status.success());
    assert_eq!(value(&stdout(&e), "mse"), value(&stdout(&a), "test_mse"));
}

#[test]
fn cc_run_writes_outputs_and_reruns_identically() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let o = softclik(d, &["run", "--model", "cc", "--task", "dist_fixed", "--target", "0.8414709848078965,0.45969769413186023", "--sbar", "1", "--K", "5", "--q0", "0.5", "--out", "cc"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(value(&out, "steps"), 1000.0);
    assert!(value(&out, "final_error") < 1e-2 * value(&out, "initial_error"));
    let csv = fs::read_to_string(d.join("cc.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "t,q0,x0,s_star,cond");
    assert_eq!(csv.lines().count(), 1002);
    assert!(fs::read_to_string(d.join("cc.svg")).unwrap().starts_with("<svg"));

    let again = softclik(d, &["--config", "cc.resolved.toml", "run", "--out", "cc2"]);
    assert!(again.status.success(), "{}", stderr(&again));
    assert_eq!(csv, fs::read_to_string(d.join("cc2.csv")).unwrap());

    fs::write(d.join("flags.toml"), "[clik]\nmodel = \"cc\"\ngain = [5.0]\nq0 = [0.5]\n[task]\nkind = \"dist_fixed\"\ntarget = [0.8414709848078965, 0.45969769413186023]\n").unwrap();
    let from_file = softclik(d, &["--config", "flags.toml", "run", "--out", "cc3"]);
    assert!(from_file.status.success());
    assert_eq!(csv, fs::read_to_string(d.join("cc3.csv")).unwrap());
    let overridden = softclik(d, &["--config", "flags.toml", "run", "--K", "2", "--out", "cc4"]);
    assert!(overridden.status.success());
    assert_ne!(csv, fs::read_to_string(d.join("cc4.csv")).unwrap());
}

#[test]
fn neural_run_reaches_a_reachable_target() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    perfect_pair(d);
    let net = softclik::trainer::load_checkpoint(&d.join("perfect.ckpt")).unwrap();
    let tip = net.shape(&DVector::from_vec(vec![-0.6, -0.9, -0.4]), 1.0);
    let target = format!("{},{},{}", tip[0], tip[1], tip[2]);
    let o = softclik(
        d,
        &["run", "--model", "neural", "--checkpoint", "perfect.ckpt", "--task", "pos_fixed", "--target", &target, "--q0=-0.8,-0.8,-0.8", "--out", "nn"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(value(&out, "final_error") < 0.05 * value(&out, "initial_error"), "{out}");
    let csv = fs::read_to_string(d.join("nn.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "t,q0,q1,q2,x0,x1,x2,s_star,cond");
}
