use std::fmt::Write as _;
use std::path::Path;
use std::process::{Command, Output};

fn diffnet(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_diffnet"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .env("DIFFNET_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

/// Fibonacci points on the unit sphere, one `x y z` row each.
fn write_cloud(path: &Path, n: usize) {
    let mut s = String::new();
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    for i in 0..n {
        let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
        let r = (1.0 - z * z).sqrt();
        let a = golden * i as f64;
        writeln!(s, "{} {} {}", r * a.cos(), r * a.sin(), z).unwrap();
    }
    std::fs::write(path, s).unwrap();
}

/// A UV sphere with labels marking the upper hemisphere.
fn write_mesh(dir: &Path, name: &str, rings: usize, segments: usize) {
    let mut v = vec![[0.0, 0.0, 1.0]];
    for i in 1..rings {
        let th = std::f64::consts::PI * i as f64 / rings as f64;
        for j in 0..segments {
            let ph = std::f64::consts::TAU * j as f64 / segments as f64;
            v.push([th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()]);
        }
    }
    v.push([0.0, 0.0, -1.0]);
    let idx = |i: usize, j: usize| 1 + (i - 1) * segments + j % segments;
    let last = v.len() - 1;
    let mut f = Vec::new();
    for j in 0..segments {
        f.push([0, idx(1, j), idx(1, j + 1)]);
        f.push([idx(rings - 1, j), last, idx(rings - 1, j + 1)]);
    }
    for i in 1..rings - 1 {
        for j in 0..segments {
            f.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            f.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    let mut obj = String::new();
    for p in &v {
        writeln!(obj, "v {} {} {}", p[0], p[1], p[2]).unwrap();
    }
    for t in &f {
        writeln!(obj, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).unwrap();
    }
    std::fs::write(dir.join(format!("{name}.obj")), obj).unwrap();
    let labels: String = v.iter().map(|p| if p[2] > 0.0 { "1\n" } else { "0\n" }).collect();
    std::fs::write(dir.join(format!("{name}.labels")), labels).unwrap();
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn precompute_defaults_to_k128_and_30_neighbors() {
    let dir = tempfile::tempdir().unwrap();
    write_cloud(&dir.path().join("cloud.xyz"), 400);
    let o = diffnet(dir.path(), &["precompute", "--input", "cloud.xyz"]);
    assert!(o.status.success(), "{}", text(&o));
    assert!(text(&o).contains("V = 400 F = 0 k = 128"), "{}", text(&o));
    let m = manifest(&dir.path().join("cloud.xyz.ops"));
    assert_eq!(m["k"], 128);
    assert_eq!(m["k_neighbors"], 30);

    let o = diffnet(dir.path(), &["precompute", "--input", "cloud.xyz", "--k", "16", "--knn", "12", "--out", "c16"]);
    assert!(o.status.success(), "{}", text(&o));
    let m = manifest(&dir.path().join("c16"));
    assert_eq!(m["k"], 16);
    assert_eq!(m["k_neighbors"], 12);
}

fn train_config(out: &str) -> String {
    format!(
        r#"{{
  "network": {{"input_mode": "xyz", "head": "vertex_softmax", "gradient_mode": "complex", "n_out": 2, "k": 16, "width": 8, "n_blocks": 2}},
  "train": {{"epochs": 4, "seed": 3}},
  "train_set": [{{"shape": "a.obj", "labels": "a.labels"}}],
  "test_set": [{{"shape": "b.obj", "labels": "b.labels"}}],
  "output_dir": "{out}"
}}"#
    )
}

#[test]
fn train_then_eval_reproduces_the_logged_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_mesh(d, "a", 10, 16);
    write_mesh(d, "b", 12, 14);
    std::fs::write(d.join("train.json"), train_config("run")).unwrap();

    let o = diffnet(d, &["train", "--config", "train.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("diffnet precompute --input"), "{}", text(&o));

    for s in ["a.obj", "b.obj"] {
        let o = diffnet(d, &["precompute", "--input", s, "--k", "16"]);
        assert!(o.status.success(), "{}", text(&o));
    }
    let o = diffnet(d, &["train", "--config", "train.json"]);
    assert!(o.status.success(), "{}", text(&o));
    let metrics = std::fs::read_to_string(d.join("run/metrics.csv")).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(lines.next(), Some("epoch,lr,train_loss,train_acc,test_acc,seconds"));
    let last = lines.last().unwrap();
    let logged: f64 = last.split(',').nth(4).unwrap().parse().unwrap();

    std::fs::write(d.join("test.json"), r#"[{"shape": "b.obj", "labels": "b.labels"}]"#).unwrap();
    let o = diffnet(d, &["eval", "--checkpoint", "run/checkpoints/final.ckpt", "--dataset", "test.json"]);
    assert!(o.status.success(), "{}", text(&o));
    let m: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(m["accuracy"].as_f64().unwrap(), logged);

    // The checkpoint header carries the network config verbatim.
    let bytes = std::fs::read(d.join("run/checkpoints/final.ckpt")).unwrap();
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let header: serde_json::Value = serde_json::from_slice(&bytes[16..16 + hlen]).unwrap();
    let input: serde_json::Value = serde_json::from_str(&train_config("run")).unwrap();
    for (key, value) in input["network"].as_object().unwrap() {
        assert_eq!(&header["config"][key], value, "{key}");
    }
}

#[test]
fn config_errors_name_the_field_and_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = train_config("run").replace(r#""epochs": 4"#, r#""epochs": -4"#);
    std::fs::write(dir.path().join("bad.json"), bad).unwrap();
    let o = diffnet(dir.path(), &["train", "--config", "bad.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("train.epochs"), "{}", text(&o));

    let unknown = train_config("run").replace(r#""width": 8"#, r#""widht": 8"#);
    std::fs::write(dir.path().join("unknown.json"), unknown).unwrap();
    let o = diffnet(dir.path(), &["train", "--config", "unknown.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("widht"), "{}", text(&o));

    let o = diffnet(dir.path(), &["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    let o = diffnet(dir.path(), &["experiment", "--name", "nonsense"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn experiments_require_a_green_stamp_for_this_build() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = diffnet(d, &["experiment", "--name", "orientation"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("diffnet verify"), "{}", text(&o));

    let o = diffnet(d, &["verify", "--suite", "gradients", "--out", "reports"]);
    assert!(o.status.success(), "{}", text(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("reports/verify_gradients.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    assert!(report["measurements"].as_array().unwrap().iter().all(|m| m.get("threshold").is_some() && m.get("provenance").is_some()));
    assert!(d.join("reports/verify_gradients.csv").exists());

    // One green suite is not enough.
    let o = diffnet(d, &["experiment", "--name", "orientation"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("heat_kernel"), "{}", text(&o));
}
