use std::path::{Path, PathBuf};
use std::process::Command;

use sparsity_core::{
    component_report, omp_global, weight_histogram, Normalization, PruneSpec, Sequential,
};
use sparsity_tools::container::{write_container, TensorEntry};
use sparsity_tools::output::{render_components, render_histogram, Format};
use sparsity_tools::rules::default_rules;
use sparsity_tools::{encode_mask, read_mask, Container, TensorFilter};
use tempfile::TempDir;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn sparsity(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_sparsity"))
        .args(args)
        .output()
        .unwrap();
    Run {
        code: out.status.code().unwrap(),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn ok(args: &[&str]) -> String {
    let r = sparsity(args);
    assert_eq!(r.code, 0, "{args:?}: {}", r.stderr);
    r.stdout
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A small BERT-like checkpoint: 1000 prunable weights plus a bias.
fn checkpoint(dir: &TempDir) -> PathBuf {
    let path = dir.path().join("ckpt.st");
    let ramp = |n: usize, scale: f64| -> Vec<f64> {
        (0..n)
            .map(|i| ((i * 7919) % n) as f64 * scale - 0.5)
            .collect()
    };
    write_container(
        &path,
        vec![
            TensorEntry::values(
                "layer.0.attn.query.weight",
                sparsity_core::DType::F32,
                vec![10, 40],
                ramp(400, 1.0 / 400.0),
            ),
            TensorEntry::values(
                "layer.0.intermediate.dense.weight",
                sparsity_core::DType::BF16,
                vec![20, 30],
                ramp(600, 1.0 / 600.0),
            ),
            TensorEntry::values(
                "layer.0.intermediate.dense.bias",
                sparsity_core::DType::F32,
                vec![20],
                vec![0.0; 20],
            ),
        ],
        None,
    )
    .unwrap();
    path
}

#[test]
fn prune_reports_exact_sparsity_and_matches_library() {
    let dir = TempDir::new().unwrap();
    let ckpt = checkpoint(&dir);
    let mask = dir.path().join("m.esmk");
    let out = ok(&[
        "prune",
        "--in",
        s(&ckpt),
        "--sparsity",
        "0.3",
        "--out",
        s(&mask),
    ]);
    assert_eq!(out, "sparsity 0.3\n");

    let c = Container::open(&ckpt).unwrap();
    let filter = TensorFilter::default_prunable();
    let spec = PruneSpec::global(0.3).with_filter(filter.spec().clone());
    let (mut set, _) = omp_global(&c, &c.infos(&filter), &spec, &Sequential).unwrap();
    set.provenance.source_digest = c.digest().unwrap();
    assert_eq!(std::fs::read(&mask).unwrap(), encode_mask(&set).unwrap());
    assert_eq!(set.len(), 2);

    let summary = ok(&[
        "prune",
        "--in",
        s(&ckpt),
        "--sparsity",
        "0.3",
        "--out",
        s(&mask),
        "--format",
        "json",
    ]);
    let v: serde_json::Value = serde_json::from_str(&summary).unwrap();
    assert_eq!(v["pruned"], 300);
    assert_eq!(v["elements"], 1000);
    assert_eq!(v["method"], "omp-global");
}

#[test]
fn per_tensor_and_nm() {
    let dir = TempDir::new().unwrap();
    let ckpt = checkpoint(&dir);
    let mask = dir.path().join("m.esmk");
    let out = ok(&[
        "prune",
        "--in",
        s(&ckpt),
        "--sparsity",
        "0.5",
        "--scope",
        "per-tensor",
        "--out",
        s(&mask),
    ]);
    assert_eq!(out, "sparsity 0.5\n");
    assert_eq!(
        read_mask(&mask).unwrap().provenance.method,
        "omp-per-tensor"
    );

    // 30 columns leave a trailing pair per row, which keeps both weights:
    // (200 + 20 * 7 * 2) / 1000 pruned
    let out = ok(&[
        "nm-prune",
        "--in",
        s(&ckpt),
        "--nm",
        "2:4",
        "--out",
        s(&mask),
    ]);
    assert_eq!(out, "sparsity 0.48\n");
    let set = read_mask(&mask).unwrap();
    assert_eq!(set.provenance.method, "nm-2:4");
    let bits: Vec<bool> = set
        .get("layer.0.attn.query.weight")
        .unwrap()
        .iter()
        .collect();
    assert!(bits
        .chunks(4)
        .all(|g| g.iter().filter(|&&b| b).count() == 2));
}

#[test]
fn similarity_and_nesting() {
    let dir = TempDir::new().unwrap();
    let ckpt = checkpoint(&dir);
    let m10 = dir.path().join("m10.esmk");
    let m30 = dir.path().join("m30.esmk");
    ok(&[
        "prune",
        "--in",
        s(&ckpt),
        "--sparsity",
        "0.1",
        "--out",
        s(&m10),
    ]);
    ok(&[
        "prune",
        "--in",
        s(&ckpt),
        "--sparsity",
        "0.3",
        "--out",
        s(&m30),
    ]);

    assert_eq!(ok(&["similarity", s(&m10), s(&m10)]), "1.0\n");
    let cos: f64 = ok(&["similarity", s(&m30), s(&m10)])
        .trim()
        .parse()
        .unwrap();
    assert!((cos - (700.0f64 / 900.0).sqrt()).abs() < 1e-12);
    assert_eq!(ok(&["nested", s(&m30), s(&m10)]), "true\n");
    assert_eq!(ok(&["nested", s(&m10), s(&m30)]), "false\n");

    let json = ok(&["similarity", s(&m10), s(&m30), s(&m10), "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["matrix"][0][2], 1.0);
    assert_eq!(v["matrix"][1][1], 1.0);
    assert_eq!(v["matrix"][0][1], v["matrix"][1][0]);

    let json = ok(&["similarity", s(&m10), s(&m30), "--per-tensor"]);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert!(
        v["per_tensor"]["layer.0.attn.query.weight"]
            .as_f64()
            .unwrap()
            > 0.8
    );
}

#[test]
fn apply_is_idempotent() {
    let dir = TempDir::new().unwrap();
    let ckpt = checkpoint(&dir);
    let mask = dir.path().join("m.esmk");
    let once = dir.path().join("once.st");
    let twice = dir.path().join("twice.st");
    ok(&[
        "prune",
        "--in",
        s(&ckpt),
        "--sparsity",
        "0.4",
        "--out",
        s(&mask),
    ]);
    ok(&[
        "apply",
        "--in",
        s(&ckpt),
        "--mask",
        s(&mask),
        "--out",
        s(&once),
    ]);

    let r = sparsity(&[
        "apply",
        "--in",
        s(&once),
        "--mask",
        s(&mask),
        "--out",
        s(&twice),
    ]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("digest mismatch"), "{}", r.stderr);

    ok(&[
        "apply",
        "--in",
        s(&once),
        "--mask",
        s(&mask),
        "--out",
        s(&twice),
        "--force",
    ]);
    assert_eq!(
        std::fs::read(&once).unwrap(),
        std::fs::read(&twice).unwrap()
    );

    let census = ok(&["census", "--in", s(&once), "--include", "*weight"]);
    let v: serde_json::Value = serde_json::from_str(&census).unwrap();
    assert!(v["total"].as_u64().unwrap() >= 400);
}

#[test]
fn essential_matches_oracle() {
    let curve = fixture("worked_curve.csv");
    assert_eq!(
        ok(&["essential", "--curve", s(&curve), "--eps", "0.01"]),
        "0.3\n"
    );
    let flat = fixture("flat_curve.json");
    assert_eq!(
        ok(&["essential", "--curve", s(&flat), "--eps", "0.01"]),
        "none\n"
    );
    let noisy = fixture("noisy_curve.csv");
    assert_eq!(ok(&["essential", "--curve", s(&noisy)]), "0.2\n");
    assert_eq!(
        ok(&["essential", "--curve", s(&noisy), "--mode", "sustained"]),
        "0.5\n"
    );
    let json = ok(&["essential", "--curve", s(&flat), "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["no_crossing"], true);
    assert_eq!(v["essential_sparsity"], serde_json::Value::Null);
}

#[test]
fn census_series_and_abrupt() {
    let dir = TempDir::new().unwrap();
    // 1000 elements each; 10, 10 and 300 exact zeros
    for (name, zeros) in [("a.st", 10usize), ("b.st", 10), ("c.st", 300)] {
        let values: Vec<f64> = (0..1000)
            .map(|i| if i < zeros { 0.0 } else { 1.0 + i as f64 })
            .collect();
        write_container(
            dir.path().join(name),
            vec![TensorEntry::values(
                "enc.weight",
                sparsity_core::DType::F32,
                vec![10, 100],
                values,
            )],
            None,
        )
        .unwrap();
    }
    let manifest = dir.path().join("series.json");
    std::fs::write(
        &manifest,
        r#"{"entries": [{"iteration": 1000, "path": "a.st"}, {"iteration": 2000, "path": "b.st"}, {"iteration": 3000, "path": "c.st"}]}"#,
    )
    .unwrap();
    let fractions = dir.path().join("fractions.csv");
    ok(&["census", "--series", s(&manifest), "--out", s(&fractions)]);
    assert_eq!(
        std::fs::read_to_string(&fractions).unwrap(),
        "iteration,zero_fraction\n1000,0.01\n2000,0.01\n3000,0.3\n"
    );
    assert_eq!(ok(&["abrupt", "--in", s(&fractions)]), "3000\n");
    assert_eq!(
        ok(&["abrupt", "--in", s(&fractions), "--min-jump", "0.5"]),
        "none\n"
    );

    std::fs::write(
        &manifest,
        r#"{"entries": [{"iteration": 1000, "path": "a.st"}, {"iteration": 2000, "path": "gone.st"}]}"#,
    )
    .unwrap();
    let r = sparsity(&["census", "--series", s(&manifest)]);
    assert_eq!(r.code, 2);
    assert!(
        r.stderr.contains("iteration 2000") && r.stderr.contains("gone.st"),
        "{}",
        r.stderr
    );
}

#[test]
fn reports_match_library() {
    let dir = TempDir::new().unwrap();
    let ckpt = checkpoint(&dir);
    let c = Container::open(&ckpt).unwrap();
    let filter = TensorFilter::default_prunable();
    let hist = weight_histogram(
        &c,
        &c.infos(&filter),
        8,
        Normalization::Standardize,
        &Sequential,
    )
    .unwrap();
    let out = ok(&[
        "report",
        "--in",
        s(&ckpt),
        "--bins",
        "8",
        "--normalize",
        "standardize",
        "--format",
        "csv",
    ]);
    assert_eq!(out, render_histogram(&hist, Format::Csv).unwrap());
    assert!(out.starts_with("tensor,bin_lo,bin_hi,count\n"));

    let mask = dir.path().join("m.esmk");
    ok(&[
        "prune",
        "--in",
        s(&ckpt),
        "--sparsity",
        "0.25",
        "--out",
        s(&mask),
    ]);
    let set = read_mask(&mask).unwrap();
    let out = ok(&["report", "--mask", s(&mask)]);
    let want = component_report(&set, &default_rules()).unwrap();
    assert_eq!(out, render_components(&want, Format::Json).unwrap());

    let out = ok(&[
        "report",
        "--mask",
        s(&mask),
        "--rules",
        s(&fixture("two_groups.json")),
        "--format",
        "csv",
    ]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "component,elements,pruned,sparsity");
    assert!(lines[1].starts_with("attention,400,"));
    assert!(lines[2].starts_with("rest,600,"));
    assert_eq!(lines[3], "overall,1000,250,0.25");
}

#[test]
fn synth_and_inspect() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.st");
    let b = dir.path().join("b.st");
    let args = |out: &Path| {
        vec![
            "synth".to_string(),
            "--out".into(),
            s(out).into(),
            "--dist".into(),
            "spike:0.3".into(),
            "--seed".into(),
            "7".into(),
            "--tensor".into(),
            "w=100x100".into(),
            "--dtype".into(),
            "BF16".into(),
        ]
    };
    ok(&args(&a).iter().map(String::as_str).collect::<Vec<_>>());
    ok(&args(&b).iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let census = ok(&["census", "--in", s(&a), "--include", "*"]);
    let v: serde_json::Value = serde_json::from_str(&census).unwrap();
    let f = v["zero_fraction"].as_f64().unwrap();
    assert!((f - 0.30).abs() <= 0.01, "{f}");

    let inv = ok(&["inspect", "--in", s(&a)]);
    let v: serde_json::Value = serde_json::from_str(&inv).unwrap();
    assert_eq!(v["total_params"], 10_000);
    assert_eq!(v["tensors"][0]["dtype"], "BF16");
    assert_eq!(v["tensors"][0]["bytes"], 20_000);
    assert_eq!(v["source_digest"].as_str().unwrap().len(), 64);
}

#[test]
fn schedule() {
    assert_eq!(
        ok(&["schedule", "--rounds", "2", "--fraction", "0.5"]),
        "1 0.5\n2 0.75\n"
    );
}

#[test]
fn exit_codes() {
    assert_eq!(sparsity(&[]).code, 1);
    assert_eq!(sparsity(&["--help"]).code, 0);
    assert_eq!(sparsity(&["frobnicate"]).code, 1);

    let dir = TempDir::new().unwrap();
    let ckpt = checkpoint(&dir);
    let out = dir.path().join("m.esmk");
    for bad in [
        vec![
            "prune",
            "--in",
            s(&ckpt),
            "--sparsity",
            "1.5",
            "--out",
            s(&out),
        ],
        vec![
            "prune",
            "--in",
            s(&ckpt),
            "--sparsity",
            "0.5",
            "--scope",
            "layer",
            "--out",
            s(&out),
        ],
        vec![
            "nm-prune",
            "--in",
            s(&ckpt),
            "--nm",
            "4:2",
            "--out",
            s(&out),
        ],
        vec!["report", "--in", s(&ckpt), "--bins", "0"],
        vec!["census", "--in", s(&ckpt), "--tol", "-1"],
        vec!["synth", "--out", s(&out), "--tensor", "w=0x3"],
        vec![
            "prune",
            "--in",
            s(&ckpt),
            "--sparsity",
            "0.5",
            "--out",
            s(&out),
            "--threads",
            "0",
        ],
    ] {
        let r = sparsity(&bad);
        assert_eq!(r.code, 1, "{bad:?}");
        assert!(r.stdout.is_empty());
    }
    // flags are validated before any file is touched
    assert!(!out.exists());

    let missing = dir.path().join("missing.st");
    let r = sparsity(&["inspect", "--in", s(&missing)]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("missing.st"));

    let garbage = dir.path().join("garbage.st");
    std::fs::write(&garbage, b"not a container").unwrap();
    let r = sparsity(&[
        "prune",
        "--in",
        s(&garbage),
        "--sparsity",
        "0.5",
        "--out",
        s(&out),
    ]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("malformed header length"), "{}", r.stderr);

    let r = sparsity(&["similarity", s(&ckpt), s(&ckpt)]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("bad magic"));

    // nothing matches the filter
    let r = sparsity(&[
        "prune",
        "--in",
        s(&ckpt),
        "--sparsity",
        "0.5",
        "--include",
        "nope*",
        "--out",
        s(&out),
    ]);
    assert_eq!(r.code, 2);
}
