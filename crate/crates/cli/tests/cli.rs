use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn cmfd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cmfd"))
        .args(args)
        .env_remove("CMFD_JOBS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = cmfd(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn synth(dir: &Path, kind: &str, count: &str, extra: &[&str]) {
    let mut args = vec!["synth", "--kind", kind, "--seed", "5", "--count", count, "--out-dir"];
    args.push(dir.to_str().unwrap());
    args.extend_from_slice(extra);
    ok(&args);
}

fn schema() -> jsonschema::Validator {
    let text = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../report.schema.json")).unwrap();
    jsonschema::validator_for(&serde_json::from_str(&text).unwrap()).unwrap()
}

fn report(args: &[&str]) -> Value {
    serde_json::from_slice(&ok(args).stdout).unwrap()
}

#[test]
fn reports_conform_to_schema() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c");
    synth(&corpus, "intensity_varied", "1", &["--sizes", "10"]);
    let img = corpus.join("img_0.png");
    let truth = corpus.join("mask_0.png");
    let v = schema();
    for method in ["exact", "dct", "rescale"] {
        let r = report(&["detect", "--method", method, "--input", img.to_str().unwrap(), "--truth", truth.to_str().unwrap()]);
        let errors: Vec<String> = v.iter_errors(&r).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{method}: {errors:?}");
        assert_eq!(r["method"], method);
    }
    let bad = serde_json::json!({"method": "exact"});
    assert!(!v.is_valid(&bad));
}

#[test]
fn detectors_find_known_forgery() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c");
    synth(&corpus, "intensity_varied", "1", &["--sizes", "20"]);
    let img = corpus.join("img_0.png");
    let mask = dir.path().join("m.png");
    for method in ["exact", "dct"] {
        let r = report(&[
            "detect", "--method", method, "--input", img.to_str().unwrap(),
            "--out", mask.to_str().unwrap(), "--truth", corpus.join("mask_0.png").to_str().unwrap(),
        ]);
        assert_eq!(r["verdict"], "forgery_detected");
        assert!(!r["matches"].as_array().unwrap().is_empty());
        assert_eq!(r["score"]["p"], 100.0);
        assert_eq!(r["mask_path"], mask.to_str().unwrap());
        assert!(mask.is_file());
    }
}

#[test]
fn clean_input_is_not_detected() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c");
    synth(&corpus, "intensity_varied", "1", &[]);
    // the source region of a forgery is untouched texture
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(corpus.join("manifest.json")).unwrap()).unwrap();
    let src = &manifest[0]["source_rect"];
    let (h, w) = (src["height"].as_u64().unwrap() as usize, src["width"].as_u64().unwrap() as usize);
    let full = cmfd_core::load_image(corpus.join("img_0.png")).unwrap();
    let patch = full
        .crop(cmfd_core::Rect::new(src["row"].as_u64().unwrap() as usize, src["col"].as_u64().unwrap() as usize, h, w))
        .unwrap();
    let clean = dir.path().join("clean.png");
    cmfd_core::save_image(&patch, &clean).unwrap();
    let r = report(&["detect", "--method", "exact", "--input", clean.to_str().unwrap()]);
    assert_eq!(r["verdict"], "not_detected");
    assert_eq!(r["message"], "Forgery not found");
    assert!(r["matches"].as_array().unwrap().is_empty());
}

#[test]
fn rescale_detects_rescaled_copy() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c");
    synth(&corpus, "copy_rescale_move", "1", &["--sizes", "5", "--factors", "170"]);
    // at the default 0.1 this pair is rejected: phi4 is ~1e-15 and its log
    // drifts by 0.158 under the resize
    let r = report(&[
        "detect", "--method", "rescale", "--input", corpus.join("img_0.f64").to_str().unwrap(),
        "--truth", corpus.join("mask_0.png").to_str().unwrap(), "--hu-tol", "0.2",
    ]);
    assert_eq!(r["verdict"], "forgery_detected");
    assert_eq!(r["params"]["regime"], "real_decimal");
    assert_eq!(r["params"]["factors"].as_array().unwrap().len(), 50);
    assert_eq!(r["params"]["hu_tolerance"], 0.2);
    let m = &r["matches"][0];
    assert_eq!(m["kind"], "region");
    assert_eq!(m["score"], 170.0);
    assert!(r["score"]["p"].as_f64().unwrap() >= 90.0);
}

#[test]
fn params_replay_reproduces_report() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c");
    synth(&corpus, "intensity_varied", "1", &["--sizes", "10"]);
    let img = corpus.join("img_0.png");
    let first = report(&["detect", "--method", "dct", "--input", img.to_str().unwrap(), "--block-size", "4", "--threshold", "20"]);
    let p = &first["params"];
    let replay = report(&[
        "detect", "--method", "dct", "--input", img.to_str().unwrap(),
        "--block-size", &p["block_size"].to_string(),
        "--threshold", &p["threshold"].to_string(),
        "--places", &p["rounding_places"].to_string(),
        "--cap", &p["run_cap"].to_string(),
    ]);
    let strip = |mut v: Value| {
        v.as_object_mut().unwrap().remove("elapsed_ms");
        v
    };
    assert_eq!(strip(first), strip(replay));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    // bad flags
    assert_eq!(cmfd(&["detect", "--method", "blur", "--input", "x.png"]).status.code(), Some(2));
    let out = cmfd(&["synth", "--kind", "copy_move", "--sizes", "10,abc", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(cmfd(&["synth", "--kind", "rotate", "--out-dir", "x"]).status.code(), Some(2));
    // I/O
    let missing = dir.path().join("missing.png");
    let out = cmfd(&["detect", "--method", "exact", "--input", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(stderr.trim().lines().count(), 1, "{stderr}");
    let junk = dir.path().join("junk.png");
    std::fs::write(&junk, b"not an image").unwrap();
    assert_eq!(cmfd(&["detect", "--method", "exact", "--input", junk.to_str().unwrap()]).status.code(), Some(3));
    // preconditions
    let corpus = dir.path().join("c");
    synth(&corpus, "intensity_varied", "1", &["--sizes", "10"]);
    let img = corpus.join("img_0.png");
    let out = cmfd(&["detect", "--method", "dct", "--input", img.to_str().unwrap(), "--block-size", "5"]);
    assert_eq!(out.status.code(), Some(4));
    let out = cmfd(&["detect", "--method", "rescale", "--input", img.to_str().unwrap(), "--factors", "5,100"]);
    assert_eq!(out.status.code(), Some(4));
    let out = cmfd(&["--jobs", "0", "detect", "--method", "exact", "--input", img.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn synth_layout_and_count() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c");
    synth(&corpus, "multi_clone", "3", &[]);
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(corpus.join("manifest.json")).unwrap()).unwrap();
    let entries = manifest.as_array().unwrap();
    assert_eq!(entries.len(), 3);
    for (k, e) in entries.iter().enumerate() {
        assert_eq!(e["image"], format!("img_{k}.png"));
        assert!(corpus.join(format!("img_{k}.png")).is_file());
        assert!(corpus.join(format!("mask_{k}.png")).is_file());
        assert_eq!(e["clone_list"].as_array().unwrap().len(), 2);
        for key in ["kind", "source_rect", "dest_origin", "scale_factor", "offset", "quantize_output"] {
            assert!(e.get(key).is_some(), "missing {key}");
        }
    }
}

#[test]
fn eval_tables() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c");
    synth(&corpus, "intensity_varied", "4", &[]);
    let perfect = dir.path().join("perfect");
    let empty = dir.path().join("empty");
    std::fs::create_dir_all(&perfect).unwrap();
    std::fs::create_dir_all(&empty).unwrap();
    for k in 0..4 {
        let truth = cmfd_core::load_mask(corpus.join(format!("mask_{k}.png"))).unwrap();
        std::fs::copy(corpus.join(format!("mask_{k}.png")), perfect.join(format!("img_{k}.png"))).unwrap();
        let none = cmfd_core::BinaryMask::new(truth.width(), truth.height());
        cmfd_core::save_mask(&none, empty.join(format!("img_{k}.png"))).unwrap();
    }
    let csv = dir.path().join("p.csv");
    let json = dir.path().join("p.json");
    let out = ok(&[
        "eval", "--pred-dir", perfect.to_str().unwrap(), "--truth-dir", corpus.to_str().unwrap(),
        "--csv", csv.to_str().unwrap(), "--json", json.to_str().unwrap(), "--method", "oracle",
    ]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("overall,4,100.0000"), "{stdout}");
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("image_id,method,size_bucket_pct,P_pct,fp_pixels\n"));
    assert_eq!(text.lines().count(), 5);
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(summary["aggregate"]["overall_mean"], 100.0);

    let out = ok(&["eval", "--pred-dir", empty.to_str().unwrap(), "--truth-dir", corpus.to_str().unwrap()]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("overall,4,0.0000"));

    std::fs::remove_file(empty.join("img_2.png")).unwrap();
    let out = cmfd(&["eval", "--pred-dir", empty.to_str().unwrap(), "--truth-dir", corpus.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("img_2"));
}
