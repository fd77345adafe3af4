//! The `kwvad` binary on synthetic datasets served by the stub provider.

mod common;

use std::collections::BTreeMap;
use std::path::Path;

use common::{kwvad, kwvad_ok, Mode, Scenario};
use kwvad::formats;
use kwvad_core::classifier::predict;
use kwvad_core::deduction::Encoder;

fn small(mode: Mode) -> Scenario {
    Scenario {
        frames: 400,
        videos: 4,
        mode,
        ..Scenario::default()
    }
}

fn report(out: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(out.join("eval.json")).unwrap()).unwrap()
}

fn stub_map(dir: &Path) -> BTreeMap<String, String> {
    std::fs::read_to_string(dir.join("stub.tsv"))
        .unwrap()
        .lines()
        .map(|l| {
            let (a, b) = l.split_once('\t').unwrap();
            (a.to_string(), b.to_string())
        })
        .collect()
}

#[test]
fn induce_writes_unit_norm_model_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let config = common::write(dir.path(), &small(Mode::Planted));
    let stdout = kwvad_ok(&config, &["induce"]);
    assert!(stdout.contains("keywords ->"), "{stdout}");
    let out = dir.path().join("out");
    let first = std::fs::read(out.join("keywords.tsv")).unwrap();
    let model = formats::load_keyword_model(&out.join("keywords.tsv")).unwrap();
    let norm = model.weights().iter().map(|w| w * w).sum::<f64>().sqrt();
    assert!((norm - 1.0).abs() <= 1e-9);
    assert!(model.len() <= 100, "ped2 profile caps keywords at 100");
    assert_eq!(model.provenance.dataset, "synthetic");

    let split = formats::load_split(&out.join("split.json")).unwrap();
    assert_eq!(split.induction_normal.len(), 20);
    assert_eq!(split.induction_anomalous.len(), 20);
    assert_eq!(split.train.len() + split.test.len(), 400 - 40);
    assert!(out.join("keywords_top.tsv").is_file());
    assert!(out.join("descriptions/synthetic.jsonl").is_file());

    // Again from a cold cache: same bytes.
    std::fs::remove_dir_all(out.join("cache")).unwrap();
    kwvad_ok(&config, &["induce"]);
    assert_eq!(std::fs::read(out.join("keywords.tsv")).unwrap(), first);

    // A different seed draws a different sample.
    kwvad_ok(&config, &["induce", "--seed", "43"]);
    assert_ne!(formats::load_split(&out.join("split.json")).unwrap(), split);
}

#[test]
fn provider_down_fails_in_describe_stage() {
    let dir = tempfile::tempdir().unwrap();
    let config = common::write(dir.path(), &small(Mode::Planted));
    let text = std::fs::read_to_string(&config).unwrap().replace(
        "stub = \"stub.tsv\"\n",
        "max_retries = 1\nbackoff_initial_ms = 1\ntimeout_secs = 2\n",
    );
    std::fs::write(&config, text).unwrap();
    let port = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let url = format!("http://127.0.0.1:{port}");
    let out = kwvad(&config, &["induce", "--provider-url", &url]);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(out.status.code(), Some(3), "{stderr}");
    assert!(stderr.contains("ProviderUnreachable"), "{stderr}");
    assert!(stderr.contains("describe:"), "{stderr}");
    assert!(!dir.path().join("out/keywords.tsv").exists());
}

#[test]
fn train_learns_the_synthetic_set_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let config = common::write(dir.path(), &small(Mode::Perfect));
    let out = dir.path().join("out");

    let err = kwvad(&config, &["train"]);
    assert_eq!(err.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&err.stderr);
    assert!(
        stderr.contains("keywords.tsv does not exist (run `kwvad induce` first)"),
        "{stderr}"
    );
    assert!(!out.join("model.json").exists());

    kwvad_ok(&config, &["induce"]);
    let stdout = kwvad_ok(&config, &["train"]);
    assert!(stdout.contains("chosen"), "{stdout}");
    let first = std::fs::read(out.join("model.json")).unwrap();

    // Every training frame lands on the right side of 0.5.
    let model = formats::load_keyword_model(&out.join("keywords.tsv")).unwrap();
    let trained = formats::load_trained_model(&out.join("model.json")).unwrap();
    let split = formats::load_split(&out.join("split.json")).unwrap();
    let texts = stub_map(dir.path());
    let encoder = Encoder::new(&model);
    let scenario = small(Mode::Perfect);
    let labels: BTreeMap<String, bool> = common::frames(&scenario)
        .into_iter()
        .map(|f| (f.id, f.anomalous))
        .collect();
    let mut correct = 0;
    for id in &split.train {
        let p = predict(&trained, &encoder.encode(id, &texts[id])).unwrap();
        correct += usize::from((p > 0.5) == labels[id]);
    }
    assert_eq!(correct, split.train.len());
    let expected_pw = {
        let pos = split.train.iter().filter(|id| labels[*id]).count() as f64;
        (split.train.len() as f64 - pos) / pos
    };
    assert!((trained.pos_weight - expected_pw).abs() < 1e-12);

    let log = std::fs::read_to_string(out.join("fold_metrics.tsv")).unwrap();
    assert!(log.starts_with("fold\tepoch\ttrain_loss\tvalidation_loss\tbest\tchosen\n"));
    assert_eq!(
        log.lines().filter(|l| l.ends_with("\t1\t1")).count(),
        1,
        "one best epoch in the chosen fold"
    );

    kwvad_ok(&config, &["train"]);
    assert_eq!(std::fs::read(out.join("model.json")).unwrap(), first);
}

#[test]
fn eval_perfect_and_inverted_descriptions() {
    let dir = tempfile::tempdir().unwrap();
    let config = common::write(dir.path(), &small(Mode::Perfect));
    let out = dir.path().join("out");
    for cmd in ["induce", "train", "eval"] {
        kwvad_ok(&config, &[cmd]);
    }
    let r = report(&out);
    assert_eq!(r["auroc_micro"], 1.0);
    assert_eq!(r["auroc_macro"], 1.0);
    assert_eq!(r["fp"].as_u64().unwrap() + r["fn"].as_u64().unwrap(), 0);
    let scores = formats::parse_scores(&std::fs::read_to_string(out.join("scores.csv")).unwrap()).unwrap();
    assert_eq!(scores.len() as u64, r["n_frames"].as_u64().unwrap());
    let matrix = std::fs::read_to_string(out.join("test_encodings.csv")).unwrap();
    assert_eq!(matrix.lines().count(), scores.len() + 1);

    // Swap the descriptions of the test frames between the classes.
    let split = formats::load_split(&out.join("split.json")).unwrap();
    let frames = common::frames(&small(Mode::Perfect));
    let normal_text = frames.iter().find(|f| !f.anomalous).unwrap().text.clone();
    let anomalous_text = frames.iter().find(|f| f.anomalous).unwrap().text.clone();
    let inverted: Vec<common::Frame> = frames
        .into_iter()
        .map(|mut f| {
            if split.test.contains(&f.id) {
                f.text = if f.anomalous {
                    normal_text.clone()
                } else {
                    anomalous_text.clone()
                };
            }
            f
        })
        .collect();
    std::fs::write(dir.path().join("stub.tsv"), common::render_stub(&inverted)).unwrap();
    std::fs::remove_dir_all(out.join("cache")).unwrap();
    let summary = kwvad_ok(&config, &["eval"]);
    assert!(summary.contains("auroc (micro)   0.0000"), "{summary}");
    assert_eq!(report(&out)["auroc_micro"], 0.0);
}

#[test]
fn eval_random_descriptions_is_chance() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = Scenario {
        frames: 2600,
        videos: 26,
        mode: Mode::Random,
        profile: "generic",
        extra: "\n[split]\ntrain_ratio = 0.2\n".into(),
        ..Scenario::default()
    };
    let config = common::write(dir.path(), &scenario);
    for cmd in ["induce", "train", "eval"] {
        kwvad_ok(&config, &[cmd]);
    }
    let r = report(&dir.path().join("out"));
    assert!(r["n_frames"].as_u64().unwrap() >= 2000);
    let micro = r["auroc_micro"].as_f64().unwrap();
    assert!((micro - 0.5).abs() <= 0.05, "micro AUROC {micro}");
}

#[test]
fn infer_reports_keywords_and_encoding() {
    let dir = tempfile::tempdir().unwrap();
    let config = common::write(dir.path(), &small(Mode::Perfect));
    let out = dir.path().join("out");
    kwvad_ok(&config, &["induce"]);
    kwvad_ok(&config, &["train"]);
    let model = formats::load_keyword_model(&out.join("keywords.tsv")).unwrap();
    let trained = formats::load_trained_model(&out.join("model.json")).unwrap();

    // An image outside the manifest whose description holds no keyword.
    std::fs::copy(dir.path().join("frame.png"), dir.path().join("stray.png")).unwrap();
    let mut stub = std::fs::read_to_string(dir.path().join("stub.tsv")).unwrap();
    stub.push_str("stray\tzzz qqq\n");
    std::fs::write(dir.path().join("stub.tsv"), stub).unwrap();
    let stray = dir.path().join("stray.png");
    let p: serde_json::Value = serde_json::from_str(&kwvad_ok(&config, &["infer", stray.to_str().unwrap()])).unwrap();
    assert_eq!(p["frame_id"], "stray");
    assert_eq!(p["present_keywords"].as_array().unwrap().len(), 0);
    let encoding: Vec<f64> = serde_json::from_value(p["encoding"].clone()).unwrap();
    assert_eq!(encoding, vec![0.0; model.len()]);
    let baseline = trained.params.forward(&vec![0.0; model.len()]).unwrap();
    assert_eq!(p["probability"].as_f64().unwrap(), baseline);
    assert!(p.get("label").is_none());

    // A manifest frame with a bicycle in its description.
    let frame = common::frames(&small(Mode::Perfect))
        .into_iter()
        .find(|f| f.anomalous)
        .unwrap();
    let p: serde_json::Value = serde_json::from_str(&kwvad_ok(&config, &["infer", &frame.id])).unwrap();
    let bicycle = p["present_keywords"]
        .as_array()
        .unwrap()
        .iter()
        .find(|k| k["term"] == "bicycle")
        .expect("bicycle is reported");
    assert!(bicycle["weight"].as_f64().unwrap() > 0.0);
    assert_eq!(p["label"], "anomalous");
    let prob = p["probability"].as_f64().unwrap();
    assert_eq!(p["decision"], if prob > 0.5 { "anomalous" } else { "normal" });
    let csv = std::fs::read_to_string(out.join(format!("infer/{}.csv", frame.id))).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(out.join(format!("infer/{}.json", frame.id)).is_file());

    // Unknown target.
    let bad = kwvad(&config, &["infer", "no-such-frame"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn infer_refuses_a_model_trained_on_other_keywords() {
    let dir = tempfile::tempdir().unwrap();
    let config = common::write(dir.path(), &small(Mode::Perfect));
    kwvad_ok(&config, &["induce"]);
    kwvad_ok(&config, &["train"]);
    kwvad_ok(&config, &["induce", "--seed", "99"]);
    let frame = common::frames(&small(Mode::Perfect)).remove(0);
    let res = kwvad(&config, &["infer", &frame.id]);
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert_eq!(res.status.code(), Some(2), "{stderr}");
    assert!(stderr.contains("ModelEncodingMismatch"), "{stderr}");
}

#[test]
fn config_errors_exit_1_without_side_effects() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = Scenario {
        extra: "\n[training]\nfolds = 1\n".into(),
        ..small(Mode::Planted)
    };
    let config = common::write(dir.path(), &scenario);
    for cmd in ["describe", "induce", "train", "eval"] {
        let out = kwvad(&config, &[cmd]);
        assert_eq!(out.status.code(), Some(1), "{cmd}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("folds"));
    }
    assert!(!dir.path().join("out").exists());

    let out = kwvad(&dir.path().join("missing.toml"), &["induce"]);
    assert_eq!(out.status.code(), Some(1));
    let out = kwvad(&config, &["eval", "--threshold", "1.5"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn describe_warms_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    let config = common::write(dir.path(), &small(Mode::Planted));
    let stdout = kwvad_ok(&config, &["describe"]);
    assert_eq!(stdout.trim(), "400 described, 0 failed");
    let store = formats::load_descriptions(&dir.path().join("out/descriptions/synthetic.jsonl")).unwrap();
    assert_eq!(store.len(), 400);
    let texts = stub_map(dir.path());
    assert!(store
        .iter()
        .all(|r| texts[&r.frame_id] == r.text && r.model_id == "stub"));

    // With the stub map gone, everything still comes from the cache.
    std::fs::write(dir.path().join("stub.tsv"), "").unwrap();
    kwvad_ok(&config, &["induce"]);
}
