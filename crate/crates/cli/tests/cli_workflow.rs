use std::path::Path;
use std::process::{Command, Output};

use rapid_core::MetricReport;

fn rapid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rapid")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = rapid(args);
    assert!(out.status.success(), "rapid {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn prepare(dir: &Path) -> impl Fn(&str) -> String + '_ {
    let p = move |name: &str| dir.join(name).to_string_lossy().into_owned();
    ok(&["synth", "--out", &p(""), "--events", "40", "--dimension", "256"]);
    ok(&[
        "index", "build", "--scenes", &p("scenes.jsonl"), "--ocr", &p("ocr.jsonl"),
        "--image-root", &p("frames"), "--out", &p("manifest.jsonl"),
    ]);
    p
}

#[test]
fn synth_embed_eval_compare() {
    let dir = tempfile::tempdir().unwrap();
    let p = prepare(dir.path());
    let out = ok(&[
        "index", "embed", "--manifest", &p("manifest.jsonl"), "--captions", &p("captions.jsonl"),
        "--dimension", "256", "--out", &p("store.bin"),
    ]);
    assert!(out.contains("dimension=256"), "{out}");

    for (mode, extra) in [("naive", None), ("augmented", Some("--no-original"))] {
        let report = p(&format!("{mode}.json"));
        let (config, dataset) = (p("rapid.toml"), p("dataset.jsonl"));
        let mut args = vec!["eval", "run", "--config", &config];
        args.extend(["--dataset", &dataset, "--mode", mode, "--report", &report]);
        args.extend(extra);
        let out = ok(&args);
        assert!(out.contains("MRR="), "{out}");
    }
    let naive: MetricReport = serde_json::from_slice(&std::fs::read(p("naive.json")).unwrap()).unwrap();
    let aug: MetricReport = serde_json::from_slice(&std::fs::read(p("augmented.json")).unwrap()).unwrap();
    assert_eq!(naive.query_count, 40);
    assert_eq!(aug.records.len(), 40);
    assert!(aug.mrr > naive.mrr);
    assert!(aug.records.iter().all(|r| r.drafts.len() == 8 && r.error.is_none()));

    let table = ok(&["eval", "compare", "--a", &p("naive.json"), "--b", &p("augmented.json")]);
    let mrr_line = table.lines().find(|l| l.starts_with("MRR")).expect(&table);
    assert!(mrr_line.contains(&format!("{:.4}", naive.mrr)), "{mrr_line}");
}

#[test]
fn serve_without_store_names_the_missing_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = prepare(dir.path());
    let out = rapid(&["serve", "--config", &p("rapid.toml")]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("store.bin"), "{err}");
}

#[test]
fn config_errors_list_missing_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "listen = \"127.0.0.1:0\"\n").unwrap();
    let out = rapid(&["serve", "--config", &cfg.to_string_lossy()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    for key in ["store_path", "manifest_path", "embedding.backend", "embedding.dimension"] {
        assert!(err.contains(key), "{key} not in {err}");
    }
}

#[test]
fn mock_embed_requires_captions_and_rejects_gaps() {
    let dir = tempfile::tempdir().unwrap();
    let p = prepare(dir.path());
    let out = rapid(&["index", "embed", "--manifest", &p("manifest.jsonl"), "--out", &p("s.bin")]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--captions"));

    std::fs::write(p("partial.jsonl"), "{\"keyframe_id\": 0, \"caption_tokens\": \"a b\"}\n").unwrap();
    let out = rapid(&[
        "index", "embed", "--manifest", &p("manifest.jsonl"), "--captions", &p("partial.jsonl"), "--out", &p("s.bin"),
    ]);
    assert!(!out.status.success());
    assert!(!Path::new(&p("s.bin")).exists());
}
