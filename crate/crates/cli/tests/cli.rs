use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn docground(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_docground"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_lines(path: &Path, rows: &[Value]) {
    let text: String = rows.iter().map(|r| format!("{r}\n")).collect();
    fs::write(path, text).unwrap();
}

fn bench(dir: &Path) -> std::path::PathBuf {
    let out = docground(&["render-synthetic", "--count", "2", "--seed", "3", "--bench", "--out-dir", p(dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    dir.join("bench.jsonl")
}

#[test]
fn self_evaluation_reports_full_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let gt = bench(dir.path());
    let preds: Vec<Value> = fs::read_to_string(&gt)
        .unwrap()
        .lines()
        .map(|l| {
            let v: Value = serde_json::from_str(l).unwrap();
            json!({ "id": v["id"], "output": v["answer"] })
        })
        .collect();
    let pred = dir.path().join("pred.jsonl");
    write_lines(&pred, &preds);
    let report_dir = dir.path().join("report");
    let out = docground(&["evaluate", "--pred", p(&pred), "--gt", p(&gt), "--sweep", "0.1,0.5,0.9", "--out-dir", p(&report_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_str(&fs::read_to_string(report_dir.join("report.json")).unwrap()).unwrap();
    for cell in report["cells"].as_array().unwrap() {
        if let Some(acc) = cell.get("acc_pct") {
            assert_eq!(acc.as_f64(), Some(100.0));
        }
        if let Some(f1) = cell.get("f1_all") {
            assert_eq!(f1.as_f64(), Some(1.0));
        }
    }
    assert!(report_dir.join("manifest.json").exists());
    let table = docground(&["report", "--report", p(&report_dir.join("report.json"))]);
    assert!(String::from_utf8_lossy(&table.stdout).contains("GRa"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(docground(&["evaluate", "--pred", "p.jsonl"]).status.code(), Some(2));
    assert_eq!(docground(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn bad_input_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let gt = dir.path().join("gt.jsonl");
    fs::write(&gt, "{\"id\": 3}\n").unwrap();
    let out = docground(&["evaluate", "--pred", p(&gt), "--gt", p(&gt)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}

#[test]
fn verify_splits_broken_samples() {
    let dir = tempfile::tempdir().unwrap();
    let samples = dir.path().join("s.jsonl");
    write_lines(
        &samples,
        &[
            json!({"id": "ok", "doc_type": "pdf", "question": "Q?", "answer": "<ocr>A</ocr><bbox>1,2,3,4</bbox>", "answer_class": "GA", "task": "Ga"}),
            json!({"id": "bad", "doc_type": "pdf", "question": "Q?", "answer": "<ocr>A</ocr><bbox>1,2,3,4", "answer_class": "GA", "task": "Ga"}),
        ],
    );
    let out_dir = dir.path().join("v");
    let out = docground(&["verify", "--samples", p(&samples), "--out-dir", p(&out_dir)]);
    assert!(out.status.success());
    let rejected = fs::read_to_string(out_dir.join("rejected.jsonl")).unwrap();
    assert_eq!(rejected.lines().count(), 1);
    assert!(rejected.contains("UnclosedTag"));
    assert_eq!(fs::read_to_string(out_dir.join("accepted.jsonl")).unwrap().lines().count(), 1);
}

#[test]
fn merge_layout_orders_blocks() {
    let dir = tempfile::tempdir().unwrap();
    let blk = |id: &str, text: &str, b: [f64; 4], source: &str| {
        json!({"id": id, "text": text, "bbox": b, "source": source, "granularity": "paragraph"})
    };
    let ordered = dir.path().join("o.jsonl");
    let unordered = dir.path().join("u.jsonl");
    write_lines(
        &ordered,
        &[blk("a", "Left top", [0.05, 0.1, 0.45, 0.2], "ordered"), blk("b", "Right top", [0.55, 0.1, 0.95, 0.2], "ordered")],
    );
    write_lines(&unordered, &[blk("n", "Left note", [0.05, 0.5, 0.45, 0.6], "unordered")]);
    let out_dir = dir.path().join("m");
    let out = docground(&["merge-layout", "--ordered", p(&ordered), "--unordered", p(&unordered), "--out-dir", p(&out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ids: Vec<String> = fs::read_to_string(out_dir.join("merged.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["id"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(ids, ["a", "n", "b"]);
    let manifest: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["dup_iou"], json!(0.5));
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 2);
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    bench(a.path());
    bench(b.path());
    for name in ["bench.jsonl", "scene_0000.json", "scene_0001.png"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    let boxes = a.path().join("boxes");
    let out = docground(&["extract-boxes", "--scene", p(&a.path().join("scene_0000.json")), "--tolerance", "0", "--out-dir", p(&boxes)]);
    assert!(out.status.success());
    let found: Value = serde_json::from_str(&fs::read_to_string(boxes.join("boxes.json")).unwrap()).unwrap();
    assert!(found.as_array().unwrap().iter().all(|b| b["status"] == "found"));
}

#[test]
fn post_annotate_and_parsing_tasks() {
    let dir = tempfile::tempdir().unwrap();
    let pages = dir.path().join("pages.jsonl");
    write_lines(
        &pages,
        &[json!({"kind": "poster", "id": "p1", "image": "p1.png", "text_with_box": [
            {"text": "Jazz Night", "bbox": [100, 40, 900, 120]},
            {"text": "Tickets 12 EUR", "bbox": [100, 150, 500, 190]}
        ]})],
    );
    let generated = dir.path().join("gen.jsonl");
    write_lines(
        &generated,
        &[
            json!({"id": "g1", "page": "p1", "question": "How much is a ticket?", "answer": "<ocr>Tickets 12 EUR</ocr>", "answer_class": "GA"}),
            json!({"id": "g2", "page": "p1", "question": "What event?", "answer": "<ocr>Opera</ocr>", "answer_class": "GA"}),
        ],
    );
    let out_dir = dir.path().join("pa");
    let out = docground(&["post-annotate", "--generated", p(&generated), "--pages", p(&pages), "--seed", "1", "--out-dir", p(&out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let samples = fs::read_to_string(out_dir.join("samples.jsonl")).unwrap();
    assert_eq!(samples.lines().count(), 1);
    assert!(samples.contains("<ocr>Tickets 12 EUR</ocr><bbox>100,150,500,190</bbox>"));
    let stats: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("stats.json")).unwrap()).unwrap();
    assert_eq!(stats["dropped"], json!(1));

    let tasks_dir = dir.path().join("pt");
    let out = docground(&["gen-parsing-tasks", "--pages", p(&pages), "--granularity", "paragraph,full_page", "--out-dir", p(&tasks_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_to_string(tasks_dir.join("parsing.jsonl")).unwrap().lines().count(), 5);
}
