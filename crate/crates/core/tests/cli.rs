use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_scenesense");

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn run(args: &[&str]) -> Run {
    let out = Command::new(BIN).args(args).output().expect("spawn scenesense");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Preprocess the toy fixture into `dir` and return the cleaned graph path.
fn preprocessed(dir: &Path) -> PathBuf {
    let out = dir.join("pre");
    let r = run(&[
        "preprocess",
        s(&fixture("toy_graph.json")),
        "--label-space",
        s(&fixture("toy_label_space.json")),
        "--out",
        s(&out),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    out.join("toy_graph.json")
}

fn space() -> String {
    fixture("toy_label_space.json").to_str().unwrap().to_string()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn preprocess_writes_graph_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let graph = preprocessed(dir.path());
    assert!(graph.exists());
    let report = std::fs::read_to_string(dir.path().join("pre/toy_graph.report.txt")).unwrap();
    // Two rejected objects, one object in the excluded yard, one misplaced lamp.
    assert!(report.contains("    ceiling: 1\n    wall: 1\n"), "{report}");
    assert!(report.contains("objects in excluded rooms: 1"), "{report}");
    assert!(
        report.contains("objects reassigned: 1\n    b1_r3_o9: b1_r3 -> b1_r1"),
        "{report}"
    );
    let doc = read_json(&graph);
    assert_eq!(doc["rooms"].as_array().unwrap().len(), 29);
    assert_eq!(doc["objects"].as_array().unwrap().len(), 101);
}

#[test]
fn missing_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let r = run(&[
        "preprocess",
        "/nonexistent/graph.json",
        "--label-space",
        &space(),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("input not found"), "{}", r.stderr);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["frobnicate"]).code, 2);
    assert_eq!(run(&["cooccur", "--mode", "sideways"]).code, 2);
    assert_eq!(run(&["--help"]).code, 0);
}

/// Tally presence counts straight from the document JSON.
fn oracle_counts(graph: &Value) -> BTreeMap<(String, String), u64> {
    let mut room_label = BTreeMap::new();
    for room in graph["rooms"].as_array().unwrap() {
        room_label.insert(
            room["id"].as_str().unwrap().to_string(),
            room["label"].as_str().unwrap().to_string(),
        );
    }
    let mut seen = std::collections::BTreeSet::new();
    let mut counts = BTreeMap::new();
    for object in graph["objects"].as_array().unwrap() {
        let room = object["room_id"].as_str().unwrap();
        let label = object["label"].as_str().unwrap();
        if seen.insert((room.to_string(), label.to_string())) {
            *counts.entry((label.to_string(), room_label[room].clone())).or_insert(0) += 1;
        }
    }
    counts
}

#[test]
fn cooccur_gt_matches_oracle_tally_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let graph = preprocessed(dir.path());
    let out = dir.path().join("co");
    let args = [
        "cooccur",
        s(&graph),
        "--label-space",
        &space(),
        "--full-dataset",
        "--out",
        s(&out),
    ];
    assert_eq!(run(&args).code, 0);
    let oracle = oracle_counts(&read_json(&graph));
    let mut reader = csv::Reader::from_path(out.join("table.csv")).unwrap();
    let header = reader.headers().unwrap().clone();
    for record in reader.records() {
        let record = record.unwrap();
        for (col, cell) in header.iter().zip(record.iter()).skip(1) {
            let expected = oracle
                .get(&(record[0].to_string(), col.to_string()))
                .copied()
                .unwrap_or(0);
            assert_eq!(cell.parse::<u64>().unwrap(), expected, "{} / {col}", &record[0]);
        }
    }
    let first = std::fs::read(out.join("table.csv")).unwrap();
    let first_index = std::fs::read(out.join("index.csv")).unwrap();
    assert_eq!(run(&args).code, 0);
    assert_eq!(first, std::fs::read(out.join("table.csv")).unwrap());
    assert_eq!(first_index, std::fs::read(out.join("index.csv")).unwrap());
}

#[test]
fn cooccur_proxy_needs_backend_and_rows_sum_to_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("proxy");
    let r = run(&[
        "cooccur",
        "--mode",
        "proxy",
        "--label-space",
        &space(),
        "--out",
        s(&out),
    ]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("backend"), "{}", r.stderr);
    let r = run(&[
        "cooccur",
        "--mode",
        "proxy",
        "--backend",
        "mock",
        "--label-space",
        &space(),
        "--out",
        s(&out),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let mut reader = csv::Reader::from_path(out.join("table.csv")).unwrap();
    for record in reader.records() {
        let record = record.unwrap();
        let total: f64 = record.iter().skip(1).map(|c| c.parse::<f64>().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }
    assert_eq!(read_json(&out.join("table.json"))["source"], "proxy");
}

#[test]
fn unwritable_out_dir_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let graph = preprocessed(dir.path());
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "not a directory").unwrap();
    let r = run(&[
        "cooccur",
        s(&graph),
        "--label-space",
        &space(),
        "--out",
        s(&blocker.join("sub")),
    ]);
    assert_eq!(r.code, 3, "{}", r.stderr);
}

fn table_for(dir: &Path, graph: &Path) -> PathBuf {
    let out = dir.join("co");
    let r = run(&["cooccur", s(graph), "--label-space", &space(), "--out", s(&out)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    out
}

#[test]
fn statistical_predictions_match_hand_naive_bayes() {
    let dir = tempfile::tempdir().unwrap();
    let graph = preprocessed(dir.path());
    let co = table_for(dir.path(), &graph);
    let out = dir.path().join("cls");
    let r = run(&[
        "classify",
        s(&graph),
        "--label-space",
        &space(),
        "--method",
        "statistical",
        "--table",
        s(&co.join("table.csv")),
        "--out",
        s(&out),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);

    let mut reader = csv::Reader::from_path(co.join("table.csv")).unwrap();
    let rooms: Vec<String> = reader.headers().unwrap().iter().skip(1).map(str::to_string).collect();
    let mut counts: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for record in reader.records() {
        let record = record.unwrap();
        counts.insert(
            record[0].to_string(),
            record.iter().skip(1).map(|c| c.parse().unwrap()).collect(),
        );
    }
    let doc = read_json(&graph);
    let mut objects: BTreeMap<&str, std::collections::BTreeSet<&str>> = BTreeMap::new();
    for o in doc["objects"].as_array().unwrap() {
        objects
            .entry(o["room_id"].as_str().unwrap())
            .or_default()
            .insert(o["label"].as_str().unwrap());
    }
    let predictions = std::fs::read_to_string(out.join("predictions.jsonl")).unwrap();
    assert_eq!(predictions.lines().count(), 29);
    for line in predictions.lines() {
        let p: Value = serde_json::from_str(line).unwrap();
        let labels = &objects[p["room_id"].as_str().unwrap()];
        let mut best = (f64::NEG_INFINITY, "");
        for (r, room) in rooms.iter().enumerate() {
            let score: f64 = labels
                .iter()
                .map(|o| {
                    let row = &counts[*o];
                    let total: f64 = row.iter().sum::<f64>() + rooms.len() as f64;
                    ((row[r] + 1.0) / total).ln()
                })
                .sum();
            if score > best.0 + 1e-12 {
                best = (score, room);
            }
        }
        assert_eq!(p["predicted"], best.1, "{line}");
    }
}

#[test]
fn missing_artifacts_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let graph = preprocessed(dir.path());
    let out = dir.path().join("x");
    let r = run(&[
        "classify",
        s(&graph),
        "--label-space",
        &space(),
        "--method",
        "embedding",
        "--backend",
        "mock",
        "--out",
        s(&out),
    ]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("--head"), "{}", r.stderr);
    let r = run(&[
        "classify",
        s(&graph),
        "--label-space",
        &space(),
        "--method",
        "statistical",
        "--out",
        s(&out),
    ]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("--table"), "{}", r.stderr);
}

#[test]
fn unreachable_backend_exits_4_without_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let graph = preprocessed(dir.path());
    let co = table_for(dir.path(), &graph);
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let endpoint = format!("http://{}", listener.local_addr().unwrap());
    drop(listener);
    let config = dir.path().join("cfg.json");
    std::fs::write(
        &config,
        r#"{"backend": {"http": {"backoff_ms": 1, "max_attempts": 2}}}"#,
    )
    .unwrap();
    let out = dir.path().join("zs");
    let r = run(&[
        "classify",
        s(&graph),
        "--config",
        s(&config),
        "--label-space",
        &space(),
        "--method",
        "zeroshot",
        "--index",
        s(&co.join("index.csv")),
        "--backend",
        "http",
        "--endpoint",
        &endpoint,
        "--model",
        "m",
        "--out",
        s(&out),
    ]);
    assert_eq!(r.code, 4, "{}", r.stderr);
    assert!(!out.join("predictions.jsonl").exists());
}

#[test]
fn zeroshot_with_mock_matches_statistical_when_k_covers_rooms() {
    let dir = tempfile::tempdir().unwrap();
    let graph = preprocessed(dir.path());
    let co = table_for(dir.path(), &graph);
    let table = co.join("table.csv");
    let index = co.join("index.csv");
    let mut predictions = Vec::new();
    for (method, extra) in [
        ("statistical", vec![]),
        ("zeroshot", vec!["--backend", "mock", "--k", "10"]),
    ] {
        let out = dir.path().join(method);
        let mut args = vec![
            "classify",
            s(&graph),
            "--label-space",
            Box::leak(space().into_boxed_str()),
            "--method",
            method,
            "--table",
            s(&table),
            "--index",
            s(&index),
            "--out",
            s(&out),
        ];
        args.extend(extra);
        let r = run(&args);
        assert_eq!(r.code, 0, "{}", r.stderr);
        let text = std::fs::read_to_string(out.join("predictions.jsonl")).unwrap();
        predictions.push(
            text.lines()
                .map(|l| serde_json::from_str::<Value>(l).unwrap()["predicted"].clone())
                .collect::<Vec<_>>(),
        );
    }
    assert_eq!(predictions[0], predictions[1]);
}

#[test]
fn bootstrap_four_object_room_gives_32_rows() {
    let dir = tempfile::tempdir().unwrap();
    let graph = dir.path().join("one.json");
    let objects: Vec<Value> = ["toilet", "sink", "bathtub", "lamp"]
        .iter()
        .enumerate()
        .map(|(i, l)| serde_json::json!({"id": format!("o{i}"), "label": l, "room_id": "r", "position": [1.0, 1.0, 1.0]}))
        .collect();
    let doc = serde_json::json!({
        "label_space": "toy",
        "rooms": [{"id": "r", "label": "bathroom", "building": "b", "bbox_min": [0.0, 0.0, 0.0], "bbox_max": [4.0, 3.0, 2.5]}],
        "objects": objects,
    });
    std::fs::write(&graph, doc.to_string()).unwrap();
    let index = dir.path().join("index.csv");
    std::fs::write(
        &index,
        "object_label,entropy\ntoilet,0.1\nsink,0.5\nbathtub,0.2\nlamp,1.0\n",
    )
    .unwrap();
    let out = dir.path().join("boot");
    let r = run(&[
        "bootstrap",
        s(&graph),
        "--label-space",
        &space(),
        "--index",
        s(&index),
        "--full-dataset",
        "--out",
        s(&out),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let rows = std::fs::read_to_string(out.join("bootstrap.jsonl")).unwrap();
    assert_eq!(rows.lines().count(), 2 + 6 + 24);
    let first: Value = serde_json::from_str(rows.lines().next().unwrap()).unwrap();
    assert_eq!(first["text"], "This room contains toilet.");
    assert_eq!(first["label"], "bathroom");
}

#[test]
fn export_structured_ablation_flags() {
    let dir = tempfile::tempdir().unwrap();
    let graph = preprocessed(dir.path());
    let out = dir.path().join("st");
    let r = run(&[
        "export-structured",
        s(&graph),
        "--label-space",
        &space(),
        "--no-positions",
        "--out",
        s(&out),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let text = std::fs::read_to_string(out.join("structured.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 29);
    for line in text.lines() {
        let row: Value = serde_json::from_str(line).unwrap();
        let body = row["text"].as_str().unwrap();
        assert!(
            body.starts_with("Room Size:\nx 4.000\ny 3.000\nz 2.500\n\nObject Locations:\n"),
            "{body}"
        );
        let after = body.split("Object Locations:\n").nth(1).unwrap();
        assert!(after
            .lines()
            .all(|l| !l.starts_with("x ") && !l.starts_with("y ") && !l.starts_with("z ")));
    }
    let r = run(&[
        "export-structured",
        s(&graph),
        "--label-space",
        &space(),
        "--no-positions",
        "--no-room-size",
        "--out",
        s(&out),
    ]);
    assert_eq!(r.code, 0);
    let text = std::fs::read_to_string(out.join("structured.jsonl")).unwrap();
    let row: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(row["text"], "Object Locations:\ntoilet\n\nsink\n\nbathtub\n");
}

#[test]
fn eval_full_dataset_reports_parenthetical_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let graph = preprocessed(dir.path());
    let co = table_for(dir.path(), &graph);
    let out = dir.path().join("ev");
    let r = run(&[
        "eval",
        s(&graph),
        "--label-space",
        &space(),
        "--method",
        "statistical",
        "--table",
        s(&co.join("table.csv")),
        "--full-dataset",
        "--out",
        s(&out),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stdout.contains("accuracy: 100.0% (93.1%)"), "{}", r.stdout);
    let report = read_json(&out.join("report.json"));
    assert_eq!(report["split"], "full");
    assert_eq!(report["total"], 29);

    let plot = dir.path().join("plot");
    let r = run(&["report", s(&out.join("report.json")), "--out", s(&plot)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let csv_text = std::fs::read_to_string(plot.join("per_label.csv")).unwrap();
    assert_eq!(csv_text, std::fs::read_to_string(out.join("per_label.csv")).unwrap());
    assert!(r.stdout.contains("overall"));
}

#[test]
fn train_then_classify_with_embedding_head() {
    let dir = tempfile::tempdir().unwrap();
    let graph = preprocessed(dir.path());
    let co = table_for(dir.path(), &graph);
    let config = dir.path().join("cfg.json");
    std::fs::write(
        &config,
        r#"{"train": {"epochs": 60, "batch_size": 16, "learning_rate": 0.01, "hidden": [32]}, "backend": {"kind": "mock", "mock_dimension": 64}}"#,
    )
    .unwrap();
    let art = dir.path().join("art");
    let common = [
        "--config",
        s(&config),
        "--label-space",
        Box::leak(space().into_boxed_str()),
    ];
    let index = co.join("index.csv");
    let mut train = vec!["train", s(&graph), "--index", s(&index), "--out", s(&art)];
    train.extend(common);
    let r = run(&train);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let head = read_json(&art.join("head.json"));
    assert_eq!(head["dims"], serde_json::json!([64, 32, 4]));
    assert_eq!(head["label_order"].as_array().unwrap().len(), 4);
    let curve = read_json(&art.join("training_curve.json"));
    assert_eq!(curve["epochs"].as_array().unwrap().len(), 60);

    let out = dir.path().join("emb");
    let head_path = art.join("head.json");
    let mut eval = vec![
        "eval",
        s(&graph),
        "--method",
        "embedding",
        "--head",
        s(&head_path),
        "--index",
        s(&index),
        "--full-dataset",
        "--out",
        s(&out),
    ];
    eval.extend(common);
    let r = run(&eval);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let report = read_json(&out.join("report.json"));
    assert!(report["overall_accuracy"].as_f64().unwrap() > 0.5, "{report}");

    // A head trained on 64-dimensional vectors cannot take 32-dimensional ones.
    let mut bad = eval.clone();
    let small = dir.path().join("small.json");
    std::fs::write(&small, r#"{"backend": {"kind": "mock", "mock_dimension": 32}}"#).unwrap();
    let at = bad.iter().position(|a| *a == s(&config)).unwrap();
    bad[at] = s(&small);
    assert_eq!(run(&bad).code, 2);
}

#[test]
fn holdout_and_transfer_modes_run() {
    let dir = tempfile::tempdir().unwrap();
    let graph = preprocessed(dir.path());
    let co = table_for(dir.path(), &graph);
    let config = dir.path().join("cfg.json");
    std::fs::write(
        &config,
        r#"{"train": {"epochs": 20, "batch_size": 16, "learning_rate": 0.01, "hidden": [16]},
            "backend": {"kind": "mock", "mock_dimension": 32}, "split": {"ratios": [0.6, 0.4, 0.0]}}"#,
    )
    .unwrap();
    let out = dir.path().join("hold");
    let r = run(&[
        "eval",
        s(&graph),
        "--config",
        s(&config),
        "--label-space",
        &space(),
        "--index",
        s(&co.join("index.csv")),
        "--holdout",
        "toilet,bed",
        "--out",
        s(&out),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let report = read_json(&out.join("holdout.json"));
    assert_eq!(report["per_object"]["toilet"]["total"], 6);
    assert_eq!(report["per_object"]["bed"]["total"], 6);

    let out = dir.path().join("transfer");
    let r = run(&[
        "eval",
        s(&graph),
        "--config",
        s(&config),
        "--label-space",
        &space(),
        "--index",
        s(&co.join("index.csv")),
        "--target-graphs",
        s(&graph),
        "--target-label-space",
        &space(),
        "--target-index",
        s(&co.join("index.csv")),
        "--out",
        s(&out),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(read_json(&out.join("report.json"))["split"]
        .as_str()
        .unwrap()
        .starts_with("transfer:"));
}
