use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tsi_core::pnm::Pixmap;

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    /// A 2x2-pixel image with one-pixel patches, so four tokens.
    fn new() -> Self {
        let ws = Self {
            dir: tempfile::tempdir().unwrap(),
        };
        ws.write("config.toml", "patch_size = 1\n");
        ws
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn p(&self, name: &str) -> String {
        self.path(name).to_str().unwrap().to_string()
    }

    fn write(&self, name: &str, text: &str) {
        std::fs::write(self.path(name), text).unwrap();
    }

    fn read(&self, name: &str) -> String {
        std::fs::read_to_string(self.path(name)).unwrap()
    }

    fn run(&self, args: &[&str]) -> Output {
        let config = self.p("config.toml");
        Command::new(env!("CARGO_BIN_EXE_tsi"))
            .args(["--config", &config])
            .args(args)
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) {
        let out = self.run(args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }

    fn manifest(&self, boxes: &str) {
        self.write(
            "manifest.jsonl",
            &format!(
                "{{\"model_ids\":[\"m\"]}}\n{{\"image_id\":\"a\",\"true_class\":\"c\",\"boxes\":{boxes},\"predictions\":[{{\"model_id\":\"m\",\"predicted_class\":\"c\",\"confidence\":0.9}}],\"width\":2,\"height\":2}}\n"
            ),
        );
    }

    fn scores(&self, image_id: &str, scores: &str) {
        self.write(
            "scores.jsonl",
            &format!("{{\"image_id\":\"{image_id}\",\"model_id\":\"m\",\"kind\":\"influence\",\"target_class\":0,\"base_confidence\":0.9,\"grid\":{{\"w\":2,\"h\":2,\"patch\":1}},\"scores\":{scores}}}\n"),
        );
    }

    fn tsi_rows(&self) -> Vec<serde_json::Value> {
        self.read("tsi.jsonl")
            .lines()
            .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
            .filter(|v| v.get("provenance").is_none())
            .collect()
    }
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn tsi_step(ws: &Workspace) -> Output {
    ws.run(&[
        "tsi",
        "--scores",
        &ws.p("scores.jsonl"),
        "--annotations",
        &ws.p("manifest.jsonl"),
        "--out",
        &ws.p("tsi.jsonl"),
    ])
}

#[test]
fn four_token_record_matches_hand_arithmetic() {
    let ws = Workspace::new();
    // left column inside: {0.1, 0.3} in, {0.2, 0.4} out
    ws.manifest("[[0,0,1,2]]");
    ws.scores("a", "[0.1,0.2,0.3,0.4]");
    ws.ok(&[
        "tsi",
        "--scores",
        &ws.p("scores.jsonl"),
        "--annotations",
        &ws.p("manifest.jsonl"),
        "--out",
        &ws.p("tsi.jsonl"),
    ]);
    let rows = ws.tsi_rows();
    assert_eq!(rows.len(), 1);
    let r = &rows[0];
    assert_eq!(r["subset"], "D_C");
    assert_eq!(r["coverage"], 2);
    assert!((r["a_tsi"].as_f64().unwrap() - 1.5).abs() < 1e-12);
    assert!((r["m_tsi"].as_f64().unwrap() - 4.0 / 3.0).abs() < 1e-12);
    assert_eq!(
        (r["a_flag"].as_str(), r["m_flag"].as_str()),
        (Some("finite"), Some("finite"))
    );

    ws.ok(&["aggregate", "--tsi", &ws.p("tsi.jsonl"), "--out", &ws.p("tables")]);
    let table = ws.read("tables/coverage_table.csv");
    let lines: Vec<&str> = table.lines().collect();
    assert!(lines[0].starts_with("# config_hash="));
    assert_eq!(lines[1], "metric,kind,region,model_id,subset,group,n,mean,std");
    assert!(lines.contains(&"A-TSI,influence,bbox,m,D_C,All,1,1.5,0"), "{table}");
    assert!(
        lines.contains(&"M-TSI,influence,bbox,m,D_C,1-40,1,1.33333,0"),
        "{table}"
    );
}

#[test]
fn full_image_box_gives_undefined_row() {
    let ws = Workspace::new();
    ws.manifest("[[0,0,2,2]]");
    ws.scores("a", "[0.1,0.2,0.3,0.4]");
    assert_eq!(code(&tsi_step(&ws)), 0);
    let r = &ws.tsi_rows()[0];
    assert_eq!(r["subset"], "D_L");
    assert_eq!(r["a_flag"], "undefined");
    assert_eq!(r["m_flag"], "undefined");
    assert!(r["a_tsi"].is_null() && r["m_tsi"].is_null());
}

#[test]
fn box_outside_the_image_skips_the_record() {
    let ws = Workspace::new();
    ws.manifest("[[5,5,9,9]]");
    ws.scores("a", "[0.1,0.2,0.3,0.4]");
    let out = tsi_step(&ws);
    assert_eq!(code(&out), 0);
    assert!(stderr(&out).contains("skipping image_id \"a\""));
    assert_eq!(ws.read("tsi.jsonl"), "");
}

#[test]
fn disjoint_scores_and_annotations_exit_2() {
    let ws = Workspace::new();
    ws.manifest("[[0,0,1,1]]");
    ws.scores("stranger", "[0.1,0.2,0.3,0.4]");
    let out = tsi_step(&ws);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("\"stranger\""));
}

#[test]
fn schema_violations_exit_3() {
    let ws = Workspace::new();
    ws.manifest("[[0,0,1,1]]");
    ws.scores("a", "[0.1,-0.2,0.3,0.4]");
    assert_eq!(code(&tsi_step(&ws)), 3);
    ws.scores("a", "[0.1,0.2,0.3]");
    assert_eq!(code(&tsi_step(&ws)), 3);
}

#[test]
fn offline_missing_record_names_the_image() {
    let ws = Workspace::new();
    ws.manifest("[[0,0,1,1]]");
    ws.scores("other", "[0.1,0.2,0.3,0.4]");
    let out = ws.run(&[
        "influence",
        "--annotations",
        &ws.p("manifest.jsonl"),
        "--predictor",
        "offline",
        "--scores",
        &ws.p("scores.jsonl"),
        "--out",
        &ws.p("out.jsonl"),
    ]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("\"a\""), "{}", stderr(&out));
}

#[test]
fn offline_passthrough_keeps_the_records() {
    let ws = Workspace::new();
    ws.manifest("[[0,0,1,1]]");
    ws.scores("a", "[0.1,0.2,0.30000000000000004,0.4]");
    ws.ok(&[
        "influence",
        "--annotations",
        &ws.p("manifest.jsonl"),
        "--predictor",
        "offline",
        "--scores",
        &ws.p("scores.jsonl"),
        "--out",
        &ws.p("out.jsonl"),
    ]);
    let out = ws.read("out.jsonl");
    let mut lines = out.lines();
    assert!(lines.next().unwrap().starts_with("{\"provenance\":"));
    assert_eq!(format!("{}\n", lines.next().unwrap()), ws.read("scores.jsonl"));
    assert!(lines.next().is_none());
}

#[test]
fn empty_corpus_gives_empty_output() {
    let ws = Workspace::new();
    ws.write("manifest.jsonl", "{\"model_ids\":[\"m\"]}\n");
    ws.ok(&[
        "influence",
        "--annotations",
        &ws.p("manifest.jsonl"),
        "--out",
        &ws.p("out.jsonl"),
    ]);
    assert_eq!(ws.read("out.jsonl"), "");
}

#[test]
fn malformed_tsi_rows_exit_2() {
    let ws = Workspace::new();
    ws.write("tsi.jsonl", "{\"image_id\":\"a\"}\n");
    let out = ws.run(&["aggregate", "--tsi", &ws.p("tsi.jsonl"), "--out", &ws.p("tables")]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("tsi.jsonl:1:"), "{}", stderr(&out));
}

#[test]
fn bad_config_is_an_input_error() {
    let ws = Workspace::new();
    ws.write("config.toml", "patch_size = 1\nmystery = true\n");
    ws.manifest("[[0,0,1,1]]");
    assert_eq!(
        code(&ws.run(&[
            "influence",
            "--annotations",
            &ws.p("manifest.jsonl"),
            "--out",
            &ws.p("o")
        ])),
        2
    );
    ws.write("config.toml", "threshold = \"3/2\"\n");
    assert_eq!(
        code(&ws.run(&[
            "influence",
            "--annotations",
            &ws.p("manifest.jsonl"),
            "--out",
            &ws.p("o")
        ])),
        2
    );
}

fn render(ws: &Workspace, scores: &str, patch: u32) -> Pixmap {
    let side = 2 * patch;
    ws.write(
        "r.jsonl",
        &format!("{{\"image_id\":\"r\",\"model_id\":\"m\",\"kind\":\"influence\",\"target_class\":0,\"base_confidence\":0.9,\"grid\":{{\"w\":{side},\"h\":{side},\"patch\":{patch}}},\"scores\":{scores}}}\n"),
    );
    ws.ok(&["render", "--scores", &ws.p("r.jsonl"), "--out", &ws.p("r.pgm")]);
    Pixmap::decode(&std::fs::read(ws.path("r.pgm")).unwrap()).unwrap()
}

#[test]
fn render_levels() {
    let ws = Workspace::new();
    assert_eq!(render(&ws, "[0.1,0.2,0.3,0.4]", 1).data, [64, 128, 191, 255]);
    assert!(render(&ws, "[0,0,0,0]", 3).data.iter().all(|&v| v == 0));

    let img = render(&ws, "[0,0,0.25,0]", 2);
    for y in 0..4 {
        for x in 0..4 {
            let want = if x < 2 && y >= 2 { 255 } else { 0 };
            assert_eq!(img.pixel(x, y), [want], "({x},{y})");
        }
    }
}

#[test]
fn rendered_header_carries_the_config_hash() {
    let ws = Workspace::new();
    render(&ws, "[0.1,0.2,0.3,0.4]", 1);
    let bytes = std::fs::read(ws.path("r.pgm")).unwrap();
    let text = String::from_utf8_lossy(&bytes[..40]);
    assert!(text.starts_with("P5\n# config_hash="), "{text}");
}

fn synth_and_score(dir: &Path, workers: &str) -> Vec<u8> {
    let corpus = dir.join("corpus");
    let run = |args: &[&str]| {
        let out = Command::new(env!("CARGO_BIN_EXE_tsi")).args(args).output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    };
    run(&[
        "--seed",
        "11",
        "synth",
        "--out",
        corpus.to_str().unwrap(),
        "--n-images",
        "4",
    ]);
    let manifest = corpus.join("manifest.jsonl");
    let scores = dir.join("s.jsonl");
    run(&[
        "--workers",
        workers,
        "influence",
        "--predictor",
        "planted",
        "--annotations",
        manifest.to_str().unwrap(),
        "--out",
        scores.to_str().unwrap(),
    ]);
    std::fs::read(scores).unwrap()
}

#[test]
fn synth_and_planted_influence_rerun_identically() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = synth_and_score(a.path(), "1");
    assert_eq!(first, synth_and_score(b.path(), "8"));
    assert_eq!(String::from_utf8(first).unwrap().lines().count(), 5);
}
