//! The JSONL score-record format shared with external exporters.

use proptest::prelude::*;
use tsi_core::grid::build_grid;
use tsi_core::influence::{load_score_records, write_score_records, InfluenceMap, RecordErrorKind, ScoreKind};

const LINE: &str = r#"{"image_id":"n01440764_10026","model_id":"deit-s","kind":"influence","target_class":0,"base_confidence":0.75,"grid":{"w":32,"h":16,"patch":16},"scores":[0.25,0.0]}"#;

#[test]
fn writes_the_exact_field_layout() {
    let maps = load_score_records(LINE.as_bytes()).unwrap();
    let mut out = Vec::new();
    write_score_records(&mut out, &maps).unwrap();
    assert_eq!(String::from_utf8(out).unwrap(), format!("{LINE}\n"));
}

#[test]
fn provenance_and_blank_lines_are_skipped() {
    let text = format!("{{\"provenance\":{{\"tool\":\"x\"}}}}\n\n{LINE}\n");
    assert_eq!(load_score_records(text.as_bytes()).unwrap().len(), 1);
}

fn kind_of(line: &str) -> RecordErrorKind {
    load_score_records(line.as_bytes()).unwrap_err().kind
}

#[test]
fn violations_are_classified() {
    assert!(matches!(
        kind_of(&LINE.replace("[0.25,0.0]", "[0.25,-0.1]")),
        RecordErrorKind::NegativeScore { index: 1 }
    ));
    assert!(matches!(
        kind_of(&LINE.replace("[0.25,0.0]", "[0.25]")),
        RecordErrorKind::LengthMismatch { got: 1, expected: 2 }
    ));
    for bad in [
        LINE.replace("\"influence\"", "\"gradient\""),
        LINE.replace("0.75", "1.5"),
        LINE.replace("[0.25,0.0]", "[1.25,0.0]"),
        LINE.replace("\"patch\":16", "\"patch\":5"),
        LINE.replace("}", ",\"extra\":1}"),
        LINE.replace("\"target_class\":0,", ""),
    ] {
        assert!(matches!(kind_of(&bad), RecordErrorKind::SchemaViolation(_)), "{bad}");
    }
    // attention weights are not capped at one
    assert!(load_score_records(
        LINE.replace("\"influence\"", "\"attention\"")
            .replace("[0.25,0.0]", "[1.25,0.0]")
            .as_bytes()
    )
    .is_ok());
}

#[test]
fn error_names_the_line() {
    let text = format!("{LINE}\n{LINE}\n{{}}\n");
    assert_eq!(load_score_records(text.as_bytes()).unwrap_err().line, 3);
}

proptest! {
    #[test]
    fn floats_survive_a_write_and_read(scores in prop::collection::vec(0.0f64..=1.0, 6), base in 0.0f64..=1.0) {
        let map = InfluenceMap {
            image_id: "i".into(),
            model_id: "m".into(),
            target_class: 3,
            base_confidence: base,
            grid: build_grid(3, 2, 1).unwrap(),
            scores,
            kind: ScoreKind::Saliency,
        };
        let mut out = Vec::new();
        write_score_records(&mut out, [&map]).unwrap();
        let back = load_score_records(out.as_slice()).unwrap();
        prop_assert_eq!(back, vec![map]);
    }
}
