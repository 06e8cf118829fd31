//! The annotation data contract: synthetic output always validates, a dozen
//! deliberately broken files are each rejected at the exact offending field,
//! and canonical files survive parse and serialize byte for byte.

use hcap_core::annotation::{parse, serialize, validate, AnnotationError, Severity};
use hcap_core::synth::{generate, SynthConfig};
use serde_json::{json, Value};

/// A canonical three-person document to corrupt.
fn canonical() -> Value {
    let person = |i: usize, frame: u64, x: f64, t: (f64, f64), caption: &str| {
        json!({
            "person_index": i,
            "color_index": i - 1,
            "first_frame": frame,
            "bbox": { "x": x, "y": 200.0, "w": 80.0, "h": 160.0 },
            "appear_s": t.0,
            "disappear_s": t.1,
            "caption": caption,
        })
    };
    json!({
        "video_id": "contract_0001",
        "fps": 30.0,
        "frame_width": 1280,
        "frame_height": 720,
        "duration_s": 20.0,
        "scene_label": "fighting",
        "persons": [
            person(1, 60, 100.0, (2.0, 12.5), "the person in red clothes walks along the street then turns left"),
            person(2, 90, 400.0, (3.0, 15.0), "the person in blue clothes stands near the door then looks around"),
            person(3, 90, 700.0, (3.0, 18.0), "the person in green clothes walks toward the shop then stands still"),
        ],
    })
}

fn text(v: &Value) -> String {
    serde_json::to_string_pretty(v).unwrap() + "\n"
}

/// What a corrupted file must produce.
enum Expect {
    /// Schema-level rejection naming this path.
    Syntax(&'static str),
    /// Invariant rejection whose error paths are exactly these.
    Invalid(&'static [&'static str]),
}

struct Case {
    name: &'static str,
    corrupt: fn(&mut Value) -> Option<String>,
    expect: Expect,
}

const CASES: [Case; 12] = [
    Case {
        name: "palette violation",
        corrupt: |v| {
            v["persons"][1]["color_index"] = json!(5);
            None
        },
        expect: Expect::Invalid(&["persons[1].color_index"]),
    },
    Case {
        name: "reversed times",
        corrupt: |v| {
            v["persons"][0]["appear_s"] = json!(12.5);
            v["persons"][0]["disappear_s"] = json!(2.0);
            v["persons"][0]["first_frame"] = json!(60);
            None
        },
        // The first frame at 2 s now precedes the appearance at 12.5 s too.
        expect: Expect::Invalid(&["persons[0].appear_s", "persons[0].first_frame"]),
    },
    Case {
        name: "out-of-frame bbox",
        corrupt: |v| {
            v["persons"][2]["bbox"]["x"] = json!(1250.0);
            None
        },
        expect: Expect::Invalid(&["persons[2].bbox"]),
    },
    Case {
        name: "unknown scene label",
        corrupt: |v| {
            v["scene_label"] = json!("picnic");
            None
        },
        expect: Expect::Syntax("scene_label"),
    },
    Case {
        name: "person index gap",
        corrupt: |v| {
            v["persons"][2]["person_index"] = json!(4);
            v["persons"][2]["color_index"] = json!(3);
            None
        },
        expect: Expect::Invalid(&["persons[2].person_index"]),
    },
    Case {
        name: "disappears after the video ends",
        corrupt: |v| {
            v["persons"][1]["disappear_s"] = json!(21.0);
            None
        },
        expect: Expect::Invalid(&["persons[1].disappear_s"]),
    },
    Case {
        name: "empty caption",
        corrupt: |v| {
            v["persons"][0]["caption"] = json!("  ");
            None
        },
        expect: Expect::Invalid(&["persons[0].caption"]),
    },
    Case {
        name: "tie broken right to left",
        corrupt: |v| {
            v["persons"][2]["bbox"]["x"] = json!(300.0);
            None
        },
        expect: Expect::Invalid(&["persons[2].first_frame"]),
    },
    Case {
        name: "zero-height bbox",
        corrupt: |v| {
            v["persons"][1]["bbox"]["h"] = json!(0.0);
            None
        },
        expect: Expect::Invalid(&["persons[1].bbox"]),
    },
    Case {
        name: "wrongly typed field",
        corrupt: |v| {
            v["persons"][1]["bbox"]["w"] = json!("wide");
            None
        },
        expect: Expect::Syntax("persons[1].bbox.w"),
    },
    Case {
        name: "unknown field",
        corrupt: |v| {
            v["persons"][0]["colour"] = json!("red");
            None
        },
        expect: Expect::Syntax("persons[0].colour"),
    },
    Case {
        name: "non-positive frame rate",
        corrupt: |v| {
            v["fps"] = json!(0.0);
            // Without a frame rate no frame checks apply; the fps field is blamed alone.
            Some(text(v))
        },
        expect: Expect::Invalid(&["fps"]),
    },
];

#[test]
fn the_canonical_fixture_is_valid_and_round_trips() {
    // `Value` sorts keys, so canonical order comes from one serialize pass.
    let a = parse(&text(&canonical())).unwrap();
    assert!(validate(&a).iter().all(|d| d.severity != Severity::Error));
    let doc = serialize(&a);
    assert!(doc.starts_with("{\n  \"video_id\""));
    assert_eq!(serialize(&parse(&doc).unwrap()), doc);
}

#[test]
fn each_corrupted_file_is_rejected_at_its_field() {
    for case in &CASES {
        let mut v = canonical();
        let doc = (case.corrupt)(&mut v).unwrap_or_else(|| text(&v));
        let err = parse(&doc).expect_err(case.name);
        match (&case.expect, &err) {
            (Expect::Syntax(want), AnnotationError::Syntax { path, .. }) => {
                assert_eq!(path, want, "{}: {err}", case.name)
            }
            (Expect::Invalid(want), AnnotationError::Invalid(diags)) => {
                let mut got: Vec<&str> = diags.iter().map(|d| d.path.as_str()).collect();
                got.sort_unstable();
                got.dedup();
                assert_eq!(got, *want, "{}: {err}", case.name);
                assert!(diags.iter().all(|d| d.severity == Severity::Error));
            }
            _ => panic!("{}: unexpected rejection kind {err:?}", case.name),
        }
    }
}

#[test]
fn truncated_document_is_a_syntax_error() {
    let doc = text(&canonical());
    let cut = &doc[..doc.len() / 2];
    assert!(matches!(parse(cut), Err(AnnotationError::Syntax { .. })));
}

#[test]
fn all_synthetic_output_validates_and_round_trips() {
    let videos = generate(&SynthConfig {
        seed: 2,
        videos: 100,
        ..SynthConfig::default()
    })
    .unwrap();
    for v in &videos {
        let doc = serialize(&v.annotation);
        let back = parse(&doc).unwrap_or_else(|e| panic!("{}: {e}", v.annotation.video_id));
        assert_eq!(back, v.annotation);
        assert_eq!(serialize(&back), doc, "{}", v.annotation.video_id);
        let errors: Vec<_> = validate(&back)
            .into_iter()
            .filter(|d| d.severity == Severity::Error)
            .collect();
        assert!(errors.is_empty(), "{errors:?}");
    }
}
