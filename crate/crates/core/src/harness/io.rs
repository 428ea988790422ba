//! Newline-delimited JSON records for ground truth and predictions.
//!
//! Ground truth, one object per line:
//! `{"image": "a", "box": [x1, y1, x2, y2], "kind": "fg", "class": 0}`
//! (`kind` is `"fg"` or `"ood"`; `class` is required for `fg`).
//!
//! Predictions start with a header line `{"n_classes": N}`, then either
//! `{"image": .., "box": [..], "scores": [..]}` with `N` scores or the
//! shorthand `{"image": .., "box": [..], "conf": x, "class": k}`, which
//! expands to `x` at `k` and `(1 - x) / (N - 1)` everywhere else.
//!
//! Blank lines are skipped. Errors carry 1-based line numbers.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::matching::{GroundTruthObject, ObjectKind, Prediction};

#[derive(Deserialize)]
struct GtRecord {
    image: String,
    #[serde(rename = "box")]
    bbox: [f64; 4],
    kind: String,
    class: Option<Value>,
}

#[derive(Deserialize)]
struct PredRecord {
    image: String,
    #[serde(rename = "box")]
    bbox: [f64; 4],
    scores: Option<Vec<f64>>,
    conf: Option<f64>,
    class: Option<Value>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    n_classes: usize,
}

fn err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn class_id(v: &Value, line: usize) -> Result<usize> {
    v.as_u64().map(|c| c as usize).ok_or_else(|| {
        err(
            line,
            format!("class must be a non-negative integer, got {v}"),
        )
    })
}

fn parse_box(b: [f64; 4], line: usize) -> Result<BoundingBox> {
    BoundingBox::try_from(b).map_err(|e| err(line, e.to_string()))
}

/// Yield `(line number, content)` for non-blank lines.
fn lines<R: BufRead>(reader: R) -> impl Iterator<Item = Result<(usize, String)>> {
    reader
        .lines()
        .enumerate()
        .map(|(i, l)| l.map(|s| (i + 1, s)).map_err(Error::from))
        .filter(|r| !matches!(r, Ok((_, s)) if s.trim().is_empty()))
}

pub fn parse_ground_truth<R: BufRead>(reader: R) -> Result<Vec<GroundTruthObject>> {
    let mut out = Vec::new();
    for item in lines(reader) {
        let (line, text) = item?;
        let rec: GtRecord = serde_json::from_str(&text).map_err(|e| err(line, e.to_string()))?;
        let bbox = parse_box(rec.bbox, line)?;
        let kind = match rec.kind.as_str() {
            "fg" => {
                let c = rec
                    .class
                    .as_ref()
                    .ok_or_else(|| err(line, "foreground object without a class"))?;
                ObjectKind::Foreground(class_id(c, line)?)
            }
            "ood" => {
                if rec.class.is_some() {
                    log::warn!("line {line}: class on an OOD object is ignored");
                }
                ObjectKind::Ood
            }
            other => {
                return Err(err(
                    line,
                    format!("unknown kind {other:?}, expected \"fg\" or \"ood\""),
                ))
            }
        };
        out.push(GroundTruthObject::new(rec.image, bbox, kind));
    }
    Ok(out)
}

/// Returns the class count from the header and the predictions.
pub fn parse_predictions<R: BufRead>(reader: R) -> Result<(usize, Vec<Prediction>)> {
    let mut it = lines(reader);
    let n_classes = match it.next() {
        None => return Err(err(1, "missing {\"n_classes\": N} header")),
        Some(item) => {
            let (line, text) = item?;
            let h: Header = serde_json::from_str(&text).map_err(|e| {
                err(
                    line,
                    format!("bad header, expected {{\"n_classes\": N}}: {e}"),
                )
            })?;
            if h.n_classes == 0 {
                return Err(err(line, "n_classes must be positive"));
            }
            h.n_classes
        }
    };

    let mut out = Vec::new();
    for item in it {
        let (line, text) = item?;
        let rec: PredRecord = serde_json::from_str(&text).map_err(|e| err(line, e.to_string()))?;
        let bbox = parse_box(rec.bbox, line)?;
        let scores = match (rec.scores, rec.conf) {
            (Some(_), Some(_)) => {
                return Err(err(line, "give either scores or conf/class, not both"))
            }
            (Some(s), None) => {
                if s.len() != n_classes {
                    return Err(err(
                        line,
                        format!("{} scores but the header says {n_classes} classes", s.len()),
                    ));
                }
                s
            }
            (None, Some(conf)) => {
                let k = rec
                    .class
                    .as_ref()
                    .ok_or_else(|| err(line, "conf shorthand needs a class"))
                    .and_then(|c| class_id(c, line))?;
                if k >= n_classes {
                    return Err(err(
                        line,
                        format!("class {k} out of range for {n_classes} classes"),
                    ));
                }
                expand_shorthand(conf, k, n_classes)
            }
            (None, None) => return Err(err(line, "prediction needs scores or conf/class")),
        };
        out.push(Prediction::new(rec.image, bbox, scores).map_err(|e| err(line, e.to_string()))?);
    }
    Ok((n_classes, out))
}

/// `conf` at `class`, the remainder spread evenly over the other classes.
pub fn expand_shorthand(conf: f64, class: usize, n_classes: usize) -> Vec<f64> {
    let rest = if n_classes > 1 {
        (1.0 - conf) / (n_classes - 1) as f64
    } else {
        0.0
    };
    (0..n_classes)
        .map(|i| if i == class { conf } else { rest })
        .collect()
}

pub fn write_ground_truth<W: Write>(mut w: W, gts: &[GroundTruthObject]) -> Result<()> {
    for g in gts {
        let rec = match g.kind {
            ObjectKind::Foreground(c) => serde_json::json!({
                "image": g.image_id, "box": g.bbox.to_array(), "kind": "fg", "class": c
            }),
            ObjectKind::Ood => serde_json::json!({
                "image": g.image_id, "box": g.bbox.to_array(), "kind": "ood"
            }),
        };
        writeln!(w, "{rec}")?;
    }
    Ok(())
}

pub fn write_predictions<W: Write>(mut w: W, n_classes: usize, preds: &[Prediction]) -> Result<()> {
    writeln!(
        w,
        "{}",
        serde_json::to_string(&Header { n_classes }).expect("header")
    )?;
    for p in preds {
        let rec = serde_json::json!({
            "image": p.image_id, "box": p.bbox.to_array(), "scores": p.scores()
        });
        writeln!(w, "{rec}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_foreground_object() {
        let g = parse_ground_truth(
            r#"{"image":"a","box":[0,0,10,10],"kind":"fg","class":0}"#.as_bytes(),
        )
        .unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].kind, ObjectKind::Foreground(0));
        assert_eq!(g[0].bbox.area(), 100.0);
    }

    #[test]
    fn empty_stream() {
        assert!(parse_ground_truth("".as_bytes()).unwrap().is_empty());
        assert!(parse_ground_truth("\n\n".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn ood_class_is_ignored() {
        let g = parse_ground_truth(
            r#"{"image":"a","box":[0,0,1,1],"kind":"ood","class":2}"#.as_bytes(),
        )
        .unwrap();
        assert_eq!(g[0].kind, ObjectKind::Ood);
        let mut buf = Vec::new();
        write_ground_truth(&mut buf, &g).unwrap();
        assert!(!String::from_utf8(buf.clone()).unwrap().contains("class"));
        assert_eq!(parse_ground_truth(buf.as_slice()).unwrap(), g);
    }

    #[test]
    fn ground_truth_errors_carry_line_numbers() {
        let text = "{\"image\":\"a\",\"box\":[0,0,1,1],\"kind\":\"ood\"}\n\n{\"image\":\"a\",\"box\":[0,0,1,1],\"kind\":\"fg\"}\n";
        assert!(matches!(
            parse_ground_truth(text.as_bytes()),
            Err(Error::Parse { line: 3, .. })
        ));
        let bad_box = r#"{"image":"a","box":[5,0,1,1],"kind":"ood"}"#;
        assert!(matches!(
            parse_ground_truth(bad_box.as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
        let garbage = "{\"image\":\"a\",\"box\":[0,0,1,1],\"kind\":\"ood\"}\nnot json";
        assert!(matches!(
            parse_ground_truth(garbage.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
        let kind = r#"{"image":"a","box":[0,0,1,1],"kind":"bg"}"#;
        assert!(parse_ground_truth(kind.as_bytes()).is_err());
        let neg = r#"{"image":"a","box":[0,0,1,1],"kind":"fg","class":-1}"#;
        assert!(parse_ground_truth(neg.as_bytes()).is_err());
    }

    #[test]
    fn prediction_forms() {
        let text = r#"{"n_classes": 3}
{"image":"a","box":[0,0,1,1],"scores":[0.1,0.85,0.05]}
{"image":"a","box":[0,0,1,1],"conf":0.9,"class":1}
{"image":"b","box":[0,0,1,1],"scores":[0.5,0.5,0.5]}
"#;
        let (n, p) = parse_predictions(text.as_bytes()).unwrap();
        assert_eq!(n, 3);
        assert_eq!(p[0].confidence(), 0.85);
        let s = p[1].scores();
        assert_eq!(s[1], 0.9);
        assert!((s[0] - 0.05).abs() < 1e-15 && (s[2] - 0.05).abs() < 1e-15);
        // unnormalised detector scores are accepted
        assert_eq!(p[2].confidence(), 0.5);
    }

    #[test]
    fn prediction_errors() {
        let wrong_len =
            "{\"n_classes\": 3}\n{\"image\":\"a\",\"box\":[0,0,1,1],\"scores\":[0.1,0.9]}";
        assert!(matches!(
            parse_predictions(wrong_len.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
        let out_of_range =
            "{\"n_classes\": 2}\n{\"image\":\"a\",\"box\":[0,0,1,1],\"scores\":[0.1,1.9]}";
        assert!(parse_predictions(out_of_range.as_bytes()).is_err());
        let bad_class =
            "{\"n_classes\": 2}\n{\"image\":\"a\",\"box\":[0,0,1,1],\"conf\":0.5,\"class\":2}";
        assert!(parse_predictions(bad_class.as_bytes()).is_err());
        let both = "{\"n_classes\": 1}\n{\"image\":\"a\",\"box\":[0,0,1,1],\"conf\":0.5,\"class\":0,\"scores\":[0.5]}";
        assert!(parse_predictions(both.as_bytes()).is_err());
        assert!(parse_predictions("".as_bytes()).is_err());
        assert!(parse_predictions("{\"n_classes\": 0}".as_bytes()).is_err());
    }

    #[test]
    fn single_class_shorthand() {
        assert_eq!(expand_shorthand(0.7, 0, 1), vec![0.7]);
    }
}
