//! Stroke-5 JSON and stroke-3 NDJSON ingestion and serialization.

use serde::{Deserialize, Serialize};

use super::{PenState, Point, SketchError, VectorSketch, DEFAULT_CANVAS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SketchFormat {
    /// `{"canvas":[W,H],"points":[[x,y,qd,qu,qe],...]}`
    Stroke5Json,
    /// One drawing per line, QuickDraw style `{"strokes":[[[x...],[y...]],...]}`
    /// or delta triples `{"stroke3":[[dx,dy,lift],...]}`.
    Stroke3Ndjson,
}

impl std::str::FromStr for SketchFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "stroke5-json" | "stroke5" | "json" => Ok(SketchFormat::Stroke5Json),
            "stroke3-ndjson" | "stroke3" | "ndjson" => Ok(SketchFormat::Stroke3Ndjson),
            other => Err(format!("unknown sketch format `{other}`")),
        }
    }
}

#[derive(Deserialize)]
struct Stroke5Doc {
    canvas: [u32; 2],
    points: Vec<[f64; 5]>,
}

#[derive(Serialize)]
struct Stroke5Out {
    canvas: [u32; 2],
    points: Vec<(f64, f64, u8, u8, u8)>,
}

#[derive(Deserialize)]
struct Stroke3Line {
    #[serde(default)]
    canvas: Option<[u32; 2]>,
    #[serde(default)]
    strokes: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default)]
    stroke3: Option<Vec<[f64; 3]>>,
    #[serde(default)]
    label: Option<serde_json::Value>,
    #[serde(default)]
    word: Option<String>,
}

/// A drawing from a labeled corpus file.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSketch {
    pub sketch: VectorSketch,
    pub label: Option<String>,
}

fn byte_offset(text: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut offset = 0;
    for (i, l) in text.split(|&b| b == b'\n').enumerate() {
        if i + 1 == line {
            return offset + column.saturating_sub(1).min(l.len());
        }
        offset += l.len() + 1;
    }
    text.len()
}

fn json_error(text: &[u8], base: usize, e: serde_json::Error) -> SketchError {
    SketchError::Parse { offset: base + byte_offset(text, e.line(), e.column()), message: e.to_string() }
}

pub fn parse_vector_sketch(data: &[u8], format: SketchFormat) -> Result<VectorSketch, SketchError> {
    match format {
        SketchFormat::Stroke5Json => parse_stroke5(data),
        SketchFormat::Stroke3Ndjson => {
            let mut drawings = parse_labeled_ndjson(data)?;
            match drawings.len() {
                1 => Ok(drawings.remove(0).sketch),
                0 => Err(SketchError::Validation("empty drawing".into())),
                n => Err(SketchError::Validation(format!("expected one drawing, found {n} lines"))),
            }
        }
    }
}

fn parse_stroke5(data: &[u8]) -> Result<VectorSketch, SketchError> {
    let doc: Stroke5Doc = serde_json::from_slice(data).map_err(|e| json_error(data, 0, e))?;
    let mut points = Vec::with_capacity(doc.points.len());
    for (i, [x, y, q1, q2, q3]) in doc.points.into_iter().enumerate() {
        let pen = PenState::from_one_hot([q1, q2, q3]).ok_or_else(|| {
            SketchError::Validation(format!("point {i}: pen state ({q1}, {q2}, {q3}) is not one-hot"))
        })?;
        points.push(Point::new(x, y, pen));
    }
    VectorSketch::new(points, doc.canvas[0], doc.canvas[1])
}

/// Converts delta triples `(dx, dy, lift)` into absolute points starting from
/// `origin`. A lift flag of 1 marks the point after which the pen is raised.
pub fn stroke3_to_stroke5(deltas: &[[f64; 3]], origin: (f64, f64)) -> Vec<Point> {
    let (mut x, mut y) = origin;
    deltas
        .iter()
        .map(|&[dx, dy, lift]| {
            x += dx;
            y += dy;
            Point::new(x, y, if lift != 0.0 { PenState::Up } else { PenState::Down })
        })
        .collect()
}

/// Parses every non-empty line of an NDJSON corpus.
pub fn parse_labeled_ndjson(data: &[u8]) -> Result<Vec<LabeledSketch>, SketchError> {
    let mut out = Vec::new();
    let mut base = 0;
    for line in data.split(|&b| b == b'\n') {
        let line_start = base;
        base += line.len() + 1;
        if line.iter().all(|b| b.is_ascii_whitespace()) {
            continue;
        }
        let parsed: Stroke3Line = serde_json::from_slice(line).map_err(|e| json_error(line, line_start, e))?;
        let [w, h] = parsed.canvas.unwrap_or([DEFAULT_CANVAS, DEFAULT_CANVAS]);
        let points = match (parsed.strokes, parsed.stroke3) {
            (Some(strokes), None) => quickdraw_points(&strokes, line_start)?,
            (None, Some(deltas)) => stroke3_to_stroke5(&deltas, (0.0, 0.0)),
            _ => {
                return Err(SketchError::Parse {
                    offset: line_start,
                    message: "expected exactly one of `strokes` or `stroke3`".into(),
                })
            }
        };
        let label = parsed.word.or_else(|| {
            parsed.label.map(|v| match v {
                serde_json::Value::String(s) => s,
                other => other.to_string(),
            })
        });
        out.push(LabeledSketch { sketch: VectorSketch::new(points, w, h)?, label });
    }
    Ok(out)
}

fn quickdraw_points(strokes: &[Vec<Vec<f64>>], line_start: usize) -> Result<Vec<Point>, SketchError> {
    let mut points = Vec::new();
    for (si, stroke) in strokes.iter().enumerate() {
        if stroke.len() < 2 || stroke[0].len() != stroke[1].len() {
            return Err(SketchError::Validation(format!(
                "stroke {si} (line at byte {line_start}): x and y arrays must be present with equal length"
            )));
        }
        let n = stroke[0].len();
        for i in 0..n {
            let pen = if i + 1 == n { PenState::Up } else { PenState::Down };
            points.push(Point::new(stroke[0][i], stroke[1][i], pen));
        }
    }
    Ok(points)
}

impl VectorSketch {
    fn stroke5_doc(&self) -> Stroke5Out {
        let mut points: Vec<(f64, f64, u8, u8, u8)> = self
            .points()
            .iter()
            .map(|p| {
                let [a, b, c] = p.pen.one_hot();
                (p.x, p.y, a, b, c)
            })
            .collect();
        if !self.has_end() {
            let last = self.points()[self.len() - 1];
            points.push((last.x, last.y, 0, 0, 1));
        }
        Stroke5Out { canvas: [self.canvas_w(), self.canvas_h()], points }
    }

    /// Canonical stroke-5 JSON. An `End` marker at the last point's position is
    /// appended when the sketch has none.
    pub fn to_stroke5_json(&self) -> String {
        serde_json::to_string(&self.stroke5_doc()).expect("stroke-5 serialization is infallible")
    }

    pub fn to_stroke5_value(&self) -> serde_json::Value {
        serde_json::to_value(self.stroke5_doc()).expect("stroke-5 serialization is infallible")
    }

    pub fn from_stroke5_json(data: &[u8]) -> Result<Self, SketchError> {
        parse_stroke5(data)
    }
}

impl Serialize for VectorSketch {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.stroke5_doc().serialize(serializer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use PenState::*;

    #[test]
    fn stroke3_cumulative_sum() {
        let pts = stroke3_to_stroke5(&[[10.0, 10.0, 0.0], [5.0, 0.0, 1.0], [0.0, 5.0, 0.0]], (0.0, 0.0));
        assert_eq!(
            pts,
            vec![Point::new(10.0, 10.0, Down), Point::new(15.0, 10.0, Up), Point::new(15.0, 15.0, Down)]
        );
    }

    #[test]
    fn quickdraw_line_two_strokes() {
        let line = br#"{"word":"cat","strokes":[[[0,10,20],[0,0,5]],[[30,30,40],[30,40,40]]]}"#;
        let s = parse_vector_sketch(line, SketchFormat::Stroke3Ndjson).unwrap();
        assert_eq!(s.len(), 6);
        let pens: Vec<PenState> = s.points().iter().map(|p| p.pen).collect();
        assert_eq!(pens, vec![Down, Down, Up, Down, Down, Up]);
        let strokes = s.split_strokes();
        assert_eq!(strokes.len(), 2);
        assert_eq!(strokes[1].points[0].xy(), (30.0, 30.0));
        assert_eq!((s.canvas_w(), s.canvas_h()), (256, 256));
    }

    #[test]
    fn end_mid_sequence_rejected() {
        let doc = br#"{"canvas":[8,8],"points":[[0,0,1,0,0],[1,1,0,0,1],[2,2,1,0,0]]}"#;
        assert!(matches!(
            parse_vector_sketch(doc, SketchFormat::Stroke5Json),
            Err(SketchError::Validation(_))
        ));
    }

    #[test]
    fn non_one_hot_rejected() {
        let doc = br#"{"canvas":[8,8],"points":[[0,0,1,1,0]]}"#;
        assert!(matches!(
            parse_vector_sketch(doc, SketchFormat::Stroke5Json),
            Err(SketchError::Validation(_))
        ));
    }

    #[test]
    fn empty_drawing_rejected() {
        let doc = br#"{"canvas":[8,8],"points":[]}"#;
        assert!(matches!(
            parse_vector_sketch(doc, SketchFormat::Stroke5Json),
            Err(SketchError::Validation(_))
        ));
        assert!(matches!(
            parse_vector_sketch(b"\n\n", SketchFormat::Stroke3Ndjson),
            Err(SketchError::Validation(_))
        ));
    }

    #[test]
    fn malformed_reports_offset() {
        let doc = b"{\"canvas\":[8,8],\n\"points\":[[0,0,1,0,0],]}";
        match parse_vector_sketch(doc, SketchFormat::Stroke5Json) {
            Err(SketchError::Parse { offset, .. }) => {
                assert!(offset > 16 && offset < doc.len(), "offset {offset}");
                assert_eq!(doc[offset], b']');
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ndjson_offset_is_absolute() {
        let data = b"{\"strokes\":[[[0,1],[0,1]]]}\n{\"strokes\": oops}\n";
        match parse_labeled_ndjson(data) {
            Err(SketchError::Parse { offset, .. }) => assert!(offset >= 28, "offset {offset}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn canonical_round_trip() {
        let doc = r#"{"canvas":[256,256],"points":[[10.5,20.0,1,0,0],[30.25,40.125,0,1,0],[0.1,0.2,1,0,0],[7.0,9.0,0,0,1]]}"#;
        let s = parse_vector_sketch(doc.as_bytes(), SketchFormat::Stroke5Json).unwrap();
        assert_eq!(s.to_stroke5_json(), doc);
    }

    #[test]
    fn end_appended_on_serialize() {
        let s = VectorSketch::new(vec![Point::down(1.0, 2.0), Point::up(3.0, 4.0)], 8, 8).unwrap();
        assert_eq!(
            s.to_stroke5_json(),
            r#"{"canvas":[8,8],"points":[[1.0,2.0,1,0,0],[3.0,4.0,0,1,0],[3.0,4.0,0,0,1]]}"#
        );
    }

    #[test]
    fn labels_from_word_or_label() {
        let data = b"{\"word\":\"circle\",\"stroke3\":[[1,1,0],[1,0,1]]}\n{\"label\":2,\"canvas\":[64,64],\"stroke3\":[[1,1,0],[1,0,1]]}";
        let d = parse_labeled_ndjson(data).unwrap();
        assert_eq!(d[0].label.as_deref(), Some("circle"));
        assert_eq!(d[1].label.as_deref(), Some("2"));
        assert_eq!(d[1].sketch.canvas_w(), 64);
    }
}
