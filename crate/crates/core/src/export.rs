//! Image and overlay encoders. Exported rasters are black ink on white.

use crate::attribution::Granularity;
use crate::image::{Grid, RasterImage};
use crate::sketch::{PenState, VectorSketch};

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error("png encoding failed: {0}")]
    Png(#[from] png::EncodingError),
    #[error("{got} scores for {expected} items")]
    ScoreCount { expected: usize, got: usize },
}

fn gray_bytes(img: &RasterImage) -> Vec<u8> {
    img.pixels().iter().map(|v| (255.0 * (1.0 - v)).round() as u8).collect()
}

fn encode_png(w: usize, h: usize, color: png::ColorType, data: &[u8]) -> Result<Vec<u8>, ExportError> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, w as u32, h as u32);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        enc.write_header()?.write_image_data(data)?;
    }
    Ok(out)
}

/// 8-bit grayscale PNG.
pub fn png_gray(img: &RasterImage) -> Result<Vec<u8>, ExportError> {
    encode_png(img.w(), img.h(), png::ColorType::Grayscale, &gray_bytes(img))
}

/// Binary PGM (`P5`).
pub fn pgm(img: &RasterImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.w(), img.h()).into_bytes();
    out.extend(gray_bytes(img));
    out
}

/// Blue for -1, white for 0, red for +1.
pub fn diverging_color(v: f64) -> [u8; 3] {
    let v = if v.is_finite() { v.clamp(-1.0, 1.0) } else { 0.0 };
    let fade = (255.0 * (1.0 - v.abs())).round() as u8;
    if v >= 0.0 {
        [255, fade, fade]
    } else {
        [fade, fade, 255]
    }
}

fn scaled(values: &[f64]) -> Vec<f64> {
    let m = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    values.iter().map(|v| if m > 0.0 { v / m } else { 0.0 }).collect()
}

/// RGB PNG of a signed map on the diverging scale, scaled by its largest magnitude.
pub fn heatmap_png(grad: &Grid) -> Result<Vec<u8>, ExportError> {
    let data: Vec<u8> = scaled(grad.as_slice()).into_iter().flat_map(diverging_color).collect();
    encode_png(grad.w(), grad.h(), png::ColorType::Rgb, &data)
}

fn hex([r, g, b]: [u8; 3]) -> String {
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// SVG of the sketch colored by attribution: one polyline per stroke for
/// stroke scores, or gray strokes with one dot per point for point scores.
pub fn overlay_svg(sketch: &VectorSketch, granularity: Granularity, scores: &[f64]) -> Result<String, ExportError> {
    let strokes = sketch.split_strokes();
    let expected = match granularity {
        Granularity::Stroke => strokes.len(),
        Granularity::Point => sketch.len(),
    };
    if scores.len() != expected {
        return Err(ExportError::ScoreCount { expected, got: scores.len() });
    }
    let norm = scaled(scores);
    let (w, h) = sketch.dims();
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"-0.5 -0.5 {w} {h}\">\n\
         <rect x=\"-0.5\" y=\"-0.5\" width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    );
    for s in &strokes {
        let pts: Vec<String> = s.points.iter().map(|p| format!("{:.3},{:.3}", p.x, p.y)).collect();
        let color = match granularity {
            Granularity::Stroke => hex(diverging_color(norm[s.index])),
            Granularity::Point => "#999999".to_string(),
        };
        svg.push_str(&format!(
            "<polyline data-stroke=\"{}\" points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" stroke-linecap=\"round\"/>\n",
            s.index,
            pts.join(" ")
        ));
    }
    if granularity == Granularity::Point {
        for (t, p) in sketch.points().iter().enumerate() {
            if p.pen == PenState::End {
                continue;
            }
            svg.push_str(&format!(
                "<circle data-point=\"{t}\" cx=\"{:.3}\" cy=\"{:.3}\" r=\"1\" fill=\"{}\"/>\n",
                p.x,
                p.y,
                hex(diverging_color(norm[t]))
            ));
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
