//! Parses a QuickDraw-style drawing and writes both renders as PNG.
//!
//! cargo run --release --example parse_and_render -- [out_dir]

use strokescope::diffraster::{soft_render, RenderParams};
use strokescope::export::png_gray;
use strokescope::image::mask_iou;
use strokescope::raster::rasterise;
use strokescope::sketch::{parse_vector_sketch, SketchFormat};

const DRAWING: &str = r#"{"strokes":[[[4,28,28,4,4],[4,4,28,28,4]],[[8,24],[16,16]]]}"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::path::PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| ".".into()));
    std::fs::create_dir_all(&out)?;
    let sketch = parse_vector_sketch(DRAWING.as_bytes(), SketchFormat::Stroke3Ndjson)?;
    println!("{} points, {} strokes, canvas {:?}", sketch.len(), sketch.split_strokes().len(), sketch.dims());
    println!("{}", sketch.to_stroke5_json());

    let hard = rasterise(&sketch);
    let soft = soft_render(&sketch, &RenderParams::default());
    let (hard_mask, soft_mask) = (hard.binarize(0.5), soft.binarize(0.5));
    println!("ink pixels: hard {}, soft {}", hard.ink_count(), soft_mask.iter().filter(|&&b| b).count());
    println!("IoU at 0.5: {:.3}", mask_iou(&hard_mask, &soft_mask));
    std::fs::write(out.join("hard.png"), png_gray(&hard)?)?;
    std::fs::write(out.join("soft.png"), png_gray(&soft)?)?;
    Ok(())
}
