//! Trains the small shape classifier on the synthetic corpus and saves it.
//!
//! cargo run --release --example train_classifier -- [out.bin] [n_per_class]

use std::time::Instant;

use strokescope::diffraster::{soft_render, RenderParams};
use strokescope::raster::rasterise;
use strokescope::scorer::{train_tiny_classifier, TrainConfig};
use strokescope::synthetic::{attack_corpus, classification_corpus, classifier_images, ShapeClass};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "classifier.bin".into());
    let n: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(500);
    let t0 = Instant::now();
    let images = classifier_images(&classification_corpus(n, 1), &RenderParams::default());
    let (scorer, report) = train_tiny_classifier(&images, ShapeClass::labels(), &TrainConfig::default())?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    println!("trained in {:.1}s", t0.elapsed().as_secs_f64());

    let held_out = attack_corpus(300, 2024);
    let params = RenderParams::default();
    let (mut hard, mut soft) = (0, 0);
    for (s, label) in &held_out {
        hard += (scorer.predict(&rasterise(s))? == *label) as usize;
        soft += (scorer.predict(&soft_render(s, &params))? == *label) as usize;
    }
    let n = held_out.len() as f64;
    println!("held-out accuracy: hard {:.3}, soft {:.3}", hard as f64 / n, soft as f64 / n);
    scorer.save(&out)?;
    println!("saved {out}");
    Ok(())
}
