//! Stroke-level attribution for a trained shape classifier, with and without
//! the per-stroke weight maps.
//!
//! cargo run --release --example sla_attribution -- [classifier.bin]

use strokescope::attribution::{sla, sla_with, SlaOptions, WeightMode};
use strokescope::export::overlay_svg;
use strokescope::raster::rasterise;
use strokescope::scorer::{train_tiny_classifier, ScoreTarget, Scorer, TrainConfig};
use strokescope::synthetic::{attack_corpus, classification_corpus, classifier_images, ShapeClass};
use strokescope::diffraster::RenderParams;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scorer = match std::env::args().nth(1) {
        Some(path) => Scorer::load(path)?,
        None => {
            let images = classifier_images(&classification_corpus(500, 1), &RenderParams::default());
            train_tiny_classifier(&images, ShapeClass::labels(), &TrainConfig::default())?.0
        }
    };
    for (sketch, label) in attack_corpus(3, 5) {
        let pred = scorer.predict(&rasterise(&sketch))?;
        let target = ScoreTarget::ClassLogit(label);
        let weighted = sla(&scorer, &target, &sketch)?;
        let uniform = sla_with(&scorer, &target, &sketch, SlaOptions { weights: WeightMode::Uniform, ..Default::default() })?;
        println!("{} (predicted {})", ShapeClass::ALL[label].name(), ShapeClass::ALL[pred].name());
        println!("  weighted: {:?}", rounded(&weighted.scores));
        println!("  uniform:  {:?}", rounded(&uniform.scores));
        println!("  ranking:  {:?}", weighted.ranking);
        if label == 0 {
            std::fs::write("sla_overlay.svg", overlay_svg(&sketch, weighted.granularity, &weighted.scores)?)?;
        }
    }
    Ok(())
}

fn rounded(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| (x * 1e3).round() / 1e3).collect()
}
