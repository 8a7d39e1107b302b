//! Stroke- and point-removal attacks against the shape classifier.
//!
//! cargo run --release --example attack_benchmark -- [classifier.bin] [out_dir]
//!
//! Trains a classifier first when no model file is given.

use std::time::Instant;

use strokescope::applications::{attack_benchmark, AttackConfig, AttackMode};
use strokescope::diffraster::RenderParams;
use strokescope::scorer::{train_tiny_classifier, Scorer, TrainConfig};
use strokescope::synthetic::{attack_corpus, classification_corpus, classifier_images, ShapeClass};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let classifier = match args.next() {
        Some(path) => Scorer::load(path)?,
        None => {
            let images = classifier_images(&classification_corpus(500, 1), &RenderParams::default());
            train_tiny_classifier(&images, ShapeClass::labels(), &TrainConfig::default())?.0
        }
    };
    let out_dir = args.next();
    let corpus = attack_corpus(300, 99);
    let configs: Vec<AttackConfig> = [AttackMode::SlaRemoveStroke, AttackMode::PslaRemovePoints]
        .into_iter()
        .flat_map(|m| [5, 15].map(|e| AttackConfig::new(m, e)))
        .collect();
    let t0 = Instant::now();
    let report = attack_benchmark(&classifier, &corpus, &configs)?;
    println!("{}", report.summary_json());
    println!("{} sketches in {:.1}s", corpus.len(), t0.elapsed().as_secs_f64());
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(&dir)?;
        std::fs::write(format!("{dir}/attacks.csv"), report.to_csv())?;
        std::fs::write(format!("{dir}/summary.json"), report.summary_json())?;
    }
    Ok(())
}
