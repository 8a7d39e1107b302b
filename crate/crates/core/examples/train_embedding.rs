//! Trains the sketch/photo embedding on synthetic pairs and saves it.
//!
//! cargo run --release --example train_embedding -- [out.bin] [n]

use std::time::Instant;

use strokescope::scorer::{train_embedding, TrainConfig, DEFAULT_EMBEDDING_DIM};
use strokescope::synthetic::embedding_examples;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "embedding.bin".into());
    let n: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(900);
    let t0 = Instant::now();
    let examples = embedding_examples(n, 3);
    let (scorer, report) = train_embedding(&examples, DEFAULT_EMBEDDING_DIM, &TrainConfig::default())?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    println!("trained in {:.1}s", t0.elapsed().as_secs_f64());
    scorer.save(&out)?;
    println!("saved {out}");
    Ok(())
}
