//! Removes injected scribbles from noisy sketches by stroke attribution
//! against the matching photo's embedding.
//!
//! cargo run --release --example filter_noisy -- [embedding.bin] [n] [delta]

use strokescope::applications::{filter_noisy_strokes, FilterConfig};
use strokescope::scorer::{train_embedding, Scorer, TrainConfig, DEFAULT_EMBEDDING_DIM};
use strokescope::synthetic::{embedding_examples, noisy_corpus};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let scorer = match args.next().filter(|p| p != "-") {
        Some(path) => Scorer::load(path)?,
        None => train_embedding(&embedding_examples(900, 3), DEFAULT_EMBEDDING_DIM, &TrainConfig::default())?.0,
    };
    let n: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(100);
    let delta: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0.3);
    let cfg = FilterConfig::strokes().with_delta(delta);

    let (mut all_noise, mut any_noise, mut not_worse, mut clean_lost) = (0, 0, 0, 0);
    for ex in noisy_corpus(n, 11) {
        let reference = scorer.embed(&ex.instance.photo())?;
        let (filtered, report) = filter_noisy_strokes(&ex.drawn.sketch, &scorer, &reference, &cfg)?;
        assert!(filtered.has_drawable_segment());
        let hit = ex.drawn.noise.iter().filter(|i| report.removed.contains(i)).count();
        all_noise += (hit == ex.drawn.noise.len()) as usize;
        any_noise += (hit > 0) as usize;
        clean_lost += report.removed.len() - hit;
        not_worse += (report.similarity_after >= report.similarity_before) as usize;
    }
    let pct = |k: usize| 100.0 * k as f64 / n as f64;
    println!("delta {delta}, {n} sketches");
    println!("all injected strokes removed: {:.0}%", pct(all_noise));
    println!("at least one removed:         {:.0}%", pct(any_noise));
    println!("similarity not lower:         {:.0}%", pct(not_worse));
    println!("clean strokes removed:        {clean_lost}");
    Ok(())
}
