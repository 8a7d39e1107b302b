//! Point-level attribution through the soft renderer, against an embedding
//! target, plus the stroke order it implies.
//!
//! cargo run --release --example psla_attribution -- [embedding.bin]

use strokescope::attribution::{psla, rank_desc, stroke_order_from_points, temporal_correlation, CorrMethod};
use strokescope::diffraster::RenderParams;
use strokescope::export::heatmap_png;
use strokescope::scorer::{train_embedding, ScoreTarget, Scorer, TrainConfig, DEFAULT_EMBEDDING_DIM};
use strokescope::synthetic::{embedding_examples, retrieval_corpus};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scorer = match std::env::args().nth(1) {
        Some(path) => Scorer::load(path)?,
        None => train_embedding(&embedding_examples(600, 3), DEFAULT_EMBEDDING_DIM, &TrainConfig::default())?.0,
    };
    let corpus = retrieval_corpus(3, 8);
    let params = RenderParams::default();
    for q in &corpus.queries {
        let target = ScoreTarget::CosineSim(scorer.embed(&corpus.photos[q.target])?);
        let attr = psla(&scorer, &target, &q.sketch, &params)?;
        let per_stroke = stroke_order_from_points(&attr, &q.sketch)?;
        let corr = temporal_correlation(&rank_desc(&per_stroke), CorrMethod::Spearman)?;
        println!("skill {:.2}: cosine {:.3}, top points {:?}", q.skill, attr.score, &attr.ranking[..5]);
        println!("  stroke means {:?}", per_stroke.iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>());
        println!("  corr {:?} -> {:?}", corr.corr, corr.reliable);
    }
    let last = corpus.queries.last().expect("three queries");
    let target = ScoreTarget::CosineSim(scorer.embed(&corpus.photos[last.target])?);
    std::fs::write("psla_heatmap.png", heatmap_png(&psla(&scorer, &target, &last.sketch, &params)?.pixel_grad)?)?;
    Ok(())
}
