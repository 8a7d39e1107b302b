//! Splits retrieval queries by how well their attribution order matches their
//! drawing order, and compares the true-match rank of each group.
//!
//! cargo run --release --example retrieval_reliability -- [embedding.bin] [n]

use strokescope::applications::{retrieval_reliability, ReliabilityOptions};
use strokescope::attribution::Reliability;
use strokescope::scorer::{train_embedding, Scorer, TrainConfig, DEFAULT_EMBEDDING_DIM};
use strokescope::synthetic::{embedding_examples, retrieval_corpus};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let scorer = match args.next().filter(|p| p != "-") {
        Some(path) => Scorer::load(path)?,
        None => train_embedding(&embedding_examples(900, 3), DEFAULT_EMBEDDING_DIM, &TrainConfig::default())?.0,
    };
    let n: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(150);
    let corpus = retrieval_corpus(n, 21);
    let gallery = corpus.photos.iter().map(|p| scorer.embed(p)).collect::<Result<Vec<_>, _>>()?;
    let opts = ReliabilityOptions::default();

    let mut groups: [(usize, usize); 3] = [(0, 0); 3];
    for q in &corpus.queries {
        let r = retrieval_reliability(&q.sketch, &scorer, &gallery, Some(q.target), &opts)?;
        let g = match r.corr.reliable {
            Reliability::High => 0,
            Reliability::Mid => 1,
            Reliability::Low => 2,
            Reliability::NotApplicable => continue,
        };
        groups[g].0 += 1;
        groups[g].1 += r.true_rank.expect("true index given");
    }
    for (name, (count, rank_sum)) in ["high", "mid", "low"].iter().zip(groups) {
        let mean = if count == 0 { f64::NAN } else { rank_sum as f64 / count as f64 };
        println!("{name:>4}: {count:3} queries, mean true-match rank {mean:.2}");
    }
    Ok(())
}
