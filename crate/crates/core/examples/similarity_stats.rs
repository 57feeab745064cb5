//! In-class vs out-of-class embedding similarity of the demo dataset,
//! plus the top-k recall table of a classification run over it.
//!
//! Run with: cargo run --example similarity_stats

use std::path::Path;

use dataless_intent::classifier::RunConfig;
use dataless_intent::evaluate::{class_similarity_stats, classify_dataset, topk_recall, DEFAULT_TOPK};
use dataless_intent::runner::{prepare_pipeline, PipelineOptions, ProviderSpec};

fn main() -> anyhow::Result<()> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data");
    let mut options = PipelineOptions::new(
        data.join("snips_schema.jsonl"),
        data.join("snips_dataset.jsonl"),
    );
    options.provider = ProviderSpec::Test { dim: 256, seed: 7 };
    let prepared = prepare_pipeline(&options, false, false)?;

    let texts: Vec<&str> = prepared.utterances.iter().map(|u| u.text.as_str()).collect();
    let embeddings = prepared.source.embed_all(&texts)?;
    let stats = class_similarity_stats(&prepared.schema, &prepared.utterances, &embeddings)?;
    println!("s_in      {:.4}", stats.s_in);
    println!("s_out     {:.4}", stats.s_out);
    println!("delta     {:.4}", stats.delta);
    println!("pct_delta {:.2}%", stats.pct_delta);
    if !stats.excluded.is_empty() {
        println!("excluded: {}", stats.excluded.join(", "));
    }

    let input = prepared.classify_input("snips-demo");
    let records = classify_dataset(&input, &RunConfig::default(), 0)?;
    let recall = topk_recall(&records, DEFAULT_TOPK)?;
    println!();
    for (k, fraction) in &recall {
        println!("top-{k}: {:.2}%", 100.0 * fraction);
    }
    Ok(())
}
