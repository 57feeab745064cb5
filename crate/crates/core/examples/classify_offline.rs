//! Classify the demo dataset fully offline with the deterministic
//! hashed embedder: description prototypes, paraphrase and mask
//! components, and the entity-overlap gate all enabled.
//!
//! Run with: cargo run --example classify_offline

use std::path::Path;

use dataless_intent::classifier::RunConfig;
use dataless_intent::evaluate::{classify_dataset, score};
use dataless_intent::runner::{prepare_pipeline, PipelineOptions, ProviderSpec};

fn main() -> anyhow::Result<()> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data");
    let mut options = PipelineOptions::new(
        data.join("snips_schema.jsonl"),
        data.join("snips_dataset.jsonl"),
    );
    options.conllu = Some(data.join("snips_utterances.conllu"));
    options.paraphrases = Some(data.join("snips_paraphrases.jsonl"));
    options.provider = ProviderSpec::Test { dim: 256, seed: 7 };
    options.config = RunConfig::from_components("EPMO")?;

    let prepared = prepare_pipeline(&options, true, true)?;
    let input = prepared.classify_input("snips-demo");
    let records = classify_dataset(&input, &options.config, 0)?;

    println!("{:<6} {:<22} {:<22} rank  gated", "id", "gold", "predicted");
    for record in &records {
        let mark = if record.gold == record.predicted { " " } else { "x" };
        println!(
            "{:<6} {:<22} {:<22} {:<5} {:<5} {mark}",
            record.id,
            record.gold,
            record.predicted,
            record.rank_of_gold.unwrap_or(0),
            record.gated_mask,
        );
    }

    let report = score(&records, &prepared.schema)?;
    println!();
    println!(
        "accuracy {:.4}  macro-F1 {:.4}  mean {:.4}",
        report.accuracy, report.macro_f1, report.mean_acc_f1
    );
    for (k, recall) in &report.topk_recall {
        println!("top-{k} recall: {recall:.4}");
    }
    Ok(())
}
