//! Run the ten-row component ablation grid (E / P / M / O toggles) over
//! the demo dataset and print the resulting table.
//!
//! Run with: cargo run --example ablation_grid

use std::path::Path;

use dataless_intent::classifier::RunConfig;
use dataless_intent::evaluate::{default_ablation_configs, run_ablation};
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

    let prepared = prepare_pipeline(&options, true, true)?;
    let input = prepared.classify_input("snips-demo");
    let configs = default_ablation_configs(&RunConfig::default());
    let grid = run_ablation(std::slice::from_ref(&input), &configs, 0);

    println!("{}", grid.to_markdown());
    for row in &grid.rows {
        for cell in &row.cells {
            if let Err(reason) = &cell.outcome {
                println!(
                    "row {} on {} failed: {reason}",
                    row.config.components_label(),
                    cell.dataset
                );
            }
        }
    }
    println!();
    print!("{}", grid.to_csv());
    Ok(())
}
