//! Parse dependency trees from CoNLL-U, mask object spans, and report
//! masking coverage over the demo dataset.
//!
//! Run with: cargo run --example mask_utterances

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use dataless_intent::{load_dataset, load_schema, mask_tree, masking_coverage, parse_conllu, MaskConfig};

fn main() -> anyhow::Result<()> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data");
    let schema = load_schema(&data.join("snips_schema.jsonl"))?;
    let dataset = load_dataset(&data.join("snips_dataset.jsonl"), &schema)?;
    let conllu = data.join("snips_utterances.conllu");
    let trees = parse_conllu(
        BufReader::new(File::open(&conllu)?),
        &conllu.display().to_string(),
    )?;

    let config = MaskConfig::default();
    println!("mask relations: {}", config.relations().collect::<Vec<_>>().join(", "));
    println!();
    for utterance in &dataset {
        let Some(tree) = trees.get(&utterance.id) else {
            println!("{:<6} (no parse)        {}", utterance.id, utterance.text);
            continue;
        };
        let outcome = mask_tree(tree, &config);
        match outcome.masked {
            Some(masked) => println!("{:<6} {}\n       -> {}", utterance.id, utterance.text, masked),
            None => println!("{:<6} {}\n       -> (no object relation, unmasked)", utterance.id, utterance.text),
        }
    }

    let coverage = masking_coverage(&dataset, &trees, &config);
    println!();
    println!(
        "masking coverage: {:.2}% of {} utterances",
        100.0 * coverage,
        dataset.len()
    );
    Ok(())
}
