//! Load an intent schema, tokenize its labels, check every description
//! against the declarative-form constraints, and print the aggregate
//! description statistics.
//!
//! Run with: cargo run --example tokenize_and_validate

use std::path::Path;

use dataless_intent::{description_stats, load_schema, tokenize_label, validate_description};

fn main() -> anyhow::Result<()> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data");
    let schema = load_schema(&data.join("snips_schema.jsonl"))?;

    println!("{:<22} {:<24} prefix  label tokens", "label", "tokenized");
    for class in schema.classes() {
        let validation = validate_description(class)?;
        println!(
            "{:<22} {:<24} {:<7} {}/{}",
            class.label,
            class.tokenized,
            validation.prefix_ok,
            validation.exact_label_tokens_found,
            validation.label_token_total,
        );
        for warning in &validation.warnings {
            println!("    warning: {warning}");
        }
    }

    let stats = description_stats(&schema)?;
    println!();
    println!("mean added tokens:            {:.2}", stats.mean_added_tokens);
    println!("descriptions with a token:    {:.2}%", stats.pct_with_exact_token);
    println!("label tokens preserved:       {:.2}%", stats.pct_tokens_preserved);

    // Tokenization is deterministic and idempotent.
    for label in ["AddToPlaylist", "oil_change_how", "flight", "what_can_i_ask_you"] {
        let once = tokenize_label(label)?;
        assert_eq!(once, tokenize_label(&once)?);
        println!("{label:<22} -> {once}");
    }
    Ok(())
}
