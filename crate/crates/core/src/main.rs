//! Thin batch CLI over the library pipeline. All logic lives in the
//! library; this binary only maps flags onto runner options and prints
//! summaries. Exit codes: 0 success, 1 input error, 2 provider error,
//! 3 internal invariant violation.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dataless_intent::augment::MaskConfig;
use dataless_intent::classifier::{PrototypeMode, RunConfig};
use dataless_intent::error::{Error, Result};
use dataless_intent::runner::{
    run_ablate, run_classify, run_embed, run_evaluate, run_mask, run_stats, run_validate,
    PipelineOptions, ProviderSpec, StatsOptions,
};

#[derive(Parser)]
#[command(name = "dataless-intent", version, about = "Dataless intent classification over sentence embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ProviderArgs {
    /// Embedding backend: file (offline cache only), test, or http.
    #[arg(long, default_value = "file")]
    provider: String,
    /// Base URL of the HTTP embedding/completion service.
    #[arg(long)]
    endpoint: Option<String>,
    /// Model id used for cache keys and HTTP requests.
    #[arg(long)]
    model: Option<String>,
    /// Embedding cache file (JSONL).
    #[arg(long)]
    embed_cache: Option<PathBuf>,
    /// Dimension for the test provider, or the expected HTTP dimension.
    #[arg(long, default_value_t = 64)]
    dim: usize,
    /// Name of the environment variable holding the bearer token.
    #[arg(long)]
    auth_env: Option<String>,
    /// Provider batch size.
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    /// HTTP timeout in seconds.
    #[arg(long, default_value_t = 30)]
    timeout_secs: u64,
    /// Bounded retries for transport failures.
    #[arg(long, default_value_t = 3)]
    max_retries: usize,
}

impl ProviderArgs {
    fn spec(&self, seed: u64) -> Result<ProviderSpec> {
        match self.provider.as_str() {
            "file" => Ok(ProviderSpec::File),
            "test" => Ok(ProviderSpec::Test {
                dim: self.dim,
                seed,
            }),
            "http" => {
                let endpoint = self.endpoint.clone().ok_or_else(|| {
                    Error::InvalidInput("the http provider needs --endpoint".into())
                })?;
                Ok(ProviderSpec::Http {
                    endpoint,
                    dim: Some(self.dim),
                    auth_env: self.auth_env.clone(),
                    timeout_secs: self.timeout_secs,
                    max_retries: self.max_retries,
                })
            }
            other => Err(Error::InvalidInput(format!(
                "unknown provider {other:?} (expected file, test or http)"
            ))),
        }
    }
}

#[derive(Args, Clone)]
struct PipelineArgs {
    /// Intent schema (JSONL; line order defines the class index).
    #[arg(long)]
    schema: PathBuf,
    /// Labelled dataset (JSONL).
    #[arg(long)]
    dataset: PathBuf,
    /// Dependency parses (CoNLL-U with # sent_id comments).
    #[arg(long)]
    conllu: Option<PathBuf>,
    /// Paraphrase cache (JSONL of {"id", "paraphrase"}).
    #[arg(long)]
    paraphrases: Option<PathBuf>,
    #[command(flatten)]
    provider: ProviderArgs,
    /// Prototype source: tokenized, description, or synthetic.
    #[arg(long, default_value = "description")]
    prototype_mode: String,
    /// Synthetic example pool (JSONL of {"label", "examples"}).
    #[arg(long)]
    synthetic_pool: Option<PathBuf>,
    /// Examples sampled per class in synthetic mode.
    #[arg(long)]
    synthetic_k: Option<usize>,
    /// Candidate count for the entity-overlap gate.
    #[arg(long, default_value_t = 3)]
    k_overlap: usize,
    /// L2-normalize each component before summation.
    #[arg(long, default_value_t = false)]
    normalize_components: bool,
    /// Dependency relations whose subtrees are masked.
    #[arg(long, value_delimiter = ',')]
    mask_relations: Option<Vec<String>>,
    /// Seed for synthetic sampling and pair sampling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Repetition index for resampled synthetic runs.
    #[arg(long, default_value_t = 0)]
    repetition: u64,
    /// Worker threads (0 = library default). Outputs are identical for
    /// any worker count.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

impl PipelineArgs {
    fn options(&self, config: RunConfig) -> Result<PipelineOptions> {
        let mut options = PipelineOptions::new(&self.schema, &self.dataset);
        options.conllu = self.conllu.clone();
        options.paraphrases = self.paraphrases.clone();
        options.embed_cache = self.provider.embed_cache.clone();
        options.provider = self.provider.spec(self.seed)?;
        options.model = self.provider.model.clone();
        options.batch_size = self.provider.batch_size;
        options.prototype_mode = self.prototype_mode.parse::<PrototypeMode>()?;
        options.synthetic_pool = self.synthetic_pool.clone();
        options.synthetic_k = self.synthetic_k;
        if let Some(relations) = &self.mask_relations {
            options.mask_relations = MaskConfig::new(relations.iter());
        }
        options.config = RunConfig {
            overlap_top_k: self.k_overlap,
            normalize_components: self.normalize_components,
            synthetic_sample_size: self.synthetic_k,
            rng_seed: self.seed,
            ..config
        };
        options.workers = self.workers;
        options.repetition = self.repetition;
        options.out_dir = self.out_dir.clone();
        Ok(options)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check descriptions against the format constraints and report
    /// description statistics.
    Validate {
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Populate the embedding cache for utterances, prototypes,
    /// paraphrases, masked texts and synthetic pools.
    Embed {
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Mask object spans in parsed utterances and report coverage.
    Mask {
        #[arg(long)]
        conllu: PathBuf,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        mask_relations: Option<Vec<String>>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Predict an intent for every utterance under one component config.
    Classify {
        #[command(flatten)]
        pipeline: PipelineArgs,
        /// Component subset from EPMO, e.g. E, EP, EPMO.
        #[arg(long, default_value = "E")]
        components: String,
    },
    /// Score a predictions file against its gold labels.
    Evaluate {
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Run the ten-row component ablation grid.
    Ablate {
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// In/out-class similarity statistics and top-k recall.
    Stats {
        #[command(flatten)]
        pipeline: PipelineArgs,
        /// Predictions file for the top-k recall table.
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Cap on sampled pairs per class (default: exact all-pairs).
        #[arg(long)]
        max_pairs: Option<usize>,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate {
            schema,
            dataset,
            out_dir,
        } => {
            let summary = run_validate(&schema, dataset.as_deref(), &out_dir)?;
            for class in &summary.classes {
                let status = if class.warnings.is_empty() { "ok" } else { "warn" };
                println!(
                    "{status:<5} {:<30} prefix_ok={} label_tokens={}/{}",
                    class.label,
                    class.prefix_ok,
                    class.exact_label_tokens_found,
                    class.label_token_total
                );
                for warning in &class.warnings {
                    println!("      - {warning}");
                }
            }
            println!(
                "mean added tokens: {:.2}; descriptions with a label token: {:.2}%; label tokens preserved: {:.2}%",
                summary.stats.mean_added_tokens,
                summary.stats.pct_with_exact_token,
                summary.stats.pct_tokens_preserved
            );
            if let Some(n) = summary.n_utterances {
                println!("dataset: {n} utterances, all labels resolved");
            }
        }
        Command::Embed { pipeline } => {
            let options = pipeline.options(RunConfig::default())?;
            let summary = run_embed(&options)?;
            println!(
                "embedded {} texts with {}; cache now holds {} entries",
                summary.n_texts, summary.model_id, summary.cache_entries
            );
        }
        Command::Mask {
            conllu,
            dataset,
            schema,
            mask_relations,
            out_dir,
        } => {
            let config = match &mask_relations {
                Some(relations) => MaskConfig::new(relations.iter()),
                None => MaskConfig::default(),
            };
            let summary = run_mask(
                &conllu,
                dataset.as_deref(),
                schema.as_deref(),
                &config,
                &out_dir,
            )?;
            println!(
                "masked {}/{} parsed sentences; coverage {:.4}; wrote {}",
                summary.n_masked,
                summary.n_trees,
                summary.coverage,
                summary.output.display()
            );
        }
        Command::Classify {
            pipeline,
            components,
        } => {
            let config = RunConfig::from_components(&components)?;
            let options = pipeline.options(config)?;
            let summary = run_classify(&options)?;
            println!(
                "classified {} utterances ({} degraded); wrote {}",
                summary.n_utterances,
                summary.n_degraded,
                summary.predictions.display()
            );
            if let Some(mean) = summary.paraphrase_mean_cosine {
                println!("mean paraphrase-utterance cosine: {mean:.4}");
            }
        }
        Command::Evaluate {
            schema,
            predictions,
            out_dir,
        } => {
            let report = run_evaluate(&schema, &predictions, &out_dir)?;
            println!(
                "accuracy {:.4}  macro-F1 {:.4}  mean {:.4}  ({} utterances)",
                report.accuracy, report.macro_f1, report.mean_acc_f1, report.n_utterances
            );
            for (k, recall) in &report.topk_recall {
                println!("top-{k}: {:.4}", recall);
            }
        }
        Command::Ablate { pipeline } => {
            let options = pipeline.options(RunConfig::default())?;
            let summary = run_ablate(&options)?;
            println!(
                "ablation grid: {} rows; wrote {} and {}",
                summary.rows,
                summary.csv.display(),
                summary.markdown.display()
            );
        }
        Command::Stats {
            pipeline,
            predictions,
            max_pairs,
        } => {
            let options = StatsOptions {
                pipeline: pipeline.options(RunConfig::default())?,
                predictions,
                max_pairs_per_class: max_pairs,
            };
            let summary = run_stats(&options)?;
            let s = &summary.similarity;
            let mode = if s.approximate { "sampled" } else { "exact" };
            println!(
                "s_in {:.4}  s_out {:.4}  delta {:.4}  pct_delta {:.2}% ({mode})",
                s.s_in, s.s_out, s.delta, s.pct_delta
            );
            if !s.excluded.is_empty() {
                println!("excluded classes (fewer than 2 utterances): {}", s.excluded.join(", "));
            }
            if let Some(topk) = &summary.topk {
                for (k, recall) in topk {
                    println!("top-{k}: {:.4}", recall);
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(error.exit_code() as u8)
        }
    }
}
