//! Batch pipeline assembly behind the CLI surface. Each public `run_*`
//! function loads its inputs, performs one subcommand's work, writes the
//! output files plus a manifest, and returns a summary for printing.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Serialize;

use crate::augment::{
    augment_dataset, load_paraphrase_cache, mask_tree, masking_coverage, parse_conllu,
    AugmentedUtterance, MaskConfig, ParaphraseSource,
};
use crate::classifier::{
    build_prototypes, load_synthetic_pool, PrototypeMode, PrototypeSet, RunConfig,
};
use crate::corpus::{
    description_stats, load_dataset, load_schema, validate_description, DescriptionStats,
    DescriptionValidation, IntentSchema, LabeledUtterance,
};
use crate::embedding::{
    EmbeddingCache, EmbeddingProvider, EmbeddingSource, HashedBowEmbedder, HttpEmbeddingProvider,
    HttpProviderConfig,
};
use crate::error::{Error, Result};
use crate::evaluate::{
    classify_dataset, count_degraded, default_ablation_configs, run_ablation, score,
    topk_recall, AblationGrid, ClassifyInput, EvaluationReport, PredictionRecord,
    SimilarityStats, DEFAULT_TOPK,
};
use crate::manifest::RunManifest;
use crate::overlap::{build_overlap_matrix, OverlapMatrix};

/// Which encoder backs the run. The default `File` mode is fully
/// offline: every embedding must already be in the cache.
#[derive(Debug, Clone)]
pub enum ProviderSpec {
    File,
    Test {
        dim: usize,
        seed: u64,
    },
    Http {
        endpoint: String,
        dim: Option<usize>,
        auth_env: Option<String>,
        timeout_secs: u64,
        max_retries: usize,
    },
}

impl ProviderSpec {
    fn describe(&self) -> &'static str {
        match self {
            ProviderSpec::File => "file",
            ProviderSpec::Test { .. } => "test",
            ProviderSpec::Http { .. } => "http",
        }
    }
}

/// Builds the embedding source for a run.
pub fn build_embedding_source(
    spec: &ProviderSpec,
    model: Option<&str>,
    cache_path: Option<&Path>,
    batch_size: usize,
) -> Result<EmbeddingSource> {
    let cache = match cache_path {
        Some(path) => EmbeddingCache::open(path)?,
        None => EmbeddingCache::in_memory(),
    };
    match spec {
        ProviderSpec::File => {
            let model = model.ok_or_else(|| {
                Error::InvalidInput("the file provider needs --model to select cache entries".into())
            })?;
            if cache_path.is_none() {
                return Err(Error::InvalidInput(
                    "the file provider needs --embed-cache".into(),
                ));
            }
            EmbeddingSource::new(cache, None, model, batch_size)
        }
        ProviderSpec::Test { dim, seed } => {
            let embedder = HashedBowEmbedder::new(*dim, *seed)?;
            let model = embedder.model_id().to_string();
            EmbeddingSource::new(cache, Some(Box::new(embedder)), model, batch_size)
        }
        ProviderSpec::Http {
            endpoint,
            dim,
            auth_env,
            timeout_secs,
            max_retries,
        } => {
            let model = model.ok_or_else(|| {
                Error::InvalidInput("the http provider needs --model".into())
            })?;
            let mut config = HttpProviderConfig::new(endpoint, model);
            config.dim = *dim;
            config.auth_env = auth_env.clone();
            config.timeout = Duration::from_secs(*timeout_secs);
            config.max_retries = *max_retries;
            let provider = HttpEmbeddingProvider::new(config)?;
            EmbeddingSource::new(cache, Some(Box::new(provider)), model, batch_size)
        }
    }
}

/// Inputs shared by the classify-shaped subcommands.
#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub schema: PathBuf,
    pub dataset: PathBuf,
    pub conllu: Option<PathBuf>,
    pub paraphrases: Option<PathBuf>,
    pub embed_cache: Option<PathBuf>,
    pub provider: ProviderSpec,
    pub model: Option<String>,
    pub batch_size: usize,
    pub prototype_mode: PrototypeMode,
    pub synthetic_pool: Option<PathBuf>,
    pub synthetic_k: Option<usize>,
    pub mask_relations: MaskConfig,
    pub config: RunConfig,
    pub workers: usize,
    pub repetition: u64,
    pub out_dir: PathBuf,
}

impl PipelineOptions {
    pub fn new(schema: impl Into<PathBuf>, dataset: impl Into<PathBuf>) -> Self {
        PipelineOptions {
            schema: schema.into(),
            dataset: dataset.into(),
            conllu: None,
            paraphrases: None,
            embed_cache: None,
            provider: ProviderSpec::File,
            model: None,
            batch_size: 64,
            prototype_mode: PrototypeMode::Description,
            synthetic_pool: None,
            synthetic_k: None,
            mask_relations: MaskConfig::default(),
            config: RunConfig::default(),
            workers: 0,
            repetition: 0,
            out_dir: PathBuf::from("."),
        }
    }

    fn input_paths(&self) -> Vec<&Path> {
        let mut paths = vec![self.schema.as_path(), self.dataset.as_path()];
        for path in [&self.conllu, &self.paraphrases, &self.synthetic_pool]
            .into_iter()
            .flatten()
        {
            paths.push(path.as_path());
        }
        paths
    }

    fn config_snapshot(&self, components: Option<&str>) -> serde_json::Value {
        serde_json::json!({
            "components": components.unwrap_or(&self.config.components_label()),
            "k_overlap": self.config.overlap_top_k,
            "normalize_components": self.config.normalize_components,
            "prototype_mode": self.prototype_mode,
            "synthetic_k": self.synthetic_k,
            "provider": self.provider.describe(),
            "batch_size": self.batch_size,
            "workers": self.workers,
            "repetition": self.repetition,
            "mask_relations": self.mask_relations.relations().collect::<Vec<_>>(),
        })
    }
}

/// Loaded and embedded state, ready to classify under any config.
pub struct PreparedPipeline {
    pub schema: IntentSchema,
    pub utterances: Vec<LabeledUtterance>,
    pub augmented: Vec<AugmentedUtterance>,
    pub prototypes: PrototypeSet,
    pub source: EmbeddingSource,
    pub matrix: OverlapMatrix,
    pub paraphrase_failures: usize,
}

impl PreparedPipeline {
    pub fn classify_input<'a>(&'a self, dataset_name: &str) -> ClassifyInput<'a> {
        ClassifyInput {
            dataset_name: dataset_name.to_string(),
            schema: &self.schema,
            utterances: &self.utterances,
            augmented: &self.augmented,
            prototypes: &self.prototypes,
            source: &self.source,
            matrix: &self.matrix,
        }
    }
}

/// Loads every input, assembles augmented utterances, and pre-embeds all
/// texts any requested component needs. Pre-embedding happens in
/// deterministic dataset order, so later parallel prediction is
/// cache-hit only and worker count cannot affect any output.
pub fn prepare_pipeline(
    options: &PipelineOptions,
    need_paraphrase: bool,
    need_mask: bool,
) -> Result<PreparedPipeline> {
    let schema = load_schema(&options.schema)?;
    let utterances = load_dataset(&options.dataset, &schema)?;

    let trees = match &options.conllu {
        Some(path) => {
            let display = path.display().to_string();
            let file = File::open(path).map_err(|e| Error::io(display.clone(), e))?;
            parse_conllu(BufReader::new(file), &display)?
        }
        None => BTreeMap::new(),
    };
    let paraphrases = match &options.paraphrases {
        Some(path) => ParaphraseSource::cache_only(load_paraphrase_cache(path)?),
        None => ParaphraseSource::empty(),
    };
    let augmented = augment_dataset(&utterances, &trees, &paraphrases, &options.mask_relations);

    let source = build_embedding_source(
        &options.provider,
        options.model.as_deref(),
        options.embed_cache.as_deref(),
        options.batch_size,
    )?;

    // Utterance texts are always embedded: they carry the E component
    // and the candidate-ranking fallback for the overlap gate.
    let mut texts: Vec<&str> = utterances.iter().map(|u| u.text.as_str()).collect();
    if need_paraphrase {
        texts.extend(augmented.iter().filter_map(|a| a.paraphrase.as_deref()));
    }
    if need_mask {
        texts.extend(augmented.iter().filter_map(|a| a.masked.as_deref()));
    }
    source.embed_all(&texts)?;

    let synthetic_pool = match &options.synthetic_pool {
        Some(path) => Some(load_synthetic_pool(path)?),
        None => None,
    };
    let mut prototypes = build_prototypes(
        &schema,
        options.prototype_mode,
        &source,
        synthetic_pool.as_ref(),
    )?;
    if options.prototype_mode == PrototypeMode::Synthetic {
        if let Some(k) = options.synthetic_k {
            prototypes = prototypes.sampled(k, options.config.rng_seed, options.repetition)?;
        }
    }

    let matrix = build_overlap_matrix(&schema);
    Ok(PreparedPipeline {
        schema,
        utterances,
        augmented,
        prototypes,
        source,
        matrix,
        paraphrase_failures: paraphrases.failures(),
    })
}

pub fn write_predictions(records: &[PredictionRecord], path: &Path) -> Result<()> {
    let display = path.display().to_string();
    let file = File::create(path).map_err(|e| Error::io(display.clone(), e))?;
    let mut writer = BufWriter::new(file);
    for record in records {
        let line = serde_json::to_string(record)
            .map_err(|e| Error::Internal(format!("prediction serialization failed: {e}")))?;
        writeln!(writer, "{line}").map_err(|e| Error::io(display.clone(), e))?;
    }
    writer.flush().map_err(|e| Error::io(display, e))
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(display.clone(), e))?;
    let mut records = Vec::new();
    for (line_no, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(display.clone(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PredictionRecord = serde_json::from_str(&line).map_err(|e| Error::Record {
            path: display.clone(),
            line: line_no + 1,
            message: format!("malformed prediction record: {e}"),
        })?;
        records.push(record);
    }
    Ok(records)
}

fn ensure_out_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_json(value: &impl Serialize, path: &Path) -> Result<()> {
    let display = path.display().to_string();
    let body = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Internal(format!("report serialization failed: {e}")))?;
    std::fs::write(path, body + "\n").map_err(|e| Error::io(display, e))
}

// ---------------------------------------------------------------------
// validate

#[derive(Debug, Serialize)]
pub struct ValidateSummary {
    pub classes: Vec<ClassValidation>,
    pub stats: DescriptionStats,
    pub n_utterances: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct ClassValidation {
    pub label: String,
    pub tokenized: String,
    pub prefix_ok: bool,
    pub exact_label_tokens_found: usize,
    pub label_token_total: usize,
    pub warnings: Vec<String>,
}

pub fn run_validate(
    schema_path: &Path,
    dataset_path: Option<&Path>,
    out_dir: &Path,
) -> Result<ValidateSummary> {
    let schema = load_schema(schema_path)?;
    let mut classes = Vec::new();
    for class in schema.classes() {
        let DescriptionValidation {
            prefix_ok,
            exact_label_tokens_found,
            label_token_total,
            warnings,
        } = validate_description(class)?;
        classes.push(ClassValidation {
            label: class.label.clone(),
            tokenized: class.tokenized.clone(),
            prefix_ok,
            exact_label_tokens_found,
            label_token_total,
            warnings,
        });
    }
    let stats = description_stats(&schema)?;
    let n_utterances = match dataset_path {
        Some(path) => Some(load_dataset(path, &schema)?.len()),
        None => None,
    };
    let summary = ValidateSummary {
        classes,
        stats,
        n_utterances,
    };
    ensure_out_dir(out_dir)?;
    write_json(&summary, &out_dir.join("validation.json"))?;
    let mut manifest = RunManifest::new(
        "validate",
        serde_json::json!({"schema": schema_path.display().to_string()}),
        0,
    );
    let mut inputs = vec![schema_path];
    if let Some(path) = dataset_path {
        inputs.push(path);
    }
    manifest.add_inputs(inputs)?;
    manifest.write(out_dir)?;
    Ok(summary)
}

// ---------------------------------------------------------------------
// embed

#[derive(Debug, Serialize)]
pub struct EmbedSummary {
    pub n_texts: usize,
    pub cache_entries: usize,
    pub model_id: String,
}

/// Populates the embedding cache for every text a later offline run may
/// need: utterances, prototype texts, paraphrases, masked variants, and
/// synthetic pool examples.
pub fn run_embed(options: &PipelineOptions) -> Result<EmbedSummary> {
    if options.embed_cache.is_none() {
        return Err(Error::InvalidInput(
            "embed needs --embed-cache to persist vectors".into(),
        ));
    }
    if matches!(options.provider, ProviderSpec::File) {
        return Err(Error::InvalidInput(
            "embed needs a live provider (--provider test or http)".into(),
        ));
    }
    let schema = load_schema(&options.schema)?;
    let utterances = load_dataset(&options.dataset, &schema)?;
    let trees = match &options.conllu {
        Some(path) => {
            let display = path.display().to_string();
            let file = File::open(path).map_err(|e| Error::io(display.clone(), e))?;
            parse_conllu(BufReader::new(file), &display)?
        }
        None => BTreeMap::new(),
    };
    let paraphrases = match &options.paraphrases {
        Some(path) => load_paraphrase_cache(path)?,
        None => Default::default(),
    };
    let synthetic_pool = match &options.synthetic_pool {
        Some(path) => Some(load_synthetic_pool(path)?),
        None => None,
    };

    let mut texts: Vec<String> = Vec::new();
    for class in schema.classes() {
        texts.push(class.tokenized.clone());
        texts.push(class.description.clone());
    }
    for utterance in &utterances {
        texts.push(utterance.text.clone());
    }
    for utterance in &utterances {
        if let Some(paraphrase) = paraphrases.get(&utterance.id) {
            texts.push(paraphrase.clone());
        }
        if let Some(tree) = trees.get(&utterance.id) {
            if let Some(masked) = mask_tree(tree, &options.mask_relations).masked {
                texts.push(masked);
            }
        }
    }
    if let Some(pool) = &synthetic_pool {
        for class in schema.classes() {
            if let Some(examples) = pool.get(&class.label) {
                texts.extend(examples.iter().cloned());
            }
        }
    }

    let source = build_embedding_source(
        &options.provider,
        options.model.as_deref(),
        options.embed_cache.as_deref(),
        options.batch_size,
    )?;
    source.embed_all(&texts)?;

    ensure_out_dir(&options.out_dir)?;
    let mut manifest = RunManifest::new("embed", options.config_snapshot(None), 0)
        .with_model(source.model_id());
    manifest.add_inputs(options.input_paths())?;
    manifest.write(&options.out_dir)?;
    Ok(EmbedSummary {
        n_texts: texts.len(),
        cache_entries: source.cache().len(),
        model_id: source.model_id().to_string(),
    })
}

// ---------------------------------------------------------------------
// mask

#[derive(Debug, Serialize)]
pub struct MaskSummary {
    pub n_trees: usize,
    pub n_masked: usize,
    pub coverage: f64,
    pub output: PathBuf,
}

#[derive(Serialize)]
struct MaskedRecord<'a> {
    id: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    masked: Option<&'a str>,
    was_masked: bool,
}

/// Masks every parsed sentence and reports coverage. When a dataset is
/// given, coverage is over its rows (rows without a parse count as
/// unmasked) and output follows dataset order; otherwise coverage is
/// over the parsed sentences in id order.
pub fn run_mask(
    conllu_path: &Path,
    dataset_path: Option<&Path>,
    schema_path: Option<&Path>,
    mask_config: &MaskConfig,
    out_dir: &Path,
) -> Result<MaskSummary> {
    let display = conllu_path.display().to_string();
    let file = File::open(conllu_path).map_err(|e| Error::io(display.clone(), e))?;
    let trees = parse_conllu(BufReader::new(file), &display)?;

    let dataset = match (dataset_path, schema_path) {
        (Some(dataset), Some(schema)) => {
            let schema = load_schema(schema)?;
            Some(load_dataset(dataset, &schema)?)
        }
        (Some(_), None) => {
            return Err(Error::InvalidInput(
                "masking a dataset needs --schema to validate labels".into(),
            ))
        }
        _ => None,
    };

    let ordered_ids: Vec<String> = match &dataset {
        Some(rows) => rows.iter().map(|r| r.id.clone()).collect(),
        None => trees.keys().cloned().collect(),
    };

    ensure_out_dir(out_dir)?;
    let output = out_dir.join("masked.jsonl");
    let out_display = output.display().to_string();
    let out_file = File::create(&output).map_err(|e| Error::io(out_display.clone(), e))?;
    let mut writer = BufWriter::new(out_file);
    let mut n_masked = 0usize;
    for id in &ordered_ids {
        let outcome = trees.get(id).map(|tree| mask_tree(tree, mask_config));
        let (masked, was_masked) = match &outcome {
            Some(o) => (o.masked.as_deref(), o.was_masked),
            None => (None, false),
        };
        if was_masked {
            n_masked += 1;
        }
        let record = MaskedRecord {
            id,
            masked,
            was_masked,
        };
        let line = serde_json::to_string(&record)
            .map_err(|e| Error::Internal(format!("mask serialization failed: {e}")))?;
        writeln!(writer, "{line}").map_err(|e| Error::io(out_display.clone(), e))?;
    }
    writer.flush().map_err(|e| Error::io(out_display, e))?;

    let coverage = match &dataset {
        Some(rows) => masking_coverage(rows, &trees, mask_config),
        None => {
            if trees.is_empty() {
                0.0
            } else {
                n_masked as f64 / trees.len() as f64
            }
        }
    };

    let mut manifest = RunManifest::new(
        "mask",
        serde_json::json!({
            "mask_relations": mask_config.relations().collect::<Vec<_>>(),
        }),
        0,
    );
    let mut inputs = vec![conllu_path];
    if let Some(path) = dataset_path {
        inputs.push(path);
    }
    if let Some(path) = schema_path {
        inputs.push(path);
    }
    manifest.add_inputs(inputs)?;
    manifest.write(out_dir)?;

    Ok(MaskSummary {
        n_trees: trees.len(),
        n_masked,
        coverage,
        output,
    })
}

// ---------------------------------------------------------------------
// classify

#[derive(Debug, Serialize)]
pub struct ClassifySummary {
    pub n_utterances: usize,
    pub n_degraded: usize,
    pub paraphrase_failures: usize,
    /// Diagnostic: mean cosine between each paraphrase and its
    /// utterance, when the paraphrase component is active. Reported,
    /// never asserted.
    pub paraphrase_mean_cosine: Option<f64>,
    pub predictions: PathBuf,
}

/// Mean cosine between paraphrases and their utterances over the rows
/// that have one.
fn paraphrase_similarity(
    prepared: &PreparedPipeline,
) -> Result<Option<f64>> {
    let mut total = 0.0;
    let mut count = 0usize;
    for augmented in &prepared.augmented {
        let Some(paraphrase) = &augmented.paraphrase else {
            continue;
        };
        let text = prepared.source.embed_one(&augmented.text)?;
        let para = prepared.source.embed_one(paraphrase)?;
        match crate::embedding::cosine(&para, &text) {
            Ok(score) => {
                total += score;
                count += 1;
            }
            Err(Error::ZeroNorm) => {}
            Err(e) => return Err(e),
        }
    }
    Ok((count > 0).then(|| total / count as f64))
}

pub fn run_classify(options: &PipelineOptions) -> Result<ClassifySummary> {
    options.config.validate()?;
    let prepared = prepare_pipeline(
        options,
        options.config.use_paraphrase,
        options.config.use_mask,
    )?;
    let input = prepared.classify_input(dataset_name(&options.dataset));
    let records = classify_dataset(&input, &options.config, options.workers)?;

    ensure_out_dir(&options.out_dir)?;
    let predictions = options.out_dir.join("predictions.jsonl");
    write_predictions(&records, &predictions)?;
    prepared
        .matrix
        .write_csv(&prepared.schema, &options.out_dir.join("overlap_matrix.csv"))?;
    let paraphrase_mean_cosine = if options.config.use_paraphrase {
        paraphrase_similarity(&prepared)?
    } else {
        None
    };

    let mut manifest = RunManifest::new(
        "classify",
        options.config_snapshot(None),
        options.config.rng_seed,
    )
    .with_model(prepared.source.model_id());
    manifest.add_inputs(options.input_paths())?;
    manifest.write(&options.out_dir)?;

    Ok(ClassifySummary {
        n_utterances: records.len(),
        n_degraded: count_degraded(&prepared.augmented, &options.config),
        paraphrase_failures: prepared.paraphrase_failures,
        paraphrase_mean_cosine,
        predictions,
    })
}

fn dataset_name(path: &Path) -> &str {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset")
}

// ---------------------------------------------------------------------
// evaluate

pub fn run_evaluate(
    schema_path: &Path,
    predictions_path: &Path,
    out_dir: &Path,
) -> Result<EvaluationReport> {
    let schema = load_schema(schema_path)?;
    let predictions = read_predictions(predictions_path)?;
    let report = score(&predictions, &schema)?;
    ensure_out_dir(out_dir)?;
    write_json(&report, &out_dir.join("evaluation.json"))?;
    let mut manifest = RunManifest::new("evaluate", serde_json::json!({}), 0);
    manifest.add_inputs([schema_path, predictions_path])?;
    manifest.write(out_dir)?;
    Ok(report)
}

// ---------------------------------------------------------------------
// ablate

#[derive(Debug, Serialize)]
pub struct AblateSummary {
    pub rows: usize,
    pub csv: PathBuf,
    pub markdown: PathBuf,
    pub prediction_files: Vec<PathBuf>,
}

pub fn run_ablate(options: &PipelineOptions) -> Result<AblateSummary> {
    let prepared = prepare_pipeline(options, true, true)?;
    let input = prepared.classify_input(dataset_name(&options.dataset));
    let configs = default_ablation_configs(&options.config);
    let mut grid = run_ablation(
        std::slice::from_ref(&input),
        &configs,
        options.workers,
    );
    for row in &mut grid.rows {
        let degraded = count_degraded(&prepared.augmented, &row.config);
        for cell in &mut row.cells {
            if let Ok(report) = &mut cell.outcome {
                report.n_degraded = degraded;
            }
        }
    }

    ensure_out_dir(&options.out_dir)?;
    let csv = options.out_dir.join("ablation.csv");
    std::fs::write(&csv, grid.to_csv()).map_err(|e| Error::io(csv.display().to_string(), e))?;
    let markdown = options.out_dir.join("ablation.md");
    std::fs::write(&markdown, grid.to_markdown())
        .map_err(|e| Error::io(markdown.display().to_string(), e))?;
    prepared
        .matrix
        .write_csv(&prepared.schema, &options.out_dir.join("overlap_matrix.csv"))?;

    let mut prediction_files = Vec::new();
    for row in &grid.rows {
        for cell in &row.cells {
            if cell.outcome.is_ok() {
                let path = options
                    .out_dir
                    .join(format!("predictions_{}.jsonl", row.config.components_label()));
                write_predictions(&cell.predictions, &path)?;
                prediction_files.push(path);
            }
        }
    }

    let mut manifest = RunManifest::new(
        "ablate",
        options.config_snapshot(Some("default-grid")),
        options.config.rng_seed,
    )
    .with_model(prepared.source.model_id());
    manifest.add_inputs(options.input_paths())?;
    manifest.write(&options.out_dir)?;

    Ok(AblateSummary {
        rows: grid.rows.len(),
        csv,
        markdown,
        prediction_files,
    })
}

// ---------------------------------------------------------------------
// stats

#[derive(Debug, Serialize)]
pub struct StatsSummary {
    pub similarity: SimilarityStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub topk: Option<BTreeMap<usize, f64>>,
}

pub struct StatsOptions {
    pub pipeline: PipelineOptions,
    pub predictions: Option<PathBuf>,
    pub max_pairs_per_class: Option<usize>,
}

pub fn run_stats(options: &StatsOptions) -> Result<StatsSummary> {
    let pipeline = &options.pipeline;
    let schema = load_schema(&pipeline.schema)?;
    let utterances = load_dataset(&pipeline.dataset, &schema)?;
    let source = build_embedding_source(
        &pipeline.provider,
        pipeline.model.as_deref(),
        pipeline.embed_cache.as_deref(),
        pipeline.batch_size,
    )?;
    let texts: Vec<&str> = utterances.iter().map(|u| u.text.as_str()).collect();
    let embeddings = source.embed_all(&texts)?;

    let similarity = match options.max_pairs_per_class {
        Some(cap) => crate::evaluate::class_similarity_stats_sampled(
            &schema,
            &utterances,
            &embeddings,
            cap,
            pipeline.config.rng_seed,
        )?,
        None => crate::evaluate::class_similarity_stats(&schema, &utterances, &embeddings)?,
    };

    let topk = match &options.predictions {
        Some(path) => Some(topk_recall(&read_predictions(path)?, DEFAULT_TOPK)?),
        None => None,
    };

    let summary = StatsSummary { similarity, topk };
    ensure_out_dir(&pipeline.out_dir)?;
    write_json(&summary, &pipeline.out_dir.join("stats.json"))?;
    let mut manifest = RunManifest::new(
        "stats",
        pipeline.config_snapshot(None),
        pipeline.config.rng_seed,
    )
    .with_model(source.model_id());
    let mut inputs = pipeline.input_paths();
    if let Some(path) = &options.predictions {
        inputs.push(path.as_path());
    }
    manifest.add_inputs(inputs)?;
    manifest.write(&pipeline.out_dir)?;
    Ok(summary)
}

/// Convenience for tests and examples: write the grid files and return
/// their digests keyed by file name.
pub fn grid_file_digests(grid: &AblationGrid, out_dir: &Path) -> Result<BTreeMap<String, String>> {
    ensure_out_dir(out_dir)?;
    let mut digests = BTreeMap::new();
    let csv_path = out_dir.join("ablation.csv");
    std::fs::write(&csv_path, grid.to_csv())
        .map_err(|e| Error::io(csv_path.display().to_string(), e))?;
    let md_path = out_dir.join("ablation.md");
    std::fs::write(&md_path, grid.to_markdown())
        .map_err(|e| Error::io(md_path.display().to_string(), e))?;
    for row in &grid.rows {
        for cell in &row.cells {
            if cell.outcome.is_ok() {
                let path = out_dir.join(format!(
                    "predictions_{}.jsonl",
                    row.config.components_label()
                ));
                write_predictions(&cell.predictions, &path)?;
            }
        }
    }
    for entry in std::fs::read_dir(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))? {
        let entry = entry.map_err(|e| Error::io(out_dir.display().to_string(), e))?;
        let path = entry.path();
        if path.is_file() {
            let name = path
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or_default()
                .to_string();
            digests.insert(name, crate::manifest::file_sha256(&path)?);
        }
    }
    Ok(digests)
}
