//! Metrics, top-k candidate recall, in/out-class similarity statistics,
//! and the component ablation grid runner.

use std::collections::{BTreeMap, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::AugmentedUtterance;
use crate::classifier::{predict, PrototypeSet, RunConfig};
use crate::corpus::{IntentSchema, LabeledUtterance};
use crate::embedding::{cosine, Embedding, EmbeddingSource};
use crate::error::{Error, Result};
use crate::overlap::OverlapMatrix;

/// One prediction record as written to and read from predictions JSONL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub gold: String,
    pub predicted: String,
    pub rank_of_gold: Option<usize>,
    pub gated_mask: bool,
}

/// Scores for one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub mean_acc_f1: f64,
    pub per_class_f1: BTreeMap<String, f64>,
    pub topk_recall: BTreeMap<usize, f64>,
    pub n_utterances: usize,
    pub n_degraded: usize,
}

pub const DEFAULT_TOPK: &[usize] = &[1, 3, 5, 10];

/// Accuracy and macro-F1 with the one-vs-rest convention. Macro-F1
/// averages over the classes present in the gold set; a gold-present
/// class with no true positives contributes zero.
pub fn score(predictions: &[PredictionRecord], schema: &IntentSchema) -> Result<EvaluationReport> {
    if predictions.is_empty() {
        return Err(Error::InvalidInput("no predictions to score".into()));
    }
    for prediction in predictions {
        for label in [&prediction.gold, &prediction.predicted] {
            if schema.position(label).is_none() {
                return Err(Error::InvalidInput(format!(
                    "label {label:?} from prediction {:?} is not in the schema",
                    prediction.id
                )));
            }
        }
    }

    let total = predictions.len();
    let correct = predictions
        .iter()
        .filter(|p| p.gold == p.predicted)
        .count();
    let accuracy = correct as f64 / total as f64;

    let gold_classes: Vec<&str> = {
        let present: HashSet<&str> = predictions.iter().map(|p| p.gold.as_str()).collect();
        // Schema order keeps the report deterministic.
        schema.labels().filter(|l| present.contains(l)).collect()
    };

    let mut per_class_f1 = BTreeMap::new();
    let mut f1_total = 0.0;
    for class in &gold_classes {
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut fn_ = 0usize;
        for prediction in predictions {
            let is_gold = prediction.gold == *class;
            let is_predicted = prediction.predicted == *class;
            match (is_gold, is_predicted) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (false, false) => {}
            }
        }
        let precision = if tp + fp == 0 {
            0.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let recall = if tp + fn_ == 0 {
            0.0
        } else {
            tp as f64 / (tp + fn_) as f64
        };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        per_class_f1.insert(class.to_string(), f1);
        f1_total += f1;
    }
    let macro_f1 = f1_total / gold_classes.len() as f64;

    let topk = if predictions.iter().all(|p| p.rank_of_gold.is_some()) {
        topk_recall(predictions, DEFAULT_TOPK)?
    } else {
        BTreeMap::new()
    };

    Ok(EvaluationReport {
        accuracy,
        macro_f1,
        mean_acc_f1: (accuracy + macro_f1) / 2.0,
        per_class_f1,
        topk_recall: topk,
        n_utterances: total,
        n_degraded: 0,
    })
}

/// Fraction of predictions whose gold label ranks within the top k, for
/// each requested k.
pub fn topk_recall(
    predictions: &[PredictionRecord],
    ks: &[usize],
) -> Result<BTreeMap<usize, f64>> {
    if predictions.is_empty() {
        return Err(Error::InvalidInput("no predictions for top-k recall".into()));
    }
    let mut ranks = Vec::with_capacity(predictions.len());
    for prediction in predictions {
        let rank = prediction.rank_of_gold.ok_or_else(|| {
            Error::InvalidInput(format!(
                "prediction {:?} is missing rank_of_gold",
                prediction.id
            ))
        })?;
        ranks.push(rank);
    }
    let total = ranks.len() as f64;
    Ok(ks
        .iter()
        .map(|&k| {
            let hits = ranks.iter().filter(|&&r| r <= k).count();
            (k, hits as f64 / total)
        })
        .collect())
}

/// Mean in-class and out-of-class pairwise similarity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimilarityStats {
    pub s_in: f64,
    pub s_out: f64,
    pub delta: f64,
    pub pct_delta: f64,
    /// Classes excluded for having fewer than two utterances.
    pub excluded: Vec<String>,
    /// True when pair sampling was used instead of the exact all-pairs
    /// computation.
    pub approximate: bool,
}

/// Exact all-pairs in/out-class similarity statistics.
///
/// In-class similarity averages, per class and then over classes, the
/// cosine over ordered distinct in-class pairs; out-class averages the
/// cosine between each class's utterances and all utterances of other
/// classes. Classes with fewer than two utterances are excluded and
/// listed.
pub fn class_similarity_stats(
    schema: &IntentSchema,
    dataset: &[LabeledUtterance],
    embeddings: &[Embedding],
) -> Result<SimilarityStats> {
    class_similarity_stats_impl(schema, dataset, embeddings, None)
}

/// Pair-sampled approximation for large corpora: at most
/// `max_pairs_per_class` pairs are drawn per class for each of the two
/// statistics, under a seeded generator.
pub fn class_similarity_stats_sampled(
    schema: &IntentSchema,
    dataset: &[LabeledUtterance],
    embeddings: &[Embedding],
    max_pairs_per_class: usize,
    seed: u64,
) -> Result<SimilarityStats> {
    if max_pairs_per_class == 0 {
        return Err(Error::InvalidInput("pair cap must be positive".into()));
    }
    class_similarity_stats_impl(schema, dataset, embeddings, Some((max_pairs_per_class, seed)))
}

fn class_similarity_stats_impl(
    schema: &IntentSchema,
    dataset: &[LabeledUtterance],
    embeddings: &[Embedding],
    sampling: Option<(usize, u64)>,
) -> Result<SimilarityStats> {
    if dataset.len() != embeddings.len() {
        return Err(Error::InvalidInput(format!(
            "dataset has {} utterances but {} embeddings were supplied",
            dataset.len(),
            embeddings.len()
        )));
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); schema.len()];
    for (row, utterance) in dataset.iter().enumerate() {
        let class = schema.position(&utterance.gold_label).ok_or_else(|| {
            Error::InvalidInput(format!(
                "gold label {:?} is not in the schema",
                utterance.gold_label
            ))
        })?;
        members[class].push(row);
    }

    let mut excluded = Vec::new();
    let mut included = Vec::new();
    for (class, rows) in members.iter().enumerate() {
        if rows.len() < 2 {
            excluded.push(schema.classes()[class].label.clone());
        } else {
            included.push(class);
        }
    }
    if included.is_empty() {
        return Err(Error::InvalidInput(
            "every class has fewer than two utterances; similarity stats are undefined".into(),
        ));
    }

    let mut rng = sampling.map(|(cap, seed)| (cap, ChaCha8Rng::seed_from_u64(seed)));

    let mut in_total = 0.0;
    let mut out_total = 0.0;
    for &class in &included {
        let rows = &members[class];
        let others: Vec<usize> = dataset
            .iter()
            .enumerate()
            .filter(|(_, u)| schema.position(&u.gold_label) != Some(class))
            .map(|(row, _)| row)
            .collect();

        // Ordered distinct in-class pairs.
        let mut in_pairs: Vec<(usize, usize)> = Vec::new();
        for &a in rows {
            for &b in rows {
                if a != b {
                    in_pairs.push((a, b));
                }
            }
        }
        let mut out_pairs: Vec<(usize, usize)> = Vec::new();
        for &a in rows {
            for &b in &others {
                out_pairs.push((a, b));
            }
        }
        if let Some((cap, rng)) = rng.as_mut() {
            subsample_pairs(&mut in_pairs, *cap, rng);
            subsample_pairs(&mut out_pairs, *cap, rng);
        }

        let mean_over = |pairs: &[(usize, usize)]| -> Result<f64> {
            let mut total = 0.0;
            for &(a, b) in pairs {
                total += cosine(&embeddings[a], &embeddings[b])?;
            }
            Ok(total / pairs.len() as f64)
        };
        in_total += mean_over(&in_pairs)?;
        if !out_pairs.is_empty() {
            out_total += mean_over(&out_pairs)?;
        }
    }

    let n = included.len() as f64;
    let s_in = in_total / n;
    let s_out = out_total / n;
    let delta = s_in - s_out;
    let pct_delta = if s_out == 0.0 {
        0.0
    } else {
        100.0 * delta / s_out
    };
    Ok(SimilarityStats {
        s_in,
        s_out,
        delta,
        pct_delta,
        excluded,
        approximate: sampling.is_some(),
    })
}

fn subsample_pairs(pairs: &mut Vec<(usize, usize)>, cap: usize, rng: &mut ChaCha8Rng) {
    if pairs.len() <= cap {
        return;
    }
    let mut indices = rand::seq::index::sample(rng, pairs.len(), cap).into_vec();
    indices.sort_unstable();
    *pairs = indices.into_iter().map(|i| pairs[i]).collect();
}

/// Everything needed to classify one dataset under any component config.
pub struct ClassifyInput<'a> {
    pub dataset_name: String,
    pub schema: &'a IntentSchema,
    pub utterances: &'a [LabeledUtterance],
    pub augmented: &'a [AugmentedUtterance],
    pub prototypes: &'a PrototypeSet,
    pub source: &'a EmbeddingSource,
    pub matrix: &'a OverlapMatrix,
}

/// Classifies every utterance of a dataset under one config. Output
/// order always follows dataset order regardless of worker scheduling.
pub fn classify_dataset(
    input: &ClassifyInput<'_>,
    config: &RunConfig,
    workers: usize,
) -> Result<Vec<PredictionRecord>> {
    config.validate()?;
    if input.utterances.len() != input.augmented.len() {
        return Err(Error::Internal(format!(
            "{} utterances but {} augmented rows",
            input.utterances.len(),
            input.augmented.len()
        )));
    }
    let run = || -> Result<Vec<PredictionRecord>> {
        input
            .utterances
            .par_iter()
            .zip(input.augmented.par_iter())
            .map(|(utterance, augmented)| {
                let prediction = predict(
                    augmented,
                    &utterance.id,
                    Some(&utterance.gold_label),
                    input.prototypes,
                    config,
                    input.source,
                    Some(input.matrix),
                )?;
                Ok(PredictionRecord {
                    id: utterance.id.clone(),
                    gold: utterance.gold_label.clone(),
                    predicted: prediction.predicted_label,
                    rank_of_gold: prediction.rank_of_gold,
                    gated_mask: prediction.mask_gated,
                })
            })
            .collect()
    };
    if workers == 0 {
        run()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Internal(format!("thread pool construction failed: {e}")))?;
        pool.install(run)
    }
}

/// Number of utterances for which an enabled component was unavailable:
/// a requested paraphrase that does not exist, or a requested mask with
/// no masked variant. These rows still classify; the component simply
/// contributes nothing.
pub fn count_degraded(augmented: &[AugmentedUtterance], config: &RunConfig) -> usize {
    augmented
        .iter()
        .filter(|a| {
            (config.use_paraphrase && a.paraphrase.is_none())
                || (config.use_mask && !a.was_masked)
        })
        .count()
}

/// The ten default component rows of the ablation grid.
pub fn default_ablation_configs(base: &RunConfig) -> Vec<RunConfig> {
    ["E", "P", "M", "EP", "EM", "PM", "EPM", "EMO", "PMO", "EPMO"]
        .iter()
        .map(|spec| {
            let mut config = RunConfig::from_components(spec).expect("static specs are valid");
            config.overlap_top_k = base.overlap_top_k;
            config.normalize_components = base.normalize_components;
            config.synthetic_sample_size = base.synthetic_sample_size;
            config.rng_seed = base.rng_seed;
            config
        })
        .collect()
}

/// One (config, dataset) cell of the grid. Failures are recorded and do
/// not abort the remaining cells.
pub struct AblationCell {
    pub dataset: String,
    pub outcome: Result<EvaluationReport, String>,
    pub predictions: Vec<PredictionRecord>,
}

pub struct AblationRow {
    pub config: RunConfig,
    pub cells: Vec<AblationCell>,
}

pub struct AblationGrid {
    pub rows: Vec<AblationRow>,
}

impl AblationRow {
    /// Unweighted mean of the per-dataset mean scores, when every cell
    /// succeeded.
    pub fn overall_mean(&self) -> Option<f64> {
        let mut total = 0.0;
        for cell in &self.cells {
            total += cell.outcome.as_ref().ok()?.mean_acc_f1;
        }
        Some(total / self.cells.len() as f64)
    }
}

/// Runs every config over every dataset.
pub fn run_ablation(
    inputs: &[ClassifyInput<'_>],
    configs: &[RunConfig],
    workers: usize,
) -> AblationGrid {
    let rows = configs
        .iter()
        .map(|config| {
            let cells = inputs
                .iter()
                .map(|input| {
                    let result = classify_dataset(input, config, workers)
                        .and_then(|predictions| {
                            score(&predictions, input.schema)
                                .map(|report| (predictions, report))
                        });
                    match result {
                        Ok((predictions, report)) => AblationCell {
                            dataset: input.dataset_name.clone(),
                            outcome: Ok(report),
                            predictions,
                        },
                        Err(e) => AblationCell {
                            dataset: input.dataset_name.clone(),
                            outcome: Err(e.to_string()),
                            predictions: Vec::new(),
                        },
                    }
                })
                .collect();
            AblationRow {
                config: config.clone(),
                cells,
            }
        })
        .collect();
    AblationGrid { rows }
}

fn pct(value: f64) -> String {
    format!("{:.2}", 100.0 * value)
}

fn flag(on: bool) -> &'static str {
    if on {
        "1"
    } else {
        "0"
    }
}

impl AblationGrid {
    /// CSV report: `setup,E,P,M,O,dataset,accuracy,macro_f1,mean`, one
    /// line per (config, dataset), percentages with two decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("setup,E,P,M,O,dataset,accuracy,macro_f1,mean\n");
        for row in &self.rows {
            let config = &row.config;
            for cell in &row.cells {
                let (accuracy, macro_f1, mean) = match &cell.outcome {
                    Ok(report) => (
                        pct(report.accuracy),
                        pct(report.macro_f1),
                        pct(report.mean_acc_f1),
                    ),
                    Err(_) => (String::new(), String::new(), String::new()),
                };
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    config.components_label(),
                    flag(config.use_utterance),
                    flag(config.use_paraphrase),
                    flag(config.use_mask),
                    flag(config.use_overlap_gate),
                    cell.dataset,
                    accuracy,
                    macro_f1,
                    mean
                ));
            }
        }
        out
    }

    /// Markdown table: component flags as `x` marks, one column of mean
    /// scores per dataset, plus the overall column.
    pub fn to_markdown(&self) -> String {
        let datasets: Vec<&str> = self
            .rows
            .first()
            .map(|row| row.cells.iter().map(|c| c.dataset.as_str()).collect())
            .unwrap_or_default();
        let mut out = String::new();
        out.push_str("| E | P | M | O |");
        for dataset in &datasets {
            out.push_str(&format!(" {dataset} |"));
        }
        out.push_str(" Ovr. |\n");
        out.push_str("|---|---|---|---|");
        for _ in &datasets {
            out.push_str("---|");
        }
        out.push_str("---|\n");
        for row in &self.rows {
            let mark = |on: bool| if on { "x" } else { " " };
            out.push_str(&format!(
                "| {} | {} | {} | {} |",
                mark(row.config.use_utterance),
                mark(row.config.use_paraphrase),
                mark(row.config.use_mask),
                mark(row.config.use_overlap_gate)
            ));
            for cell in &row.cells {
                match &cell.outcome {
                    Ok(report) => out.push_str(&format!(" {} |", pct(report.mean_acc_f1))),
                    Err(_) => out.push_str(" n/a |"),
                }
            }
            match row.overall_mean() {
                Some(mean) => out.push_str(&format!(" {} |\n", pct(mean))),
                None => out.push_str(" n/a |\n"),
            }
        }
        out
    }
}
