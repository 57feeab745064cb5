//! Intent schemas, labelled datasets, and intent-description validation.
//!
//! A schema is an ordered list of intent classes; the line order of the
//! schema file defines the class index used everywhere else (prototypes,
//! similarity vectors, the overlap matrix). Datasets are JSONL files of
//! labelled utterances whose labels must resolve in the schema.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One intent class: raw label, its tokenized form, a declarative
/// description, and the set of entities the class may refer to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntentClass {
    pub label: String,
    pub tokenized: String,
    pub description: String,
    pub entities: BTreeSet<String>,
}

impl IntentClass {
    /// Builds a class, deriving the tokenized label and normalizing
    /// entity strings to lowercase trimmed form.
    pub fn new<I, S>(label: &str, description: &str, entities: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let tokenized = tokenize_label(label)?;
        let mut normalized = BTreeSet::new();
        for entity in entities {
            let entity = entity.as_ref().trim().to_lowercase();
            if entity.is_empty() {
                return Err(Error::InvalidInput(format!(
                    "class {label:?} has an empty entity string"
                )));
            }
            normalized.insert(entity);
        }
        Ok(IntentClass {
            label: label.to_string(),
            tokenized,
            description: description.to_string(),
            entities: normalized,
        })
    }
}

/// Ordered set of intent classes with a label-to-position index.
#[derive(Debug, Clone)]
pub struct IntentSchema {
    classes: Vec<IntentClass>,
    index: HashMap<String, usize>,
}

impl IntentSchema {
    pub fn new(classes: Vec<IntentClass>) -> Result<Self> {
        if classes.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "a schema needs at least 2 classes, got {}",
                classes.len()
            )));
        }
        let mut index = HashMap::new();
        for (position, class) in classes.iter().enumerate() {
            if class.label.is_empty() {
                return Err(Error::InvalidInput("empty class label".into()));
            }
            if index.insert(class.label.clone(), position).is_some() {
                return Err(Error::InvalidInput(format!(
                    "duplicate class label {:?}",
                    class.label
                )));
            }
        }
        Ok(IntentSchema { classes, index })
    }

    pub fn classes(&self) -> &[IntentClass] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// Position of a label in schema order.
    pub fn position(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn get(&self, position: usize) -> Option<&IntentClass> {
        self.classes.get(position)
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.classes.iter().map(|c| c.label.as_str())
    }
}

/// A dataset row: stable id, utterance text, and its gold label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledUtterance {
    pub id: String,
    pub text: String,
    pub gold_label: String,
}

/// Outcome of checking one description against the format and
/// label-preservation constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptionValidation {
    pub prefix_ok: bool,
    pub exact_label_tokens_found: usize,
    pub label_token_total: usize,
    pub warnings: Vec<String>,
}

/// Aggregate description statistics over a schema.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DescriptionStats {
    /// Mean of (description token count - tokenized label token count).
    pub mean_added_tokens: f64,
    /// Percentage of classes whose description contains at least one
    /// label token in exact form.
    pub pct_with_exact_token: f64,
    /// Percentage of all label tokens preserved across descriptions.
    pub pct_tokens_preserved: f64,
}

const DECLARATIVE_PREFIXES: &[&str] = &["user is asking", "user is saying", "user wants"];

/// Turns a raw intent label into a space-separated, title-cased token string.
///
/// Splits on `_`, `-`, `.`, `:`, whitespace, and lower-to-upper camelCase
/// boundaries; runs of uppercase stay one token. Idempotent on its own
/// output.
pub fn tokenize_label(label: &str) -> Result<String> {
    if label.trim().is_empty() {
        return Err(Error::InvalidInput("empty intent label".into()));
    }
    let mut tokens = Vec::new();
    for fragment in label.split(|c: char| c.is_whitespace() || matches!(c, '_' | '-' | '.' | ':')) {
        if fragment.is_empty() {
            continue;
        }
        for token in split_camel(fragment) {
            tokens.push(title_case(&token));
        }
    }
    if tokens.is_empty() {
        return Err(Error::InvalidInput(format!(
            "label {label:?} contains no tokens"
        )));
    }
    Ok(tokens.join(" "))
}

/// Splits at lowercase-to-uppercase transitions only.
fn split_camel(fragment: &str) -> Vec<String> {
    let mut parts = Vec::new();
    let mut current = String::new();
    let mut prev_lower = false;
    for ch in fragment.chars() {
        if prev_lower && ch.is_uppercase() && !current.is_empty() {
            parts.push(std::mem::take(&mut current));
        }
        prev_lower = ch.is_lowercase();
        current.push(ch);
    }
    if !current.is_empty() {
        parts.push(current);
    }
    parts
}

/// Uppercases the first character; the rest is left unchanged so that
/// acronym tokens survive as written.
fn title_case(token: &str) -> String {
    let mut chars = token.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Lowercase alphanumeric words of a text, split on everything else.
pub(crate) fn alphanumeric_words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .collect()
}

/// Checks one class description against the declarative-prefix and
/// label-preservation constraints. Zero preserved tokens is a warning,
/// not an error, since synonyms and cognates are permitted.
pub fn validate_description(class: &IntentClass) -> Result<DescriptionValidation> {
    if class.description.trim().is_empty() {
        return Err(Error::InvalidInput(format!(
            "class {:?} has an empty description",
            class.label
        )));
    }
    let lowered = class.description.trim().to_lowercase();
    let prefix_ok = DECLARATIVE_PREFIXES.iter().any(|p| lowered.starts_with(p));

    let description_words: HashSet<String> =
        alphanumeric_words(&class.description).into_iter().collect();
    let label_tokens: Vec<String> = class
        .tokenized
        .split_whitespace()
        .map(|t| t.to_lowercase())
        .collect();
    let found = label_tokens
        .iter()
        .filter(|t| description_words.contains(*t))
        .count();

    let mut warnings = Vec::new();
    if !prefix_ok {
        warnings.push(format!(
            "description of {:?} does not start with a declarative prefix ({})",
            class.label,
            DECLARATIVE_PREFIXES.join(" / ")
        ));
    }
    if found == 0 {
        warnings.push(format!(
            "description of {:?} contains none of the label tokens in exact form",
            class.label
        ));
    }
    Ok(DescriptionValidation {
        prefix_ok,
        exact_label_tokens_found: found,
        label_token_total: label_tokens.len(),
        warnings,
    })
}

/// Aggregates description statistics over all classes of a schema.
pub fn description_stats(schema: &IntentSchema) -> Result<DescriptionStats> {
    let mut added_total = 0.0;
    let mut classes_with_token = 0usize;
    let mut tokens_found = 0usize;
    let mut tokens_total = 0usize;
    for class in schema.classes() {
        let validation = validate_description(class)?;
        let description_tokens = class.description.split_whitespace().count();
        let label_tokens = class.tokenized.split_whitespace().count();
        added_total += description_tokens as f64 - label_tokens as f64;
        if validation.exact_label_tokens_found > 0 {
            classes_with_token += 1;
        }
        tokens_found += validation.exact_label_tokens_found;
        tokens_total += validation.label_token_total;
    }
    let n = schema.len() as f64;
    Ok(DescriptionStats {
        mean_added_tokens: added_total / n,
        pct_with_exact_token: 100.0 * classes_with_token as f64 / n,
        pct_tokens_preserved: if tokens_total == 0 {
            0.0
        } else {
            100.0 * tokens_found as f64 / tokens_total as f64
        },
    })
}

#[derive(Serialize, Deserialize)]
struct SchemaRecord {
    label: String,
    description: String,
    #[serde(default)]
    entities: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct DatasetRecord {
    id: String,
    text: String,
    label: String,
}

fn open_lines(path: &Path) -> Result<impl Iterator<Item = (usize, std::io::Result<String>)>> {
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(BufReader::new(file)
        .lines()
        .enumerate()
        .map(|(i, line)| (i + 1, line)))
}

/// Loads a schema from a JSONL file; line order defines the class index.
pub fn load_schema(path: &Path) -> Result<IntentSchema> {
    let display = path.display().to_string();
    let mut classes = Vec::new();
    for (line_no, line) in open_lines(path)? {
        let line = line.map_err(|e| Error::io(display.clone(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SchemaRecord = serde_json::from_str(&line).map_err(|e| Error::Record {
            path: display.clone(),
            line: line_no,
            message: format!("malformed schema record: {e}"),
        })?;
        let class =
            IntentClass::new(&record.label, &record.description, record.entities).map_err(
                |e| Error::Record {
                    path: display.clone(),
                    line: line_no,
                    message: e.to_string(),
                },
            )?;
        classes.push(class);
    }
    IntentSchema::new(classes)
}

/// Writes a schema back out as JSONL, preserving class order.
pub fn save_schema(schema: &IntentSchema, path: &Path) -> Result<()> {
    let display = path.display().to_string();
    let file = File::create(path).map_err(|e| Error::io(display.clone(), e))?;
    let mut writer = BufWriter::new(file);
    for class in schema.classes() {
        let record = SchemaRecord {
            label: class.label.clone(),
            description: class.description.clone(),
            entities: class.entities.iter().cloned().collect(),
        };
        let line = serde_json::to_string(&record)
            .map_err(|e| Error::Internal(format!("schema serialization failed: {e}")))?;
        writeln!(writer, "{line}").map_err(|e| Error::io(display.clone(), e))?;
    }
    writer.flush().map_err(|e| Error::io(display, e))
}

/// Loads a JSONL dataset and validates every row against the schema.
pub fn load_dataset(path: &Path, schema: &IntentSchema) -> Result<Vec<LabeledUtterance>> {
    let display = path.display().to_string();
    let mut utterances = Vec::new();
    let mut seen_ids = HashSet::new();
    for (line_no, line) in open_lines(path)? {
        let line = line.map_err(|e| Error::io(display.clone(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DatasetRecord = serde_json::from_str(&line).map_err(|e| Error::Record {
            path: display.clone(),
            line: line_no,
            message: format!("malformed dataset record: {e}"),
        })?;
        if record.text.trim().is_empty() {
            return Err(Error::Record {
                path: display.clone(),
                line: line_no,
                message: format!("utterance {:?} has empty text", record.id),
            });
        }
        if schema.position(&record.label).is_none() {
            return Err(Error::UnknownLabel {
                label: record.label,
                path: display.clone(),
                line: line_no,
            });
        }
        if !seen_ids.insert(record.id.clone()) {
            return Err(Error::DuplicateId {
                id: record.id,
                path: display.clone(),
                line: line_no,
            });
        }
        utterances.push(LabeledUtterance {
            id: record.id,
            text: record.text,
            gold_label: record.label,
        });
    }
    Ok(utterances)
}
