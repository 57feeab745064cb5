//! CoNLL-U ingestion: dependency trees keyed by sentence id.
//!
//! Only the ID, FORM, HEAD and DEPREL columns are retained. Multiword
//! token ranges (`1-2`) and empty nodes (`5.1`) are skipped. Every
//! sentence must carry a `# sent_id = <id>` comment matching its
//! dataset id.

use std::collections::BTreeMap;
use std::io::BufRead;

use crate::error::{Error, Result};

/// One token of a dependency parse. `head` is the 1-based index of the
/// governing token, 0 for the root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepToken {
    pub index: usize,
    pub form: String,
    pub head: usize,
    pub deprel: String,
}

/// A validated dependency tree: contiguous 1-based indices, exactly one
/// root, all head links acyclic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepTree {
    tokens: Vec<DepToken>,
}

impl DepTree {
    pub fn new(tokens: Vec<DepToken>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::InvalidInput("empty dependency tree".into()));
        }
        let n = tokens.len();
        let mut roots = 0;
        for (i, token) in tokens.iter().enumerate() {
            if token.index != i + 1 {
                return Err(Error::InvalidInput(format!(
                    "token indices must be contiguous from 1; position {} has index {}",
                    i + 1,
                    token.index
                )));
            }
            if token.head > n {
                return Err(Error::InvalidInput(format!(
                    "token {} has head {} outside 0..={n}",
                    token.index, token.head
                )));
            }
            if token.head == token.index {
                return Err(Error::InvalidInput(format!(
                    "token {} is its own head",
                    token.index
                )));
            }
            if token.head == 0 {
                roots += 1;
            }
        }
        if roots != 1 {
            return Err(Error::InvalidInput(format!(
                "expected exactly one root, found {roots}"
            )));
        }
        // Chase heads from each token; every chain must reach the root
        // within n steps or there is a cycle.
        for token in &tokens {
            let mut current = token.head;
            let mut steps = 0;
            while current != 0 {
                current = tokens[current - 1].head;
                steps += 1;
                if steps > n {
                    return Err(Error::InvalidInput(format!(
                        "cycle in head links involving token {}",
                        token.index
                    )));
                }
            }
        }
        Ok(DepTree { tokens })
    }

    pub fn tokens(&self) -> &[DepToken] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// 1-based index of the root token.
    pub fn root(&self) -> usize {
        self.tokens
            .iter()
            .find(|t| t.head == 0)
            .map(|t| t.index)
            .expect("validated tree has a root")
    }

    /// 1-based indices of the children of a token, in surface order.
    pub fn children(&self, index: usize) -> Vec<usize> {
        self.tokens
            .iter()
            .filter(|t| t.head == index)
            .map(|t| t.index)
            .collect()
    }

    /// Surface string: token forms joined by single spaces.
    pub fn surface(&self) -> String {
        let forms: Vec<&str> = self.tokens.iter().map(|t| t.form.as_str()).collect();
        forms.join(" ")
    }
}

/// Parses a CoNLL-U stream into a map from sentence id to tree.
pub fn parse_conllu<R: BufRead>(reader: R, source: &str) -> Result<BTreeMap<String, DepTree>> {
    let mut trees = BTreeMap::new();
    let mut sent_id: Option<String> = None;
    let mut tokens: Vec<DepToken> = Vec::new();
    let mut block_start = 0usize;

    let record_err = |line: usize, message: String| Error::Record {
        path: source.to_string(),
        line,
        message,
    };

    let flush = |sent_id: &mut Option<String>,
                     tokens: &mut Vec<DepToken>,
                     trees: &mut BTreeMap<String, DepTree>,
                     block_start: usize|
     -> Result<()> {
        if tokens.is_empty() {
            *sent_id = None;
            return Ok(());
        }
        let id = sent_id.take().ok_or_else(|| {
            record_err(block_start, "sentence block has no # sent_id comment".into())
        })?;
        let tree = DepTree::new(std::mem::take(tokens))
            .map_err(|e| record_err(block_start, format!("sentence {id:?}: {e}")))?;
        if trees.insert(id.clone(), tree).is_some() {
            return Err(record_err(
                block_start,
                format!("duplicate sent_id {id:?}"),
            ));
        }
        Ok(())
    };

    for (line_no, line) in reader.lines().enumerate() {
        let line_no = line_no + 1;
        let line = line.map_err(|e| Error::io(source.to_string(), e))?;
        let trimmed = line.trim_end();
        if trimmed.is_empty() {
            flush(&mut sent_id, &mut tokens, &mut trees, block_start)?;
            continue;
        }
        if tokens.is_empty() && sent_id.is_none() {
            block_start = line_no;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            if let Some(value) = comment.trim().strip_prefix("sent_id") {
                let value = value.trim_start();
                if let Some(id) = value.strip_prefix('=') {
                    sent_id = Some(id.trim().to_string());
                }
            }
            continue;
        }
        let columns: Vec<&str> = trimmed.split('\t').collect();
        if columns.len() != 10 {
            return Err(record_err(
                line_no,
                format!("expected 10 tab-separated columns, found {}", columns.len()),
            ));
        }
        let id_column = columns[0];
        if id_column.contains('-') || id_column.contains('.') {
            // Multiword token range or empty node; not part of the basic tree.
            continue;
        }
        let index: usize = id_column
            .parse()
            .map_err(|_| record_err(line_no, format!("bad token id {id_column:?}")))?;
        let head: usize = columns[6]
            .parse()
            .map_err(|_| record_err(line_no, format!("bad head {:?}", columns[6])))?;
        tokens.push(DepToken {
            index,
            form: columns[1].to_string(),
            head,
            deprel: columns[7].to_string(),
        });
    }
    flush(&mut sent_id, &mut tokens, &mut trees, block_start)?;
    Ok(trees)
}
