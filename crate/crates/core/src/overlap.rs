//! Entity-overlap matrix over intent classes and the top-k overlap gate.
//!
//! The matrix is precomputed once from the schema's entity sets; the
//! gate asks whether any two of the top-k candidate classes for an
//! utterance share an entity.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::corpus::IntentSchema;
use crate::error::{Error, Result};

/// Symmetric boolean matrix: `bit(i, j)` is true iff classes i and j
/// share at least one entity. Diagonal entries are stored true for
/// non-empty entity sets but never consulted by the gate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverlapMatrix {
    size: usize,
    bits: Vec<bool>,
}

impl OverlapMatrix {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn bit(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.size + j]
    }

    /// Writes the matrix as 0/1 CSV with a label header row and column.
    pub fn write_csv(&self, schema: &IntentSchema, path: &Path) -> Result<()> {
        let display = path.display().to_string();
        let file = File::create(path).map_err(|e| Error::io(display.clone(), e))?;
        let mut writer = BufWriter::new(file);
        let labels: Vec<&str> = schema.labels().collect();
        writeln!(writer, "label,{}", labels.join(",")).map_err(|e| Error::io(display.clone(), e))?;
        for (i, label) in labels.iter().enumerate() {
            let row: Vec<&str> = (0..self.size)
                .map(|j| if self.bit(i, j) { "1" } else { "0" })
                .collect();
            writeln!(writer, "{label},{}", row.join(","))
                .map_err(|e| Error::io(display.clone(), e))?;
        }
        writer.flush().map_err(|e| Error::io(display, e))
    }
}

/// Builds the overlap matrix from the schema's normalized entity sets.
/// Classes with empty entity sets overlap nothing.
pub fn build_overlap_matrix(schema: &IntentSchema) -> OverlapMatrix {
    let size = schema.len();
    let mut bits = vec![false; size * size];
    for i in 0..size {
        let a = &schema.classes()[i].entities;
        for j in i..size {
            let b = &schema.classes()[j].entities;
            let overlapping = if i == j {
                !a.is_empty()
            } else {
                !a.is_disjoint(b)
            };
            bits[i * size + j] = overlapping;
            bits[j * size + i] = overlapping;
        }
    }
    OverlapMatrix { size, bits }
}

/// Positions of the k highest-scoring classes, scores descending, ties
/// broken by ascending class position. Returns all classes when k
/// exceeds the class count.
pub fn top_k_classes(sims: &[f64], k: usize) -> Result<Vec<usize>> {
    if sims.is_empty() {
        return Err(Error::InvalidInput("empty similarity vector".into()));
    }
    if k == 0 {
        return Err(Error::InvalidInput("top-k needs k >= 1".into()));
    }
    let mut order: Vec<usize> = (0..sims.len()).collect();
    order.sort_by(|&a, &b| {
        sims[b]
            .total_cmp(&sims[a])
            .then_with(|| a.cmp(&b))
    });
    order.truncate(k.min(sims.len()));
    Ok(order)
}

/// True iff any two distinct classes within the top-k candidates share
/// an entity.
pub fn overlaps(sims: &[f64], k: usize, matrix: &OverlapMatrix) -> Result<bool> {
    if sims.len() != matrix.size() {
        return Err(Error::DimensionMismatch {
            left: sims.len(),
            right: matrix.size(),
        });
    }
    let top = top_k_classes(sims, k)?;
    for (position, &m) in top.iter().enumerate() {
        for &n in &top[position + 1..] {
            if matrix.bit(m, n) {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::IntentClass;
    use proptest::prelude::*;

    fn schema_with_entities(entity_sets: &[&[&str]]) -> IntentSchema {
        let classes = entity_sets
            .iter()
            .enumerate()
            .map(|(i, entities)| {
                IntentClass::new(
                    &format!("class_{i}"),
                    &format!("user wants class {i}"),
                    entities.iter().copied(),
                )
                .unwrap()
            })
            .collect();
        IntentSchema::new(classes).unwrap()
    }

    #[test]
    fn shared_entity_sets_overlap() {
        let schema = schema_with_entities(&[&["song", "playlist"], &["song"], &["flight"]]);
        let matrix = build_overlap_matrix(&schema);
        assert!(matrix.bit(0, 1));
        assert!(matrix.bit(1, 0));
        assert!(!matrix.bit(0, 2));
        assert!(!matrix.bit(1, 2));
    }

    #[test]
    fn empty_entity_set_overlaps_nothing() {
        let schema = schema_with_entities(&[&[], &["meal"], &["meal", "flight"]]);
        let matrix = build_overlap_matrix(&schema);
        assert!(!matrix.bit(0, 0));
        assert!(!matrix.bit(0, 1));
        assert!(!matrix.bit(0, 2));
        assert!(matrix.bit(1, 2));
    }

    #[test]
    fn top_k_sorts_descending() {
        assert_eq!(top_k_classes(&[0.1, 0.9, 0.5], 2).unwrap(), vec![1, 2]);
    }

    #[test]
    fn top_k_ties_break_by_position() {
        assert_eq!(top_k_classes(&[0.5, 0.5, 0.5], 2).unwrap(), vec![0, 1]);
    }

    #[test]
    fn top_k_clamps_to_class_count() {
        assert_eq!(top_k_classes(&[0.3, 0.1, 0.2], 10).unwrap(), vec![0, 2, 1]);
    }

    #[test]
    fn top_k_rejects_empty_input() {
        assert!(top_k_classes(&[], 3).is_err());
        assert!(top_k_classes(&[0.1], 0).is_err());
    }

    #[test]
    fn gate_fires_on_any_overlapping_pair() {
        let schema = schema_with_entities(&[&["song"], &["song"], &["flight"]]);
        let matrix = build_overlap_matrix(&schema);
        // Top 3 = {0, 1, 2}; only 0-1 share an entity.
        assert!(overlaps(&[0.9, 0.8, 0.7], 3, &matrix).unwrap());
        // Top 2 = {1, 2}: disjoint.
        assert!(!overlaps(&[0.1, 0.8, 0.7], 2, &matrix).unwrap());
    }

    #[test]
    fn gate_is_false_for_k_one() {
        let schema = schema_with_entities(&[&["song"], &["song"]]);
        let matrix = build_overlap_matrix(&schema);
        assert!(!overlaps(&[0.9, 0.8], 1, &matrix).unwrap());
    }

    #[test]
    fn csv_dump_has_label_headers_and_bits() {
        let schema = schema_with_entities(&[&["song"], &["song"], &[]]);
        let matrix = build_overlap_matrix(&schema);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("overlap.csv");
        matrix.write_csv(&schema, &path).unwrap();
        let body = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = body.lines().collect();
        assert_eq!(lines[0], "label,class_0,class_1,class_2");
        assert_eq!(lines[1], "class_0,1,1,0");
        assert_eq!(lines[2], "class_1,1,1,0");
        assert_eq!(lines[3], "class_2,0,0,0");
    }

    #[test]
    fn rebuild_is_bitwise_identical() {
        let schema =
            schema_with_entities(&[&["a", "b"], &["b", "c"], &["d"], &[], &["a", "d"]]);
        assert_eq!(build_overlap_matrix(&schema), build_overlap_matrix(&schema));
    }

    /// Oracle: exhaustive enumeration over all unordered pairs.
    fn brute_force_overlaps(sims: &[f64], k: usize, matrix: &OverlapMatrix) -> bool {
        let top = top_k_classes(sims, k).unwrap();
        let mut any = false;
        for &m in &top {
            for &n in &top {
                if m != n && matrix.bit(m, n) {
                    any = true;
                }
            }
        }
        any
    }

    proptest! {
        #[test]
        fn gate_matches_exhaustive_pair_enumeration(
            sims in proptest::collection::vec(-1.0f64..1.0, 5),
            k in 1usize..=5,
        ) {
            let schema = schema_with_entities(&[
                &["song", "playlist"],
                &["song"],
                &["flight", "meal"],
                &[],
                &["playlist", "meal"],
            ]);
            let matrix = build_overlap_matrix(&schema);
            prop_assert_eq!(
                overlaps(&sims, k, &matrix).unwrap(),
                brute_force_overlaps(&sims, k, &matrix)
            );
        }

        #[test]
        fn gate_is_monotone_in_k(sims in proptest::collection::vec(-1.0f64..1.0, 6)) {
            let schema = schema_with_entities(&[
                &["a"], &["a", "b"], &["c"], &["b"], &[], &["c", "d"],
            ]);
            let matrix = build_overlap_matrix(&schema);
            let mut previous = false;
            for k in 1..=6 {
                let current = overlaps(&sims, k, &matrix).unwrap();
                prop_assert!(!previous || current, "gate went false at k={k}");
                previous = current;
            }
        }

        #[test]
        fn gate_depends_only_on_ranks(
            raw in proptest::collection::vec(0u32..1000, 5),
            scale in 1u32..100,
            shift in 0u32..10,
            k in 1usize..=5,
        ) {
            let schema = schema_with_entities(&[
                &["song"], &["song"], &["flight"], &["flight"], &["x"],
            ]);
            let matrix = build_overlap_matrix(&schema);
            // Discrete grid keeps the positive affine transform exact, so
            // ranks (including ties) are provably preserved.
            let sims: Vec<f64> = raw.iter().map(|r| f64::from(*r) / 1000.0).collect();
            let transformed: Vec<f64> =
                raw.iter().map(|r| f64::from(r * scale + shift)).collect();
            prop_assert_eq!(
                overlaps(&sims, k, &matrix).unwrap(),
                overlaps(&transformed, k, &matrix).unwrap()
            );
        }
    }
}
