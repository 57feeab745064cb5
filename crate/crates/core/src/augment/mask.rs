//! Object-span masking over dependency trees.
//!
//! Depth-first from the root: when a node's relation is in the mask set,
//! its entire subtree is replaced by a single `[MASK]` and its
//! descendants are not visited. The surface string is rebuilt in
//! original token order; adjacent masked spans collapse into one mask
//! token.

use std::collections::BTreeSet;

use crate::augment::conllu::DepTree;

pub const MASK_TOKEN: &str = "[MASK]";

/// Relations whose subtrees are masked. `dobj`, `pobj` and `ccomp`
/// cover Stanford-style parses; `obj` covers UD-style ones.
pub const DEFAULT_MASK_RELATIONS: &[&str] = &["dobj", "pobj", "ccomp", "obj"];

/// The set of dependency relations treated as object spans. Matching is
/// case-insensitive on the base relation, so `dobj:dir` matches `dobj`.
#[derive(Debug, Clone)]
pub struct MaskConfig {
    relations: BTreeSet<String>,
}

impl Default for MaskConfig {
    fn default() -> Self {
        MaskConfig::new(DEFAULT_MASK_RELATIONS.iter().copied())
    }
}

impl MaskConfig {
    pub fn new<I, S>(relations: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        MaskConfig {
            relations: relations
                .into_iter()
                .map(|r| r.as_ref().trim().to_lowercase())
                .filter(|r| !r.is_empty())
                .collect(),
        }
    }

    pub fn relations(&self) -> impl Iterator<Item = &str> {
        self.relations.iter().map(|s| s.as_str())
    }

    fn matches(&self, deprel: &str) -> bool {
        let base = deprel.split(':').next().unwrap_or(deprel).to_lowercase();
        self.relations.contains(&base)
    }
}

/// Result of masking one tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskOutcome {
    pub masked: Option<String>,
    pub was_masked: bool,
}

/// Applies the masking procedure to a tree.
///
/// Returns no mask when no qualifying relation exists, and discards the
/// degenerate all-mask result that arises when the root itself carries a
/// masked relation, since a fully masked string carries no signal.
pub fn mask_tree(tree: &DepTree, config: &MaskConfig) -> MaskOutcome {
    let n = tree.len();
    let mut masked_flags = vec![false; n];

    let mut stack = vec![tree.root()];
    while let Some(index) = stack.pop() {
        let token = &tree.tokens()[index - 1];
        if config.matches(&token.deprel) {
            mark_subtree(tree, index, &mut masked_flags);
        } else {
            // Children pushed in reverse keep surface-order traversal;
            // order does not affect the outcome, only determinism of work.
            for child in tree.children(index).into_iter().rev() {
                stack.push(child);
            }
        }
    }

    if masked_flags.iter().all(|m| !m) {
        return MaskOutcome {
            masked: None,
            was_masked: false,
        };
    }
    if masked_flags.iter().all(|m| *m) {
        return MaskOutcome {
            masked: None,
            was_masked: false,
        };
    }

    let mut parts: Vec<&str> = Vec::new();
    let mut in_masked_span = false;
    for (token, masked) in tree.tokens().iter().zip(masked_flags.iter()) {
        if *masked {
            if !in_masked_span {
                parts.push(MASK_TOKEN);
                in_masked_span = true;
            }
        } else {
            parts.push(token.form.as_str());
            in_masked_span = false;
        }
    }
    MaskOutcome {
        masked: Some(parts.join(" ")),
        was_masked: true,
    }
}

fn mark_subtree(tree: &DepTree, root: usize, flags: &mut [bool]) {
    let mut stack = vec![root];
    while let Some(index) = stack.pop() {
        if flags[index - 1] {
            continue;
        }
        flags[index - 1] = true;
        stack.extend(tree.children(index));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::conllu::DepToken;
    use proptest::prelude::*;

    fn tree(tokens: &[(&str, usize, &str)]) -> DepTree {
        DepTree::new(
            tokens
                .iter()
                .enumerate()
                .map(|(i, (form, head, deprel))| DepToken {
                    index: i + 1,
                    form: form.to_string(),
                    head: *head,
                    deprel: deprel.to_string(),
                })
                .collect(),
        )
        .unwrap()
    }

    /// The showcase fixture: two object spans, one dobj and one pobj.
    fn showcase_tree() -> DepTree {
        tree(&[
            ("i", 2, "nsubj"),
            ("want", 0, "root"),
            ("to", 4, "aux"),
            ("watch", 2, "xcomp"),
            ("animated", 6, "amod"),
            ("movies", 4, "dobj"),
            ("at", 4, "prep"),
            ("Showcase", 9, "compound"),
            ("Cinemas", 7, "pobj"),
        ])
    }

    #[test]
    fn masks_both_object_spans() {
        let outcome = mask_tree(&showcase_tree(), &MaskConfig::default());
        assert_eq!(
            outcome.masked.as_deref(),
            Some("i want to watch [MASK] at [MASK]")
        );
        assert!(outcome.was_masked);
    }

    #[test]
    fn no_object_relation_means_no_mask() {
        let t = tree(&[("it", 2, "nsubj"), ("works", 0, "root"), ("now", 2, "advmod")]);
        let outcome = mask_tree(&t, &MaskConfig::default());
        assert_eq!(outcome.masked, None);
        assert!(!outcome.was_masked);
    }

    #[test]
    fn nested_object_masks_once_and_drops_descendants() {
        // "open the box of chocolates": dobj subtree contains a pobj.
        let t = tree(&[
            ("open", 0, "root"),
            ("the", 3, "det"),
            ("box", 1, "dobj"),
            ("of", 3, "prep"),
            ("chocolates", 4, "pobj"),
        ]);
        let outcome = mask_tree(&t, &MaskConfig::default());
        assert_eq!(outcome.masked.as_deref(), Some("open [MASK]"));
    }

    #[test]
    fn adjacent_spans_collapse() {
        // Two sibling objects with no token between them.
        let t = tree(&[
            ("he", 2, "nsubj"),
            ("told", 0, "root"),
            ("reporters", 2, "dobj"),
            ("the", 5, "det"),
            ("truth", 2, "dobj"),
            ("yesterday", 2, "advmod"),
        ]);
        let outcome = mask_tree(&t, &MaskConfig::default());
        assert_eq!(outcome.masked.as_deref(), Some("he told [MASK] yesterday"));
    }

    #[test]
    fn subtypes_and_case_match_the_base_relation() {
        let t = tree(&[("she", 2, "nsubj"), ("reads", 0, "root"), ("books", 2, "Dobj:dir")]);
        let outcome = mask_tree(&t, &MaskConfig::default());
        assert_eq!(outcome.masked.as_deref(), Some("she reads [MASK]"));
    }

    #[test]
    fn ud_style_obj_is_masked_by_default() {
        let t = tree(&[("she", 2, "nsubj"), ("reads", 0, "root"), ("books", 2, "obj")]);
        let outcome = mask_tree(&t, &MaskConfig::default());
        assert_eq!(outcome.masked.as_deref(), Some("she reads [MASK]"));
    }

    #[test]
    fn all_masked_root_degenerate_is_discarded() {
        let t = tree(&[("pizza", 0, "obj")]);
        let outcome = mask_tree(&t, &MaskConfig::default());
        assert_eq!(outcome.masked, None);
        assert!(!outcome.was_masked);
    }

    #[test]
    fn custom_relation_set_is_honoured() {
        let t = tree(&[("he", 2, "nsubj"), ("slept", 0, "root"), ("there", 2, "obl")]);
        assert!(!mask_tree(&t, &MaskConfig::default()).was_masked);
        let obl_config = MaskConfig::new(["obl"]);
        assert_eq!(
            mask_tree(&t, &obl_config).masked.as_deref(),
            Some("he slept [MASK]")
        );
    }

    /// Random valid trees: node 1..n, each node after the first random
    /// head among earlier-attached nodes, random relations.
    fn arbitrary_tree() -> impl Strategy<Value = DepTree> {
        (2usize..12).prop_flat_map(|n| {
            let rels = proptest::collection::vec(
                proptest::sample::select(vec![
                    "nsubj", "dobj", "pobj", "ccomp", "obj", "det", "amod", "prep", "advmod",
                    "dobj:dir",
                ]),
                n - 1,
            );
            let heads = proptest::collection::vec(proptest::num::usize::ANY, n - 1);
            (rels, heads).prop_map(move |(rels, raw_heads)| {
                let mut tokens = vec![DepToken {
                    index: 1,
                    form: "w1".to_string(),
                    head: 0,
                    deprel: "root".to_string(),
                }];
                for (i, (rel, raw)) in rels.iter().zip(raw_heads.iter()).enumerate() {
                    let index = i + 2;
                    // Attach to any earlier token: guarantees a tree.
                    let head = (raw % (index - 1)) + 1;
                    tokens.push(DepToken {
                        index,
                        form: format!("w{index}"),
                        head,
                        deprel: rel.to_string(),
                    });
                }
                DepTree::new(tokens).unwrap()
            })
        })
    }

    /// Independent subtree membership: chase head links upward.
    fn in_subtree_of(tree: &DepTree, node: usize, ancestor: usize) -> bool {
        let mut current = node;
        loop {
            if current == ancestor {
                return true;
            }
            let head = tree.tokens()[current - 1].head;
            if head == 0 {
                return false;
            }
            current = head;
        }
    }

    /// Masked nodes reachable by the algorithm: highest maskable nodes
    /// not already inside another maskable ancestor's subtree.
    fn expected_masked_roots(tree: &DepTree, config: &MaskConfig) -> Vec<usize> {
        let maskable: Vec<usize> = tree
            .tokens()
            .iter()
            .filter(|t| config.matches(&t.deprel))
            .map(|t| t.index)
            .collect();
        maskable
            .iter()
            .copied()
            .filter(|&node| {
                !maskable
                    .iter()
                    .any(|&other| other != node && in_subtree_of(tree, node, other))
            })
            .collect()
    }

    proptest! {
        #[test]
        fn masked_output_never_has_consecutive_masks(t in arbitrary_tree()) {
            let outcome = mask_tree(&t, &MaskConfig::default());
            if let Some(masked) = outcome.masked {
                let tokens: Vec<&str> = masked.split(' ').collect();
                for pair in tokens.windows(2) {
                    prop_assert!(!(pair[0] == MASK_TOKEN && pair[1] == MASK_TOKEN));
                }
                prop_assert!(!masked.contains("  "));
            }
        }

        #[test]
        fn mask_is_pure(t in arbitrary_tree()) {
            let config = MaskConfig::default();
            prop_assert_eq!(mask_tree(&t, &config), mask_tree(&t, &config));
        }

        #[test]
        fn surviving_tokens_lie_outside_masked_subtrees(t in arbitrary_tree()) {
            let config = MaskConfig::default();
            let outcome = mask_tree(&t, &config);
            let roots = expected_masked_roots(&t, &config);
            if let Some(masked) = &outcome.masked {
                let surviving: std::collections::HashSet<&str> = masked
                    .split(' ')
                    .filter(|w| *w != MASK_TOKEN)
                    .collect();
                for token in t.tokens() {
                    let inside = roots.iter().any(|&r| in_subtree_of(&t, token.index, r));
                    if inside {
                        prop_assert!(
                            !surviving.contains(token.form.as_str()),
                            "token {} survived inside a masked subtree", token.form
                        );
                    } else {
                        prop_assert!(
                            surviving.contains(token.form.as_str()),
                            "token {} was dropped outside any masked subtree", token.form
                        );
                    }
                }
            }
        }

        #[test]
        fn token_multiset_is_original_minus_masked_plus_one_mask_per_span(t in arbitrary_tree()) {
            let config = MaskConfig::default();
            let outcome = mask_tree(&t, &config);
            if let Some(masked) = &outcome.masked {
                let roots = expected_masked_roots(&t, &config);
                let flags: Vec<bool> = t
                    .tokens()
                    .iter()
                    .map(|tok| roots.iter().any(|&r| in_subtree_of(&t, tok.index, r)))
                    .collect();
                let masked_count = flags.iter().filter(|f| **f).count();
                // Contiguous surface spans of masked tokens; a
                // non-projective subtree contributes several spans.
                let mut spans = 0;
                let mut previous = false;
                for &flag in &flags {
                    if flag && !previous {
                        spans += 1;
                    }
                    previous = flag;
                }
                let mask_tokens = masked.split(' ').filter(|w| *w == MASK_TOKEN).count();
                let kept_tokens = masked.split(' ').filter(|w| *w != MASK_TOKEN).count();
                prop_assert_eq!(kept_tokens, t.len() - masked_count);
                prop_assert_eq!(mask_tokens, spans);
            }
        }
    }
}
