//! Frequent strings and decision trees over conflicting segment versions.
//!
//! Strings are sequences of cells; for bit inputs every cell is 0 or 1 and
//! every inner node has exactly two children.

use std::collections::{HashMap, HashSet};
use std::hash::Hash;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DtreeError {
    #[error("frequent set is empty")]
    EmptyFrequentSet,
    #[error("strings of different lengths ({0} and {1})")]
    MixedLengths(usize, usize),
    #[error("queried value {value} at position {index} matches no branch")]
    NoBranch { index: usize, value: u32 },
}

/// Strings reported by at least `t` distinct senders. A sender counts once
/// per call: anything after its first string is ignored. The result is
/// sorted.
pub fn frequent_strings<'a, S, I>(ms: I, t: f64) -> Result<Vec<S>, DtreeError>
where
    S: AsRef<[u32]> + Hash + Eq + Ord + Clone + 'a,
    I: IntoIterator<Item = (usize, &'a S)>,
{
    let mut seen: HashSet<usize> = HashSet::new();
    let mut counts: HashMap<&'a S, usize> = HashMap::new();
    let mut len: Option<usize> = None;
    for (sender, s) in ms {
        let l = s.as_ref().len();
        match len {
            None => len = Some(l),
            Some(prev) if prev != l => return Err(DtreeError::MixedLengths(prev, l)),
            _ => {}
        }
        if seen.insert(sender) {
            *counts.entry(s).or_insert(0) += 1;
        }
    }
    let mut out: Vec<S> =
        counts.into_iter().filter(|&(_, c)| c as f64 >= t).map(|(s, _)| s.clone()).collect();
    out.sort();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecisionTree {
    Leaf(Vec<u32>),
    /// `index` is 0-based within the segment; children sorted by value.
    Inner { index: usize, children: Vec<(u32, DecisionTree)> },
}

impl DecisionTree {
    pub fn leaves(&self) -> usize {
        match self {
            DecisionTree::Leaf(_) => 1,
            DecisionTree::Inner { children, .. } => children.iter().map(|(_, c)| c.leaves()).sum(),
        }
    }

    pub fn inner_nodes(&self) -> usize {
        match self {
            DecisionTree::Leaf(_) => 0,
            DecisionTree::Inner { children, .. } => {
                1 + children.iter().map(|(_, c)| c.inner_nodes()).sum::<usize>()
            }
        }
    }

    pub fn leaf_strings(&self) -> Vec<&[u32]> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a [u32]>) {
        match self {
            DecisionTree::Leaf(s) => out.push(s),
            DecisionTree::Inner { children, .. } => {
                for (_, c) in children {
                    c.collect_leaves(out);
                }
            }
        }
    }

    /// Inner labels in preorder.
    pub fn inner_labels(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_labels(&mut out);
        out
    }

    fn collect_labels(&self, out: &mut Vec<usize>) {
        if let DecisionTree::Inner { index, children } = self {
            out.push(*index);
            for (_, c) in children {
                c.collect_labels(out);
            }
        }
    }
}

/// Build the tree for a set of distinct, equal-length strings.
pub fn build_tree<S: AsRef<[u32]>>(set: &[S]) -> Result<DecisionTree, DtreeError> {
    if set.is_empty() {
        return Err(DtreeError::EmptyFrequentSet);
    }
    let len = set[0].as_ref().len();
    if let Some(s) = set.iter().find(|s| s.as_ref().len() != len) {
        return Err(DtreeError::MixedLengths(len, s.as_ref().len()));
    }
    let refs: Vec<&[u32]> = set.iter().map(|s| s.as_ref()).collect();
    Ok(build(&refs, 0))
}

fn build(set: &[&[u32]], from: usize) -> DecisionTree {
    let first = set[0];
    let split = (from..first.len()).find(|&i| set.iter().any(|s| s[i] != first[i]));
    let Some(index) = split else {
        return DecisionTree::Leaf(first.to_vec());
    };
    let mut values: Vec<u32> = set.iter().map(|s| s[index]).collect();
    values.sort_unstable();
    values.dedup();
    let children = values
        .into_iter()
        .map(|v| {
            let part: Vec<&[u32]> = set.iter().copied().filter(|s| s[index] == v).collect();
            (v, build(&part, index + 1))
        })
        .collect();
    DecisionTree::Inner { index, children }
}

/// Query every inner label (shifted to the global 1-based index
/// `offset + label`), then walk to the leaf the answers select.
pub fn determine(
    tree: &DecisionTree,
    offset: usize,
    mut query: impl FnMut(usize) -> u32,
) -> Result<Vec<u32>, DtreeError> {
    let labels = tree.inner_labels();
    let mut answers: HashMap<usize, u32> = HashMap::with_capacity(labels.len());
    for l in labels {
        let v = query(offset + l);
        answers.insert(l, v);
    }
    let mut node = tree;
    loop {
        match node {
            DecisionTree::Leaf(s) => return Ok(s.clone()),
            DecisionTree::Inner { index, children } => {
                let v = answers[index];
                node = children
                    .iter()
                    .find(|(c, _)| *c == v)
                    .map(|(_, t)| t)
                    .ok_or(DtreeError::NoBranch { index: *index, value: v })?;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(text: &str) -> Vec<u32> {
        text.bytes().map(|b| (b - b'0') as u32).collect()
    }

    #[test]
    fn frequent_by_distinct_senders() {
        let a = s("0101");
        let b = s("0110");
        let c = s("1111");
        let ms = vec![(1, &a), (2, &a), (3, &a), (4, &b), (5, &b), (6, &c)];
        assert_eq!(frequent_strings(ms.clone(), 2.0).unwrap(), vec![a.clone(), b.clone()]);
        assert_eq!(frequent_strings(ms, 1.0).unwrap().len(), 3);
        let repeat = vec![(9, &a); 5];
        assert!(frequent_strings(repeat, 2.0).unwrap().is_empty());
    }

    #[test]
    fn small_trees() {
        assert_eq!(build_tree(&[s("0101")]).unwrap(), DecisionTree::Leaf(s("0101")));
        assert_eq!(
            build_tree(&[s("0101"), s("0111")]).unwrap(),
            DecisionTree::Inner {
                index: 2,
                children: vec![(0, DecisionTree::Leaf(s("0101"))), (1, DecisionTree::Leaf(s("0111")))]
            }
        );
        let t = build_tree(&[s("00"), s("01"), s("10")]).unwrap();
        assert_eq!(
            t,
            DecisionTree::Inner {
                index: 0,
                children: vec![
                    (
                        0,
                        DecisionTree::Inner {
                            index: 1,
                            children: vec![(0, DecisionTree::Leaf(s("00"))), (1, DecisionTree::Leaf(s("01")))]
                        }
                    ),
                    (1, DecisionTree::Leaf(s("10")))
                ]
            }
        );
        assert_eq!(build_tree::<Vec<u32>>(&[]), Err(DtreeError::EmptyFrequentSet));
    }

    #[test]
    fn determine_with_offset() {
        let t = build_tree(&[s("0101"), s("0111")]).unwrap();
        let x = s("00000111");
        let mut asked = Vec::new();
        let out = determine(&t, 5, |i| {
            asked.push(i);
            x[i - 1]
        })
        .unwrap();
        assert_eq!(out, s("0111"));
        assert_eq!(asked, vec![7]);
    }
}
