//! Example domains, labeled examples, and the ordered multiset that backs
//! every vertex of a tree.
//!
//! A multiset maps each distinct labeled example to its multiplicity in an
//! ordered associative map, so insert/lookup/delete cost `O(log n)` map
//! operations and enumeration costs `O(n)`. Examples with equal features
//! but different labels are distinct keys.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::ops::Bound;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gain::LabelStats;

/// A point of the example domain: `d` feature values, each from a totally
/// ordered coordinate (numeric or ordinal-categorical code). NaN is
/// rejected at construction so `total_cmp` yields a genuine total order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::NonFinite);
        }
        Ok(FeatureVector(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn value(&self, j: usize) -> Result<f64> {
        self.0.get(j).copied().ok_or(Error::BadFeatureIndex {
            index: j,
            dim: self.0.len(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

impl Eq for FeatureVector {}

impl Ord for FeatureVector {
    fn cmp(&self, other: &Self) -> Ordering {
        for (a, b) in self.0.iter().zip(other.0.iter()) {
            match a.total_cmp(b) {
                Ordering::Equal => continue,
                ord => return ord,
            }
        }
        self.0.len().cmp(&other.0.len())
    }
}

impl PartialOrd for FeatureVector {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A class identifier (classification) or a real value (regression).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Label {
    Class(i64),
    Real(f64),
}

impl Label {
    /// Real-valued label; NaN is rejected.
    pub fn real(v: f64) -> Result<Self> {
        if v.is_nan() {
            return Err(Error::NonFinite);
        }
        Ok(Label::Real(v))
    }

    /// The label as a number: class id or real value.
    pub fn numeric(&self) -> f64 {
        match *self {
            Label::Class(c) => c as f64,
            Label::Real(v) => v,
        }
    }
}

impl PartialEq for Label {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Label {}

impl Ord for Label {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Label::Class(a), Label::Class(b)) => a.cmp(b),
            (Label::Real(a), Label::Real(b)) => a.total_cmp(b),
            // Streams never mix the two; ordered arbitrarily for totality.
            (Label::Class(_), Label::Real(_)) => Ordering::Less,
            (Label::Real(_), Label::Class(_)) => Ordering::Greater,
        }
    }
}

impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A labeled example. Identity (and therefore multiset coalescing) is the
/// full `(x, y)` pair under lexicographic order of features, then label.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct LabeledExample {
    pub x: FeatureVector,
    pub y: Label,
}

impl LabeledExample {
    pub fn new(x: FeatureVector, y: Label) -> Self {
        LabeledExample { x, y }
    }
}

/// Insert or delete one occurrence of an example.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateOp {
    Ins,
    Del,
}

/// One element of an update stream.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateRequest {
    pub example: LabeledExample,
    pub op: UpdateOp,
}

impl UpdateRequest {
    pub fn ins(example: LabeledExample) -> Self {
        UpdateRequest {
            example,
            op: UpdateOp::Ins,
        }
    }

    pub fn del(example: LabeledExample) -> Self {
        UpdateRequest {
            example,
            op: UpdateOp::Del,
        }
    }
}

/// Ordered multiset of labeled examples with cached size and label
/// statistics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExampleMultiset {
    entries: BTreeMap<LabeledExample, u64>,
    size: u64,
    labels: LabelStats,
}

impl ExampleMultiset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_examples<I: IntoIterator<Item = LabeledExample>>(items: I) -> Self {
        let mut s = Self::new();
        for ex in items {
            s.insert(ex, 1);
        }
        s
    }

    /// Total count with multiplicity.
    pub fn len(&self) -> u64 {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    /// Number of distinct examples (map entries).
    pub fn distinct_len(&self) -> usize {
        self.entries.len()
    }

    pub fn count(&self, ex: &LabeledExample) -> u64 {
        self.entries.get(ex).copied().unwrap_or(0)
    }

    /// Dimension of the stored examples, if any are present.
    pub fn dim(&self) -> Option<usize> {
        self.entries.keys().next().map(|k| k.x.dim())
    }

    pub fn label_stats(&self) -> &LabelStats {
        &self.labels
    }

    pub fn insert(&mut self, ex: LabeledExample, by: u64) {
        if by == 0 {
            return;
        }
        self.labels.add(ex.y, by);
        self.size += by;
        *self.entries.entry(ex).or_insert(0) += by;
    }

    /// Remove one occurrence. Removing an absent example is a hard error:
    /// the stream model assumes well-formed active sets.
    pub fn remove_one(&mut self, ex: &LabeledExample) -> Result<()> {
        match self.entries.get_mut(ex) {
            None => Err(Error::DeleteAbsent),
            Some(c) => {
                *c -= 1;
                if *c == 0 {
                    self.entries.remove(ex);
                }
                self.size -= 1;
                self.labels.sub(ex.y, 1);
                Ok(())
            }
        }
    }

    /// Apply one update request, adjusting multiplicity by one.
    pub fn apply(&mut self, u: &UpdateRequest) -> Result<()> {
        match u.op {
            UpdateOp::Ins => {
                self.insert(u.example.clone(), 1);
                Ok(())
            }
            UpdateOp::Del => self.remove_one(&u.example),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&LabeledExample, u64)> {
        self.entries.iter().map(|(k, &v)| (k, v))
    }

    /// Resumable cursor: the first entry strictly after `after`, or the
    /// first entry overall when `after` is `None`. One ordered-map access.
    pub fn next_entry_after(
        &self,
        after: Option<&LabeledExample>,
    ) -> Option<(&LabeledExample, u64)> {
        let range = match after {
            None => self.entries.range::<LabeledExample, _>(..),
            Some(k) => self
                .entries
                .range((Bound::Excluded(k.clone()), Bound::Unbounded)),
        };
        range.take(1).next().map(|(k, &v)| (k, v))
    }
}

/// Fold a sequence of update requests over a starting multiset. A delete
/// of an absent example fails with the offending index.
pub fn active_set(start: &ExampleMultiset, updates: &[UpdateRequest]) -> Result<ExampleMultiset> {
    let mut s = start.clone();
    for (i, u) in updates.iter().enumerate() {
        s.apply(u).map_err(|_| Error::DeleteAbsentAt { index: i })?;
    }
    Ok(s)
}

/// Symmetric-difference size on multiplicities.
pub fn edit_distance(a: &ExampleMultiset, b: &ExampleMultiset) -> u64 {
    let mut ia = a.iter().peekable();
    let mut ib = b.iter().peekable();
    let mut dist = 0u64;
    loop {
        match (ia.peek(), ib.peek()) {
            (None, None) => break,
            (Some(_), None) => {
                dist += ia.next().unwrap().1;
            }
            (None, Some(_)) => {
                dist += ib.next().unwrap().1;
            }
            (Some((ka, ca)), Some((kb, cb))) => match ka.cmp(kb) {
                Ordering::Less => {
                    dist += ca;
                    ia.next();
                }
                Ordering::Greater => {
                    dist += cb;
                    ib.next();
                }
                Ordering::Equal => {
                    dist += ca.abs_diff(*cb);
                    ia.next();
                    ib.next();
                }
            },
        }
    }
    dist
}

/// Edit distance divided by the larger multiset's size.
pub fn relative_edit_distance(a: &ExampleMultiset, b: &ExampleMultiset) -> Result<f64> {
    let m = a.len().max(b.len());
    if m == 0 {
        return Err(Error::BothEmpty);
    }
    Ok(edit_distance(a, b) as f64 / m as f64)
}


#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;

    #[test]
    fn apply_disjoint_insert() {
        let mut s = set(&[(&[0.0], 0, 1)]);
        s.apply(&UpdateRequest::ins(ex(&[1.0], 1))).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.count(&ex(&[0.0], 0)), 1);
        assert_eq!(s.count(&ex(&[1.0], 1)), 1);
    }

    #[test]
    fn apply_multiplicity_decrement() {
        let mut s = set(&[(&[0.0], 0, 2)]);
        s.apply(&UpdateRequest::del(ex(&[0.0], 0))).unwrap();
        assert_eq!(s.count(&ex(&[0.0], 0)), 1);
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn apply_delete_absent_is_error() {
        let mut s = set(&[(&[0.0], 0, 1)]);
        let err = s.apply(&UpdateRequest::del(ex(&[1.0], 1))).unwrap_err();
        assert_eq!(err, Error::DeleteAbsent);
    }

    #[test]
    fn active_set_cancel_and_add() {
        let s = set(&[(&[0.0], 0, 1)]);
        let u = vec![
            UpdateRequest::ins(ex(&[1.0], 1)),
            UpdateRequest::del(ex(&[0.0], 0)),
        ];
        let out = active_set(&s, &u).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out.count(&ex(&[1.0], 1)), 1);
        assert_eq!(out.count(&ex(&[0.0], 0)), 0);
    }

    #[test]
    fn active_set_repeated_insert() {
        let s = ExampleMultiset::new();
        let u = vec![
            UpdateRequest::ins(ex(&[0.0], 0)),
            UpdateRequest::ins(ex(&[0.0], 0)),
        ];
        let out = active_set(&s, &u).unwrap();
        assert_eq!(out.count(&ex(&[0.0], 0)), 2);
    }

    #[test]
    fn active_set_empty_updates() {
        let s = set(&[(&[0.0], 0, 1), (&[1.0], 1, 1)]);
        let out = active_set(&s, &[]).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn active_set_reports_offending_index() {
        let s = ExampleMultiset::new();
        let u = vec![
            UpdateRequest::ins(ex(&[0.0], 0)),
            UpdateRequest::del(ex(&[9.0], 0)),
        ];
        assert_eq!(
            active_set(&s, &u).unwrap_err(),
            Error::DeleteAbsentAt { index: 1 }
        );
    }

    #[test]
    fn edit_distance_examples() {
        let a = set(&[(&[0.0], 0, 1)]);
        assert_eq!(edit_distance(&a, &a), 0);

        let b = set(&[(&[0.0], 0, 1), (&[1.0], 0, 1)]);
        let c = set(&[(&[0.0], 0, 1), (&[2.0], 0, 1)]);
        assert_eq!(edit_distance(&b, &c), 2);

        let d = set(&[(&[0.0], 0, 3)]);
        let e = set(&[(&[0.0], 0, 1)]);
        assert_eq!(edit_distance(&d, &e), 2);
    }

    #[test]
    fn relative_edit_distance_examples() {
        let a = set(&[(&[0.0], 0, 1), (&[1.0], 0, 1)]);
        assert_eq!(relative_edit_distance(&a, &a).unwrap(), 0.0);

        let b = set(&[(&[0.0], 0, 1), (&[2.0], 0, 1)]);
        assert_eq!(relative_edit_distance(&a, &b).unwrap(), 1.0);

        let c = set(&[(&[0.0], 0, 4)]);
        let d = set(&[(&[0.0], 0, 3), (&[1.0], 0, 1)]);
        assert_eq!(relative_edit_distance(&c, &d).unwrap(), 0.5);

        assert_eq!(
            relative_edit_distance(&ExampleMultiset::new(), &ExampleMultiset::new()).unwrap_err(),
            Error::BothEmpty
        );
    }

    #[test]
    fn nan_features_rejected() {
        assert_eq!(
            FeatureVector::new(vec![0.0, f64::NAN]).unwrap_err(),
            Error::NonFinite
        );
        assert_eq!(Label::real(f64::NAN).unwrap_err(), Error::NonFinite);
    }

    #[test]
    fn cursor_walks_in_order() {
        let s = set(&[(&[1.0], 0, 1), (&[0.0], 0, 2), (&[2.0], 1, 1)]);
        let mut seen = Vec::new();
        let mut cur: Option<LabeledExample> = None;
        while let Some((k, c)) = s.next_entry_after(cur.as_ref()) {
            seen.push((k.x.values()[0], c));
            cur = Some(k.clone());
        }
        assert_eq!(seen, vec![(0.0, 2), (1.0, 1), (2.0, 1)]);
    }
}
