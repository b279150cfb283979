//! Finite state spaces with ordered, distinct labels.

use std::collections::HashMap;
use std::fmt;
use std::ops::RangeInclusive;
use std::sync::Arc;

use crate::error::{Error, Result};

/// A state label: an opaque name or an integer vector.
///
/// Integer-vector labels carry the coordinate structure used by grid
/// relations (coordinatewise order, sum order, weak majorization) and by
/// population models. Their canonical text form is `k` for one dimension
/// and `(k1,…,km)` otherwise.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Name(String),
    Point(Vec<i64>),
}

impl Label {
    /// Parses the canonical text form back into a label. Strings shaped
    /// like an integer or `(k1,…,km)` become points, anything else a name.
    pub fn parse(s: &str) -> Label {
        let t = s.trim();
        if let Ok(k) = t.parse::<i64>() {
            return Label::Point(vec![k]);
        }
        if let Some(inner) = t.strip_prefix('(').and_then(|r| r.strip_suffix(')')) {
            let parts: Vec<_> = inner.split(',').map(str::trim).collect();
            if parts.len() >= 2 {
                if let Ok(coords) = parts.iter().map(|p| p.parse::<i64>()).collect() {
                    return Label::Point(coords);
                }
            }
        }
        Label::Name(t.to_string())
    }

    pub fn point(&self) -> Option<&[i64]> {
        match self {
            Label::Point(v) => Some(v),
            Label::Name(_) => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Name(s) => f.write_str(s),
            Label::Point(v) if v.len() == 1 => write!(f, "{}", v[0]),
            Label::Point(v) => {
                write!(f, "(")?;
                for (k, c) in v.iter().enumerate() {
                    if k > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{c}")?;
                }
                write!(f, ")")
            }
        }
    }
}

impl From<&str> for Label {
    fn from(s: &str) -> Label {
        Label::Name(s.to_string())
    }
}

impl From<i64> for Label {
    fn from(k: i64) -> Label {
        Label::Point(vec![k])
    }
}

struct Inner {
    labels: Vec<Label>,
    index: HashMap<Label, usize>,
}

/// A finite state space: an ordered list of distinct labels.
///
/// Cloning is cheap (shared storage); spaces are immutable once built.
#[derive(Clone)]
pub struct StateSpace(Arc<Inner>);

impl StateSpace {
    pub fn new(labels: Vec<Label>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::BadInput("state space must be nonempty".into()));
        }
        let mut index = HashMap::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            if index.insert(l.clone(), i).is_some() {
                return Err(Error::DuplicateLabel(l.to_string()));
            }
        }
        Ok(StateSpace(Arc::new(Inner { labels, index })))
    }

    /// Space of named states.
    pub fn named<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        StateSpace::new(names.into_iter().map(|s| Label::Name(s.into())).collect())
    }

    /// One-dimensional integer range, e.g. `0..=9`.
    pub fn integers(range: RangeInclusive<i64>) -> Self {
        let labels = range.map(|k| Label::Point(vec![k])).collect();
        StateSpace::new(labels).expect("integer ranges have distinct labels")
    }

    /// Integer grid over per-coordinate inclusive bounds, enumerated in
    /// lexicographic order.
    pub fn grid(bounds: &[(i64, i64)]) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::BadInput("grid needs at least one coordinate".into()));
        }
        for &(lo, hi) in bounds {
            if lo > hi {
                return Err(Error::BadInput(format!("empty coordinate range [{lo},{hi}]")));
            }
        }
        let mut labels = Vec::new();
        let mut point: Vec<i64> = bounds.iter().map(|&(lo, _)| lo).collect();
        loop {
            labels.push(Label::Point(point.clone()));
            // odometer increment, last coordinate fastest
            let mut k = bounds.len();
            loop {
                if k == 0 {
                    return StateSpace::new(labels);
                }
                k -= 1;
                if point[k] < bounds[k].1 {
                    point[k] += 1;
                    break;
                }
                point[k] = bounds[k].0;
            }
        }
    }

    /// Product space with pair index `i * right.len() + j`.
    pub fn product(left: &StateSpace, right: &StateSpace) -> Self {
        let mut labels = Vec::with_capacity(left.len() * right.len());
        for a in left.labels() {
            for b in right.labels() {
                labels.push(match (a, b) {
                    (Label::Point(x), Label::Point(y)) => {
                        let mut v = x.clone();
                        v.extend_from_slice(y);
                        Label::Point(v)
                    }
                    _ => Label::Name(format!("({a},{b})")),
                });
            }
        }
        StateSpace::new(labels).expect("product of distinct labels is distinct")
    }

    pub fn len(&self) -> usize {
        self.0.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false // nonempty by construction
    }

    pub fn labels(&self) -> &[Label] {
        &self.0.labels
    }

    pub fn label(&self, i: usize) -> &Label {
        &self.0.labels[i]
    }

    pub fn index_of(&self, label: &Label) -> Option<usize> {
        self.0.index.get(label).copied()
    }

    /// Integer coordinates of state `i`, when it is a point label.
    pub fn point(&self, i: usize) -> Option<&[i64]> {
        self.0.labels[i].point()
    }

    pub fn check_index(&self, i: usize) -> Result<()> {
        if i < self.len() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange { index: i, size: self.len() })
        }
    }

    pub fn same_as(&self, other: &StateSpace) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.0.labels == other.0.labels
    }

    pub fn expect_same(&self, other: &StateSpace, what: &str) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::SpaceMismatch(what.to_string()))
        }
    }
}

impl fmt::Debug for StateSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "StateSpace[")?;
        for (i, l) in self.0.labels.iter().take(8).enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{l}")?;
        }
        if self.len() > 8 {
            write!(f, ", ... ({} states)", self.len())?;
        }
        write!(f, "]")
    }
}

impl PartialEq for StateSpace {
    fn eq(&self, other: &Self) -> bool {
        self.same_as(other)
    }
}

impl Eq for StateSpace {}
