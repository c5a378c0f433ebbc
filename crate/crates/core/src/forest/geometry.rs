//! Axis-aligned boxes over the feature space.

use serde::{Deserialize, Serialize};

/// Closed interval `[lo, hi]`; empty when `lo > hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn is_empty(&self) -> bool {
        !matches!(
            self.lo.partial_cmp(&self.hi),
            Some(std::cmp::Ordering::Less | std::cmp::Ordering::Equal)
        )
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn intersect(&self, other: &Interval) -> Interval {
        Interval::new(self.lo.max(other.lo), self.hi.min(other.hi))
    }

    /// Nearest point of the interval to `v`.
    pub fn clamp(&self, v: f64) -> f64 {
        v.max(self.lo).min(self.hi)
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// One closed interval per feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureBox(pub Vec<Interval>);

impl FeatureBox {
    pub fn new(intervals: Vec<Interval>) -> Self {
        Self(intervals)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.iter().any(Interval::is_empty)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.0.len() && self.0.iter().zip(x).all(|(iv, &v)| iv.contains(v))
    }

    /// Coordinate-wise intersection, `None` if any coordinate ends up empty.
    pub fn intersect(&self, other: &FeatureBox) -> Option<FeatureBox> {
        debug_assert_eq!(self.dim(), other.dim());
        let out = FeatureBox(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a.intersect(b))
                .collect(),
        );
        (!out.is_empty()).then_some(out)
    }
}

/// Intersects all boxes; `None` when the intersection is empty or the list is.
pub fn boxes_intersect(boxes: &[FeatureBox]) -> Option<FeatureBox> {
    let (first, rest) = boxes.split_first()?;
    if first.is_empty() {
        return None;
    }
    rest.iter()
        .try_fold(first.clone(), |acc, b| acc.intersect(b))
}
