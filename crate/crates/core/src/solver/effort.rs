use serde::{Deserialize, Serialize};

use super::ProblemInstance;
use crate::error::{Error, Result};

/// Effort units per feature. One level per feature is shared by every node
/// splitting on that feature, so the total spend is simply the vector sum.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EffortAllocation(pub Vec<usize>);

impl EffortAllocation {
    pub fn zeros(d: usize) -> Self {
        Self(vec![0; d])
    }

    pub fn units(&self) -> &[usize] {
        &self.0
    }

    pub fn level(&self, feature: usize) -> usize {
        self.0[feature]
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    /// Features receiving at least one unit.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &e)| e > 0)
            .map(|(j, _)| j)
    }

    pub fn check(&self, instance: &ProblemInstance, mutable: &[bool]) -> Result<()> {
        if self.0.len() != mutable.len() {
            return Err(Error::Contract(format!(
                "effort vector has {} entries, expected {}",
                self.0.len(),
                mutable.len()
            )));
        }
        if let Some(j) = self.0.iter().position(|&e| e > instance.max_effort) {
            return Err(Error::Contract(format!(
                "effort {} on feature {j} exceeds E = {}",
                self.0[j], instance.max_effort
            )));
        }
        if let Some(j) = (0..mutable.len()).find(|&j| !mutable[j] && self.0[j] > 0) {
            return Err(Error::Contract(format!("effort on immutable feature {j}")));
        }
        if self.total() > instance.eta {
            return Err(Error::Contract(format!(
                "total effort {} exceeds eta = {}",
                self.total(),
                instance.eta
            )));
        }
        Ok(())
    }
}

/// All allocations with `e_j <= max_effort`, `sum e_j <= eta` and no effort
/// on immutable features, each exactly once. Ordered by total effort, then
/// lexicographically descending, so `(1, 0)` precedes `(0, 1)`; ties between
/// equally good allocations therefore favour less total effort.
pub fn enumerate_effort_allocations(
    d: usize,
    max_effort: usize,
    eta: usize,
    mutable: &[bool],
) -> Vec<EffortAllocation> {
    assert_eq!(mutable.len(), d, "mask length must equal d");
    let slots: Vec<usize> = (0..d).filter(|&j| mutable[j]).collect();
    let top = eta.min(max_effort * slots.len());
    let mut out = Vec::new();
    let mut current = vec![0; d];
    for total in 0..=top {
        fill(&slots, 0, total, max_effort, &mut current, &mut out);
    }
    out
}

fn fill(
    slots: &[usize],
    at: usize,
    remaining: usize,
    cap: usize,
    current: &mut Vec<usize>,
    out: &mut Vec<EffortAllocation>,
) {
    if at == slots.len() {
        if remaining == 0 {
            out.push(EffortAllocation(current.clone()));
        }
        return;
    }
    let rest_capacity = cap * (slots.len() - at - 1);
    let hi = cap.min(remaining);
    let lo = remaining.saturating_sub(rest_capacity);
    for v in (lo..=hi).rev() {
        current[slots[at]] = v;
        fill(slots, at + 1, remaining - v, cap, current, out);
    }
    current[slots[at]] = 0;
}

/// Number of allocations [`enumerate_effort_allocations`] would produce.
pub fn allocation_count(d: usize, max_effort: usize, eta: usize, mutable: &[bool]) -> u128 {
    let k = mutable.iter().take(d).filter(|&&m| m).count();
    // ways[s] = number of vectors over the processed slots summing to s
    let mut ways = vec![0u128; eta + 1];
    ways[0] = 1;
    for _ in 0..k {
        let mut next = vec![0u128; eta + 1];
        for (s, &w) in ways.iter().enumerate() {
            for v in 0..=max_effort.min(eta - s) {
                next[s + v] += w;
            }
        }
        ways = next;
    }
    ways.iter().sum()
}
