//! Stochastic change model for an individual's features and Monte-Carlo
//! estimation of right-branch probabilities at every split.
//!
//! Without effort a continuous value moves by `±δ`, `δ ~ U[0, σ]` with a
//! fair sign; with `e` units of effort it moves in the beneficial direction
//! by `δ ~ U[0, s(e)·σ]`, `s(e) = 1 + (effort_scale - 1)·e`, which gives
//! `1.5σ` at one unit with the default scale. A binary value flips with
//! probability `1 - p` without effort (`p` is the majority-class frequency);
//! with effort it only moves toward the beneficial value, with probability
//! `max(1 - p, min(1, effort_floor·e))`. Levels above one unit are an
//! extrapolation of the single-level model.

mod table;

pub use table::{NodeProbabilityTable, TableDoc, TableEntryDoc};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{Direction, FeatureKind, FeatureMeta, Forest};
use crate::rng;

pub const DEFAULT_SAMPLES: usize = 1000;
pub const DEFAULT_EFFORT_SCALE: f64 = 1.5;
pub const DEFAULT_EFFORT_FLOOR: f64 = 0.2;

/// Per-feature sample statistics feeding the change model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    /// Standard deviation of each feature (used for continuous features).
    pub sigma: Vec<f64>,
    /// Frequency of the most common value (used for binary features).
    pub majority_freq: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePerturbation {
    pub kind: FeatureKind,
    pub sigma: f64,
    pub majority_freq: f64,
    pub beneficial: Direction,
    pub no_effort_perturbable: bool,
    pub effort_perturbable: bool,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub features: Vec<FeaturePerturbation>,
    pub num_samples: usize,
    pub effort_scale: f64,
    pub effort_floor: f64,
    pub seed: u64,
}

impl PerturbationSpec {
    /// Default model: every feature drifts without effort, effort is
    /// allowed on mutable features only.
    pub fn from_stats(features: &[FeatureMeta], stats: &FeatureStats, seed: u64) -> Result<Self> {
        if stats.sigma.len() != features.len() || stats.majority_freq.len() != features.len() {
            return Err(Error::Validation(format!(
                "statistics cover {} features, schema has {}",
                stats.sigma.len(),
                features.len()
            )));
        }
        let spec = Self {
            features: features
                .iter()
                .map(|f| FeaturePerturbation {
                    kind: f.kind,
                    sigma: stats.sigma[f.index],
                    majority_freq: stats.majority_freq[f.index],
                    beneficial: f.beneficial,
                    no_effort_perturbable: true,
                    effort_perturbable: f.mutable,
                    lo: f.lo,
                    hi: f.hi,
                })
                .collect(),
            num_samples: DEFAULT_SAMPLES,
            effort_scale: DEFAULT_EFFORT_SCALE,
            effort_floor: DEFAULT_EFFORT_FLOOR,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_samples(mut self, n: usize) -> Self {
        self.num_samples = n;
        self
    }

    /// Marks immutable features as fixed even without effort.
    pub fn freeze_immutables(mut self, features: &[FeatureMeta]) -> Self {
        for (p, f) in self.features.iter_mut().zip(features) {
            if !f.mutable {
                p.no_effort_perturbable = false;
            }
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_samples == 0 {
            return Err(Error::Validation("num_samples must be >= 1".into()));
        }
        if !(self.effort_scale.is_finite() && self.effort_scale >= 1.0) {
            return Err(Error::Validation(format!(
                "effort_scale {} must be >= 1",
                self.effort_scale
            )));
        }
        if !(0.0..=1.0).contains(&self.effort_floor) {
            return Err(Error::Validation(format!(
                "effort_floor {} outside [0, 1]",
                self.effort_floor
            )));
        }
        for (j, f) in self.features.iter().enumerate() {
            let perturbable = f.no_effort_perturbable || f.effort_perturbable;
            match f.kind {
                FeatureKind::Continuous
                    if perturbable && !(f.sigma.is_finite() && f.sigma > 0.0) =>
                {
                    return Err(Error::Validation(format!(
                        "feature {j}: sigma {} must be > 0",
                        f.sigma
                    )));
                }
                FeatureKind::Binary if perturbable && !(0.5..=1.0).contains(&f.majority_freq) => {
                    return Err(Error::Validation(format!(
                        "feature {j}: majority frequency {} outside [0.5, 1]",
                        f.majority_freq
                    )));
                }
                _ => {}
            }
            if f.effort_perturbable && f.beneficial == Direction::None {
                return Err(Error::Validation(format!(
                    "feature {j}: effort needs a beneficial direction"
                )));
            }
        }
        Ok(())
    }

    /// Width multiplier of the favourable move at `effort` units.
    pub fn effort_width(&self, effort: usize) -> f64 {
        1.0 + (self.effort_scale - 1.0) * effort as f64
    }

    /// Probability that an unfavourable binary value turns favourable.
    pub fn effort_flip_prob(&self, feature: usize, effort: usize) -> f64 {
        let p = self.features[feature].majority_freq;
        (1.0 - p).max((self.effort_floor * effort as f64).min(1.0))
    }

    /// One random future value of feature `feature` starting from `x0`.
    pub fn perturb_value<R: Rng + ?Sized>(
        &self,
        feature: usize,
        x0: f64,
        effort: usize,
        rng: &mut R,
    ) -> Result<f64> {
        let f = &self.features[feature];
        if effort > 0 && !f.effort_perturbable {
            return Err(Error::Contract(format!(
                "effort {effort} on feature {feature}, which does not accept effort"
            )));
        }
        if effort == 0 && !f.no_effort_perturbable {
            return Ok(x0);
        }
        let value = match (f.kind, effort) {
            (FeatureKind::Continuous, 0) => {
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                x0 + sign * rng.random::<f64>() * f.sigma
            }
            (FeatureKind::Continuous, e) => {
                x0 + f.beneficial.sign() * rng.random::<f64>() * self.effort_width(e) * f.sigma
            }
            (FeatureKind::Binary, 0) => {
                if rng.random_bool(1.0 - f.majority_freq) {
                    1.0 - x0
                } else {
                    x0
                }
            }
            (FeatureKind::Binary, e) => {
                let target = f.beneficial.binary_target().expect("validated direction");
                if x0 == target || !rng.random_bool(self.effort_flip_prob(feature, e)) {
                    x0
                } else {
                    target
                }
            }
        };
        Ok(value.clamp(f.lo, f.hi))
    }

    /// The most favourable effort outcome: continuous features move by
    /// exactly `effort_scale·σ`; binary features follow the one-unit flip
    /// rule. Features that do not accept effort drift as without effort.
    pub fn perturb_extreme<R: Rng + ?Sized>(&self, feature: usize, x0: f64, rng: &mut R) -> f64 {
        let f = &self.features[feature];
        if !f.effort_perturbable {
            return self
                .perturb_value(feature, x0, 0, rng)
                .expect("no-effort moves always valid");
        }
        match f.kind {
            FeatureKind::Continuous => {
                (x0 + f.beneficial.sign() * self.effort_width(1) * f.sigma).clamp(f.lo, f.hi)
            }
            FeatureKind::Binary => self
                .perturb_value(feature, x0, 1, rng)
                .expect("effort allowed"),
        }
    }
}

/// Samples `num_samples` future values of one feature at one effort level.
/// Samples for a given `(individual, feature, effort)` are reproducible and
/// shared by every node that splits on that feature.
pub fn sample_feature(
    spec: &PerturbationSpec,
    individual: u64,
    feature: usize,
    x0: f64,
    effort: usize,
) -> Result<Vec<f64>> {
    let mut rng = rng::stream(&[spec.seed, individual, feature as u64, effort as u64]);
    (0..spec.num_samples)
        .map(|_| spec.perturb_value(feature, x0, effort, &mut rng))
        .collect()
}

/// Estimates right-branch probabilities at every node for effort levels
/// `0..=max_effort`. Features that do not accept effort reuse their
/// no-effort row at every level.
pub fn estimate_node_probabilities(
    forest: &Forest,
    x0: &[f64],
    spec: &PerturbationSpec,
    max_effort: usize,
    individual: u64,
) -> Result<NodeProbabilityTable> {
    forest.check_point(x0)?;
    spec.validate()?;
    if spec.features.len() != forest.num_features() {
        return Err(Error::Validation(format!(
            "perturbation spec has {} features, forest has {}",
            spec.features.len(),
            forest.num_features()
        )));
    }
    let n = spec.num_samples as f64;
    // sorted samples per (feature, effort), only for features in use
    let mut samples: Vec<Vec<Vec<f64>>> = vec![Vec::new(); forest.num_features()];
    for (j, slot) in samples.iter_mut().enumerate() {
        if forest.feature_occurrences()[j] == 0 {
            continue;
        }
        let levels = if spec.features[j].effort_perturbable {
            max_effort
        } else {
            0
        };
        for e in 0..=levels {
            let mut s = sample_feature(spec, individual, j, x0[j], e)?;
            s.sort_by(f64::total_cmp);
            slot.push(s);
        }
    }
    let rows = forest
        .trees()
        .iter()
        .map(|tree| {
            tree.nodes()
                .iter()
                .map(|node| {
                    let per_level = &samples[node.feature];
                    (0..=max_effort)
                        .map(|e| {
                            let s = &per_level[e.min(per_level.len() - 1)];
                            let below = s.partition_point(|&v| v < node.threshold);
                            (s.len() - below) as f64 / n
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok(NodeProbabilityTable::new(individual, max_effort, rows)?.with_x0(x0.to_vec()))
}
