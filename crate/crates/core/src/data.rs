//! Dataset ingestion, schema, splitting and a synthetic generator.
//!
//! A schema names every CSV column and gives it a role. Feature columns are
//! recoded (categorical strings to numbers), then continuous features are
//! min-max scaled to `[0, 1]`; binary features must already be 0 or 1
//! after recoding. The target column is binarized through a set of labels
//! mapped to class 1. Rows whose raw value in some column is listed under
//! that column's `exclude` are dropped before anything else.
//!
//! ```json
//! { "desired_class": 1,
//!   "columns": [
//!     {"name": "Height", "role": "drop"},
//!     {"name": "CALC", "role": "feature", "kind": "continuous", "mutable": true,
//!      "beneficial": "decrease", "recode": {"no": 0, "Sometimes": 1, "Frequently": 2, "Always": 3}},
//!     {"name": "NObeyesdad", "role": "target", "positive": ["Normal_Weight"],
//!      "exclude": ["Insufficient_Weight"]}] }
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, RowError};
use crate::forest::{Direction, FeatureKind, FeatureMeta};
use crate::prob::FeatureStats;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnRole {
    Feature,
    Target,
    Drop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSpec {
    pub name: String,
    pub role: ColumnRole,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<FeatureKind>,
    #[serde(default)]
    pub mutable: bool,
    #[serde(default = "no_direction")]
    pub beneficial: Direction,
    /// Raw string to numeric value, applied before scaling.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub recode: BTreeMap<String, f64>,
    /// Target labels counted as class 1.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub positive: Vec<String>,
    /// Raw values whose rows are removed.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exclude: Vec<String>,
}

fn no_direction() -> Direction {
    Direction::None
}

fn default_desired() -> u8 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSchema {
    pub columns: Vec<ColumnSpec>,
    /// Class the individuals want to reach.
    #[serde(default = "default_desired")]
    pub desired_class: u8,
}

impl DatasetSchema {
    pub fn from_json(text: &str) -> Result<Self> {
        let schema: Self = serde_json::from_str(text).map_err(Error::from_json)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schemas always serialize")
    }

    pub fn validate(&self) -> Result<()> {
        let targets = self
            .columns
            .iter()
            .filter(|c| c.role == ColumnRole::Target)
            .count();
        if targets != 1 {
            return Err(Error::Validation(format!(
                "schema needs exactly one target column, found {targets}"
            )));
        }
        if self.desired_class > 1 {
            return Err(Error::Validation(format!(
                "desired class {} outside {{0, 1}}",
                self.desired_class
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for c in &self.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Validation(format!(
                    "column `{}` listed twice",
                    c.name
                )));
            }
            match c.role {
                ColumnRole::Feature => {
                    if c.kind.is_none() {
                        return Err(Error::Validation(format!(
                            "feature `{}` needs a kind",
                            c.name
                        )));
                    }
                    if c.mutable && c.beneficial == Direction::None {
                        return Err(Error::Validation(format!(
                            "mutable feature `{}` needs a beneficial direction",
                            c.name
                        )));
                    }
                    if c.kind == Some(FeatureKind::Binary)
                        && matches!(c.beneficial, Direction::Increase | Direction::Decrease)
                    {
                        return Err(Error::Validation(format!(
                            "binary feature `{}` uses to_one/to_zero directions",
                            c.name
                        )));
                    }
                    if c.kind == Some(FeatureKind::Continuous)
                        && matches!(c.beneficial, Direction::ToOne | Direction::ToZero)
                    {
                        return Err(Error::Validation(format!(
                            "continuous feature `{}` uses increase/decrease directions",
                            c.name
                        )));
                    }
                }
                ColumnRole::Target => {
                    if c.positive.is_empty() {
                        return Err(Error::Validation(format!(
                            "target `{}` needs a positive label set",
                            c.name
                        )));
                    }
                }
                ColumnRole::Drop => {}
            }
        }
        if !self.columns.iter().any(|c| c.role == ColumnRole::Feature) {
            return Err(Error::Validation("schema has no feature columns".into()));
        }
        Ok(())
    }

    fn features(&self) -> impl Iterator<Item = &ColumnSpec> {
        self.columns
            .iter()
            .filter(|c| c.role == ColumnRole::Feature)
    }
}

/// Original value range of a feature, for mapping back from `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scale {
    pub lo: f64,
    pub hi: f64,
}

impl Scale {
    pub fn normalize(&self, v: f64) -> f64 {
        if self.hi > self.lo {
            (v - self.lo) / (self.hi - self.lo)
        } else {
            0.0
        }
    }

    pub fn denormalize(&self, v: f64) -> f64 {
        self.lo + v * (self.hi - self.lo)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub features: Vec<FeatureMeta>,
    /// Normalized rows, one value per feature.
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
    /// Stable row identifiers (position in the loaded file after exclusions).
    pub ids: Vec<u64>,
    pub scales: Vec<Scale>,
    pub desired_class: u8,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.features.len()
    }

    /// Rows at the given positions, in that order.
    pub fn subset(&self, positions: &[usize]) -> Dataset {
        Dataset {
            features: self.features.clone(),
            rows: positions.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: positions.iter().map(|&i| self.labels[i]).collect(),
            ids: positions.iter().map(|&i| self.ids[i]).collect(),
            scales: self.scales.clone(),
            desired_class: self.desired_class,
        }
    }

    pub fn position_of(&self, id: u64) -> Option<usize> {
        self.ids.iter().position(|&i| i == id)
    }

    pub fn denormalize(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.scales)
            .map(|(&v, s)| s.denormalize(v))
            .collect()
    }

    /// Standard deviation (population) and majority-value frequency per
    /// feature. Call this on the training split.
    pub fn feature_stats(&self) -> FeatureStats {
        let n = self.rows.len().max(1) as f64;
        let mut sigma = Vec::with_capacity(self.num_features());
        let mut majority_freq = Vec::with_capacity(self.num_features());
        for (j, f) in self.features.iter().enumerate() {
            let mean = self.rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = self.rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
            sigma.push(var.sqrt());
            majority_freq.push(match f.kind {
                FeatureKind::Binary => {
                    let ones = self.rows.iter().filter(|r| r[j] >= 0.5).count() as f64 / n;
                    ones.max(1.0 - ones)
                }
                FeatureKind::Continuous => 1.0,
            });
        }
        FeatureStats {
            sigma,
            majority_freq,
        }
    }

    /// Writes the normalized data with a header of feature names and `label`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = self.features.iter().map(|f| f.name.clone()).collect();
        header.push("label".into());
        w.write_record(&header)?;
        for (row, label) in self.rows.iter().zip(&self.labels) {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            rec.push(label.to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Reads a CSV file and applies `schema`.
pub fn load_csv(path: &Path, schema: &DatasetSchema) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, schema)
}

/// Parses CSV text and applies `schema`. All bad rows are reported together.
pub fn parse_csv(text: &str, schema: &DatasetSchema) -> Result<Dataset> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let mut col_of = BTreeMap::new();
    for spec in &schema.columns {
        let Some(i) = header.iter().position(|h| *h == spec.name) else {
            return Err(Error::Input(format!(
                "column `{}` missing from CSV header",
                spec.name
            )));
        };
        col_of.insert(spec.name.as_str(), i);
    }
    let target = schema
        .columns
        .iter()
        .find(|c| c.role == ColumnRole::Target)
        .expect("validated");
    let feature_specs: Vec<&ColumnSpec> = schema.features().collect();

    let mut raw_rows: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    let mut errors = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let line = k + 2;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                errors.push(RowError {
                    line,
                    column: String::new(),
                    message: e.to_string(),
                });
                continue;
            }
        };
        let cell = |name: &str| record.get(col_of[name]).unwrap_or("");
        if schema
            .columns
            .iter()
            .any(|c| c.exclude.iter().any(|x| x == cell(&c.name)))
        {
            continue;
        }
        let mut row = Vec::with_capacity(feature_specs.len());
        let mut ok = true;
        for spec in &feature_specs {
            let raw = cell(&spec.name);
            let mut bad = |message: String| {
                errors.push(RowError {
                    line,
                    column: spec.name.clone(),
                    message,
                });
                ok = false;
            };
            if raw.is_empty() || raw.eq_ignore_ascii_case("na") || raw.eq_ignore_ascii_case("nan") {
                bad("missing value".into());
                continue;
            }
            let value = match spec.recode.get(raw) {
                Some(&v) => v,
                None => match raw.parse::<f64>() {
                    Ok(v) if v.is_finite() => v,
                    _ => {
                        bad(format!("value `{raw}` is not numeric and has no recode"));
                        continue;
                    }
                },
            };
            if spec.kind == Some(FeatureKind::Binary) && value != 0.0 && value != 1.0 {
                bad(format!("binary value {value} is not 0 or 1"));
                continue;
            }
            row.push(value);
        }
        let label_raw = cell(&target.name);
        if label_raw.is_empty() {
            errors.push(RowError {
                line,
                column: target.name.clone(),
                message: "missing label".into(),
            });
            ok = false;
        }
        if ok {
            raw_rows.push(row);
            labels.push(u8::from(target.positive.iter().any(|p| p == label_raw)));
        }
    }
    if !errors.is_empty() {
        return Err(Error::Rows(errors));
    }
    if raw_rows.is_empty() {
        return Err(Error::Input("no data rows after exclusions".into()));
    }

    let scales: Vec<Scale> = feature_specs
        .iter()
        .enumerate()
        .map(|(j, spec)| match spec.kind {
            Some(FeatureKind::Binary) => Scale { lo: 0.0, hi: 1.0 },
            _ => {
                let (lo, hi) = raw_rows
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                        (lo.min(r[j]), hi.max(r[j]))
                    });
                Scale { lo, hi }
            }
        })
        .collect();
    let rows: Vec<Vec<f64>> = raw_rows
        .iter()
        .map(|r| {
            r.iter()
                .zip(&scales)
                .map(|(&v, s)| s.normalize(v))
                .collect()
        })
        .collect();
    let features = feature_specs
        .iter()
        .enumerate()
        .map(|(j, spec)| FeatureMeta {
            index: j,
            name: spec.name.clone(),
            kind: spec.kind.expect("validated"),
            mutable: spec.mutable,
            beneficial: spec.beneficial,
            lo: 0.0,
            hi: 1.0,
        })
        .collect();
    Ok(Dataset {
        features,
        ids: (0..rows.len() as u64).collect(),
        rows,
        labels,
        scales,
        desired_class: schema.desired_class,
    })
}

/// Seeded shuffle split into `(train, test)`; the training part gets
/// `round(train_fraction · n)` rows.
pub fn split(dataset: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Input(format!(
            "train fraction {train_fraction} outside (0, 1)"
        )));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut rng::stream(&[seed, 0x5911]));
    let cut = (train_fraction * dataset.len() as f64).round() as usize;
    let (train, test) = order.split_at(cut);
    let mut train = train.to_vec();
    let mut test = test.to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((dataset.subset(&train), dataset.subset(&test)))
}

/// Parameters of the synthetic generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub n: usize,
    pub d: usize,
    pub seed: u64,
    /// Probability of flipping each label.
    pub noise: f64,
    /// Points whose score lies within this distance of the threshold are
    /// redrawn, leaving a gap between the classes.
    pub margin: f64,
}

impl SynthConfig {
    pub fn new(n: usize, d: usize, seed: u64) -> Self {
        Self {
            n,
            d,
            seed,
            noise: 0.05,
            margin: SYNTH_MARGIN,
        }
    }
}

/// Feature layout of the synthetic data: feature 0 (continuous) and 1
/// (binary) are immutable, features with `j % 3 == 1` are binary, the rest
/// continuous. Mutable directions alternate between raising and lowering.
pub fn synth_features(d: usize) -> Vec<FeatureMeta> {
    (0..d)
        .map(|j| {
            let binary = j % 3 == 1;
            let up = (j / 2) % 2 == 0;
            let dir = match (binary, up) {
                (true, true) => Direction::ToOne,
                (true, false) => Direction::ToZero,
                (false, true) => Direction::Increase,
                (false, false) => Direction::Decrease,
            };
            let meta = if binary {
                FeatureMeta::binary(j, format!("b{j}"), dir)
            } else {
                FeatureMeta::continuous(j, format!("c{j}"), dir)
            };
            if j < 2 {
                meta.immutable()
            } else {
                meta
            }
        })
        .collect()
}

/// Weight of feature `j` in the planted rule. Mutable features decay
/// geometrically so some are clearly more useful than others.
pub fn synth_weight(j: usize) -> f64 {
    match j {
        0 => 0.5,
        1 => 0.4,
        _ => 3.0 * 0.5f64.powi(j as i32 - 2),
    }
}

/// Default class gap of the synthetic rule.
pub const SYNTH_MARGIN: f64 = 0.3;

/// Probability that a synthetic binary feature is 1.
const SYNTH_BINARY_RATE: f64 = 0.35;

/// Mixed continuous/binary data with a planted monotone rule: label 1 iff
/// `Σ w_j a_j` exceeds its expected value, where `a_j` is `x_j` oriented so
/// that larger means more beneficial. Draws scoring within `margin` of the
/// threshold are discarded, then labels flip with probability `noise`.
pub fn synth_generate(config: SynthConfig) -> Result<Dataset> {
    let SynthConfig {
        n,
        d,
        seed,
        noise,
        margin,
    } = config;
    if n < 20 || d < 3 {
        return Err(Error::Input(format!(
            "synthetic data needs n >= 20 and d >= 3, got n = {n}, d = {d}"
        )));
    }
    let features = synth_features(d);
    let mut rng = rng::stream(&[seed, 0x5e7]);
    let aligned = |f: &FeatureMeta, v: f64| match f.beneficial {
        Direction::Decrease | Direction::ToZero => 1.0 - v,
        _ => v,
    };
    let threshold: f64 = features
        .iter()
        .map(|f| {
            let mean = match f.kind {
                FeatureKind::Binary => aligned(f, SYNTH_BINARY_RATE),
                FeatureKind::Continuous => 0.5,
            };
            synth_weight(f.index) * mean
        })
        .sum();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    while rows.len() < n {
        let row: Vec<f64> = features
            .iter()
            .map(|f| match f.kind {
                FeatureKind::Binary => f64::from(u8::from(rng.random_bool(SYNTH_BINARY_RATE))),
                FeatureKind::Continuous => rng.random::<f64>(),
            })
            .collect();
        let score: f64 = features
            .iter()
            .map(|f| synth_weight(f.index) * aligned(f, row[f.index]))
            .sum();
        if (score - threshold).abs() < margin {
            continue;
        }
        let mut label = u8::from(score > threshold);
        if noise > 0.0 && rng.random_bool(noise) {
            label ^= 1;
        }
        rows.push(row);
        labels.push(label);
    }
    Ok(Dataset {
        features,
        rows,
        labels,
        ids: (0..n as u64).collect(),
        scales: vec![Scale { lo: 0.0, hi: 1.0 }; d],
        desired_class: 1,
    })
}

/// A schema matching the CSV written by [`Dataset::write_csv`] for
/// synthetic data.
pub fn synth_schema(d: usize) -> DatasetSchema {
    let mut columns: Vec<ColumnSpec> = synth_features(d)
        .into_iter()
        .map(|f| ColumnSpec {
            name: f.name,
            role: ColumnRole::Feature,
            kind: Some(f.kind),
            mutable: f.mutable,
            beneficial: f.beneficial,
            recode: BTreeMap::new(),
            positive: Vec::new(),
            exclude: Vec::new(),
        })
        .collect();
    columns.push(ColumnSpec {
        name: "label".into(),
        role: ColumnRole::Target,
        kind: None,
        mutable: false,
        beneficial: Direction::None,
        recode: BTreeMap::new(),
        positive: vec!["1".into()],
        exclude: Vec::new(),
    });
    DatasetSchema {
        columns,
        desired_class: 1,
    }
}
