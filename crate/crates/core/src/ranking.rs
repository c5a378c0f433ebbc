//! Feature rankings from solver effort, impurity importances, or at random.

use std::fmt::Write as _;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::FeatureMeta;
use crate::rng;
use crate::solver::{SolveReport, Status};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub feature: usize,
    pub name: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub method: String,
    /// Mutable features, best first.
    pub entries: Vec<RankEntry>,
    pub eta: usize,
    /// Individuals that contributed.
    pub cohort: usize,
    /// Individuals left out (infeasible or timed out).
    pub excluded: usize,
}

impl Ranking {
    /// The first `eta` features.
    pub fn top(&self, eta: usize) -> Vec<usize> {
        self.entries.iter().take(eta).map(|e| e.feature).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["feature", "score", "rank"])
            .expect("in-memory write");
        for (i, e) in self.entries.iter().enumerate() {
            w.write_record([e.name.clone(), e.score.to_string(), (i + 1).to_string()])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 output")
    }

    /// Reads a `feature,score,rank` table. Features are matched by name and
    /// must be mutable; rows are ordered by rank.
    pub fn from_csv(text: &str, features: &[FeatureMeta], method: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        if header != ["feature", "score", "rank"] {
            return Err(Error::Ranking(format!(
                "expected header feature,score,rank, found {}",
                header.join(",")
            )));
        }
        let mut rows = Vec::new();
        for (k, rec) in reader.records().enumerate() {
            let rec = rec?;
            let line = k + 2;
            let name = rec.get(0).unwrap_or("");
            let f = features
                .iter()
                .find(|f| f.name == name)
                .ok_or_else(|| Error::Ranking(format!("line {line}: unknown feature `{name}`")))?;
            if !f.mutable {
                return Err(Error::Ranking(format!(
                    "line {line}: `{name}` is immutable"
                )));
            }
            let score: f64 = rec
                .get(1)
                .and_then(|s| s.parse().ok())
                .filter(|s: &f64| s.is_finite())
                .ok_or_else(|| Error::Ranking(format!("line {line}: bad score")))?;
            let rank: usize = rec
                .get(2)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Ranking(format!("line {line}: bad rank")))?;
            if rows
                .iter()
                .any(|(_, e): &(usize, RankEntry)| e.feature == f.index)
            {
                return Err(Error::Ranking(format!(
                    "line {line}: `{name}` listed twice"
                )));
            }
            rows.push((
                rank,
                RankEntry {
                    feature: f.index,
                    name: f.name.clone(),
                    score,
                },
            ));
        }
        rows.sort_by_key(|(rank, _)| *rank);
        let entries: Vec<RankEntry> = rows.into_iter().map(|(_, e)| e).collect();
        Ok(Ranking {
            method: method.to_string(),
            eta: entries.len(),
            cohort: 0,
            excluded: 0,
            entries,
        })
    }

    /// Horizontal bar chart of the scores.
    pub fn to_svg(&self) -> String {
        bar_chart(
            &self.method,
            &self
                .entries
                .iter()
                .map(|e| (e.name.as_str(), e.score))
                .collect::<Vec<_>>(),
        )
    }
}

/// A simple horizontal bar chart, one bar per `(label, value)`.
pub fn bar_chart(title: &str, bars: &[(&str, f64)]) -> String {
    let row = 22.0;
    let left = 140.0;
    let width = 360.0;
    let height = 40.0 + row * bars.len() as f64;
    let max = bars.iter().map(|b| b.1).fold(0.0, f64::max);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{height}" font-family="sans-serif" font-size="12">"#,
        left + width + 60.0
    );
    let _ = writeln!(
        s,
        r#"<text x="10" y="20" font-weight="bold">{}</text>"#,
        escape(title)
    );
    for (i, (label, v)) in bars.iter().enumerate() {
        let y = 30.0 + row * i as f64;
        let w = if max > 0.0 { width * v / max } else { 0.0 };
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            left - 6.0,
            y + 14.0,
            escape(label)
        );
        let _ = writeln!(
            s,
            r##"<rect x="{left}" y="{y}" width="{w:.2}" height="{}" fill="#4878a8"/>"##,
            row - 6.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{}">{}</text>"#,
            left + w + 4.0,
            y + 14.0,
            trim(*v)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn trim(v: f64) -> String {
    let t = format!("{v:.4}");
    t.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// `feature,importance` table, one row per feature in index order.
pub fn importances_to_csv(importances: &[f64], features: &[FeatureMeta]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["feature", "importance"])
        .expect("in-memory write");
    for (f, v) in features.iter().zip(importances) {
        w.write_record([f.name.clone(), v.to_string()])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 output")
}

/// Reads a `feature,importance` table into a vector indexed like `features`.
/// Every feature must appear exactly once.
pub fn importances_from_csv(text: &str, features: &[FeatureMeta]) -> Result<Vec<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != ["feature", "importance"] {
        return Err(Error::Ranking(format!(
            "expected header feature,importance, found {}",
            header.join(",")
        )));
    }
    let mut out = vec![None; features.len()];
    for (k, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        let name = rec.get(0).unwrap_or("");
        let f = features
            .iter()
            .find(|f| f.name == name)
            .ok_or_else(|| Error::Ranking(format!("line {line}: unknown feature `{name}`")))?;
        let v: f64 = rec
            .get(1)
            .and_then(|s| s.parse().ok())
            .filter(|v: &f64| v.is_finite() && *v >= 0.0)
            .ok_or_else(|| Error::Ranking(format!("line {line}: bad importance")))?;
        if out[f.index].replace(v).is_some() {
            return Err(Error::Ranking(format!(
                "line {line}: `{name}` listed twice"
            )));
        }
    }
    out.into_iter()
        .zip(features)
        .map(|(v, f)| v.ok_or_else(|| Error::Ranking(format!("no importance for `{}`", f.name))))
        .collect()
}

fn order(
    method: &str,
    features: &[FeatureMeta],
    scores: &[f64],
    eta: usize,
    cohort: usize,
    excluded: usize,
) -> Ranking {
    let mut entries: Vec<RankEntry> = features
        .iter()
        .filter(|f| f.mutable)
        .map(|f| RankEntry {
            feature: f.index,
            name: f.name.clone(),
            score: scores[f.index],
        })
        .collect();
    entries.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.feature.cmp(&b.feature)));
    Ranking {
        method: method.to_string(),
        entries,
        eta,
        cohort,
        excluded,
    }
}

fn check_eta(features: &[FeatureMeta], eta: usize) -> Result<()> {
    let mutables = features.iter().filter(|f| f.mutable).count();
    if mutables < eta {
        return Err(Error::Ranking(format!(
            "{mutables} mutable features, fewer than eta = {eta}"
        )));
    }
    Ok(())
}

/// Counts, per mutable feature, the solutions that put effort on it (or the
/// total units when `weighted`). Only optimal solutions count.
pub fn effort_ranking(
    method: &str,
    reports: &[SolveReport],
    features: &[FeatureMeta],
    eta: usize,
    weighted: bool,
) -> Result<Ranking> {
    let mut scores = vec![0.0; features.len()];
    let mut cohort = 0;
    for r in reports {
        let Some(s) = r.solution.as_ref().filter(|_| r.status == Status::Optimal) else {
            continue;
        };
        if s.effort.units().len() != features.len() {
            return Err(Error::Ranking(format!(
                "solution has {} effort entries, expected {}",
                s.effort.units().len(),
                features.len()
            )));
        }
        cohort += 1;
        for (j, &e) in s.effort.units().iter().enumerate() {
            scores[j] += if weighted {
                e as f64
            } else {
                f64::from(u8::from(e > 0))
            };
        }
    }
    if cohort == 0 {
        return Err(Error::Ranking("no feasible solution in the cohort".into()));
    }
    Ok(order(
        method,
        features,
        &scores,
        eta,
        cohort,
        reports.len() - cohort,
    ))
}

/// Impurity importances with immutable features removed.
pub fn rfr_ranking(importances: &[f64], features: &[FeatureMeta], eta: usize) -> Result<Ranking> {
    if importances.len() != features.len() {
        return Err(Error::Ranking(format!(
            "{} importances for {} features",
            importances.len(),
            features.len()
        )));
    }
    check_eta(features, eta)?;
    Ok(order("RFR", features, importances, eta, 0, 0))
}

/// A uniformly random `eta`-subset of the mutable features.
pub fn rsr_ranking(features: &[FeatureMeta], eta: usize, seed: u64) -> Result<Ranking> {
    check_eta(features, eta)?;
    let mutables: Vec<&FeatureMeta> = features.iter().filter(|f| f.mutable).collect();
    let mut rng = rng::stream(&[seed, 0x0a5d]);
    let entries = sample(&mut rng, mutables.len(), eta)
        .into_iter()
        .map(|i| RankEntry {
            feature: mutables[i].index,
            name: mutables[i].name.clone(),
            score: 1.0,
        })
        .collect();
    Ok(Ranking {
        method: "RSR".into(),
        entries,
        eta,
        cohort: 0,
        excluded: 0,
    })
}

/// `count` independent random rankings with seeds derived from `seed`.
pub fn rsr_rankings(
    features: &[FeatureMeta],
    eta: usize,
    seed: u64,
    count: usize,
) -> Result<Vec<Ranking>> {
    (0..count)
        .map(|i| rsr_ranking(features, eta, rng::derive_seed(&[seed, i as u64])))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::FeatureBox;
    use crate::forest::{Direction, FeatureMeta};
    use crate::solver::{EffortAllocation, Objective, Solution};
    use proptest::prelude::*;

    fn fire_features() -> Vec<FeatureMeta> {
        vec![
            FeatureMeta::continuous(0, "S", Direction::Increase),
            FeatureMeta::continuous(1, "A", Direction::Increase),
        ]
    }

    fn report(effort: Vec<usize>, status: Status) -> SolveReport {
        SolveReport {
            status,
            objective_kind: Objective::MaxPath,
            message: None,
            nodes_explored: 0,
            solution: Some(Solution {
                objective: 0.5,
                log_objective: None,
                effort: EffortAllocation(effort),
                chosen_leaves: vec![],
                essential_set: vec![],
                x: vec![],
                per_tree_values: vec![],
                feasible_box: FeatureBox(vec![]),
            }),
        }
    }

    #[test]
    fn counts_effort_sets() {
        let reps = vec![
            report(vec![0, 1], Status::Optimal),
            report(vec![0, 1], Status::Optimal),
            report(vec![1, 0], Status::Optimal),
        ];
        let r = effort_ranking("max", &reps, &fire_features(), 1, false).unwrap();
        let got: Vec<(&str, f64)> = r
            .entries
            .iter()
            .map(|e| (e.name.as_str(), e.score))
            .collect();
        assert_eq!(got, vec![("A", 2.0), ("S", 1.0)]);
        assert_eq!(r.top(1), vec![1]);
    }

    #[test]
    fn infeasible_and_timeouts_are_excluded() {
        let reps = vec![
            report(vec![1, 0], Status::Timeout),
            report(vec![0, 1], Status::Optimal),
        ];
        let r = effort_ranking("max", &reps, &fire_features(), 1, false).unwrap();
        assert_eq!((r.cohort, r.excluded), (1, 1));
        assert_eq!(r.entries[0].name, "A");
        let none = vec![report(vec![1, 0], Status::Infeasible)];
        assert!(effort_ranking("max", &none, &fire_features(), 1, false).is_err());
    }

    #[test]
    fn rfr_drops_immutables() {
        let feats = vec![
            FeatureMeta::continuous(0, "Age", Direction::None),
            FeatureMeta::continuous(1, "FCVC", Direction::Increase),
            FeatureMeta::continuous(2, "CH2O", Direction::Increase),
        ];
        let r = rfr_ranking(&[0.85, 0.1, 0.05], &feats, 1).unwrap();
        assert_eq!(r.top(1), vec![1]);
        assert!(r.entries.iter().all(|e| e.feature != 0));
        assert!(rfr_ranking(&[0.85, 0.1, 0.05], &feats, 3).is_err());
        let csv = importances_to_csv(&[0.85, 0.1, 0.05], &feats);
        assert_eq!(
            importances_from_csv(&csv, &feats).unwrap(),
            vec![0.85, 0.1, 0.05]
        );
        assert!(importances_from_csv("feature,importance\nAge,0.5\n", &feats).is_err());
    }

    #[test]
    fn rsr_is_seeded_and_complete() {
        let feats = fire_features();
        assert_eq!(
            rsr_ranking(&feats, 1, 5).unwrap(),
            rsr_ranking(&feats, 1, 5).unwrap()
        );
        let mut all = rsr_ranking(&feats, 2, 5).unwrap().top(2);
        all.sort_unstable();
        assert_eq!(all, vec![0, 1]);
    }

    #[test]
    fn rsr_selects_uniformly() {
        let mut feats: Vec<FeatureMeta> = (0..6)
            .map(|j| FeatureMeta::continuous(j, format!("m{j}"), Direction::Increase))
            .collect();
        feats.push(FeatureMeta::continuous(6, "fixed", Direction::None));
        let (seeds, eta) = (10_000u64, 2);
        let mut counts = [0usize; 7];
        for seed in 0..seeds {
            for f in rsr_ranking(&feats, eta, seed).unwrap().top(eta) {
                counts[f] += 1;
            }
        }
        assert_eq!(counts[6], 0);
        let p = eta as f64 / 6.0;
        let sd = (p * (1.0 - p) / seeds as f64).sqrt();
        for &c in &counts[..6] {
            let freq = c as f64 / seeds as f64;
            assert!((freq - p).abs() <= 3.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn csv_round_trip() {
        let reps = vec![report(vec![0, 1], Status::Optimal)];
        let r = effort_ranking("max", &reps, &fire_features(), 1, false).unwrap();
        let csv = r.to_csv();
        assert!(csv.starts_with("feature,score,rank\nA,1,1\nS,0,2\n"));
        let back = Ranking::from_csv(&csv, &fire_features(), "max").unwrap();
        assert_eq!(back.entries, r.entries);
        assert!(r.to_svg().contains("<rect"));
    }

    proptest! {
        #[test]
        fn rankings_are_sorted_and_mutable_only(efforts in proptest::collection::vec(proptest::collection::vec(0usize..2, 4), 1..20), eta in 1usize..3) {
            let feats = vec![
                FeatureMeta::continuous(0, "a", Direction::None),
                FeatureMeta::continuous(1, "b", Direction::Increase),
                FeatureMeta::continuous(2, "c", Direction::Decrease),
                FeatureMeta::binary(3, "d", Direction::ToOne),
            ];
            let reps: Vec<SolveReport> = efforts.iter().map(|e| {
                let mut e = e.clone();
                e[0] = 0;
                let total: usize = e.iter().sum();
                if total > eta { e = vec![0; 4]; }
                report(e, Status::Optimal)
            }).collect();
            let r = effort_ranking("x", &reps, &feats, eta, false).unwrap();
            prop_assert!(r.entries.iter().all(|e| e.feature != 0));
            prop_assert!(r.entries.windows(2).all(|w| w[0].score > w[1].score || (w[0].score == w[1].score && w[0].feature < w[1].feature)));
            let sum: f64 = r.entries.iter().map(|e| e.score).sum();
            prop_assert!(sum <= (eta * reps.len()) as f64);
        }
    }
}
