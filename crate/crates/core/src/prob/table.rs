use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::Forest;

/// Right-branch probabilities for every node of every tree, at effort
/// levels `0..=E`, for one individual. Left probabilities are complements.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeProbabilityTable {
    individual: u64,
    max_effort: usize,
    /// `rows[tree][node position][effort]`
    rows: Vec<Vec<Vec<f64>>>,
    x0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableEntryDoc {
    pub tree: usize,
    pub node: usize,
    pub right: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableDoc {
    pub individual: u64,
    #[serde(rename = "E")]
    pub max_effort: usize,
    pub entries: Vec<TableEntryDoc>,
    /// The individual's original point, carried along so that a table is
    /// enough to set up a solve.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
}

fn check_row(row: &[f64], max_effort: usize, at: impl Fn() -> String) -> Result<()> {
    if row.len() != max_effort + 1 {
        return Err(Error::Validation(format!(
            "{}: expected {} effort levels, found {}",
            at(),
            max_effort + 1,
            row.len()
        )));
    }
    if let Some(p) = row.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Validation(format!(
            "{}: probability {p} outside [0, 1]",
            at()
        )));
    }
    Ok(())
}

impl NodeProbabilityTable {
    pub fn new(individual: u64, max_effort: usize, rows: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        for (t, tree) in rows.iter().enumerate() {
            for (n, row) in tree.iter().enumerate() {
                check_row(row, max_effort, || format!("tree {t}, node position {n}"))?;
            }
        }
        Ok(Self {
            individual,
            max_effort,
            rows,
            x0: None,
        })
    }

    pub fn with_x0(mut self, x0: Vec<f64>) -> Self {
        self.x0 = Some(x0);
        self
    }

    pub fn individual(&self) -> u64 {
        self.individual
    }

    pub fn max_effort(&self) -> usize {
        self.max_effort
    }

    pub fn x0(&self) -> Option<&[f64]> {
        self.x0.as_deref()
    }

    pub fn right_prob(&self, tree: usize, node: usize, effort: usize) -> f64 {
        self.rows[tree][node][effort]
    }

    /// `rows()[tree][node position][effort]`.
    pub fn rows(&self) -> &[Vec<Vec<f64>>] {
        &self.rows
    }

    pub fn row(&self, tree: usize, node: usize) -> &[f64] {
        &self.rows[tree][node]
    }

    /// Checks that the table has one row per node of `forest`.
    pub fn check_shape(&self, forest: &Forest) -> Result<()> {
        if self.rows.len() != forest.trees().len() {
            return Err(Error::Validation(format!(
                "table has {} trees, forest has {}",
                self.rows.len(),
                forest.trees().len()
            )));
        }
        for (t, (rows, tree)) in self.rows.iter().zip(forest.trees()).enumerate() {
            if rows.len() != tree.nodes().len() {
                return Err(Error::Validation(format!(
                    "tree {t}: table has {} nodes, forest has {}",
                    rows.len(),
                    tree.nodes().len()
                )));
            }
        }
        if let Some(x0) = &self.x0 {
            if x0.len() != forest.num_features() {
                return Err(Error::Validation(format!(
                    "x0 has {} coordinates, forest has {} features",
                    x0.len(),
                    forest.num_features()
                )));
            }
        }
        Ok(())
    }

    pub fn to_doc(&self, forest: &Forest) -> TableDoc {
        let entries = self
            .rows
            .iter()
            .zip(forest.trees())
            .enumerate()
            .flat_map(|(t, (rows, tree))| {
                rows.iter()
                    .zip(tree.nodes())
                    .map(move |(row, node)| TableEntryDoc {
                        tree: t,
                        node: node.id,
                        right: row.clone(),
                    })
            })
            .collect();
        TableDoc {
            individual: self.individual,
            max_effort: self.max_effort,
            entries,
            x0: self.x0.clone(),
        }
    }

    pub fn from_doc(doc: TableDoc, forest: &Forest) -> Result<Self> {
        let mut rows: Vec<Vec<Option<Vec<f64>>>> = forest
            .trees()
            .iter()
            .map(|t| vec![None; t.nodes().len()])
            .collect();
        for entry in doc.entries {
            let at = || format!("entry (tree {}, node {})", entry.tree, entry.node);
            let tree = forest
                .trees()
                .get(entry.tree)
                .ok_or_else(|| Error::Validation(format!("{}: no such tree", at())))?;
            let pos = tree
                .node_position(entry.node)
                .ok_or_else(|| Error::Validation(format!("{}: no such node", at())))?;
            check_row(&entry.right, doc.max_effort, at)?;
            if rows[entry.tree][pos].replace(entry.right).is_some() {
                return Err(Error::Validation(format!(
                    "duplicate entry for tree {}, node {}",
                    entry.tree, entry.node
                )));
            }
        }
        let rows = rows
            .into_iter()
            .enumerate()
            .map(|(t, tree_rows)| {
                tree_rows
                    .into_iter()
                    .enumerate()
                    .map(|(n, r)| {
                        r.ok_or_else(|| {
                            Error::Validation(format!(
                                "missing entry for tree {t}, node {}",
                                forest.tree(t).nodes()[n].id
                            ))
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let table = Self {
            individual: doc.individual,
            max_effort: doc.max_effort,
            rows,
            x0: doc.x0,
        };
        table.check_shape(forest)?;
        Ok(table)
    }

    pub fn from_json(text: &str, forest: &Forest) -> Result<Self> {
        let doc: TableDoc = serde_json::from_str(text).map_err(Error::from_json)?;
        Self::from_doc(doc, forest)
    }

    pub fn to_json(&self, forest: &Forest) -> String {
        serde_json::to_string_pretty(&self.to_doc(forest)).expect("tables always serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::{firefighter_forest, firefighter_table};

    #[test]
    fn firefighter_round_trip() {
        let f = firefighter_forest();
        let t = firefighter_table();
        let back = NodeProbabilityTable::from_json(&t.to_json(&f), &f).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn missing_node_rejected() {
        let f = firefighter_forest();
        let mut doc = firefighter_table().to_doc(&f);
        doc.entries.pop();
        let err = NodeProbabilityTable::from_doc(doc, &f).unwrap_err();
        assert!(
            err.to_string().contains("missing entry for tree 0, node 2"),
            "{err}"
        );
    }

    #[test]
    fn out_of_range_probability_rejected() {
        let f = firefighter_forest();
        let text = firefighter_table().to_json(&f).replacen("0.8", "1.2", 1);
        let err = NodeProbabilityTable::from_json(&text, &f).unwrap_err();
        assert!(err.to_string().contains("1.2"), "{err}");
    }

    #[test]
    fn wrong_effort_length_rejected() {
        assert!(NodeProbabilityTable::new(0, 2, vec![vec![vec![0.5, 0.5]]]).is_err());
    }

    #[test]
    fn unknown_node_rejected() {
        let f = firefighter_forest();
        let mut doc = firefighter_table().to_doc(&f);
        doc.entries[0].node = 42;
        assert!(NodeProbabilityTable::from_doc(doc, &f).is_err());
    }
}
