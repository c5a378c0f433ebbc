//! Forest JSON documents.
//!
//! ```json
//! { "num_features": 2,
//!   "features": [{"index": 0, "name": "S", "kind": "continuous", "mutable": true,
//!                 "beneficial": "increase", "lo": 0.0, "hi": 1.0}],
//!   "trees": [{"weight": 1.0, "root": 0,
//!              "nodes": [{"id": 0, "feature": 0, "threshold": 0.7, "left": 1, "right": 2}],
//!              "leaves": [{"id": 1, "class": 0}, {"id": 2, "class": 1}]}] }
//! ```

use serde::{Deserialize, Serialize};

use super::{Child, Direction, FeatureKind, FeatureMeta, Forest, Tree};
use crate::error::{Error, Result};

fn default_lo() -> f64 {
    0.0
}

fn default_hi() -> f64 {
    1.0
}

fn default_weight() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureDoc {
    pub index: usize,
    pub name: String,
    pub kind: FeatureKind,
    pub mutable: bool,
    pub beneficial: Direction,
    #[serde(default = "default_lo")]
    pub lo: f64,
    #[serde(default = "default_hi")]
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDoc {
    pub id: usize,
    pub feature: usize,
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeafDoc {
    pub id: usize,
    pub class: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeDoc {
    #[serde(default = "default_weight")]
    pub weight: f64,
    pub nodes: Vec<NodeDoc>,
    pub leaves: Vec<LeafDoc>,
    pub root: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestDoc {
    pub num_features: usize,
    pub features: Vec<FeatureDoc>,
    pub trees: Vec<TreeDoc>,
}

impl From<&FeatureMeta> for FeatureDoc {
    fn from(f: &FeatureMeta) -> Self {
        Self {
            index: f.index,
            name: f.name.clone(),
            kind: f.kind,
            mutable: f.mutable,
            beneficial: f.beneficial,
            lo: f.lo,
            hi: f.hi,
        }
    }
}

impl From<FeatureDoc> for FeatureMeta {
    fn from(f: FeatureDoc) -> Self {
        Self {
            index: f.index,
            name: f.name,
            kind: f.kind,
            mutable: f.mutable,
            beneficial: f.beneficial,
            lo: f.lo,
            hi: f.hi,
        }
    }
}

impl Tree {
    pub fn to_doc(&self) -> TreeDoc {
        let id_of = |c: Child| match c {
            Child::Node(n) => self.nodes[n].id,
            Child::Leaf(l) => self.leaves[l].id,
        };
        TreeDoc {
            weight: self.weight,
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeDoc {
                    id: n.id,
                    feature: n.feature,
                    threshold: n.threshold,
                    left: id_of(n.left),
                    right: id_of(n.right),
                })
                .collect(),
            leaves: self
                .leaves
                .iter()
                .map(|l| LeafDoc {
                    id: l.id,
                    class: l.class,
                })
                .collect(),
            root: id_of(self.root),
        }
    }

    pub fn from_doc(doc: TreeDoc) -> Result<Self> {
        Tree::new(doc.root, doc.nodes, doc.leaves, doc.weight)
    }
}

impl Forest {
    pub fn to_doc(&self) -> ForestDoc {
        ForestDoc {
            num_features: self.num_features(),
            features: self.features.iter().map(FeatureDoc::from).collect(),
            trees: self.trees.iter().map(Tree::to_doc).collect(),
        }
    }

    pub fn from_doc(doc: ForestDoc) -> Result<Self> {
        if doc.features.len() != doc.num_features {
            return Err(Error::forest(
                "forest",
                format!(
                    "num_features = {} but {} feature entries",
                    doc.num_features,
                    doc.features.len()
                ),
            ));
        }
        let trees = doc
            .trees
            .into_iter()
            .enumerate()
            .map(|(t, td)| {
                Tree::from_doc(td).map_err(|e| match e {
                    Error::InvalidForest { location, message } => Error::InvalidForest {
                        location: format!("tree {t}, {location}"),
                        message,
                    },
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Forest::new(
            doc.features.into_iter().map(FeatureMeta::from).collect(),
            trees,
        )
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ForestDoc = serde_json::from_str(text).map_err(Error::from_json)?;
        Forest::from_doc(doc)
    }

    /// Canonical pretty-printed document.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("forest documents always serialize")
    }
}
