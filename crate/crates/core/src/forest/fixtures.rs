//! The two-test admission example: strength `S` and aerobic `A` scores on
//! a 0-10 scale, rescaled to `[0, 1]`.

use super::{Direction, FeatureMeta, Forest, LeafDoc, NodeDoc, Tree};
use crate::prob::NodeProbabilityTable;

/// Leaf ids in left-to-right order: NO, YES, NO, YES.
pub const FIREFIGHTER_LEAVES: [usize; 4] = [3, 4, 5, 6];

/// Root `S >= 0.7`; left child `A >= 0.8`, right child `A >= 0.6`.
pub fn firefighter_forest() -> Forest {
    let features = vec![
        FeatureMeta::continuous(0, "S", Direction::Increase),
        FeatureMeta::continuous(1, "A", Direction::Increase),
    ];
    let nodes = vec![
        NodeDoc {
            id: 0,
            feature: 0,
            threshold: 0.7,
            left: 1,
            right: 2,
        },
        NodeDoc {
            id: 1,
            feature: 1,
            threshold: 0.8,
            left: 3,
            right: 4,
        },
        NodeDoc {
            id: 2,
            feature: 1,
            threshold: 0.6,
            left: 5,
            right: 6,
        },
    ];
    let leaves = FIREFIGHTER_LEAVES
        .iter()
        .zip([0, 1, 0, 1])
        .map(|(&id, class)| LeafDoc { id, class })
        .collect();
    let tree = Tree::new(0, nodes, leaves, 1.0).expect("fixture tree is valid");
    Forest::new(features, vec![tree]).expect("fixture forest is valid")
}

/// Right-branch probabilities without and with one unit of effort.
pub fn firefighter_table() -> NodeProbabilityTable {
    let rows = vec![vec![vec![0.4, 0.5], vec![0.3, 0.6], vec![0.4, 0.8]]];
    NodeProbabilityTable::new(0, 1, rows)
        .expect("fixture table is valid")
        .with_x0(vec![0.5, 0.5])
}
