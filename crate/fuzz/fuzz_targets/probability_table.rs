#![no_main]

use libfuzzer_sys::fuzz_target;
use probshift::forest::firefighter_forest;
use probshift::prob::NodeProbabilityTable;

fuzz_target!(|data: &str| {
    let forest = firefighter_forest();
    if let Ok(table) = NodeProbabilityTable::from_json(data, &forest) {
        let text = table.to_json(&forest);
        NodeProbabilityTable::from_json(&text, &forest).expect("serialized table parses");
    }
});
