#![no_main]

use libfuzzer_sys::fuzz_target;
use probshift::forest::firefighter_forest;
use probshift::ranking::{importances_from_csv, importances_to_csv};

fuzz_target!(|data: &str| {
    let forest = firefighter_forest();
    if let Ok(imp) = importances_from_csv(data, forest.features()) {
        let text = importances_to_csv(&imp, forest.features());
        assert_eq!(
            importances_from_csv(&text, forest.features()).ok(),
            Some(imp)
        );
    }
});
