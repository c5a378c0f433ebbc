#![no_main]

use libfuzzer_sys::fuzz_target;
use probshift::data::{parse_csv, synth_schema};

fuzz_target!(|data: &str| {
    let schema = synth_schema(3);
    if let Ok(ds) = parse_csv(data, &schema) {
        let _ = ds.feature_stats();
    }
});
