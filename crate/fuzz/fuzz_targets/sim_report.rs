#![no_main]

use libfuzzer_sys::fuzz_target;
use probshift::sim::SimReport;

fuzz_target!(|data: &str| {
    if let Ok(report) = SimReport::from_json(data) {
        let _ = report.raw_csv();
        let _ = report.normalized_csv();
    }
});
