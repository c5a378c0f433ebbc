#![no_main]

use libfuzzer_sys::fuzz_target;
use probshift::solver::SolveReport;

fuzz_target!(|data: &str| {
    if let Ok(report) = SolveReport::from_json(data) {
        let _ = report.objective();
        let _ = report.to_json();
    }
});
