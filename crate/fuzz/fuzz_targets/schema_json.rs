#![no_main]

use libfuzzer_sys::fuzz_target;
use probshift::data::DatasetSchema;

fuzz_target!(|data: &str| {
    let _ = DatasetSchema::from_json(data);
});
