#![no_main]

use libfuzzer_sys::fuzz_target;
use probshift_cli::manifest::RunManifest;

fuzz_target!(|data: &str| {
    if let Ok(manifest) = RunManifest::from_json(data) {
        RunManifest::from_json(&manifest.to_json()).expect("written manifest parses");
    }
});
