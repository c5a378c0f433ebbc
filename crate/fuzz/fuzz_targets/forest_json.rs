#![no_main]

use libfuzzer_sys::fuzz_target;
use probshift::forest::Forest;

fuzz_target!(|data: &str| {
    if let Ok(forest) = Forest::from_json(data) {
        let text = forest.to_json();
        let again = Forest::from_json(&text).expect("serialized forest parses");
        assert_eq!(again.to_json(), text);
        let x: Vec<f64> = forest.features().iter().map(|f| f.lo).collect();
        let _ = forest.predict(&x);
    }
});
