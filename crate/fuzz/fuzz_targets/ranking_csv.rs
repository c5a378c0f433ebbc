#![no_main]

use libfuzzer_sys::fuzz_target;
use probshift::forest::firefighter_forest;
use probshift::ranking::Ranking;

fuzz_target!(|data: &str| {
    let forest = firefighter_forest();
    if let Ok(ranking) = Ranking::from_csv(data, forest.features(), "fuzz") {
        let again = Ranking::from_csv(&ranking.to_csv(), forest.features(), "fuzz")
            .expect("written ranking parses");
        assert_eq!(again.entries.len(), ranking.entries.len());
        let _ = ranking.to_svg();
    }
});
