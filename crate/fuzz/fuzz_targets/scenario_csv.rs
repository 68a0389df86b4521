#![no_main]

use flexneeds::ScenarioSet;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = ScenarioSet::read_csv(data, None);
});
