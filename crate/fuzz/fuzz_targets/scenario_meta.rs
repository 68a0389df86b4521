#![no_main]

use flexneeds::scenario::ScenarioMeta;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = serde_json::from_slice::<ScenarioMeta>(data);
});
