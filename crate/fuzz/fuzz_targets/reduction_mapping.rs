#![no_main]

use flexneeds::reduction::ReductionMapping;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = serde_json::from_slice::<ReductionMapping>(data);
});
