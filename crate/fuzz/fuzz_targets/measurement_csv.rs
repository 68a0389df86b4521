#![no_main]

use flexneeds::measurement::parse_measurements;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = parse_measurements(data, None);
});
