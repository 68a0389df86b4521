#![no_main]

use flexneeds::LoadProfile;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = LoadProfile::read_csv(data);
});
