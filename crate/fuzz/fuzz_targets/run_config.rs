#![no_main]

use flexneeds::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(cfg) = serde_json::from_slice::<RunConfig>(data) {
        // Validation may reject it, but must not panic.
        let _ = cfg.validate();
    }
});
