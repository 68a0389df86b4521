#![no_main]

use flexneeds::measurement::{fmt_ts, parse_timestamp};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Some(ts) = parse_timestamp(text) {
        // Formatting drops sub-second precision; the minute must survive.
        let back = parse_timestamp(&fmt_ts(ts)).expect("formatted timestamp re-parses");
        assert_eq!(fmt_ts(back), fmt_ts(ts));
    }
});
