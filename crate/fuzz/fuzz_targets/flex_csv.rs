#![no_main]

use flexneeds::{FlexKind, FlexNeeds};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&tag, body)) = data.split_first() else {
        return;
    };
    let kind = if tag & 1 == 0 {
        FlexKind::Predicted
    } else {
        FlexKind::Actual
    };
    let _ = FlexNeeds::read_csv(body, kind);
});
