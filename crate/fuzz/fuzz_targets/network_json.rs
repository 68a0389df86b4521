#![no_main]

use flexneeds::NetworkModel;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(net) = NetworkModel::from_json(text) {
        // Anything accepted must survive a round trip unchanged.
        let again = NetworkModel::from_json(&net.to_json()).expect("re-parse");
        assert_eq!(again.to_json(), net.to_json());
    }
});
