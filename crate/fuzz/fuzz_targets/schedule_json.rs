#![no_main]

use cswap::pruners::PruneSchedule;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(s) = PruneSchedule::from_json(text) {
        assert_eq!(PruneSchedule::from_json(&s.to_json()).expect("round trip"), s);
    }
});
