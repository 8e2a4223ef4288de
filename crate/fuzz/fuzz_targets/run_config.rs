#![no_main]

use cswap::config::{DatasetSpec, RunConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = RunConfig::parse(text);
    let _ = DatasetSpec::parse(text);
});
