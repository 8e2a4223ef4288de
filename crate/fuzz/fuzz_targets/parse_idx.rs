#![no_main]

use cswap::data::parse_idx;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(a) = parse_idx(data) {
        let n: usize = a.dims.iter().product();
        assert_eq!(a.values.len(), n);
    }
});
