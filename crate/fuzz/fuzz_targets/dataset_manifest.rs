#![no_main]

use cswap::data::decode_dataset;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&k, rest)) = data.split_first() else { return };
    let cut = (k as usize * rest.len() / 255).min(rest.len());
    let (manifest, blob) = rest.split_at(cut);
    let _ = decode_dataset(manifest, blob);
});
