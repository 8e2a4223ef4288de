//! Manifest and blob split at a length prefix taken from the first byte.
#![no_main]

use cswap::ModelGraph;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&k, rest)) = data.split_first() else { return };
    let cut = (k as usize * rest.len() / 255).min(rest.len());
    let (manifest, blob) = rest.split_at(cut);
    if let Ok(model) = ModelGraph::from_parts(manifest, blob) {
        // anything accepted must survive a round trip
        let (json, blob) = model.to_parts("model.bin");
        ModelGraph::from_parts(json.as_bytes(), &blob).expect("re-encoded model decodes");
    }
});
