#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = frostlab::data::idx::parse_idx_labels(data);
});
