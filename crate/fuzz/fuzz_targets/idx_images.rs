#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    // must never panic on malformed headers, bad magic, or truncation
    let _ = frostlab::data::idx::parse_idx_images(data);
});
