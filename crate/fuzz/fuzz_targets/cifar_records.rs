#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = frostlab::data::cifar::parse_cifar_records(data);
});
