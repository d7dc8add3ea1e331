#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ckpt) = frostlab::train::Checkpoint::from_bytes(data) {
        // anything that parses must reserialize and reparse identically
        let bytes = ckpt.to_bytes();
        let again = frostlab::train::Checkpoint::from_bytes(&bytes)
            .expect("reserialized checkpoint must parse");
        assert_eq!(again.to_bytes(), bytes);
    }
});
