#![no_main]

use libfuzzer_sys::fuzz_target;

// The IDX image parser must reject arbitrary bytes with an error, never a
// panic or an oversized allocation.
fuzz_target!(|data: &[u8]| {
    let _ = deepbelief::data::parse_idx_images(data);
});
