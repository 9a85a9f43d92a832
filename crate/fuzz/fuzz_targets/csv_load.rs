#![no_main]

use libfuzzer_sys::fuzz_target;

// First byte steers the parser mode (header flag, label column) so one
// corpus covers every code path.
fuzz_target!(|data: &[u8]| {
    if data.is_empty() {
        return;
    }
    let mode = data[0];
    if let Ok(text) = std::str::from_utf8(&data[1..]) {
        let label_column = match mode & 0b11 {
            0 => None,
            1 => Some(0),
            2 => Some(1),
            _ => Some(7),
        };
        let has_header = mode & 0b100 != 0;
        let _ = deepbelief::data::parse_csv(text, label_column, has_header);
    }
});
