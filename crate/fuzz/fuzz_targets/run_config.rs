#![no_main]

use libfuzzer_sys::fuzz_target;

// Config parsing must fully validate (and reject unknown keys) without
// panicking, whatever the JSON and overrides look like. The first line
// fuzzes one --set override, the rest is the config document.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Some((override_line, json)) = text.split_once('\n') else {
        return;
    };
    let overrides = vec![override_line.to_string()];
    let _ = deepbelief_cli::config::RunConfig::from_json(json, &overrides);
});
