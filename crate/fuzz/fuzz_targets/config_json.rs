#![no_main]

use helio_cli::load_config;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    // The first line, when it has an '=', doubles as an override.
    let (first, rest) = text.split_once('\n').unwrap_or(("", text));
    let overrides: Vec<String> = if first.contains('=') { vec![first.to_string()] } else { vec![] };
    let _ = load_config(rest, &overrides);
});
