#![no_main]

use helio_core::tuner::{history_from_jsonl, history_to_jsonl};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(history) = history_from_jsonl(text) {
        let again = history_from_jsonl(&history_to_jsonl(&history)).expect("re-encoded log parses");
        assert_eq!(history_to_jsonl(&again), history_to_jsonl(&history));
    }
});
