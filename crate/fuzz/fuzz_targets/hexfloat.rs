#![no_main]

use helio_core::hexfloat::{format, parse};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(v) = parse(text) {
            let back = parse(&format(v)).expect("formatted value parses");
            assert!(back.to_bits() == v.to_bits() || (v.is_nan() && back.is_nan()));
        }
    }
    if data.len() >= 8 {
        let v = f64::from_le_bytes(data[..8].try_into().unwrap());
        let back = parse(&format(v)).expect("formatted value parses");
        assert!(back.to_bits() == v.to_bits() || (v.is_nan() && back.is_nan()));
    }
});
