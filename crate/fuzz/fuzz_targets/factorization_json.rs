#![no_main]

use libfuzzer_sys::fuzz_target;
use tensor_inference::io::{factorization_from_json, factorization_to_json};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(f) = factorization_from_json(text) {
        let again = factorization_from_json(&factorization_to_json(&f)).expect("written factorization must parse");
        assert_eq!(again, f);
    }
});
