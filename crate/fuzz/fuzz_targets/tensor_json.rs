#![no_main]

use libfuzzer_sys::fuzz_target;
use tensor_inference::io::{tensor_from_json, tensor_to_json};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(t) = tensor_from_json(text) {
        let again = tensor_from_json(&tensor_to_json(&t)).expect("written tensor must parse");
        assert_eq!(again, t);
    }
});
