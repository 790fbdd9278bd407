#![no_main]

use libfuzzer_sys::fuzz_target;
use tensor_inference::io::{observations_from_csv, observations_to_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(obs) = observations_from_csv(text, None) {
        let again = observations_from_csv(&observations_to_csv(&obs), Some(obs.shape())).expect("written samples must parse");
        assert_eq!(again.samples(), obs.samples());
    }
});
