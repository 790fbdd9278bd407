#![no_main]

use libfuzzer_sys::fuzz_target;
use tensor_inference::harness::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ExperimentConfig::from_json(text) {
        let again = ExperimentConfig::from_json(&cfg.to_json_pretty()).expect("written config must parse");
        assert_eq!(again, cfg);
    }
});
