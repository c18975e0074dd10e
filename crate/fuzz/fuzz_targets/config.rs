#![no_main]

use erppo::config::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = ExperimentConfig::from_toml(text) {
        // anything accepted must survive the echo round trip
        let again = ExperimentConfig::from_toml(&cfg.to_toml()).expect("echoed config reloads");
        assert_eq!(again, cfg);
    }
});
