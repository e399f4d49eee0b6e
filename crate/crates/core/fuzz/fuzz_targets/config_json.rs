#![no_main]

use harq_noma::model::validate_config;
use harq_noma::{RawConfig, SystemConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(raw) = RawConfig::from_json_str(text) {
        if let Ok(cfg) = validate_config(&raw) {
            // A validated config must survive its own round trip.
            let again = validate_config(&cfg.to_raw()).expect("round trip revalidates");
            assert_eq!(again.config_hash(), cfg.config_hash());
        }
    }
    let _ = SystemConfig::from_json_str(text);
});
