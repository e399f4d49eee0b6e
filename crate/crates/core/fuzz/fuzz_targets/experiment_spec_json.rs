#![no_main]

use harq_noma::experiment::ExperimentSpec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(spec) = ExperimentSpec::from_json_str(text) {
            let _ = spec.point(0);
        }
    }
});
