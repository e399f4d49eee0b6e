#![no_main]

use harq_noma::experiment::{FigureId, Format};
use harq_noma::HarqScheme;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(scheme) = text.parse::<HarqScheme>() {
            assert_eq!(scheme.as_str().parse::<HarqScheme>().ok(), Some(scheme));
        }
        let _ = text.parse::<FigureId>();
        let _ = text.parse::<Format>();
    }
});
