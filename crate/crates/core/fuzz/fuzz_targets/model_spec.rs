#![no_main]

use libfuzzer_sys::fuzz_target;
use losmimo::scenario::PnSpec;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = text.parse::<PnSpec>() {
        let _ = spec.model_name();
        let _ = spec.parameter_label();
    }
});
