#![no_main]

use libfuzzer_sys::fuzz_target;
use losmimo::phasenoise::PsdMask;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(mask) = PsdMask::parse(text) else { return };
    let points = mask.points();
    assert!(!points.is_empty());
    assert!(points.windows(2).all(|w| w[0].0 < w[1].0));
    for &(f, _) in points {
        assert!(mask.level_db(f).is_finite());
    }
});
