#![no_main]

use libfuzzer_sys::fuzz_target;
use ppd_core::normconst::PolySurface;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(surface) = PolySurface::from_text(text) {
        let again = PolySurface::from_text(&surface.to_text()).expect("encoded surface decodes");
        assert_eq!(again.to_text(), surface.to_text());
    }
});
