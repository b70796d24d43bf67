#![no_main]

use libfuzzer_sys::fuzz_target;
use ppd_cli::config::parse_config;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    // Anything that parses must survive its own normalized echo.
    if let Ok(config) = parse_config(text) {
        let echoed = parse_config(&config.to_toml()).expect("normalized config reparses");
        assert_eq!(echoed, config);
    }
});
