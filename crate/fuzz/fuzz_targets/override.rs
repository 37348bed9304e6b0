#![no_main]

use libfuzzer_sys::fuzz_target;
use v2x_emu::config::{parse_override, EmulatorConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let sets: Vec<&str> = text.lines().collect();
    for s in &sets {
        let _ = parse_override(s);
    }
    if let Ok(config) = EmulatorConfig::default().with_overrides(&sets) {
        let _ = config.validate();
    }
});
