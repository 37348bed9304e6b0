#![no_main]

use libfuzzer_sys::fuzz_target;
use v2x_emu::config::EmulatorConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = EmulatorConfig::from_json_str(text) {
        let _ = config.validate();
        let echoed = EmulatorConfig::from_json_str(&config.to_json_pretty()).expect("echo parses");
        assert_eq!(echoed.to_json_pretty(), config.to_json_pretty());
    }
});
