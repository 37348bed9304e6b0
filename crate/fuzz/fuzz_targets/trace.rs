#![no_main]

use libfuzzer_sys::fuzz_target;
use v2x_emu::scenario::TraceReader;

fuzz_target!(|data: &[u8]| {
    let mut previous = f64::NEG_INFINITY;
    for step in TraceReader::new(data) {
        let Ok(step) = step else { break };
        assert!(step.timestamp > previous);
        previous = step.timestamp;
    }
});
