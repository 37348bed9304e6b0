#![no_main]

use libfuzzer_sys::fuzz_target;
use v2x_emu::scenario::{parse_buildings, write_buildings};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(buildings) = parse_buildings(text) {
        let mut out = Vec::new();
        write_buildings(&mut out, &buildings).unwrap();
        let again = parse_buildings(std::str::from_utf8(&out).unwrap()).expect("written buildings parse");
        assert_eq!(buildings.len(), again.len());
    }
});
