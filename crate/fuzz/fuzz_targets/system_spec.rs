#![no_main]

use libfuzzer_sys::fuzz_target;
use scalesym::systems::{build_system, parse_system_spec};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = parse_system_spec(text) {
        let again = parse_system_spec(&spec.to_json()).expect("serialized spec reparses");
        assert_eq!(again, spec);
        // small specs only: construction probes the kinetic and potential weights
        if spec.config_dim() <= 12 {
            let _ = build_system(&spec);
        }
    }
});

