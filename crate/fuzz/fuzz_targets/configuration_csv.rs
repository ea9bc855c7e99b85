#![no_main]

use libfuzzer_sys::fuzz_target;
use scalesym::io::{configuration_to_csv, parse_configuration_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = parse_configuration_csv(text) {
        assert_eq!(cfg.q.len(), cfg.bodies * cfg.dim);
        let again = parse_configuration_csv(&configuration_to_csv(&cfg.q, cfg.dim)).expect("reparses");
        assert_eq!(again, cfg);
    }
});
