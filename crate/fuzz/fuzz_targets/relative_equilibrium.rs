#![no_main]

use libfuzzer_sys::fuzz_target;
use scalesym::io::parse_relative_equilibrium;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(doc) = parse_relative_equilibrium(text) {
        let json = doc.to_json().expect("parsed document serializes");
        let again = parse_relative_equilibrium(&json).expect("serialized document reparses");
        assert_eq!(again.equilibrium, doc.equilibrium);
        let z = doc.equilibrium.phase_point();
        assert_eq!(z.dim(), doc.system.config_dim());
    }
});
