#![no_main]

use libfuzzer_sys::fuzz_target;
use scalesym::io::{parse_trajectory_csv, trajectory_to_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(traj) = parse_trajectory_csv(text) {
        assert!(traj.times.windows(2).all(|w| w[0] < w[1]));
        let csv = trajectory_to_csv(&traj).expect("parsed trajectory serializes");
        let again = parse_trajectory_csv(&csv).expect("serialized trajectory reparses");
        assert_eq!(again.times, traj.times);
        assert_eq!(again.states, traj.states);
    }
});
