// SPDX-License-Identifier: Apache-2.0
#![no_main]

use libfuzzer_sys::fuzz_target;
use rydberg_mcwf::mcwf::TrajectoryCheckpoint;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cp) = TrajectoryCheckpoint::from_json(text) {
        let back = cp.to_json().expect("serializes");
        assert_eq!(TrajectoryCheckpoint::from_json(&back).expect("round trip"), cp);
    }
});
