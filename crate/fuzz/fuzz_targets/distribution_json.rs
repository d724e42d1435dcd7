// SPDX-License-Identifier: Apache-2.0
#![no_main]

use libfuzzer_sys::fuzz_target;
use rydberg_mcwf::observables::{ConfigurationDistribution, ExcitationDistribution};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(p) = ExcitationDistribution::from_json(text) {
        let _ = p.mandel_q();
    }
    if let Ok(p) = ConfigurationDistribution::from_json(text) {
        let _ = p.marginal(4);
    }
});
