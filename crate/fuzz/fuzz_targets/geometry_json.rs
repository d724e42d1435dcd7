// SPDX-License-Identifier: Apache-2.0
#![no_main]

use libfuzzer_sys::fuzz_target;
use rydberg_mcwf::lattice::GeometryFile;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(file) = GeometryFile::from_json(text) {
        let _ = file.to_geometry();
    }
});
