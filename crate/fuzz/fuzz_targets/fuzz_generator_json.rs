//! Fuzz the point-description JSON decoder: arbitrary JSON must either
//! fail cleanly or produce a window whose coordinates can be queried
//! without panicking.

#![no_main]

use libfuzzer_sys::fuzz_target;
use veechlab::subshift::PointWindow;

fuzz_target!(|data: &[u8]| {
    if let Ok(pt) = serde_json::from_slice::<PointWindow>(data) {
        for i in [-3i64, 0, 5] {
            let _ = pt.coord(i);
        }
        let _ = serde_json::to_string(&pt);
    }
});
