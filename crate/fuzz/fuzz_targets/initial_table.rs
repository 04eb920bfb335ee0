#![no_main]

use leibenson_core::config::InitialTable;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(table) = InitialTable::parse(text) {
        for k in 0..=16 {
            let v = table.eval(k as f64 * 0.25);
            assert!(v.is_finite() && v >= 0.0);
        }
    }
});
