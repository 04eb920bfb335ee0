#![no_main]

use leibenson_core::WarpingTable;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(table) = WarpingTable::parse(text) {
        let top = table.r_max();
        for k in 0..=16 {
            let v = table.eval(top * k as f64 / 16.0);
            assert!(v.is_finite());
        }
    }
});
