#![no_main]

use std::path::Path;

use leibenson_core::config::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = RunConfig::from_toml_str(text, Path::new(".")) {
        // Anything that parses must survive a manifest round trip.
        let again = cfg.to_toml().expect("serializable");
        RunConfig::from_toml_str(&again, Path::new(".")).expect("manifest reloads");
    }
});
