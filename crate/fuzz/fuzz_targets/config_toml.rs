//! Run configurations: parsing must not panic, and anything accepted must
//! survive a write and re-read.

#![no_main]

use ddbubble::config::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(config) = RunConfig::from_toml_str(text) else {
        return;
    };
    let written = config.to_toml_string().expect("accepted config serializes");
    let back = RunConfig::from_toml_str(&written).expect("written config parses");
    // NaN fields compare unequal to themselves.
    if config == config {
        assert_eq!(back, config);
    }
});
