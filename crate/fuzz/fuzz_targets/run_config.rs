#![no_main]

use libfuzzer_sys::fuzz_target;

// The JSON decode layer only; path resolution and file checks happen later
// in RunConfig::from_json and involve the filesystem.
fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _: Result<entropy_lab::config::RunConfig, _> = serde_json::from_str(text);
    }
});
