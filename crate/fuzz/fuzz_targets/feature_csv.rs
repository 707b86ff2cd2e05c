#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = entropy_lab::envs::parse_feature_csv(text, None);
        let _ = entropy_lab::envs::parse_feature_csv(text, Some(20));
    }
});
