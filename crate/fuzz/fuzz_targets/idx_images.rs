#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    // Arbitrary bytes must produce Ok or a format error, never a panic.
    let _ = entropy_lab::envs::parse_idx_images(data);
});
