#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = entropy_lab::envs::parse_idx_labels(data);
});
