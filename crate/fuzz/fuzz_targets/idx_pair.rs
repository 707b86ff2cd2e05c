#![no_main]

use libfuzzer_sys::fuzz_target;

// Splits the input into an image stream and a label stream (first two bytes
// give the image-stream length) and exercises the paired loader, including
// its count cross-check.
fuzz_target!(|data: &[u8]| {
    if data.len() < 2 {
        return;
    }
    let split = u16::from_be_bytes([data[0], data[1]]) as usize;
    let rest = &data[2..];
    if split > rest.len() {
        return;
    }
    let (images, labels) = rest.split_at(split);
    let _ = entropy_lab::envs::load_idx(images, labels);
});
