#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = cointrack::mask::label_image_from_png_bytes(data);
});
