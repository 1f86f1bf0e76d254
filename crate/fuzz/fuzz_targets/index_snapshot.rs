#![no_main]

use libfuzzer_sys::fuzz_target;

// Framing: u32 LE header length, the JSON sidecar header, then the binary
// body.
fuzz_target!(|data: &[u8]| {
    if data.len() < 4 {
        return;
    }
    let n = u32::from_le_bytes([data[0], data[1], data[2], data[3]]) as usize;
    let rest = &data[4..];
    if n > rest.len() {
        return;
    }
    let (header, body) = rest.split_at(n);
    let _ = cointrack::segmenter::ExampleIndex::from_snapshot_bytes(header, body);
});
