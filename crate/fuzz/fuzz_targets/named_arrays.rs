#![no_main]

use cworld_core::io::NamedArrays;
use libfuzzer_sys::fuzz_target;

// Input is `manifest \0 blob`.
fuzz_target!(|data: &[u8]| {
    let split = data.iter().position(|&b| b == 0).unwrap_or(data.len());
    let Ok(manifest) = std::str::from_utf8(&data[..split]) else {
        return;
    };
    let blob = data.get(split + 1..).unwrap_or(&[]);
    if let Ok(arrays) = NamedArrays::decode(manifest, blob) {
        let (m, b) = arrays.encode();
        let again = NamedArrays::decode(&m, &b).expect("re-encoded container decodes");
        assert_eq!(again.encode(), (m, b));
    }
});
