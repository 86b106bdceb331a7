#![no_main]

use libfuzzer_sys::fuzz_target;

// Config documents drive the CLI; parsing must classify every input as a
// valid run configuration or a clean input error.
fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = cutofflab_cli::parse_config(text);
    }
});
