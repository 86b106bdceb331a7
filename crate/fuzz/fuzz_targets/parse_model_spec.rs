#![no_main]

use libfuzzer_sys::fuzz_target;

// Model documents are attacker-ish input: arbitrary JSON must either parse
// into a validated spec or fail cleanly; state-space caps guard the sizes.
fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(spec) = cutofflab::parse_model_spec(text) {
            let _ = cutofflab::reference_values(&spec);
        }
    }
});
