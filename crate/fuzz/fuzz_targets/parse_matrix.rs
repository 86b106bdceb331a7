#![no_main]

use libfuzzer_sys::fuzz_target;

// The triplet parser must reject malformed text with an error, never panic
// or accept a matrix violating the row-sum and irreducibility contracts.
fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(matrix) = cutofflab::TransitionMatrix::parse(text) {
            let _ = cutofflab::build_chain(matrix);
        }
    }
});
