#![no_main]
use libfuzzer_sys::fuzz_target;
use ynls::io::{read_state_csv, write_state_csv, StateMeta};

// First line is the JSON sidecar, the rest is the coefficient CSV.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let (head, body) = text.split_once('\n').unwrap_or((text, ""));
    let Ok(meta) = StateMeta::from_json(head) else { return };
    if (2 * meta.n_max + 1).pow(meta.d as u32) > 1 << 16 {
        return;
    }
    if let Ok(state) = read_state_csv(body.as_bytes(), meta) {
        let mut out = Vec::new();
        write_state_csv(&state, &mut out).unwrap();
        let again = read_state_csv(out.as_slice(), meta).unwrap();
        assert_eq!(state.coeffs().len(), again.coeffs().len());
    }
});
