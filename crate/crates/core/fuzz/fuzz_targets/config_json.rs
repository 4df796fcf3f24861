#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = ynls::cli::ExperimentConfig::from_json(text) {
            if cfg.steps.unwrap_or(0) <= 1 << 16 {
                let _ = cfg.solver_config(None, None);
            }
        }
    }
});
