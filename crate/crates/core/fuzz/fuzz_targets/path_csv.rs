#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(path) = ynls::io::read_path_csv(data) {
        let mut out = Vec::new();
        ynls::io::write_path_csv(&path, &mut out).unwrap();
        let again = ynls::io::read_path_csv(out.as_slice()).unwrap();
        assert_eq!(path.t_grid(), again.t_grid());
    }
});
