#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&n, rest)) = data.split_first() else { return };
    let len = (n % 8) as usize + 2;
    let grid: Vec<f64> = (0..len).map(|i| i as f64 / (len - 1) as f64).collect();
    let _ = ynls::io::read_table_csv(rest, &grid);
});
