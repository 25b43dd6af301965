//! User kernel tables: a table that loads must give a kernel whose
//! diagnostics evaluate without panicking.

#![no_main]

use ddbubble::kernels::{probability_down, relative_recovery, TabulatedUpper};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(table) = TabulatedUpper::from_csv_reader(data) else {
        return;
    };
    let kernel = table.kernel();
    for x in [1e-3, 0.5, 1.0, 2.0, 1e3] {
        if let Ok(a) = probability_down(&kernel, x) {
            assert!((0.0..=1.0).contains(&a));
        }
        let _ = relative_recovery(&kernel, x, 0.5);
    }
});
