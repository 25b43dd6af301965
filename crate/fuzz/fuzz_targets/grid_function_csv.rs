//! Grid functions read from `x,M,ratio` tables, under both continuation
//! shapes.

#![no_main]

use ddbubble::volterra::{GridFunction, Shape};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    for shape in [Shape::RatioLinear, Shape::GapLinear] {
        let Ok(m) = GridFunction::read_csv(data, shape) else {
            continue;
        };
        for x in [0.0, 1e-3, 1.0, 1e3, f64::MAX] {
            let _ = m.eval(x);
        }
        let mut buf = Vec::new();
        m.write_csv(&mut buf).expect("grid function writes");
        GridFunction::read_csv(buf.as_slice(), shape).expect("written grid function reads");
    }
});
