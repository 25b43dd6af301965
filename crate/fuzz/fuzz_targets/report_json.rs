//! JSON reports written by the command-line tool. The first byte picks the
//! record type; anything that parses must serialize and parse again.

#![no_main]

use ddbubble::io::{read_json, BesselSummary, IidSummary};
use ddbubble::kernels::BubbleVerdict;
use ddbubble::montecarlo::DrawdownEstimate;
use ddbubble::volterra::SolveReport;
use libfuzzer_sys::fuzz_target;
use serde::de::DeserializeOwned;
use serde::Serialize;

fn round_trip<T: Serialize + DeserializeOwned>(json: &[u8]) {
    let Ok(value) = read_json::<T, _>(json) else {
        return;
    };
    let written = serde_json::to_vec(&value).expect("parsed report serializes");
    read_json::<T, _>(written.as_slice()).expect("written report parses");
}

fuzz_target!(|data: &[u8]| {
    let Some((&kind, json)) = data.split_first() else {
        return;
    };
    match kind % 5 {
        0 => round_trip::<SolveReport>(json),
        1 => round_trip::<BubbleVerdict>(json),
        2 => round_trip::<Vec<DrawdownEstimate>>(json),
        3 => round_trip::<IidSummary>(json),
        _ => round_trip::<BesselSummary>(json),
    }
});
