//! Trace csv decoding: never panics, and anything accepted survives a
//! write/read round trip unchanged.
#![no_main]
use libfuzzer_sys::fuzz_target;
use phyauth::channel::{read_trace, write_trace, TraceFormat};

fuzz_target!(|data: &[u8]| {
    let Ok(records) = read_trace(data, TraceFormat::Csv) else {
        return;
    };
    let mut out = Vec::new();
    write_trace(&mut out, &records, TraceFormat::Csv).expect("accepted trace must serialize");
    let again = read_trace(out.as_slice(), TraceFormat::Csv).expect("written trace must parse");
    assert_eq!(records, again);
});
