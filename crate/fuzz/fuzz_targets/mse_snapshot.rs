#![no_main]
use libfuzzer_sys::fuzz_target;
use phyauth::baseline::MseDetector;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(det) = MseDetector::from_json(text) else {
        return;
    };
    let json = det.to_json().expect("valid detector serializes");
    assert_eq!(MseDetector::from_json(&json).expect("own output parses"), det);
});
