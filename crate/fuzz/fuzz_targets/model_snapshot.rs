#![no_main]
use libfuzzer_sys::fuzz_target;
use phyauth::gmm::GmmModel;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(model) = GmmModel::from_json(text) else {
        return;
    };
    let json = model.to_json().expect("valid model serializes");
    assert_eq!(GmmModel::from_json(&json).expect("own output parses"), model);
});
