//! Flat TOML config parsing and resolution. A config that resolves must
//! resolve to the same experiment after being flattened and re-parsed.
#![no_main]
use libfuzzer_sys::fuzz_target;
use phyauth::config::FlatConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(flat) = FlatConfig::from_toml_str(text) else {
        return;
    };
    let Ok(config) = flat.resolve(None) else {
        return;
    };
    let echoed = FlatConfig::from_experiment(&config)
        .to_toml_string()
        .expect("resolved config serializes");
    let again = FlatConfig::from_toml_str(&echoed)
        .and_then(|f| f.resolve(None))
        .expect("echoed config resolves");
    assert_eq!(again, config);
});
