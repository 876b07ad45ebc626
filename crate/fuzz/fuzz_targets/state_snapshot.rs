#![no_main]
use libfuzzer_sys::fuzz_target;
use phyauth::auth::AuthenticatorState;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(state) = AuthenticatorState::from_json(text) else {
        return;
    };
    let json = state.to_json().expect("valid state serializes");
    assert_eq!(AuthenticatorState::from_json(&json).expect("own output parses"), state);
});
