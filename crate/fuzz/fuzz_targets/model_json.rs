#![no_main]

use helio_core::model::TrainedModel;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(model) = TrainedModel::from_json(text) {
        let again = TrainedModel::from_json(&model.to_json()).expect("re-encoded model parses");
        assert_eq!(again.to_json(), model.to_json());
    }
});
