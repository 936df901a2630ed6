#![no_main]

use libfuzzer_sys::fuzz_target;
use perturbed_heights::formats::parse_model;
use perturbed_heights::PotentialModel;

fuzz_target!(|data: &str| {
    if let Ok(kind) = parse_model(data) {
        assert_eq!(parse_model(&kind.to_string()).expect("displayed model parses"), kind);
        let model = PotentialModel::new(kind, 0).expect("parsed models are valid");
        let v = model.value_at(0);
        assert!(v.is_finite());
    }
});
