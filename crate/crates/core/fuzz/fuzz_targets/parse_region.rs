#![no_main]

use libfuzzer_sys::fuzz_target;
use perturbed_heights::formats::{parse_region, write_region};

fuzz_target!(|data: &str| {
    // Accepted regions must survive a write/parse round trip unchanged.
    if let Ok(region) = parse_region(data) {
        let text = write_region(&region);
        let again = parse_region(&text).expect("written region parses");
        assert_eq!(again.vertices(), region.vertices());
    }
});
