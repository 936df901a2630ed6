#![no_main]

use libfuzzer_sys::fuzz_target;
use perturbed_heights::formats::{parse_heights, write_heights};

fuzz_target!(|data: &str| {
    if let Ok(h) = parse_heights(data) {
        let text = write_heights(&h).expect("parsed heights are nonempty");
        assert_eq!(parse_heights(&text).expect("written heights parse"), h);
        // Validation may reject the data but must not panic.
        let _ = h.check();
    }
});
