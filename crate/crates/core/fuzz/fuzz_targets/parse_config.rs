#![no_main]

use libfuzzer_sys::fuzz_target;
use perturbed_heights::formats::RunConfig;

fuzz_target!(|data: &str| {
    if let Ok(cfg) = RunConfig::parse(data) {
        let again = RunConfig::parse(&cfg.serialize()).expect("serialized config parses");
        assert_eq!(again, cfg);
        for key in cfg.keys() {
            let _ = cfg.get_list::<f64>(key);
            let _ = cfg.get_parsed::<u64>(key);
        }
    }
});
