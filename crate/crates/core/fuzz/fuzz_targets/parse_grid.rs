#![no_main]

use libfuzzer_sys::fuzz_target;
use perturbed_heights::formats::{parse_grid, write_grid};

fuzz_target!(|data: &str| {
    if let Ok(grid) = parse_grid(data) {
        assert_eq!(grid.values.len(), grid.rows * grid.cols);
        assert_eq!(parse_grid(&write_grid(&grid)).expect("written grid parses"), grid);
        assert_eq!(grid.to_height_function().len(), grid.values.len());
    }
});
