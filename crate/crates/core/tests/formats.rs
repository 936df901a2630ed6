//! Round trips and rejections for the text formats.

use perturbed_heights::formats::{
    parse_grid, parse_heights, parse_model, parse_region, write_grid, write_heights, write_region, Grid, RunConfig,
};
use perturbed_heights::{Error, HeightFunction, ModelKind, Region, Vertex};
use proptest::prelude::*;

/// A connected region grown from the origin: each step adds a lattice
/// neighbour of an already chosen vertex.
fn grown(dim: usize, steps: Vec<(usize, usize)>) -> Vec<Vec<i64>> {
    let mut cells = vec![vec![0i64; dim]];
    for (pick, dir) in steps {
        let mut v = cells[pick % cells.len()].clone();
        v[dir % dim] += if (dir / dim).is_multiple_of(2) { 1 } else { -1 };
        if !cells.contains(&v) {
            cells.push(v);
        }
    }
    cells
}

fn vertex_set(dim: usize) -> impl Strategy<Value = Vec<Vec<i64>>> {
    proptest::collection::vec((any::<usize>(), 0usize..2 * dim), 0..20).prop_map(move |steps| grown(dim, steps))
}

proptest! {
    #[test]
    fn region_round_trip(coords in (1usize..4).prop_flat_map(vertex_set)) {
        let dim = coords[0].len();
        let region = Region::new(dim, coords.into_iter().map(Vertex::new)).unwrap();
        let text = write_region(&region);
        let back = parse_region(&text).unwrap();
        prop_assert_eq!(back.vertices(), region.vertices());
        prop_assert_eq!(write_region(&back), text);
    }

    #[test]
    fn heights_round_trip(coords in (1usize..4).prop_flat_map(vertex_set), values in proptest::collection::vec(-1000i64..1000, 20)) {
        let h: HeightFunction = coords.into_iter().map(Vertex::new).zip(values).collect();
        let text = write_heights(&h).unwrap();
        prop_assert_eq!(parse_heights(&text).unwrap(), h);
    }

    #[test]
    fn grid_round_trip(rows in 1usize..8, cols in 1usize..8, seed in proptest::collection::vec(-99i64..99, 64)) {
        let grid = Grid { rows, cols, values: seed[..rows * cols].to_vec() };
        let back = parse_grid(&write_grid(&grid)).unwrap();
        prop_assert_eq!(&back, &grid);
        let region = Region::make_box(&[0, 0], &[rows as i64 - 1, cols as i64 - 1]).unwrap();
        let dense = back.to_height_function().to_dense(&region).unwrap();
        prop_assert_eq!(Grid::from_dense(&region, &dense).unwrap(), grid);
    }

    #[test]
    fn config_round_trip(seed in any::<u64>(), samples in 1u64..1_000_000, c in proptest::collection::vec(0.01f64..10.0, 1..5)) {
        let mut cfg = RunConfig::new();
        cfg.set("seed", seed.to_string()).unwrap();
        cfg.set("samples", samples.to_string()).unwrap();
        cfg.set("c", c.iter().map(f64::to_string).collect::<Vec<_>>().join(",")).unwrap();
        cfg.set("model", "twopoint:a=0.5").unwrap();
        let back = RunConfig::parse(&cfg.serialize()).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.get_parsed::<u64>("seed").unwrap(), Some(seed));
        prop_assert_eq!(back.get_list::<f64>("c").unwrap(), Some(c));
    }

    #[test]
    fn parsers_never_panic(text in "[0-9 #=a-z:.,\\-\n]{0,200}") {
        let _ = parse_region(&text);
        let _ = parse_heights(&text);
        let _ = parse_grid(&text);
        let _ = parse_model(&text);
        let _ = RunConfig::parse(&text);
    }
}

#[test]
fn comments_and_blank_lines_are_ignored() {
    let region = parse_region("# a path\n1\n\n0 # first\n1\n").unwrap();
    assert_eq!(region.len(), 2);
    let h = parse_heights("2\n0 1 1\n2 1 5  # far end\n").unwrap();
    assert_eq!(h.get(&Vertex::new(vec![2, 1])), Some(5));
}

#[test]
fn malformed_inputs_report_lines() {
    let line_of = |e: Error| match e {
        Error::Parse { line, .. } => line,
        other => panic!("expected a parse error, got {other}"),
    };
    assert_eq!(line_of(parse_region("2\n0 0\n0\n").unwrap_err()), 3);
    assert_eq!(line_of(parse_heights("1\n0 0\n0 2\n").unwrap_err()), 3);
    assert_eq!(line_of(parse_heights("1\n0 x\n").unwrap_err()), 2);
    assert_eq!(line_of(parse_grid("2 2 2\n0 1\n").unwrap_err()), 0);
    assert_eq!(line_of(parse_grid("2 1 2\n0 1\n1 0\n").unwrap_err()), 3);
    assert_eq!(line_of(RunConfig::parse("seed = 1\nseed = 2\n").unwrap_err()), 2);
    assert_eq!(line_of(RunConfig::parse("colour = red\n").unwrap_err()), 1);
    assert_eq!(line_of(RunConfig::parse("seed 1\n").unwrap_err()), 1);
    assert!(parse_region("0\n").is_err());
    assert!(parse_region("").is_err());
}

#[test]
fn model_strings() {
    assert_eq!(parse_model("zero").unwrap(), ModelKind::Zero);
    assert_eq!(parse_model("uniform:b=0.5").unwrap(), ModelKind::Uniform { halfwidth: 0.5 });
    assert_eq!(parse_model(" twopoint:a=1 ").unwrap(), ModelKind::TwoPoint { magnitude: 1.0 });
    for bad in ["", "uniform", "uniform:b=-1", "twopoint:b=1", "twopoint:a=nan", "gauss:s=1"] {
        assert!(parse_model(bad).is_err(), "{bad}");
    }
    for kind in [ModelKind::Zero, ModelKind::Uniform { halfwidth: 2.5 }, ModelKind::TwoPoint { magnitude: 0.01 }] {
        assert_eq!(parse_model(&kind.to_string()).unwrap(), kind);
    }
}

#[test]
fn fuzz_seeds_are_accepted() {
    let corpus = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fuzz/corpus");
    let mut seen = 0;
    for (target, accepts) in [
        ("parse_region", (|t: &str| parse_region(t).is_ok()) as fn(&str) -> bool),
        ("parse_heights", |t| parse_heights(t).is_ok()),
        ("parse_grid", |t| parse_grid(t).is_ok()),
        ("parse_config", |t| RunConfig::parse(t).is_ok()),
        ("parse_model", |t| parse_model(t).is_ok()),
    ] {
        for entry in std::fs::read_dir(corpus.join(target)).unwrap() {
            let path = entry.unwrap().path();
            let text = std::fs::read_to_string(&path).unwrap();
            assert!(accepts(&text), "{}", path.display());
            seen += 1;
        }
    }
    assert!(seen >= 10);
}
