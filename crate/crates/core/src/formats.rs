//! Line-oriented text formats shared with the command line.
//!
//! All formats ignore blank lines and anything after `#`. Line numbers in
//! errors are 1-based and refer to the original input.
//!
//! * Region: first line `m`, then one vertex per line (`m` integers).
//! * Heights: first line `m`, then one line per vertex: `m` coordinates and
//!   the height.
//! * Grid: first line `2 rows cols`, then `rows` lines of `cols` integers.
//!   Row `r` holds the vertices `(r, 0), ..., (r, cols - 1)` of the box
//!   `[0, rows - 1] x [0, cols - 1]`, so the rows follow the region order.
//! * Run configuration: `key = value` lines; lists are comma-separated.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::heights::HeightFunction;
use crate::lattice::{Region, Vertex};
use crate::potential::ModelKind;

/// Largest dimension accepted by the parsers.
pub const MAX_DIMENSION: usize = 64;

fn parse_error(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

/// Non-empty lines with comments stripped, paired with their line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let line = raw.split('#').next().unwrap_or("").trim();
        (!line.is_empty()).then_some((i + 1, line))
    })
}

fn integers(line_no: usize, line: &str) -> Result<Vec<i64>> {
    line.split_whitespace().map(|tok| tok.parse::<i64>().map_err(|_| parse_error(line_no, format!("`{tok}` is not an integer")))).collect()
}

fn header<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>, what: &str) -> Result<usize> {
    let (no, line) = lines.next().ok_or_else(|| parse_error(0, format!("empty {what} file")))?;
    let m = match integers(no, line)?.as_slice() {
        [m] => *m,
        _ => return Err(parse_error(no, "the first line must hold the dimension m alone")),
    };
    if m < 1 || m as usize > MAX_DIMENSION {
        return Err(parse_error(no, format!("dimension {m} outside 1..={MAX_DIMENSION}")));
    }
    Ok(m as usize)
}

pub fn parse_region(text: &str) -> Result<Region> {
    let mut lines = content_lines(text);
    let m = header(&mut lines, "region")?;
    let mut vertices = Vec::new();
    for (no, line) in lines {
        let coords = integers(no, line)?;
        if coords.len() != m {
            return Err(parse_error(no, format!("expected {m} coordinates, found {}", coords.len())));
        }
        vertices.push(Vertex::new(coords));
    }
    Region::new(m, vertices)
}

pub fn write_region(region: &Region) -> String {
    let mut out = format!("{}\n", region.dim());
    for v in region.vertices() {
        out.push_str(&join(v.coords()));
        out.push('\n');
    }
    out
}

/// Parses height data; parity and the Lipschitz condition are not checked
/// here, only the syntax and duplicate vertices.
pub fn parse_heights(text: &str) -> Result<HeightFunction> {
    let mut lines = content_lines(text);
    let m = header(&mut lines, "height")?;
    let mut h = HeightFunction::new();
    for (no, line) in lines {
        let mut values = integers(no, line)?;
        if values.len() != m + 1 {
            return Err(parse_error(no, format!("expected {m} coordinates and a height, found {} numbers", values.len())));
        }
        let height = values.pop().expect("m + 1 values");
        let v = Vertex::new(values);
        if h.insert(v.clone(), height).is_some() {
            return Err(parse_error(no, format!("vertex {v} appears twice")));
        }
    }
    if h.is_empty() {
        return Err(parse_error(0, "height file lists no vertices"));
    }
    Ok(h)
}

pub fn write_heights(h: &HeightFunction) -> Result<String> {
    let m = h.domain().next().map(Vertex::dim).ok_or(Error::EmptyRegion)?;
    let mut out = format!("{m}\n");
    for (v, z) in h.iter() {
        let _ = writeln!(out, "{} {z}", join(v.coords()));
    }
    Ok(out)
}

/// A rectangular array of heights on `[0, rows - 1] x [0, cols - 1]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Grid {
    pub rows: usize,
    pub cols: usize,
    /// Row-major values.
    pub values: Vec<i64>,
}

impl Grid {
    /// The grid of a dense height vector on the box `[0, rows-1] x [0, cols-1]`.
    pub fn from_dense(region: &Region, values: &[i64]) -> Result<Grid> {
        let (lows, highs) = region.box_bounds().ok_or_else(|| Error::Unsupported("grids need a box region".into()))?;
        if lows.len() != 2 || lows.iter().any(|&l| l != 0) {
            return Err(Error::Unsupported("grids need a 2D box with lowest corner at the origin".into()));
        }
        if values.len() != region.len() {
            return Err(Error::DimensionMismatch { expected: region.len(), found: values.len() });
        }
        Ok(Grid { rows: highs[0] as usize + 1, cols: highs[1] as usize + 1, values: values.to_vec() })
    }

    pub fn get(&self, r: usize, c: usize) -> Option<i64> {
        (r < self.rows && c < self.cols).then(|| self.values[r * self.cols + c])
    }

    pub fn row(&self, r: usize) -> &[i64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    /// Heights keyed by vertex `(r, c)`.
    pub fn to_height_function(&self) -> HeightFunction {
        (0..self.rows)
            .flat_map(|r| (0..self.cols).map(move |c| (r, c)))
            .map(|(r, c)| (Vertex::from([r as i64, c as i64]), self.values[r * self.cols + c]))
            .collect()
    }
}

pub fn parse_grid(text: &str) -> Result<Grid> {
    let mut lines = content_lines(text);
    let (no, first) = lines.next().ok_or_else(|| parse_error(0, "empty grid file"))?;
    let (rows, cols) = match integers(no, first)?.as_slice() {
        [2, r, c] if *r >= 1 && *c >= 1 => (*r as usize, *c as usize),
        _ => return Err(parse_error(no, "the first line must be `2 rows cols` with positive sizes")),
    };
    let mut values = Vec::new();
    let mut seen = 0;
    for (no, line) in lines {
        if seen == rows {
            return Err(parse_error(no, format!("more than {rows} rows")));
        }
        let row = integers(no, line)?;
        if row.len() != cols {
            return Err(parse_error(no, format!("expected {cols} values, found {}", row.len())));
        }
        values.extend(row);
        seen += 1;
    }
    if seen != rows {
        return Err(parse_error(0, format!("expected {rows} rows, found {seen}")));
    }
    Ok(Grid { rows, cols, values })
}

pub fn write_grid(grid: &Grid) -> String {
    let mut out = format!("2 {} {}\n", grid.rows, grid.cols);
    for r in 0..grid.rows {
        out.push_str(&join(grid.row(r)));
        out.push('\n');
    }
    out
}

/// `zero`, `uniform:b=<float>` or `twopoint:a=<float>`.
pub fn parse_model(text: &str) -> Result<ModelKind> {
    ModelKind::from_str(text)
}

fn join(xs: &[i64]) -> String {
    xs.iter().map(i64::to_string).collect::<Vec<_>>().join(" ")
}

/// Keys understood by [`RunConfig`].
pub const CONFIG_KEYS: &[&str] = &[
    "A",
    "boundary",
    "boundary_file",
    "burn_in",
    "c",
    "draws",
    "mean_draws",
    "mean_samples",
    "mode",
    "model",
    "out",
    "pairs",
    "region_file",
    "samples",
    "seed",
    "sizes",
    "steps",
    "tail_draws",
    "tail_samples",
    "thin_sweeps",
];

/// Key-value run settings. Keys are unique and kept sorted, so
/// serialization is canonical.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RunConfig {
    entries: BTreeMap<String, String>,
}

fn check_value(line: usize, key: &str, value: &str) -> Result<()> {
    if value.is_empty() {
        return Err(parse_error(line, format!("`{key}` has an empty value")));
    }
    if value.contains(['#', '\n', '\r']) || value.trim() != value {
        return Err(parse_error(line, format!("value of `{key}` contains a comment, newline or surrounding space")));
    }
    Ok(())
}

impl RunConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::new();
        for (no, line) in content_lines(text) {
            let (key, value) = line.split_once('=').ok_or_else(|| parse_error(no, "expected `key = value`"))?;
            let (key, value) = (key.trim(), value.trim());
            if !CONFIG_KEYS.contains(&key) {
                return Err(parse_error(no, format!("unknown key `{key}`")));
            }
            check_value(no, key, value)?;
            if cfg.entries.insert(key.to_string(), value.to_string()).is_some() {
                return Err(parse_error(no, format!("key `{key}` is set twice")));
            }
        }
        Ok(cfg)
    }

    pub fn serialize(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Sets a key, replacing any previous value.
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        let value = value.into();
        if !CONFIG_KEYS.contains(&key) {
            return Err(parse_error(0, format!("unknown key `{key}`")));
        }
        check_value(0, key, &value)?;
        self.entries.insert(key.to_string(), value);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Typed value of `key`, if present.
    pub fn get_parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key).map(|v| v.parse::<T>().map_err(|_| parse_error(0, format!("cannot parse `{key} = {v}`")))).transpose()
    }

    /// Comma-separated list value of `key`, if present.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(|item| item.trim().parse::<T>().map_err(|_| parse_error(0, format!("cannot parse item `{item}` of `{key}`"))))
                    .collect()
            })
            .transpose()
    }
}
