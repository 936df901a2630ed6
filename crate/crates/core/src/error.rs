use thiserror::Error;

use crate::lattice::Vertex;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("box is inverted along axis {axis}")]
    InvertedBox { axis: usize },
    #[error("region is empty")]
    EmptyRegion,
    #[error("region is not connected")]
    Disconnected,
    #[error("vertex {0} is not in the region")]
    VertexNotInRegion(Vertex),
    #[error("no height assigned to vertex {0}")]
    MissingHeight(Vertex),
    #[error("height {height} at {vertex} has the wrong parity")]
    ParityViolation { vertex: Vertex, height: i64 },
    #[error("adjacent vertices {a} and {b} have heights {ha} and {hb}")]
    LipschitzViolation { a: Vertex, b: Vertex, ha: i64, hb: i64 },
    #[error("pinned set is empty; the extension set would be infinite")]
    NothingPinned,
    #[error("boundary data admits no extension: |h({x}) - h({y})| = {diff} > d_R = {dist}")]
    NotExtendable { x: Vertex, y: Vertex, diff: i64, dist: u32 },
    #[error("extension set exceeds the cap of {cap} members")]
    TooManyExtensions { cap: usize },
    #[error("{0}")]
    Unsupported(String),
    #[error("invalid potential model: {0}")]
    InvalidModel(String),
    #[error("potential window [{lo}, {hi}] is empty")]
    EmptyWindow { lo: i64, hi: i64 },
    #[error("potential window [{have_lo}, {have_hi}] does not cover edges [{need_lo}, {need_hi}]")]
    WindowTooSmall { have_lo: i64, have_hi: i64, need_lo: i64, need_hi: i64 },
    #[error("shift {0} is odd; only even shifts preserve parity classes")]
    OddShift(i64),
    #[error("window of {len} edges exceeds the exact-enumeration cap of {cap}")]
    WindowTooLarge { len: usize, cap: usize },
    #[error("exact annealing requires a finite-support model")]
    ExactNeedsFiniteModel,
    #[error("empty set of height functions; the partition function is undefined")]
    EmptySupport,
    #[error("boundary data are not pointwise ordered at {0}")]
    Unordered(Vertex),
    #[error("support product {pairs} exceeds the cap of {cap} pairs")]
    TooManyPairs { pairs: usize, cap: usize },
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}
