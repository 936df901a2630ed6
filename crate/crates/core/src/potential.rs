//! The random potential: real values on the edges of `Z`, the height axis.
//!
//! Edge `e_{k,k+1}` is addressed by its lower endpoint `k` through
//! [`HeightEdge`]. A lattice edge `x ~ y` of a region reads the potential at
//! the height edge `{h(x), h(y)}`, never at the lattice edge itself.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Default cap on the window length for exact enumeration of potentials.
pub const DEFAULT_EXACT_WINDOW_CAP: usize = 16;

/// The edge `e_{k,k+1}` of `Z`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HeightEdge(pub i64);

impl HeightEdge {
    /// The edge joining two adjacent heights; undirected, so argument order
    /// does not matter.
    #[inline]
    pub fn between(a: i64, b: i64) -> Self {
        debug_assert_eq!((a - b).abs(), 1, "heights {a} and {b} are not adjacent");
        HeightEdge(a.min(b))
    }
}

/// A realization of the potential on a finite window of height edges.
#[derive(Clone, Debug, PartialEq)]
pub struct Potential {
    lo: i64,
    values: Vec<f64>,
}

impl Potential {
    /// Values for edges `lo, lo + 1, ...`; all must be finite.
    pub fn from_values(lo: i64, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyWindow { lo, hi: lo - 1 });
        }
        if let Some(bad) = values.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidModel(format!("non-finite potential value {bad}")));
        }
        Ok(Potential { lo, values })
    }

    pub fn zeros(lo: i64, hi: i64) -> Result<Self> {
        if hi < lo {
            return Err(Error::EmptyWindow { lo, hi });
        }
        Ok(Potential { lo, values: vec![0.0; (hi - lo + 1) as usize] })
    }

    /// Inclusive window `[lo, hi]` of edge indices.
    pub fn window(&self) -> (i64, i64) {
        (self.lo, self.lo + self.values.len() as i64 - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, e: HeightEdge) -> Option<f64> {
        let k = e.0.checked_sub(self.lo)?;
        if k < 0 {
            return None;
        }
        self.values.get(k as usize).copied()
    }

    /// Value at an edge known to be inside the window.
    #[inline]
    pub fn at(&self, e: HeightEdge) -> f64 {
        self.values[(e.0 - self.lo) as usize]
    }

    pub fn covers(&self, lo: i64, hi: i64) -> bool {
        let (a, b) = self.window();
        a <= lo && hi <= b
    }

    pub fn require_covers(&self, lo: i64, hi: i64) -> Result<()> {
        if self.covers(lo, hi) {
            Ok(())
        } else {
            let (have_lo, have_hi) = self.window();
            Err(Error::WindowTooSmall { have_lo, have_hi, need_lo: lo, need_hi: hi })
        }
    }

    /// `tau_z`: the result at edge `k` is this potential at `k + z`.
    pub fn shift_even(&self, z: i64) -> Result<Self> {
        if z.rem_euclid(2) != 0 {
            return Err(Error::OddShift(z));
        }
        Ok(Potential { lo: self.lo - z, values: self.values.clone() })
    }

    /// `C_omega = max(1, sup |omega_e|)` over the window.
    pub fn c_omega(&self) -> f64 {
        self.values.iter().fold(1.0f64, |acc, x| acc.max(x.abs()))
    }

    /// Adds a constant to every value.
    pub fn offset(&self, c: f64) -> Self {
        Potential { lo: self.lo, values: self.values.iter().map(|x| x + c).collect() }
    }
}

/// Distribution family of the potential.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ModelKind {
    Zero,
    /// I.i.d. uniform on `[-b, b]`.
    Uniform {
        halfwidth: f64,
    },
    /// I.i.d. `+a` or `-a` with probability one half each.
    TwoPoint {
        magnitude: f64,
    },
}

impl ModelKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ModelKind::Zero => Ok(()),
            ModelKind::Uniform { halfwidth } if halfwidth > 0.0 && halfwidth.is_finite() => Ok(()),
            ModelKind::TwoPoint { magnitude } if magnitude > 0.0 && magnitude.is_finite() => Ok(()),
            ModelKind::Uniform { halfwidth } => Err(Error::InvalidModel(format!("uniform half-width {halfwidth} must be positive"))),
            ModelKind::TwoPoint { magnitude } => Err(Error::InvalidModel(format!("two-point magnitude {magnitude} must be positive"))),
        }
    }

    /// True when the law has finite support, so exact annealing is possible.
    pub fn is_finite_support(&self) -> bool {
        matches!(self, ModelKind::Zero | ModelKind::TwoPoint { .. })
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::Zero => write!(f, "zero"),
            ModelKind::Uniform { halfwidth } => write!(f, "uniform:b={halfwidth}"),
            ModelKind::TwoPoint { magnitude } => write!(f, "twopoint:a={magnitude}"),
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    /// `zero`, `uniform:b=<float>` or `twopoint:a=<float>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let param = |rest: &str, key: &str| -> Result<f64> {
            let value = rest
                .strip_prefix(key)
                .and_then(|r| r.strip_prefix('='))
                .ok_or_else(|| Error::InvalidModel(format!("expected `{key}=<float>` in `{s}`")))?;
            value.trim().parse::<f64>().map_err(|e| Error::InvalidModel(format!("`{value}`: {e}")))
        };
        let kind = match s.split_once(':') {
            None if s == "zero" => ModelKind::Zero,
            Some(("uniform", rest)) => ModelKind::Uniform { halfwidth: param(rest, "b")? },
            Some(("twopoint", rest)) => ModelKind::TwoPoint { magnitude: param(rest, "a")? },
            _ => return Err(Error::InvalidModel(format!("unknown model `{s}`"))),
        };
        kind.validate()?;
        Ok(kind)
    }
}

/// A model together with the seed that fixes one realization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PotentialModel {
    pub kind: ModelKind,
    pub seed: u64,
}

impl PotentialModel {
    pub fn new(kind: ModelKind, seed: u64) -> Result<Self> {
        kind.validate()?;
        Ok(PotentialModel { kind, seed })
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        PotentialModel { kind: self.kind, seed }
    }

    /// The value at edge `k`, a pure function of `(seed, k)`.
    pub fn value_at(&self, k: i64) -> f64 {
        match self.kind {
            ModelKind::Zero => 0.0,
            ModelKind::Uniform { halfwidth } => edge_rng(self.seed, k).gen_range(-halfwidth..=halfwidth),
            ModelKind::TwoPoint { magnitude } => {
                if edge_rng(self.seed, k).gen::<bool>() {
                    magnitude
                } else {
                    -magnitude
                }
            }
        }
    }
}

/// Random access into the seed's keystream: each edge owns four words.
fn edge_rng(seed: u64, k: i64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slot = (k as i128 - i64::MIN as i128) as u128;
    rng.set_word_pos(slot * 4);
    rng
}

/// One realization of `model` on the edges `[lo, hi]`.
pub fn sample_potential(model: &PotentialModel, lo: i64, hi: i64) -> Result<Potential> {
    model.kind.validate()?;
    if hi < lo {
        return Err(Error::EmptyWindow { lo, hi });
    }
    Ok(Potential { lo, values: (lo..=hi).map(|k| model.value_at(k)).collect() })
}

/// Every sign pattern of a two-point model on `[lo, hi]` with its
/// probability `2^-W`. The first entry is all `-a`; the lowest edge is the
/// most significant position.
pub fn enumerate_potentials(kind: &ModelKind, lo: i64, hi: i64, cap: usize) -> Result<Vec<(Potential, f64)>> {
    if hi < lo {
        return Err(Error::EmptyWindow { lo, hi });
    }
    let len = (hi - lo + 1) as usize;
    match *kind {
        ModelKind::Zero => Ok(vec![(Potential::zeros(lo, hi)?, 1.0)]),
        ModelKind::TwoPoint { magnitude } => {
            kind.validate()?;
            if len > cap || len >= 63 {
                return Err(Error::WindowTooLarge { len, cap });
            }
            let count = 1u64 << len;
            let prob = 1.0 / count as f64;
            Ok((0..count)
                .map(|pattern| {
                    let values = (0..len).map(|j| if pattern >> (len - 1 - j) & 1 == 1 { magnitude } else { -magnitude }).collect();
                    (Potential { lo, values }, prob)
                })
                .collect())
        }
        ModelKind::Uniform { .. } => Err(Error::ExactNeedsFiniteModel),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_model() {
        let m = PotentialModel::new(ModelKind::Zero, 3).unwrap();
        let p = sample_potential(&m, -3, 3).unwrap();
        assert_eq!(p.window(), (-3, 3));
        assert!(p.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn two_point_support() {
        let m = PotentialModel::new(ModelKind::TwoPoint { magnitude: 1.0 }, 11).unwrap();
        let p = sample_potential(&m, -50, 50).unwrap();
        assert!(p.values().iter().all(|x| [1.0, -1.0].contains(x)));
        assert!(p.values().contains(&1.0));
        assert!(p.values().contains(&-1.0));
    }

    #[test]
    fn uniform_mean_is_near_zero() {
        let m = PotentialModel::new(ModelKind::Uniform { halfwidth: 2.0 }, 5).unwrap();
        let p = sample_potential(&m, 0, 99_999).unwrap();
        let mean = p.values().iter().sum::<f64>() / p.len() as f64;
        // Law of large numbers: sd of the mean is 2/sqrt(3e5) ~ 0.0037.
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!(p.values().iter().all(|x| x.abs() <= 2.0));
    }

    #[test]
    fn windows_extend_consistently() {
        let m = PotentialModel::new(ModelKind::Uniform { halfwidth: 1.0 }, 9).unwrap();
        let small = sample_potential(&m, 0, 5).unwrap();
        let big = sample_potential(&m, -4, 12).unwrap();
        for k in 0..=5 {
            assert_eq!(small.get(HeightEdge(k)), big.get(HeightEdge(k)));
        }
        assert_eq!(sample_potential(&m, -4, 12).unwrap(), big);
    }

    #[test]
    fn invalid_models() {
        assert!(PotentialModel::new(ModelKind::Uniform { halfwidth: 0.0 }, 0).is_err());
        assert!(PotentialModel::new(ModelKind::TwoPoint { magnitude: -1.0 }, 0).is_err());
        assert!(matches!(
            sample_potential(&PotentialModel { kind: ModelKind::Uniform { halfwidth: -2.0 }, seed: 0 }, 0, 1),
            Err(Error::InvalidModel(_))
        ));
    }

    #[test]
    fn shifts() {
        let p = Potential::from_values(0, vec![0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(p.shift_even(0).unwrap(), p);
        let q = p.shift_even(2).unwrap();
        assert_eq!(q.window(), (-2, 2));
        assert_eq!(q.get(HeightEdge(0)), Some(2.0));
        assert_eq!(q.shift_even(-2).unwrap(), p);
        assert!(matches!(p.shift_even(3), Err(Error::OddShift(3))));
    }

    #[test]
    fn c_omega_floor() {
        assert_eq!(Potential::zeros(0, 3).unwrap().c_omega(), 1.0);
        assert_eq!(Potential::from_values(0, vec![-3.0, 0.5]).unwrap().c_omega(), 3.0);
        let m = PotentialModel::new(ModelKind::TwoPoint { magnitude: 0.25 }, 1).unwrap();
        assert_eq!(sample_potential(&m, 0, 20).unwrap().c_omega(), 1.0);
    }

    #[test]
    fn enumeration() {
        let kind = ModelKind::TwoPoint { magnitude: 1.0 };
        let one = enumerate_potentials(&kind, 0, 0, 16).unwrap();
        assert_eq!(one.len(), 2);
        assert_eq!(one[0].0.values(), &[-1.0]);
        assert_eq!(one[1].0.values(), &[1.0]);
        assert_eq!(one[0].1, 0.5);
        let three = enumerate_potentials(&kind, 4, 6, 16).unwrap();
        assert_eq!(three.len(), 8);
        assert!(three.iter().all(|(_, p)| *p == 0.125));
        for w in 1..=16 {
            let total: f64 = enumerate_potentials(&kind, 0, w - 1, 16).unwrap().iter().map(|(_, p)| p).sum();
            assert_eq!(total, 1.0);
        }
        assert!(matches!(enumerate_potentials(&kind, 0, 16, 16), Err(Error::WindowTooLarge { len: 17, cap: 16 })));
        assert!(matches!(enumerate_potentials(&ModelKind::Uniform { halfwidth: 1.0 }, 0, 1, 16), Err(Error::ExactNeedsFiniteModel)));
    }

    #[test]
    fn model_syntax() {
        for s in ["zero", "uniform:b=2", "twopoint:a=0.25"] {
            let k: ModelKind = s.parse().unwrap();
            assert_eq!(k.to_string().parse::<ModelKind>().unwrap(), k);
        }
        for bad in ["", "uniform", "uniform:a=1", "twopoint:a=0", "twopoint:a=x", "gauss:s=1"] {
            assert!(bad.parse::<ModelKind>().is_err(), "{bad}");
        }
    }

    #[test]
    fn height_edges_are_undirected() {
        assert_eq!(HeightEdge::between(3, 2), HeightEdge(2));
        assert_eq!(HeightEdge::between(-1, 0), HeightEdge(-1));
    }
}
