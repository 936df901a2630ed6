//! Sampling from quenched measures.
//!
//! Small supports are sampled exactly by inverse CDF. Larger domains use
//! single-site heat-bath (Glauber) dynamics: a uniformly chosen free vertex
//! is resampled from its conditional Gibbs law given its neighbours. Two
//! chains fed the same vertex choices and the same uniforms stay pointwise
//! ordered, which gives a dynamic monotone coupling for a fixed potential.

use rand::Rng;

use crate::error::{Error, Result};
use crate::gibbs::QuenchedMeasure;
use crate::heights::{extension_bounds, ExtensionSet, HeightFunction, HeightWindow, Pinning};
use crate::lattice::Region;
use crate::potential::{HeightEdge, Potential};
use crate::rng::{stream, tag, Stream};

/// Inverse-CDF draw of a support index.
pub fn exact_sample_index(qm: &QuenchedMeasure, rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for i in 0..qm.len() {
        acc += qm.probability(i);
        if u < acc {
            return i;
        }
    }
    qm.len() - 1
}

pub fn exact_sample(region: &Region, qm: &QuenchedMeasure, rng: &mut impl Rng) -> HeightFunction {
    qm.support().height_function(region, exact_sample_index(qm, rng))
}

/// State of a heat-bath chain on `M(R; h_{R'})` for a fixed potential.
#[derive(Clone, Debug)]
pub struct ChainState<'a> {
    region: &'a Region,
    pinning: &'a Pinning,
    potential: &'a Potential,
    free: Vec<usize>,
    current: Vec<i64>,
    step: u64,
}

/// The at most two admissible heights at a site, with the probability of the lower one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SiteLaw {
    Forced(i64),
    Two { lower: i64, upper: i64, p_lower: f64 },
}

impl<'a> ChainState<'a> {
    /// Starts at the pointwise minimal extension.
    pub fn new(region: &'a Region, pinning: &'a Pinning, potential: &'a Potential) -> Result<Self> {
        let (low, high) = extension_bounds(region, pinning)?;
        let lo = *low.iter().min().expect("nonempty");
        let hi = *high.iter().max().expect("nonempty");
        if region.edge_count() > 0 {
            potential.require_covers(lo, (hi - 1).max(lo))?;
        }
        Ok(ChainState { region, pinning, potential, free: pinning.free_indices(), current: low, step: 0 })
    }

    /// Starts at a given member of the extension set.
    pub fn from_state(region: &'a Region, pinning: &'a Pinning, potential: &'a Potential, current: Vec<i64>) -> Result<Self> {
        let mut s = Self::new(region, pinning, potential)?;
        debug_assert!(crate::heights::validate_dense(region, &current));
        s.current = current;
        Ok(s)
    }

    pub fn current(&self) -> &[i64] {
        &self.current
    }

    pub fn into_current(self) -> Vec<i64> {
        self.current
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn free_sites(&self) -> &[usize] {
        &self.free
    }

    pub fn region(&self) -> &Region {
        self.region
    }

    pub fn pinning(&self) -> &Pinning {
        self.pinning
    }

    /// Conditional law of the height at free site `v` given the rest.
    pub fn site_law(&self, v: usize) -> SiteLaw {
        let nbrs = self.region.neighbor_indices(v);
        let (mut lo, mut hi) = (i64::MAX, i64::MIN);
        for &u in nbrs {
            let h = self.current[u];
            lo = lo.min(h);
            hi = hi.max(h);
        }
        if hi > lo {
            return SiteLaw::Forced(lo + 1);
        }
        // All neighbours sit at m: every edge reads omega(m - 1) or omega(m).
        let m = lo;
        let deg = nbrs.len() as f64;
        let w_lower = deg * self.potential.at(HeightEdge(m - 1));
        let w_upper = deg * self.potential.at(HeightEdge(m));
        let p_lower = 1.0 / (1.0 + (w_upper - w_lower).exp());
        SiteLaw::Two { lower: m - 1, upper: m + 1, p_lower }
    }

    /// Heat-bath update of site `v` driven by the uniform `u`.
    pub fn update_site(&mut self, v: usize, u: f64) {
        debug_assert!(!self.pinning.is_pinned(v));
        self.current[v] = match self.site_law(v) {
            SiteLaw::Forced(z) => z,
            SiteLaw::Two { lower, upper, p_lower } => {
                if u < p_lower {
                    lower
                } else {
                    upper
                }
            }
        };
        self.step += 1;
    }
}

/// One Glauber step: uniform free vertex, heat-bath resampling.
pub fn glauber_step(state: &mut ChainState<'_>, rng: &mut impl Rng) {
    if state.free.is_empty() {
        state.step += 1;
        return;
    }
    let v = state.free[rng.gen_range(0..state.free.len())];
    let u: f64 = rng.gen();
    state.update_site(v, u);
}

pub fn chain_stream(seed: u64) -> Stream {
    stream(seed, tag::CHAIN)
}

/// Runs `steps` Glauber steps from the minimal extension.
pub fn run_chain(region: &Region, h: &HeightFunction, p: &Potential, steps: u64, seed: u64) -> Result<HeightFunction> {
    let pinning = Pinning::new(region, h)?;
    let mut state = ChainState::new(region, &pinning, p)?;
    let mut rng = chain_stream(seed);
    for _ in 0..steps {
        glauber_step(&mut state, &mut rng);
    }
    Ok(HeightFunction::from_dense(region, state.current()))
}

/// Default burn-in `10 |R| L^2` steps, `L` the height-window length.
pub fn default_burn_in(region: &Region, window: &HeightWindow) -> u64 {
    let l = window.len() as u64;
    10 * region.len() as u64 * l * l
}

/// How a chain is brought to equilibrium before it is sampled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BurnIn {
    /// A fixed number of single-site steps.
    Steps(u64),
    /// Couple chains from the minimal and maximal extensions (same vertex
    /// choices and uniforms) until they agree, then run as many sweeps
    /// again. Gives up after `max_sweeps` sweeps.
    Coalescence { max_sweeps: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct BurnInOutcome {
    pub state: Vec<i64>,
    /// Sweeps to coalescence when the coalescence rule was used and met.
    pub coalesced_after: Option<u64>,
    /// Mean of `high - low` per site when the coalescence rule gave up.
    pub residual_gap: f64,
}

/// Burns in a chain on `M(R; h_{R'})` under the potential `p`.
pub fn burn_in(region: &Region, pinning: &Pinning, p: &Potential, rule: BurnIn, rng: &mut impl Rng) -> Result<BurnInOutcome> {
    let mut low = ChainState::new(region, pinning, p)?;
    match rule {
        BurnIn::Steps(steps) => {
            for _ in 0..steps {
                glauber_step(&mut low, rng);
            }
            Ok(BurnInOutcome { state: low.current, coalesced_after: None, residual_gap: 0.0 })
        }
        BurnIn::Coalescence { max_sweeps } => {
            let (_, high_start) = extension_bounds(region, pinning)?;
            let mut high = ChainState::from_state(region, pinning, p, high_start)?;
            let free = low.free.clone();
            if free.is_empty() {
                return Ok(BurnInOutcome { state: low.current, coalesced_after: Some(0), residual_gap: 0.0 });
            }
            let sweep = free.len() as u64;
            let mut sweeps = 0;
            while low.current != high.current && sweeps < max_sweeps {
                for _ in 0..sweep {
                    let v = free[rng.gen_range(0..free.len())];
                    let u: f64 = rng.gen();
                    low.update_site(v, u);
                    high.update_site(v, u);
                }
                sweeps += 1;
            }
            if low.current != high.current {
                let gap: i64 = low.current.iter().zip(&high.current).map(|(a, b)| b - a).sum();
                return Ok(BurnInOutcome { state: low.current, coalesced_after: None, residual_gap: gap as f64 / free.len() as f64 });
            }
            for _ in 0..sweeps * sweep {
                glauber_step(&mut low, rng);
            }
            Ok(BurnInOutcome { state: low.current, coalesced_after: Some(sweeps), residual_gap: 0.0 })
        }
    }
}

/// Burns in, then records `samples` states separated by `thin` steps.
pub fn sample_chain(
    region: &Region,
    pinning: &Pinning,
    p: &Potential,
    rule: BurnIn,
    samples: usize,
    thin: u64,
    rng: &mut impl Rng,
) -> Result<(BurnInOutcome, Vec<Vec<i64>>)> {
    let outcome = burn_in(region, pinning, p, rule, rng)?;
    let mut state = ChainState::from_state(region, pinning, p, outcome.state.clone())?;
    let mut out = Vec::with_capacity(samples);
    for k in 0..samples {
        if k > 0 {
            for _ in 0..thin {
                glauber_step(&mut state, rng);
            }
        }
        out.push(state.current.clone());
    }
    Ok((outcome, out))
}

/// Result of a coupled run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoupledOutcome {
    pub low: Vec<i64>,
    pub high: Vec<i64>,
    /// Steps after which `low <= high` failed somewhere.
    pub order_violations: u64,
    /// Step count at which the two chains first agreed everywhere, if they did.
    pub coalesced_at: Option<u64>,
}

/// Two heat-bath chains with ordered boundary data, driven by the same
/// vertex choices and uniforms; order is checked after every step.
pub fn coupled_run(
    region: &Region,
    h_low: &HeightFunction,
    h_high: &HeightFunction,
    p: &Potential,
    steps: u64,
    seed: u64,
) -> Result<CoupledOutcome> {
    match h_low.pointwise_le(h_high) {
        None => return Err(Error::Hypothesis("boundary data live on different vertex sets".into())),
        Some(false) => {
            let bad = h_low
                .iter()
                .find(|(v, h)| h_high.get(v).is_some_and(|g| *h > g))
                .map(|(v, _)| v.clone())
                .expect("some vertex is out of order");
            return Err(Error::Unordered(bad));
        }
        Some(true) => {}
    }
    let pin_low = Pinning::new(region, h_low)?;
    let pin_high = Pinning::new(region, h_high)?;
    let mut a = ChainState::new(region, &pin_low, p)?;
    let mut b = ChainState::new(region, &pin_high, p)?;
    let mut rng = chain_stream(seed);
    let mut violations = 0;
    let mut coalesced_at = (a.current == b.current).then_some(0);
    let free = a.free.clone();
    for t in 1..=steps {
        if !free.is_empty() {
            let v = free[rng.gen_range(0..free.len())];
            let u: f64 = rng.gen();
            a.update_site(v, u);
            b.update_site(v, u);
        }
        if a.current.iter().zip(&b.current).any(|(x, y)| x > y) {
            violations += 1;
        }
        if coalesced_at.is_none() && a.current == b.current {
            coalesced_at = Some(t);
        }
    }
    Ok(CoupledOutcome { low: a.current, high: b.current, order_violations: violations, coalesced_at })
}

/// Heat-bath transition matrix on an enumerated support, row-stochastic:
/// `P[i][j]` is the probability of moving from member `i` to member `j` in
/// one Glauber step.
pub fn transition_matrix(region: &Region, pinning: &Pinning, support: &ExtensionSet, p: &Potential) -> Result<Vec<Vec<f64>>> {
    let n = support.len();
    let index = support.index_map();
    let mut matrix = vec![vec![0.0; n]; n];
    let free = pinning.free_indices();
    if free.is_empty() {
        for (i, row) in matrix.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        return Ok(matrix);
    }
    let pick = 1.0 / free.len() as f64;
    for (i, g) in support.members().iter().enumerate() {
        let state = ChainState::from_state(region, pinning, p, g.clone())?;
        for &v in &free {
            let outcomes: Vec<(i64, f64)> = match state.site_law(v) {
                SiteLaw::Forced(z) => vec![(z, 1.0)],
                SiteLaw::Two { lower, upper, p_lower } => vec![(lower, p_lower), (upper, 1.0 - p_lower)],
            };
            for (z, prob) in outcomes {
                let mut next = g.clone();
                next[v] = z;
                let j = *index.get(next.as_slice()).ok_or_else(|| Error::Hypothesis("heat-bath move left the support".into()))?;
                matrix[i][j] += pick * prob;
            }
        }
    }
    Ok(matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::quenched_measure;
    use crate::heights::{enumerate_extensions, parity_height};
    use crate::lattice::Vertex;
    use crate::rng::stream;

    fn v<const N: usize>(c: [i64; N]) -> Vertex {
        Vertex::from(c)
    }

    fn path3() -> Region {
        Region::make_box(&[0], &[2]).unwrap()
    }

    fn ends(a: i64, b: i64) -> HeightFunction {
        HeightFunction::from_pairs([(v([0]), a), (v([2]), b)])
    }

    #[test]
    fn exact_sampling_single_member() {
        let r = Region::make_box(&[0, 0], &[1, 1]).unwrap();
        let h = parity_height(&r);
        let qm = quenched_measure(&r, &h, &Potential::zeros(0, 1).unwrap()).unwrap();
        let mut rng = stream(1, 0);
        for _ in 0..10 {
            assert_eq!(exact_sample(&r, &qm, &mut rng), h);
        }
    }

    #[test]
    fn exact_sampling_frequencies() {
        let r = path3();
        let mut rng = stream(2, 0);
        let uniform = quenched_measure(&r, &ends(0, 0), &Potential::zeros(-1, 0).unwrap()).unwrap();
        let n = 100_000;
        let ups = (0..n).filter(|_| exact_sample_index(&uniform, &mut rng) == 1).count();
        assert!((ups as f64 / n as f64 - 0.5).abs() < 0.01);

        let weighted = quenched_measure(&r, &ends(0, 0), &Potential::from_values(-1, vec![0.0, 1.0]).unwrap()).unwrap();
        let ups = (0..n).filter(|_| exact_sample_index(&weighted, &mut rng) == 1).count();
        let e2 = 2f64.exp();
        assert!((ups as f64 / n as f64 - e2 / (e2 + 1.0)).abs() < 0.01);
    }

    #[test]
    fn site_laws() {
        let r = path3();
        let pin = Pinning::new(&r, &ends(0, 0)).unwrap();
        let zero = Potential::zeros(-1, 0).unwrap();
        let s = ChainState::new(&r, &pin, &zero).unwrap();
        assert_eq!(s.current(), &[0, -1, 0]);
        assert_eq!(s.site_law(1), SiteLaw::Two { lower: -1, upper: 1, p_lower: 0.5 });

        let p = Potential::from_values(-1, vec![0.0, 1.0]).unwrap();
        let s = ChainState::new(&r, &pin, &p).unwrap();
        let e2 = 2f64.exp();
        match s.site_law(1) {
            SiteLaw::Two { p_lower, .. } => assert!((1.0 - p_lower - e2 / (e2 + 1.0)).abs() < 1e-15),
            other => panic!("{other:?}"),
        }

        let tilted = Pinning::new(&r, &ends(0, 2)).unwrap();
        let q = Potential::zeros(0, 1).unwrap();
        let s = ChainState::new(&r, &tilted, &q).unwrap();
        assert_eq!(s.site_law(1), SiteLaw::Forced(1));
    }

    #[test]
    fn zero_steps_is_minimal_extension() {
        let r = Region::make_box(&[0, 0], &[2, 2]).unwrap();
        let ring = parity_height(&r).restricted(&r.boundary());
        let out = run_chain(&r, &ring, &Potential::zeros(0, 1).unwrap(), 0, 5).unwrap();
        assert_eq!(out, parity_height(&r));
    }

    #[test]
    fn window_must_cover_dynamics() {
        let r = path3();
        let pin = Pinning::new(&r, &ends(0, 0)).unwrap();
        let short = Potential::zeros(0, 0).unwrap();
        assert!(matches!(ChainState::new(&r, &pin, &short), Err(Error::WindowTooSmall { .. })));
    }

    #[test]
    fn coupled_path_stays_ordered() {
        let r = path3();
        let p = Potential::from_values(-1, vec![0.4, -1.3, 0.8, 2.0]).unwrap();
        let out = coupled_run(&r, &ends(0, 0), &ends(2, 2), &p, 10_000, 3).unwrap();
        assert_eq!(out.order_violations, 0);
        let same = coupled_run(&r, &ends(0, 0), &ends(0, 0), &p, 1000, 3).unwrap();
        assert_eq!(same.low, same.high);
        assert_eq!(same.coalesced_at, Some(0));
        assert!(matches!(coupled_run(&r, &ends(2, 2), &ends(0, 0), &p, 1, 3), Err(Error::Unordered(_))));
    }

    #[test]
    fn shared_threshold_table_is_monotone() {
        // Low chain middle in {-1, 1} (neighbours 0, 0); high chain middle in
        // {1, 3} (neighbours 2, 2). Every uniform keeps low <= high.
        let r = path3();
        let p = Potential::from_values(-1, vec![0.4, -1.3, 0.8, 2.0]).unwrap();
        let (pl, ph) = (Pinning::new(&r, &ends(0, 0)).unwrap(), Pinning::new(&r, &ends(2, 2)).unwrap());
        for start_low in [-1, 1] {
            for start_high in [1, 3] {
                for u in [0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 0.999] {
                    let mut a = ChainState::from_state(&r, &pl, &p, vec![0, start_low, 0]).unwrap();
                    let mut b = ChainState::from_state(&r, &ph, &p, vec![2, start_high, 2]).unwrap();
                    a.update_site(1, u);
                    b.update_site(1, u);
                    assert!(a.current()[1] <= b.current()[1]);
                }
            }
        }
    }

    #[test]
    fn coalescence_burn_in_zero_potential() {
        let r = Region::square(6).unwrap();
        let ring = parity_height(&r).restricted(&r.boundary());
        let pin = Pinning::new(&r, &ring).unwrap();
        let p = Potential::zeros(-3, 4).unwrap();
        let mut rng = stream(4, 0);
        let out = burn_in(&r, &pin, &p, BurnIn::Coalescence { max_sweeps: 10_000 }, &mut rng).unwrap();
        assert!(out.coalesced_after.is_some());
        assert!(crate::heights::validate_dense(&r, &out.state));
        let (_, samples) = sample_chain(&r, &pin, &p, BurnIn::Steps(100), 5, 10, &mut rng).unwrap();
        assert_eq!(samples.len(), 5);
        assert!(samples.iter().all(|s| crate::heights::validate_dense(&r, s)));
    }

    #[test]
    fn transition_matrix_rows_sum_to_one() {
        let r = Region::make_box(&[0, 0], &[3, 3]).unwrap();
        let ring = parity_height(&r).restricted(&r.boundary());
        let pin = Pinning::new(&r, &ring).unwrap();
        let support = enumerate_extensions(&r, &ring).unwrap();
        let p = Potential::from_values(-2, vec![0.3, -0.2, 0.9, -1.0, 0.5, 0.1]).unwrap();
        let m = transition_matrix(&r, &pin, &support, &p).unwrap();
        for row in &m {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
