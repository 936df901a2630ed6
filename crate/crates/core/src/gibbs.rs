//! Hamiltonians, partition functions and Gibbs measures over extension sets.
//!
//! All weights are kept in log space; probabilities are formed as
//! `exp(log_weight - log_z)` with `log_z` computed by a max-shifted
//! log-sum-exp.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::heights::{
    enumerate_pinned, pinned_height_window, ExtensionSet, HeightFunction, HeightWindow, Pinning, DEFAULT_ENUMERATION_CAP,
};
use crate::lattice::Region;
use crate::potential::{enumerate_potentials, sample_potential, HeightEdge, Potential, PotentialModel, DEFAULT_EXACT_WINDOW_CAP};
use crate::rng::{derive_seed, tag};
use crate::stats::NeumaierSum;

/// Edge range touched by a single height function: `[min h, max h - 1]`.
fn touched_edges(region: &Region, h: &[i64]) -> Option<(i64, i64)> {
    region.edges().fold(None, |acc, (i, j)| {
        let e = h[i].min(h[j]);
        Some(match acc {
            None => (e, e),
            Some((lo, hi)) => (e.min(lo), e.max(hi)),
        })
    })
}

fn edge_sum(region: &Region, h: &[i64], p: &Potential, keep: impl Fn(usize, usize) -> bool) -> Result<f64> {
    if let Some((lo, hi)) = touched_edges(region, h) {
        p.require_covers(lo, hi)?;
    }
    let mut total = 0.0;
    for (i, j) in region.edges() {
        if keep(i, j) {
            total += p.at(HeightEdge::between(h[i], h[j]));
        }
    }
    Ok(total)
}

/// `H°_R(h) = sum over lattice edges x ~ y of R of omega at {h(x), h(y)}`.
pub fn hamiltonian_interior(region: &Region, h: &[i64], p: &Potential) -> Result<f64> {
    edge_sum(region, h, p, |_, _| true)
}

/// `H+_R`: the same sum over the edges of `R+`, so edges leaving `R` count.
pub fn hamiltonian_plus(region: &Region, h: &HeightFunction, p: &Potential) -> Result<f64> {
    let outer = region.outer_extension();
    let dense = h.to_dense(&outer)?;
    hamiltonian_interior(&outer, &dense, p)
}

/// `H+_{R \ R'}` read inside `R`: every edge of `R` with at least one free
/// endpoint, i.e. the edges of the free set plus those crossing into the
/// relative boundary of the pinned set.
pub fn hamiltonian_relative(region: &Region, pinning: &Pinning, h: &[i64], p: &Potential) -> Result<f64> {
    edge_sum(region, h, p, |i, j| !pinning.is_pinned(i) || !pinning.is_pinned(j))
}

/// Max-shifted `log(sum(exp(x)))`; `None` on an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> Option<f64> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if xs.is_empty() {
        return None;
    }
    let mut sum = NeumaierSum::default();
    for &x in xs {
        sum.add((x - max).exp());
    }
    Some(max + sum.total().ln())
}

/// `log Z_omega(A)`.
pub fn partition_function(region: &Region, members: &[Vec<i64>], p: &Potential) -> Result<f64> {
    let energies = members.iter().map(|h| hamiltonian_interior(region, h, p)).collect::<Result<Vec<_>>>()?;
    log_sum_exp(&energies).ok_or(Error::EmptySupport)
}

/// The quenched Gibbs measure on `M(R; h_{R'})` for one potential.
#[derive(Clone, Debug)]
pub struct QuenchedMeasure {
    support: Arc<ExtensionSet>,
    log_weights: Vec<f64>,
    log_z: f64,
}

impl QuenchedMeasure {
    pub fn support(&self) -> &ExtensionSet {
        &self.support
    }

    pub fn shared_support(&self) -> Arc<ExtensionSet> {
        Arc::clone(&self.support)
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    /// `H°` of each member, i.e. the log of its Gibbs weight.
    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.log_weights[i].exp()
    }

    pub fn log_z(&self) -> f64 {
        self.log_z
    }

    pub fn probability(&self, i: usize) -> f64 {
        (self.log_weights[i] - self.log_z).exp()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.probability(i)).collect()
    }
}

/// Gibbs measure on an already enumerated support.
pub fn quenched_measure_on(region: &Region, support: Arc<ExtensionSet>, p: &Potential) -> Result<QuenchedMeasure> {
    if support.is_empty() {
        return Err(Error::EmptySupport);
    }
    let log_weights = support.members().iter().map(|h| hamiltonian_interior(region, h, p)).collect::<Result<Vec<_>>>()?;
    let log_z = log_sum_exp(&log_weights).expect("nonempty");
    Ok(QuenchedMeasure { support, log_weights, log_z })
}

/// Enumerates `M(R; h_{R'})` and weights it by `exp(H°)`.
pub fn quenched_measure(region: &Region, h: &HeightFunction, p: &Potential) -> Result<QuenchedMeasure> {
    let pinning = Pinning::new(region, h)?;
    let support = enumerate_pinned(region, &pinning, DEFAULT_ENUMERATION_CAP)?;
    quenched_measure_on(region, Arc::new(support), p)
}

pub fn quenched_expectation(qm: &QuenchedMeasure, f: impl Fn(&[i64]) -> f64) -> f64 {
    let mut sum = NeumaierSum::default();
    for (i, h) in qm.support().members().iter().enumerate() {
        sum.add(qm.probability(i) * f(h));
    }
    sum.total()
}

/// How the expectation over the potential is taken.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Annealing {
    /// Every realization of a finite-support model on the height window.
    Exact,
    /// Independent draws, each derived from `(model seed, draw index)`.
    MonteCarlo { draws: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnnealedEstimate {
    pub value: f64,
    pub mode: Annealing,
    /// Zero in exact mode.
    pub stderr: f64,
    /// Enumerated potentials (exact) or draws (Monte Carlo).
    pub samples: usize,
}

/// A finite family of quenched measures with mixture weights summing to 1:
/// the annealed measure is their mixture.
#[derive(Clone, Debug)]
pub struct QuenchedFamily {
    pub mode: Annealing,
    pub members: Vec<(f64, QuenchedMeasure)>,
}

impl QuenchedFamily {
    pub fn support(&self) -> &ExtensionSet {
        self.members[0].1.support()
    }

    /// Annealed probability of each support member.
    pub fn annealed_probabilities(&self) -> Vec<f64> {
        let n = self.support().len();
        let mut sums = vec![NeumaierSum::default(); n];
        for (w, qm) in &self.members {
            for (i, s) in sums.iter_mut().enumerate() {
                s.add(w * qm.probability(i));
            }
        }
        sums.into_iter().map(|s| s.total()).collect()
    }

    pub fn expectation(&self, f: impl Fn(&[i64]) -> f64 + Sync) -> AnnealedEstimate {
        let values: Vec<f64> = self.members.iter().map(|(_, qm)| quenched_expectation(qm, &f)).collect();
        let mut mean = NeumaierSum::default();
        for ((w, _), x) in self.members.iter().zip(&values) {
            mean.add(w * x);
        }
        let value = mean.total();
        let stderr = match self.mode {
            Annealing::Exact => 0.0,
            Annealing::MonteCarlo { .. } => crate::stats::standard_error(&values),
        };
        AnnealedEstimate { value, mode: self.mode, stderr, samples: self.members.len() }
    }
}

/// The potential realization used for Monte Carlo draw `d`.
pub fn potential_draw(model: &PotentialModel, d: u64, lo: i64, hi: i64) -> Result<Potential> {
    let draw = model.with_seed(derive_seed(model.seed, tag::POTENTIAL_DRAW | d));
    sample_potential(&draw, lo, hi)
}

/// Builds the quenched measures needed to anneal over `model` on the edges
/// `window` (which must cover the support's height window).
pub fn quenched_family(
    region: &Region,
    support: Arc<ExtensionSet>,
    window: (i64, i64),
    model: &PotentialModel,
    mode: Annealing,
) -> Result<QuenchedFamily> {
    if support.is_empty() {
        return Err(Error::EmptySupport);
    }
    let (lo, hi) = window;
    let members = match mode {
        Annealing::Exact => {
            if !model.kind.is_finite_support() {
                return Err(Error::ExactNeedsFiniteModel);
            }
            enumerate_potentials(&model.kind, lo, hi, DEFAULT_EXACT_WINDOW_CAP)?
                .into_par_iter()
                .map(|(p, prob)| Ok((prob, quenched_measure_on(region, Arc::clone(&support), &p)?)))
                .collect::<Result<Vec<_>>>()?
        }
        Annealing::MonteCarlo { draws } => {
            if draws == 0 {
                return Err(Error::NonPositive { name: "draws", value: 0.0 });
            }
            let w = 1.0 / draws as f64;
            (0..draws as u64)
                .into_par_iter()
                .map(|d| {
                    let p = potential_draw(model, d, lo, hi)?;
                    Ok((w, quenched_measure_on(region, Arc::clone(&support), &p)?))
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    Ok(QuenchedFamily { mode, members })
}

/// Enumerated support plus its height window, failing on empty supports.
pub fn support_and_window(region: &Region, h: &HeightFunction) -> Result<(Arc<ExtensionSet>, HeightWindow)> {
    let pinning = Pinning::new(region, h)?;
    let support = enumerate_pinned(region, &pinning, DEFAULT_ENUMERATION_CAP)?;
    if support.is_empty() {
        return Err(Error::EmptySupport);
    }
    let window = pinned_height_window(region, &pinning)?;
    Ok((Arc::new(support), window))
}

/// `E[E_{mu(., omega)} f]` over the law of the potential.
pub fn annealed_expectation(
    region: &Region,
    h: &HeightFunction,
    model: &PotentialModel,
    f: impl Fn(&[i64]) -> f64 + Sync,
    mode: Annealing,
) -> Result<AnnealedEstimate> {
    let (support, window) = support_and_window(region, h)?;
    let family = quenched_family(region, support, window.edge_range(), model, mode)?;
    Ok(family.expectation(f))
}

fn relative_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Largest relative gap between the Gibbs probabilities and the ones built
/// from the Hamiltonian of the free part alone (edges touching `R \ R'`).
pub fn check_relative_complement_identity(region: &Region, h: &HeightFunction, p: &Potential) -> Result<f64> {
    let pinning = Pinning::new(region, h)?;
    let qm = quenched_measure(region, h, p)?;
    let relative = qm.support().members().iter().map(|g| hamiltonian_relative(region, &pinning, g, p)).collect::<Result<Vec<_>>>()?;
    let log_z_rel = log_sum_exp(&relative).expect("nonempty");
    Ok((0..qm.len()).map(|i| relative_gap(qm.probability(i), (relative[i] - log_z_rel).exp())).fold(0.0, f64::max))
}

/// Largest relative gap in `mu_{M(R; h+2)}(g, omega) = mu_{M(R; h)}(g - 2, tau_2 omega)`
/// over the shifted support.
pub fn check_shift_identity(region: &Region, h: &HeightFunction, p: &Potential) -> Result<f64> {
    let raised = h.shifted(2);
    let pinning = Pinning::new(region, &raised)?;
    let window = pinned_height_window(region, &pinning)?;
    let (lo, hi) = window.edge_range();
    p.require_covers(lo, hi)?;
    let left = quenched_measure(region, &raised, p)?;
    let right = quenched_measure(region, h, &p.shift_even(2)?)?;
    let index = right.support().index_map();
    if left.len() != right.len() {
        return Ok(1.0);
    }
    let mut worst = 0.0f64;
    for (i, g) in left.support().members().iter().enumerate() {
        let lowered: Vec<i64> = g.iter().map(|z| z - 2).collect();
        let gap = match index.get(lowered.as_slice()) {
            Some(&j) => relative_gap(left.probability(i), right.probability(j)),
            None => 1.0,
        };
        worst = worst.max(gap);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heights::parity_height;
    use crate::lattice::Vertex;
    use crate::potential::ModelKind;

    fn v<const N: usize>(c: [i64; N]) -> Vertex {
        Vertex::from(c)
    }

    fn path3() -> Region {
        Region::make_box(&[0], &[2]).unwrap()
    }

    fn ends(a: i64, b: i64) -> HeightFunction {
        HeightFunction::from_pairs([(v([0]), a), (v([2]), b)])
    }

    /// omega(-1) = p_m1, omega(0) = p_0 on edges [-1, 0].
    fn pot(p_m1: f64, p_0: f64) -> Potential {
        Potential::from_values(-1, vec![p_m1, p_0]).unwrap()
    }

    #[test]
    fn interior_hamiltonian_on_path() {
        let r = path3();
        let p = pot(0.3, -1.7);
        assert_eq!(hamiltonian_interior(&r, &[0, 1, 0], &p).unwrap(), 2.0 * -1.7);
        assert_eq!(hamiltonian_interior(&r, &[0, -1, 0], &p).unwrap(), 2.0 * 0.3);
        let z = Potential::zeros(-5, 5).unwrap();
        assert_eq!(hamiltonian_interior(&r, &[2, 1, 2], &z).unwrap(), 0.0);
        assert!(matches!(hamiltonian_interior(&r, &[4, 5, 4], &p), Err(Error::WindowTooSmall { .. })));
    }

    #[test]
    fn plus_hamiltonian() {
        let r = Region::make_box(&[1], &[1]).unwrap();
        let p = Potential::from_values(0, vec![0.8]).unwrap();
        let h = HeightFunction::from_pairs([(v([0]), 0), (v([1]), 1), (v([2]), 0)]);
        assert_eq!(hamiltonian_plus(&r, &h, &p).unwrap(), 1.6);
        let dot = Region::make_box(&[0, 0], &[0, 0]).unwrap();
        let checker = parity_height(&dot.outer_extension());
        assert_eq!(hamiltonian_plus(&dot, &checker, &p).unwrap(), 4.0 * 0.8);
        let z = Potential::zeros(-3, 3).unwrap();
        assert_eq!(hamiltonian_plus(&dot, &checker, &z).unwrap(), 0.0);
        let missing = HeightFunction::from_pairs([(v([0, 0]), 0)]);
        assert!(matches!(hamiltonian_plus(&dot, &missing, &p), Err(Error::MissingHeight(_))));
    }

    #[test]
    fn partition_functions() {
        let r = path3();
        let members = vec![vec![0, -1, 0], vec![0, 1, 0]];
        let z = Potential::zeros(-1, 0).unwrap();
        assert!((partition_function(&r, &members, &z).unwrap() - 2f64.ln()).abs() < 1e-15);
        let p = pot(0.4, 1.1);
        let expected = ((0.8f64).exp() + (2.2f64).exp()).ln();
        assert!((partition_function(&r, &members, &p).unwrap() - expected).abs() < 1e-14);
        let single = partition_function(&r, &members[1..], &p).unwrap();
        assert!((single - 2.2).abs() < 1e-15);
        assert!(matches!(partition_function(&r, &[], &p), Err(Error::EmptySupport)));
    }

    #[test]
    fn weighted_path_measure() {
        let r = path3();
        let qm = quenched_measure(&r, &ends(0, 0), &pot(0.0, 1.0)).unwrap();
        let e2 = 2f64.exp();
        assert!((qm.probability(1) - e2 / (e2 + 1.0)).abs() < 1e-15);
        assert!((qm.probability(1) - 0.8808).abs() < 1e-4);
        let mean = quenched_expectation(&qm, |h| h[1] as f64);
        assert!((mean - (e2 - 1.0) / (e2 + 1.0)).abs() < 1e-15);
        assert!((mean - 0.7616).abs() < 1e-4);
        assert!((quenched_expectation(&qm, |_| 1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_potential_is_uniform() {
        let r = Region::make_box(&[0, 0], &[3, 3]).unwrap();
        let ring = parity_height(&r).restricted(&r.boundary());
        let qm = quenched_measure(&r, &ring, &Potential::zeros(-2, 4).unwrap()).unwrap();
        let n = qm.len() as f64;
        assert!(qm.probabilities().iter().all(|&p| (p - 1.0 / n).abs() < 1e-15));
        let uniform = quenched_measure(&path3(), &ends(0, 0), &Potential::zeros(-1, 0).unwrap()).unwrap();
        assert_eq!(quenched_expectation(&uniform, |h| h[1] as f64), 0.0);
    }

    #[test]
    fn infeasible_boundary_has_no_measure() {
        let r = Region::make_box(&[0, 0], &[2, 2]).unwrap();
        let far_ends = HeightFunction::from_pairs([
            (v([0, 1]), 1),
            (v([0, 0]), 2),
            (v([0, 2]), 2),
            (v([1, 0]), 3),
            (v([1, 2]), 3),
            (v([2, 0]), 4),
            (v([2, 2]), 4),
            (v([2, 1]), 5),
        ]);
        let p = Potential::zeros(-2, 8).unwrap();
        assert!(matches!(quenched_measure(&r, &far_ends, &p), Err(Error::EmptySupport)));
    }

    #[test]
    fn annealed_two_point_path_is_symmetric() {
        let r = path3();
        let model = PotentialModel::new(ModelKind::TwoPoint { magnitude: 1.0 }, 0).unwrap();
        let est = annealed_expectation(&r, &ends(0, 0), &model, |h| h[1] as f64, Annealing::Exact).unwrap();
        assert_eq!(est.samples, 4);
        assert_eq!(est.stderr, 0.0);
        assert!(est.value.abs() < 1e-15);

        // Hand enumeration over (omega(-1), omega(0)) in {-1, 1}^2.
        let mut oracle = 0.0;
        for a in [-1.0f64, 1.0] {
            for b in [-1.0f64, 1.0] {
                let up = (2.0 * b).exp();
                let down = (2.0 * a).exp();
                oracle += 0.25 * (up - down) / (up + down);
            }
        }
        assert!((est.value - oracle).abs() < 1e-15);

        let mc = annealed_expectation(&r, &ends(0, 0), &model, |h| h[1] as f64, Annealing::MonteCarlo { draws: 2000 }).unwrap();
        assert!((mc.value - est.value).abs() <= 3.0 * mc.stderr, "{mc:?}");
    }

    #[test]
    fn zero_model_anneals_to_quenched() {
        let r = path3();
        let model = PotentialModel::new(ModelKind::Zero, 0).unwrap();
        let est = annealed_expectation(&r, &ends(2, 0), &model, |h| h[1] as f64, Annealing::Exact).unwrap();
        assert_eq!(est.value, 1.0);
        let uniform = PotentialModel::new(ModelKind::Uniform { halfwidth: 1.0 }, 0).unwrap();
        assert!(matches!(
            annealed_expectation(&r, &ends(0, 0), &uniform, |h| h[1] as f64, Annealing::Exact),
            Err(Error::ExactNeedsFiniteModel)
        ));
    }

    #[test]
    fn identities_hold_on_small_instances() {
        let r = path3();
        let p = Potential::from_values(-1, vec![0.37, -1.2, 0.9, 0.05, -0.6]).unwrap();
        assert!(check_relative_complement_identity(&r, &ends(0, 0), &p).unwrap() <= 1e-12);
        assert!(check_shift_identity(&r, &ends(0, 0), &p).unwrap() <= 1e-12);

        let b = Region::make_box(&[0, 0], &[2, 2]).unwrap();
        let ring = parity_height(&b).restricted(&b.boundary());
        let q = Potential::from_values(-1, vec![0.2, -0.7, 1.3, 0.4, -0.1]).unwrap();
        assert!(check_relative_complement_identity(&b, &ring, &q).unwrap() <= 1e-12);
        assert!(check_shift_identity(&b, &ring, &q).unwrap() <= 1e-12);

        let z = Potential::zeros(-3, 5).unwrap();
        assert_eq!(check_relative_complement_identity(&b, &ring, &z).unwrap(), 0.0);
        assert_eq!(check_shift_identity(&b, &ring, &z).unwrap(), 0.0);
    }

    #[test]
    fn shift_identity_needs_window() {
        let r = path3();
        let p = Potential::from_values(-1, vec![0.1, 0.2]).unwrap();
        assert!(matches!(check_shift_identity(&r, &ends(0, 0), &p), Err(Error::WindowTooSmall { .. })));
    }

    #[test]
    fn gauge_invariance() {
        let r = Region::make_box(&[0, 0], &[3, 3]).unwrap();
        let ring = parity_height(&r).restricted(&r.boundary());
        let p = Potential::from_values(-2, vec![0.3, -0.4, 1.1, 0.0, -0.9, 0.6, 0.2]).unwrap();
        let a = quenched_measure(&r, &ring, &p).unwrap();
        let c = 0.75;
        let b = quenched_measure(&r, &ring, &p.offset(c)).unwrap();
        let edges = r.edge_count() as f64;
        for i in 0..a.len() {
            let ratio = (b.log_weights()[i] - a.log_weights()[i]) / (c * edges);
            assert!((ratio - 1.0).abs() < 1e-12);
            let gap = (a.probability(i) - b.probability(i)).abs() / a.probability(i);
            assert!(gap < 1e-12);
        }
    }
}
