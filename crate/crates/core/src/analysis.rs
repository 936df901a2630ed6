//! Verification engines: stochastic-dominance certificates, annealed
//! expectation ordering, the martingale-difference audit, the Azuma and
//! concentration bounds, and the concentration experiment.
//!
//! Dominance is certified by max-flow. The bipartite graph joins `g` in the
//! support of `mu` to `g~` in the support of `nu` whenever `g <= g~`
//! pointwise; a flow of value one is a monotone coupling, and a smaller
//! flow leaves a minimum cut whose source side generates an upper set `U`
//! with `nu(U) < mu(U)`.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gibbs::{
    check_relative_complement_identity, check_shift_identity, potential_draw, quenched_family, quenched_measure_on, support_and_window,
    AnnealedEstimate, Annealing, QuenchedMeasure,
};
use crate::heights::{
    boundary_cycle, enumerate_pinned, extremal_boundary, kirszbraun_witness, parity_height, pinned_height_window, ExtremalShape,
    HeightFunction, Pinning, Slope, DEFAULT_ENUMERATION_CAP,
};
use crate::lattice::{Region, Vertex};
use crate::potential::{sample_potential, ModelKind, Potential, PotentialModel};
use crate::rng::{derive_seed, stream, tag};
use crate::sampler::{sample_chain, BurnIn, BurnInOutcome};
use crate::stats::{self, NeumaierSum};

/// Largest `|supp mu| * |supp nu|` a certificate will compare by default.
pub const DEFAULT_PAIR_CAP: usize = 1_000_000;

/// Flow deficit below which two measures count as ordered, and the
/// tolerance on coupling marginals.
pub const MARGINAL_TOLERANCE: f64 = 1e-9;

/// Supports up to this size are also checked by upper-set enumeration.
pub const ORACLE_SUPPORT_LIMIT: usize = 12;

const FLOW_EPS: f64 = 1e-15;

// ---------------------------------------------------------------------------
// Max-flow

struct FlowNetwork {
    head: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<f64>,
}

impl FlowNetwork {
    fn new(nodes: usize) -> Self {
        FlowNetwork { head: vec![Vec::new(); nodes], to: Vec::new(), cap: Vec::new() }
    }

    fn add_edge(&mut self, u: usize, v: usize, cap: f64) -> usize {
        let e = self.to.len();
        self.to.push(v);
        self.cap.push(cap);
        self.head[u].push(e);
        self.to.push(u);
        self.cap.push(0.0);
        self.head[v].push(e + 1);
        e
    }

    fn levels(&self, s: usize) -> Vec<Option<usize>> {
        let mut level = vec![None; self.head.len()];
        level[s] = Some(0);
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            let next = level[u].map(|l| l + 1);
            for &e in &self.head[u] {
                let v = self.to[e];
                if self.cap[e] > FLOW_EPS && level[v].is_none() {
                    level[v] = next;
                    queue.push_back(v);
                }
            }
        }
        level
    }

    fn augment(&mut self, u: usize, t: usize, pushed: f64, level: &[Option<usize>], next: &mut [usize]) -> f64 {
        if u == t {
            return pushed;
        }
        while next[u] < self.head[u].len() {
            let e = self.head[u][next[u]];
            let v = self.to[e];
            if self.cap[e] > FLOW_EPS && level[v].is_some() && level[v] == level[u].map(|l| l + 1) {
                let d = self.augment(v, t, pushed.min(self.cap[e]), level, next);
                if d > 0.0 {
                    self.cap[e] -= d;
                    self.cap[e ^ 1] += d;
                    return d;
                }
            }
            next[u] += 1;
        }
        0.0
    }

    /// Dinic's algorithm.
    fn max_flow(&mut self, s: usize, t: usize) -> f64 {
        let mut flow = NeumaierSum::default();
        loop {
            let level = self.levels(s);
            if level[t].is_none() {
                break;
            }
            let mut next = vec![0; self.head.len()];
            loop {
                let f = self.augment(s, t, f64::INFINITY, &level, &mut next);
                if f <= 0.0 {
                    break;
                }
                flow.add(f);
            }
        }
        flow.total()
    }

    /// Nodes from which `t` is reachable in the residual graph.
    fn reaching(&self, t: usize) -> Vec<bool> {
        let mut seen = vec![false; self.head.len()];
        seen[t] = true;
        let mut queue = VecDeque::from([t]);
        while let Some(v) = queue.pop_front() {
            for &e in &self.head[v] {
                // `e ^ 1` runs from `to[e]` into `v`.
                let u = self.to[e];
                if !seen[u] && self.cap[e ^ 1] > FLOW_EPS {
                    seen[u] = true;
                    queue.push_back(u);
                }
            }
        }
        seen
    }
}

// ---------------------------------------------------------------------------
// Dominance certificates

fn leq(a: &[i64], b: &[i64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Dominated,
    Violated,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Dominated => "dominated",
            Verdict::Violated => "violated",
        })
    }
}

/// An upper set `U`, restricted to the two supports, with its masses.
#[derive(Clone, Debug, PartialEq)]
pub struct UpperSetWitness {
    pub mu_indices: Vec<usize>,
    pub nu_indices: Vec<usize>,
    pub mu_mass: f64,
    pub nu_mass: f64,
}

impl fmt::Display for UpperSetWitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |xs: &[usize]| xs.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",");
        write!(
            f,
            "upper set mu_indices=[{}] nu_indices=[{}] mu_mass={} nu_mass={}",
            list(&self.mu_indices),
            list(&self.nu_indices),
            self.mu_mass,
            self.nu_mass
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DominanceCertificate {
    pub verdict: Verdict,
    /// Value of the maximum flow; one exactly when dominated.
    pub flow: f64,
    /// `(index in supp mu, index in supp nu, mass)`, each pair ordered
    /// pointwise. Empty when violated.
    pub coupling: Vec<(usize, usize, f64)>,
    pub witness: Option<UpperSetWitness>,
}

impl DominanceCertificate {
    pub fn is_dominated(&self) -> bool {
        self.verdict == Verdict::Dominated
    }

    /// Largest deviation of the coupling's marginals from `mu` and `nu`.
    pub fn marginal_error(&self, mu: &[f64], nu: &[f64]) -> f64 {
        let mut left = vec![NeumaierSum::default(); mu.len()];
        let mut right = vec![NeumaierSum::default(); nu.len()];
        for &(i, j, m) in &self.coupling {
            left[i].add(m);
            right[j].add(m);
        }
        let l = mu.iter().zip(&left).map(|(p, s)| (p - s.total()).abs());
        let r = nu.iter().zip(&right).map(|(p, s)| (p - s.total()).abs());
        l.chain(r).fold(0.0, f64::max)
    }
}

fn check_supports(mu: &[Vec<i64>], nu: &[Vec<i64>], mu_p: &[f64], nu_p: &[f64]) -> Result<()> {
    if mu.is_empty() || nu.is_empty() {
        return Err(Error::EmptySupport);
    }
    if mu.len() != mu_p.len() || nu.len() != nu_p.len() {
        return Err(Error::Hypothesis("every support point needs exactly one probability".into()));
    }
    let dim = mu[0].len();
    if let Some(g) = mu.iter().chain(nu).find(|g| g.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, found: g.len() });
    }
    Ok(())
}

fn mass(probs: &[f64], indices: &[usize]) -> f64 {
    let mut s = NeumaierSum::default();
    indices.iter().for_each(|&i| s.add(probs[i]));
    s.total()
}

/// Strassen certificate for `mu <= nu` between two finitely supported
/// measures on height functions over the same region (dense vectors).
pub fn dominance_between(mu: &[Vec<i64>], mu_p: &[f64], nu: &[Vec<i64>], nu_p: &[f64], cap: usize) -> Result<DominanceCertificate> {
    check_supports(mu, nu, mu_p, nu_p)?;
    let pairs = mu.len().saturating_mul(nu.len());
    if pairs > cap {
        return Err(Error::TooManyPairs { pairs, cap });
    }
    let (a, b) = (mu.len(), nu.len());
    let (s, t) = (0, a + b + 1);
    let mut net = FlowNetwork::new(a + b + 2);
    for (i, &p) in mu_p.iter().enumerate() {
        net.add_edge(s, 1 + i, p);
    }
    for (j, &p) in nu_p.iter().enumerate() {
        net.add_edge(1 + a + j, t, p);
    }
    // Middle capacities only need to exceed the total mass.
    let mut middle = Vec::new();
    for (i, g) in mu.iter().enumerate() {
        for (j, gt) in nu.iter().enumerate() {
            if leq(g, gt) {
                middle.push((i, j, net.add_edge(1 + i, 1 + a + j, 2.0)));
            }
        }
    }
    let flow = net.max_flow(s, t);
    let total_mu = stats::sum(mu_p);
    if flow >= total_mu - MARGINAL_TOLERANCE {
        let coupling = middle
            .into_iter()
            .filter_map(|(i, j, e)| {
                let m = 2.0 - net.cap[e];
                (m > FLOW_EPS).then_some((i, j, m))
            })
            .collect();
        return Ok(DominanceCertificate { verdict: Verdict::Dominated, flow, coupling, witness: None });
    }
    // Source side of the largest minimum cut: nodes that cannot reach t.
    let reach = net.reaching(t);
    let side: Vec<usize> = (0..a).filter(|&i| !reach[1 + i]).collect();
    let witness = up_closure_witness(mu, mu_p, nu, nu_p, &side);
    Ok(DominanceCertificate { verdict: Verdict::Violated, flow, coupling: Vec::new(), witness: Some(witness) })
}

fn up_closure_witness(mu: &[Vec<i64>], mu_p: &[f64], nu: &[Vec<i64>], nu_p: &[f64], generators: &[usize]) -> UpperSetWitness {
    let above = |g: &[i64]| generators.iter().any(|&i| leq(&mu[i], g));
    let mu_indices: Vec<usize> = (0..mu.len()).filter(|&i| above(&mu[i])).collect();
    let nu_indices: Vec<usize> = (0..nu.len()).filter(|&j| above(&nu[j])).collect();
    UpperSetWitness { mu_mass: mass(mu_p, &mu_indices), nu_mass: mass(nu_p, &nu_indices), mu_indices, nu_indices }
}

/// [`dominance_between`] for two quenched measures, with the default pair cap.
pub fn dominance_certificate(mu: &QuenchedMeasure, nu: &QuenchedMeasure) -> Result<DominanceCertificate> {
    dominance_between(mu.support().members(), &mu.probabilities(), nu.support().members(), &nu.probabilities(), DEFAULT_PAIR_CAP)
}

/// Exhaustive search for an upper set `U` with `nu(U) < mu(U) - tolerance`.
///
/// Every upper set `U` contains the up-closure of `U ∩ supp mu`, which has
/// the same `mu`-mass and no more `nu`-mass, so it suffices to try the
/// up-closures of all subsets of `supp mu`. Returns the set with the largest
/// deficit. Intended for small supports only.
pub fn upper_set_violation(mu: &[Vec<i64>], mu_p: &[f64], nu: &[Vec<i64>], nu_p: &[f64]) -> Result<Option<UpperSetWitness>> {
    check_supports(mu, nu, mu_p, nu_p)?;
    if mu.len() > 20 || nu.len() > 64 {
        return Err(Error::Unsupported(format!(
            "upper-set enumeration is limited to 20 x 64 support points, got {} x {}",
            mu.len(),
            nu.len()
        )));
    }
    let up_mu: Vec<u64> = mu.iter().map(|g| bits(mu.iter().map(|h| leq(g, h)))).collect();
    let up_nu: Vec<u64> = mu.iter().map(|g| bits(nu.iter().map(|h| leq(g, h)))).collect();
    let mass_of = |probs: &[f64], set: u64| {
        let mut s = NeumaierSum::default();
        (0..probs.len()).filter(|k| set >> k & 1 == 1).for_each(|k| s.add(probs[k]));
        s.total()
    };
    let mut best: Option<(f64, u64, u64)> = None;
    for subset in 1u64..(1 << mu.len()) {
        let (mut um, mut un) = (0u64, 0u64);
        for i in (0..mu.len()).filter(|i| subset >> i & 1 == 1) {
            um |= up_mu[i];
            un |= up_nu[i];
        }
        let deficit = mass_of(mu_p, um) - mass_of(nu_p, un);
        if deficit > MARGINAL_TOLERANCE && best.is_none_or(|(d, _, _)| deficit > d) {
            best = Some((deficit, um, un));
        }
    }
    Ok(best.map(|(_, um, un)| {
        let mu_indices: Vec<usize> = (0..mu.len()).filter(|k| um >> k & 1 == 1).collect();
        let nu_indices: Vec<usize> = (0..nu.len()).filter(|k| un >> k & 1 == 1).collect();
        UpperSetWitness { mu_mass: mass(mu_p, &mu_indices), nu_mass: mass(nu_p, &nu_indices), mu_indices, nu_indices }
    }))
}

fn bits(flags: impl Iterator<Item = bool>) -> u64 {
    flags.enumerate().fold(0, |acc, (k, f)| if f { acc | 1 << k } else { acc })
}

// ---------------------------------------------------------------------------
// Ordered boundary pairs

fn first_excess(low: &HeightFunction, high: &HeightFunction, slack: i64) -> Result<Option<Vertex>> {
    if low.len() != high.len() || low.domain().any(|v| high.get(v).is_none()) {
        return Err(Error::Hypothesis("boundary data must share a domain".into()));
    }
    Ok(low.iter().find(|(v, h)| *h > high.get(v).expect("shared domain") + slack).map(|(v, _)| v.clone()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepViolation {
    pub pair: usize,
    pub draw: u64,
    pub witness: UpperSetWitness,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSummary {
    pub pairs: usize,
    pub draws: usize,
    pub certificates: usize,
    pub violations: Vec<SweepViolation>,
    pub max_marginal_error: f64,
    /// Certificates also checked by upper-set enumeration.
    pub oracle_checks: usize,
    pub oracle_mismatches: usize,
}

impl SweepSummary {
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.oracle_mismatches == 0 && self.max_marginal_error <= MARGINAL_TOLERANCE
    }
}

/// Certifies `mu_{M(R; h)} <= mu_{M(R; h~)}` for each ordered pair and each
/// of `draws` sampled potentials.
pub fn lemma18_sweep(
    region: &Region,
    pairs: &[(HeightFunction, HeightFunction)],
    model: &PotentialModel,
    draws: usize,
) -> Result<SweepSummary> {
    let mut summary = SweepSummary {
        pairs: pairs.len(),
        draws,
        certificates: 0,
        violations: Vec::new(),
        max_marginal_error: 0.0,
        oracle_checks: 0,
        oracle_mismatches: 0,
    };
    for (k, (h, ht)) in pairs.iter().enumerate() {
        if let Some(v) = first_excess(h, ht, 0)? {
            return Err(Error::Unordered(v));
        }
        let (low, w_low) = support_and_window(region, h)?;
        let (high, w_high) = support_and_window(region, ht)?;
        let (lo, hi) = w_low.union(&w_high).edge_range();
        let small = low.len() <= ORACLE_SUPPORT_LIMIT && high.len() <= ORACLE_SUPPORT_LIMIT;
        let results = (0..draws as u64)
            .into_par_iter()
            .map(|d| {
                let p = potential_draw(model, d, lo, hi)?;
                let mu = quenched_measure_on(region, Arc::clone(&low), &p)?;
                let nu = quenched_measure_on(region, Arc::clone(&high), &p)?;
                let (mu_p, nu_p) = (mu.probabilities(), nu.probabilities());
                let cert = dominance_between(low.members(), &mu_p, high.members(), &nu_p, DEFAULT_PAIR_CAP)?;
                let err = if cert.is_dominated() { cert.marginal_error(&mu_p, &nu_p) } else { 0.0 };
                let oracle = if small { Some(upper_set_violation(low.members(), &mu_p, high.members(), &nu_p)?.is_none()) } else { None };
                Ok((d, cert, err, oracle))
            })
            .collect::<Result<Vec<_>>>()?;
        for (d, cert, err, oracle) in results {
            summary.certificates += 1;
            summary.max_marginal_error = summary.max_marginal_error.max(err);
            if let Some(ok) = oracle {
                summary.oracle_checks += 1;
                if ok != cert.is_dominated() {
                    summary.oracle_mismatches += 1;
                }
            }
            if let Some(witness) = cert.witness {
                summary.violations.push(SweepViolation { pair: k, draw: d, witness });
            }
        }
    }
    Ok(summary)
}

/// Random boundary data on the boundary cycle of a 2D box: a uniformly
/// shuffled closed walk of `+-1` steps, redrawn until it is a valid,
/// extendable height function on the boundary.
pub fn random_box_boundary(region: &Region, rng: &mut impl Rng) -> Result<HeightFunction> {
    let cycle = boundary_cycle(region).ok_or_else(|| Error::Unsupported("random boundaries need a nondegenerate 2D box".into()))?;
    let half = cycle.len() / 2;
    loop {
        let mut steps: Vec<i64> = std::iter::repeat_n(1, half).chain(std::iter::repeat_n(-1, half)).collect();
        steps.shuffle(rng);
        let mut h = cycle[0].coord_sum().rem_euclid(2) + 2 * rng.gen_range(-1..=1);
        let mut data = HeightFunction::new();
        for (v, step) in cycle.iter().zip(&steps) {
            data.insert(v.clone(), h);
            h += step;
        }
        // Thin boxes have lattice edges that are chords of the cycle, so the
        // data can fail the Lipschitz condition before Kirszbraun is asked.
        if let Ok(pinning) = Pinning::new(region, &data) {
            if kirszbraun_witness(region, &pinning).is_none() {
                return Ok(data);
            }
        }
    }
}

/// `count` pointwise-ordered pairs `(h, h~)` of boundary data on a 2D box,
/// cycling through three constructions: an even lift, the pointwise max with
/// an independent boundary, and the pointwise min with one.
pub fn ordered_boundary_pairs(region: &Region, count: usize, seed: u64) -> Result<Vec<(HeightFunction, HeightFunction)>> {
    let mut rng = stream(seed, tag::EXPERIMENT);
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let h = random_box_boundary(region, &mut rng)?;
        let pair = match k % 3 {
            0 => {
                let lift = h.shifted(2 * rng.gen_range(0..=1));
                (h, lift)
            }
            1 => {
                let g = random_box_boundary(region, &mut rng)?;
                let hi = h.iter().map(|(v, z)| (v.clone(), z.max(g.get(v).expect("same cycle")))).collect();
                (h, hi)
            }
            _ => {
                let g = random_box_boundary(region, &mut rng)?;
                let lo = h.iter().map(|(v, z)| (v.clone(), z.min(g.get(v).expect("same cycle")))).collect();
                (lo, h)
            }
        };
        out.push(pair);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Gibbs identity suite

/// One random instance of the Gibbs identity checks.
#[derive(Clone, Debug, PartialEq)]
pub struct IdentityCase {
    pub region: Region,
    pub pinned: HeightFunction,
    pub model: ModelKind,
    /// Largest relative gap in the relative-complement identity.
    pub complement_gap: f64,
    /// Largest relative gap in the even-shift identity.
    pub shift_gap: f64,
}

impl IdentityCase {
    pub fn worst_gap(&self) -> f64 {
        self.complement_gap.max(self.shift_gap)
    }
}

/// Random data on the ends of a path or the boundary cycle of a box,
/// sometimes with one extra interior pin taken from an extension.
fn random_instance(rng: &mut impl Rng) -> Result<(Region, HeightFunction)> {
    let (region, mut data) = if rng.gen_bool(0.5) {
        let len = rng.gen_range(2..=7i64);
        let region = Region::make_box(&[0], &[len - 1])?;
        let left = 2 * rng.gen_range(-1..=1);
        let reach = len - 1;
        // Same parity as `reach`, within distance `reach` of `left`.
        let right = left - reach + 2 * rng.gen_range(0..=reach);
        let data = HeightFunction::from_pairs([(Vertex::from([0]), left), (Vertex::from([reach]), right)]);
        (region, data)
    } else {
        let (a, b) = (rng.gen_range(1..=3i64), rng.gen_range(1..=3i64));
        let region = Region::make_box(&[0, 0], &[a, b])?;
        let data = random_box_boundary(&region, rng)?;
        (region, data)
    };
    if rng.gen_bool(1.0 / 3.0) {
        let pinning = Pinning::new(&region, &data)?;
        let support = enumerate_pinned(&region, &pinning, DEFAULT_ENUMERATION_CAP)?;
        let free = pinning.free_indices();
        if !free.is_empty() {
            let g = support.member(rng.gen_range(0..support.len()));
            let i = free[rng.gen_range(0..free.len())];
            data.insert(region.vertex(i).clone(), g[i]);
        }
    }
    Ok((region, data))
}

/// Checks both Gibbs identities on `count` random instances: paths of up
/// to 7 vertices and boxes up to 4 x 4, under uniform and two-point
/// potentials. The potential is sampled on a window two edges wider than
/// needed on each side, so the shifted measures are covered.
pub fn identity_suite(count: usize, seed: u64) -> Result<Vec<IdentityCase>> {
    let mut rng = stream(seed, tag::EXPERIMENT);
    let mut cases = Vec::with_capacity(count);
    for k in 0..count {
        let (region, pinned) = random_instance(&mut rng)?;
        let model = if k % 2 == 0 {
            ModelKind::Uniform { halfwidth: rng.gen_range(0.25..2.0) }
        } else {
            ModelKind::TwoPoint { magnitude: rng.gen_range(0.25..2.0) }
        };
        let pinning = Pinning::new(&region, &pinned)?;
        let window = pinned_height_window(&region, &pinning)?;
        let (lo, hi) = window.edge_range();
        let p = sample_potential(&PotentialModel::new(model, rng.gen())?, lo - 2, hi + 4)?;
        cases.push(IdentityCase {
            complement_gap: check_relative_complement_identity(&region, &pinned, &p)?,
            shift_gap: check_shift_identity(&region, &pinned, &p)?,
            region,
            pinned,
            model,
        });
    }
    Ok(cases)
}

// ---------------------------------------------------------------------------
// Annealed ordering

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Corollary19Check {
    pub lhs: AnnealedEstimate,
    pub rhs: AnnealedEstimate,
    /// Allowed excess over `rhs + 2`: rounding in exact mode, three
    /// combined standard errors in Monte Carlo mode.
    pub slack: f64,
}

impl Corollary19Check {
    pub fn holds(&self) -> bool {
        self.lhs.value <= self.rhs.value + 2.0 + self.slack
    }
}

/// Annealed means of the height at `v` under `M(R; h)` and `M(R; h~)`,
/// where `h <= h~ + 2` on their common domain `R'` and `v` lies outside it.
/// Both use the same potentials on the union of their height windows.
pub fn corollary19_check(
    region: &Region,
    h: &HeightFunction,
    h_tilde: &HeightFunction,
    v: &Vertex,
    model: &PotentialModel,
    mode: Annealing,
) -> Result<Corollary19Check> {
    if let Some(x) = first_excess(h, h_tilde, 2)? {
        return Err(Error::Unordered(x));
    }
    let iv = region.index_of(v).ok_or_else(|| Error::VertexNotInRegion(v.clone()))?;
    if h.get(v).is_some() {
        return Err(Error::Hypothesis(format!("{v} must lie outside the pinned set")));
    }
    let (low, w_low) = support_and_window(region, h)?;
    let (high, w_high) = support_and_window(region, h_tilde)?;
    let window = w_low.union(&w_high).edge_range();
    let lhs = quenched_family(region, low, window, model, mode)?.expectation(|g| g[iv] as f64);
    let rhs = quenched_family(region, high, window, model, mode)?.expectation(|g| g[iv] as f64);
    let slack = match mode {
        Annealing::Exact => 1e-12 * (1.0 + lhs.value.abs().max(rhs.value.abs())),
        Annealing::MonteCarlo { .. } => 3.0 * lhs.stderr.hypot(rhs.stderr),
    };
    Ok(Corollary19Check { lhs, rhs, slack })
}

// ---------------------------------------------------------------------------
// Martingale audit

/// `M_k` on one reachable prefix `(h(x_0), ..., h(x_{k-1}))`.
#[derive(Clone, Debug, PartialEq)]
pub struct PrefixValue {
    pub prefix: Vec<i64>,
    /// Annealed probability of the prefix.
    pub mass: f64,
    pub value: f64,
    /// Delta-method standard error in Monte Carlo mode, else zero.
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MartingaleAudit {
    pub path: Vec<Vertex>,
    pub mode: Annealing,
    /// `values[k - 1]` lists `M_k` for every reachable prefix of length `k`.
    pub values: Vec<Vec<PrefixValue>>,
    pub max_diff: f64,
    /// Largest `|M_{k+1} - M_k|` minus its three-sigma allowance (equal to
    /// `max_diff` in exact mode).
    pub max_excess: f64,
}

impl MartingaleAudit {
    /// Whether every difference is at most 2 (up to Monte Carlo slack).
    pub fn holds(&self) -> bool {
        self.max_excess <= 2.0 + 1e-12
    }

    /// `M_k` on the given prefix.
    pub fn value(&self, prefix: &[i64]) -> Result<f64> {
        let level = self
            .values
            .get(prefix.len().wrapping_sub(1))
            .ok_or_else(|| Error::InvalidPath(format!("prefix length {} outside 1..={}", prefix.len(), self.path.len())))?;
        level
            .iter()
            .find(|p| p.prefix == prefix)
            .map(|p| p.value)
            .ok_or_else(|| Error::Hypothesis(format!("prefix {prefix:?} is unreachable")))
    }

    /// Largest `|M_k(p) - E[M_{k+1} | p]|` over all prefixes.
    pub fn telescoping_gap(&self) -> f64 {
        let mut worst = 0.0f64;
        for pair in self.values.windows(2) {
            let mut sums: HashMap<&[i64], (NeumaierSum, NeumaierSum)> = HashMap::new();
            for child in &pair[1] {
                let e = sums.entry(&child.prefix[..child.prefix.len() - 1]).or_default();
                e.0.add(child.mass * child.value);
                e.1.add(child.mass);
            }
            for parent in &pair[0] {
                if let Some((num, den)) = sums.get(parent.prefix.as_slice()) {
                    worst = worst.max((parent.value - num.total() / den.total()).abs());
                }
            }
        }
        worst
    }
}

fn validate_path(region: &Region, path: &[Vertex]) -> Result<Vec<usize>> {
    let first = path.first().ok_or_else(|| Error::InvalidPath("empty path".into()))?;
    let idx = path
        .iter()
        .map(|v| region.index_of(v).ok_or_else(|| Error::InvalidPath(format!("{v} is not in the region"))))
        .collect::<Result<Vec<_>>>()?;
    if !region.boundary_indices().contains(&idx[0]) {
        return Err(Error::InvalidPath(format!("{first} is not on the boundary")));
    }
    if let Some(w) = path.windows(2).find(|w| !w[0].is_adjacent(&w[1])) {
        return Err(Error::InvalidPath(format!("{} and {} are not adjacent", w[0], w[1])));
    }
    Ok(idx)
}

/// Doob martingale `M_k = E[h(v) | h(x_0), ..., h(x_{k-1})]` of the annealed
/// measure along `path`, with `v` the last vertex.
pub fn martingale_audit(
    region: &Region,
    h: &HeightFunction,
    path: &[Vertex],
    model: &PotentialModel,
    mode: Annealing,
) -> Result<MartingaleAudit> {
    let idx = validate_path(region, path)?;
    let iv = *idx.last().expect("nonempty path");
    let (support, window) = support_and_window(region, h)?;
    let family = quenched_family(region, Arc::clone(&support), window.edge_range(), model, mode)?;
    let draws: Vec<(f64, Vec<f64>)> = family.members.iter().map(|(w, qm)| (*w, qm.probabilities())).collect();
    let annealed = family.annealed_probabilities();
    let members = support.members();

    let mut values = Vec::with_capacity(idx.len());
    let mut ids: Vec<Vec<usize>> = Vec::with_capacity(idx.len());
    for k in 1..=idx.len() {
        let mut index: HashMap<Vec<i64>, usize> = HashMap::new();
        let mut prefixes = Vec::new();
        let ids_k: Vec<usize> = members
            .iter()
            .map(|g| {
                let key: Vec<i64> = idx[..k].iter().map(|&i| g[i]).collect();
                *index.entry(key.clone()).or_insert_with(|| {
                    prefixes.push(key);
                    prefixes.len() - 1
                })
            })
            .collect();
        // Per-draw numerator and denominator of each prefix.
        let mut num = vec![vec![0.0; draws.len()]; prefixes.len()];
        let mut den = vec![vec![0.0; draws.len()]; prefixes.len()];
        for (d, (_, probs)) in draws.iter().enumerate() {
            for (gi, g) in members.iter().enumerate() {
                num[ids_k[gi]][d] += probs[gi] * g[iv] as f64;
                den[ids_k[gi]][d] += probs[gi];
            }
        }
        let mut mass = vec![NeumaierSum::default(); prefixes.len()];
        for (gi, &pid) in ids_k.iter().enumerate() {
            mass[pid].add(annealed[gi]);
        }
        let level: Vec<PrefixValue> = prefixes
            .into_iter()
            .enumerate()
            .map(|(pid, prefix)| {
                let (mut n, mut dn) = (NeumaierSum::default(), NeumaierSum::default());
                for (d, (w, _)) in draws.iter().enumerate() {
                    n.add(w * num[pid][d]);
                    dn.add(w * den[pid][d]);
                }
                let value = n.total() / dn.total();
                let stderr = match mode {
                    Annealing::Exact => 0.0,
                    Annealing::MonteCarlo { .. } => {
                        let mut ss = NeumaierSum::default();
                        let mut total = NeumaierSum::default();
                        for d in 0..draws.len() {
                            let r = num[pid][d] - value * den[pid][d];
                            ss.add(r * r);
                            total.add(den[pid][d]);
                        }
                        ss.total().sqrt() / total.total()
                    }
                };
                PrefixValue { prefix, mass: mass[pid].total(), value, stderr }
            })
            .collect();
        values.push(level);
        ids.push(ids_k);
    }

    let (mut max_diff, mut max_excess) = (0.0f64, 0.0f64);
    for k in 0..idx.len() - 1 {
        for gi in 0..members.len() {
            if annealed[gi] <= 0.0 {
                continue;
            }
            let a = &values[k][ids[k][gi]];
            let b = &values[k + 1][ids[k + 1][gi]];
            let diff = (b.value - a.value).abs();
            max_diff = max_diff.max(diff);
            max_excess = max_excess.max(diff - 3.0 * a.stderr.hypot(b.stderr));
        }
    }
    Ok(MartingaleAudit { path: path.to_vec(), mode, values, max_diff, max_excess })
}

/// Self-avoiding walks `x_0, ..., x_{l-1}` with `x_0` on the boundary, the
/// last vertex in the interior, and at most `max_len` vertices.
pub fn boundary_walks(region: &Region, max_len: usize) -> Vec<Vec<Vertex>> {
    let boundary = region.boundary_indices();
    let mut on_boundary = vec![false; region.len()];
    boundary.iter().for_each(|&i| on_boundary[i] = true);
    let mut out = Vec::new();
    let mut stack: Vec<Vec<usize>> = boundary.iter().map(|&b| vec![b]).collect();
    stack.reverse();
    while let Some(walk) = stack.pop() {
        let last = *walk.last().expect("nonempty");
        if !on_boundary[last] {
            out.push(walk.iter().map(|&i| region.vertex(i).clone()).collect());
        }
        if walk.len() < max_len {
            for &u in region.neighbor_indices(last).iter().rev() {
                if !walk.contains(&u) {
                    let mut next = walk.clone();
                    next.push(u);
                    stack.push(next);
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Bounds

fn positive(name: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonPositive { name, value })
    }
}

/// `2 exp(-l c^2 / 2)`.
pub fn azuma_bound(l: u64, c: f64) -> Result<f64> {
    let l = positive("l", l as f64)?;
    let c = positive("c", c)?;
    Ok(2.0 * (-l * c * c / 2.0).exp())
}

/// `2 |R| exp(-n c^2 / A)`.
pub fn concentration_bound(region_size: u64, n: u64, c: f64, a: f64) -> Result<f64> {
    let size = positive("region size", region_size as f64)?;
    let n = positive("n", n as f64)?;
    let c = positive("c", c)?;
    let a = positive("A", a)?;
    Ok(2.0 * size * (-n * c * c / a).exp())
}

/// One row of an Azuma tail comparison for a single vertex.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AzumaRow {
    pub c: f64,
    /// `l c`; the event is `|h(v) - E h(v)| > l c`.
    pub threshold: f64,
    pub bound: f64,
    /// Tail probability computed from the annealed law.
    pub exact_tail: f64,
    pub empirical: f64,
    pub samples: usize,
}

impl AzumaRow {
    pub fn checked(&self) -> bool {
        self.bound < 1.0
    }

    /// Empirical tail below the bound with three binomial standard deviations.
    pub fn passes(&self) -> bool {
        self.empirical < self.bound + 3.0 * stats::binomial_sd(self.bound, self.samples)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AzumaReport {
    pub vertex: Vertex,
    /// Vertices on a shortest path from the boundary to `v`.
    pub l: u64,
    pub mean: f64,
    pub rows: Vec<AzumaRow>,
}

/// Tail of `|h(v) - E h(v)|` under the annealed measure against
/// [`azuma_bound`], exactly and from `samples` exact draws.
#[allow(clippy::too_many_arguments)]
pub fn azuma_tail_check(
    region: &Region,
    h: &HeightFunction,
    v: &Vertex,
    model: &PotentialModel,
    mode: Annealing,
    c_grid: &[f64],
    samples: usize,
    seed: u64,
) -> Result<AzumaReport> {
    let iv = region.index_of(v).ok_or_else(|| Error::VertexNotInRegion(v.clone()))?;
    let l = region.distances_to_set(&region.boundary_indices())[iv] as u64 + 1;
    let (support, window) = support_and_window(region, h)?;
    let family = quenched_family(region, Arc::clone(&support), window.edge_range(), model, mode)?;
    let probs = family.annealed_probabilities();
    let heights: Vec<f64> = support.members().iter().map(|g| g[iv] as f64).collect();
    let mut mean = NeumaierSum::default();
    probs.iter().zip(&heights).for_each(|(p, x)| mean.add(p * x));
    let mean = mean.total();
    let sampler = AnnealedSampler::new(&probs);
    let mut rng = stream(seed, tag::EXACT_SAMPLE);
    let draws: Vec<f64> = (0..samples).map(|_| (heights[sampler.draw(&mut rng)] - mean).abs()).collect();
    let rows = c_grid
        .iter()
        .map(|&c| {
            let threshold = l as f64 * c;
            let mut exact = NeumaierSum::default();
            probs.iter().zip(&heights).filter(|(_, x)| (*x - mean).abs() > threshold).for_each(|(p, _)| exact.add(*p));
            let hits = draws.iter().filter(|&&d| d > threshold).count();
            Ok(AzumaRow {
                c,
                threshold,
                bound: azuma_bound(l, c)?,
                exact_tail: exact.total(),
                empirical: if samples == 0 { 0.0 } else { hits as f64 / samples as f64 },
                samples,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AzumaReport { vertex: v.clone(), l, mean, rows })
}

// ---------------------------------------------------------------------------
// Concentration experiment

/// Boundary data used by the experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryMode {
    /// `h(x) = x_1 + ... + x_m mod 2` on the boundary.
    Parity,
    /// The saddle-shaped extremal boundary (maximal slope on every side).
    Extremal,
}

impl fmt::Display for BoundaryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundaryMode::Parity => "parity",
            BoundaryMode::Extremal => "extremal",
        })
    }
}

impl FromStr for BoundaryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "parity" => Ok(BoundaryMode::Parity),
            "extremal" => Ok(BoundaryMode::Extremal),
            other => Err(Error::Unsupported(format!("unknown boundary mode `{other}` (expected parity or extremal)"))),
        }
    }
}

/// Boundary data on the inner boundary of `region`.
pub fn boundary_data(region: &Region, mode: BoundaryMode) -> Result<HeightFunction> {
    match mode {
        BoundaryMode::Parity => Ok(parity_height(region).restricted(&region.boundary())),
        BoundaryMode::Extremal => {
            let (lows, _) = region.box_bounds().ok_or_else(|| Error::Unsupported("extremal boundary requires a box region".into()))?;
            let anchor = lows.iter().sum::<i64>().rem_euclid(2);
            extremal_boundary(region, Slope::Up, anchor, ExtremalShape::Saddle)
        }
    }
}

/// How heights are drawn in the concentration experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Estimator {
    /// Enumerate the support and anneal exactly or by Monte Carlo.
    Exact(Annealing),
    /// Glauber chains, one per potential draw, sampled every `thin_sweeps`
    /// sweeps after burn-in.
    Chain { burn_in: BurnIn, thin_sweeps: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConcentrationConfig {
    /// Side lengths: `R_n` is the `n x n` box `[0, n-1]^2`.
    pub sizes: Vec<usize>,
    pub boundary: BoundaryMode,
    pub model: PotentialModel,
    pub c_grid: Vec<f64>,
    pub a: f64,
    /// Mean estimation budget: potential draws times samples per draw.
    pub mean_draws: usize,
    pub mean_samples: usize,
    /// Tail budget: fresh potential draws times samples per draw.
    pub tail_draws: usize,
    pub tail_samples: usize,
    pub estimator: Estimator,
    pub seed: u64,
}

impl ConcentrationConfig {
    pub fn new(sizes: Vec<usize>, model: PotentialModel, estimator: Estimator) -> Self {
        ConcentrationConfig {
            sizes,
            boundary: BoundaryMode::Extremal,
            model,
            c_grid: vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0],
            a: 2.0,
            mean_draws: 200,
            mean_samples: 50,
            tail_draws: 200,
            tail_samples: 5,
            estimator,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TailRow {
    pub c: f64,
    pub samples: usize,
    pub tail_freq: f64,
    pub bound: f64,
}

impl TailRow {
    /// Rows with a nonvacuous bound are the ones that are checked.
    pub fn checked(&self) -> bool {
        self.bound < 1.0
    }

    pub fn passes(&self) -> bool {
        self.tail_freq <= self.bound + 3.0 * stats::binomial_sd(self.bound, self.samples)
    }
}

/// Burn-in diagnostics over all chains of one experiment.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BurnInStats {
    pub chains: usize,
    /// Chains whose coupled extremal copies met (coalescence rule only).
    pub coalesced: usize,
    pub max_coalescence_sweeps: u64,
    /// Largest per-site gap left when coalescence was not reached.
    pub max_residual_gap: f64,
}

impl BurnInStats {
    fn record(&mut self, outcome: &BurnInOutcome) {
        self.chains += 1;
        if let Some(s) = outcome.coalesced_after {
            self.coalesced += 1;
            self.max_coalescence_sweeps = self.max_coalescence_sweeps.max(s);
        }
        self.max_residual_gap = self.max_residual_gap.max(outcome.residual_gap);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SizeReport {
    pub n: usize,
    pub region_size: usize,
    pub a: f64,
    pub l1_diameter: i64,
    pub max_boundary_distance: u32,
    /// Estimated annealed mean at every vertex, in region order.
    pub means: Vec<f64>,
    pub mean_stderr_max: f64,
    /// `max_v |h(v) - mean(v)|` for every tail sample.
    pub max_deviations: Vec<f64>,
    pub rows: Vec<TailRow>,
    pub burn_in: BurnInStats,
}

impl SizeReport {
    pub fn deviation_quantile(&self, q: f64) -> f64 {
        stats::quantile(&self.max_deviations, q)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConcentrationReport {
    pub sizes: Vec<SizeReport>,
}

impl ConcentrationReport {
    pub const CSV_HEADER: &'static str = "n,c,samples,tail_freq,bound,mean_stderr_max";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for s in &self.sizes {
            for r in &s.rows {
                out.push_str(&format!("{},{},{},{},{},{}\n", s.n, r.c, r.samples, r.tail_freq, r.bound, s.mean_stderr_max));
            }
        }
        out
    }

    /// `(n, row)` for every checked row.
    pub fn checked_rows(&self) -> impl Iterator<Item = (usize, &TailRow)> {
        self.sizes.iter().flat_map(|s| s.rows.iter().filter(|r| r.checked()).map(move |r| (s.n, r)))
    }

    pub fn all_pass(&self) -> bool {
        self.checked_rows().all(|(_, r)| r.passes())
    }
}

/// Everything fixed for one box size.
struct Setup {
    n: usize,
    region: Region,
    pinning: Pinning,
    window: (i64, i64),
}

impl Setup {
    fn new(n: usize, boundary: BoundaryMode) -> Result<Self> {
        let region = Region::square(n)?;
        let data = boundary_data(&region, boundary)?;
        let pinning = Pinning::new(&region, &data)?;
        if let Some(w) = kirszbraun_witness(&region, &pinning) {
            return Err(Error::NotExtendable { x: w.x, y: w.y, diff: w.diff, dist: w.dist });
        }
        let window = pinned_height_window(&region, &pinning)?.edge_range();
        Ok(Setup { n, region, pinning, window })
    }

    fn chain_seed(&self, seed: u64, draw: u64) -> u64 {
        derive_seed(seed, tag::EXPERIMENT | (self.n as u64) << 32 | draw)
    }

    /// Chain samples for potential draw `draw`.
    fn chain_samples(
        &self,
        model: &PotentialModel,
        draw: u64,
        seed: u64,
        rule: BurnIn,
        thin_sweeps: u64,
        samples: usize,
    ) -> Result<(BurnInOutcome, Vec<Vec<i64>>)> {
        let p: Potential = potential_draw(model, draw, self.window.0, self.window.1)?;
        let mut rng = stream(self.chain_seed(seed, draw), tag::CHAIN);
        let thin = thin_sweeps * self.pinning.free_indices().len() as u64;
        sample_chain(&self.region, &self.pinning, &p, rule, samples, thin, &mut rng)
    }

    /// Per-vertex means and the largest per-vertex standard error, from
    /// draws `0..draws`.
    #[allow(clippy::too_many_arguments)]
    fn chain_means(
        &self,
        model: &PotentialModel,
        seed: u64,
        rule: BurnIn,
        thin_sweeps: u64,
        draws: usize,
        samples: usize,
        stats_out: &mut BurnInStats,
    ) -> Result<(Vec<f64>, f64)> {
        let per_draw = (0..draws as u64)
            .into_par_iter()
            .map(|d| {
                let (outcome, states) = self.chain_samples(model, d, seed, rule, thin_sweeps, samples)?;
                let avg: Vec<f64> =
                    (0..self.region.len()).map(|i| states.iter().map(|s| s[i] as f64).sum::<f64>() / states.len() as f64).collect();
                Ok((outcome, avg))
            })
            .collect::<Result<Vec<_>>>()?;
        per_draw.iter().for_each(|(o, _)| stats_out.record(o));
        let mut means = Vec::with_capacity(self.region.len());
        let mut worst = 0.0f64;
        for i in 0..self.region.len() {
            let xs: Vec<f64> = per_draw.iter().map(|(_, a)| a[i]).collect();
            means.push(stats::mean(&xs));
            worst = worst.max(stats::standard_error(&xs));
        }
        Ok((means, worst))
    }

    fn max_deviation(means: &[f64], g: &[i64]) -> f64 {
        g.iter().zip(means).map(|(&z, m)| (z as f64 - m).abs()).fold(0.0, f64::max)
    }
}

fn validate_config(cfg: &ConcentrationConfig) -> Result<()> {
    positive("A", cfg.a)?;
    for &c in &cfg.c_grid {
        positive("c", c)?;
    }
    for (name, v) in [
        ("mean draws", cfg.mean_draws),
        ("mean samples", cfg.mean_samples),
        ("tail draws", cfg.tail_draws),
        ("tail samples", cfg.tail_samples),
    ] {
        positive(name, v as f64)?;
    }
    if let Some(&n) = cfg.sizes.iter().find(|&&n| n < 2) {
        return Err(Error::NonPositive { name: "n - 1", value: n as f64 - 1.0 });
    }
    cfg.model.kind.validate()
}

/// Runs the concentration experiment for every size in `cfg`.
pub fn concentration_experiment(cfg: &ConcentrationConfig) -> Result<ConcentrationReport> {
    validate_config(cfg)?;
    let mut sizes = Vec::with_capacity(cfg.sizes.len());
    for &n in &cfg.sizes {
        sizes.push(size_experiment(cfg, n)?);
    }
    Ok(ConcentrationReport { sizes })
}

fn size_experiment(cfg: &ConcentrationConfig, n: usize) -> Result<SizeReport> {
    let setup = Setup::new(n, cfg.boundary)?;
    let region = &setup.region;
    let l1_diameter = region.l1_diameter();
    if (l1_diameter as f64) > cfg.a * n as f64 {
        return Err(Error::Hypothesis(format!("A = {} is below diam(R_n)/n = {}/{}", cfg.a, l1_diameter, n)));
    }
    let max_boundary_distance = region.distances_to_set(&region.boundary_indices()).into_iter().max().unwrap_or(0);
    let mut burn = BurnInStats::default();
    let (means, mean_stderr_max, max_deviations) = match cfg.estimator {
        Estimator::Exact(mode) => {
            let support = Arc::new(enumerate_pinned(region, &setup.pinning, DEFAULT_ENUMERATION_CAP)?);
            let family = quenched_family(region, Arc::clone(&support), setup.window, &cfg.model, mode)?;
            let probs = family.annealed_probabilities();
            let mut means = Vec::with_capacity(region.len());
            let mut worst = 0.0f64;
            for i in 0..region.len() {
                let est = family.expectation(|g| g[i] as f64);
                means.push(est.value);
                worst = worst.max(est.stderr);
            }
            let total = cfg.tail_draws * cfg.tail_samples;
            let mut rng = stream(derive_seed(cfg.seed, tag::EXPERIMENT | (n as u64) << 32), tag::EXACT_SAMPLE);
            let sampler = AnnealedSampler::new(&probs);
            let devs = (0..total).map(|_| Setup::max_deviation(&means, support.member(sampler.draw(&mut rng)))).collect();
            (means, worst, devs)
        }
        Estimator::Chain { burn_in, thin_sweeps } => {
            let (means, worst) =
                setup.chain_means(&cfg.model, cfg.seed, burn_in, thin_sweeps, cfg.mean_draws, cfg.mean_samples, &mut burn)?;
            let offset = cfg.mean_draws as u64;
            let per_draw = (0..cfg.tail_draws as u64)
                .into_par_iter()
                .map(|d| setup.chain_samples(&cfg.model, offset + d, cfg.seed, burn_in, thin_sweeps, cfg.tail_samples))
                .collect::<Result<Vec<_>>>()?;
            let mut devs = Vec::with_capacity(cfg.tail_draws * cfg.tail_samples);
            for (outcome, states) in &per_draw {
                burn.record(outcome);
                devs.extend(states.iter().map(|g| Setup::max_deviation(&means, g)));
            }
            (means, worst, devs)
        }
    };
    let samples = max_deviations.len();
    let rows = cfg
        .c_grid
        .iter()
        .map(|&c| {
            let threshold = c * (n as f64).sqrt();
            let hits = max_deviations.iter().filter(|&&d| d >= threshold).count();
            Ok(TailRow {
                c,
                samples,
                tail_freq: hits as f64 / samples as f64,
                bound: concentration_bound(region.len() as u64, n as u64, c, cfg.a)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SizeReport {
        n,
        region_size: region.len(),
        a: cfg.a,
        l1_diameter,
        max_boundary_distance,
        means,
        mean_stderr_max,
        max_deviations,
        rows,
        burn_in: burn,
    })
}

/// Inverse-CDF sampling from a fixed probability vector.
struct AnnealedSampler {
    cdf: Vec<f64>,
}

impl AnnealedSampler {
    fn new(probs: &[f64]) -> Self {
        let mut acc = NeumaierSum::default();
        let cdf = probs
            .iter()
            .map(|&p| {
                acc.add(p);
                acc.total()
            })
            .collect();
        AnnealedSampler { cdf }
    }

    fn draw(&self, rng: &mut impl Rng) -> usize {
        let u = rng.gen::<f64>() * self.cdf.last().copied().unwrap_or(1.0);
        self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1)
    }
}

/// Settings for the paired-seed comparison of relative fluctuations at two
/// box sizes.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalingConfig {
    pub small: usize,
    pub large: usize,
    pub boundary: BoundaryMode,
    pub model: PotentialModel,
    pub seeds: usize,
    pub samples_per_seed: usize,
    pub mean_draws: usize,
    pub mean_samples: usize,
    pub burn_in_small: BurnIn,
    pub burn_in_large: BurnIn,
    pub thin_sweeps: u64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingReport {
    pub small: usize,
    pub large: usize,
    /// Median over a seed's samples of `max deviation / n`, per seed.
    pub medians_small: Vec<f64>,
    pub medians_large: Vec<f64>,
    pub burn_in_small: BurnInStats,
    pub burn_in_large: BurnInStats,
}

impl ScalingReport {
    /// Fraction of seeds whose relative fluctuation is smaller at the larger size.
    pub fn fraction_decreasing(&self) -> f64 {
        let wins = self.medians_small.iter().zip(&self.medians_large).filter(|(s, l)| l < s).count();
        wins as f64 / self.medians_small.len().max(1) as f64
    }
}

/// For each seed `s`, draws a fresh potential and chain at both sizes and
/// records the median of `max_v |h(v) - mean(v)| / n` over the chain samples.
pub fn scaling_experiment(cfg: &ScalingConfig) -> Result<ScalingReport> {
    positive("seeds", cfg.seeds as f64)?;
    positive("samples per seed", cfg.samples_per_seed as f64)?;
    let run = |n: usize, rule: BurnIn| -> Result<(Vec<f64>, BurnInStats)> {
        let setup = Setup::new(n, cfg.boundary)?;
        let mut burn = BurnInStats::default();
        let (means, _) = setup.chain_means(&cfg.model, cfg.seed, rule, cfg.thin_sweeps, cfg.mean_draws, cfg.mean_samples, &mut burn)?;
        let offset = cfg.mean_draws as u64;
        let per_seed = (0..cfg.seeds as u64)
            .into_par_iter()
            .map(|s| setup.chain_samples(&cfg.model, offset + s, cfg.seed, rule, cfg.thin_sweeps, cfg.samples_per_seed))
            .collect::<Result<Vec<_>>>()?;
        let medians = per_seed
            .iter()
            .map(|(outcome, states)| {
                burn.record(outcome);
                let rel: Vec<f64> = states.iter().map(|g| Setup::max_deviation(&means, g) / n as f64).collect();
                stats::median(&rel)
            })
            .collect();
        Ok((medians, burn))
    };
    let (medians_small, burn_in_small) = run(cfg.small, cfg.burn_in_small)?;
    let (medians_large, burn_in_large) = run(cfg.large, cfg.burn_in_large)?;
    Ok(ScalingReport { small: cfg.small, large: cfg.large, medians_small, medians_large, burn_in_small, burn_in_large })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::quenched_measure;

    fn path3() -> Region {
        Region::make_box(&[0], &[2]).unwrap()
    }

    fn ends(a: i64, b: i64) -> HeightFunction {
        HeightFunction::from_pairs([(Vertex::from([0]), a), (Vertex::from([2]), b)])
    }

    fn zero_measure(region: &Region, h: &HeightFunction) -> QuenchedMeasure {
        quenched_measure(region, h, &Potential::zeros(-4, 6).unwrap()).unwrap()
    }

    fn twopoint(a: f64, seed: u64) -> PotentialModel {
        PotentialModel::new(ModelKind::TwoPoint { magnitude: a }, seed).unwrap()
    }

    #[test]
    fn identical_measures_couple_on_the_diagonal() {
        let r = path3();
        let mu = zero_measure(&r, &ends(0, 0));
        let cert = dominance_certificate(&mu, &mu).unwrap();
        assert!(cert.is_dominated());
        assert!((cert.flow - 1.0).abs() < 1e-12);
        assert!(cert.coupling.iter().all(|&(i, j, _)| i == j));
    }

    #[test]
    fn lifted_path_boundary_is_dominated() {
        let r = path3();
        let mu = zero_measure(&r, &ends(0, 0));
        let nu = zero_measure(&r, &ends(2, 2));
        let cert = dominance_certificate(&mu, &nu).unwrap();
        assert_eq!(cert.verdict, Verdict::Dominated);
        assert!(cert.marginal_error(&mu.probabilities(), &nu.probabilities()) < 1e-12);
        for &(i, j, _) in &cert.coupling {
            assert!(leq(mu.support().member(i), nu.support().member(j)));
        }
    }

    #[test]
    fn reversed_path_boundary_yields_upper_set() {
        let r = path3();
        let mu = zero_measure(&r, &ends(2, 2)); // middle in {1, 3}
        let nu = zero_measure(&r, &ends(0, 0)); // middle in {-1, 1}
        let cert = dominance_certificate(&mu, &nu).unwrap();
        assert_eq!(cert.verdict, Verdict::Violated);
        let w = cert.witness.unwrap();
        // The witness is the up-closure of supp mu; the pinned ends (2, 2)
        // already keep every member of supp nu out of it.
        assert_eq!(w.mu_indices, vec![0, 1]);
        assert!(w.nu_indices.is_empty());
        assert!(w.nu_mass < w.mu_mass);
        // {middle >= 1} is another violating upper set: nu-mass 1/2 < 1.
        let upper = |g: &[i64]| g[1] >= 1;
        let nu_mass: f64 = (0..nu.len()).filter(|&j| upper(nu.support().member(j))).map(|j| nu.probability(j)).sum();
        assert!((nu_mass - 0.5).abs() < 1e-12);
        let oracle =
            upper_set_violation(mu.support().members(), &mu.probabilities(), nu.support().members(), &nu.probabilities()).unwrap().unwrap();
        assert!(oracle.nu_mass < oracle.mu_mass);
    }

    #[test]
    fn pair_cap_is_enforced() {
        let r = path3();
        let mu = zero_measure(&r, &ends(0, 0));
        let (pts, p) = (mu.support().members(), mu.probabilities());
        assert_eq!(dominance_between(pts, &p, pts, &p, 3), Err(Error::TooManyPairs { pairs: 4, cap: 3 }));
    }

    #[test]
    fn ring_against_lifted_ring_on_3x3() {
        let r = Region::square(3).unwrap();
        let ring = parity_height(&r).restricted(&r.boundary());
        let pairs = vec![(ring.clone(), ring.shifted(2)), (ring.clone(), ring.clone())];
        let s = lemma18_sweep(&r, &pairs, &twopoint(1.0, 5), 50).unwrap();
        assert_eq!(s.certificates, 100);
        assert!(s.violations.is_empty());
        assert_eq!(s.oracle_checks, 100);
        assert!(s.passed());
    }

    #[test]
    fn unordered_pair_is_rejected() {
        let r = path3();
        let pairs = vec![(ends(2, 0), ends(0, 0))];
        assert!(matches!(lemma18_sweep(&r, &pairs, &twopoint(1.0, 0), 1), Err(Error::Unordered(_))));
    }

    #[test]
    fn generated_pairs_are_ordered_boundaries() {
        let r = Region::square(4).unwrap();
        for (h, ht) in ordered_boundary_pairs(&r, 9, 3).unwrap() {
            assert_eq!(h.pointwise_le(&ht), Some(true));
            assert_eq!(h.len(), r.boundary().len());
            assert!(crate::heights::kirszbraun_extendable(&r, &ht).unwrap());
        }
    }

    #[test]
    fn identity_suite_holds() {
        let cases = identity_suite(120, 11).unwrap();
        assert_eq!(cases.len(), 120);
        assert!(cases.iter().any(|c| c.region.dim() == 1) && cases.iter().any(|c| c.region.dim() == 2));
        for c in &cases {
            assert!(c.worst_gap() <= 1e-12, "{:?}", c);
        }
    }

    #[test]
    fn corollary_on_the_path() {
        let r = path3();
        let c = corollary19_check(&r, &ends(0, 0), &ends(2, 2), &Vertex::from([1]), &twopoint(1.0, 0), Annealing::Exact).unwrap();
        assert!(c.lhs.value.abs() < 1e-12);
        assert!((c.rhs.value - 2.0).abs() < 1e-12);
        assert!(c.holds());
        let same = corollary19_check(&r, &ends(0, 0), &ends(0, 0), &Vertex::from([1]), &twopoint(1.0, 0), Annealing::Exact).unwrap();
        assert_eq!(same.lhs.value, same.rhs.value);
        assert!(matches!(
            corollary19_check(&r, &ends(0, 0), &ends(2, 2), &Vertex::from([0]), &twopoint(1.0, 0), Annealing::Exact),
            Err(Error::Hypothesis(_))
        ));
    }

    #[test]
    fn martingale_on_the_path() {
        let r = path3();
        let zero = PotentialModel::new(ModelKind::Zero, 0).unwrap();
        let path = [Vertex::from([0]), Vertex::from([1])];
        let audit = martingale_audit(&r, &ends(0, 0), &path, &zero, Annealing::Exact).unwrap();
        assert_eq!(audit.value(&[0]).unwrap(), 0.0);
        assert_eq!(audit.value(&[0, 1]).unwrap(), 1.0);
        assert_eq!(audit.value(&[0, -1]).unwrap(), -1.0);
        assert!(audit.value(&[0, 3]).is_err());
        assert_eq!(audit.max_diff, 1.0);
        assert!(audit.holds());
        assert_eq!(audit.telescoping_gap(), 0.0);
    }

    #[test]
    fn martingale_path_validation() {
        let r = Region::square(3).unwrap();
        let ring = parity_height(&r).restricted(&r.boundary());
        let zero = PotentialModel::new(ModelKind::Zero, 0).unwrap();
        let interior_start = [Vertex::from([1, 1]), Vertex::from([1, 2])];
        assert!(matches!(martingale_audit(&r, &ring, &interior_start, &zero, Annealing::Exact), Err(Error::InvalidPath(_))));
        let jump = [Vertex::from([0, 0]), Vertex::from([1, 1])];
        assert!(matches!(martingale_audit(&r, &ring, &jump, &zero, Annealing::Exact), Err(Error::InvalidPath(_))));
        assert!(matches!(martingale_audit(&r, &ring, &[], &zero, Annealing::Exact), Err(Error::InvalidPath(_))));
    }

    #[test]
    fn martingale_under_two_point_annealing() {
        let r = Region::square(3).unwrap();
        let ring = parity_height(&r).restricted(&r.boundary());
        let path = [Vertex::from([0, 1]), Vertex::from([1, 1])];
        let exact = martingale_audit(&r, &ring, &path, &twopoint(1.0, 0), Annealing::Exact).unwrap();
        assert!(exact.holds() && exact.max_diff <= 2.0);
        assert!(exact.telescoping_gap() < 1e-12);
        let mc = martingale_audit(&r, &ring, &path, &twopoint(1.0, 0), Annealing::MonteCarlo { draws: 200 }).unwrap();
        assert!(mc.holds());
        assert!(mc.telescoping_gap() < 1e-12);
    }

    #[test]
    fn walks_start_on_boundary_and_end_inside() {
        let r = Region::square(3).unwrap();
        let walks = boundary_walks(&r, 2);
        assert_eq!(walks.len(), 4);
        let longer = boundary_walks(&r, 4);
        let boundary = r.boundary();
        for w in &longer {
            assert!(boundary.contains(&w[0]));
            assert!(!boundary.contains(w.last().unwrap()));
            assert!(w.windows(2).all(|p| p[0].is_adjacent(&p[1])));
        }
        assert!(longer.len() > walks.len());
    }

    #[test]
    fn bound_formulas() {
        assert!((azuma_bound(4, 1.0).unwrap() - 2.0 * (-2.0f64).exp()).abs() < 1e-15);
        assert!((azuma_bound(1, 1e-9).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(azuma_bound(100, 1.0).unwrap(), 2.0 * (-50.0f64).exp());
        assert!(azuma_bound(0, 1.0).is_err() && azuma_bound(1, 0.0).is_err() && azuma_bound(1, f64::NAN).is_err());
        assert_eq!(concentration_bound(625, 25, 2.0, 2.0).unwrap(), 1250.0 * (-50.0f64).exp());
        let b = concentration_bound(9, 3, 3.0, 2.0).unwrap();
        assert_eq!(b, 18.0 * (-13.5f64).exp());
        assert!((b - 2.47e-5).abs() < 1e-7, "{b}");
        assert!(concentration_bound(9, 3, 3.0, 0.0).is_err());
        assert!(concentration_bound(0, 3, 3.0, 1.0).is_err());
    }

    #[test]
    fn exponent_chain_from_path_length() {
        // With l c_v = c' sqrt(n): l c_v^2 = c'^2 n / l. A path length l <= A n / 2
        // gives l c_v^2 >= 2 c'^2 / A, and the per-vertex Azuma term is then at
        // most 2 exp(-c'^2 / A).
        for n in 1..=30u64 {
            for a in [0.5, 1.0, 2.0, 3.5] {
                let lmax = (a * n as f64 / 2.0).floor() as u64;
                for l in 1..=lmax {
                    for cp in [0.1, 0.5, 1.0, 2.0] {
                        let cv = cp * (n as f64).sqrt() / l as f64;
                        assert!(l as f64 * cv * cv >= 2.0 * cp * cp / a * (1.0 - 1e-12));
                        let azuma = azuma_bound(l, cv).unwrap();
                        assert!(azuma <= 2.0 * (-cp * cp / a).exp() * (1.0 + 1e-12));
                    }
                }
            }
        }
    }

    #[test]
    fn exponent_chain_needs_short_paths() {
        // The stronger l c_v^2 >= 2 c'^2 n / A holds exactly when l <= A / 2.
        let (n, a, cp) = (25u64, 2.0, 1.0);
        for l in 1..=25u64 {
            let cv = cp * (n as f64).sqrt() / l as f64;
            let strong = l as f64 * cv * cv >= 2.0 * cp * cp * n as f64 / a * (1.0 - 1e-12);
            assert_eq!(strong, l as f64 <= a / 2.0, "l={l}");
        }
    }

    #[test]
    fn tiny_exact_experiment() {
        let zero = PotentialModel::new(ModelKind::Zero, 0).unwrap();
        let mut cfg = ConcentrationConfig::new(vec![3], zero, Estimator::Exact(Annealing::Exact));
        cfg.boundary = BoundaryMode::Parity;
        cfg.tail_draws = 20;
        cfg.tail_samples = 10;
        let report = concentration_experiment(&cfg).unwrap();
        let s = &report.sizes[0];
        assert_eq!(s.region_size, 9);
        assert!(s.max_deviations.iter().all(|&d| (d - 1.0).abs() < 1e-12));
        for r in &s.rows {
            if r.c * 3f64.sqrt() > 1.0 {
                assert_eq!(r.tail_freq, 0.0);
            }
        }
        assert!(report.all_pass());
        let csv = report.to_csv();
        assert!(csv.starts_with("n,c,samples,tail_freq,bound,mean_stderr_max\n"));
        assert_eq!(csv.lines().count(), 1 + cfg.c_grid.len());
    }

    #[test]
    fn a_hypothesis_is_checked() {
        let zero = PotentialModel::new(ModelKind::Zero, 0).unwrap();
        let mut cfg = ConcentrationConfig::new(vec![5], zero, Estimator::Exact(Annealing::Exact));
        cfg.a = 1.0; // diam = 8 > 5
        assert!(matches!(concentration_experiment(&cfg), Err(Error::Hypothesis(_))));
    }

    #[test]
    fn chain_experiment_is_deterministic() {
        let mut cfg = ConcentrationConfig::new(
            vec![5],
            twopoint(0.05, 1),
            Estimator::Chain { burn_in: BurnIn::Coalescence { max_sweeps: 5_000 }, thin_sweeps: 5 },
        );
        cfg.mean_draws = 8;
        cfg.mean_samples = 5;
        cfg.tail_draws = 8;
        cfg.tail_samples = 4;
        let a = concentration_experiment(&cfg).unwrap();
        let b = concentration_experiment(&cfg).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.sizes[0].burn_in.chains, 16);
        assert_eq!(a.sizes[0].max_deviations.len(), 32);
    }

    #[test]
    fn boundary_modes_parse() {
        assert_eq!("parity".parse::<BoundaryMode>().unwrap(), BoundaryMode::Parity);
        assert_eq!(BoundaryMode::Extremal.to_string().parse::<BoundaryMode>().unwrap(), BoundaryMode::Extremal);
        assert!("ramp".parse::<BoundaryMode>().is_err());
    }
}
