//! Height functions: parity-preserving graph homomorphisms from a region of
//! `Z^m` into `Z`, their extension sets, and the Kirszbraun test for when an
//! extension set is nonempty.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap};

use crate::error::{Error, Result};
use crate::lattice::{Region, Vertex};

/// Default cap on the number of members an enumeration may produce.
pub const DEFAULT_ENUMERATION_CAP: usize = 1_000_000;

/// Integer heights on a finite vertex set.
///
/// This type only carries the map; whether it is a genuine height function
/// is checked by [`HeightFunction::check`] or [`validate`].
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct HeightFunction {
    values: BTreeMap<Vertex, i64>,
}

impl HeightFunction {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (Vertex, i64)>) -> Self {
        HeightFunction { values: pairs.into_iter().collect() }
    }

    /// Dense values aligned with `region`'s vertex order.
    pub fn from_dense(region: &Region, values: &[i64]) -> Self {
        debug_assert_eq!(region.len(), values.len());
        Self::from_pairs(region.vertices().iter().cloned().zip(values.iter().copied()))
    }

    pub fn to_dense(&self, region: &Region) -> Result<Vec<i64>> {
        region.vertices().iter().map(|v| self.get(v).ok_or_else(|| Error::MissingHeight(v.clone()))).collect()
    }

    /// Height `sum(x_i) mod 2` at every vertex: always a height function.
    pub fn parity(vertices: &[Vertex]) -> Self {
        Self::from_pairs(vertices.iter().map(|v| (v.clone(), v.coord_sum().rem_euclid(2))))
    }

    pub fn insert(&mut self, v: Vertex, h: i64) -> Option<i64> {
        self.values.insert(v, h)
    }

    pub fn get(&self, v: &Vertex) -> Option<i64> {
        self.values.get(v).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn domain(&self) -> impl Iterator<Item = &Vertex> {
        self.values.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vertex, i64)> {
        self.values.iter().map(|(v, &h)| (v, h))
    }

    pub fn min_height(&self) -> Option<i64> {
        self.values.values().copied().min()
    }

    pub fn max_height(&self) -> Option<i64> {
        self.values.values().copied().max()
    }

    /// Adds `dz` to every height.
    pub fn shifted(&self, dz: i64) -> Self {
        Self::from_pairs(self.iter().map(|(v, h)| (v.clone(), h + dz)))
    }

    pub fn restricted(&self, vertices: &[Vertex]) -> Self {
        Self::from_pairs(vertices.iter().filter_map(|v| self.get(v).map(|h| (v.clone(), h))))
    }

    /// Pointwise `self <= other` on the common domain; `None` if the domains differ.
    pub fn pointwise_le(&self, other: &HeightFunction) -> Option<bool> {
        if self.len() != other.len() {
            return None;
        }
        let mut ok = true;
        for ((va, a), (vb, b)) in self.values.iter().zip(&other.values) {
            if va != vb {
                return None;
            }
            ok &= a <= b;
        }
        Some(ok)
    }

    /// Checks parity and the homomorphism property under the induced
    /// adjacency of the domain.
    pub fn check(&self) -> Result<()> {
        for (v, h) in self.iter() {
            if (h - v.coord_sum()).rem_euclid(2) != 0 {
                return Err(Error::ParityViolation { vertex: v.clone(), height: h });
            }
            for u in v.lattice_neighbors() {
                if u <= *v {
                    continue;
                }
                if let Some(hu) = self.get(&u) {
                    if (hu - h).abs() != 1 {
                        return Err(Error::LipschitzViolation { a: v.clone(), b: u, ha: h, hb: hu });
                    }
                }
            }
        }
        Ok(())
    }
}

impl FromIterator<(Vertex, i64)> for HeightFunction {
    fn from_iter<T: IntoIterator<Item = (Vertex, i64)>>(iter: T) -> Self {
        Self::from_pairs(iter)
    }
}

/// True iff `f` is a height function on `region`. Errors if `f` misses a vertex.
pub fn validate(region: &Region, f: &HeightFunction) -> Result<bool> {
    let dense = f.to_dense(region)?;
    Ok(validate_dense(region, &dense))
}

pub fn validate_dense(region: &Region, values: &[i64]) -> bool {
    let parity_ok = region.vertices().iter().zip(values).all(|(v, h)| (h - v.coord_sum()).rem_euclid(2) == 0);
    parity_ok && region.edges().all(|(i, j)| (values[i] - values[j]).abs() == 1)
}

/// The parity height function of a region.
pub fn parity_height(region: &Region) -> HeightFunction {
    HeightFunction::parity(region.vertices())
}

/// Pinned data `h_{R'}` on a subset `R'` of a region, validated once.
#[derive(Clone, Debug)]
pub struct Pinning {
    data: HeightFunction,
    sites: Vec<(usize, i64)>,
    fixed: Vec<Option<i64>>,
}

impl Pinning {
    /// Requires `data` to live on a nonempty subset of `region` and to be a
    /// height function there (with the subset's induced adjacency).
    pub fn new(region: &Region, data: &HeightFunction) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::NothingPinned);
        }
        let mut fixed = vec![None; region.len()];
        let mut sites = Vec::with_capacity(data.len());
        for (v, h) in data.iter() {
            let i = region.index_of(v).ok_or_else(|| Error::VertexNotInRegion(v.clone()))?;
            fixed[i] = Some(h);
            sites.push((i, h));
        }
        data.check()?;
        sites.sort_unstable();
        Ok(Pinning { data: data.clone(), sites, fixed })
    }

    pub fn data(&self) -> &HeightFunction {
        &self.data
    }

    /// `(dense index, height)` pairs in index order.
    pub fn sites(&self) -> &[(usize, i64)] {
        &self.sites
    }

    pub fn fixed(&self, i: usize) -> Option<i64> {
        self.fixed[i]
    }

    pub fn is_pinned(&self, i: usize) -> bool {
        self.fixed[i].is_some()
    }

    pub fn free_indices(&self) -> Vec<usize> {
        (0..self.fixed.len()).filter(|&i| self.fixed[i].is_none()).collect()
    }

    pub fn vertices(&self) -> Vec<Vertex> {
        self.data.domain().cloned().collect()
    }

    pub fn shifted(&self, dz: i64) -> Self {
        Pinning {
            data: self.data.shifted(dz),
            sites: self.sites.iter().map(|&(i, h)| (i, h + dz)).collect(),
            fixed: self.fixed.iter().map(|f| f.map(|h| h + dz)).collect(),
        }
    }
}

/// `out[v] = min over sources (offset + d_R(source, v))` and the source
/// attaining it, by Dijkstra with unit edge weights.
fn propagate_min(region: &Region, sources: &[(usize, i64)]) -> (Vec<i64>, Vec<usize>) {
    let mut best = vec![i64::MAX; region.len()];
    let mut origin = vec![usize::MAX; region.len()];
    let mut heap = BinaryHeap::new();
    for &(i, h) in sources {
        if h < best[i] {
            best[i] = h;
            origin[i] = i;
            heap.push(Reverse((h, i)));
        }
    }
    while let Some(Reverse((h, i))) = heap.pop() {
        if h > best[i] {
            continue;
        }
        for &j in region.neighbor_indices(i) {
            if h + 1 < best[j] {
                best[j] = h + 1;
                origin[j] = origin[i];
                heap.push(Reverse((h + 1, j)));
            }
        }
    }
    (best, origin)
}

/// Pointwise upper and lower envelopes `min_x(h(x) + d(x, v))` and
/// `max_x(h(x) - d(x, v))` over pinned `x`.
fn envelopes(region: &Region, pinning: &Pinning) -> (Vec<i64>, Vec<i64>, Vec<usize>) {
    let (high, origin) = propagate_min(region, pinning.sites());
    let neg: Vec<(usize, i64)> = pinning.sites().iter().map(|&(i, h)| (i, -h)).collect();
    let (neg_low, _) = propagate_min(region, &neg);
    let low = neg_low.into_iter().map(|h| -h).collect();
    (low, high, origin)
}

/// A pinned pair violating the Kirszbraun condition, if any.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KirszbraunWitness {
    pub x: Vertex,
    pub y: Vertex,
    pub diff: i64,
    pub dist: u32,
}

/// Finds a pinned pair with `|h(x) - h(y)| > d_R(x, y)`.
pub fn kirszbraun_witness(region: &Region, pinning: &Pinning) -> Option<KirszbraunWitness> {
    let (_, high, origin) = envelopes(region, pinning);
    // high(x) < h(x) at a pinned x means some y has h(y) + d(x, y) < h(x).
    pinning.sites().iter().find(|&&(i, h)| high[i] < h).map(|&(i, h)| {
        let j = origin[i];
        let hy = pinning.fixed(j).expect("origin is pinned");
        KirszbraunWitness { x: region.vertex(i).clone(), y: region.vertex(j).clone(), diff: (h - hy).abs(), dist: (high[i] - hy) as u32 }
    })
}

/// `|h(x) - h(y)| <= d_R(x, y)` for every pair of pinned vertices.
pub fn kirszbraun_extendable(region: &Region, h: &HeightFunction) -> Result<bool> {
    let pinning = Pinning::new(region, h)?;
    Ok(kirszbraun_witness(region, &pinning).is_none())
}

/// The set `M(R; h_{R'})`, members stored densely in region order.
#[derive(Clone, Debug)]
pub struct ExtensionSet {
    pinned: HeightFunction,
    members: Vec<Vec<i64>>,
}

impl ExtensionSet {
    pub fn new(pinned: HeightFunction, members: Vec<Vec<i64>>) -> Self {
        ExtensionSet { pinned, members }
    }

    pub fn pinned(&self) -> &HeightFunction {
        &self.pinned
    }

    pub fn members(&self) -> &[Vec<i64>] {
        &self.members
    }

    pub fn member(&self, i: usize) -> &[i64] {
        &self.members[i]
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn height_function(&self, region: &Region, i: usize) -> HeightFunction {
        HeightFunction::from_dense(region, &self.members[i])
    }

    /// Map from member to its position in the deterministic order.
    pub fn index_map(&self) -> HashMap<&[i64], usize> {
        self.members.iter().enumerate().map(|(i, m)| (m.as_slice(), i)).collect()
    }
}

/// Enumerates `M(R; h_{R'})` with the default size cap.
pub fn enumerate_extensions(region: &Region, h: &HeightFunction) -> Result<ExtensionSet> {
    let pinning = Pinning::new(region, h)?;
    enumerate_pinned(region, &pinning, DEFAULT_ENUMERATION_CAP)
}

/// Depth-first enumeration over the free vertices in lexicographic order,
/// candidate heights ascending.
///
/// A candidate `z` at `v` is kept only if `|z - a(x)| <= d_R(x, v)` for every
/// already assigned or pinned `x`. Assigned sets that satisfy this admit an
/// extension, so the search never backtracks out of a dead end.
pub fn enumerate_pinned(region: &Region, pinning: &Pinning, cap: usize) -> Result<ExtensionSet> {
    let pinned = pinning.data().clone();
    if kirszbraun_witness(region, pinning).is_some() {
        return Ok(ExtensionSet::new(pinned, Vec::new()));
    }
    let free = pinning.free_indices();
    let mut current: Vec<i64> = (0..region.len()).map(|i| pinning.fixed(i).unwrap_or(0)).collect();
    if free.is_empty() {
        return Ok(ExtensionSet::new(pinned, vec![current]));
    }
    let dist: Vec<Vec<u32>> = free.iter().map(|&v| region.distances_from(v)).collect();
    let (low, high, _) = envelopes(region, pinning);

    // bounds[k] holds (low, high) for every vertex before the k-th free vertex is fixed.
    let mut bounds: Vec<(Vec<i64>, Vec<i64>)> = Vec::with_capacity(free.len() + 1);
    bounds.push((low, high));
    let mut next_candidate: Vec<i64> = vec![0; free.len()];
    let mut members = Vec::new();
    let mut depth = 0usize;
    next_candidate[0] = bounds[0].0[free[0]];

    loop {
        let v = free[depth];
        let hi = bounds[depth].1[v];
        let z = next_candidate[depth];
        if z > hi {
            if depth == 0 {
                break;
            }
            bounds.pop();
            depth -= 1;
            continue;
        }
        next_candidate[depth] = z + 2;
        current[v] = z;
        if depth + 1 == free.len() {
            if members.len() == cap {
                return Err(Error::TooManyExtensions { cap });
            }
            members.push(current.clone());
            continue;
        }
        let (lo_prev, hi_prev) = &bounds[depth];
        let d = &dist[depth];
        let lo_next: Vec<i64> = lo_prev.iter().zip(d).map(|(&l, &dd)| l.max(z - dd as i64)).collect();
        let hi_next: Vec<i64> = hi_prev.iter().zip(d).map(|(&h, &dd)| h.min(z + dd as i64)).collect();
        depth += 1;
        next_candidate[depth] = lo_next[free[depth]];
        bounds.push((lo_next, hi_next));
    }
    Ok(ExtensionSet::new(pinned, members))
}

/// Pointwise minimal and maximal members of `M(R; h_{R'})`.
pub fn min_max_extensions(region: &Region, h: &HeightFunction) -> Result<(HeightFunction, HeightFunction)> {
    let pinning = Pinning::new(region, h)?;
    let (low, high) = extension_bounds(region, &pinning)?;
    Ok((HeightFunction::from_dense(region, &low), HeightFunction::from_dense(region, &high)))
}

/// Dense `(low, high)` extremal extensions; errors when none exist.
pub fn extension_bounds(region: &Region, pinning: &Pinning) -> Result<(Vec<i64>, Vec<i64>)> {
    if let Some(w) = kirszbraun_witness(region, pinning) {
        return Err(Error::NotExtendable { x: w.x, y: w.y, diff: w.diff, dist: w.dist });
    }
    let (low, high, _) = envelopes(region, pinning);
    Ok((low, high))
}

/// Closed interval of heights any extension can take.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HeightWindow {
    pub lo: i64,
    pub hi: i64,
}

impl HeightWindow {
    /// Lower endpoints of the `Z`-edges an extension can use: `[lo, hi - 1]`,
    /// or the degenerate `[lo, lo]` when no edge is possible.
    pub fn edge_range(&self) -> (i64, i64) {
        (self.lo, (self.hi - 1).max(self.lo))
    }

    pub fn union(&self, other: &HeightWindow) -> HeightWindow {
        HeightWindow { lo: self.lo.min(other.lo), hi: self.hi.max(other.hi) }
    }

    pub fn len(&self) -> usize {
        (self.hi - self.lo + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.hi < self.lo
    }
}

pub fn height_window(region: &Region, h: &HeightFunction) -> Result<HeightWindow> {
    let pinning = Pinning::new(region, h)?;
    pinned_height_window(region, &pinning)
}

pub fn pinned_height_window(region: &Region, pinning: &Pinning) -> Result<HeightWindow> {
    let (low, high) = extension_bounds(region, pinning)?;
    Ok(HeightWindow { lo: *low.iter().min().expect("nonempty region"), hi: *high.iter().max().expect("nonempty region") })
}

/// Slope direction for [`extremal_boundary`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slope {
    Up,
    Down,
}

impl Slope {
    pub fn sign(self) -> i64 {
        match self {
            Slope::Up => 1,
            Slope::Down => -1,
        }
    }
}

/// How the preferred direction is assigned to the sides of a 2D box.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExtremalShape {
    /// One preferred direction for the whole boundary cycle: a single
    /// ascent followed by the forced descent back to the anchor.
    Ramp,
    /// The preferred direction flips at every corner, so each side is a
    /// maximal ascent or descent (a saddle on square boxes).
    Saddle,
}

/// Boundary data that change by one at every boundary step, preferring the
/// given direction as long as the cycle can still close at `anchor`.
///
/// Supported for boxes of dimension 1 and 2; the walk starts at the
/// lexicographically smallest vertex and follows the first axis first.
pub fn extremal_boundary(region: &Region, direction: Slope, anchor: i64, shape: ExtremalShape) -> Result<HeightFunction> {
    let (lows, highs) = region.box_bounds().ok_or_else(|| Error::Unsupported("extremal boundary requires a box region".into()))?;
    let start = Vertex::new(lows.to_vec());
    if (anchor - start.coord_sum()).rem_euclid(2) != 0 {
        return Err(Error::ParityViolation { vertex: start, height: anchor });
    }
    let extended: Vec<usize> = (0..lows.len()).filter(|&a| highs[a] > lows[a]).collect();
    let sign = direction.sign();
    let data = match (lows.len(), extended.len()) {
        (_, 0) => HeightFunction::from_pairs([(start, anchor)]),
        (1, 1) | (2, 1) => {
            // Straight segment: monotone along the segment.
            HeightFunction::from_pairs(region.boundary().into_iter().map(|v| {
                let h = anchor + sign * v.l1_distance(&start);
                (v, h)
            }))
        }
        (2, 2) => {
            let cycle = box_cycle(lows, highs);
            let l = cycle.len() as i64;
            let mut values = Vec::with_capacity(cycle.len());
            let mut h = anchor;
            values.push((cycle[0].0.clone(), h));
            for (step, (_, side)) in cycle.iter().enumerate().skip(1) {
                let preferred = match shape {
                    ExtremalShape::Ramp => sign,
                    ExtremalShape::Saddle => {
                        if side % 2 == 0 {
                            sign
                        } else {
                            -sign
                        }
                    }
                };
                let remaining = l - step as i64;
                h += if (h + preferred - anchor).abs() <= remaining { preferred } else { -preferred };
                values.push((cycle[step].0.clone(), h));
            }
            HeightFunction::from_pairs(values)
        }
        _ => return Err(Error::Unsupported("extremal boundary is defined for boxes in Z^1 and Z^2".into())),
    };
    let pinning = Pinning::new(region, &data)?;
    if let Some(w) = kirszbraun_witness(region, &pinning) {
        return Err(Error::NotExtendable { x: w.x, y: w.y, diff: w.diff, dist: w.dist });
    }
    Ok(data)
}

/// Boundary cycle of a nondegenerate 2D box with the side index of the
/// step that reaches each vertex (side 0 for the start).
fn box_cycle(lows: &[i64], highs: &[i64]) -> Vec<(Vertex, usize)> {
    let (x0, y0, x1, y1) = (lows[0], lows[1], highs[0], highs[1]);
    let mut out = vec![(Vertex::from([x0, y0]), 0)];
    out.extend((x0 + 1..=x1).map(|x| (Vertex::from([x, y0]), 0)));
    out.extend((y0 + 1..=y1).map(|y| (Vertex::from([x1, y]), 1)));
    out.extend((x0..x1).rev().map(|x| (Vertex::from([x, y1]), 2)));
    out.extend((y0 + 1..y1).rev().map(|y| (Vertex::from([x0, y]), 3)));
    out
}

/// The boundary cycle of a 2D box as vertices, starting at the lowest corner.
pub fn boundary_cycle(region: &Region) -> Option<Vec<Vertex>> {
    let (lows, highs) = region.box_bounds()?;
    if lows.len() != 2 || lows[0] == highs[0] || lows[1] == highs[1] {
        return None;
    }
    Some(box_cycle(lows, highs).into_iter().map(|(v, _)| v).collect())
}
