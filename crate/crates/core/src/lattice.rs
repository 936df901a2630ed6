//! Finite connected regions of the nearest-neighbour lattice `Z^m`.
//!
//! A [`Region`] stores its vertices in lexicographic order together with a
//! hashed index, so every vertex also has a stable dense index. Most of the
//! crate works with those dense indices.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;

use crate::error::{Error, Result};

/// A point of `Z^m`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Vertex(Vec<i64>);

impl Vertex {
    pub fn new(coords: impl Into<Vec<i64>>) -> Self {
        Vertex(coords.into())
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Sum of coordinates; its parity is the parity every height must have here.
    pub fn coord_sum(&self) -> i64 {
        self.0.iter().sum()
    }

    pub fn l1_distance(&self, other: &Vertex) -> i64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).sum()
    }

    pub fn is_adjacent(&self, other: &Vertex) -> bool {
        self.dim() == other.dim() && self.l1_distance(other) == 1
    }

    /// The `2m` lattice neighbours, in a fixed order.
    pub fn lattice_neighbors(&self) -> impl Iterator<Item = Vertex> + '_ {
        (0..self.dim()).flat_map(move |axis| {
            [-1i64, 1].into_iter().map(move |step| {
                let mut c = self.0.clone();
                c[axis] += step;
                Vertex(c)
            })
        })
    }
}

impl fmt::Debug for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl From<&[i64]> for Vertex {
    fn from(c: &[i64]) -> Self {
        Vertex(c.to_vec())
    }
}

impl<const N: usize> From<[i64; N]> for Vertex {
    fn from(c: [i64; N]) -> Self {
        Vertex(c.to_vec())
    }
}

/// A finite, nonempty, connected vertex set of `Z^m` with induced
/// nearest-neighbour adjacency.
#[derive(Clone, Debug)]
pub struct Region {
    dim: usize,
    vertices: Vec<Vertex>,
    index: HashMap<Vertex, usize>,
    adjacency: Vec<Vec<usize>>,
    box_bounds: Option<(Vec<i64>, Vec<i64>)>,
}

impl PartialEq for Region {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.vertices == other.vertices
    }
}

impl Eq for Region {}

impl Region {
    /// Builds a region from an arbitrary vertex collection. Duplicates are
    /// merged; the result must be nonempty and connected.
    pub fn new(dim: usize, vertices: impl IntoIterator<Item = Vertex>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ZeroDimension);
        }
        let mut vertices: Vec<Vertex> = vertices.into_iter().collect();
        for v in &vertices {
            if v.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: v.dim() });
            }
        }
        vertices.sort();
        vertices.dedup();
        if vertices.is_empty() {
            return Err(Error::EmptyRegion);
        }
        let region = Self::from_sorted(dim, vertices, None);
        if !region.is_connected() {
            return Err(Error::Disconnected);
        }
        Ok(region)
    }

    fn from_sorted(dim: usize, vertices: Vec<Vertex>, box_bounds: Option<(Vec<i64>, Vec<i64>)>) -> Self {
        let index: HashMap<Vertex, usize> = vertices.iter().enumerate().map(|(i, v)| (v.clone(), i)).collect();
        let adjacency = vertices.iter().map(|v| v.lattice_neighbors().filter_map(|u| index.get(&u).copied()).collect()).collect();
        Region { dim, vertices, index, adjacency, box_bounds }
    }

    /// The box `{z : lows[i] <= z_i <= highs[i]}`.
    pub fn make_box(lows: &[i64], highs: &[i64]) -> Result<Self> {
        if lows.len() != highs.len() {
            return Err(Error::DimensionMismatch { expected: lows.len(), found: highs.len() });
        }
        if lows.is_empty() {
            return Err(Error::ZeroDimension);
        }
        if let Some(axis) = (0..lows.len()).find(|&i| lows[i] > highs[i]) {
            return Err(Error::InvertedBox { axis });
        }
        let mut vertices = vec![Vec::with_capacity(lows.len())];
        for axis in 0..lows.len() {
            vertices = vertices
                .into_iter()
                .flat_map(|prefix: Vec<i64>| {
                    (lows[axis]..=highs[axis]).map(move |c| {
                        let mut p = prefix.clone();
                        p.push(c);
                        p
                    })
                })
                .collect();
        }
        // Nested iteration above already yields lexicographic order.
        let vertices = vertices.into_iter().map(Vertex).collect();
        Ok(Self::from_sorted(lows.len(), vertices, Some((lows.to_vec(), highs.to_vec()))))
    }

    /// Square box `[0, n-1]^2`.
    pub fn square(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyRegion);
        }
        let hi = n as i64 - 1;
        Self::make_box(&[0, 0], &[hi, hi])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Vertices in lexicographic order; position = dense index.
    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn vertex(&self, i: usize) -> &Vertex {
        &self.vertices[i]
    }

    pub fn index_of(&self, v: &Vertex) -> Option<usize> {
        self.index.get(v).copied()
    }

    pub fn contains(&self, v: &Vertex) -> bool {
        self.index.contains_key(v)
    }

    /// `(lows, highs)` when the region was built as a box.
    pub fn box_bounds(&self) -> Option<(&[i64], &[i64])> {
        self.box_bounds.as_ref().map(|(l, h)| (l.as_slice(), h.as_slice()))
    }

    fn require(&self, v: &Vertex) -> Result<usize> {
        self.index_of(v).ok_or_else(|| Error::VertexNotInRegion(v.clone()))
    }

    pub fn neighbor_indices(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    /// All `u` in the region with `|u - v|_1 = 1`.
    pub fn neighbors(&self, v: &Vertex) -> Result<Vec<Vertex>> {
        let i = self.require(v)?;
        let mut out: Vec<Vertex> = self.adjacency[i].iter().map(|&j| self.vertices[j].clone()).collect();
        out.sort();
        Ok(out)
    }

    /// Undirected edges as index pairs `(i, j)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency.iter().enumerate().flat_map(|(i, nb)| nb.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    fn is_connected(&self) -> bool {
        self.bfs_from(0).iter().all(|&d| d != u32::MAX)
    }

    fn bfs_from(&self, start: usize) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.len()];
        let mut queue = VecDeque::new();
        dist[start] = 0;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            for &j in &self.adjacency[i] {
                if dist[j] == u32::MAX {
                    dist[j] = dist[i] + 1;
                    queue.push_back(j);
                }
            }
        }
        dist
    }

    /// Graph distances within the region from the vertex with dense index `i`.
    pub fn distances_from(&self, i: usize) -> Vec<u32> {
        self.bfs_from(i)
    }

    /// Multi-source distances: for every vertex, the graph distance to the
    /// nearest of `sources`.
    pub fn distances_to_set(&self, sources: &[usize]) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.len()];
        let mut queue = VecDeque::new();
        for &s in sources {
            if dist[s] != 0 {
                dist[s] = 0;
                queue.push_back(s);
            }
        }
        while let Some(i) = queue.pop_front() {
            for &j in &self.adjacency[i] {
                if dist[j] == u32::MAX {
                    dist[j] = dist[i] + 1;
                    queue.push_back(j);
                }
            }
        }
        dist
    }

    /// Length of a shortest path from `x` to `y` inside the region.
    pub fn graph_distance(&self, x: &Vertex, y: &Vertex) -> Result<u32> {
        let i = self.require(x)?;
        let j = self.require(y)?;
        if i == j {
            return Ok(0);
        }
        Ok(self.bfs_from(i)[j])
    }

    /// `R+`: the region together with every lattice neighbour of it.
    pub fn outer_extension(&self) -> Region {
        let mut all: HashSet<Vertex> = self.vertices.iter().cloned().collect();
        for v in &self.vertices {
            all.extend(v.lattice_neighbors());
        }
        let mut vertices: Vec<Vertex> = all.into_iter().collect();
        vertices.sort();
        let box_bounds = self.box_bounds.as_ref().map(|(l, h)| (l.iter().map(|c| c - 1).collect(), h.iter().map(|c| c + 1).collect()));
        // A box grown by one layer is not a box (corners are missing) unless m = 1.
        let box_bounds = if self.dim == 1 { box_bounds } else { None };
        Self::from_sorted(self.dim, vertices, box_bounds)
    }

    /// Inner vertex boundary: vertices with at least one lattice neighbour
    /// outside the region.
    pub fn boundary(&self) -> Vec<Vertex> {
        self.boundary_indices().into_iter().map(|i| self.vertices[i].clone()).collect()
    }

    pub fn boundary_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.adjacency[i].len() < 2 * self.dim).collect()
    }

    /// `{v' in sub : v' has a neighbour in R \ sub}`.
    pub fn relative_boundary(&self, sub: &[Vertex]) -> Result<Vec<Vertex>> {
        let mut inside = vec![false; self.len()];
        for v in sub {
            inside[self.require(v)?] = true;
        }
        let mut out: Vec<Vertex> = (0..self.len())
            .filter(|&i| inside[i] && self.adjacency[i].iter().any(|&j| !inside[j]))
            .map(|i| self.vertices[i].clone())
            .collect();
        out.sort();
        Ok(out)
    }

    /// `max |x - y|_1` over pairs of vertices.
    pub fn l1_diameter(&self) -> i64 {
        // For the l1 norm the diameter is attained on the 2^(m-1) rotated axes.
        let m = self.dim;
        let mut best = 0;
        for mask in 0..(1u32 << (m - 1)) {
            let proj = |v: &Vertex| -> i64 {
                v.coords().iter().enumerate().map(|(k, &c)| if k > 0 && mask & (1 << (k - 1)) != 0 { -c } else { c }).sum()
            };
            let (lo, hi) = self.vertices.iter().map(proj).fold((i64::MAX, i64::MIN), |(lo, hi), p| (lo.min(p), hi.max(p)));
            best = best.max(hi - lo);
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v<const N: usize>(c: [i64; N]) -> Vertex {
        Vertex::from(c)
    }

    #[test]
    fn box_counts() {
        let r = Region::make_box(&[0, 0], &[2, 2]).unwrap();
        assert_eq!(r.len(), 9);
        assert_eq!(r.edge_count(), 12);
        let path = Region::make_box(&[0], &[2]).unwrap();
        assert_eq!(path.vertices(), &[v([0]), v([1]), v([2])]);
        assert_eq!(Region::make_box(&[0, 0], &[24, 24]).unwrap().len(), 625);
    }

    #[test]
    fn box_errors() {
        assert!(matches!(Region::make_box(&[0, 0], &[1]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(Region::make_box(&[3], &[1]), Err(Error::InvertedBox { axis: 0 })));
    }

    #[test]
    fn neighbor_sets() {
        let r = Region::make_box(&[0, 0], &[2, 2]).unwrap();
        assert_eq!(r.neighbors(&v([1, 1])).unwrap(), vec![v([0, 1]), v([1, 0]), v([1, 2]), v([2, 1])]);
        assert_eq!(r.neighbors(&v([0, 0])).unwrap(), vec![v([0, 1]), v([1, 0])]);
        let path = Region::make_box(&[0], &[2]).unwrap();
        assert_eq!(path.neighbors(&v([0])).unwrap(), vec![v([1])]);
        assert!(matches!(r.neighbors(&v([5, 5])), Err(Error::VertexNotInRegion(_))));
    }

    #[test]
    fn ring_versus_box_distance() {
        let full = Region::make_box(&[0, 0], &[2, 2]).unwrap();
        let ring = Region::new(2, full.boundary()).unwrap();
        assert_eq!(ring.len(), 8);
        assert_eq!(ring.graph_distance(&v([0, 1]), &v([2, 1])).unwrap(), 4);
        assert_eq!(full.graph_distance(&v([0, 1]), &v([2, 1])).unwrap(), 2);
        assert_eq!(full.graph_distance(&v([1, 1]), &v([1, 1])).unwrap(), 0);
    }

    #[test]
    fn disconnected_rejected() {
        assert!(matches!(Region::new(1, [v([0]), v([2])]), Err(Error::Disconnected)));
        assert!(matches!(Region::new(2, Vec::new()), Err(Error::EmptyRegion)));
    }

    #[test]
    fn outer_extensions() {
        let path = Region::make_box(&[0], &[2]).unwrap();
        let ext = path.outer_extension();
        assert_eq!(ext.vertices(), &[v([-1]), v([0]), v([1]), v([2]), v([3])]);

        let dot = Region::make_box(&[0, 0], &[0, 0]).unwrap();
        let plus = dot.outer_extension();
        assert_eq!(plus.vertices(), &[v([-1, 0]), v([0, -1]), v([0, 0]), v([0, 1]), v([1, 0])]);
        assert_eq!(plus.edge_count(), 4);

        // Direct set construction: 3x3 box plus the 12 orthogonal outer neighbours.
        let r = Region::make_box(&[0, 0], &[2, 2]).unwrap();
        let mut expected: Vec<Vertex> = r.vertices().to_vec();
        for k in 0..3 {
            expected.extend([v([-1, k]), v([3, k]), v([k, -1]), v([k, 3])]);
        }
        expected.sort();
        assert_eq!(r.outer_extension().vertices(), expected.as_slice());
        assert_eq!(r.outer_extension().len(), 21);
    }

    #[test]
    fn boundaries() {
        let r = Region::make_box(&[0, 0], &[2, 2]).unwrap();
        let b = r.boundary();
        assert_eq!(b.len(), 8);
        assert!(!b.contains(&v([1, 1])));
        let path = Region::make_box(&[0], &[2]).unwrap();
        assert_eq!(path.boundary(), vec![v([0]), v([2])]);
        let dot = Region::make_box(&[4, 4], &[4, 4]).unwrap();
        assert_eq!(dot.boundary(), vec![v([4, 4])]);
    }

    #[test]
    fn relative_boundaries() {
        let path = Region::make_box(&[0], &[2]).unwrap();
        assert_eq!(path.relative_boundary(&[v([0]), v([2])]).unwrap(), vec![v([0]), v([2])]);
        assert!(path.relative_boundary(path.vertices()).unwrap().is_empty());
        assert!(path.relative_boundary(&[v([7])]).is_err());

        // 5x5 configuration in (column, row) coordinates: R is the whole
        // picture, R' is everything except the six open circles.
        // The drawn corners (1,4) and (4,4) touch the complement only
        // diagonally, so they are not in the relative boundary.
        let big = Region::make_box(&[1, 1], &[5, 5]).unwrap();
        let mut rp = Vec::new();
        for k in 1..=5 {
            rp.push(v([5, k]));
            rp.push(v([k, 5]));
        }
        for k in 1..=4 {
            rp.push(v([1, k]));
            rp.push(v([4, k]));
            rp.push(v([k, 4]));
        }
        rp.sort();
        rp.dedup();
        // Complement: interior circles (2,1),(3,1),(2,2),(3,2),(2,3),(3,3).
        let rel = big.relative_boundary(&rp).unwrap();
        let mut expected = vec![v([1, 1]), v([1, 2]), v([1, 3]), v([4, 1]), v([4, 2]), v([4, 3]), v([2, 4]), v([3, 4])];
        expected.sort();
        assert_eq!(rel, expected);
    }

    #[test]
    fn diameter() {
        let r = Region::make_box(&[0, 0], &[4, 2]).unwrap();
        assert_eq!(r.l1_diameter(), 6);
        let path = Region::make_box(&[-3], &[3]).unwrap();
        assert_eq!(path.l1_diameter(), 6);
        let cube = Region::make_box(&[0, 0, 0], &[1, 2, 3]).unwrap();
        assert_eq!(cube.l1_diameter(), 6);
    }
}
