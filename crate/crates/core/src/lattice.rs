//! Lattice points, directions and canonical edges on `Z^d`.

use alloc::vec::Vec;

/// A point of `Z^d`. Dimension is carried by the coordinate vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LatticePoint {
    coords: Vec<i64>,
}

impl LatticePoint {
    /// Build a point; panics on dimension 0.
    pub fn new(coords: Vec<i64>) -> Self {
        assert!(!coords.is_empty(), "lattice dimension must be at least 1");
        LatticePoint { coords }
    }

    pub fn origin(d: usize) -> Self {
        LatticePoint::new(alloc::vec![0; d])
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[i64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<i64> {
        self.coords
    }

    /// Neighbor in direction `dir`.
    pub fn neighbor(&self, dir: Direction) -> Self {
        let mut c = self.coords.clone();
        c[dir.axis] += dir.sign as i64;
        LatticePoint { coords: c }
    }
}

impl From<Vec<i64>> for LatticePoint {
    fn from(coords: Vec<i64>) -> Self {
        LatticePoint::new(coords)
    }
}

/// One of the `2d` nearest-neighbor moves.
///
/// Directions are indexed `0..2d` in the order `+e_1, ..., +e_d,
/// -e_1, ..., -e_d`, so index `k >= d` is the negation of index `k - d`.
/// The coupling construction relies on this ordering being shared by every
/// kernel consuming a common uniform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Direction {
    pub axis: usize,
    pub sign: i8,
}

impl Direction {
    /// Decode a direction index (`0..2d`).
    #[inline]
    pub fn from_index(index: usize, d: usize) -> Self {
        debug_assert!(index < 2 * d);
        if index < d {
            Direction { axis: index, sign: 1 }
        } else {
            Direction { axis: index - d, sign: -1 }
        }
    }

    #[inline]
    pub fn index(&self, d: usize) -> usize {
        if self.sign > 0 {
            self.axis
        } else {
            self.axis + d
        }
    }
}

/// Canonical nearest-neighbor edge: the unordered pair
/// `{base, base + e_axis}` keyed by its lexicographically smaller endpoint.
///
/// Symmetry of the conductance field is structural: both endpoints of a
/// pair map to the same `Edge`, so there is only one value to draw.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Edge {
    base: LatticePoint,
    axis: usize,
}

impl Edge {
    pub fn new(base: LatticePoint, axis: usize) -> Self {
        assert!(axis < base.dim(), "axis {} out of range for d={}", axis, base.dim());
        Edge { base, axis }
    }

    /// Canonical edge between `x` and its neighbor in direction `dir`.
    pub fn incident(x: &LatticePoint, dir: Direction) -> Self {
        if dir.sign > 0 {
            Edge::new(x.clone(), dir.axis)
        } else {
            Edge::new(x.neighbor(dir), dir.axis)
        }
    }

    /// Canonical edge for an unordered neighbor pair, or `None` if the two
    /// points are not nearest neighbors.
    pub fn between(x: &LatticePoint, y: &LatticePoint) -> Option<Self> {
        if x.dim() != y.dim() {
            return None;
        }
        let mut axis = None;
        for (i, (a, b)) in x.coords().iter().zip(y.coords()).enumerate() {
            match (a - b).abs() {
                0 => {}
                1 if axis.is_none() => axis = Some(i),
                _ => return None,
            }
        }
        let axis = axis?;
        if x.coords()[axis] < y.coords()[axis] {
            Some(Edge::new(x.clone(), axis))
        } else {
            Some(Edge::new(y.clone(), axis))
        }
    }

    pub fn base(&self) -> &LatticePoint {
        &self.base
    }

    pub fn axis(&self) -> usize {
        self.axis
    }

    pub fn endpoints(&self) -> (LatticePoint, LatticePoint) {
        let other = self.base.neighbor(Direction { axis: self.axis, sign: 1 });
        (self.base.clone(), other)
    }
}
