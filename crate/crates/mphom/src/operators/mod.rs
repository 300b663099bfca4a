//! Staggered-grid difference operators.
//!
//! Placement (2D, see [`crate::geometry::StaggeredMask`] for the location names):
//! pressure and `u3` at cell centres, `u'` on faces (`u1` on x-faces, `u2` on
//! y-faces), the in-plane microrotation on the dual faces (`w1` on y-faces,
//! `w2` on x-faces) and `w3` on nodes. The 3D layout extrudes this: `u` on
//! faces, `w` on edges, pressure at cells. With this choice every curl pair is
//! an exact matrix transpose, so the coupled cell operator is symmetric.

pub mod planar;
pub mod slab;

use crate::geometry::StaggeredMask;
use crate::linalg::CsrMatrix;

/// The four location families of the periodic 2D staggered grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanarLoc {
    Cell,
    XFace,
    YFace,
    Node,
}

impl PlanarLoc {
    pub fn flags(self, mask: &StaggeredMask) -> &[bool] {
        match self {
            PlanarLoc::Cell => mask.cells(),
            PlanarLoc::XFace => mask.x_faces(),
            PlanarLoc::YFace => mask.y_faces(),
            PlanarLoc::Node => mask.nodes(),
        }
    }
}

/// Numbering of the active entries of a full-grid field.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    full_len: usize,
    dofs: Vec<usize>,
    slot: Vec<usize>,
}

impl DofMap {
    pub fn new(active: &[bool]) -> Self {
        let mut slot = vec![usize::MAX; active.len()];
        let mut dofs = Vec::new();
        for (k, &a) in active.iter().enumerate() {
            if a {
                slot[k] = dofs.len();
                dofs.push(k);
            }
        }
        DofMap {
            full_len: active.len(),
            dofs,
            slot,
        }
    }

    pub fn len(&self) -> usize {
        self.dofs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dofs.is_empty()
    }

    pub fn full_len(&self) -> usize {
        self.full_len
    }

    /// Compact index of a full-grid location, if active.
    #[inline]
    pub fn slot(&self, full: usize) -> Option<usize> {
        let s = self.slot[full];
        (s != usize::MAX).then_some(s)
    }

    pub fn dofs(&self) -> &[usize] {
        &self.dofs
    }

    pub fn active(&self) -> Vec<bool> {
        self.slot.iter().map(|&s| s != usize::MAX).collect()
    }

    pub fn gather(&self, full: &[f64]) -> Vec<f64> {
        self.dofs.iter().map(|&k| full[k]).collect()
    }

    pub fn scatter(&self, compact: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.full_len];
        for (&k, &v) in self.dofs.iter().zip(compact) {
            full[k] = v;
        }
        full
    }

    /// Zeroes the inactive entries of a full-grid field.
    pub fn restrict(&self, full: &mut [f64]) {
        for (v, &s) in full.iter_mut().zip(&self.slot) {
            if s == usize::MAX {
                *v = 0.0;
            }
        }
    }
}

/// Assembles `coef * (-Laplacian) + shift` on the active dofs, given a
/// neighbour listing per full-grid location. `neighbours(k)` yields the
/// full-grid index of each coupled neighbour (or `None` for a wall) together
/// with its stencil weight; the diagonal is the supplied `diag(k)`.
pub(crate) fn assemble_operator<N, D>(dof: &DofMap, coef: f64, shift: f64, neighbours: N, diag: D) -> CsrMatrix
where
    N: Fn(usize, &mut Vec<(usize, f64)>),
    D: Fn(usize) -> f64,
{
    let mut trip = Vec::with_capacity(dof.len() * 7);
    let mut nb = Vec::with_capacity(6);
    for (row, &k) in dof.dofs().iter().enumerate() {
        trip.push((row, row, coef * diag(k) + shift));
        nb.clear();
        neighbours(k, &mut nb);
        for &(q, w) in &nb {
            if let Some(col) = dof.slot(q) {
                trip.push((row, col, -coef * w));
            }
        }
    }
    CsrMatrix::from_triplets(dof.len(), dof.len(), &trip)
}

/// Euclidean inner product of two full-grid arrays.
pub fn inner(a: &[f64], b: &[f64]) -> f64 {
    crate::linalg::dot(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dof_map_round_trip() {
        let active = [true, false, true, true, false];
        let map = DofMap::new(&active);
        assert_eq!(map.len(), 3);
        assert_eq!(map.slot(1), None);
        assert_eq!(map.slot(3), Some(2));
        let full = [1.0, 9.0, 2.0, 3.0, 9.0];
        let c = map.gather(&full);
        assert_eq!(c, vec![1.0, 2.0, 3.0]);
        assert_eq!(map.scatter(&c), vec![1.0, 0.0, 2.0, 3.0, 0.0]);
        assert_eq!(map.active(), active.to_vec());
    }
}
