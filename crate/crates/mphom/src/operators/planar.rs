//! Periodic `n x n` staggered operators on the unit cell `(-1/2, 1/2)^2`.

use super::{assemble_operator, DofMap, PlanarLoc};
use crate::geometry::{wrap, StaggeredMask};
use crate::linalg::CsrMatrix;

/// In-plane vector with component 1 on x-faces and component 2 on y-faces
/// (velocity placement).
#[derive(Debug, Clone, PartialEq)]
pub struct FaceVector {
    pub c1: Vec<f64>,
    pub c2: Vec<f64>,
}

/// In-plane vector with component 1 on y-faces and component 2 on x-faces
/// (in-plane microrotation placement; these are the edge positions of the
/// extruded 3D grid).
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeVector {
    pub c1: Vec<f64>,
    pub c2: Vec<f64>,
}

impl FaceVector {
    pub fn zeros(len: usize) -> Self {
        FaceVector {
            c1: vec![0.0; len],
            c2: vec![0.0; len],
        }
    }
}

impl EdgeVector {
    pub fn zeros(len: usize) -> Self {
        EdgeVector {
            c1: vec![0.0; len],
            c2: vec![0.0; len],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarGrid {
    pub n: usize,
    pub h: f64,
}

impl PlanarGrid {
    pub fn new(n: usize) -> Self {
        PlanarGrid {
            n,
            h: 1.0 / n as f64,
        }
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.n + i
    }

    #[inline]
    fn at(&self, i: isize, j: isize) -> usize {
        self.idx(wrap(i, self.n), wrap(j, self.n))
    }

    fn each(&self, mut f: impl FnMut(isize, isize, usize)) {
        for j in 0..self.n {
            for i in 0..self.n {
                f(i as isize, j as isize, self.idx(i, j));
            }
        }
    }

    /// Cell-centred scalar to face vector.
    pub fn grad(&self, p: &[f64]) -> FaceVector {
        let mut out = FaceVector::zeros(self.len());
        self.each(|i, j, k| {
            out.c1[k] = (p[self.at(i + 1, j)] - p[k]) / self.h;
            out.c2[k] = (p[self.at(i, j + 1)] - p[k]) / self.h;
        });
        out
    }

    /// Face vector to cell-centred scalar; `-div` is the transpose of `grad`.
    pub fn div(&self, v: &FaceVector) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.each(|i, j, k| {
            out[k] = (v.c1[k] - v.c1[self.at(i - 1, j)] + v.c2[k] - v.c2[self.at(i, j - 1)]) / self.h;
        });
        out
    }

    /// `rot s = (d2 s, -d1 s)` of a node scalar, landing on faces.
    pub fn rot2d_scalar(&self, s: &[f64]) -> FaceVector {
        let mut out = FaceVector::zeros(self.len());
        self.each(|i, j, k| {
            out.c1[k] = (s[k] - s[self.at(i, j - 1)]) / self.h;
            out.c2[k] = -(s[k] - s[self.at(i - 1, j)]) / self.h;
        });
        out
    }

    /// `Rot v = d1 v2 - d2 v1` of a face vector, landing on nodes.
    pub fn rot2d_vector(&self, v: &FaceVector) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.each(|i, j, k| {
            out[k] = (v.c2[self.at(i + 1, j)] - v.c2[k] - v.c1[self.at(i, j + 1)] + v.c1[k]) / self.h;
        });
        out
    }

    /// `rot s` of a cell-centred scalar, landing on the edge positions.
    pub fn rot2d_scalar_centred(&self, s: &[f64]) -> EdgeVector {
        let mut out = EdgeVector::zeros(self.len());
        self.each(|i, j, k| {
            out.c1[k] = (s[self.at(i, j + 1)] - s[k]) / self.h;
            out.c2[k] = -(s[self.at(i + 1, j)] - s[k]) / self.h;
        });
        out
    }

    /// `Rot v` of an edge vector, landing on cell centres.
    pub fn rot2d_vector_edges(&self, v: &EdgeVector) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.each(|i, j, k| {
            out[k] = (v.c2[k] - v.c2[self.at(i - 1, j)] - v.c1[k] + v.c1[self.at(i, j - 1)]) / self.h;
        });
        out
    }

    /// `coef * (-Laplacian) + shift` on the active locations of one family;
    /// inactive neighbours are homogeneous Dirichlet values.
    pub fn laplacian(&self, dof: &DofMap, coef: f64, shift: f64) -> CsrMatrix {
        let h2 = self.h * self.h;
        assemble_operator(
            dof,
            coef,
            shift,
            |k, nb| {
                let (i, j) = ((k % self.n) as isize, (k / self.n) as isize);
                for (di, dj) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                    nb.push((self.at(i + di, j + dj), 1.0 / h2));
                }
            },
            |_| 4.0 / h2,
        )
    }

    pub fn dof_map(&self, mask: &StaggeredMask, loc: PlanarLoc) -> DofMap {
        DofMap::new(loc.flags(mask))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_cell_mask, CellGeometry, Dim, ObstacleShape};
    use crate::linalg::dot;
    use proptest::prelude::*;

    fn coord(i: usize, h: f64) -> f64 {
        -0.5 + (i as f64 + 0.5) * h
    }

    #[test]
    fn constant_fields_have_zero_derivatives() {
        let g = PlanarGrid::new(8);
        let s = vec![3.5; g.len()];
        let r = g.rot2d_scalar(&s);
        assert!(r.c1.iter().chain(&r.c2).all(|&v| v == 0.0));
        assert!(g.grad(&s).c1.iter().all(|&v| v == 0.0));
        let v = FaceVector {
            c1: vec![1.0; g.len()],
            c2: vec![-2.0; g.len()],
        };
        assert!(g.div(&v).iter().all(|&x| x == 0.0));
        assert!(g.rot2d_vector(&v).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn rot_of_y2_is_e1() {
        let g = PlanarGrid::new(10);
        // node (i, j) sits at y2 = -1/2 + (j + 1) h
        let mut s = vec![0.0; g.len()];
        for j in 0..g.n {
            for i in 0..g.n {
                s[g.idx(i, j)] = -0.5 + (j as f64 + 1.0) * g.h;
            }
        }
        let r = g.rot2d_scalar(&s);
        for j in 1..g.n {
            for i in 0..g.n {
                assert!((r.c1[g.idx(i, j)] - 1.0).abs() < 1e-12);
                assert!(r.c2[g.idx(i, j)].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn divergence_exact_on_linear_field() {
        let g = PlanarGrid::new(12);
        let mut v = FaceVector::zeros(g.len());
        for j in 0..g.n {
            for i in 0..g.n {
                v.c1[g.idx(i, j)] = coord(i, g.h) + 0.5 * g.h;
            }
        }
        let d = g.div(&v);
        for j in 0..g.n {
            for i in 1..g.n {
                assert!((d[g.idx(i, j)] - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn laplacian_is_symmetric_and_positive() {
        let geom = CellGeometry::new(ObstacleShape::Disk { radius: 0.3 }, 16, 4);
        let mask = build_cell_mask(&geom, Dim::Two).unwrap();
        let g = PlanarGrid::new(16);
        for loc in [PlanarLoc::Cell, PlanarLoc::XFace, PlanarLoc::YFace, PlanarLoc::Node] {
            let dof = g.dof_map(&mask, loc);
            let a = g.laplacian(&dof, 2.0, 0.5);
            assert_eq!(a.asymmetry(), 0.0);
            let x: Vec<f64> = (0..dof.len()).map(|k| ((k * 7) % 5) as f64 - 2.0).collect();
            assert!(dot(&x, &a.mul(&x)) > 0.0);
        }
    }

    fn field(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-1.0f64..1.0, n * n)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]

        #[test]
        fn rot_pairs_are_adjoint(s in field(9), a in field(9), b in field(9), t in field(9)) {
            let g = PlanarGrid::new(9);
            let v = FaceVector { c1: a.clone(), c2: b.clone() };
            let lhs = dot(&g.rot2d_scalar(&s).c1, &v.c1) + dot(&g.rot2d_scalar(&s).c2, &v.c2);
            let rhs = dot(&s, &g.rot2d_vector(&v));
            prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));

            let e = EdgeVector { c1: a, c2: b };
            let r = g.rot2d_scalar_centred(&t);
            let lhs = dot(&r.c1, &e.c1) + dot(&r.c2, &e.c2);
            let rhs = dot(&t, &g.rot2d_vector_edges(&e));
            prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));
        }

        #[test]
        fn minus_div_is_grad_transpose(p in field(7), a in field(7), b in field(7)) {
            let g = PlanarGrid::new(7);
            let v = FaceVector { c1: a, c2: b };
            let gp = g.grad(&p);
            let lhs = dot(&gp.c1, &v.c1) + dot(&gp.c2, &v.c2);
            let rhs = -dot(&p, &g.div(&v));
            prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));
        }

        #[test]
        fn div_of_rot_vanishes(s in field(8)) {
            let g = PlanarGrid::new(8);
            prop_assert!(g.div(&g.rot2d_scalar(&s)).iter().all(|v| v.abs() < 1e-9));
        }
    }
}
