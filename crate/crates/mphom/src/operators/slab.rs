//! Staggered operators on the 3D cell `Y' x (0, 1)` with the vertical
//! derivative scaled by `lambda`.
//!
//! Horizontal placement extrudes the planar grid. Vertically there are two
//! level families: cell levels `k = 0..m` at height `(k + 1/2) hz` (x-faces,
//! y-faces, cell centres, z-edges) and face levels `k = 0..=m` at height
//! `k hz` (z-faces, x-edges, y-edges). Face levels 0 and `m` lie on the walls
//! and always hold zero; cell-level unknowns see the wall through a reflected
//! ghost value. Flat index: `(k * n + j) * n + i`.

use super::{assemble_operator, DofMap};
use crate::geometry::{wrap, StaggeredMask};
use crate::linalg::CsrMatrix;
use crate::params::Lambda;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlabLoc {
    Cell,
    XFace,
    YFace,
    ZFace,
    XEdge,
    YEdge,
    ZEdge,
}

impl SlabLoc {
    /// True for locations stored on the face levels `0..=m`.
    pub fn on_face_levels(self) -> bool {
        matches!(self, SlabLoc::ZFace | SlabLoc::XEdge | SlabLoc::YEdge)
    }

    /// Horizontal footprint: the planar flags that decide whether a column is fluid.
    fn footprint(self, mask: &StaggeredMask) -> &[bool] {
        match self {
            SlabLoc::Cell | SlabLoc::ZFace => mask.cells(),
            SlabLoc::XFace | SlabLoc::YEdge => mask.x_faces(),
            SlabLoc::YFace | SlabLoc::XEdge => mask.y_faces(),
            SlabLoc::ZEdge => mask.nodes(),
        }
    }
}

/// Velocity placement: one component per face family.
#[derive(Debug, Clone, PartialEq)]
pub struct SlabFaces {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

/// Microrotation placement: one component per edge family.
#[derive(Debug, Clone, PartialEq)]
pub struct SlabEdges {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlabGrid {
    pub n: usize,
    pub m: usize,
    pub h: f64,
    pub hz: f64,
    pub lambda: f64,
}

impl SlabGrid {
    pub fn new(n: usize, m: usize, lambda: Lambda) -> Self {
        SlabGrid {
            n,
            m,
            h: 1.0 / n as f64,
            hz: 1.0 / m as f64,
            lambda: lambda.value(),
        }
    }

    pub fn levels(&self, loc: SlabLoc) -> usize {
        if loc.on_face_levels() {
            self.m + 1
        } else {
            self.m
        }
    }

    pub fn len(&self, loc: SlabLoc) -> usize {
        self.n * self.n * self.levels(loc)
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.n + j) * self.n + i
    }

    #[inline]
    fn at(&self, i: isize, j: isize, k: usize) -> usize {
        self.idx(wrap(i, self.n), wrap(j, self.n), k)
    }

    #[inline]
    fn split(&self, q: usize) -> (isize, isize, usize) {
        let i = q % self.n;
        let j = (q / self.n) % self.n;
        let k = q / (self.n * self.n);
        (i as isize, j as isize, k)
    }

    pub fn faces_zeros(&self) -> SlabFaces {
        SlabFaces {
            x: vec![0.0; self.len(SlabLoc::XFace)],
            y: vec![0.0; self.len(SlabLoc::YFace)],
            z: vec![0.0; self.len(SlabLoc::ZFace)],
        }
    }

    pub fn edges_zeros(&self) -> SlabEdges {
        SlabEdges {
            x: vec![0.0; self.len(SlabLoc::XEdge)],
            y: vec![0.0; self.len(SlabLoc::YEdge)],
            z: vec![0.0; self.len(SlabLoc::ZEdge)],
        }
    }

    /// Active flags of one location family. Wall levels are never active.
    pub fn active(&self, mask: &StaggeredMask, loc: SlabLoc) -> Vec<bool> {
        let foot = loc.footprint(mask);
        let nn = self.n * self.n;
        let levels = self.levels(loc);
        let mut out = vec![false; nn * levels];
        for k in 0..levels {
            if loc.on_face_levels() && (k == 0 || k == self.m) {
                continue;
            }
            out[k * nn..(k + 1) * nn].copy_from_slice(foot);
        }
        out
    }

    pub fn dof_map(&self, mask: &StaggeredMask, loc: SlabLoc) -> DofMap {
        DofMap::new(&self.active(mask, loc))
    }

    /// `grad_lambda p = (d1 p, d2 p, lambda d3 p)`, zero on the wall z-faces.
    pub fn grad_lambda(&self, p: &[f64]) -> SlabFaces {
        let mut out = self.faces_zeros();
        for k in 0..self.m {
            for j in 0..self.n as isize {
                for i in 0..self.n as isize {
                    let q = self.at(i, j, k);
                    out.x[q] = (p[self.at(i + 1, j, k)] - p[q]) / self.h;
                    out.y[q] = (p[self.at(i, j + 1, k)] - p[q]) / self.h;
                    if k > 0 {
                        out.z[q] = self.lambda * (p[q] - p[self.at(i, j, k - 1)]) / self.hz;
                    }
                }
            }
        }
        out
    }

    /// `div_lambda v = d1 v1 + d2 v2 + lambda d3 v3` at cell centres.
    pub fn div_lambda(&self, v: &SlabFaces) -> Vec<f64> {
        let mut out = vec![0.0; self.len(SlabLoc::Cell)];
        for k in 0..self.m {
            for j in 0..self.n as isize {
                for i in 0..self.n as isize {
                    let q = self.at(i, j, k);
                    out[q] = (v.x[q] - v.x[self.at(i - 1, j, k)]) / self.h
                        + (v.y[q] - v.y[self.at(i, j - 1, k)]) / self.h
                        + self.lambda * (v.z[self.at(i, j, k + 1)] - v.z[q]) / self.hz;
                }
            }
        }
        out
    }

    /// `rot_lambda` of a face field, landing on edges. Wall-level edges are left at zero.
    pub fn rot_lambda_faces(&self, v: &SlabFaces) -> SlabEdges {
        let (h, hz, l) = (self.h, self.hz, self.lambda);
        let mut out = self.edges_zeros();
        for k in 0..=self.m {
            for j in 0..self.n as isize {
                for i in 0..self.n as isize {
                    let q = self.at(i, j, k);
                    if k > 0 && k < self.m {
                        out.x[q] = (v.z[self.at(i, j + 1, k)] - v.z[q]) / h
                            - l * (v.y[q] - v.y[self.at(i, j, k - 1)]) / hz;
                        out.y[q] = l * (v.x[q] - v.x[self.at(i, j, k - 1)]) / hz
                            - (v.z[self.at(i + 1, j, k)] - v.z[q]) / h;
                    }
                    if k < self.m {
                        out.z[q] = (v.y[self.at(i + 1, j, k)] - v.y[q]) / h
                            - (v.x[self.at(i, j + 1, k)] - v.x[q]) / h;
                    }
                }
            }
        }
        out
    }

    /// `rot_lambda` of an edge field, landing on faces; the exact transpose of
    /// [`Self::rot_lambda_faces`]. Wall z-faces are left at zero.
    pub fn rot_lambda_edges(&self, w: &SlabEdges) -> SlabFaces {
        let (h, hz, l) = (self.h, self.hz, self.lambda);
        let mut out = self.faces_zeros();
        for k in 0..=self.m {
            for j in 0..self.n as isize {
                for i in 0..self.n as isize {
                    let q = self.at(i, j, k);
                    if k < self.m {
                        let up = self.at(i, j, k + 1);
                        out.x[q] = (w.z[q] - w.z[self.at(i, j - 1, k)]) / h - l * (w.y[up] - w.y[q]) / hz;
                        out.y[q] = l * (w.x[up] - w.x[q]) / hz - (w.z[q] - w.z[self.at(i - 1, j, k)]) / h;
                    }
                    if k > 0 && k < self.m {
                        out.z[q] = (w.y[q] - w.y[self.at(i - 1, j, k)]) / h
                            - (w.x[q] - w.x[self.at(i, j - 1, k)]) / h;
                    }
                }
            }
        }
        out
    }

    /// `coef * (-Laplacian_lambda) + shift` on one location family, where
    /// `Laplacian_lambda = d1^2 + d2^2 + lambda^2 d3^2`.
    pub fn laplacian(&self, loc: SlabLoc, dof: &DofMap, coef: f64, shift: f64) -> CsrMatrix {
        let h2 = self.h * self.h;
        let v2 = self.lambda * self.lambda / (self.hz * self.hz);
        let face_levels = loc.on_face_levels();
        let levels = self.levels(loc);
        assemble_operator(
            dof,
            coef,
            shift,
            |q, nb| {
                let (i, j, k) = self.split(q);
                for (di, dj) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                    nb.push((self.at(i + di, j + dj, k), 1.0 / h2));
                }
                if k > 0 {
                    nb.push((self.at(i, j, k - 1), v2));
                }
                if k + 1 < levels {
                    nb.push((self.at(i, j, k + 1), v2));
                }
            },
            |q| {
                let (_, _, k) = self.split(q);
                let wall = if face_levels {
                    0.0
                } else {
                    (k == 0) as usize as f64 + (k + 1 == self.m) as usize as f64
                };
                4.0 / h2 + (2.0 + wall) * v2
            },
        )
    }
}
