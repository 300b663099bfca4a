//! Assembled pieces of the coupled cell operator on compact (active-only) vectors.
//!
//! Velocity unknowns are stacked component by component, pressure-coupled
//! components first; microrotation unknowns likewise. Block `c` of both stacks
//! carries component `c + 1`, which is where the forcing `e_i` lands.

use std::ops::Range;

use crate::geometry::StaggeredMask;
use crate::linalg::{CholeskySolver, CsrMatrix};
use crate::operators::planar::{EdgeVector, FaceVector, PlanarGrid};
use crate::operators::slab::{SlabEdges, SlabFaces, SlabGrid, SlabLoc};
use crate::operators::{DofMap, PlanarLoc};
use crate::Result;

/// One component: its active locations, assembled operator and factorization.
pub(crate) struct Block {
    pub dof: DofMap,
    pub range: Range<usize>,
    pub op: CsrMatrix,
    pub chol: CholeskySolver,
}

impl Block {
    fn new(dof: DofMap, start: usize, op: CsrMatrix) -> Result<Self> {
        let chol = CholeskySolver::new(&op)?;
        Ok(Block {
            range: start..start + dof.len(),
            dof,
            op,
            chol,
        })
    }
}

pub(crate) fn build_blocks(parts: Vec<(DofMap, CsrMatrix)>) -> Result<Vec<Block>> {
    let mut start = 0;
    let mut out = Vec::with_capacity(parts.len());
    for (dof, op) in parts {
        let b = Block::new(dof, start, op)?;
        start = b.range.end;
        out.push(b);
    }
    Ok(out)
}

pub(crate) fn stack_len(blocks: &[Block]) -> usize {
    blocks.last().map_or(0, |b| b.range.end)
}

/// Solves each block of a block-diagonal system in place.
pub(crate) fn block_solve(blocks: &[Block], v: &mut [f64]) {
    for b in blocks {
        b.chol.solve_in_place(&mut v[b.range.clone()]);
    }
}

/// `y = diag(blocks) x`
pub(crate) fn block_apply(blocks: &[Block], x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; x.len()];
    for b in blocks {
        b.op.matvec(&x[b.range.clone()], &mut y[b.range.clone()]);
    }
    y
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Layout {
    Planar(PlanarGrid),
    Slab(SlabGrid),
}

/// Velocity location families, in stacking order.
pub(crate) fn velocity_locs(layout: &Layout) -> Vec<Loc> {
    match layout {
        Layout::Planar(_) => vec![Loc::P(PlanarLoc::XFace), Loc::P(PlanarLoc::YFace), Loc::P(PlanarLoc::Cell)],
        Layout::Slab(_) => vec![Loc::S(SlabLoc::XFace), Loc::S(SlabLoc::YFace), Loc::S(SlabLoc::ZFace)],
    }
}

/// Microrotation location families, in stacking order.
pub(crate) fn rotation_locs(layout: &Layout) -> Vec<Loc> {
    match layout {
        Layout::Planar(_) => vec![Loc::P(PlanarLoc::YFace), Loc::P(PlanarLoc::XFace), Loc::P(PlanarLoc::Node)],
        Layout::Slab(_) => vec![Loc::S(SlabLoc::XEdge), Loc::S(SlabLoc::YEdge), Loc::S(SlabLoc::ZEdge)],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Loc {
    P(PlanarLoc),
    S(SlabLoc),
}

impl Layout {
    pub fn dof_map(&self, mask: &StaggeredMask, loc: Loc) -> DofMap {
        match (self, loc) {
            (Layout::Planar(g), Loc::P(l)) => g.dof_map(mask, l),
            (Layout::Slab(g), Loc::S(l)) => g.dof_map(mask, l),
            _ => unreachable!("location family does not match layout"),
        }
    }

    /// `coef (-Laplacian) + shift` on one family.
    pub fn laplacian(&self, loc: Loc, dof: &DofMap, coef: f64, shift: f64) -> CsrMatrix {
        match (self, loc) {
            (Layout::Planar(g), Loc::P(_)) => g.laplacian(dof, coef, shift),
            (Layout::Slab(g), Loc::S(l)) => g.laplacian(l, dof, coef, shift),
            _ => unreachable!("location family does not match layout"),
        }
    }

    pub fn pressure_dof(&self, mask: &StaggeredMask) -> DofMap {
        match self {
            Layout::Planar(g) => g.dof_map(mask, PlanarLoc::Cell),
            Layout::Slab(g) => g.dof_map(mask, SlabLoc::Cell),
        }
    }

    /// Volume of one grid cell, the quadrature weight of every location.
    pub fn volume(&self) -> f64 {
        match self {
            Layout::Planar(g) => g.h * g.h,
            Layout::Slab(g) => g.h * g.h * g.hz,
        }
    }

    /// Gradient from compact pressure to the stacked pressure-coupled velocity blocks.
    pub fn gradient(&self, pressure: &DofMap, vel: &[Block]) -> CsrMatrix {
        let mut trip = Vec::new();
        let mut push = |row: usize, hi: usize, lo: usize, w: f64| {
            if let (Some(a), Some(b)) = (pressure.slot(hi), pressure.slot(lo)) {
                trip.push((row, a, w));
                trip.push((row, b, -w));
            }
        };
        match self {
            Layout::Planar(g) => {
                let n = g.n;
                for (c, b) in vel.iter().enumerate() {
                    for (r, &q) in b.dof.dofs().iter().enumerate() {
                        let (i, j) = (q % n, q / n);
                        let hi = if c == 0 { g.idx((i + 1) % n, j) } else { g.idx(i, (j + 1) % n) };
                        push(b.range.start + r, hi, q, 1.0 / g.h);
                    }
                }
            }
            Layout::Slab(g) => {
                let n = g.n;
                for (c, b) in vel.iter().enumerate() {
                    for (r, &q) in b.dof.dofs().iter().enumerate() {
                        let (i, j, k) = (q % n, (q / n) % n, q / (n * n));
                        let row = b.range.start + r;
                        match c {
                            0 => push(row, g.idx((i + 1) % n, j, k), q, 1.0 / g.h),
                            1 => push(row, g.idx(i, (j + 1) % n, k), q, 1.0 / g.h),
                            // z-face at level k sits between cells k-1 and k
                            _ => push(row, g.idx(i, j, k), g.idx(i, j, k - 1), g.lambda / g.hz),
                        }
                    }
                }
            }
        }
        let rows = vel.last().map_or(0, |b| b.range.end);
        CsrMatrix::from_triplets(rows, pressure.len(), &trip)
    }

    /// `R u`: curl of the stacked velocity, restricted to the microrotation locations.
    pub fn curl_velocity(&self, vel: &[Block], rot: &[Block], u: &[f64]) -> Vec<f64> {
        let full = |c: usize| vel[c].dof.scatter(&u[vel[c].range.clone()]);
        let parts: [Vec<f64>; 3] = match self {
            Layout::Planar(g) => {
                let fv = FaceVector { c1: full(0), c2: full(1) };
                let e = g.rot2d_scalar_centred(&full(2));
                [e.c1, e.c2, g.rot2d_vector(&fv)]
            }
            Layout::Slab(g) => {
                let e = g.rot_lambda_faces(&SlabFaces {
                    x: full(0),
                    y: full(1),
                    z: full(2),
                });
                [e.x, e.y, e.z]
            }
        };
        let mut out = vec![0.0; stack_len(rot)];
        for (b, p) in rot.iter().zip(parts) {
            out[b.range.clone()].copy_from_slice(&b.dof.gather(&p));
        }
        out
    }

    /// `R^T w`: curl of the stacked microrotation, restricted to the velocity locations.
    pub fn curl_rotation(&self, vel: &[Block], rot: &[Block], w: &[f64]) -> Vec<f64> {
        let full = |c: usize| rot[c].dof.scatter(&w[rot[c].range.clone()]);
        let parts: [Vec<f64>; 3] = match self {
            Layout::Planar(g) => {
                let f = g.rot2d_scalar(&full(2));
                let ev = EdgeVector { c1: full(0), c2: full(1) };
                [f.c1, f.c2, g.rot2d_vector_edges(&ev)]
            }
            Layout::Slab(g) => {
                let f = g.rot_lambda_edges(&SlabEdges {
                    x: full(0),
                    y: full(1),
                    z: full(2),
                });
                [f.x, f.y, f.z]
            }
        };
        let mut out = vec![0.0; stack_len(vel)];
        for (b, p) in vel.iter().zip(parts) {
            out[b.range.clone()].copy_from_slice(&b.dof.gather(&p));
        }
        out
    }
}
