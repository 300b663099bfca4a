//! Decoupled (`N = 0`) reference solvers with their own stencil assembly.
//!
//! The Stokes problem is solved as one bordered saddle-point system
//! `[A G 0; G^T 0 1; 0 1^T 0]` by sparse LU, in place of the pressure
//! iteration of the main solver. Nothing here goes through
//! [`crate::operators`].

use crate::geometry::{Dim, StaggeredMask};
use crate::linalg::{dense_solve, CsrMatrix, LuSolver};
use crate::params::Lambda;
use crate::{Error, Result};

/// Horizontal footprint of a location family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Foot {
    Cell,
    X,
    Y,
    Node,
}

/// Vertical placement: planar, cell levels (reflected wall ghosts) or face
/// levels (wall values pinned to zero).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Vert {
    Planar,
    CellLevels,
    FaceLevels,
}

struct Grid {
    n: usize,
    m: usize,
    h: f64,
    hz: f64,
    lambda: f64,
    cell: Vec<bool>,
}

struct Family {
    len: usize,
    dofs: Vec<usize>,
    slot: Vec<Option<usize>>,
    vert: Vert,
}

impl Grid {
    fn new(mask: &StaggeredMask, lambda: Option<Lambda>) -> Result<Self> {
        if mask.fluid_cell_count() == 0 {
            return Err(Error::Geometry("oracle: mask has no fluid cells".into()));
        }
        let n = mask.n();
        let (m, lambda) = match (mask.dim(), lambda) {
            (Dim::Two, _) => (1, 0.0),
            (Dim::Three, Some(l)) => (mask.layers().unwrap_or(1), l.value()),
            (Dim::Three, None) => {
                return Err(Error::Parameter("oracle: a 3D mask needs lambda".into()));
            }
        };
        Ok(Grid {
            n,
            m,
            h: 1.0 / n as f64,
            hz: 1.0 / m as f64,
            lambda,
            cell: mask.cells().to_vec(),
        })
    }

    fn planar(&self) -> bool {
        self.lambda == 0.0
    }

    fn c(&self, i: usize, j: usize) -> bool {
        self.cell[(j % self.n) * self.n + i % self.n]
    }

    fn foot(&self, f: Foot, i: usize, j: usize) -> bool {
        match f {
            Foot::Cell => self.c(i, j),
            Foot::X => self.c(i, j) && self.c(i + 1, j),
            Foot::Y => self.c(i, j) && self.c(i, j + 1),
            Foot::Node => self.c(i, j) && self.c(i + 1, j) && self.c(i, j + 1) && self.c(i + 1, j + 1),
        }
    }

    fn family(&self, foot: Foot, vert: Vert) -> Family {
        let nn = self.n * self.n;
        let levels = match vert {
            Vert::Planar => 1,
            Vert::CellLevels => self.m,
            Vert::FaceLevels => self.m + 1,
        };
        let mut slot = vec![None; nn * levels];
        let mut dofs = Vec::new();
        for k in 0..levels {
            if vert == Vert::FaceLevels && (k == 0 || k == self.m) {
                continue;
            }
            for j in 0..self.n {
                for i in 0..self.n {
                    if self.foot(foot, i, j) {
                        let q = (k * self.n + j) * self.n + i;
                        slot[q] = Some(dofs.len());
                        dofs.push(q);
                    }
                }
            }
        }
        Family {
            len: nn * levels,
            dofs,
            slot,
            vert,
        }
    }

    fn split(&self, q: usize) -> (usize, usize, usize) {
        (q % self.n, (q / self.n) % self.n, q / (self.n * self.n))
    }

    fn at(&self, i: usize, j: usize, k: usize, di: isize, dj: isize) -> usize {
        let n = self.n as isize;
        let ii = (i as isize + di).rem_euclid(n) as usize;
        let jj = (j as isize + dj).rem_euclid(n) as usize;
        (k * self.n + jj) * self.n + ii
    }

    /// Triplets of `coef (-Lap_lambda) + shift` on one family, offset to `base`.
    fn push_laplacian(&self, fam: &Family, coef: f64, shift: f64, base: usize, out: &mut Vec<(usize, usize, f64)>) {
        let h2 = 1.0 / (self.h * self.h);
        let v2 = if self.planar() { 0.0 } else { self.lambda * self.lambda / (self.hz * self.hz) };
        for (r, &q) in fam.dofs.iter().enumerate() {
            let (i, j, k) = self.split(q);
            let mut diag = 4.0 * h2;
            for (di, dj) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                if let Some(c) = fam.slot[self.at(i, j, k, di, dj)] {
                    out.push((base + r, base + c, -coef * h2));
                }
            }
            match fam.vert {
                Vert::Planar => {}
                Vert::CellLevels => {
                    diag += 2.0 * v2;
                    for kk in [k.wrapping_sub(1), k + 1] {
                        if kk < self.m {
                            if let Some(c) = fam.slot[self.at(i, j, kk, 0, 0)] {
                                out.push((base + r, base + c, -coef * v2));
                            }
                        } else {
                            // ghost across the wall: u(-1) = -u(0)
                            diag += v2;
                        }
                    }
                }
                Vert::FaceLevels => {
                    diag += 2.0 * v2;
                    for kk in [k - 1, k + 1] {
                        if let Some(c) = fam.slot[self.at(i, j, kk, 0, 0)] {
                            out.push((base + r, base + c, -coef * v2));
                        }
                    }
                }
            }
            out.push((base + r, base + r, coef * diag + shift));
        }
    }

    fn volume(&self) -> f64 {
        if self.planar() {
            self.h * self.h
        } else {
            self.h * self.h * self.hz
        }
    }
}

/// Velocity and pressure of the decoupled Stokes cell problem with forcing `e_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct StokesOracleSolution {
    /// Full-grid velocity components: x-faces, y-faces and (3D) z-faces.
    pub velocity: Vec<Vec<f64>>,
    /// Cell pressure with zero sum over fluid cells.
    pub pressure: Vec<f64>,
    /// `int_{Y_f} u_j`; the third entry is zero in 2D.
    pub velocity_integral: [f64; 3],
}

/// Solves `-Lap u + grad pi = e_i, div u = 0` on the fluid part of the cell.
/// In 2D the in-plane problem is solved; `lambda` is required for a 3D mask.
pub fn stokes_cell_oracle(mask: &StaggeredMask, i: usize, lambda: Option<Lambda>) -> Result<StokesOracleSolution> {
    if !(1..=2).contains(&i) {
        return Err(Error::Parameter(format!("oracle: forcing index {i} must be 1 or 2")));
    }
    let g = Grid::new(mask, lambda)?;
    if g.planar() && !mask.has_solid() {
        return Err(Error::Geometry("oracle: planar Stokes cell without an obstacle is singular".into()));
    }
    let fams: Vec<Family> = if g.planar() {
        vec![g.family(Foot::X, Vert::Planar), g.family(Foot::Y, Vert::Planar)]
    } else {
        vec![
            g.family(Foot::X, Vert::CellLevels),
            g.family(Foot::Y, Vert::CellLevels),
            g.family(Foot::Cell, Vert::FaceLevels),
        ]
    };
    let pfam = g.family(Foot::Cell, if g.planar() { Vert::Planar } else { Vert::CellLevels });
    let mut offsets = Vec::new();
    let mut nu = 0;
    for f in &fams {
        offsets.push(nu);
        nu += f.dofs.len();
    }
    let np = pfam.dofs.len();
    let size = nu + np + 1;
    let mut trip = Vec::new();
    for (f, &off) in fams.iter().zip(&offsets) {
        g.push_laplacian(f, 1.0, 0.0, off, &mut trip);
    }
    // gradient block and its transpose
    for (c, (f, &off)) in fams.iter().zip(&offsets).enumerate() {
        for (r, &q) in f.dofs.iter().enumerate() {
            let (a, b, k) = g.split(q);
            let (hi, lo, w) = match c {
                0 => (g.at(a, b, k, 1, 0), q, 1.0 / g.h),
                1 => (g.at(a, b, k, 0, 1), q, 1.0 / g.h),
                _ => (g.at(a, b, k, 0, 0), g.at(a, b, k - 1, 0, 0), g.lambda / g.hz),
            };
            for (p, s) in [(hi, w), (lo, -w)] {
                let col = nu + pfam.slot[p].expect("velocity dof next to a solid cell");
                trip.push((off + r, col, s));
                trip.push((col, off + r, s));
            }
        }
    }
    for r in 0..np {
        trip.push((nu + r, nu + np, 1.0));
        trip.push((nu + np, nu + r, 1.0));
    }
    let a = CsrMatrix::from_triplets(size, size, &trip);
    let mut rhs = vec![0.0; size];
    let fi = i - 1;
    rhs[offsets[fi]..offsets[fi] + fams[fi].dofs.len()].fill(1.0);
    let x = LuSolver::new(&a)?.solve_checked(&a, &rhs)?;

    let vol = g.volume();
    let mut velocity = Vec::new();
    let mut velocity_integral = [0.0; 3];
    for (c, (f, &off)) in fams.iter().zip(&offsets).enumerate() {
        let mut full = vec![0.0; f.len];
        for (r, &q) in f.dofs.iter().enumerate() {
            full[q] = x[off + r];
        }
        velocity_integral[c] = vol * x[off..off + f.dofs.len()].iter().sum::<f64>();
        velocity.push(full);
    }
    let mut pressure = vec![0.0; pfam.len];
    for (r, &q) in pfam.dofs.iter().enumerate() {
        pressure[q] = x[nu + r];
    }
    Ok(StokesOracleSolution {
        velocity,
        pressure,
        velocity_integral,
    })
}

/// Decoupled microrotation: `-Rc Lap w_c + shift w_c = 1` on the family of
/// component `c in {1, 2, 3}`, by sparse LU. Returns the full-grid component.
///
/// Families follow the cell solver: in 2D `w1` on y-faces, `w2` on x-faces,
/// `w3` on nodes; in 3D the x-, y- and z-edges.
pub fn helmholtz_cell_oracle(
    mask: &StaggeredMask,
    component: usize,
    rc: f64,
    shift: f64,
    lambda: Option<Lambda>,
) -> Result<Vec<f64>> {
    let g = Grid::new(mask, lambda)?;
    let fam = match (g.planar(), component) {
        (true, 1) => g.family(Foot::Y, Vert::Planar),
        (true, 2) => g.family(Foot::X, Vert::Planar),
        (true, 3) => g.family(Foot::Node, Vert::Planar),
        (false, 1) => g.family(Foot::Y, Vert::FaceLevels),
        (false, 2) => g.family(Foot::X, Vert::FaceLevels),
        (false, 3) => g.family(Foot::Node, Vert::CellLevels),
        _ => return Err(Error::Parameter(format!("oracle: component {component} must be 1, 2 or 3"))),
    };
    if fam.dofs.is_empty() {
        return Err(Error::Geometry("oracle: component has no active locations".into()));
    }
    let mut trip = Vec::new();
    g.push_laplacian(&fam, rc, shift, 0, &mut trip);
    let nd = fam.dofs.len();
    let a = CsrMatrix::from_triplets(nd, nd, &trip);
    let x = LuSolver::new(&a)?.solve_checked(&a, &vec![1.0; nd])?;
    let mut full = vec![0.0; fam.len];
    for (r, &q) in fam.dofs.iter().enumerate() {
        full[q] = x[r];
    }
    Ok(full)
}

/// Vertical profiles of the 3D cell problem without obstacle.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnProfiles {
    /// `u1, u2` at the cell levels `(k + 1/2)/m`.
    pub u: [Vec<f64>; 2],
    /// `w1, w2` at the face levels `k/m`, including the zero wall values.
    pub w: [Vec<f64>; 2],
}

/// Without an obstacle the 3D cell problem is independent of `y'`, the
/// pressure is constant and `u3 = w3 = 0`; what remains is
///
/// ```text
/// -l^2 u1'' + 2N^2 l w2'             = d_i1 d_k1
/// -l^2 u2'' - 2N^2 l w1'             = d_i2 d_k1
/// -Rc l^2 w1'' + 4N^2 w1 + 2N^2 l u2' = d_i1 d_k2
/// -Rc l^2 w2'' + 4N^2 w2 - 2N^2 l u1' = d_i2 d_k2
/// ```
///
/// solved here on the same vertical staggering with one dense LU.
pub fn ptpm_column_oracle(lambda: Lambda, coupling: f64, rc: f64, m: usize, i: usize, k: usize) -> Result<ColumnProfiles> {
    crate::params::check_coupling(coupling)?;
    crate::params::check_rc(rc)?;
    if m < 2 {
        return Err(Error::Parameter("oracle: column needs m >= 2".into()));
    }
    if !(1..=2).contains(&i) || !(1..=2).contains(&k) {
        return Err(Error::Parameter(format!("oracle: bad index pair ({i}, {k})")));
    }
    let l = lambda.value();
    let hz = 1.0 / m as f64;
    let v2 = l * l / (hz * hz);
    let n2 = coupling * coupling;
    // unknowns: u1[0..m], u2[0..m], w1[1..m), w2[1..m)
    let nw = m - 1;
    let iu = |c: usize, kk: usize| c * m + kk;
    let iw = |c: usize, kk: usize| 2 * m + c * nw + (kk - 1);
    let size = 2 * m + 2 * nw;
    let mut a = vec![vec![0.0; size]; size];
    let mut b = vec![0.0; size];
    for c in 0..2 {
        for kk in 0..m {
            let r = iu(c, kk);
            a[r][r] = 2.0 * v2 + if kk == 0 { v2 } else { 0.0 } + if kk == m - 1 { v2 } else { 0.0 };
            if kk > 0 {
                a[r][iu(c, kk - 1)] = -v2;
            }
            if kk + 1 < m {
                a[r][iu(c, kk + 1)] = -v2;
            }
        }
        for kk in 1..m {
            let r = iw(c, kk);
            a[r][r] = 2.0 * rc * v2 + 4.0 * n2;
            if kk > 1 {
                a[r][iw(c, kk - 1)] = -rc * v2;
            }
            if kk + 1 < m {
                a[r][iw(c, kk + 1)] = -rc * v2;
            }
        }
    }
    let s = 2.0 * n2 * l / hz;
    // u1 row: +s (w2[k+1] - w2[k]);  u2 row: -s (w1[k+1] - w1[k])
    for kk in 0..m {
        for (c, wc, sign) in [(0usize, 1usize, 1.0), (1, 0, -1.0)] {
            let r = iu(c, kk);
            if kk + 1 < m {
                a[r][iw(wc, kk + 1)] += sign * s;
            }
            if kk >= 1 {
                a[r][iw(wc, kk)] -= sign * s;
            }
        }
    }
    // w1 row: +s (u2[k] - u2[k-1]);  w2 row: -s (u1[k] - u1[k-1])
    for kk in 1..m {
        for (c, uc, sign) in [(0usize, 1usize, 1.0), (1, 0, -1.0)] {
            let r = iw(c, kk);
            a[r][iu(uc, kk)] += sign * s;
            a[r][iu(uc, kk - 1)] -= sign * s;
        }
    }
    if k == 1 {
        for kk in 0..m {
            b[iu(i - 1, kk)] = 1.0;
        }
    } else {
        for kk in 1..m {
            b[iw(i - 1, kk)] = 1.0;
        }
    }
    let x = dense_solve(&a, &b)?;
    let u = [0, 1].map(|c| (0..m).map(|kk| x[iu(c, kk)]).collect::<Vec<_>>());
    let w = [0, 1].map(|c| {
        (0..=m)
            .map(|kk| if kk == 0 || kk == m { 0.0 } else { x[iw(c, kk)] })
            .collect::<Vec<_>>()
    });
    Ok(ColumnProfiles { u, w })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_cell_mask, CellGeometry, ObstacleShape};

    fn disk(n: usize, m: usize, dim: Dim) -> StaggeredMask {
        build_cell_mask(&CellGeometry::new(ObstacleShape::Disk { radius: 0.25 }, n, m), dim).unwrap()
    }

    #[test]
    fn empty_slab_gives_plane_poiseuille() {
        let mask = build_cell_mask(&CellGeometry::new(ObstacleShape::None, 4, 16), Dim::Three).unwrap();
        let l = Lambda::new(1.0).unwrap();
        let sol = stokes_cell_oracle(&mask, 1, Some(l)).unwrap();
        // the discrete parabola is exact at the cell levels: u = y(1-y)/2 sampled, up to the ghost wall
        let m = 16;
        let hz = 1.0 / m as f64;
        let col = ptpm_column_oracle(l, 0.0, 1.0, m, 1, 1).unwrap();
        for k in 0..m {
            let y = (k as f64 + 0.5) * hz;
            let u = sol.velocity[0][k * 16];
            assert!((u - col.u[0][k]).abs() < 1e-12);
            assert!((u - 0.5 * y * (1.0 - y)).abs() < hz * hz);
        }
        assert!(sol.velocity[1].iter().all(|v| v.abs() < 1e-12));
        assert!(sol.pressure.iter().all(|p| p.abs() < 1e-10));
    }

    #[test]
    fn planar_disk_is_symmetric_and_positive() {
        let mask = disk(16, 0, Dim::Two);
        let a = stokes_cell_oracle(&mask, 1, None).unwrap();
        let b = stokes_cell_oracle(&mask, 2, None).unwrap();
        assert!(a.velocity_integral[0] > 0.0);
        assert!((a.velocity_integral[0] - b.velocity_integral[1]).abs() < 1e-12);
        assert!((a.velocity_integral[1] - b.velocity_integral[0]).abs() < 1e-12);
        let psum: f64 = a.pressure.iter().sum();
        assert!(psum.abs() < 1e-10);
    }

    #[test]
    fn no_fluid_and_no_obstacle_are_rejected() {
        let empty = StaggeredMask::from_cells(4, None, vec![false; 16]).unwrap();
        assert!(stokes_cell_oracle(&empty, 1, None).is_err());
        let open = StaggeredMask::from_cells(4, None, vec![true; 16]).unwrap();
        assert!(stokes_cell_oracle(&open, 1, None).is_err());
        let slab = disk(8, 4, Dim::Three);
        assert!(stokes_cell_oracle(&slab, 1, None).is_err());
    }

    #[test]
    fn decoupled_column_is_zero_without_forcing_of_u() {
        let l = Lambda::new(0.7).unwrap();
        let col = ptpm_column_oracle(l, 0.0, 0.2, 12, 2, 2).unwrap();
        assert!(col.u.iter().flatten().all(|v| v.abs() < 1e-14));
        assert!(col.w[1].iter().any(|v| *v > 0.0));
    }

    #[test]
    fn helmholtz_oracle_open_node_family_is_constant() {
        let open = StaggeredMask::from_cells(6, None, vec![true; 36]).unwrap();
        let w = helmholtz_cell_oracle(&open, 3, 0.1, 2.0, None).unwrap();
        assert!(w.iter().all(|v| (v - 0.5).abs() < 1e-12));
    }
}
