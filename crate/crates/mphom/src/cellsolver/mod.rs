//! Coupled micropolar cell problems for the PTPM (3D, `lambda`-scaled) and
//! HTPM (2D, three-component) regimes.
//!
//! For each `i, k in {1, 2}` the unknowns `(u, w, pi)` solve
//!
//! ```text
//! -Lap u + grad pi - 2N^2 rot w       = e_i delta_1k
//!  div u                              = 0
//! -Rc Lap w + 4N^2 w - 2N^2 rot u     = e_i delta_2k
//! ```
//!
//! with `u = w = 0` on the obstacle (and on the walls `y3 = 0, 1` in 3D) and
//! periodicity in `y'`. In 2D the operators split into the in-plane and the
//! third components as set out in [`crate::operators`].
//!
//! The solve alternates a velocity-pressure step with frozen `w` (pressure
//! Schur complement CG over block Cholesky velocity solves) and a
//! microrotation Helmholtz step with frozen `u` (block Cholesky).

mod discrete;
pub mod picard;
mod uzawa;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use discrete::{block_apply, block_solve, build_blocks, rotation_locs, stack_len, velocity_locs, Block, Layout};
pub use picard::{coupled_picard, PicardOutcome};

use crate::geometry::{Dim, StaggeredMask};
use crate::linalg::{axpy, dot, max_abs, norm, CsrMatrix};
use crate::operators::planar::PlanarGrid;
use crate::operators::slab::SlabGrid;
use crate::operators::DofMap;
use crate::params::{Regime, RegimeKind, RegimeParams};
use crate::vtpm::check_index;
use crate::{Error, Result};

/// Iteration controls. Residual tolerances are relative to the forcing norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Momentum and angular-momentum residual tolerance.
    pub tol: f64,
    /// Divergence tolerance.
    pub div_tol: f64,
    /// Outer (Picard) tolerance on the lagged momentum residual.
    pub picard_tol: f64,
    pub max_outer: usize,
    /// Iteration cap for every inner Krylov solve.
    pub max_inner: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tol: 1e-8,
            div_tol: 1e-8,
            picard_tol: 1e-9,
            max_outer: 500,
            max_inner: 20_000,
        }
    }
}

impl SolverSettings {
    /// All tolerances scaled to `tol`, keeping the default ratios.
    pub fn with_tol(tol: f64) -> Self {
        SolverSettings {
            tol,
            div_tol: tol,
            picard_tol: 0.1 * tol,
            ..Default::default()
        }
    }
}

/// Relative residuals of a converged solution plus constraint diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Residuals {
    pub momentum: f64,
    pub angular: f64,
    pub divergence: f64,
    /// Largest absolute discrete divergence over fluid cells.
    pub divergence_max: f64,
    /// Mean pressure over fluid cells.
    pub pressure_mean: f64,
    /// `int u3` and `int w3` over the fluid part.
    pub u3_integral: f64,
    pub w3_integral: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct IterationCounts {
    pub outer: usize,
    /// Pressure CG iterations summed over all outer passes.
    pub pressure: usize,
}

/// Discrete fields of one `(i, k)` cell problem.
///
/// Components are full-grid arrays with zeros on inactive locations. In 2D:
/// `velocity = [u1 on x-faces, u2 on y-faces, u3 at cells]`,
/// `rotation = [w1 on y-faces, w2 on x-faces, w3 on nodes]`. In 3D:
/// `velocity` on the x/y/z-faces and `rotation` on the x/y/z-edges of
/// [`crate::operators::slab`].
#[derive(Debug, Clone, PartialEq)]
pub struct CellSolution {
    pub i: usize,
    pub k: usize,
    pub regime: RegimeKind,
    pub lambda: Option<f64>,
    pub coupling: f64,
    pub rc: f64,
    pub n: usize,
    pub layers: Option<usize>,
    pub mask_fingerprint: String,
    pub porosity: f64,
    pub velocity: [Vec<f64>; 3],
    pub rotation: [Vec<f64>; 3],
    pub pressure: Vec<f64>,
    /// `int_{Y_f} u_j` for `j = 1, 2, 3`.
    pub velocity_integral: [f64; 3],
    /// `int_{Y_f} w_j` for `j = 1, 2, 3`.
    pub rotation_integral: [f64; 3],
    pub residuals: Residuals,
    pub iterations: IterationCounts,
}

/// Factorized operators for one mask and parameter set, shared by the four
/// right-hand sides.
pub struct CellProblem {
    layout: Layout,
    params: RegimeParams,
    mask_fingerprint: String,
    porosity: f64,
    n: usize,
    layers: Option<usize>,
    vel: Vec<Block>,
    rot: Vec<Block>,
    coupled: usize,
    pressure: DofMap,
    g: CsrMatrix,
    gt: CsrMatrix,
}

impl CellProblem {
    /// HTPM: the 2D three-component cell problem.
    pub fn planar(mask: &StaggeredMask, params: &RegimeParams) -> Result<Self> {
        if params.regime != Regime::Htpm {
            return Err(Error::Parameter("planar cell problem requires the htpm regime".into()));
        }
        if mask.dim() != Dim::Two {
            return Err(Error::Geometry("htpm cell problem needs a 2D mask".into()));
        }
        if !mask.has_solid() {
            return Err(Error::Geometry(
                "htpm cell problem without an obstacle is singular (no walls, no solid)".into(),
            ));
        }
        Self::build(mask, params, Layout::Planar(PlanarGrid::new(mask.n())), 2)
    }

    /// PTPM: the 3D `lambda`-scaled cell problem.
    pub fn slab(mask: &StaggeredMask, params: &RegimeParams) -> Result<Self> {
        let Regime::Ptpm(lambda) = params.regime else {
            return Err(Error::Parameter("slab cell problem requires the ptpm regime".into()));
        };
        let Some(m) = mask.layers() else {
            return Err(Error::Geometry("ptpm cell problem needs a 3D mask".into()));
        };
        Self::build(mask, params, Layout::Slab(SlabGrid::new(mask.n(), m, lambda)), 3)
    }

    fn build(mask: &StaggeredMask, params: &RegimeParams, layout: Layout, coupled: usize) -> Result<Self> {
        if mask.fluid_cell_count() == 0 || !mask.fluid_connected() {
            return Err(Error::Geometry("fluid region is empty or disconnected".into()));
        }
        let n2 = params.n2();
        let vel_parts = velocity_locs(&layout)
            .into_iter()
            .map(|loc| {
                let dof = layout.dof_map(mask, loc);
                let op = layout.laplacian(loc, &dof, 1.0, 0.0);
                (dof, op)
            })
            .collect();
        let rot_parts = rotation_locs(&layout)
            .into_iter()
            .map(|loc| {
                let dof = layout.dof_map(mask, loc);
                let op = layout.laplacian(loc, &dof, params.rc, 4.0 * n2);
                (dof, op)
            })
            .collect();
        let vel = build_blocks(vel_parts)?;
        let rot = build_blocks(rot_parts)?;
        let pressure = layout.pressure_dof(mask);
        let g = layout.gradient(&pressure, &vel[..coupled]);
        let gt = g.transpose();
        Ok(CellProblem {
            layout,
            params: *params,
            mask_fingerprint: mask.fingerprint(),
            porosity: mask.porosity(),
            n: mask.n(),
            layers: mask.layers(),
            vel,
            rot,
            coupled,
            pressure,
            g,
            gt,
        })
    }

    pub fn params(&self) -> &RegimeParams {
        &self.params
    }

    fn forcing(&self, i: usize, k: usize) -> (Vec<f64>, Vec<f64>) {
        let mut fu = vec![0.0; stack_len(&self.vel)];
        let mut fw = vec![0.0; stack_len(&self.rot)];
        let (target, blocks) = if k == 1 { (&mut fu, &self.vel) } else { (&mut fw, &self.rot) };
        target[blocks[i - 1].range.clone()].fill(1.0);
        (fu, fw)
    }

    fn coupled_len(&self) -> usize {
        self.vel[self.coupled - 1].range.end
    }

    /// Solves the `(i, k)` problem.
    pub fn solve(&self, i: usize, k: usize, settings: &SolverSettings) -> Result<CellSolution> {
        check_index(i, k)?;
        let n2 = self.params.n2();
        let (fu, fw) = self.forcing(i, k);
        let fnorm = (dot(&fu, &fu) + dot(&fw, &fw)).sqrt();
        let nc = self.coupled_len();
        let mut pressure = vec![0.0; self.pressure.len()];
        let mut pressure_iters = 0usize;
        let uzawa_tol = 0.1 * settings.div_tol * fnorm;

        let outcome = {
            let pressure = &mut pressure;
            let pressure_iters = &mut pressure_iters;
            let stokes = |w: &Vec<f64>| -> Result<Vec<f64>> {
                let mut rhs = fu.clone();
                if n2 > 0.0 {
                    axpy(2.0 * n2, &self.layout.curl_rotation(&self.vel, &self.rot, w), &mut rhs);
                }
                let out = uzawa::uzawa_solve(
                    &self.vel[..self.coupled],
                    &self.g,
                    &self.gt,
                    &rhs[..nc],
                    pressure,
                    uzawa_tol,
                    settings.max_inner,
                )?;
                *pressure_iters += out.iterations;
                let mut u = rhs;
                u[..nc].copy_from_slice(&out.velocity);
                block_solve(&self.vel[self.coupled..], &mut u);
                Ok(u)
            };
            let helmholtz = |u: &Vec<f64>| -> Result<Vec<f64>> {
                let mut rhs = fw.clone();
                if n2 > 0.0 {
                    axpy(2.0 * n2, &self.layout.curl_velocity(&self.vel, &self.rot, u), &mut rhs);
                }
                block_solve(&self.rot, &mut rhs);
                Ok(rhs)
            };
            let lag = |new: &Vec<f64>, old: &Vec<f64>| -> f64 {
                if n2 == 0.0 {
                    return 0.0;
                }
                let diff: Vec<f64> = new.iter().zip(old).map(|(a, b)| a - b).collect();
                2.0 * n2 * norm(&self.layout.curl_rotation(&self.vel, &self.rot, &diff)) / fnorm
            };
            coupled_picard(
                stokes,
                helmholtz,
                lag,
                vec![0.0; stack_len(&self.rot)],
                self.params.coupling,
                settings.picard_tol,
                settings.max_outer,
            )?
        };
        let u = outcome.velocity;
        let w = outcome.rotation;

        let residuals = self.residuals(&u, &w, &pressure, &fu, &fw, fnorm);
        if !(residuals.momentum <= settings.tol
            && residuals.angular <= settings.tol
            && residuals.divergence <= settings.div_tol)
        {
            return Err(Error::NonConvergence {
                solver: format!("{} cell problem ({i}, {k})", self.params.regime.kind().as_str()),
                iterations: outcome.iterations,
                residual: residuals.momentum.max(residuals.angular).max(residuals.divergence),
                target: settings.tol.min(settings.div_tol),
            });
        }
        let vol = self.layout.volume();
        let integral = |blocks: &[Block], v: &[f64], c: usize| vol * v[blocks[c].range.clone()].iter().sum::<f64>();
        let full = |blocks: &[Block], v: &[f64], c: usize| blocks[c].dof.scatter(&v[blocks[c].range.clone()]);
        Ok(CellSolution {
            i,
            k,
            regime: self.params.regime.kind(),
            lambda: self.params.regime.lambda(),
            coupling: self.params.coupling,
            rc: self.params.rc,
            n: self.n,
            layers: self.layers,
            mask_fingerprint: self.mask_fingerprint.clone(),
            porosity: self.porosity,
            velocity: [0, 1, 2].map(|c| full(&self.vel, &u, c)),
            rotation: [0, 1, 2].map(|c| full(&self.rot, &w, c)),
            pressure: self.pressure.scatter(&pressure),
            velocity_integral: [0, 1, 2].map(|c| integral(&self.vel, &u, c)),
            rotation_integral: [0, 1, 2].map(|c| integral(&self.rot, &w, c)),
            residuals,
            iterations: IterationCounts {
                outer: outcome.iterations,
                pressure: pressure_iters,
            },
        })
    }

    fn residuals(&self, u: &[f64], w: &[f64], p: &[f64], fu: &[f64], fw: &[f64], fnorm: f64) -> Residuals {
        let n2 = self.params.n2();
        let nc = self.coupled_len();
        let mut ru = fu.to_vec();
        axpy(2.0 * n2, &self.layout.curl_rotation(&self.vel, &self.rot, w), &mut ru);
        axpy(-1.0, &block_apply(&self.vel, u), &mut ru);
        axpy(-1.0, &self.g.mul(p), &mut ru[..nc]);
        let mut rw = fw.to_vec();
        axpy(2.0 * n2, &self.layout.curl_velocity(&self.vel, &self.rot, u), &mut rw);
        axpy(-1.0, &block_apply(&self.rot, w), &mut rw);
        let div = self.gt.mul(&u[..nc]);
        let vol = self.layout.volume();
        Residuals {
            momentum: norm(&ru) / fnorm,
            angular: norm(&rw) / fnorm,
            divergence: norm(&div) / fnorm,
            divergence_max: max_abs(&div),
            pressure_mean: p.iter().sum::<f64>() / p.len().max(1) as f64,
            u3_integral: vol * u[self.vel[2].range.clone()].iter().sum::<f64>(),
            w3_integral: vol * w[self.rot[2].range.clone()].iter().sum::<f64>(),
        }
    }

    /// Both sides of the discrete energy identity
    /// `<Du,Du> + Rc<Dw,Dw> + 4N^2<w,w> - 4N^2<rot u, w> = <f_u, u> + <f_w, w>`,
    /// each multiplied by the cell volume.
    pub fn energy_balance(&self, sol: &CellSolution) -> (f64, f64) {
        let gather = |blocks: &[Block], f: &[Vec<f64>; 3]| {
            let mut out = vec![0.0; stack_len(blocks)];
            for (c, b) in blocks.iter().enumerate() {
                out[b.range.clone()].copy_from_slice(&b.dof.gather(&f[c]));
            }
            out
        };
        let u = gather(&self.vel, &sol.velocity);
        let w = gather(&self.rot, &sol.rotation);
        let (fu, fw) = self.forcing(sol.i, sol.k);
        let n2 = self.params.n2();
        let vol = self.layout.volume();
        let lhs = dot(&block_apply(&self.vel, &u), &u) + dot(&block_apply(&self.rot, &w), &w)
            - 4.0 * n2 * dot(&self.layout.curl_velocity(&self.vel, &self.rot, &u), &w);
        let rhs = dot(&fu, &u) + dot(&fw, &w);
        (vol * lhs, vol * rhs)
    }

    /// Solves the four right-hand sides concurrently, returned in the order
    /// `(1,1), (2,1), (1,2), (2,2)`.
    pub fn solve_all(&self, settings: &SolverSettings) -> Result<Vec<CellSolution>> {
        INDEX_PAIRS
            .par_iter()
            .map(|&(i, k)| self.solve(i, k, settings))
            .collect::<Vec<_>>()
            .into_iter()
            .collect()
    }
}

/// Order in which the four right-hand sides are solved and stored.
pub const INDEX_PAIRS: [(usize, usize); 4] = [(1, 1), (2, 1), (1, 2), (2, 2)];

/// Solves one PTPM cell problem on a 3D mask.
pub fn solve_cell_ptpm(mask: &StaggeredMask, params: &RegimeParams, i: usize, k: usize, settings: &SolverSettings) -> Result<CellSolution> {
    CellProblem::slab(mask, params)?.solve(i, k, settings)
}

/// Solves one HTPM cell problem on a 2D mask.
pub fn solve_cell_htpm(mask: &StaggeredMask, params: &RegimeParams, i: usize, k: usize, settings: &SolverSettings) -> Result<CellSolution> {
    CellProblem::planar(mask, params)?.solve(i, k, settings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_cell_mask, CellGeometry, ObstacleShape};
    use crate::oracles::{column_discrepancy, ptpm_column_oracle};
    use crate::params::Lambda;

    fn disk_mask(n: usize, dim: Dim, m: usize) -> StaggeredMask {
        build_cell_mask(&CellGeometry::new(ObstacleShape::Disk { radius: 0.25 }, n, m), dim).unwrap()
    }

    fn tight() -> SolverSettings {
        SolverSettings::with_tol(1e-10)
    }

    #[test]
    fn uncoupled_torque_moves_no_fluid() {
        let mask = disk_mask(16, Dim::Two, 0);
        let problem = CellProblem::planar(&mask, &RegimeParams::htpm(0.0, 0.1).unwrap()).unwrap();
        for i in 1..=2 {
            let sol = problem.solve(i, 2, &tight()).unwrap();
            assert_eq!(sol.iterations.outer, 1);
            for v in sol.velocity.iter().chain([&sol.pressure]) {
                assert!(max_abs(v) == 0.0);
            }
            assert!(sol.rotation_integral[i - 1] > 0.0);
        }
    }

    #[test]
    fn uncoupled_force_converges_in_one_pass() {
        let mask = disk_mask(16, Dim::Two, 0);
        let problem = CellProblem::planar(&mask, &RegimeParams::htpm(0.0, 0.1).unwrap()).unwrap();
        let sol = problem.solve(1, 1, &tight()).unwrap();
        assert_eq!(sol.iterations.outer, 1);
        assert!(max_abs(&sol.rotation[0]) == 0.0 && max_abs(&sol.rotation[1]) == 0.0);
    }

    #[test]
    fn energy_identity_holds_in_both_dimensions() {
        let s = SolverSettings::with_tol(1e-9);
        let planar = CellProblem::planar(&disk_mask(16, Dim::Two, 0), &RegimeParams::htpm(0.6, 0.1).unwrap()).unwrap();
        let slab = CellProblem::slab(&disk_mask(8, Dim::Three, 8), &RegimeParams::ptpm(1.0, 0.6, 0.1).unwrap()).unwrap();
        for problem in [&planar, &slab] {
            for (i, k) in INDEX_PAIRS {
                let sol = problem.solve(i, k, &s).unwrap();
                let (lhs, rhs) = problem.energy_balance(&sol);
                assert!(rhs > 0.0);
                assert!((lhs - rhs).abs() <= 10.0 * s.tol * rhs, "({i},{k}): {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn permeability_is_symmetric_for_an_ellipse() {
        let geom = CellGeometry::new(ObstacleShape::Ellipse { a: 0.35, b: 0.15 }, 24, 0);
        let mask = build_cell_mask(&geom, Dim::Two).unwrap();
        let sols = CellProblem::planar(&mask, &RegimeParams::htpm(0.5, 0.2).unwrap())
            .unwrap()
            .solve_all(&tight())
            .unwrap();
        let k12 = sols[0].velocity_integral[1];
        let k21 = sols[1].velocity_integral[0];
        let scale = sols[0].velocity_integral[0];
        assert!((k12 - k21).abs() <= 1e-8 * scale, "{k12} vs {k21}");
    }

    #[test]
    fn stronger_coupling_needs_more_outer_iterations() {
        let mask = disk_mask(16, Dim::Two, 0);
        let outer = |n: f64| {
            CellProblem::planar(&mask, &RegimeParams::htpm(n, 0.1).unwrap())
                .unwrap()
                .solve(1, 1, &tight())
                .unwrap()
                .iterations
                .outer
        };
        assert!(outer(0.9) > outer(0.3));
    }

    #[test]
    fn solid_locations_stay_at_rest() {
        let mask = disk_mask(16, Dim::Two, 0);
        let sol = CellProblem::planar(&mask, &RegimeParams::htpm(0.6, 0.1).unwrap())
            .unwrap()
            .solve(1, 1, &tight())
            .unwrap();
        let zero_off = |v: &[f64], flags: &[bool]| v.iter().zip(flags).all(|(x, &f)| f || *x == 0.0);
        assert!(zero_off(&sol.velocity[0], mask.x_faces()));
        assert!(zero_off(&sol.velocity[1], mask.y_faces()));
        assert!(zero_off(&sol.velocity[2], mask.cells()));
        assert!(zero_off(&sol.rotation[0], mask.y_faces()));
        assert!(zero_off(&sol.rotation[1], mask.x_faces()));
        assert!(zero_off(&sol.rotation[2], mask.nodes()));
        assert!(zero_off(&sol.pressure, mask.cells()));
        assert!(sol.velocity[0].iter().any(|&x| x > 0.0));
    }

    #[test]
    fn empty_slab_matches_the_column_problem() {
        let (n, m) = (4, 16);
        let mask = build_cell_mask(&CellGeometry::new(ObstacleShape::None, n, m), Dim::Three).unwrap();
        let params = RegimeParams::ptpm(2.0, 0.7, 0.3).unwrap();
        let problem = CellProblem::slab(&mask, &params).unwrap();
        for (i, k) in INDEX_PAIRS {
            let sol = problem.solve(i, k, &tight()).unwrap();
            let col = ptpm_column_oracle(Lambda::new(2.0).unwrap(), 0.7, 0.3, m, i, k).unwrap();
            let d = column_discrepancy(&sol, &col, n, m);
            assert!(d <= 1e-8, "({i},{k}): {d}");
        }
    }

    #[test]
    fn bad_indices_are_rejected() {
        let mask = disk_mask(8, Dim::Two, 0);
        let problem = CellProblem::planar(&mask, &RegimeParams::htpm(0.3, 0.1).unwrap()).unwrap();
        assert!(problem.solve(3, 1, &tight()).is_err());
        assert!(problem.solve(1, 0, &tight()).is_err());
    }
}
