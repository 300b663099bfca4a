//! Independent reference computations and the verification suite.
//!
//! Each oracle follows a different code path from the solver it checks: a
//! monolithic sparse LU in place of pressure iteration and block Cholesky, a
//! dense column solve for the obstacle-free slab, central differences for the
//! thin-film profiles, a Laurent series for `Phi`, and an index map for the
//! quarter-turn symmetry.

mod series;
mod stokes;
mod symmetry;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use series::{phi_series_oracle, vtpm_bvp_oracle, BvpProfiles};
pub use stokes::{helmholtz_cell_oracle, ptpm_column_oracle, stokes_cell_oracle, ColumnProfiles, StokesOracleSolution};
pub use symmetry::rotation_symmetry_check;

use crate::cellsolver::{CellProblem, CellSolution, SolverSettings};
use crate::geometry::{build_cell_mask, CellGeometry, Dim, ObstacleShape};
use crate::params::{Lambda, RegimeParams};
use crate::vtpm::{phi, vtpm_profiles, VtpmClosure};
use crate::Result;

/// Outcome of one oracle comparison. `pass` holds iff `discrepancy <= tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub name: String,
    pub discrepancy: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Wall time in seconds.
    pub runtime: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl OracleReport {
    pub fn new(name: impl Into<String>, discrepancy: f64, tolerance: f64, runtime: f64) -> Self {
        OracleReport {
            name: name.into(),
            discrepancy,
            tolerance,
            pass: discrepancy <= tolerance,
            runtime,
            error: None,
        }
    }

    fn failed(name: impl Into<String>, tolerance: f64, runtime: f64, err: &crate::Error) -> Self {
        OracleReport {
            name: name.into(),
            discrepancy: f64::INFINITY,
            tolerance,
            pass: false,
            runtime,
            error: Some(err.to_string()),
        }
    }
}

/// Runs `f` and turns its `(discrepancy, tolerance)` or error into a report.
fn timed(name: &str, tolerance: f64, f: impl FnOnce() -> Result<f64>) -> OracleReport {
    let start = Instant::now();
    match f() {
        Ok(d) => OracleReport::new(name, d, tolerance, start.elapsed().as_secs_f64()),
        Err(e) => OracleReport::failed(name, tolerance, start.elapsed().as_secs_f64(), &e),
    }
}

/// Largest `|a_j - b_j|` over entries, divided by the largest `|b_j|`.
pub fn scaled_max_diff(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// `Phi` closed form against its series at `x in {1e-6, 1e-3, 0.1}`.
pub fn check_phi_series() -> OracleReport {
    timed("phi closed form vs series", 1e-12, || {
        let n: f64 = 0.5;
        let mut worst = 0.0f64;
        for x in [1e-6, 1e-3, 0.1] {
            let rc = n * n * (1.0 - n * n) / (x * x);
            worst = worst.max((phi(n, rc)? - phi_series_oracle(n, rc)?).abs());
        }
        Ok(worst)
    })
}

/// Explicit thin-film profiles against the finite-difference solution.
pub fn check_vtpm_profiles(coupling: f64, rc: f64, nodes: usize) -> OracleReport {
    let name = format!("thin-film profiles vs BVP (N = {coupling}, Rc = {rc})");
    timed(&name, 1e-5, || {
        let q = [1.0, -0.5];
        let g = [0.3, 1.0];
        let closure = VtpmClosure::new(coupling, rc)?;
        let bvp = vtpm_bvp_oracle(coupling, rc, q, g, nodes)?;
        let mut worst = 0.0f64;
        for ((y, u), w) in bvp.y.iter().zip(&bvp.u).zip(&bvp.w) {
            let (ue, we) = vtpm_profiles(&closure, *y, q, g)?;
            for c in 0..2 {
                worst = worst.max((ue[c] - u[c]).abs()).max((we[c] - w[c]).abs());
            }
        }
        Ok(worst)
    })
}

/// Closed-form profile integrals against Gauss-Legendre quadrature.
pub fn check_vtpm_integrals(coupling: f64, rc: f64) -> OracleReport {
    let name = format!("thin-film integrals vs quadrature (N = {coupling}, Rc = {rc})");
    timed(&name, 1e-8, || {
        let c = VtpmClosure::new(coupling, rc)?;
        let exact = c.closed_form_integrals();
        let quad = c.quadrature_integrals(64);
        let scale = exact.a.abs().max(exact.d.abs());
        Ok([
            (exact.a - quad.a).abs() / exact.a.abs(),
            (exact.b - quad.b).abs() / scale,
            (exact.c - quad.c).abs() / scale,
            if exact.d == 0.0 { quad.d.abs() } else { (exact.d - quad.d).abs() / exact.d.abs() },
        ]
        .into_iter()
        .fold(0.0f64, f64::max))
    })
}

/// Planar coupled solver at `N = 0` against the monolithic Stokes and
/// Helmholtz oracles: `K1` entries (scaled by the largest entry) and the
/// torque-driven microrotation fields.
pub fn check_decoupled_planar(shape: ObstacleShape, n: usize, settings: &SolverSettings) -> OracleReport {
    let name = format!("decoupled planar solver vs Stokes/Helmholtz oracles ({}, n = {n})", shape.name());
    timed(&name, 1e-8, || {
        let mask = build_cell_mask(&CellGeometry::new(shape, n, 0), Dim::Two)?;
        let rc = 0.1;
        let problem = CellProblem::planar(&mask, &RegimeParams::htpm(0.0, rc)?)?;
        let sols = problem.solve_all(settings)?;
        let mut ours = Vec::new();
        let mut theirs = Vec::new();
        for i in 1..=2 {
            let o = stokes_cell_oracle(&mask, i, None)?;
            ours.extend_from_slice(&sols[i - 1].velocity_integral[..2]);
            theirs.extend_from_slice(&o.velocity_integral[..2]);
        }
        let mut worst = scaled_max_diff(&ours, &theirs);
        for sol in &sols[2..] {
            let w = helmholtz_cell_oracle(&mask, sol.i, rc, 0.0, None)?;
            worst = worst.max(scaled_max_diff(&sol.rotation[sol.i - 1], &w));
        }
        Ok(worst)
    })
}

/// Obstacle-free slab against the column oracle, every column and both forcings.
pub fn check_empty_slab(lambda: f64, coupling: f64, rc: f64, n: usize, m: usize, settings: &SolverSettings) -> OracleReport {
    let name = format!("obstacle-free slab vs column oracle (lambda = {lambda}, N = {coupling})");
    timed(&name, 10.0 * settings.tol, || {
        let mask = build_cell_mask(&CellGeometry::new(ObstacleShape::None, n, m), Dim::Three)?;
        let l = Lambda::new(lambda)?;
        let problem = CellProblem::slab(&mask, &RegimeParams::ptpm(lambda, coupling, rc)?)?;
        let mut worst = 0.0f64;
        for (i, k) in crate::cellsolver::INDEX_PAIRS {
            let sol = problem.solve(i, k, settings)?;
            worst = worst.max(column_discrepancy(&sol, &ptpm_column_oracle(l, coupling, rc, m, i, k)?, n, m));
        }
        Ok(worst)
    })
}

/// Largest deviation of a slab solution from a column profile, including the
/// vertical components, which must vanish.
pub fn column_discrepancy(sol: &CellSolution, col: &ColumnProfiles, n: usize, m: usize) -> f64 {
    let nn = n * n;
    let mut worst = 0.0f64;
    for c in 0..2 {
        for k in 0..m {
            for q in 0..nn {
                worst = worst.max((sol.velocity[c][k * nn + q] - col.u[c][k]).abs());
            }
        }
        for k in 0..=m {
            for q in 0..nn {
                worst = worst.max((sol.rotation[c][k * nn + q] - col.w[c][k]).abs());
            }
        }
    }
    let v3 = sol.velocity[2].iter().chain(&sol.rotation[2]);
    v3.fold(worst, |m, v| m.max(v.abs()))
}

/// Quarter-turn symmetry of the planar coupled problem, for both `k`.
pub fn check_planar_rotation(shape: ObstacleShape, n: usize, coupling: f64, rc: f64, settings: &SolverSettings) -> Vec<OracleReport> {
    let start = Instant::now();
    let run = || -> Result<Vec<OracleReport>> {
        let mask = build_cell_mask(&CellGeometry::new(shape, n, 0), Dim::Two)?;
        let problem = CellProblem::planar(&mask, &RegimeParams::htpm(coupling, rc)?)?;
        let sols = problem.solve_all(settings)?;
        Ok(vec![
            rotation_symmetry_check(&shape, &sols[0], &sols[1], 10.0 * settings.tol)?,
            rotation_symmetry_check(&shape, &sols[2], &sols[3], 10.0 * settings.tol)?,
        ])
    };
    run().unwrap_or_else(|e| {
        vec![OracleReport::failed(
            "rotation symmetry",
            10.0 * settings.tol,
            start.elapsed().as_secs_f64(),
            &e,
        )]
    })
}

/// Options of the bundled suite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteOptions {
    /// Planar resolution of the obstacle checks.
    pub n: usize,
    pub settings: SolverSettings,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            n: 32,
            settings: SolverSettings::default(),
        }
    }
}

/// The full suite, in a fixed order.
pub fn run_verification_suite(opts: &SuiteOptions) -> Vec<OracleReport> {
    let s = &opts.settings;
    let disk = ObstacleShape::Disk { radius: 0.25 };
    let mut out = vec![check_phi_series()];
    for coupling in [0.3, 0.6, 0.9] {
        for rc in [0.05, 0.5] {
            out.push(check_vtpm_profiles(coupling, rc, 1001));
            out.push(check_vtpm_integrals(coupling, rc));
        }
    }
    out.push(check_decoupled_planar(disk, opts.n, s));
    out.push(check_empty_slab(1.0, 0.6, 0.1, 4, 32, s));
    out.extend(check_planar_rotation(disk, opts.n, 0.5, 0.1, s));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_pass_flag_follows_tolerance() {
        assert!(OracleReport::new("a", 1e-9, 1e-8, 0.0).pass);
        assert!(!OracleReport::new("b", 2e-8, 1e-8, 0.0).pass);
        assert!(!OracleReport::new("c", f64::NAN, 1e-8, 0.0).pass);
    }

    #[test]
    fn closure_checks_pass() {
        let r = check_phi_series();
        assert!(r.pass, "{r:?}");
        let r = check_vtpm_profiles(0.6, 0.5, 1001);
        assert!(r.pass, "{r:?}");
        let r = check_vtpm_integrals(0.9, 0.05);
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn empty_slab_matches_column() {
        let r = check_empty_slab(1.0, 0.6, 0.1, 4, 16, &SolverSettings::default());
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn ellipse_rotation_is_refused() {
        let mask = build_cell_mask(&CellGeometry::new(ObstacleShape::Disk { radius: 0.2 }, 12, 0), Dim::Two).unwrap();
        let p = CellProblem::planar(&mask, &RegimeParams::htpm(0.3, 0.1).unwrap()).unwrap();
        let s = SolverSettings::default();
        let a = p.solve(1, 1, &s).unwrap();
        let b = p.solve(2, 1, &s).unwrap();
        let ellipse = ObstacleShape::Ellipse { a: 0.2, b: 0.1 };
        assert!(rotation_symmetry_check(&ellipse, &a, &b, 1e-7).is_err());
        let disk = ObstacleShape::Disk { radius: 0.2 };
        let r = rotation_symmetry_check(&disk, &a, &b, 1e-7).unwrap();
        assert!(r.pass, "{r:?}");
    }
}
