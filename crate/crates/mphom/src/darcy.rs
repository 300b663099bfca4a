//! Macroscopic 2D Darcy problem
//!
//! ```text
//! div(K1 (f - grad P) + K2 g) = 0   in (0, lx) x (0, ly)
//! (K1 (f - grad P) + K2 g) . n = 0  on the boundary
//! ```
//!
//! on a cell-centred grid with conservative face fluxes, followed by the
//! reconstruction `U = K1 (f - grad P) + K2 g`, `W = L1 (f - grad P) + L2 g`.
//!
//! Face fluxes: the diagonal of `K1` acts on the two-point difference across
//! the face, the off-diagonal on the average of the corner gradients at the
//! face ends (interior corners only). Both pieces come from one symmetric
//! bilinear form, so the pressure operator is symmetric and CG applies.
//! Boundary faces carry no flux. Data at faces is the mean of the two cells.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::factors::{FlowFactors, Mat2};
use crate::geometry::MacroDomain;
use crate::linalg::{conjugate_gradient, sym_eigenvalues};
use crate::{Error, Result};

pub type Vec2 = [f64; 2];

fn mat_vec(m: &Mat2, v: Vec2) -> Vec2 {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

/// Body force or torque data on the macro grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FieldSpec {
    Zero,
    Constant { x: f64, y: f64 },
    /// Rigid rotation about the domain centre, `amplitude * (-(y - yc), x - xc)`.
    Vortex { amplitude: f64 },
    /// `amplitude * grad(cos(pi x/lx) cos(pi y/ly))`.
    Gradient { amplitude: f64 },
    /// CSV with header `x,y,vx,vy`, resampled to the nearest data point.
    Csv { path: PathBuf },
}

impl FieldSpec {
    /// Samples the field at the cell centres.
    pub fn sample(&self, domain: &MacroDomain) -> Result<Vec<Vec2>> {
        let (lx, ly) = (domain.lx, domain.ly);
        let mut out = Vec::with_capacity(domain.cell_count());
        let points = match self {
            FieldSpec::Csv { path } => Some(read_vector_csv(path)?),
            _ => None,
        };
        for b in 0..domain.ny {
            for a in 0..domain.nx {
                let (x, y) = domain.centre(a, b);
                out.push(match self {
                    FieldSpec::Zero => [0.0, 0.0],
                    FieldSpec::Constant { x, y } => [*x, *y],
                    FieldSpec::Vortex { amplitude } => [-amplitude * (y - 0.5 * ly), amplitude * (x - 0.5 * lx)],
                    FieldSpec::Gradient { amplitude } => manufactured_gradient(x, y, lx, ly).map(|v| amplitude * v),
                    FieldSpec::Csv { .. } => nearest(points.as_deref().unwrap_or(&[]), x, y),
                });
            }
        }
        Ok(out)
    }
}

/// `cos(pi x/lx) cos(pi y/ly)`: zero normal derivative on the boundary, zero mean.
pub fn manufactured_pressure(x: f64, y: f64, lx: f64, ly: f64) -> f64 {
    let pi = std::f64::consts::PI;
    (pi * x / lx).cos() * (pi * y / ly).cos()
}

pub fn manufactured_gradient(x: f64, y: f64, lx: f64, ly: f64) -> Vec2 {
    let pi = std::f64::consts::PI;
    [
        -pi / lx * (pi * x / lx).sin() * (pi * y / ly).cos(),
        -pi / ly * (pi * x / lx).cos() * (pi * y / ly).sin(),
    ]
}

fn nearest(points: &[(f64, f64, Vec2)], x: f64, y: f64) -> Vec2 {
    let mut best = (f64::INFINITY, [0.0, 0.0]);
    for &(px, py, v) in points {
        let d = (px - x).powi(2) + (py - y).powi(2);
        if d < best.0 {
            best = (d, v);
        }
    }
    best.1
}

/// Reads `x,y,vx,vy` rows.
pub fn read_vector_csv(path: &Path) -> Result<Vec<(f64, f64, Vec2)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config(format!("{} row {}: {e}", path.display(), line + 1)))?;
        if vals.len() != 4 {
            return Err(Error::Config(format!(
                "{} row {}: expected 4 columns x,y,vx,vy, got {}",
                path.display(),
                line + 1,
                vals.len()
            )));
        }
        out.push((vals[0], vals[1], [vals[2], vals[3]]));
    }
    if out.is_empty() {
        return Err(Error::Config(format!("{} has no data rows", path.display())));
    }
    Ok(out)
}

/// Data of one macroscopic solve.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroProblem {
    pub domain: MacroDomain,
    /// Body force `f'` at cell centres, index `b * nx + a`.
    pub force: Vec<Vec2>,
    /// Body torque `g'` at cell centres.
    pub torque: Vec<Vec2>,
    pub factors: FlowFactors,
}

impl MacroProblem {
    pub fn new(domain: MacroDomain, force: Vec<Vec2>, torque: Vec<Vec2>, factors: FlowFactors) -> Result<Self> {
        let cells = domain.cell_count();
        if force.len() != cells || torque.len() != cells {
            return Err(Error::Parameter(format!(
                "field sizes {} and {} do not match the {} x {} grid",
                force.len(),
                torque.len(),
                domain.nx,
                domain.ny
            )));
        }
        if domain.nx < 3 || domain.ny < 3 {
            return Err(Error::Geometry("the macro grid needs at least 3 cells per side".into()));
        }
        let ev = sym_eigenvalues(factors.k1);
        if !(ev[0] > 0.0) {
            return Err(Error::Parameter(format!(
                "K1 must be positive definite, eigenvalues of its symmetric part are {ev:?}"
            )));
        }
        Ok(MacroProblem {
            domain,
            force,
            torque,
            factors,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacroSolution {
    pub domain: MacroDomain,
    /// Zero-mean pressure at cell centres.
    pub pressure: Vec<f64>,
    pub velocity: Vec<Vec2>,
    pub rotation: Vec<Vec2>,
    /// Largest `|div flux|` over cells.
    pub flux_divergence: f64,
    /// Largest flux a boundary cell would have to pass through its boundary
    /// faces to balance, per unit boundary length.
    pub boundary_flux_residual: f64,
    /// Sum over all cells of the integrated flux divergence.
    pub total_flux_divergence: f64,
    pub iterations: usize,
}

/// Flux discretization of one problem.
struct FluxGrid {
    nx: usize,
    ny: usize,
    dx: f64,
    dy: f64,
    /// Symmetric part of `K1`.
    k: Mat2,
}

impl FluxGrid {
    fn at(&self, a: usize, b: usize) -> usize {
        b * self.nx + a
    }

    /// Integrated outflow per cell of the flux `-K grad p`.
    fn pressure_outflow(&self, p: &[f64], out: &mut [f64]) {
        let (nx, ny, dx, dy) = (self.nx, self.ny, self.dx, self.dy);
        let k = &self.k;
        out.fill(0.0);
        // corner gradients at interior corners (a + 1/2, b + 1/2)
        let mut cx = vec![0.0; (nx - 1) * (ny - 1)];
        let mut cy = vec![0.0; (nx - 1) * (ny - 1)];
        if k[0][1] != 0.0 {
            for b in 0..ny - 1 {
                for a in 0..nx - 1 {
                    let (p00, p10, p01, p11) = (p[self.at(a, b)], p[self.at(a + 1, b)], p[self.at(a, b + 1)], p[self.at(a + 1, b + 1)]);
                    cx[b * (nx - 1) + a] = (p10 + p11 - p00 - p01) / (2.0 * dx);
                    cy[b * (nx - 1) + a] = (p01 + p11 - p00 - p10) / (2.0 * dy);
                }
            }
        }
        let corner = |v: &[f64], a: usize, b: isize| -> f64 {
            if b < 0 || b as usize >= ny - 1 {
                0.0
            } else {
                v[b as usize * (nx - 1) + a]
            }
        };
        for b in 0..ny {
            for a in 0..nx - 1 {
                let grad_x = (p[self.at(a + 1, b)] - p[self.at(a, b)]) / dx;
                let grad_y = 0.5 * (corner(&cy, a, b as isize - 1) + corner(&cy, a, b as isize));
                let flux = -(k[0][0] * grad_x + k[0][1] * grad_y) * dy;
                out[self.at(a, b)] += flux;
                out[self.at(a + 1, b)] -= flux;
            }
        }
        for b in 0..ny - 1 {
            for a in 0..nx {
                let grad_y = (p[self.at(a, b + 1)] - p[self.at(a, b)]) / dy;
                // corner index along x for the y-face (a, b + 1/2): corners (a -+ 1/2, b + 1/2)
                let left = if a == 0 { 0.0 } else { cx[b * (nx - 1) + a - 1] };
                let right = if a + 1 == nx { 0.0 } else { cx[b * (nx - 1) + a] };
                let grad_x = 0.5 * (left + right);
                let flux = -(k[1][0] * grad_x + k[1][1] * grad_y) * dx;
                out[self.at(a, b)] += flux;
                out[self.at(a, b + 1)] -= flux;
            }
        }
    }

    /// Integrated outflow per cell of a cell-centred vector field averaged to faces.
    fn data_outflow(&self, h: &[Vec2]) -> Vec<f64> {
        let mut out = vec![0.0; h.len()];
        for b in 0..self.ny {
            for a in 0..self.nx - 1 {
                let flux = 0.5 * (h[self.at(a, b)][0] + h[self.at(a + 1, b)][0]) * self.dy;
                out[self.at(a, b)] += flux;
                out[self.at(a + 1, b)] -= flux;
            }
        }
        for b in 0..self.ny - 1 {
            for a in 0..self.nx {
                let flux = 0.5 * (h[self.at(a, b)][1] + h[self.at(a, b + 1)][1]) * self.dx;
                out[self.at(a, b)] += flux;
                out[self.at(a, b + 1)] -= flux;
            }
        }
        out
    }
}

fn project_mean(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    for x in v.iter_mut() {
        *x -= mean;
    }
}

/// Solves for the zero-mean pressure. CG stops at `||r|| <= tol ||b||`.
pub fn solve_darcy(problem: &MacroProblem, tol: f64, max_iter: usize) -> Result<MacroSolution> {
    let d = &problem.domain;
    let f = &problem.factors;
    let ks = {
        let off = 0.5 * (f.k1[0][1] + f.k1[1][0]);
        [[f.k1[0][0], off], [off, f.k1[1][1]]]
    };
    let grid = FluxGrid {
        nx: d.nx,
        ny: d.ny,
        dx: d.dx(),
        dy: d.dy(),
        k: ks,
    };
    // driving data h = K1 f + K2 g at the centres
    let h: Vec<Vec2> = problem
        .force
        .iter()
        .zip(&problem.torque)
        .map(|(fv, gv)| {
            let a = mat_vec(&f.k1, *fv);
            let b = mat_vec(&f.k2, *gv);
            [a[0] + b[0], a[1] + b[1]]
        })
        .collect();
    // outflow(-K1 grad P) = -outflow(h); the left side is positive semidefinite
    let mut rhs: Vec<f64> = grid.data_outflow(&h).iter().map(|v| -v).collect();
    project_mean(&mut rhs);
    let bnorm = crate::linalg::norm(&rhs);
    let mut pressure = vec![0.0; d.cell_count()];
    let outcome = conjugate_gradient(
        |p: &[f64], out: &mut [f64]| {
            grid.pressure_outflow(p, out);
        },
        project_mean,
        &rhs,
        &mut pressure,
        tol * bnorm,
        max_iter,
    );
    if !outcome.converged {
        return Err(Error::NonConvergence {
            solver: "darcy pressure".into(),
            iterations: outcome.iterations,
            residual: outcome.residual / bnorm.max(f64::MIN_POSITIVE),
            target: tol,
        });
    }

    // audit with the full flux
    let mut div = grid.data_outflow(&h);
    let mut pout = vec![0.0; d.cell_count()];
    grid.pressure_outflow(&pressure, &mut pout);
    for (v, p) in div.iter_mut().zip(&pout) {
        *v += p;
    }
    let area = grid.dx * grid.dy;
    let flux_divergence = div.iter().fold(0.0f64, |m, v| m.max(v.abs() / area));
    let total_flux_divergence = div.iter().sum::<f64>();
    let mut boundary_flux_residual = 0.0f64;
    for b in 0..d.ny {
        for a in 0..d.nx {
            let mut len = 0.0;
            if a == 0 || a + 1 == d.nx {
                len += grid.dy;
            }
            if b == 0 || b + 1 == d.ny {
                len += grid.dx;
            }
            if len > 0.0 {
                boundary_flux_residual = boundary_flux_residual.max(div[grid.at(a, b)].abs() / len);
            }
        }
    }
    let (velocity, rotation) = reconstruct_fields(&pressure, problem);
    Ok(MacroSolution {
        domain: *d,
        pressure,
        velocity,
        rotation,
        flux_divergence,
        boundary_flux_residual,
        total_flux_divergence,
        iterations: outcome.iterations,
    })
}

/// Cell-centred pressure gradient: central differences inside, second-order
/// one-sided differences on the boundary rows and columns.
pub fn pressure_gradient(p: &[f64], domain: &MacroDomain) -> Vec<Vec2> {
    let (nx, ny) = (domain.nx, domain.ny);
    let at = |a: usize, b: usize| p[b * nx + a];
    let d1 = |get: &dyn Fn(usize) -> f64, i: usize, n: usize, h: f64| -> f64 {
        if i == 0 {
            (-3.0 * get(0) + 4.0 * get(1) - get(2)) / (2.0 * h)
        } else if i + 1 == n {
            (3.0 * get(n - 1) - 4.0 * get(n - 2) + get(n - 3)) / (2.0 * h)
        } else {
            (get(i + 1) - get(i - 1)) / (2.0 * h)
        }
    };
    let mut out = Vec::with_capacity(nx * ny);
    for b in 0..ny {
        for a in 0..nx {
            let gx = d1(&|i| at(i, b), a, nx, domain.dx());
            let gy = d1(&|j| at(a, j), b, ny, domain.dy());
            out.push([gx, gy]);
        }
    }
    out
}

/// `U = K1 (f - grad P) + K2 g` and `W = L1 (f - grad P) + L2 g` at the centres.
pub fn reconstruct_fields(pressure: &[f64], problem: &MacroProblem) -> (Vec<Vec2>, Vec<Vec2>) {
    let f = &problem.factors;
    let grad = pressure_gradient(pressure, &problem.domain);
    let mut u = Vec::with_capacity(grad.len());
    let mut w = Vec::with_capacity(grad.len());
    for ((gp, fv), gv) in grad.iter().zip(&problem.force).zip(&problem.torque) {
        let drive = [fv[0] - gp[0], fv[1] - gp[1]];
        let (a, b) = (mat_vec(&f.k1, drive), mat_vec(&f.k2, *gv));
        let (c, e) = (mat_vec(&f.l1, drive), mat_vec(&f.l2, *gv));
        u.push([a[0] + b[0], a[1] + b[1]]);
        w.push([c[0] + e[0], c[1] + e[1]]);
    }
    (u, w)
}

/// One row of the field CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldRow {
    pub x: f64,
    pub y: f64,
    #[serde(rename = "P")]
    pub p: f64,
    #[serde(rename = "Ux")]
    pub ux: f64,
    #[serde(rename = "Uy")]
    pub uy: f64,
    #[serde(rename = "Wx")]
    pub wx: f64,
    #[serde(rename = "Wy")]
    pub wy: f64,
}

impl MacroSolution {
    pub fn rows(&self) -> Vec<FieldRow> {
        let d = &self.domain;
        let mut out = Vec::with_capacity(d.cell_count());
        for b in 0..d.ny {
            for a in 0..d.nx {
                let c = b * d.nx + a;
                let (x, y) = d.centre(a, b);
                out.push(FieldRow {
                    x,
                    y,
                    p: self.pressure[c],
                    ux: self.velocity[c][0],
                    uy: self.velocity[c][1],
                    wx: self.rotation[c][0],
                    wy: self.rotation[c][1],
                });
            }
        }
        out
    }
}

/// Writes the field CSV: one `#` comment line with `header`, then `x,y,P,Ux,Uy,Wx,Wy`.
pub fn write_field_csv(path: &Path, header: &str, rows: &[FieldRow]) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(format!("# {header}\n").as_bytes());
    {
        let mut wtr = csv::Writer::from_writer(&mut buf);
        for r in rows {
            wtr.serialize(r)
                .map_err(|e| Error::Config(format!("csv encoding failed: {e}")))?;
        }
        wtr.flush().map_err(|e| Error::io(path, e))?;
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_field_csv(path: &Path) -> Result<Vec<FieldRow>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    rdr.deserialize()
        .map(|r| r.map_err(|e| Error::Config(format!("{}: {e}", path.display()))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factors::{GeometryDescriptor, ResidualSummary};
    use crate::params::RegimeKind;

    pub(crate) fn factors(k1: Mat2, k2: Mat2, l1: Mat2, l2: Mat2) -> FlowFactors {
        FlowFactors {
            regime: RegimeKind::Htpm,
            lambda: None,
            coupling: 0.5,
            rc: 0.1,
            geometry: GeometryDescriptor {
                shape: "disk".into(),
                param: vec![0.25],
                n: 32,
                m: None,
            },
            geometry_hash: String::new(),
            config_digest: String::new(),
            porosity: 0.8,
            k1,
            k2,
            l1,
            l2,
            residuals: ResidualSummary::default(),
            grid_error_estimate: None,
        }
    }

    const I: Mat2 = [[1.0, 0.0], [0.0, 1.0]];
    const Z: Mat2 = [[0.0; 2]; 2];

    fn problem(nx: usize, ny: usize, f: FieldSpec, g: FieldSpec, ff: FlowFactors) -> MacroProblem {
        let d = MacroDomain::new(2.0, 1.0, nx, ny).unwrap();
        MacroProblem::new(d, f.sample(&d).unwrap(), g.sample(&d).unwrap(), ff).unwrap()
    }

    #[test]
    fn zero_data_gives_zero_fields() {
        let p = problem(8, 6, FieldSpec::Zero, FieldSpec::Zero, factors(I, I, I, I));
        let s = solve_darcy(&p, 1e-12, 1000).unwrap();
        assert!(s.pressure.iter().all(|&v| v == 0.0));
        assert!(s.velocity.iter().chain(&s.rotation).all(|v| v[0] == 0.0 && v[1] == 0.0));
    }

    #[test]
    fn constant_force_is_balanced_by_the_walls() {
        let k = [[0.03, 0.0], [0.0, 0.02]];
        let p = problem(16, 12, FieldSpec::Constant { x: 1.0, y: 0.0 }, FieldSpec::Zero, factors(k, Z, Z, Z));
        let s = solve_darcy(&p, 1e-12, 5000).unwrap();
        assert!(s.boundary_flux_residual <= 1e-8, "{}", s.boundary_flux_residual);
        assert!(s.total_flux_divergence.abs() < 1e-14);
        // the compatible solution is P = x - lx/2 and no flow
        for row in s.rows() {
            assert!((row.p - (row.x - 1.0)).abs() < 1e-8);
            assert!(row.ux.abs() < 1e-8 && row.uy.abs() < 1e-8);
        }
    }

    #[test]
    fn gauge_invariance_of_the_data() {
        // a uniform torque with K2 = I is the same as a uniform force with K1 = I
        let p = problem(10, 10, FieldSpec::Vortex { amplitude: 1.0 }, FieldSpec::Constant { x: 0.3, y: -0.2 }, factors(I, I, Z, Z));
        let s = solve_darcy(&p, 1e-12, 5000).unwrap();
        let mean = s.pressure.iter().sum::<f64>() / s.pressure.len() as f64;
        assert!(mean.abs() < 1e-14);
        assert!(s.boundary_flux_residual <= 1e-8);
    }

    #[test]
    fn cancellation_leaves_the_torque_part() {
        let d = MacroDomain::new(1.0, 1.0, 12, 12).unwrap();
        let k2 = [[0.1, 0.2], [-0.3, 0.4]];
        let ff = factors(I, k2, Z, I);
        let g = FieldSpec::Constant { x: 1.0, y: 2.0 }.sample(&d).unwrap();
        let p: Vec<f64> = (0..144).map(|c| (c % 12) as f64 * 0.1 + (c / 12) as f64 * 0.05).collect();
        let f = pressure_gradient(&p, &d);
        let prob = MacroProblem::new(d, f, g, ff).unwrap();
        let (u, w) = reconstruct_fields(&p, &prob);
        for (uv, wv) in u.iter().zip(&w) {
            assert!((uv[0] - 0.5).abs() < 1e-12 && (uv[1] - 0.5).abs() < 1e-12);
            assert!((wv[0] - 1.0).abs() < 1e-12 && (wv[1] - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn one_sided_gradients_are_exact_for_quadratics() {
        let d = MacroDomain::new(1.0, 2.0, 5, 7).unwrap();
        let mut p = Vec::new();
        for b in 0..7 {
            for a in 0..5 {
                let (x, y) = d.centre(a, b);
                p.push(x * x - 3.0 * x * y + y * y);
            }
        }
        let g = pressure_gradient(&p, &d);
        for b in 0..7 {
            for a in 0..5 {
                let (x, y) = d.centre(a, b);
                let gv = g[b * 5 + a];
                assert!((gv[0] - (2.0 * x - 3.0 * y)).abs() < 1e-12);
                assert!((gv[1] - (-3.0 * x + 2.0 * y)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn indefinite_k1_is_rejected() {
        let d = MacroDomain::new(1.0, 1.0, 4, 4).unwrap();
        let bad = factors([[1.0, 0.0], [0.0, -1.0]], Z, Z, Z);
        assert!(matches!(
            MacroProblem::new(d, vec![[0.0; 2]; 16], vec![[0.0; 2]; 16], bad),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn field_csv_round_trip_is_lossless() {
        let p = problem(6, 5, FieldSpec::Gradient { amplitude: 0.7 }, FieldSpec::Vortex { amplitude: 0.1 }, factors(I, I, I, I));
        let s = solve_darcy(&p, 1e-12, 1000).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fields.csv");
        write_field_csv(&path, "regime=htpm", &s.rows()).unwrap();
        assert_eq!(read_field_csv(&path).unwrap(), s.rows());
    }

    #[test]
    fn csv_input_uses_the_nearest_point() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        std::fs::write(&path, "x,y,vx,vy\n0.0,0.0,1,2\n1.0,1.0,3,4\n").unwrap();
        let d = MacroDomain::new(1.0, 1.0, 4, 4).unwrap();
        let v = FieldSpec::Csv { path }.sample(&d).unwrap();
        assert_eq!(v[0], [1.0, 2.0]);
        assert_eq!(v[15], [3.0, 4.0]);
    }
}
