//! Flow-factor matrices `K1, K2, L1, L2` from the four cell problems of a
//! regime, their JSON form, and the regime dispatch.
//!
//! `(K^(k))_ij = int_{Y_f} u^{i,k}_j` and `(L^(k))_ij = int_{Y_f} w^{i,k}_j`,
//! so row `i` of each matrix comes from the problem forced along `e_i`.

use std::path::Path;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cellsolver::{CellProblem, CellSolution, SolverSettings, INDEX_PAIRS};
use crate::geometry::{build_cell_mask, CellGeometry, Dim};
use crate::linalg::sym_eigenvalues;
use crate::params::{Regime, RegimeKind, RegimeParams};
use crate::vtpm::{solve_vtpm_cell_darcy, ProfileIntegrals, VtpmCellResult, VtpmClosure};
use crate::{Error, Result};

pub type Mat2 = [[f64; 2]; 2];

pub fn transpose(m: Mat2) -> Mat2 {
    [[m[0][0], m[1][0]], [m[0][1], m[1][1]]]
}

/// Largest absolute entry of `a - b`.
pub fn max_entry_diff(a: Mat2, b: Mat2) -> f64 {
    let mut worst = 0.0f64;
    for r in 0..2 {
        for c in 0..2 {
            worst = worst.max((a[r][c] - b[r][c]).abs());
        }
    }
    worst
}

pub fn max_entry(a: Mat2) -> f64 {
    max_entry_diff(a, [[0.0; 2]; 2])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryDescriptor {
    pub shape: String,
    pub param: Vec<f64>,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
}

/// Worst values over the four solves.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ResidualSummary {
    pub momentum: f64,
    pub angular: f64,
    pub divergence: f64,
    pub pressure_mean: f64,
    /// `|int u3|` and `|int w3|`; zero by construction in the thin-film regime.
    pub u3_integral: f64,
    pub w3_integral: f64,
    /// Outer iterations per solve, in the order `(1,1), (2,1), (1,2), (2,2)`.
    pub iterations: Vec<usize>,
    /// `max |K1 - K1^T|`.
    pub k1_asymmetry: f64,
    /// `max |K2 - L1^T|`.
    pub reciprocity: f64,
    /// Eigenvalues of the symmetric part of `K1`, ascending.
    pub k1_eigenvalues: [f64; 2],
}

/// Entrywise `|M(n) - M(n/2)|`, a first-order estimate of the discretization error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridErrorEstimate {
    #[serde(rename = "K1")]
    pub k1: Mat2,
    #[serde(rename = "K2")]
    pub k2: Mat2,
    #[serde(rename = "L1")]
    pub l1: Mat2,
    #[serde(rename = "L2")]
    pub l2: Mat2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowFactors {
    pub regime: RegimeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(rename = "N")]
    pub coupling: f64,
    #[serde(rename = "Rc")]
    pub rc: f64,
    pub geometry: GeometryDescriptor,
    pub geometry_hash: String,
    #[serde(default)]
    pub config_digest: String,
    pub porosity: f64,
    #[serde(rename = "K1")]
    pub k1: Mat2,
    #[serde(rename = "K2")]
    pub k2: Mat2,
    #[serde(rename = "L1")]
    pub l1: Mat2,
    #[serde(rename = "L2")]
    pub l2: Mat2,
    pub residuals: ResidualSummary,
    #[serde(default)]
    pub grid_error_estimate: Option<GridErrorEstimate>,
}

impl FlowFactors {
    pub fn params(&self) -> Result<RegimeParams> {
        let regime = match self.regime {
            RegimeKind::Ptpm => {
                let l = self
                    .lambda
                    .ok_or_else(|| Error::Consistency("ptpm flow factors without lambda".into()))?;
                Regime::Ptpm(crate::params::Lambda::new(l)?)
            }
            RegimeKind::Htpm => Regime::Htpm,
            RegimeKind::Vtpm => Regime::Vtpm,
        };
        RegimeParams::new(regime, self.coupling, self.rc)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Eigenvalues of the symmetric part of `K1`, ascending.
    pub fn k1_eigenvalues(&self) -> [f64; 2] {
        sym_eigenvalues(self.k1)
    }
}

fn descriptor(geometry: &CellGeometry, dim: Dim) -> GeometryDescriptor {
    GeometryDescriptor {
        shape: geometry.shape.name().into(),
        param: geometry.shape.params(),
        n: geometry.n,
        m: (dim == Dim::Three).then_some(geometry.m),
    }
}

/// Common tail of the assembly: diagnostics and the positive-definiteness check.
fn finish(
    params: &RegimeParams,
    geometry: &CellGeometry,
    dim: Dim,
    porosity: f64,
    mats: [Mat2; 4],
    mut residuals: ResidualSummary,
) -> Result<FlowFactors> {
    let [k1, k2, l1, l2] = mats;
    residuals.k1_asymmetry = max_entry_diff(k1, transpose(k1));
    residuals.reciprocity = max_entry_diff(k2, transpose(l1));
    residuals.k1_eigenvalues = sym_eigenvalues(k1);
    if !(residuals.k1_eigenvalues[0] > 0.0) {
        return Err(Error::Consistency(format!(
            "K1 is not positive definite: eigenvalues of its symmetric part are {:?}",
            residuals.k1_eigenvalues
        )));
    }
    Ok(FlowFactors {
        regime: params.regime.kind(),
        lambda: params.regime.lambda(),
        coupling: params.coupling,
        rc: params.rc,
        geometry: descriptor(geometry, dim),
        geometry_hash: geometry.hash(dim),
        config_digest: String::new(),
        porosity,
        k1,
        k2,
        l1,
        l2,
        residuals,
        grid_error_estimate: None,
    })
}

/// Position of `(i, k)` in [`INDEX_PAIRS`].
fn slot_of(i: usize, k: usize) -> Option<usize> {
    INDEX_PAIRS.iter().position(|&p| p == (i, k))
}

/// Assembles the factors from the four coupled cell solutions of one mask.
pub fn assemble_factors(geometry: &CellGeometry, solutions: &[CellSolution]) -> Result<FlowFactors> {
    let mut ordered: [Option<&CellSolution>; 4] = [None; 4];
    for s in solutions {
        let slot = slot_of(s.i, s.k)
            .ok_or_else(|| Error::Consistency(format!("unexpected index pair ({}, {})", s.i, s.k)))?;
        if ordered[slot].replace(s).is_some() {
            return Err(Error::Consistency(format!("index pair ({}, {}) given twice", s.i, s.k)));
        }
    }
    let sols: Vec<&CellSolution> = ordered
        .iter()
        .map(|o| o.ok_or_else(|| Error::Consistency("four index pairs are required".into())))
        .collect::<Result<_>>()?;
    let first = sols[0];
    for s in &sols[1..] {
        if s.mask_fingerprint != first.mask_fingerprint
            || s.regime != first.regime
            || s.lambda != first.lambda
            || s.coupling != first.coupling
            || s.rc != first.rc
        {
            return Err(Error::Consistency(
                "cell solutions come from different masks or parameters".into(),
            ));
        }
    }
    let dim = if first.layers.is_some() { Dim::Three } else { Dim::Two };
    if geometry.n != first.n || (dim == Dim::Three && Some(geometry.m) != first.layers) {
        return Err(Error::Consistency("geometry resolution differs from the solutions".into()));
    }
    let regime = match (first.regime, first.lambda) {
        (RegimeKind::Ptpm, Some(l)) => Regime::Ptpm(crate::params::Lambda::new(l)?),
        (RegimeKind::Htpm, None) => Regime::Htpm,
        _ => return Err(Error::Consistency("coupled solutions must be ptpm or htpm".into())),
    };
    let params = RegimeParams::new(regime, first.coupling, first.rc)?;

    let mut mats = [[[0.0; 2]; 2]; 4];
    for s in &sols {
        let (kidx, lidx) = if s.k == 1 { (0, 2) } else { (1, 3) };
        for j in 0..2 {
            mats[kidx][s.i - 1][j] = s.velocity_integral[j];
            mats[lidx][s.i - 1][j] = s.rotation_integral[j];
        }
    }
    let mut res = ResidualSummary::default();
    for s in &sols {
        let r = &s.residuals;
        res.momentum = res.momentum.max(r.momentum);
        res.angular = res.angular.max(r.angular);
        res.divergence = res.divergence.max(r.divergence);
        res.pressure_mean = res.pressure_mean.max(r.pressure_mean.abs());
        res.u3_integral = res.u3_integral.max(r.u3_integral.abs());
        res.w3_integral = res.w3_integral.max(r.w3_integral.abs());
        res.iterations.push(s.iterations.outer);
    }
    finish(&params, geometry, dim, first.porosity, mats, res)
}

/// Assembles the thin-film factors from the four scalar cell problems.
pub fn assemble_vtpm_factors(
    geometry: &CellGeometry,
    closure: &VtpmClosure,
    integrals: &ProfileIntegrals,
    porosity: f64,
    results: &[VtpmCellResult],
) -> Result<FlowFactors> {
    let mut k = [[[0.0; 2]; 2]; 2];
    let mut l = [[[0.0; 2]; 2]; 2];
    let mut seen = [false; 4];
    let mut res = ResidualSummary::default();
    for r in results {
        let slot = slot_of(r.i, r.k)
            .ok_or_else(|| Error::Consistency(format!("unexpected index pair ({}, {})", r.i, r.k)))?;
        if std::mem::replace(&mut seen[slot], true) {
            return Err(Error::Consistency(format!("index pair ({}, {}) given twice", r.i, r.k)));
        }
        k[r.k - 1][r.i - 1] = r.k_contribution(integrals);
        l[r.k - 1][r.i - 1] = r.l_contribution(integrals);
        res.divergence = res.divergence.max(r.flux_divergence);
        let mean = r.pressure.iter().sum::<f64>() / r.pressure.len().max(1) as f64;
        res.pressure_mean = res.pressure_mean.max(mean.abs());
        res.iterations.push(r.iterations);
    }
    if seen.contains(&false) {
        return Err(Error::Consistency("four index pairs are required".into()));
    }
    let params = RegimeParams::vtpm(closure.coupling, closure.rc)?;
    finish(&params, geometry, Dim::Two, porosity, [k[0], k[1], l[0], l[1]], res)
}

/// What to compute for one parameter point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorRequest {
    pub params: RegimeParams,
    pub geometry: CellGeometry,
    pub settings: SolverSettings,
    /// Also solve at half resolution and report `|M(n) - M(n/2)|`.
    pub estimate_error: bool,
}

/// Solves the cell problems of the requested regime at the requested resolution.
fn solve_once(params: &RegimeParams, geometry: &CellGeometry, settings: &SolverSettings) -> Result<FlowFactors> {
    match params.regime {
        Regime::Ptpm(_) => {
            let mask = build_cell_mask(geometry, Dim::Three)?;
            let sols = CellProblem::slab(&mask, params)?.solve_all(settings)?;
            assemble_factors(geometry, &sols)
        }
        Regime::Htpm => {
            let mask = build_cell_mask(geometry, Dim::Two)?;
            let sols = CellProblem::planar(&mask, params)?.solve_all(settings)?;
            assemble_factors(geometry, &sols)
        }
        Regime::Vtpm => {
            let mask = build_cell_mask(geometry, Dim::Two)?;
            let closure = VtpmClosure::new(params.coupling, params.rc)?;
            let results = INDEX_PAIRS
                .par_iter()
                .map(|&(i, k)| solve_vtpm_cell_darcy(&mask, &closure, i, k, settings.tol, settings.max_inner))
                .collect::<Vec<_>>()
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
            assemble_vtpm_factors(
                geometry,
                &closure,
                &closure.closed_form_integrals(),
                mask.porosity(),
                &results,
            )
        }
    }
}

/// Routes to the regime's pipeline: the 3D slab problem for PTPM, the planar
/// coupled problem for HTPM, and the closure plus scalar problem for VTPM
/// (no 3D solve; `geometry.m` is ignored).
pub fn compute_flow_factors(req: &FactorRequest) -> Result<FlowFactors> {
    info!(
        "flow factors: regime {} N = {} Rc = {} shape {} n = {}",
        req.params.regime.kind().as_str(),
        req.params.coupling,
        req.params.rc,
        req.geometry.shape.name(),
        req.geometry.n
    );
    let mut factors = solve_once(&req.params, &req.geometry, &req.settings)?;
    if req.estimate_error {
        let coarse = CellGeometry::new(req.geometry.shape, req.geometry.n / 2, (req.geometry.m / 2).max(2));
        match solve_once(&req.params, &coarse, &req.settings) {
            Ok(c) => {
                let diff = |a: Mat2, b: Mat2| {
                    let mut d = [[0.0; 2]; 2];
                    for r in 0..2 {
                        for s in 0..2 {
                            d[r][s] = (a[r][s] - b[r][s]).abs();
                        }
                    }
                    d
                };
                factors.grid_error_estimate = Some(GridErrorEstimate {
                    k1: diff(factors.k1, c.k1),
                    k2: diff(factors.k2, c.k2),
                    l1: diff(factors.l1, c.l1),
                    l2: diff(factors.l2, c.l2),
                });
            }
            Err(e) => warn!("no grid error estimate: half-resolution solve failed: {e}"),
        }
    }
    Ok(factors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ObstacleShape;
    use crate::vtpm::{phi, psi};

    fn request(params: RegimeParams, shape: ObstacleShape, n: usize, m: usize) -> FactorRequest {
        FactorRequest {
            params,
            geometry: CellGeometry::new(shape, n, m),
            settings: SolverSettings::default(),
            estimate_error: false,
        }
    }

    #[test]
    fn vtpm_open_cell_matches_closure() {
        for (n_, rc) in [(0.3, 0.1), (0.8, 0.02)] {
            let f = compute_flow_factors(&request(RegimeParams::vtpm(n_, rc).unwrap(), ObstacleShape::None, 8, 0)).unwrap();
            let k = phi(n_, rc).unwrap() / (1.0 - n_ * n_);
            let l = -psi(n_, rc).unwrap() / (4.0 * n_ * n_ * n_) * (rc / (1.0 - n_ * n_)).sqrt();
            for r in 0..2 {
                for c in 0..2 {
                    let id = if r == c { 1.0 } else { 0.0 };
                    assert!((f.k1[r][c] - k * id).abs() < 1e-14);
                    assert!((f.l2[r][c] - l * id).abs() < 1e-12 * l.abs());
                    assert_eq!(f.k2[r][c], 0.0);
                    assert_eq!(f.l1[r][c], 0.0);
                }
            }
        }
    }

    #[test]
    fn vtpm_ignores_vertical_resolution() {
        let p = RegimeParams::vtpm(0.5, 0.1).unwrap();
        let a = compute_flow_factors(&request(p, ObstacleShape::Disk { radius: 0.25 }, 16, 2)).unwrap();
        let b = compute_flow_factors(&request(p, ObstacleShape::Disk { radius: 0.25 }, 16, 4096)).unwrap();
        assert_eq!(a, b);
        assert!(a.geometry.m.is_none());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let p = RegimeParams::htpm(0.4, 0.2).unwrap();
        let mut req = request(p, ObstacleShape::Disk { radius: 0.2 }, 16, 0);
        req.estimate_error = true;
        let f = compute_flow_factors(&req).unwrap();
        assert!(f.grid_error_estimate.is_some());
        let back = FlowFactors::from_json(&f.to_json().unwrap()).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.k1.map(|r| r.map(f64::to_bits)), f.k1.map(|r| r.map(f64::to_bits)));
        assert_eq!(back.params().unwrap(), p);
    }

    #[test]
    fn json_uses_the_documented_keys() {
        let f = compute_flow_factors(&request(RegimeParams::vtpm(0.5, 0.1).unwrap(), ObstacleShape::None, 4, 0)).unwrap();
        let v: serde_json::Value = serde_json::from_str(&f.to_json().unwrap()).unwrap();
        for key in ["regime", "N", "Rc", "geometry", "porosity", "K1", "K2", "L1", "L2", "residuals", "grid_error_estimate"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert!(v.get("lambda").is_none());
        assert_eq!(v["regime"], "vtpm");
    }

    #[test]
    fn mixed_inputs_are_rejected() {
        let geom = CellGeometry::new(ObstacleShape::Disk { radius: 0.2 }, 12, 0);
        let mask = build_cell_mask(&geom, Dim::Two).unwrap();
        let s = SolverSettings::default();
        let a = CellProblem::planar(&mask, &RegimeParams::htpm(0.3, 0.1).unwrap()).unwrap().solve_all(&s).unwrap();
        let b = CellProblem::planar(&mask, &RegimeParams::htpm(0.4, 0.1).unwrap()).unwrap().solve_all(&s).unwrap();
        assert!(assemble_factors(&geom, &a).is_ok());
        let mixed = vec![a[0].clone(), a[1].clone(), a[2].clone(), b[3].clone()];
        assert!(matches!(assemble_factors(&geom, &mixed), Err(Error::Consistency(_))));
        assert!(matches!(assemble_factors(&geom, &a[..3]), Err(Error::Consistency(_))));
        let twice = vec![a[0].clone(), a[0].clone(), a[2].clone(), a[3].clone()];
        assert!(assemble_factors(&geom, &twice).is_err());
    }

    #[test]
    fn decoupled_factors_have_no_cross_response() {
        let f = compute_flow_factors(&request(RegimeParams::htpm(0.0, 0.1).unwrap(), ObstacleShape::Disk { radius: 0.25 }, 16, 0)).unwrap();
        assert_eq!(max_entry(f.k2), 0.0);
        assert_eq!(max_entry(f.l1), 0.0);
        assert!(f.k1_eigenvalues()[0] > 0.0);
        assert!(f.l2[0][0] > 0.0);
    }
}
