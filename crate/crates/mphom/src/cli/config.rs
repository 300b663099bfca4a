//! Flat `section.key = value` run configuration.
//!
//! Lines starting with `#` and blank lines are ignored, as is anything after
//! a `#` on a value line. Every key must be known; missing keys take the
//! defaults listed in [`KEYS`]. The digest is the SHA-256 of the resolved
//! `key = value` listing, so comments, ordering and spelling of numbers do
//! not change it.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::cellsolver::SolverSettings;
use crate::darcy::FieldSpec;
use crate::geometry::{CellGeometry, MacroDomain, ObstacleShape};
use crate::params::{Regime, RegimeKind, RegimeParams};
use crate::{Error, Result};

/// Known keys and their defaults (`None`: required or only needed in some cases).
pub const KEYS: &[(&str, Option<&str>)] = &[
    ("regime.kind", None),
    ("regime.N", None),
    ("regime.Rc", None),
    ("regime.lambda", None),
    ("cell.shape", Some("disk")),
    ("cell.radius", Some("0.25")),
    ("cell.half_side", Some("0.25")),
    ("cell.a", Some("0.3")),
    ("cell.b", Some("0.2")),
    ("cell.n", Some("64")),
    ("cell.m", Some("32")),
    ("cell.error_estimate", Some("true")),
    ("macro.lx", Some("1")),
    ("macro.ly", Some("1")),
    ("macro.nx", Some("64")),
    ("macro.ny", Some("64")),
    ("macro.force", Some("zero")),
    ("macro.force_x", Some("0")),
    ("macro.force_y", Some("0")),
    ("macro.force_amplitude", Some("1")),
    ("macro.force_csv", None),
    ("macro.torque", Some("zero")),
    ("macro.torque_x", Some("0")),
    ("macro.torque_y", Some("0")),
    ("macro.torque_amplitude", Some("1")),
    ("macro.torque_csv", None),
    ("macro.tol", Some("1e-10")),
    ("macro.max_iter", Some("100000")),
    ("solver.tol", Some("1e-8")),
    ("solver.div_tol", Some("1e-8")),
    ("solver.picard_tol", Some("1e-9")),
    ("solver.max_outer", Some("500")),
    ("solver.max_inner", Some("20000")),
    ("output.dir", Some("out")),
    ("sweep.N", None),
    ("sweep.Rc", None),
    ("sweep.lambda", None),
    ("sweep.radius", None),
];

#[derive(Debug, Clone, PartialEq)]
pub struct MacroConfig {
    pub domain: MacroDomain,
    pub force: FieldSpec,
    pub torque: FieldSpec,
    pub tol: f64,
    pub max_iter: usize,
}

/// Lists of parameter values to combine; empty lists fall back to the base value.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepConfig {
    pub couplings: Vec<f64>,
    pub rcs: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub radii: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: RegimeParams,
    pub geometry: CellGeometry,
    pub estimate_error: bool,
    pub macro_: MacroConfig,
    pub settings: SolverSettings,
    pub output_dir: PathBuf,
    pub sweep: SweepConfig,
    /// Resolved `(key, value, defaulted)` in [`KEYS`] order.
    pub resolved: Vec<(String, String, bool)>,
    pub digest: String,
}

struct Table {
    values: BTreeMap<String, String>,
    resolved: Vec<(String, String, bool)>,
}

impl Table {
    fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn get(&mut self, key: &str) -> Result<String> {
        let default = KEYS.iter().find(|(k, _)| *k == key).and_then(|(_, d)| *d);
        let (value, defaulted) = match (self.values.get(key), default) {
            (Some(v), _) => (v.clone(), false),
            (None, Some(d)) => (d.to_string(), true),
            (None, None) => return Err(Error::Config(format!("missing required key '{key}'"))),
        };
        self.resolved.push((key.to_string(), value.clone(), defaulted));
        Ok(value)
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.get(key)?;
        v.parse::<T>()
            .map_err(|e| Error::Config(format!("key '{key}': cannot parse '{v}': {e}")))
    }

    fn list(&mut self, key: &str) -> Result<Vec<f64>> {
        let Some(v) = self.raw(key).map(str::to_string) else {
            return Ok(Vec::new());
        };
        self.resolved.push((key.to_string(), v.clone(), false));
        v.split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("key '{key}': cannot parse '{s}': {e}")))
            })
            .collect()
    }

    fn path(&mut self, key: &str, base: &Path) -> Result<PathBuf> {
        let v = self.get(key)?;
        let p = PathBuf::from(&v);
        let p = if p.is_absolute() { p } else { base.join(p) };
        if !p.is_file() {
            return Err(Error::Config(format!("key '{key}': file {} does not exist", p.display())));
        }
        Ok(p)
    }

    fn field(&mut self, prefix: &str, base: &Path) -> Result<FieldSpec> {
        let kind = self.get(&format!("macro.{prefix}"))?;
        Ok(match kind.as_str() {
            "zero" => FieldSpec::Zero,
            "constant" => FieldSpec::Constant {
                x: self.parse(&format!("macro.{prefix}_x"))?,
                y: self.parse(&format!("macro.{prefix}_y"))?,
            },
            "vortex" => FieldSpec::Vortex {
                amplitude: self.parse(&format!("macro.{prefix}_amplitude"))?,
            },
            "gradient" => FieldSpec::Gradient {
                amplitude: self.parse(&format!("macro.{prefix}_amplitude"))?,
            },
            "csv" => FieldSpec::Csv {
                path: self.path(&format!("macro.{prefix}_csv"), base)?,
            },
            other => {
                return Err(Error::Config(format!(
                    "key 'macro.{prefix}': unknown field '{other}' (zero, constant, vortex, gradient, csv)"
                )))
            }
        })
    }
}

/// Splits the text into a key table, rejecting unknown and repeated keys.
fn tokenize(text: &str) -> Result<BTreeMap<String, String>> {
    let mut values = BTreeMap::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected 'section.key = value'", no + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.iter().any(|(k, _)| *k == key) {
            return Err(Error::Config(format!("line {}: unknown key '{key}'", no + 1)));
        }
        if values.insert(key.to_string(), value.to_string()).is_some() {
            return Err(Error::Config(format!("line {}: key '{key}' given twice", no + 1)));
        }
    }
    Ok(values)
}

/// Parses config text; relative file paths are taken from `base`.
pub fn parse_config_str(text: &str, base: &Path) -> Result<RunConfig> {
    let mut t = Table {
        values: tokenize(text)?,
        resolved: Vec::new(),
    };
    let kind: RegimeKind = t.get("regime.kind")?.parse()?;
    let coupling: f64 = t.parse("regime.N")?;
    let rc: f64 = t.parse("regime.Rc")?;
    let regime = match kind {
        RegimeKind::Ptpm => Regime::Ptpm(crate::params::Lambda::new(t.parse("regime.lambda")?)?),
        RegimeKind::Htpm => Regime::Htpm,
        RegimeKind::Vtpm => Regime::Vtpm,
    };
    if kind != RegimeKind::Ptpm && t.raw("regime.lambda").is_some() {
        return Err(Error::Config(format!("key 'regime.lambda' only applies to ptpm, not {}", kind.as_str())));
    }
    let params = RegimeParams::new(regime, coupling, rc)?;

    let shape = match t.get("cell.shape")?.as_str() {
        "none" => ObstacleShape::None,
        "disk" => ObstacleShape::Disk {
            radius: t.parse("cell.radius")?,
        },
        "square" => ObstacleShape::Square {
            half_side: t.parse("cell.half_side")?,
        },
        "ellipse" => ObstacleShape::Ellipse {
            a: t.parse("cell.a")?,
            b: t.parse("cell.b")?,
        },
        other => {
            return Err(Error::Config(format!(
                "key 'cell.shape': unknown shape '{other}' (none, disk, square, ellipse)"
            )))
        }
    };
    let n: usize = t.parse("cell.n")?;
    let m: usize = if kind == RegimeKind::Ptpm { t.parse("cell.m")? } else { 0 };
    let geometry = CellGeometry::new(shape, n, m);
    let estimate_error: bool = t.parse("cell.error_estimate")?;

    let domain = MacroDomain::new(t.parse("macro.lx")?, t.parse("macro.ly")?, t.parse("macro.nx")?, t.parse("macro.ny")?)?;
    let force = t.field("force", base)?;
    let torque = t.field("torque", base)?;
    let macro_ = MacroConfig {
        domain,
        force,
        torque,
        tol: t.parse("macro.tol")?,
        max_iter: t.parse("macro.max_iter")?,
    };
    let settings = SolverSettings {
        tol: t.parse("solver.tol")?,
        div_tol: t.parse("solver.div_tol")?,
        picard_tol: t.parse("solver.picard_tol")?,
        max_outer: t.parse("solver.max_outer")?,
        max_inner: t.parse("solver.max_inner")?,
    };
    for (name, v) in [("solver.tol", settings.tol), ("solver.div_tol", settings.div_tol), ("solver.picard_tol", settings.picard_tol), ("macro.tol", macro_.tol)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Config(format!("key '{name}' must be positive, got {v}")));
        }
    }
    let output_dir = PathBuf::from(t.get("output.dir")?);
    let sweep = SweepConfig {
        couplings: t.list("sweep.N")?,
        rcs: t.list("sweep.Rc")?,
        lambdas: t.list("sweep.lambda")?,
        radii: t.list("sweep.radius")?,
    };
    for &c in &sweep.couplings {
        crate::params::check_coupling(c)?;
    }
    for &r in &sweep.rcs {
        crate::params::check_rc(r)?;
    }
    for &l in &sweep.lambdas {
        crate::params::Lambda::new(l)?;
    }
    if kind != RegimeKind::Ptpm && !sweep.lambdas.is_empty() {
        return Err(Error::Config("key 'sweep.lambda' only applies to ptpm".into()));
    }
    if !sweep.radii.is_empty() && !matches!(shape, ObstacleShape::Disk { .. }) {
        return Err(Error::Config("key 'sweep.radius' needs cell.shape = disk".into()));
    }

    let mut listing = String::new();
    for (k, v, _) in &t.resolved {
        listing.push_str(&format!("{k} = {}\n", canonical(v)));
    }
    let digest = hex::encode(Sha256::digest(listing.as_bytes()));
    Ok(RunConfig {
        params,
        geometry,
        estimate_error,
        macro_,
        settings,
        output_dir,
        sweep,
        resolved: t.resolved,
        digest,
    })
}

/// Numbers in shortest round-trip form, everything else verbatim.
fn canonical(v: &str) -> String {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    if parts.iter().all(|p| p.parse::<f64>().is_ok()) {
        parts
            .iter()
            .map(|p| format!("{:?}", p.parse::<f64>().unwrap()))
            .collect::<Vec<_>>()
            .join(",")
    } else {
        v.to_string()
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config_str(&text, base)
}

/// One point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub params: RegimeParams,
    pub geometry: CellGeometry,
}

impl RunConfig {
    /// Cartesian product of the sweep lists, `N` outermost and radius innermost.
    pub fn sweep_points(&self) -> Result<Vec<SweepPoint>> {
        let or = |v: &Vec<f64>, base: f64| if v.is_empty() { vec![base] } else { v.clone() };
        let base_radius = match self.geometry.shape {
            ObstacleShape::Disk { radius } => radius,
            _ => 0.0,
        };
        let mut out = Vec::new();
        for &c in &or(&self.sweep.couplings, self.params.coupling) {
            for &rc in &or(&self.sweep.rcs, self.params.rc) {
                for &l in &or(&self.sweep.lambdas, self.params.regime.lambda().unwrap_or(0.0)) {
                    for &r in &or(&self.sweep.radii, base_radius) {
                        let regime = match self.params.regime {
                            Regime::Ptpm(_) => Regime::Ptpm(crate::params::Lambda::new(l)?),
                            other => other,
                        };
                        let shape = match self.geometry.shape {
                            ObstacleShape::Disk { .. } => ObstacleShape::Disk { radius: r },
                            other => other,
                        };
                        out.push(SweepPoint {
                            params: RegimeParams::new(regime, c, rc)?,
                            geometry: CellGeometry::new(shape, self.geometry.n, self.geometry.m),
                        });
                    }
                }
            }
        }
        Ok(out)
    }
}
