//! Command-line driver: `cell`, `closure`, `darcy`, `sweep`, `verify`.
//!
//! Exit codes: 0 success, 2 configuration or parameter error, 3 solver
//! non-convergence, 4 verification failure, 1 anything else. Errors are
//! written to stderr as one JSON object. Output files carry no timings, so a
//! repeated run with the same config reproduces them byte for byte.

pub mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use log::info;
use rayon::prelude::*;
use serde::Serialize;

pub use config::{parse_config, parse_config_str, RunConfig, SweepPoint};

use crate::darcy::{solve_darcy, write_field_csv, MacroProblem};
use crate::factors::{compute_flow_factors, FactorRequest, FlowFactors};
use crate::oracles::{run_verification_suite, OracleReport, SuiteOptions};
use crate::vtpm::{closure_x, phi, psi};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "mphom", version, about = "Flow factors and macroscopic Darcy solves for micropolar porous media")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct Common {
    /// Run configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the cell problems and write the flow factors as JSON.
    Cell {
        #[command(flatten)]
        common: Common,
    },
    /// Tabulate the closure functions over N (and Rc).
    Closure {
        #[command(flatten)]
        common: Common,
    },
    /// Solve the macroscopic Darcy problem.
    Darcy {
        #[command(flatten)]
        common: Common,
        /// Flow factors from an earlier `cell` run; computed in-process otherwise.
        #[arg(long)]
        factors: Option<PathBuf>,
    },
    /// Run the cell problem over the product of the sweep lists.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Print the planned runs and exit.
        #[arg(long)]
        dry_run: bool,
    },
    /// Run the oracle suite and print the reports as JSON.
    Verify {
        /// Optional config supplying `cell.n` and the solver settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
pub enum Failure {
    Error(Error),
    Verification(usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Error(Error::Config(_) | Error::Parameter(_) | Error::Geometry(_)) => 2,
            Failure::Error(Error::NonConvergence { .. }) => 3,
            Failure::Error(_) => 1,
            Failure::Verification(_) => 4,
        }
    }

    pub fn to_json(&self) -> String {
        let (kind, message) = match self {
            Failure::Error(e) => (e.kind(), e.to_string()),
            Failure::Verification(n) => ("verification", format!("{n} oracle check(s) failed")),
        };
        serde_json::json!({ "error": kind, "message": message, "exit_code": self.exit_code() }).to_string()
    }
}

/// Worker threads the command wants (sweeps honour `--jobs`, everything else runs on one).
pub fn thread_count(cmd: &Command) -> usize {
    match cmd {
        Command::Sweep { jobs, .. } => (*jobs).max(1),
        _ => 1,
    }
}

fn out_dir(cfg: &RunConfig, out: &Option<PathBuf>) -> Result<PathBuf> {
    let dir = out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn echo_config(cfg: &RunConfig) {
    for (k, v, defaulted) in &cfg.resolved {
        if *defaulted {
            info!("config {k} = {v} (default)");
        } else {
            info!("config {k} = {v}");
        }
    }
    info!("config digest {}", cfg.digest);
}

fn request(cfg: &RunConfig) -> FactorRequest {
    FactorRequest {
        params: cfg.params,
        geometry: cfg.geometry,
        settings: cfg.settings,
        estimate_error: cfg.estimate_error,
    }
}

fn factors_for(req: &FactorRequest, digest: &str) -> Result<FlowFactors> {
    let mut f = compute_flow_factors(req)?;
    f.config_digest = digest.to_string();
    Ok(f)
}

/// Runs one command; stdout receives short human-readable notes.
pub fn run(cli: &Cli, stdout: &mut dyn Write) -> std::result::Result<(), Failure> {
    let start = Instant::now();
    let outcome = match &cli.command {
        Command::Cell { common } => cmd_cell(common, stdout),
        Command::Closure { common } => cmd_closure(common, stdout),
        Command::Darcy { common, factors } => cmd_darcy(common, factors.as_deref(), stdout),
        Command::Sweep { common, jobs, dry_run } => cmd_sweep(common, *jobs, *dry_run, stdout),
        Command::Verify { config, out } => cmd_verify(config.as_deref(), out.as_deref(), stdout),
    };
    info!("finished in {:.3} s", start.elapsed().as_secs_f64());
    outcome
}

fn note(stdout: &mut dyn Write, msg: String) -> Result<()> {
    writeln!(stdout, "{msg}").map_err(|e| Error::io("<stdout>", e))
}

fn cmd_cell(common: &Common, stdout: &mut dyn Write) -> std::result::Result<(), Failure> {
    let cfg = parse_config(&common.config)?;
    echo_config(&cfg);
    let dir = out_dir(&cfg, &common.out)?;
    let factors = factors_for(&request(&cfg), &cfg.digest)?;
    let path = dir.join("factors.json");
    factors.write(&path)?;
    note(stdout, format!("wrote {}", path.display()))?;
    Ok(())
}

#[derive(Serialize)]
struct ClosureRow {
    #[serde(rename = "N")]
    coupling: f64,
    #[serde(rename = "Rc")]
    rc: f64,
    x: f64,
    #[serde(rename = "Phi")]
    phi: f64,
    #[serde(rename = "Psi")]
    psi: f64,
    /// Factor multiplying the open-cell Darcy permeability: `12 Phi / (1 - N^2)`.
    k_ratio: f64,
}

fn cmd_closure(common: &Common, stdout: &mut dyn Write) -> std::result::Result<(), Failure> {
    let cfg = parse_config(&common.config)?;
    echo_config(&cfg);
    let dir = out_dir(&cfg, &common.out)?;
    let couplings = if cfg.sweep.couplings.is_empty() {
        (0..20).map(|i| 0.05 * i as f64).collect()
    } else {
        cfg.sweep.couplings.clone()
    };
    let rcs = if cfg.sweep.rcs.is_empty() { vec![cfg.params.rc] } else { cfg.sweep.rcs.clone() };
    let path = dir.join("closure.csv");
    let mut buf = format!("# config {}\n", cfg.digest).into_bytes();
    {
        let mut wtr = csv::Writer::from_writer(&mut buf);
        for &rc in &rcs {
            for &n in &couplings {
                let ph = phi(n, rc)?;
                wtr.serialize(ClosureRow {
                    coupling: n,
                    rc,
                    x: closure_x(n, rc),
                    phi: ph,
                    psi: psi(n, rc)?,
                    k_ratio: 12.0 * ph / (1.0 - n * n),
                })
                .map_err(|e| Error::Config(format!("csv encoding failed: {e}")))?;
            }
        }
        wtr.flush().map_err(|e| Error::io(&path, e))?;
    }
    std::fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
    note(stdout, format!("wrote {}", path.display()))?;
    Ok(())
}

#[derive(Serialize)]
struct DarcySummary<'a> {
    config_digest: &'a str,
    regime: &'a str,
    #[serde(rename = "N")]
    coupling: f64,
    #[serde(rename = "Rc")]
    rc: f64,
    nx: usize,
    ny: usize,
    iterations: usize,
    flux_divergence: f64,
    boundary_flux_residual: f64,
    total_flux_divergence: f64,
    pressure_min: f64,
    pressure_max: f64,
}

fn cmd_darcy(common: &Common, factors: Option<&Path>, stdout: &mut dyn Write) -> std::result::Result<(), Failure> {
    let cfg = parse_config(&common.config)?;
    echo_config(&cfg);
    let dir = out_dir(&cfg, &common.out)?;
    let factors = match factors {
        Some(p) => {
            let f = FlowFactors::read(p)?;
            let fp = f.params()?;
            if fp != cfg.params {
                return Err(Error::Consistency(format!(
                    "{} was computed for N = {}, Rc = {} ({}), config asks for N = {}, Rc = {} ({})",
                    p.display(),
                    fp.coupling,
                    fp.rc,
                    fp.regime.kind().as_str(),
                    cfg.params.coupling,
                    cfg.params.rc,
                    cfg.params.regime.kind().as_str()
                ))
                .into());
            }
            f
        }
        None => factors_for(&request(&cfg), &cfg.digest)?,
    };
    let m = &cfg.macro_;
    let problem = MacroProblem::new(m.domain, m.force.sample(&m.domain)?, m.torque.sample(&m.domain)?, factors)?;
    let sol = solve_darcy(&problem, m.tol, m.max_iter)?;
    let fields = dir.join("darcy_fields.csv");
    write_field_csv(&fields, &format!("config {}", cfg.digest), &sol.rows())?;
    let (pmin, pmax) = sol
        .pressure
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &p| (a.min(p), b.max(p)));
    let summary = DarcySummary {
        config_digest: &cfg.digest,
        regime: cfg.params.regime.kind().as_str(),
        coupling: cfg.params.coupling,
        rc: cfg.params.rc,
        nx: m.domain.nx,
        ny: m.domain.ny,
        iterations: sol.iterations,
        flux_divergence: sol.flux_divergence,
        boundary_flux_residual: sol.boundary_flux_residual,
        total_flux_divergence: sol.total_flux_divergence,
        pressure_min: pmin,
        pressure_max: pmax,
    };
    let path = dir.join("darcy_summary.json");
    let text = serde_json::to_string_pretty(&summary).map_err(Error::from)? + "\n";
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    note(stdout, format!("wrote {} and {}", fields.display(), path.display()))?;
    Ok(())
}

fn describe(p: &SweepPoint) -> String {
    let mut s = format!("regime={} N={} Rc={}", p.params.regime.kind().as_str(), p.params.coupling, p.params.rc);
    if let Some(l) = p.params.regime.lambda() {
        s.push_str(&format!(" lambda={l}"));
    }
    s.push_str(&format!(" shape={} n={}", p.geometry.shape.name(), p.geometry.n));
    if let crate::geometry::ObstacleShape::Disk { radius } = p.geometry.shape {
        s.push_str(&format!(" radius={radius}"));
    }
    s
}

#[derive(Serialize)]
struct IndexRow {
    run: usize,
    file: String,
    #[serde(rename = "N")]
    coupling: f64,
    #[serde(rename = "Rc")]
    rc: f64,
    lambda: Option<f64>,
    radius: Option<f64>,
    porosity: f64,
    k1_11: f64,
    k1_12: f64,
    k1_21: f64,
    k1_22: f64,
    k2_11: f64,
    k2_22: f64,
    l2_11: f64,
    l2_22: f64,
}

fn cmd_sweep(common: &Common, jobs: usize, dry_run: bool, stdout: &mut dyn Write) -> std::result::Result<(), Failure> {
    let cfg = parse_config(&common.config)?;
    echo_config(&cfg);
    let points = cfg.sweep_points()?;
    if dry_run {
        for (i, p) in points.iter().enumerate() {
            note(stdout, format!("run {:04} {}", i, describe(p)))?;
        }
        note(stdout, format!("{} runs planned", points.len()))?;
        return Ok(());
    }
    let dir = out_dir(&cfg, &common.out)?;
    info!("sweep of {} runs on {} thread(s)", points.len(), jobs.max(1));
    let results: Vec<Result<FlowFactors>> = points
        .par_iter()
        .map(|p| {
            let req = FactorRequest {
                params: p.params,
                geometry: p.geometry,
                settings: cfg.settings,
                estimate_error: cfg.estimate_error,
            };
            factors_for(&req, &cfg.digest)
        })
        .collect();
    let mut index = Vec::new();
    for (i, (p, r)) in points.iter().zip(results).enumerate() {
        let f = r?;
        let file = format!("run_{i:04}.json");
        f.write(&dir.join(&file))?;
        index.push(IndexRow {
            run: i,
            file,
            coupling: p.params.coupling,
            rc: p.params.rc,
            lambda: p.params.regime.lambda(),
            radius: match p.geometry.shape {
                crate::geometry::ObstacleShape::Disk { radius } => Some(radius),
                _ => None,
            },
            porosity: f.porosity,
            k1_11: f.k1[0][0],
            k1_12: f.k1[0][1],
            k1_21: f.k1[1][0],
            k1_22: f.k1[1][1],
            k2_11: f.k2[0][0],
            k2_22: f.k2[1][1],
            l2_11: f.l2[0][0],
            l2_22: f.l2[1][1],
        });
    }
    let path = dir.join("index.csv");
    let mut wtr = csv::Writer::from_path(&path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    for row in &index {
        wtr.serialize(row).map_err(|e| Error::Config(format!("csv encoding failed: {e}")))?;
    }
    wtr.flush().map_err(|e| Error::io(&path, e))?;
    note(stdout, format!("wrote {} runs and {}", index.len(), path.display()))?;
    Ok(())
}

fn cmd_verify(config: Option<&Path>, out: Option<&Path>, stdout: &mut dyn Write) -> std::result::Result<(), Failure> {
    let mut opts = SuiteOptions::default();
    if let Some(path) = config {
        let cfg = parse_config(path)?;
        echo_config(&cfg);
        opts.n = cfg.geometry.n;
        opts.settings = cfg.settings;
    }
    let reports: Vec<OracleReport> = run_verification_suite(&opts);
    let text = serde_json::to_string_pretty(&reports).map_err(Error::from)? + "\n";
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("verify.json");
        std::fs::write(&path, &text).map_err(|e| Error::io(&path, e))?;
    }
    stdout.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))?;
    let failed = reports.iter().filter(|r| !r.pass).count();
    if failed > 0 {
        return Err(Failure::Verification(failed));
    }
    Ok(())
}
