//! Physical parameters shared by the cell solvers and the closure.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Ratio between the cell period and the film thickness in the PTPM regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Lambda(f64);

impl Lambda {
    pub fn new(value: f64) -> Result<Self> {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::Parameter(format!(
                "lambda must be finite and positive, got {value}"
            )));
        }
        Ok(Lambda(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegimeKind {
    Ptpm,
    Htpm,
    Vtpm,
}

impl RegimeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RegimeKind::Ptpm => "ptpm",
            RegimeKind::Htpm => "htpm",
            RegimeKind::Vtpm => "vtpm",
        }
    }
}

impl std::str::FromStr for RegimeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ptpm" => Ok(RegimeKind::Ptpm),
            "htpm" => Ok(RegimeKind::Htpm),
            "vtpm" => Ok(RegimeKind::Vtpm),
            other => Err(Error::Parameter(format!(
                "unknown regime '{other}' (expected ptpm, htpm or vtpm)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regime {
    Ptpm(Lambda),
    Htpm,
    Vtpm,
}

impl Regime {
    pub fn kind(self) -> RegimeKind {
        match self {
            Regime::Ptpm(_) => RegimeKind::Ptpm,
            Regime::Htpm => RegimeKind::Htpm,
            Regime::Vtpm => RegimeKind::Vtpm,
        }
    }

    pub fn lambda(self) -> Option<f64> {
        match self {
            Regime::Ptpm(l) => Some(l.value()),
            _ => None,
        }
    }
}

/// Regime tag plus coupling number `N` and micropolar length constant `Rc`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeParams {
    pub regime: Regime,
    pub coupling: f64,
    pub rc: f64,
}

impl RegimeParams {
    pub fn new(regime: Regime, coupling: f64, rc: f64) -> Result<Self> {
        check_coupling(coupling)?;
        check_rc(rc)?;
        Ok(RegimeParams {
            regime,
            coupling,
            rc,
        })
    }

    pub fn htpm(coupling: f64, rc: f64) -> Result<Self> {
        Self::new(Regime::Htpm, coupling, rc)
    }

    pub fn vtpm(coupling: f64, rc: f64) -> Result<Self> {
        Self::new(Regime::Vtpm, coupling, rc)
    }

    pub fn ptpm(lambda: f64, coupling: f64, rc: f64) -> Result<Self> {
        Self::new(Regime::Ptpm(Lambda::new(lambda)?), coupling, rc)
    }

    /// N^2, the weight of every velocity/microrotation coupling term.
    pub fn n2(&self) -> f64 {
        self.coupling * self.coupling
    }
}

pub fn check_coupling(n: f64) -> Result<()> {
    if !(n.is_finite() && (0.0..1.0).contains(&n)) {
        return Err(Error::Parameter(format!(
            "coupling number N = {n} is outside [0, 1); the model requires N < 1 \
             because every energy estimate carries a factor 1/(1 - N^2)"
        )));
    }
    Ok(())
}

pub fn check_rc(rc: f64) -> Result<()> {
    if !(rc.is_finite() && rc > 0.0) {
        return Err(Error::Parameter(format!(
            "Rc must be finite and positive, got {rc}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coupling_one_is_rejected() {
        let err = RegimeParams::htpm(1.0, 0.1).unwrap_err();
        assert!(err.to_string().contains("N < 1"));
        assert!(RegimeParams::htpm(0.999, 0.1).is_ok());
        assert!(RegimeParams::htpm(-0.1, 0.1).is_err());
    }

    #[test]
    fn lambda_must_be_positive() {
        assert!(Lambda::new(0.0).is_err());
        assert!(Lambda::new(f64::INFINITY).is_err());
        assert_eq!(Lambda::new(2.0).unwrap().value(), 2.0);
    }

    #[test]
    fn regime_names_parse() {
        assert_eq!("PTPM".parse::<RegimeKind>().unwrap(), RegimeKind::Ptpm);
        assert!("foo".parse::<RegimeKind>().is_err());
    }
}
