//! Model parameters. All rates are in units of the loss rate gamma.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Laser detuning, given either bare (`delta = omega_L - omega_c`) or
/// renormalized by the interaction blueshift and the hopping band edge
/// (`Delta = delta - U n0 + 2J`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Detuning {
    Bare(f64),
    Renormalized(f64),
}

/// What fixes the homogeneous mean field: a target density per site, or the
/// drive amplitude itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Drive {
    Density(f64),
    Amplitude(Complex64),
}

/// Root selector inside the bistable window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Upper,
    Lower,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Number of cavities (even).
    pub l: usize,
    pub j: f64,
    pub u: f64,
    pub gamma: f64,
    pub detuning: Detuning,
    pub drive: Drive,
    pub branch: Option<Branch>,
}

impl ModelParams {
    /// Parameters fixed by `(J, Delta, U n0)` and `U`, the parametrization
    /// used throughout the analysis (the drive follows from `n0 = Un0 / U`).
    pub fn renormalized(l: usize, j: f64, delta: f64, un0: f64, u: f64) -> Self {
        ModelParams {
            l,
            j,
            u,
            gamma: 1.0,
            detuning: Detuning::Renormalized(delta),
            drive: Drive::Density(un0 / u),
            branch: None,
        }
    }

    /// `(J, Delta, U n0) = (30, -10, 10)`.
    pub fn standard(l: usize, u: f64) -> Self {
        Self::renormalized(l, 30.0, -10.0, 10.0, u)
    }

    /// Same mean-field point at coupling `u`: a target density is rescaled
    /// so that `U n0` is unchanged.
    pub fn with_coupling(&self, u: f64) -> Self {
        let mut p = self.clone();
        if let Drive::Density(n0) = self.drive {
            if self.u > 0.0 && u > 0.0 {
                p.drive = Drive::Density(n0 * self.u / u);
            }
        }
        p.u = u;
        p
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if self.l < 2 || self.l % 2 != 0 {
            return bad(format!("L = {} must be even and >= 2", self.l));
        }
        if !(self.j >= 0.0 && self.j.is_finite()) {
            return bad(format!("J = {} must be finite and >= 0", self.j));
        }
        if !(self.u >= 0.0 && self.u.is_finite()) {
            return bad(format!("U = {} must be finite and >= 0", self.u));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma = {} must be positive", self.gamma));
        }
        match self.detuning {
            Detuning::Renormalized(d) if !(d < 0.0) => {
                return bad(format!("renormalized detuning {d} must be negative"))
            }
            Detuning::Bare(d) | Detuning::Renormalized(d) if !d.is_finite() => {
                return bad("detuning must be finite".into())
            }
            _ => {}
        }
        match self.drive {
            Drive::Density(n0) if !(n0 > 0.0 && n0.is_finite()) => {
                return bad(format!("target density {n0} must be positive"))
            }
            Drive::Amplitude(o) if !(o.re.is_finite() && o.im.is_finite()) => {
                return bad("drive amplitude must be finite".into())
            }
            _ => {}
        }
        Ok(())
    }
}
