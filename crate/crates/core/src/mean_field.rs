//! Homogeneous mean-field steady state of the driven chain.
//!
//! A uniform solution `psi_j = psi0` obeys
//! `n0 ((delta - U n0 + 2J)^2 + gamma^2/4) = |Omega|^2`, a cubic in `n0`
//! when the bare detuning and the drive are prescribed.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{Branch, Detuning, Drive, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanField {
    pub psi0: Complex64,
    pub n0: f64,
    /// Renormalized detuning `Delta`.
    pub delta: f64,
    /// Bare detuning `delta`.
    pub bare_delta: f64,
    pub omega: Complex64,
    pub branch_stable: bool,
}

impl MeanField {
    /// `U n0`, the mean-field interaction energy.
    pub fn un0(&self, u: f64) -> f64 {
        u * self.n0
    }

    /// Relative residual of the steady-state cubic.
    pub fn residual(&self, gamma: f64) -> f64 {
        let lhs = self.n0 * (self.delta * self.delta + 0.25 * gamma * gamma);
        let rhs = self.omega.norm_sqr();
        (lhs - rhs).abs() / rhs.max(f64::MIN_POSITIVE)
    }
}

/// Stability of a homogeneous solution against uniform perturbations:
/// sign of the determinant of the linearized k = 0 response, which is also
/// the slope of `|Omega|^2(n0)`. The middle branch of an S-curve has a
/// negative determinant.
fn response_determinant(delta: f64, un0: f64, gamma: f64) -> f64 {
    delta * delta - 2.0 * delta * un0 + 0.25 * gamma * gamma
}

fn build(p: &ModelParams, n0: f64, delta: f64, omega: Option<Complex64>) -> MeanField {
    let un0 = p.u * n0;
    let bare_delta = delta + un0 - 2.0 * p.j;
    let denom = Complex64::new(delta, 0.5 * p.gamma);
    // i dpsi/dt = (-Delta - i gamma/2) psi + Omega vanishes at the fixed point.
    let (psi0, omega) = match omega {
        Some(o) => (o / denom, o),
        None => {
            let psi0 = Complex64::new(n0.sqrt(), 0.0);
            (psi0, denom * psi0)
        }
    };
    MeanField {
        psi0,
        n0,
        delta,
        bare_delta,
        omega,
        branch_stable: response_determinant(delta, un0, p.gamma) > 0.0,
    }
}

/// All positive roots of `n ((a - U n)^2 + g^2/4) - |Omega|^2` with
/// `a = delta + 2J`, in ascending order.
pub fn cubic_roots(u: f64, a: f64, gamma: f64, omega_sq: f64) -> Vec<f64> {
    let g2 = 0.25 * gamma * gamma;
    let f = |n: f64| n * ((a - u * n).powi(2) + g2) - omega_sq;
    if omega_sq == 0.0 {
        return Vec::new();
    }
    // f(n) >= n g^2/4 - |Omega|^2, so every root lies below this bound.
    let upper = omega_sq / g2;
    let mut breaks = vec![0.0, upper];
    // Stationary points split the interval into monotone pieces.
    if u > 0.0 {
        let (qa, qb, qc) = (3.0 * u * u, -4.0 * u * a, a * a + g2);
        let disc = qb * qb - 4.0 * qa * qc;
        if disc > 0.0 {
            let s = disc.sqrt();
            for r in [(-qb - s) / (2.0 * qa), (-qb + s) / (2.0 * qa)] {
                if r > 0.0 && r < upper {
                    breaks.push(r);
                }
            }
        }
    }
    breaks.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut roots = Vec::new();
    for w in breaks.windows(2) {
        let (mut lo, mut hi) = (w[0], w[1]);
        let (flo, fhi) = (f(lo), f(hi));
        if flo == 0.0 && lo > 0.0 {
            roots.push(lo);
            continue;
        }
        if flo.signum() == fhi.signum() {
            continue;
        }
        let rising = fhi > flo;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if (f(mid) > 0.0) == rising {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let r = if f(lo).abs() < f(hi).abs() { lo } else { hi };
        if roots.last().map_or(true, |&x: &f64| (r - x).abs() > 1e-12 * r) {
            roots.push(r);
        }
    }
    roots
}

/// Every homogeneous steady state compatible with the parameters.
pub fn mean_field_roots(p: &ModelParams) -> Result<Vec<MeanField>> {
    p.validate()?;
    let g2 = 0.25 * p.gamma * p.gamma;
    let out = match (p.drive, p.detuning) {
        (Drive::Density(n0), Detuning::Renormalized(delta)) => vec![build(p, n0, delta, None)],
        (Drive::Density(n0), Detuning::Bare(bare)) => {
            vec![build(p, n0, bare - p.u * n0 + 2.0 * p.j, None)]
        }
        (Drive::Amplitude(o), Detuning::Renormalized(delta)) => {
            let n0 = o.norm_sqr() / (delta * delta + g2);
            if !(n0 > 0.0) {
                return Err(Error::NoRoot);
            }
            vec![build(p, n0, delta, Some(o))]
        }
        (Drive::Amplitude(o), Detuning::Bare(bare)) => {
            let a = bare + 2.0 * p.j;
            cubic_roots(p.u, a, p.gamma, o.norm_sqr())
                .into_iter()
                .map(|n0| build(p, n0, a - p.u * n0, Some(o)))
                .collect()
        }
    };
    if out.is_empty() {
        return Err(Error::NoRoot);
    }
    Ok(out)
}

/// The mean field selected by the parameters. With a prescribed drive in the
/// bistable window a [`Branch`] must be given.
pub fn solve_mean_field(p: &ModelParams) -> Result<MeanField> {
    let roots = mean_field_roots(p)?;
    if roots.len() == 1 {
        return Ok(roots[0]);
    }
    match p.branch {
        Some(Branch::Upper) => Ok(*roots.last().unwrap()),
        Some(Branch::Lower) => Ok(roots[0]),
        None => Err(Error::AmbiguousBranch {
            roots: roots.iter().map(|m| m.n0).collect(),
        }),
    }
}
