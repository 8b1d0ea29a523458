//! Bogoliubov theory of the fluctuations around the homogeneous mean field:
//! the quasiparticle dispersion, the transform coefficients, and the
//! second-order steady state (closed form and by direct time integration).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::mean_field::MeanField;
use crate::params::ModelParams;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Closed-form lattice dispersion, evaluable at any real momentum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dispersion {
    /// Renormalized detuning `Delta`.
    pub delta: f64,
    pub j: f64,
    pub un0: f64,
}

impl Dispersion {
    pub fn new(delta: f64, j: f64, un0: f64) -> Self {
        Dispersion { delta, j, un0 }
    }

    /// `eps_k = -Delta + 2J (1 - cos k)`.
    #[inline]
    pub fn eps(&self, k: f64) -> f64 {
        -self.delta + 2.0 * self.j * (1.0 - k.cos())
    }

    #[inline]
    pub fn omega_sq(&self, k: f64) -> f64 {
        let e = self.eps(k);
        e * (e + 2.0 * self.un0)
    }

    /// Quasiparticle energy `omega_k = sqrt(eps_k (eps_k + 2 U n0))`.
    #[inline]
    pub fn omega(&self, k: f64) -> f64 {
        self.omega_sq(k).sqrt()
    }

    /// Transform coefficients `(u_k, v_k)`.
    pub fn uv(&self, k: f64) -> (f64, f64) {
        let e = self.eps(k);
        let (a, b) = ((e + 2.0 * self.un0).sqrt(), e.sqrt());
        let d = 2.0 * self.omega(k).sqrt();
        ((a + b) / d, (a - b) / d)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BogoliubovTables {
    pub grid: Grid,
    pub disp: Dispersion,
    pub gamma: f64,
    pub k: Vec<f64>,
    pub eps: Vec<f64>,
    pub omega: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl BogoliubovTables {
    pub fn len(&self) -> usize {
        self.k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
    }
}

pub fn dispersion_tables(mf: &MeanField, params: &ModelParams) -> Result<BogoliubovTables> {
    let grid = Grid::new(params.l);
    let disp = Dispersion::new(mf.delta, params.j, mf.un0(params.u));
    let l = grid.len();
    let mut t = BogoliubovTables {
        grid,
        disp,
        gamma: params.gamma,
        k: Vec::with_capacity(l),
        eps: Vec::with_capacity(l),
        omega: Vec::with_capacity(l),
        u: Vec::with_capacity(l),
        v: Vec::with_capacity(l),
    };
    for i in 0..l {
        let k = grid.k(i);
        let e = disp.eps(k);
        if !(e > 0.0 && e * (e + 2.0 * disp.un0) > 0.0) {
            return Err(Error::GaplessOrUnstable { k });
        }
        let (u, v) = disp.uv(k);
        t.k.push(k);
        t.eps.push(e);
        t.omega.push(disp.omega(k));
        t.u.push(u);
        t.v.push(v);
    }
    Ok(t)
}

/// Momentum distribution `n_k = <phi_k^+ phi_k>` and anomalous correlator
/// `c_k = <phi_k phi_-k>`, in grid slot order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondOrderState {
    pub n: Vec<f64>,
    pub c: Vec<Complex64>,
}

impl SecondOrderState {
    pub fn zeros(l: usize) -> Self {
        SecondOrderState {
            n: vec![0.0; l],
            c: vec![Complex64::new(0.0, 0.0); l],
        }
    }
}

/// `U psi0^2` from `U n0` and the condensate phase.
fn pair_coupling(tables: &BogoliubovTables, mf: &MeanField) -> Complex64 {
    if mf.n0 == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let phase = mf.psi0 / mf.psi0.norm();
    tables.disp.un0 * phase * phase
}

/// Closed-form steady state of the linearized fluctuations.
pub fn bogoliubov_steady_state(tables: &BogoliubovTables, mf: &MeanField) -> SecondOrderState {
    let g = tables.gamma;
    let un0 = tables.disp.un0;
    let upsi2 = pair_coupling(tables, mf);
    let mut out = SecondOrderState::zeros(tables.len());
    for i in 0..tables.len() {
        let denom = tables.omega[i].powi(2) + 0.25 * g * g;
        out.n[i] = 0.5 * un0 * un0 / denom;
        out.c[i] = -0.5 * upsi2 * Complex64::new(tables.eps[i] + un0, 0.5 * g) / denom;
    }
    out
}

/// Stationary occupations and anomalous averages of the quasiparticle modes,
/// `n^chi_k = v_k^2` and `c^chi_k = u_k v_k gamma / (gamma + 2 i omega_k)`.
pub fn quasiparticle_steady_state(tables: &BogoliubovTables) -> SecondOrderState {
    let g = tables.gamma;
    SecondOrderState {
        n: tables.v.iter().map(|v| v * v).collect(),
        c: (0..tables.len())
            .map(|i| tables.u[i] * tables.v[i] * g / Complex64::new(g, 2.0 * tables.omega[i]))
            .collect(),
    }
}

/// Time derivative of the linear second-order equations for one mode.
#[inline]
fn mode_rhs(n: f64, c: Complex64, eps: f64, un0: f64, upsi2: Complex64, g: f64) -> (f64, Complex64) {
    let dn = -g * n + 2.0 * (upsi2 * c.conj()).im;
    let dc = -I * (Complex64::new(2.0 * eps + 2.0 * un0, -g) * c + upsi2 * (2.0 * n + 1.0));
    (dn, dc)
}

/// Classical RK4 integration of the second-order equations from the vacuum,
/// calling `observe(t, state)` after every step.
pub fn integrate_bogoliubov_odes_observed(
    tables: &BogoliubovTables,
    mf: &MeanField,
    t_end: f64,
    dt: f64,
    mut observe: impl FnMut(f64, &SecondOrderState),
) -> Result<SecondOrderState> {
    if !(dt > 0.0 && t_end > 0.0) {
        return Err(Error::InvalidParams(format!("t_end = {t_end}, dt = {dt}")));
    }
    let g = tables.gamma;
    let un0 = tables.disp.un0;
    let upsi2 = pair_coupling(tables, mf);
    let steps = (t_end / dt).round() as usize;
    let check_step = steps.saturating_sub((1.0 / (g * dt)).round() as usize);
    let mut s = SecondOrderState::zeros(tables.len());
    let mut n_check = s.n.clone();
    for step in 1..=steps {
        for i in 0..tables.len() {
            let e = tables.eps[i];
            let (n, c) = (s.n[i], s.c[i]);
            let (k1n, k1c) = mode_rhs(n, c, e, un0, upsi2, g);
            let (k2n, k2c) = mode_rhs(n + 0.5 * dt * k1n, c + 0.5 * dt * k1c, e, un0, upsi2, g);
            let (k3n, k3c) = mode_rhs(n + 0.5 * dt * k2n, c + 0.5 * dt * k2c, e, un0, upsi2, g);
            let (k4n, k4c) = mode_rhs(n + dt * k3n, c + dt * k3c, e, un0, upsi2, g);
            s.n[i] = n + dt / 6.0 * (k1n + 2.0 * k2n + 2.0 * k3n + k4n);
            s.c[i] = c + dt / 6.0 * (k1c + 2.0 * k2c + 2.0 * k3c + k4c);
        }
        if step == check_step {
            n_check.copy_from_slice(&s.n);
        }
        observe(step as f64 * dt, &s);
    }
    let drift = s
        .n
        .iter()
        .zip(&n_check)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if drift > 1e-10 {
        return Err(Error::NotConverged {
            t: steps as f64 * dt,
            residual: drift,
        });
    }
    Ok(s)
}

pub fn integrate_bogoliubov_odes(
    tables: &BogoliubovTables,
    mf: &MeanField,
    t_end: f64,
    dt: f64,
) -> Result<SecondOrderState> {
    integrate_bogoliubov_odes_observed(tables, mf, t_end, dt, |_, _| {})
}
