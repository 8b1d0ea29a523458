//! Hierarchy of correlations truncated at third order: the condensate with
//! back-reaction, the pair correlators `n_k`, `c_k`, and the three-point
//! correlators
//!
//! `M_{k,q} = <phi^+_{k-q} phi^+_q phi_k>`, `R_{k,q} = <phi_{-k-q} phi_q phi_k>`,
//!
//! with fourth-order correlators factorized into pairs and fifth order
//! dropped. Evolved in time to the steady state.

use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bogoliubov::{bogoliubov_steady_state, BogoliubovTables, Dispersion};
use crate::contour::resonance_contours_full_zone;
use crate::error::{Error, Result};
use crate::grid::{wrap, Grid};
use crate::mean_field::MeanField;
use crate::ode::{DormandPrince, Tolerances};
use crate::params::ModelParams;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationState {
    pub psi0: Complex64,
    pub n: Vec<f64>,
    pub c: Vec<Complex64>,
    /// Row-major `L x L`, entry `k * L + q`.
    pub m: Vec<Complex64>,
    /// Row-major `L x L`, entry `k * L + q`.
    pub r: Vec<Complex64>,
    pub t: f64,
}

impl CorrelationState {
    pub fn l(&self) -> usize {
        self.n.len()
    }

    #[inline]
    pub fn m_at(&self, k: usize, q: usize) -> Complex64 {
        self.m[k * self.l() + q]
    }

    #[inline]
    pub fn r_at(&self, k: usize, q: usize) -> Complex64 {
        self.r[k * self.l() + q]
    }

    fn pack(&self) -> Vec<Complex64> {
        let mut y = Vec::with_capacity(1 + 2 * self.l() + 2 * self.m.len());
        y.push(self.psi0);
        y.extend(self.n.iter().map(|&x| Complex64::new(x, 0.0)));
        y.extend_from_slice(&self.c);
        y.extend_from_slice(&self.m);
        y.extend_from_slice(&self.r);
        y
    }

    fn unpack(l: usize, y: &[Complex64], t: f64) -> Self {
        let (n0, c0, m0, r0) = offsets(l);
        CorrelationState {
            psi0: y[0],
            n: y[n0..c0].iter().map(|z| z.re).collect(),
            c: y[c0..m0].to_vec(),
            m: y[m0..r0].to_vec(),
            r: y[r0..].to_vec(),
            t,
        }
    }
}

/// Start of the `n`, `c`, `M` and `R` blocks in the packed state.
fn offsets(l: usize) -> (usize, usize, usize, usize) {
    (1, 1 + l, 1 + 2 * l, 1 + 2 * l + l * l)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    /// Mean-field condensate, closed-form second order, `M = R = 0`.
    Bogoliubov,
    /// Mean-field condensate and empty fluctuations.
    Vacuum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HocOptions {
    /// When false `M` and `R` stay frozen at their initial values.
    pub evolve_third_order: bool,
    /// Condensate back-reaction and the pair-mean-field shifts of the
    /// `psi0^2` and `|psi0|^2` couplings. Off gives the Bogoliubov limit.
    pub back_reaction: bool,
    /// Keep the factorized fourth-order terms that live on the `k = 0`,
    /// `q = 0` and `k = q` lines.
    pub include_diagonal_factorizations: bool,
    /// Evaluate the detuning and the single-particle energies at the
    /// instantaneous condensate density instead of the mean-field one.
    pub instantaneous_energies: bool,
    pub initial: InitialState,
    pub eps_stop: f64,
    pub dt_monitor: f64,
    pub t_max: f64,
    pub tolerances: Tolerances,
}

impl Default for HocOptions {
    fn default() -> Self {
        HocOptions {
            evolve_third_order: true,
            back_reaction: true,
            include_diagonal_factorizations: false,
            instantaneous_energies: true,
            initial: InitialState::Bogoliubov,
            eps_stop: 1e-6,
            dt_monitor: 1.0,
            t_max: 1e3,
            tolerances: Tolerances::default(),
        }
    }
}

impl HocOptions {
    /// Third order frozen at zero and no back-reaction.
    pub fn bogoliubov_limit() -> Self {
        HocOptions {
            evolve_third_order: false,
            back_reaction: false,
            ..Self::default()
        }
    }
}

/// Everything the right-hand side needs besides the state.
#[derive(Debug, Clone)]
pub struct HocModel {
    pub grid: Grid,
    pub eps: Vec<f64>,
    pub u: f64,
    pub gamma: f64,
    /// Renormalized detuning.
    pub delta: f64,
    pub drive: Complex64,
    pub mean_field: MeanField,
    pub opts: HocOptions,
}

/// Reductions of the state shared by many equations.
struct Sums {
    n_total: f64,
    c_total: Complex64,
    m_total_conj: Complex64,
    /// `sum_q M_{q,k}`
    m_col: Vec<Complex64>,
    /// `sum_q M_{k,q}`
    m_row: Vec<Complex64>,
    /// `sum_q R_{k,q}`
    r_row: Vec<Complex64>,
}

impl HocModel {
    pub fn new(params: &ModelParams, mf: &MeanField, tables: &BogoliubovTables, opts: HocOptions) -> Self {
        HocModel {
            grid: tables.grid,
            eps: tables.eps.clone(),
            u: params.u,
            gamma: params.gamma,
            delta: mf.delta,
            drive: mf.omega,
            mean_field: *mf,
            opts,
        }
    }

    pub fn l(&self) -> usize {
        self.grid.len()
    }

    /// Upper bound on the modulus of the linearized rates.
    pub fn frequency_bound(&self) -> f64 {
        let e_max = self.eps.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        let un0 = self.u * self.mean_field.n0;
        let second = 2.0 * e_max + 4.0 * un0 + self.gamma;
        let third = 3.0 * e_max + 6.0 * un0 + 1.5 * self.gamma;
        let condensate = self.delta.abs() + 3.0 * un0 + self.gamma;
        let bound = if self.opts.evolve_third_order { second.max(third) } else { second };
        bound.max(condensate)
    }

    pub fn initial_state(&self, tables: &BogoliubovTables) -> CorrelationState {
        let l = self.l();
        let (n, c) = match self.opts.initial {
            InitialState::Bogoliubov => {
                let s = bogoliubov_steady_state(tables, &self.mean_field);
                (s.n, s.c)
            }
            InitialState::Vacuum => (vec![0.0; l], vec![ZERO; l]),
        };
        CorrelationState {
            psi0: self.mean_field.psi0,
            n,
            c,
            m: vec![ZERO; l * l],
            r: vec![ZERO; l * l],
            t: 0.0,
        }
    }

    fn sums(&self, n: &[Complex64], c: &[Complex64], m: &[Complex64], r: &[Complex64]) -> Sums {
        let l = self.l();
        let mut s = Sums {
            n_total: n.iter().map(|z| z.re).sum(),
            c_total: c.iter().sum(),
            m_total_conj: ZERO,
            m_col: vec![ZERO; l],
            m_row: vec![ZERO; l],
            r_row: vec![ZERO; l],
        };
        for k in 0..l {
            let row = &m[k * l..(k + 1) * l];
            let mut acc = ZERO;
            for (q, &v) in row.iter().enumerate() {
                acc += v;
                s.m_col[q] += v;
            }
            s.m_row[k] = acc;
            s.m_total_conj += acc.conj();
            s.r_row[k] = r[k * l..(k + 1) * l].iter().sum();
        }
        s
    }

    /// Time derivative of the packed state.
    pub fn rhs(&self, y: &[Complex64], dy: &mut [Complex64]) {
        let l = self.l();
        let g = self.grid;
        let (n_off, c_off, m_off, r_off) = offsets(l);
        let psi = y[0];
        let n = &y[n_off..c_off];
        let c = &y[c_off..m_off];
        let m = &y[m_off..r_off];
        let r = &y[r_off..];
        let u = self.u;
        let gamma = self.gamma;
        let sl = 1.0 / (l as f64).sqrt();
        let lf = l as f64;
        let sums = self.sums(n, c, m, r);
        let psi2 = psi * psi;
        let dens = psi.norm_sqr();
        let shift = if self.opts.back_reaction && self.opts.instantaneous_energies {
            u * (dens - self.mean_field.n0)
        } else {
            0.0
        };

        // Condensate.
        dy[0] = if self.opts.back_reaction {
            -I * (Complex64::new(-self.delta + shift, -0.5 * gamma) * psi
                + self.drive
                + 2.0 * u * psi * sums.n_total / lf
                + u * psi.conj() * sums.c_total / lf
                + u * sl * sl * sl * sums.m_total_conj)
        } else {
            ZERO
        };

        // Pair correlators.
        let (pair, density) = if self.opts.back_reaction {
            (u * (psi2 + sums.c_total / lf), dens + sums.n_total / lf)
        } else {
            (u * psi2, dens)
        };
        let a = 2.0 * u * psi * sl;
        let b = u * psi.conj() * sl;
        for k in 0..l {
            let mk = g.neg(k);
            let nk = n[k].re;
            let ck = c[k];
            let dn = -gamma * nk
                + 2.0 * (pair * ck.conj() + a * sums.m_col[k] + b * sums.m_row[k].conj()).im;
            dy[n_off + k] = Complex64::new(dn, 0.0);
            dy[c_off + k] = -I
                * (Complex64::new(2.0 * (self.eps[k] + shift) + 2.0 * u * density, -gamma) * ck
                    + pair * (2.0 * nk + 1.0)
                    + a * (sums.m_col[mk].conj() + sums.m_col[k].conj())
                    + b * (sums.r_row[mk] + sums.r_row[k]));
        }

        let (dm, dr) = dy[m_off..].split_at_mut(l * l);
        if !self.opts.evolve_third_order {
            dm.fill(ZERO);
            dr.fill(ZERO);
            return;
        }
        let upsi2 = u * psi2;
        let upsic2 = u * psi2.conj();
        let fa = 2.0 * u * psi * sl;
        let fb = 2.0 * u * psi.conj() * sl;
        let third_damp = -1.5 * gamma;
        let diag = self.opts.include_diagonal_factorizations;
        let nn = sums.n_total;
        let cc = sums.c_total;

        dm.par_chunks_mut(l).enumerate().for_each(|(k, row)| {
            let nk = n[k].re;
            let ck = c[k];
            let mk = g.neg(k);
            for (q, out) in row.iter_mut().enumerate() {
                let kmq = g.sub(k, q);
                let (nq, nkq) = (n[q].re, n[kmq].re);
                let (cqc, ckqc) = (c[q].conj(), c[kmq].conj());
                let mut f = fa * (ckqc * nq + nkq * cqc - nk * (cqc + ckqc))
                    + fb * (nkq * nq - nk * (1.0 + nq + nkq) - ck * (cqc + ckqc));
                if diag {
                    if k == 0 {
                        f += (fa * nn + 0.5 * fb * cc) * cqc;
                    }
                    let lines = (k == q) as u8 + (q == 0) as u8;
                    if lines > 0 {
                        f -= (fb * nn + 0.5 * fa * cc.conj()) * nk * lines as f64;
                    }
                }
                let detune = self.eps[k] - self.eps[q] - self.eps[kmq] - shift - u * dens;
                *out = -I
                    * (Complex64::new(detune, third_damp) * m[k * l + q]
                        - upsic2 * (m[q * l + k].conj() + m[kmq * l + k].conj())
                        + upsi2 * r[mk * l + q].conj()
                        + f);
            }
        });

        dr.par_chunks_mut(l).enumerate().for_each(|(k, row)| {
            let nk = n[k].re;
            let ck = c[k];
            let mk = g.neg(k);
            for (q, out) in row.iter_mut().enumerate() {
                let kpq = g.add(k, q);
                let mq = g.neg(q);
                let (nq, nkq) = (n[q].re, n[kpq].re);
                let (cq, ckq) = (c[q], c[kpq]);
                let mut f = fa
                    * (ck + cq + ckq + nkq * cq + ckq * nq + nk * cq + nk * ckq + ck * nq + ck * nkq)
                    + fb * (ck * cq + ck * ckq + cq * ckq);
                if diag {
                    let w = fa * nn + 0.5 * fb * cc;
                    if kpq == 0 {
                        f += w * ck;
                    }
                    if q == 0 {
                        f += w * ck;
                    }
                    if k == 0 {
                        f += w * cq;
                    }
                }
                let detune = self.eps[k] + self.eps[q] + self.eps[kpq] + 3.0 * (shift + u * dens);
                *out = -I
                    * (Complex64::new(detune, third_damp) * r[k * l + q]
                        + upsi2 * (m[mk * l + q].conj() + m[mq * l + k].conj() + m[kpq * l + k].conj())
                        + f);
            }
        });
    }
}

/// Time derivative of `state`.
pub fn hoc_rhs(model: &HocModel, state: &CorrelationState) -> CorrelationState {
    let y = state.pack();
    let mut dy = vec![ZERO; y.len()];
    model.rhs(&y, &mut dy);
    CorrelationState::unpack(model.l(), &dy, state.t)
}

/// Largest deviations from the exact symmetries of the correlators,
/// relative to the largest entry of each.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SymmetryResiduals {
    pub m_exchange: f64,
    pub r_permutation: f64,
    pub c_parity: f64,
    pub min_n: f64,
}

impl SymmetryResiduals {
    pub fn of(state: &CorrelationState, grid: Grid) -> Self {
        let l = state.l();
        let rel = |x: f64, scale: f64| if scale > 0.0 { x / scale } else { 0.0 };
        let m_scale = state.m.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let r_scale = state.r.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let c_scale = state.c.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let (mut me, mut rp, mut cp) = (0.0f64, 0.0f64, 0.0f64);
        for k in 0..l {
            cp = cp.max((state.c[k] - state.c[grid.neg(k)]).norm());
            for q in 0..l {
                me = me.max((state.m_at(k, q) - state.m_at(k, grid.sub(k, q))).norm());
                let third = grid.neg(grid.add(k, q));
                let v = state.r_at(k, q);
                rp = rp
                    .max((v - state.r_at(q, k)).norm())
                    .max((v - state.r_at(k, third)).norm())
                    .max((v - state.r_at(third, q)).norm());
            }
        }
        SymmetryResiduals {
            m_exchange: rel(me, m_scale),
            r_permutation: rel(rp, r_scale),
            c_parity: rel(cp, c_scale),
            min_n: state.n.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }

    fn worst(self, other: Self) -> Self {
        SymmetryResiduals {
            m_exchange: self.m_exchange.max(other.m_exchange),
            r_permutation: self.r_permutation.max(other.r_permutation),
            c_parity: self.c_parity.max(other.c_parity),
            min_n: self.min_n.min(other.min_n),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub times: Vec<f64>,
    pub delta: Vec<f64>,
    /// Decay rate from a straight-line fit of `ln delta(t)`.
    pub kappa_fit: f64,
    pub converged: bool,
    /// Worst symmetry residuals seen at any monitor time.
    pub symmetry: SymmetryResiduals,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub wall_seconds: f64,
}

/// Relative change rate of the momentum distribution over `dt`. Modes
/// empty at both ends of the interval are skipped; a mode filling up from
/// empty is measured against its new value.
pub fn relative_change_rate(before: &[f64], after: &[f64], dt: f64) -> f64 {
    let l = before.len() as f64;
    before
        .iter()
        .zip(after)
        .map(|(&b, &a)| (a - b, if b >= 1e-12 { b } else { a }))
        .filter(|&(_, scale)| scale >= 1e-12)
        .map(|(change, scale)| change.abs() / scale)
        .sum::<f64>()
        / (l * dt)
}

/// Least-squares decay rate of `ln y` against `t`, or `NaN` with fewer
/// than two positive samples.
pub fn fit_decay_rate(t: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(y)
        .filter(|(_, v)| **v > 0.0)
        .map(|(&a, &b)| (a, b.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let nf = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    -sxy / sxx
}

/// Integrate from the configured initial state until the relative change
/// rate of `n_k` over one monitor interval drops below `eps_stop`.
pub fn evolve_to_steady_state(
    model: &HocModel,
    tables: &BogoliubovTables,
) -> Result<(CorrelationState, ConvergenceTrace)> {
    let opts = model.opts;
    if !(opts.dt_monitor > 0.0 && opts.eps_stop > 0.0 && opts.t_max > 0.0) {
        return Err(Error::InvalidParams(format!(
            "dt_monitor = {}, eps_stop = {}, t_max = {}",
            opts.dt_monitor, opts.eps_stop, opts.t_max
        )));
    }
    let start = Instant::now();
    let l = model.l();
    let init = model.initial_state(tables);
    let mut trace = ConvergenceTrace {
        symmetry: SymmetryResiduals::of(&init, model.grid),
        ..Default::default()
    };
    let f = |_t: f64, y: &[Complex64], dy: &mut [Complex64]| model.rhs(y, dy);
    // Near the fixed point the error estimate vanishes and only the
    // stability boundary of the explicit pair limits the step.
    let mut tol = opts.tolerances;
    tol.h_max = tol.h_max.min(1.5 / model.frequency_bound());
    let mut solver = DormandPrince::new(f, 0.0, init.pack(), 0.1 * tol.h_max, tol);
    let (n_off, c_off, _, _) = offsets(l);
    let n_of = |y: &[Complex64]| y[n_off..c_off].iter().map(|z| z.re).collect::<Vec<f64>>();
    let mut before = n_of(&solver.y);
    let mut step = 0usize;
    loop {
        step += 1;
        let t_next = step as f64 * opts.dt_monitor;
        if t_next > opts.t_max + 1e-9 {
            trace.accepted_steps = solver.accepted;
            trace.rejected_steps = solver.rejected;
            return Err(Error::NotConverged {
                t: solver.t,
                residual: trace.delta.last().copied().unwrap_or(f64::NAN),
            });
        }
        solver.advance_to(t_next)?;
        let after = n_of(&solver.y);
        let d = relative_change_rate(&before, &after, opts.dt_monitor);
        if !d.is_finite() {
            return Err(Error::StiffnessFailure {
                t: solver.t,
                h: solver.h,
            });
        }
        let state = CorrelationState::unpack(l, &solver.y, solver.t);
        trace.symmetry = trace.symmetry.worst(SymmetryResiduals::of(&state, model.grid));
        trace.times.push(solver.t);
        trace.delta.push(d);
        before = after;
        if d < opts.eps_stop {
            trace.converged = true;
            trace.kappa_fit = fit_decay_rate(&trace.times, &trace.delta);
            trace.accepted_steps = solver.accepted;
            trace.rejected_steps = solver.rejected;
            trace.wall_seconds = start.elapsed().as_secs_f64();
            return Ok((state, trace));
        }
    }
}

/// `|M_{k,q}|` with its contrast between cells near the resonance contour
/// and the background.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThirdOrderMap {
    /// Row-major `L x L` magnitudes in slot order.
    pub magnitude: Vec<f64>,
    /// Mean over cells within one grid spacing of the contour.
    pub contour_mean: f64,
    /// Median over cells farther than five grid spacings from it.
    pub background_median: f64,
    pub contour_cells: usize,
    pub background_cells: usize,
}

impl ThirdOrderMap {
    pub fn enhancement(&self) -> f64 {
        self.contour_mean / self.background_median
    }
}

/// Distance in the periodic `(k, q)` plane from every grid cell to the
/// nearest point of the resonance contour.
pub fn contour_distances(disp: &Dispersion, grid: Grid) -> Vec<f64> {
    let l = grid.len();
    let pts: Vec<(f64, f64)> = resonance_contours_full_zone(disp, 1024).into_iter().flatten().collect();
    (0..l * l)
        .into_par_iter()
        .map(|idx| {
            let (k, q) = (grid.k(idx / l), grid.k(idx % l));
            pts.iter()
                .map(|&(a, b)| wrap(a - k).hypot(wrap(b - q)))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

pub fn third_order_map(state: &CorrelationState, disp: &Dispersion, grid: Grid) -> ThirdOrderMap {
    let magnitude: Vec<f64> = state.m.iter().map(|z| z.norm()).collect();
    let h = grid.spacing();
    let dist = contour_distances(disp, grid);
    let near: Vec<f64> = magnitude
        .iter()
        .zip(&dist)
        .filter(|(_, &d)| d <= h)
        .map(|(&v, _)| v)
        .collect();
    let mut far: Vec<f64> = magnitude
        .iter()
        .zip(&dist)
        .filter(|(_, &d)| d > 5.0 * h)
        .map(|(&v, _)| v)
        .collect();
    far.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if far.is_empty() {
        f64::NAN
    } else if far.len() % 2 == 1 {
        far[far.len() / 2]
    } else {
        0.5 * (far[far.len() / 2 - 1] + far[far.len() / 2])
    };
    ThirdOrderMap {
        contour_mean: near.iter().sum::<f64>() / near.len() as f64,
        background_median: median,
        contour_cells: near.len(),
        background_cells: far.len(),
        magnitude,
    }
}

/// Homodyne signal `2 Re{Omega e^{i(theta + chi)} M_{k,q}}` of the three-arm
/// detection scheme.
pub fn detection_signal(
    state: &CorrelationState,
    grid: Grid,
    drive: Complex64,
    theta: f64,
    chi: f64,
    k: usize,
    q: usize,
) -> Result<f64> {
    if k == 0 || q == 0 || grid.sub(k, q) == 0 {
        return Err(Error::ZeroMomentumArm { k, q });
    }
    Ok(2.0 * (drive * Complex64::from_polar(1.0, theta + chi) * state.m_at(k, q)).re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bogoliubov::dispersion_tables;
    use crate::mean_field::solve_mean_field;

    fn setup(l: usize, u: f64, opts: HocOptions) -> (HocModel, BogoliubovTables) {
        let p = ModelParams::standard(l, u);
        let mf = solve_mean_field(&p).unwrap();
        let t = dispersion_tables(&mf, &p).unwrap();
        (HocModel::new(&p, &mf, &t, opts), t)
    }

    #[test]
    fn pack_round_trip() {
        let (model, t) = setup(6, 0.1, HocOptions::default());
        let mut s = model.initial_state(&t);
        s.m[7] = Complex64::new(1.0, 2.0);
        s.r[30] = Complex64::new(-3.0, 0.5);
        let back = CorrelationState::unpack(6, &s.pack(), 0.0);
        assert_eq!(back, s);
    }

    #[test]
    fn free_field_is_stationary() {
        let p = ModelParams {
            u: 0.0,
            ..ModelParams::standard(8, 0.1)
        };
        let mut mf = solve_mean_field(&ModelParams::standard(8, 0.1)).unwrap();
        mf.n0 = 100.0;
        let mut t = dispersion_tables(&mf, &ModelParams::standard(8, 0.1)).unwrap();
        t.disp.un0 = 0.0;
        let model = HocModel::new(&p, &mf, &t, HocOptions::default());
        let zero = CorrelationState {
            psi0: Complex64::new(3.0, 1.0),
            n: vec![0.0; 8],
            c: vec![ZERO; 8],
            m: vec![ZERO; 64],
            r: vec![ZERO; 64],
            t: 0.0,
        };
        let d = hoc_rhs(&model, &zero);
        assert!(d.n.iter().all(|&x| x == 0.0));
        assert!(d.c.iter().chain(&d.m).chain(&d.r).all(|z| *z == ZERO));
        // psi0 relaxes towards the drive fixed point
        let target = mf.omega / Complex64::new(mf.delta, 0.5);
        let step = zero.psi0 + 1e-4 * d.psi0;
        assert!((step - target).norm() < (zero.psi0 - target).norm());
    }

    #[test]
    fn bogoliubov_limit_matches_linear_equations() {
        let (model, t) = setup(16, 0.1, HocOptions::bogoliubov_limit());
        let mut s = model.initial_state(&t);
        for (i, (n, c)) in s.n.iter_mut().zip(s.c.iter_mut()).enumerate() {
            *n = 0.01 * i as f64;
            *c = Complex64::new(0.002 * i as f64, -0.001);
        }
        let d = hoc_rhs(&model, &s);
        let upsi2 = Complex64::new(10.0, 0.0);
        for k in 0..16 {
            let dn = -s.n[k] + 2.0 * (upsi2 * s.c[k].conj()).im;
            let dc = -I * (Complex64::new(2.0 * t.eps[k] + 20.0, -1.0) * s.c[k] + upsi2 * (2.0 * s.n[k] + 1.0));
            assert!((d.n[k] - dn).abs() < 1e-12);
            assert!((d.c[k] - dc).norm() < 1e-12);
        }
        assert_eq!(d.psi0, ZERO);
    }

    /// Hand expansion of the factorized fourth-order drive of `M` with a
    /// single nonzero occupation `n_{k0} = x`.
    #[test]
    fn single_occupation_probe_of_m_drive() {
        let l = 8;
        let (model, t) = setup(l, 0.1, HocOptions::default());
        let g = model.grid;
        let mut s = model.initial_state(&t);
        s.n.fill(0.0);
        s.c.fill(ZERO);
        let (k0, x) = (3usize, 0.37);
        s.n[k0] = x;
        let d = hoc_rhs(&model, &s);
        let psi = s.psi0;
        let sl = 1.0 / (l as f64).sqrt();
        let b = 2.0 * 0.1 * psi.conj() * sl;
        for k in 0..l {
            for q in 0..l {
                let kmq = g.sub(k, q);
                // only n_{k-q} n_q - n_k (1 + n_q + n_{k-q}) survives
                let mut expect = ZERO;
                if q == k0 && kmq == k0 {
                    expect += b * x * x;
                }
                if k == k0 {
                    let extra = (q == k0) as u8 as f64 + (kmq == k0) as u8 as f64;
                    expect -= b * x * (1.0 + extra * x);
                }
                let got = I * d.m_at(k, q);
                assert!((got - expect).norm() < 1e-12, "{k} {q}: {got} vs {expect}");
            }
        }
    }

    #[test]
    fn rhs_preserves_symmetries() {
        let l = 10;
        let (model, t) = setup(l, 0.1, HocOptions::default());
        let g = model.grid;
        let mut s = model.initial_state(&t);
        // symmetric but otherwise arbitrary third order
        for k in 0..l {
            for q in 0..l {
                let (a, b) = (g.k(k), g.k(q));
                let kq = g.k(g.sub(k, q));
                s.m[k * l + q] = Complex64::new((a + 0.3).cos() * (b.sin() + kq.sin()), 0.1 * (b * kq).cos());
                let third = -(a + b);
                let sym = a.cos() + b.cos() + third.cos();
                s.r[k * l + q] = Complex64::new(0.01 * sym, 0.02 * sym * sym);
            }
        }
        assert!(SymmetryResiduals::of(&s, g).m_exchange < 1e-12);
        assert!(SymmetryResiduals::of(&s, g).r_permutation < 1e-12);
        let d = hoc_rhs(&model, &s);
        let res = SymmetryResiduals::of(&d, g);
        assert!(res.m_exchange < 1e-12, "{res:?}");
        assert!(res.r_permutation < 1e-12, "{res:?}");
        assert!(res.c_parity < 1e-12, "{res:?}");
    }

    #[test]
    fn diagonal_factorizations_only_touch_lines() {
        let l = 8;
        let (plain, t) = setup(l, 0.1, HocOptions::default());
        let mut opts = HocOptions::default();
        opts.include_diagonal_factorizations = true;
        let (with_diag, _) = setup(l, 0.1, opts);
        let s = plain.initial_state(&t);
        let (a, b) = (hoc_rhs(&plain, &s), hoc_rhs(&with_diag, &s));
        let g = plain.grid;
        for k in 0..l {
            for q in 0..l {
                let on_m_line = k == 0 || q == 0 || k == q;
                let on_r_line = k == 0 || q == 0 || g.add(k, q) == 0;
                if !on_m_line {
                    assert_eq!(a.m_at(k, q), b.m_at(k, q));
                }
                if !on_r_line {
                    assert_eq!(a.r_at(k, q), b.r_at(k, q));
                }
            }
        }
        assert!(a.m_at(0, 2) != b.m_at(0, 2));
        assert!(a.r_at(0, 2) != b.r_at(0, 2));
    }

    #[test]
    fn frozen_third_order_relaxes_to_closed_form() {
        let mut opts = HocOptions::bogoliubov_limit();
        opts.initial = InitialState::Vacuum;
        opts.eps_stop = 1e-11;
        let (model, t) = setup(16, 0.1, opts);
        let (s, trace) = evolve_to_steady_state(&model, &t).unwrap();
        let exact = bogoliubov_steady_state(&t, &model.mean_field);
        for k in 0..16 {
            assert!((s.n[k] - exact.n[k]).abs() / exact.n[k] < 1e-8, "{k} {} {} {:?}", s.n[k], exact.n[k], trace.times.last());
            assert!((s.c[k] - exact.c[k]).norm() / exact.c[k].norm() < 1e-8);
        }
        assert!(trace.converged && trace.kappa_fit > 0.0);
    }

    #[test]
    fn small_chain_converges_with_symmetries() {
        let (model, t) = setup(16, 0.1, HocOptions::default());
        let (s, trace) = evolve_to_steady_state(&model, &t).unwrap();
        assert!(trace.converged);
        assert!(trace.kappa_fit > 0.0, "{}", trace.kappa_fit);
        assert!(trace.symmetry.m_exchange < 1e-9, "{:?}", trace.symmetry);
        assert!(trace.symmetry.r_permutation < 1e-9, "{:?}", trace.symmetry);
        assert!(trace.symmetry.c_parity < 1e-9, "{:?}", trace.symmetry);
        assert!(trace.symmetry.min_n >= -1e-9);
        assert!(s.n.iter().all(|&n| n > 0.0));
    }

    #[test]
    fn detection_signal_phase_algebra() {
        let (model, t) = setup(8, 0.1, HocOptions::default());
        let g = model.grid;
        let mut s = model.initial_state(&t);
        let drive = model.drive;
        assert_eq!(detection_signal(&s, g, drive, 0.3, 0.2, 2, 1).unwrap(), 0.0);
        s.m[2 * 8 + 1] = Complex64::new(0.4, -0.3);
        let amp = 2.0 * drive.norm() * 0.5;
        let peak = (0..360)
            .map(|i| detection_signal(&s, g, drive, i as f64 * std::f64::consts::PI / 180.0, 0.0, 2, 1).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((peak - amp).abs() < 1e-3 * amp);
        assert!(matches!(
            detection_signal(&s, g, drive, 0.0, 0.0, 3, 3),
            Err(Error::ZeroMomentumArm { .. })
        ));
        assert!(detection_signal(&s, g, drive, 0.0, 0.0, 0, 3).is_err());
    }

    #[test]
    fn decay_rate_fit() {
        let t: Vec<f64> = (1..20).map(|i| i as f64).collect();
        let y: Vec<f64> = t.iter().map(|x| 3.0 * (-0.7 * x).exp()).collect();
        assert!((fit_decay_rate(&t, &y) - 0.7).abs() < 1e-12);
    }
}
