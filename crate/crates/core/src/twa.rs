//! Truncated Wigner sampling of the driven-dissipative chain.
//!
//! Each trajectory integrates the classical field equation
//! `i dφ_j = [-(δ + iγ/2)φ_j - J(φ_{j+1} + φ_{j-1}) + U(|φ_j|² - 1)φ_j + Ω] dt + sqrt(γ/2) dW_j`
//! with a Strang splitting: the linear part (hopping, detuning, loss,
//! drive and noise) is solved exactly per momentum mode, and the local
//! nonlinearity, which conserves `|φ_j|`, is an exact phase rotation.

use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::mean_field::MeanField;
use crate::params::ModelParams;
use crate::stats::Blocking;

/// Bound on `dt * max(U n0, |Δ|, 1)` accepted by [`TwaConfig::validate`].
pub const STEP_BOUND: f64 = 0.05;
/// Trajectories blow up when `|φ_j|` exceeds this multiple of `sqrt(n0)`.
pub const BLOWUP_FACTOR: f64 = 1e3;

const BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TwaConfig {
    pub dt: f64,
    pub burn_in: f64,
    pub sample_interval: f64,
    pub n_samples: usize,
    pub master_seed: u64,
    pub n_trajectories: usize,
}

impl Default for TwaConfig {
    fn default() -> Self {
        TwaConfig {
            dt: 0.005,
            burn_in: 20.0,
            sample_interval: 5.0,
            n_samples: 100_000,
            master_seed: 0,
            n_trajectories: 200,
        }
    }
}

impl TwaConfig {
    pub fn validate(&self, params: &ModelParams, mf: &MeanField) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if !(self.dt > 0.0) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        let scale = mf.un0(params.u).max(mf.delta.abs()).max(1.0) / params.gamma;
        if self.dt * scale > STEP_BOUND * (1.0 + 1e-12) {
            return bad(format!(
                "dt = {} exceeds {} / max(U n0, |Delta|, gamma) = {}",
                self.dt,
                STEP_BOUND,
                STEP_BOUND / scale
            ));
        }
        if !(self.sample_interval >= 1.0) {
            return bad(format!("sample_interval must be >= 1, got {}", self.sample_interval));
        }
        if !(self.burn_in >= 0.0) {
            return bad(format!("burn_in must be non-negative, got {}", self.burn_in));
        }
        if self.n_trajectories == 0 || self.n_samples < self.n_trajectories {
            return bad(format!(
                "need 1 <= n_trajectories <= n_samples, got {} and {}",
                self.n_trajectories, self.n_samples
            ));
        }
        Ok(())
    }

    /// Samples taken by trajectory `index`.
    pub fn samples_for(&self, index: usize) -> usize {
        let base = self.n_samples / self.n_trajectories;
        base + usize::from(index < self.n_samples % self.n_trajectories)
    }
}

/// Random stream of one trajectory: ChaCha8 keyed by the master seed,
/// with the trajectory index as stream id.
pub fn trajectory_rng(master_seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index as u64);
    rng
}

/// Precomputed propagators for a fixed step.
pub struct TwaStepper {
    l: usize,
    dt: f64,
    u: f64,
    linear: Vec<Complex64>,
    drive_kick: Complex64,
    noise_sd: f64,
    blowup_sq: f64,
    norm: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
}

impl TwaStepper {
    pub fn new(params: &ModelParams, mf: &MeanField, dt: f64) -> Self {
        let grid = Grid::new(params.l);
        let l = params.l;
        let gamma = params.gamma;
        let mut linear = Vec::with_capacity(l);
        let mut kick = Complex64::new(0.0, 0.0);
        for i in 0..l {
            let rate = Complex64::new(-0.5 * gamma, mf.bare_delta + 2.0 * params.j * grid.k(i).cos());
            let prop = (rate * dt).exp();
            linear.push(prop);
            if i == 0 {
                let b = Complex64::new(0.0, -1.0) * mf.omega * (l as f64).sqrt();
                kick = if rate.norm() * dt < 1e-12 { b * dt } else { (prop - 1.0) / rate * b };
            }
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(l);
        let inverse = planner.plan_fft_inverse(l);
        let scratch = vec![Complex64::new(0.0, 0.0); forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len())];
        TwaStepper {
            l,
            dt,
            u: params.u,
            linear,
            drive_kick: kick,
            noise_sd: (0.25 * (1.0 - (-gamma * dt).exp())).sqrt(),
            blowup_sq: BLOWUP_FACTOR * BLOWUP_FACTOR * mf.n0.max(1.0),
            norm: 1.0 / (l as f64).sqrt(),
            forward,
            inverse,
            scratch,
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Unitary transform to momentum space, in place.
    pub fn to_momentum(&mut self, field: &mut [Complex64]) {
        self.forward.process_with_scratch(field, &mut self.scratch);
        for z in field.iter_mut() {
            *z *= self.norm;
        }
    }

    pub fn to_position(&mut self, field: &mut [Complex64]) {
        self.inverse.process_with_scratch(field, &mut self.scratch);
        for z in field.iter_mut() {
            *z *= self.norm;
        }
    }

    /// Local phase rotation `exp(-i U (|φ|² - 1) h)`. Returns false if a
    /// site exceeds the blowup bound or is not finite.
    fn nonlinear(&self, field: &mut [Complex64], h: f64) -> bool {
        let mut ok = true;
        for z in field.iter_mut() {
            let p = z.norm_sqr();
            if !(p <= self.blowup_sq) {
                ok = false;
            }
            let (s, c) = (-self.u * (p - 1.0) * h).sin_cos();
            *z *= Complex64::new(c, s);
        }
        ok
    }

    fn linear<R: rand::Rng>(&mut self, field: &mut [Complex64], rng: &mut R) {
        self.to_momentum(field);
        for (i, z) in field.iter_mut().enumerate() {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            *z = *z * self.linear[i] + Complex64::new(re, im) * self.noise_sd;
        }
        field[0] += self.drive_kick;
        self.to_position(field);
    }

    /// One Strang step N(dt/2) L(dt) N(dt/2).
    pub fn step<R: rand::Rng>(&mut self, field: &mut [Complex64], rng: &mut R) -> bool {
        self.advance(field, 1, rng)
    }

    /// `steps` consecutive Strang steps with the inner half rotations
    /// fused. Returns false on blowup.
    pub fn advance<R: rand::Rng>(&mut self, field: &mut [Complex64], steps: usize, rng: &mut R) -> bool {
        debug_assert_eq!(field.len(), self.l);
        if steps == 0 {
            return true;
        }
        let mut ok = self.nonlinear(field, 0.5 * self.dt);
        for s in 0..steps {
            self.linear(field, rng);
            let h = if s + 1 == steps { 0.5 * self.dt } else { self.dt };
            ok &= self.nonlinear(field, h);
            if !ok {
                return false;
            }
        }
        ok
    }
}

/// One Strang step of the stochastic field equation, built from scratch.
/// Prefer [`TwaStepper`] in loops.
pub fn step_trajectory<R: rand::Rng>(
    params: &ModelParams,
    mf: &MeanField,
    field: &mut [Complex64],
    dt: f64,
    rng: &mut R,
) -> Result<()> {
    if field.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidParams("field is not finite".into()));
    }
    let mut stepper = TwaStepper::new(params, mf, dt);
    if stepper.step(field, rng) {
        Ok(())
    } else {
        Err(Error::NumericalBlowup { trajectory: 0, t: dt })
    }
}

/// Mean field plus independent vacuum noise of variance ½ per mode.
pub fn initial_field<R: rand::Rng>(l: usize, mf: &MeanField, rng: &mut R) -> Vec<Complex64> {
    let sd = 0.5f64.sqrt() * std::f64::consts::FRAC_1_SQRT_2;
    (0..l)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            mf.psi0 + Complex64::new(re, im) * sd
        })
        .collect()
}

#[derive(Debug, Clone)]
struct Moments {
    power: Vec<Blocking>,
    zero_amplitude: Complex64,
    samples: usize,
}

impl Moments {
    fn new(l: usize) -> Self {
        Moments {
            power: vec![Blocking::new(); l],
            zero_amplitude: Complex64::new(0.0, 0.0),
            samples: 0,
        }
    }

    fn merge(&mut self, other: &Moments) {
        for (a, b) in self.power.iter_mut().zip(&other.power) {
            a.merge(b);
        }
        self.zero_amplitude += other.zero_amplitude;
        self.samples += other.samples;
    }
}

fn run_trajectory(params: &ModelParams, mf: &MeanField, cfg: &TwaConfig, index: usize) -> Result<Moments> {
    let l = params.l;
    let mut rng = trajectory_rng(cfg.master_seed, index);
    let mut stepper = TwaStepper::new(params, mf, cfg.dt);
    let mut field = initial_field(l, mf, &mut rng);
    let burn = (cfg.burn_in / cfg.dt).round() as usize;
    let every = ((cfg.sample_interval / cfg.dt).round() as usize).max(1);
    let blowup = |steps: usize| Error::NumericalBlowup { trajectory: index, t: steps as f64 * cfg.dt };
    if !stepper.advance(&mut field, burn, &mut rng) {
        return Err(blowup(burn));
    }
    let mut moments = Moments::new(l);
    let mut spectrum = vec![Complex64::new(0.0, 0.0); l];
    for s in 0..cfg.samples_for(index) {
        if s > 0 && !stepper.advance(&mut field, every, &mut rng) {
            return Err(blowup(burn + s * every));
        }
        spectrum.copy_from_slice(&field);
        stepper.to_momentum(&mut spectrum);
        for (acc, z) in moments.power.iter_mut().zip(&spectrum) {
            acc.push(z.norm_sqr());
        }
        moments.zero_amplitude += spectrum[0];
        moments.samples += 1;
    }
    Ok(moments)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryEnsembleResult {
    /// Vacuum-subtracted occupations in slot order. Slot 0 holds the
    /// connected part `<|φ_0|²> - |<φ_0>|² - ½`.
    pub n_k: Vec<f64>,
    pub stderr_k: Vec<f64>,
    /// Coherent density `|<φ_0>|² / L` carried by the zero mode.
    pub condensate_density: f64,
    /// Total zero-mode density `<|φ_0|²> / L`.
    pub condensate_power: f64,
    /// Largest blocking inflation factor over modes.
    pub max_inflation: f64,
    pub samples_used: usize,
    pub config: TwaConfig,
    pub wall_seconds: f64,
}

/// Sample the steady-state momentum distribution. Trajectories run in
/// parallel batches and are merged in index order, so the result does
/// not depend on the thread count.
pub fn simulate_ensemble(params: &ModelParams, mf: &MeanField, cfg: &TwaConfig) -> Result<TrajectoryEnsembleResult> {
    params.validate()?;
    cfg.validate(params, mf)?;
    let start = Instant::now();
    let l = params.l;
    let mut total = Moments::new(l);
    let mut first = 0;
    while first < cfg.n_trajectories {
        let last = (first + BATCH).min(cfg.n_trajectories);
        let batch: Vec<Result<Moments>> = (first..last)
            .into_par_iter()
            .map(|i| run_trajectory(params, mf, cfg, i))
            .collect();
        for m in batch {
            total.merge(&m?);
        }
        first = last;
    }

    let samples = total.samples as f64;
    let mean_zero = total.zero_amplitude / samples;
    let mut n_k: Vec<f64> = total.power.iter().map(|b| b.mean() - 0.5).collect();
    n_k[0] -= mean_zero.norm_sqr();
    let stderr_k = total.power.iter().map(|b| b.stderr()).collect();
    let max_inflation = total
        .power
        .iter()
        .map(|b| b.inflation())
        .filter(|x| x.is_finite())
        .fold(1.0, f64::max);
    Ok(TrajectoryEnsembleResult {
        n_k,
        stderr_k,
        condensate_density: mean_zero.norm_sqr() / l as f64,
        condensate_power: total.power[0].mean() / l as f64,
        max_inflation,
        samples_used: total.samples,
        config: cfg.clone(),
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}
