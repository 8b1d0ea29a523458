//! Linear response of the fluctuation spectrum to static on-site disorder.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::bogoliubov::BogoliubovTables;
use crate::error::{Error, Result};
use crate::mean_field::MeanField;

/// Peak height of the scattering signature used when no correlation run
/// is supplied.
pub const LITERATURE_PEAK: f64 = 2e-3;

/// Random potential in units of γ. `v_k` is in slot order with
/// `V_j = L^{-1/2} sum_k V_k e^{ikj}`; the uniform part is removed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DisorderPotential {
    pub v_site: Vec<f64>,
    pub v_k: Vec<Complex64>,
    pub sigma: f64,
    pub seed: u64,
}

pub fn sample_potential(l: usize, sigma: f64, seed: u64) -> Result<DisorderPotential> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParams(format!("sigma must be finite and >= 0, got {sigma}")));
    }
    if l == 0 {
        return Err(Error::InvalidParams("empty chain".into()));
    }
    let mut v_site = vec![0.0; l];
    if sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, sigma).expect("sigma checked");
        for v in v_site.iter_mut() {
            *v = normal.sample(&mut rng);
        }
        let mean = v_site.iter().sum::<f64>() / l as f64;
        for v in v_site.iter_mut() {
            *v -= mean;
        }
    }
    let mut v_k: Vec<Complex64> = v_site.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(l).process(&mut v_k);
    let norm = 1.0 / (l as f64).sqrt();
    for z in v_k.iter_mut() {
        *z *= norm;
    }
    v_k[0] = Complex64::new(0.0, 0.0);
    Ok(DisorderPotential { v_site, v_k, sigma, seed })
}

/// Occupation response from the closed form and from the 2×2 system.
/// Slot 0 is zero in both.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DisorderResponse {
    pub closed_form: Vec<f64>,
    pub solved: Vec<f64>,
}

impl DisorderResponse {
    pub fn max_relative_gap(&self) -> f64 {
        self.closed_form
            .iter()
            .zip(&self.solved)
            .filter(|(a, _)| **a > 0.0)
            .map(|(a, b)| (a - b).abs() / a)
            .fold(0.0, f64::max)
    }
}

/// Closed-form response `|V_k ψ0|² (ε² + γ²/4) / (ω² + γ²/4)²`.
pub fn closed_form_response(v_k: Complex64, mf: &MeanField, tables: &BogoliubovTables, k: usize) -> f64 {
    let g2 = 0.25 * tables.gamma * tables.gamma;
    let eps = tables.eps[k];
    let w2 = tables.omega[k] * tables.omega[k];
    (v_k * mf.psi0).norm_sqr() * (eps * eps + g2) / ((w2 + g2) * (w2 + g2))
}

/// Solve `L_k (δψ_k, δψ*_{-k}) = (-V_k ψ0, V_k ψ0*)` by Cramer's rule.
pub fn solve_response(v_k: Complex64, mf: &MeanField, tables: &BogoliubovTables, k: usize) -> Result<Complex64> {
    let half = Complex64::new(0.0, 0.5 * tables.gamma);
    let a = tables.eps[k] + tables.disp.un0;
    let pair = tables.disp.un0 * (mf.psi0 / mf.psi0.norm()).powi(2);
    let m11 = a - half;
    let m12 = pair;
    let m21 = -pair.conj();
    let m22 = -a - half;
    let det = m11 * m22 - m12 * m21;
    if det.norm() < 1e-14 {
        return Err(Error::SingularResponse { k: tables.k[k], det: det.norm() });
    }
    let s1 = -v_k * mf.psi0;
    let s2 = v_k * mf.psi0.conj();
    Ok((s1 * m22 - m12 * s2) / det)
}

pub fn linear_response(pot: &DisorderPotential, mf: &MeanField, tables: &BogoliubovTables) -> Result<DisorderResponse> {
    let l = tables.eps.len();
    if pot.v_k.len() != l {
        return Err(Error::InvalidParams(format!("potential has {} modes, chain has {l}", pot.v_k.len())));
    }
    let mut closed_form = vec![0.0; l];
    let mut solved = vec![0.0; l];
    for k in 1..l {
        closed_form[k] = closed_form_response(pot.v_k[k], mf, tables, k);
        solved[k] = solve_response(pot.v_k[k], mf, tables, k)?.norm_sqr();
    }
    Ok(DisorderResponse { closed_form, solved })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleResponse {
    pub sigma: f64,
    pub seeds: Vec<u64>,
    pub mean: Vec<f64>,
    /// Response of the first realization.
    pub single: Vec<f64>,
}

/// Disorder-averaged closed-form response over consecutive seeds.
pub fn ensemble_response(
    sigma: f64,
    first_seed: u64,
    n_seeds: usize,
    mf: &MeanField,
    tables: &BogoliubovTables,
) -> Result<EnsembleResponse> {
    if n_seeds == 0 {
        return Err(Error::InvalidParams("need at least one seed".into()));
    }
    let l = tables.eps.len();
    let seeds: Vec<u64> = (0..n_seeds as u64).map(|i| first_seed.wrapping_add(i)).collect();
    let members: Vec<Result<Vec<f64>>> = seeds
        .par_iter()
        .map(|&s| Ok(linear_response(&sample_potential(l, sigma, s)?, mf, tables)?.closed_form))
        .collect();
    let mut mean = vec![0.0; l];
    let mut single = Vec::new();
    for m in members {
        let m = m?;
        for (acc, x) in mean.iter_mut().zip(&m) {
            *acc += x;
        }
        if single.is_empty() {
            single = m;
        }
    }
    for x in mean.iter_mut() {
        *x /= n_seeds as f64;
    }
    Ok(EnsembleResponse { sigma, seeds, mean, single })
}

/// Expected response per unit `sigma²` for white noise with the mean
/// removed, `E|V_k|² = sigma² (1 - 1/L)`.
pub fn expected_response(mf: &MeanField, tables: &BogoliubovTables, sigma: f64) -> Vec<f64> {
    let l = tables.eps.len();
    let var = sigma * sigma * (1.0 - 1.0 / l as f64);
    (0..l)
        .map(|k| if k == 0 { 0.0 } else { closed_form_response(Complex64::new(var.sqrt(), 0.0), mf, tables, k) })
        .collect()
}

/// Variance over modes of `response / expected`, a measure of how
/// spiky a (possibly averaged) response is.
pub fn spikiness(response: &[f64], expected: &[f64]) -> f64 {
    let ratios: Vec<f64> = response
        .iter()
        .zip(expected)
        .skip(1)
        .filter(|(_, e)| **e > 0.0)
        .map(|(r, e)| r / e)
        .collect();
    let n = ratios.len() as f64;
    let mean = ratios.iter().sum::<f64>() / n;
    ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Largest tolerable disorder amplitude, `omega_peak sqrt(dn_peak / n0)`,
/// in the units of `omega_peak`.
pub fn disorder_threshold(omega_peak: f64, dn_peak: f64, n0: f64) -> Result<f64> {
    if !(omega_peak > 0.0 && dn_peak >= 0.0 && n0 > 0.0) {
        return Err(Error::InvalidParams(format!(
            "threshold needs omega_peak > 0, dn_peak >= 0, n0 > 0 (got {omega_peak}, {dn_peak}, {n0})"
        )));
    }
    Ok(omega_peak * (dn_peak / n0).sqrt())
}

/// Slot and value of the largest positive deviation `n_k - n_k^bog`,
/// excluding the condensate mode.
pub fn peak_deviation(dn: &[f64]) -> Option<(usize, f64)> {
    dn.iter()
        .enumerate()
        .skip(1)
        .filter(|(_, v)| v.is_finite())
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, v)| (i, *v))
}
