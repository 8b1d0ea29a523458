//! Adaptive Dormand-Prince 5(4) integrator over complex state vectors.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    /// Smallest admissible step before giving up.
    pub h_min: f64,
    pub h_max: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rtol: 1e-8,
            atol: 1e-10,
            h_min: 1e-8,
            h_max: 0.5,
        }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// fifth minus fourth order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// First-same-as-last Dormand-Prince stepper. `f(t, y, dy)` writes the
/// derivative into `dy`.
pub struct DormandPrince<F> {
    f: F,
    tol: Tolerances,
    pub t: f64,
    pub y: Vec<Complex64>,
    pub h: f64,
    k: [Vec<Complex64>; 7],
    scratch: Vec<Complex64>,
    y_new: Vec<Complex64>,
    fresh: bool,
    pub accepted: usize,
    pub rejected: usize,
}

impl<F> DormandPrince<F>
where
    F: FnMut(f64, &[Complex64], &mut [Complex64]),
{
    pub fn new(f: F, t0: f64, y0: Vec<Complex64>, h0: f64, tol: Tolerances) -> Self {
        let n = y0.len();
        let z = || vec![Complex64::new(0.0, 0.0); n];
        DormandPrince {
            f,
            tol,
            t: t0,
            y: y0,
            h: h0.min(tol.h_max),
            k: [z(), z(), z(), z(), z(), z(), z()],
            scratch: z(),
            y_new: z(),
            fresh: false,
            accepted: 0,
            rejected: 0,
        }
    }

    fn stage(&mut self, coeffs: &[(usize, f64)], h: f64) {
        for i in 0..self.y.len() {
            let mut acc = Complex64::new(0.0, 0.0);
            for &(s, a) in coeffs {
                acc += self.k[s][i] * a;
            }
            self.scratch[i] = self.y[i] + acc * h;
        }
    }

    /// Attempt steps until one is accepted or `t_stop` is reached.
    pub fn step(&mut self, t_stop: f64) -> Result<()> {
        if !self.fresh {
            (self.f)(self.t, &self.y, &mut self.k[0]);
            self.fresh = true;
        }
        loop {
            let mut h = self.h.min(t_stop - self.t);
            let clipped = h < self.h;
            if h <= 0.0 {
                return Ok(());
            }
            let t = self.t;
            self.stage(&[(0, A21)], h);
            (self.f)(t + C2 * h, &self.scratch, &mut self.k[1]);
            self.stage(&[(0, A31), (1, A32)], h);
            (self.f)(t + C3 * h, &self.scratch, &mut self.k[2]);
            self.stage(&[(0, A41), (1, A42), (2, A43)], h);
            (self.f)(t + C4 * h, &self.scratch, &mut self.k[3]);
            self.stage(&[(0, A51), (1, A52), (2, A53), (3, A54)], h);
            (self.f)(t + C5 * h, &self.scratch, &mut self.k[4]);
            self.stage(&[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)], h);
            (self.f)(t + h, &self.scratch, &mut self.k[5]);
            self.stage(&[(0, B1), (2, B3), (3, B4), (4, B5), (5, B6)], h);
            std::mem::swap(&mut self.scratch, &mut self.y_new);
            (self.f)(t + h, &self.y_new, &mut self.k[6]);

            let mut sum = 0.0;
            for i in 0..self.y.len() {
                let k = &self.k;
                let e = (k[0][i] * E1
                    + k[2][i] * E3
                    + k[3][i] * E4
                    + k[4][i] * E5
                    + k[5][i] * E6
                    + k[6][i] * E7)
                    * h;
                let sc = self.tol.atol + self.tol.rtol * self.y[i].norm().max(self.y_new[i].norm());
                sum += (e.norm() / sc).powi(2);
            }
            let err = (sum / self.y.len().max(1) as f64).sqrt();
            if !err.is_finite() {
                h *= 0.1;
                self.h = h;
                self.rejected += 1;
                if h < self.tol.h_min {
                    return Err(Error::StiffnessFailure { t, h });
                }
                continue;
            }
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            if err <= 1.0 {
                self.t = if clipped { t_stop } else { t + h };
                std::mem::swap(&mut self.y, &mut self.y_new);
                self.k.swap(0, 6);
                self.accepted += 1;
                if !clipped {
                    self.h = (h * factor).min(self.tol.h_max);
                }
                return Ok(());
            }
            self.rejected += 1;
            self.h = h * factor.min(1.0);
            if self.h < self.tol.h_min {
                return Err(Error::StiffnessFailure { t, h: self.h });
            }
        }
    }

    /// Integrate up to exactly `t_stop`.
    pub fn advance_to(&mut self, t_stop: f64) -> Result<()> {
        while self.t < t_stop {
            self.step(t_stop)?;
        }
        Ok(())
    }

    pub fn derivative(&mut self) -> Vec<Complex64> {
        let mut dy = vec![Complex64::new(0.0, 0.0); self.y.len()];
        (self.f)(self.t, &self.y, &mut dy);
        dy
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_rotation_and_decay() {
        // dy/dt = (-0.3 - 2i) y
        let lam = Complex64::new(-0.3, -2.0);
        let f = move |_t: f64, y: &[Complex64], dy: &mut [Complex64]| dy[0] = lam * y[0];
        let y0 = vec![Complex64::new(1.0, 0.5)];
        let mut dp = DormandPrince::new(f, 0.0, y0.clone(), 0.01, Tolerances::default());
        dp.advance_to(10.0).unwrap();
        let exact = y0[0] * (lam * 10.0).exp();
        assert!((dp.y[0] - exact).norm() < 1e-8, "{}", (dp.y[0] - exact).norm());
        assert_eq!(dp.t, 10.0);
    }

    #[test]
    fn driven_fixed_point() {
        let f = |_t: f64, y: &[Complex64], dy: &mut [Complex64]| {
            dy[0] = -y[0] + Complex64::new(2.0, 1.0);
            dy[1] = Complex64::new(0.0, -1.0) * y[1] * y[1].norm_sqr() - 0.5 * y[1];
        };
        let y0 = vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)];
        let mut dp = DormandPrince::new(f, 0.0, y0, 0.1, Tolerances::default());
        dp.advance_to(40.0).unwrap();
        assert!((dp.y[0] - Complex64::new(2.0, 1.0)).norm() < 1e-9);
        assert!(dp.y[1].norm() - (-20.0f64).exp() < 1e-9);
    }

    #[test]
    fn stiff_blowup_reports_failure() {
        let f = |_t: f64, y: &[Complex64], dy: &mut [Complex64]| dy[0] = y[0] * y[0] * y[0];
        let mut dp = DormandPrince::new(
            f,
            0.0,
            vec![Complex64::new(1.0, 0.0)],
            0.1,
            Tolerances::default(),
        );
        // blows up at t = 1/2
        assert!(matches!(dp.advance_to(1.0), Err(Error::StiffnessFailure { .. })));
    }
}
