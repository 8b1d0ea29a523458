//! Conversion of lattice results into far-field emission observables.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reduced Planck constant in eV s.
pub const HBAR_EV_S: f64 = 6.582_119_569e-16;
/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Allowed mismatch between `hbar / lifetime` and the linewidth.
const LIFETIME_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicalUnits {
    /// Linewidth `hbar gamma` in μeV.
    pub hbar_gamma_uev: f64,
    /// Laser photon energy in eV.
    pub omega_l_ev: f64,
    /// Cavity spacing in μm.
    pub dx_um: f64,
    /// Photon lifetime in ps.
    pub lifetime_ps: f64,
}

impl Default for PhysicalUnits {
    fn default() -> Self {
        PhysicalUnits {
            hbar_gamma_uev: 33.0,
            omega_l_ev: 1.6,
            dx_um: 1.0,
            lifetime_ps: 20.0,
        }
    }
}

impl PhysicalUnits {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("hbar_gamma_uev", self.hbar_gamma_uev),
            ("omega_l_ev", self.omega_l_ev),
            ("dx_um", self.dx_um),
            ("lifetime_ps", self.lifetime_ps),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        let from_lifetime = HBAR_EV_S / (self.lifetime_ps * 1e-12) * 1e6;
        let rel = (from_lifetime / self.hbar_gamma_uev - 1.0).abs();
        if rel > LIFETIME_TOLERANCE {
            return Err(Error::Config(format!(
                "lifetime {} ps implies hbar/tau = {from_lifetime:.2} μeV, inconsistent with linewidth {} μeV",
                self.lifetime_ps, self.hbar_gamma_uev
            )));
        }
        Ok(())
    }

    /// Parse a units file (TOML, every key optional) and validate it.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let units: PhysicalUnits = toml::from_str(text).map_err(|e| Error::Config(format!("units file: {e}")))?;
        units.validate()?;
        Ok(units)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Loss rate in s⁻¹, taken from the photon lifetime.
    pub fn gamma_per_second(&self) -> f64 {
        1e12 / self.lifetime_ps
    }

    /// Energy in units of `hbar gamma` to μeV.
    pub fn to_uev(&self, energy: f64) -> f64 {
        energy * self.hbar_gamma_uev
    }

    pub fn from_uev(&self, energy_uev: f64) -> f64 {
        energy_uev / self.hbar_gamma_uev
    }

    /// Time in units of `1/gamma` to ps.
    pub fn to_ps(&self, t: f64) -> f64 {
        t * self.lifetime_ps
    }

    pub fn from_ps(&self, t_ps: f64) -> f64 {
        t_ps / self.lifetime_ps
    }
}

/// Far-field emission angle of lattice momentum `k`, in degrees, from
/// `sin θ = c k / (ω_L Δx)`.
pub fn angle_of_mode(k: f64, units: &PhysicalUnits) -> Result<f64> {
    let omega_l = units.omega_l_ev / HBAR_EV_S;
    let sin_theta = SPEED_OF_LIGHT * k / (omega_l * units.dx_um * 1e-6);
    if !(sin_theta.abs() <= 1.0) {
        return Err(Error::Evanescent { k, sin_theta });
    }
    Ok(sin_theta.asin().to_degrees())
}

/// Photons per second emitted into a momentum bin of width
/// `2π delta_k_frac` around a mode of occupation `n_k`, from the density
/// `dΦ/dk = L n_k γ / 2π`.
pub fn flux_in_bin(n_k: f64, l: usize, delta_k_frac: f64, units: &PhysicalUnits) -> Result<f64> {
    if !(n_k >= 0.0 && n_k.is_finite()) {
        return Err(Error::InvalidParams(format!("occupation {n_k} must be finite and >= 0")));
    }
    if !(delta_k_frac > 0.0 && delta_k_frac <= 1.0) {
        return Err(Error::InvalidParams(format!("bin width {delta_k_frac} must lie in (0, 1]")));
    }
    Ok(l as f64 * n_k * units.gamma_per_second() * delta_k_frac)
}

/// Detector click rate for a given flux.
pub fn click_rate(flux: f64, efficiency: f64) -> f64 {
    efficiency * flux
}
