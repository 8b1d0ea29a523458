//! Run configuration: one TOML document with a section per module.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hc::{HcOptions, Scheme, DEFAULT_CAP};
use crate::hoc::HocOptions;
use crate::params::{Branch, Detuning, Drive, ModelParams};
use crate::twa::TwaConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Module {
    Bogoliubov,
    Contour,
    Twa,
    Hoc,
    HcCompare,
    Disorder,
    Observables,
}

impl Module {
    pub fn name(self) -> &'static str {
        match self {
            Module::Bogoliubov => "bogoliubov",
            Module::Contour => "contour",
            Module::Twa => "twa",
            Module::Hoc => "hoc",
            Module::HcCompare => "hc-compare",
            Module::Disorder => "disorder",
            Module::Observables => "observables",
        }
    }
}

/// Flat model description. Exactly one detuning (`delta` renormalized or
/// `bare_delta`) and exactly one of `n0`, `un0`, `omega` must be set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub l: usize,
    pub j: f64,
    pub u: f64,
    #[serde(default = "one")]
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bare_delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub un0: Option<f64>,
    /// Drive amplitude as `[re, im]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branch: Option<Branch>,
}

fn one() -> f64 {
    1.0
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            l: 128,
            j: 30.0,
            u: 0.1,
            gamma: 1.0,
            delta: Some(-10.0),
            bare_delta: None,
            n0: None,
            un0: Some(10.0),
            omega: None,
            branch: None,
        }
    }
}

impl ModelSection {
    pub fn to_params(&self) -> Result<ModelParams> {
        let detuning = match (self.delta, self.bare_delta) {
            (Some(d), None) => Detuning::Renormalized(d),
            (None, Some(d)) => Detuning::Bare(d),
            _ => return Err(Error::Config("set exactly one of delta, bare_delta".into())),
        };
        let drive = match (self.n0, self.un0, self.omega) {
            (Some(n0), None, None) => Drive::Density(n0),
            (None, Some(un0), None) => {
                if !(self.u > 0.0) {
                    return Err(Error::Config("un0 needs a positive u".into()));
                }
                Drive::Density(un0 / self.u)
            }
            (None, None, Some([re, im])) => Drive::Amplitude(Complex64::new(re, im)),
            _ => return Err(Error::Config("set exactly one of n0, un0, omega".into())),
        };
        let p = ModelParams {
            l: self.l,
            j: self.j,
            u: self.u,
            gamma: self.gamma,
            detuning,
            drive,
            branch: self.branch,
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BogoliubovSection {
    /// Also integrate the second-order equations and report the gap to
    /// the closed form.
    pub ode: bool,
    pub t_end: f64,
    pub dt: f64,
}

impl Default for BogoliubovSection {
    fn default() -> Self {
        BogoliubovSection { ode: false, t_end: 60.0, dt: 0.002 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContourSection {
    pub grid_n: usize,
    /// Detuning sweep `[from, to]`; no sweep when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<[f64; 2]>,
    pub sweep_steps: usize,
}

impl Default for ContourSection {
    fn default() -> Self {
        ContourSection { grid_n: 512, sweep: None, sweep_steps: 41 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HcSection {
    pub schemes: Vec<Scheme>,
    pub couplings: Vec<f64>,
    pub cap: usize,
    pub first_order: bool,
    pub quadratic_only: bool,
}

impl Default for HcSection {
    fn default() -> Self {
        HcSection {
            schemes: vec![Scheme::Fc, Scheme::Hc(2), Scheme::Hc(3), Scheme::Hc(4), Scheme::Hc(5)],
            couplings: vec![0.02, 0.1],
            cap: DEFAULT_CAP,
            first_order: true,
            quadratic_only: false,
        }
    }
}

impl HcSection {
    pub fn options(&self) -> HcOptions {
        HcOptions { cap: self.cap, first_order: self.first_order, quadratic_only: self.quadratic_only }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DisorderSection {
    pub sigma: f64,
    pub seeds: usize,
    /// Momentum distribution CSV from a `hoc` run, used for the peak
    /// height in the threshold estimate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nk_file: Option<PathBuf>,
    /// Peak frequency in units of gamma when no `nk_file` is given.
    pub omega_peak: f64,
}

impl Default for DisorderSection {
    fn default() -> Self {
        DisorderSection { sigma: 0.1, seeds: 100, nk_file: None, omega_peak: 20.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservablesSection {
    /// Occupation of the probed mode. Ignored when `nk_file` is given.
    pub n_k: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nk_file: Option<PathBuf>,
    /// Probed momentum; the lower Beliaev edge when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    pub delta_k_frac: f64,
    pub efficiency: f64,
}

impl Default for ObservablesSection {
    fn default() -> Self {
        ObservablesSection { n_k: 0.1, nk_file: None, k: None, delta_k_frac: 0.025, efficiency: 1.0 }
    }
}

/// TWA sampling options; the master seed is the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwaSection {
    pub dt: f64,
    pub burn_in: f64,
    pub sample_interval: f64,
    pub n_samples: usize,
    pub n_trajectories: usize,
}

impl Default for TwaSection {
    fn default() -> Self {
        let c = TwaConfig::default();
        TwaSection {
            dt: c.dt,
            burn_in: c.burn_in,
            sample_interval: c.sample_interval,
            n_samples: c.n_samples,
            n_trajectories: c.n_trajectories,
        }
    }
}

impl TwaSection {
    pub fn to_config(&self, seed: u64) -> TwaConfig {
        TwaConfig {
            dt: self.dt,
            burn_in: self.burn_in,
            sample_interval: self.sample_interval,
            n_samples: self.n_samples,
            master_seed: seed,
            n_trajectories: self.n_trajectories,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub module: Module,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub deterministic: bool,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units_file: Option<PathBuf>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub bogoliubov: BogoliubovSection,
    #[serde(default)]
    pub contour: ContourSection,
    #[serde(default)]
    pub twa: TwaSection,
    #[serde(default)]
    pub hoc: HocOptions,
    #[serde(default)]
    pub hc: HcSection,
    #[serde(default)]
    pub disorder: DisorderSection,
    #[serde(default)]
    pub observables: ObservablesSection,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn new(module: Module) -> Self {
        RunConfig {
            module,
            seed: 0,
            deterministic: false,
            out: default_out(),
            units_file: None,
            model: ModelSection::default(),
            bogoliubov: BogoliubovSection::default(),
            contour: ContourSection::default(),
            twa: TwaSection::default(),
            hoc: HocOptions::default(),
            hc: HcSection::default(),
            disorder: DisorderSection::default(),
            observables: ObservablesSection::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}
