use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use blandau::config::{Module, RunConfig};
use blandau::hc::Scheme;
use blandau::runner::run;
use blandau::{Branch, Error};

#[derive(Parser, Debug)]
#[command(name = "blandau", version, about = "Steady states of the driven-dissipative Bose-Hubbard chain")]
struct Cli {
    /// TOML run configuration; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Omit wall-clock times so repeated runs give identical files.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// TOML file with physical units (hbar_gamma_uev, omega_l_ev, dx_um, lifetime_ps).
    #[arg(long, global = true)]
    units_file: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

/// Model parameters in units of gamma.
#[derive(Args, Debug, Default)]
struct ModelArgs {
    #[arg(long = "L")]
    l: Option<usize>,
    #[arg(long = "J")]
    j: Option<f64>,
    /// Interaction; `hc-compare` accepts a comma-separated list.
    #[arg(long = "U", value_delimiter = ',')]
    u: Option<Vec<f64>>,
    /// Renormalized detuning (negative).
    #[arg(long = "Delta", allow_hyphen_values = true)]
    delta: Option<f64>,
    /// Bare laser detuning.
    #[arg(long = "delta", allow_hyphen_values = true)]
    bare_delta: Option<f64>,
    #[arg(long = "Un0")]
    un0: Option<f64>,
    #[arg(long)]
    n0: Option<f64>,
    /// Drive amplitude as RE,IM.
    #[arg(long = "Omega", value_delimiter = ',', allow_hyphen_values = true)]
    omega: Option<Vec<f64>>,
    #[arg(long, value_parser = parse_branch)]
    branch: Option<Branch>,
}

fn parse_branch(s: &str) -> Result<Branch, String> {
    match s {
        "upper" => Ok(Branch::Upper),
        "lower" => Ok(Branch::Lower),
        _ => Err(format!("expected upper or lower, got {s:?}")),
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Dispersion and closed-form second-order steady state.
    Bogoliubov {
        #[command(flatten)]
        model: ModelArgs,
        /// Also integrate the second-order equations.
        #[arg(long)]
        ode: bool,
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Resonance contour, extremal momenta, detuning sweep.
    Contour {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        grid_n: Option<usize>,
        /// Sweep the detuning over FROM,TO.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        sweep: Option<Vec<f64>>,
        #[arg(long)]
        sweep_steps: Option<usize>,
    },
    /// Truncated Wigner sampling of the momentum distribution.
    Twa {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        trajectories: Option<usize>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        burn_in: Option<f64>,
        #[arg(long)]
        sample_interval: Option<f64>,
    },
    /// Third-order correlation hierarchy relaxed to its steady state.
    Hoc {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        eps_stop: Option<f64>,
        #[arg(long)]
        t_max: Option<f64>,
        #[arg(long)]
        dt_monitor: Option<f64>,
        /// Freeze third order and back-reaction (Bogoliubov limit).
        #[arg(long)]
        frozen: bool,
    },
    /// Deviation from Bogoliubov theory for several truncation schemes.
    HcCompare {
        #[command(flatten)]
        model: ModelArgs,
        /// Comma-separated schemes, e.g. FC,HC4,HC5.
        #[arg(long, value_delimiter = ',')]
        schemes: Option<Vec<Scheme>>,
        #[arg(long, value_delimiter = ',')]
        couplings: Option<Vec<f64>>,
        #[arg(long)]
        cap: Option<usize>,
        /// Keep only the quadratic Hamiltonian.
        #[arg(long)]
        quadratic_only: bool,
    },
    /// Linear response to static disorder and the tolerance threshold.
    Disorder {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        seeds: Option<usize>,
        /// Momentum distribution from a `hoc` run for the peak height.
        #[arg(long)]
        nk_file: Option<PathBuf>,
        #[arg(long)]
        omega_peak: Option<f64>,
    },
    /// Emission angles and photon flux.
    Observables {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        n_k: Option<f64>,
        #[arg(long)]
        nk_file: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        k: Option<f64>,
        #[arg(long)]
        delta_k_frac: Option<f64>,
        #[arg(long)]
        efficiency: Option<f64>,
    },
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn pair(v: &[f64], flag: &str) -> Result<[f64; 2], Error> {
    match v {
        [a, b] => Ok([*a, *b]),
        _ => Err(Error::Config(format!("{flag} takes two comma-separated values"))),
    }
}

fn apply_model(cfg: &mut RunConfig, m: ModelArgs) -> Result<(), Error> {
    let s = &mut cfg.model;
    set(&mut s.l, m.l);
    set(&mut s.j, m.j);
    match m.u.as_deref() {
        None => {}
        Some([u]) => s.u = *u,
        Some(list) if cfg.module == Module::HcCompare && !list.is_empty() => {
            s.u = list[0];
            cfg.hc.couplings = list.to_vec();
        }
        Some(_) => return Err(Error::Config("--U takes a single value here".into())),
    }
    let s = &mut cfg.model;
    if m.delta.is_some() && m.bare_delta.is_some() {
        return Err(Error::Config("give only one of --Delta, --delta".into()));
    }
    if m.delta.is_some() || m.bare_delta.is_some() {
        s.delta = m.delta;
        s.bare_delta = m.bare_delta;
    }
    let omega = m.omega.map(|v| pair(&v, "--Omega")).transpose()?;
    let drives = [m.n0.is_some(), m.un0.is_some(), omega.is_some()].iter().filter(|b| **b).count();
    if drives > 1 {
        return Err(Error::Config("give only one of --n0, --Un0, --Omega".into()));
    }
    if drives == 1 {
        s.n0 = m.n0;
        s.un0 = m.un0;
        s.omega = omega;
    }
    if m.branch.is_some() {
        s.branch = m.branch;
    }
    Ok(())
}

fn build_config(cli: Cli) -> Result<RunConfig, Error> {
    let module = match &cli.command {
        Command::Bogoliubov { .. } => Module::Bogoliubov,
        Command::Contour { .. } => Module::Contour,
        Command::Twa { .. } => Module::Twa,
        Command::Hoc { .. } => Module::Hoc,
        Command::HcCompare { .. } => Module::HcCompare,
        Command::Disorder { .. } => Module::Disorder,
        Command::Observables { .. } => Module::Observables,
    };
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::new(module),
    };
    cfg.module = module;
    set(&mut cfg.seed, cli.seed);
    cfg.deterministic |= cli.deterministic;
    set(&mut cfg.out, cli.out);
    if cli.units_file.is_some() {
        cfg.units_file = cli.units_file;
    }
    match cli.command {
        Command::Bogoliubov { model, ode, t_end, dt } => {
            apply_model(&mut cfg, model)?;
            cfg.bogoliubov.ode |= ode;
            set(&mut cfg.bogoliubov.t_end, t_end);
            set(&mut cfg.bogoliubov.dt, dt);
        }
        Command::Contour { model, grid_n, sweep, sweep_steps } => {
            apply_model(&mut cfg, model)?;
            set(&mut cfg.contour.grid_n, grid_n);
            if let Some(v) = sweep {
                cfg.contour.sweep = Some(pair(&v, "--sweep")?);
            }
            set(&mut cfg.contour.sweep_steps, sweep_steps);
        }
        Command::Twa { model, samples, trajectories, dt, burn_in, sample_interval } => {
            apply_model(&mut cfg, model)?;
            set(&mut cfg.twa.n_samples, samples);
            set(&mut cfg.twa.n_trajectories, trajectories);
            set(&mut cfg.twa.dt, dt);
            set(&mut cfg.twa.burn_in, burn_in);
            set(&mut cfg.twa.sample_interval, sample_interval);
        }
        Command::Hoc { model, eps_stop, t_max, dt_monitor, frozen } => {
            apply_model(&mut cfg, model)?;
            set(&mut cfg.hoc.eps_stop, eps_stop);
            set(&mut cfg.hoc.t_max, t_max);
            set(&mut cfg.hoc.dt_monitor, dt_monitor);
            if frozen {
                cfg.hoc.evolve_third_order = false;
                cfg.hoc.back_reaction = false;
            }
        }
        Command::HcCompare { model, schemes, couplings, cap, quadratic_only } => {
            apply_model(&mut cfg, model)?;
            set(&mut cfg.hc.schemes, schemes);
            set(&mut cfg.hc.couplings, couplings);
            set(&mut cfg.hc.cap, cap);
            cfg.hc.quadratic_only |= quadratic_only;
        }
        Command::Disorder { model, sigma, seeds, nk_file, omega_peak } => {
            apply_model(&mut cfg, model)?;
            set(&mut cfg.disorder.sigma, sigma);
            set(&mut cfg.disorder.seeds, seeds);
            if nk_file.is_some() {
                cfg.disorder.nk_file = nk_file;
            }
            set(&mut cfg.disorder.omega_peak, omega_peak);
        }
        Command::Observables { model, n_k, nk_file, k, delta_k_frac, efficiency } => {
            apply_model(&mut cfg, model)?;
            set(&mut cfg.observables.n_k, n_k);
            if nk_file.is_some() {
                cfg.observables.nk_file = nk_file;
            }
            if k.is_some() {
                cfg.observables.k = k;
            }
            set(&mut cfg.observables.delta_k_frac, delta_k_frac);
            set(&mut cfg.observables.efficiency, efficiency);
        }
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = build_config(cli).and_then(|cfg| run(&cfg));
    match result {
        Ok(report) => {
            for f in &report.files {
                println!("{}", f.display());
            }
            println!("{}", serde_json::to_string_pretty(&report.summary).unwrap_or_default());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
