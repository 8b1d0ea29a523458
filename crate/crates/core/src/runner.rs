//! Dispatch of a [`RunConfig`] to the solvers and artifact writing.

use std::path::PathBuf;
use std::time::Instant;

use serde_json::json;

use crate::bogoliubov::{
    bogoliubov_steady_state, dispersion_tables, integrate_bogoliubov_odes, quasiparticle_steady_state,
    BogoliubovTables,
};
use crate::config::{Module, RunConfig};
use crate::contour::{resonance_contours, sweep_detuning};
use crate::disorder::{
    disorder_threshold, ensemble_response, expected_response, linear_response, peak_deviation, sample_potential,
    spikiness, LITERATURE_PEAK,
};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::hc::compare_truncations;
use crate::hoc::{evolve_to_steady_state, third_order_map, HocModel};
use crate::mean_field::{solve_mean_field, MeanField};
use crate::observables::{angle_of_mode, click_rate, flux_in_bin, PhysicalUnits};
use crate::output::{read_csv, write_csv, write_json, Metadata, Table};
use crate::params::ModelParams;
use crate::twa::simulate_ensemble;

/// Files written by a run, in the order they were produced.
#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    pub summary: serde_json::Value,
}

struct Context {
    params: ModelParams,
    mf: MeanField,
    tables: BogoliubovTables,
    grid: Grid,
}

impl Context {
    fn new(cfg: &RunConfig) -> Result<Self> {
        let params = cfg.model.to_params()?;
        let mf = solve_mean_field(&params)?;
        let tables = dispersion_tables(&mf, &params)?;
        Ok(Context { grid: Grid::new(params.l), params, mf, tables })
    }
}

/// A CSV table or JSON document waiting for the final metadata.
enum Artifact {
    Csv(&'static str, Table),
    Json(&'static str, serde_json::Value),
}

fn base_metadata(cfg: &RunConfig) -> Result<Metadata> {
    let mut m = Metadata::new();
    m.push("program", concat!("blandau ", env!("CARGO_PKG_VERSION")))
        .push("module", cfg.module.name())
        .push("seed", cfg.seed)
        .push("deterministic", cfg.deterministic);
    if let Some(u) = &cfg.units_file {
        m.push("units_file", u.display());
    }
    m.push_flattened("model", &cfg.model)?;
    match cfg.module {
        Module::Bogoliubov => m.push_flattened("bogoliubov", &cfg.bogoliubov)?,
        Module::Contour => m.push_flattened("contour", &cfg.contour)?,
        Module::Twa => m.push_flattened("twa", &cfg.twa)?,
        Module::Hoc => m.push_flattened("hoc", &cfg.hoc)?,
        Module::HcCompare => m.push_flattened("hc", &cfg.hc)?,
        Module::Disorder => m.push_flattened("disorder", &cfg.disorder)?,
        Module::Observables => m.push_flattened("observables", &cfg.observables)?,
    };
    Ok(m)
}

fn units(cfg: &RunConfig) -> Result<PhysicalUnits> {
    match &cfg.units_file {
        Some(p) => PhysicalUnits::load(p),
        None => Ok(PhysicalUnits::default()),
    }
}

pub fn run(cfg: &RunConfig) -> Result<RunReport> {
    let start = Instant::now();
    let mut meta = base_metadata(cfg)?;
    let ctx = Context::new(cfg)?;
    meta.push("mean_field.n0", ctx.mf.n0)
        .push("mean_field.delta", ctx.mf.delta)
        .push("mean_field.bare_delta", ctx.mf.bare_delta)
        .push("mean_field.omega_re", ctx.mf.omega.re)
        .push("mean_field.omega_im", ctx.mf.omega.im)
        .push("mean_field.branch_stable", ctx.mf.branch_stable);
    let artifacts = match cfg.module {
        Module::Bogoliubov => run_bogoliubov(cfg, &ctx)?,
        Module::Contour => run_contour(cfg, &ctx)?,
        Module::Twa => run_twa(cfg, &ctx)?,
        Module::Hoc => run_hoc(cfg, &ctx)?,
        Module::HcCompare => run_hc(cfg, &ctx)?,
        Module::Disorder => run_disorder(cfg, &ctx)?,
        Module::Observables => run_observables(cfg, &ctx)?,
    };
    if cfg.deterministic {
        meta.push("wall_seconds", "omitted");
    } else {
        meta.push("wall_seconds", start.elapsed().as_secs_f64());
    }
    std::fs::create_dir_all(&cfg.out)?;
    let mut report = RunReport::default();
    for a in artifacts {
        match a {
            Artifact::Csv(name, table) => {
                let path = cfg.out.join(name);
                write_csv(&path, &meta, &table)?;
                report.files.push(path);
            }
            Artifact::Json(name, value) => {
                let path = cfg.out.join(name);
                write_json(&path, &meta, &value)?;
                report.files.push(path);
                report.summary = value;
            }
        }
    }
    Ok(report)
}

fn run_bogoliubov(cfg: &RunConfig, ctx: &Context) -> Result<Vec<Artifact>> {
    let t = &ctx.tables;
    let s = bogoliubov_steady_state(t, &ctx.mf);
    let chi = quasiparticle_steady_state(t);
    let ode = if cfg.bogoliubov.ode {
        Some(integrate_bogoliubov_odes(t, &ctx.mf, cfg.bogoliubov.t_end, cfg.bogoliubov.dt)?)
    } else {
        None
    };
    let mut cols = vec!["k", "eps", "omega", "u", "v", "n", "c_re", "c_im", "n_chi", "c_chi_re", "c_chi_im"];
    if ode.is_some() {
        cols.push("n_ode");
    }
    let mut table = Table::new(&cols);
    for i in ctx.grid.ascending() {
        let mut row = vec![
            t.k[i], t.eps[i], t.omega[i], t.u[i], t.v[i], s.n[i], s.c[i].re, s.c[i].im, chi.n[i], chi.c[i].re,
            chi.c[i].im,
        ];
        if let Some(o) = &ode {
            row.push(o.n[i]);
        }
        table.push(row);
    }
    let ode_gap = ode.as_ref().map(|o| {
        o.n.iter().zip(&s.n).map(|(a, b)| (a - b).abs() / b).fold(0.0, f64::max)
    });
    let summary = json!({
        "n_k0": s.n[0],
        "omega_k0": t.omega[0],
        "max_relative_ode_gap": ode_gap,
    });
    Ok(vec![Artifact::Csv("bogoliubov.csv", table), Artifact::Json("summary.json", summary)])
}

fn run_contour(cfg: &RunConfig, ctx: &Context) -> Result<Vec<Artifact>> {
    let c = resonance_contours(&ctx.tables.disp, cfg.contour.grid_n);
    let mut pts = Table::new(&["piece", "k", "q"]);
    for (i, line) in c.polylines.iter().enumerate() {
        for &(k, q) in line {
            pts.push(vec![i as f64, k, q]);
        }
    }
    let mut out = vec![Artifact::Csv("contour.csv", pts)];
    let mut summary = json!({ "extremal": c.extremal, "points": c.len() });
    if let Some([from, to]) = cfg.contour.sweep {
        let d = &ctx.tables.disp;
        let sweep = sweep_detuning(d.j, d.un0, (from, to), cfg.contour.sweep_steps);
        let mut t = Table::new(&["delta", "q_min", "k_min", "q_max", "k_max"]);
        for r in &sweep.rows {
            let e = r.extremal.map_or([f64::NAN; 4], |e| [e.q_min, e.k_min, e.q_max, e.k_max]);
            t.push(vec![r.delta, e[0], e[1], e[2], e[3]]);
        }
        out.push(Artifact::Csv("sweep.csv", t));
        summary["delta0"] = json!(sweep.delta0);
    }
    out.push(Artifact::Json("summary.json", summary));
    Ok(out)
}

fn run_twa(cfg: &RunConfig, ctx: &Context) -> Result<Vec<Artifact>> {
    let r = simulate_ensemble(&ctx.params, &ctx.mf, &cfg.twa.to_config(cfg.seed))?;
    let bog = bogoliubov_steady_state(&ctx.tables, &ctx.mf).n;
    let mut t = Table::new(&["k", "n", "stderr", "n_bog", "z"]);
    let mut min_z = f64::INFINITY;
    for i in ctx.grid.ascending().filter(|&i| i != 0) {
        let z = r.n_k[i] / r.stderr_k[i];
        min_z = min_z.min(z);
        t.push(vec![ctx.grid.k(i), r.n_k[i], r.stderr_k[i], bog[i], z]);
    }
    let summary = json!({
        "condensate_density": r.condensate_density,
        "condensate_power": r.condensate_power,
        "zero_mode_connected": r.n_k[0],
        "max_inflation": r.max_inflation,
        "samples_used": r.samples_used,
        "min_n_over_stderr": min_z,
    });
    Ok(vec![Artifact::Csv("twa_nk.csv", t), Artifact::Json("summary.json", summary)])
}

fn run_hoc(cfg: &RunConfig, ctx: &Context) -> Result<Vec<Artifact>> {
    let model = HocModel::new(&ctx.params, &ctx.mf, &ctx.tables, cfg.hoc);
    let (state, trace) = evolve_to_steady_state(&model, &ctx.tables)?;
    let bog = bogoliubov_steady_state(&ctx.tables, &ctx.mf).n;
    let mut nk = Table::new(&["k", "n", "n_bog", "dn", "rel_dn"]);
    for i in ctx.grid.ascending() {
        let dn = state.n[i] - bog[i];
        nk.push(vec![ctx.grid.k(i), state.n[i], bog[i], dn, dn / bog[i]]);
    }
    let map = third_order_map(&state, &ctx.tables.disp, ctx.grid);
    let l = ctx.grid.len();
    let mut m = Table::new(&["k", "q", "abs_m"]);
    for a in ctx.grid.ascending() {
        for b in ctx.grid.ascending() {
            m.push(vec![ctx.grid.k(a), ctx.grid.k(b), map.magnitude[a * l + b]]);
        }
    }
    let mut tr = Table::new(&["t", "delta"]);
    for (t, d) in trace.times.iter().zip(&trace.delta) {
        tr.push(vec![*t, *d]);
    }
    let summary = json!({
        "psi0": [state.psi0.re, state.psi0.im],
        "t_final": state.t,
        "converged": trace.converged,
        "final_delta": trace.delta.last(),
        "kappa_fit": trace.kappa_fit,
        "accepted_steps": trace.accepted_steps,
        "rejected_steps": trace.rejected_steps,
        "symmetry": trace.symmetry,
        "contour_mean_abs_m": map.contour_mean,
        "background_median_abs_m": map.background_median,
        "enhancement": map.enhancement(),
        "peak_dn": peak_deviation(&state.n.iter().zip(&bog).map(|(a, b)| a - b).collect::<Vec<_>>()),
    });
    Ok(vec![
        Artifact::Csv("hoc_nk.csv", nk),
        Artifact::Csv("hoc_m.csv", m),
        Artifact::Csv("hoc_trace.csv", tr),
        Artifact::Json("summary.json", summary),
    ])
}

fn run_hc(cfg: &RunConfig, ctx: &Context) -> Result<Vec<Artifact>> {
    let rows = compare_truncations(&ctx.params, &cfg.hc.schemes, &cfg.hc.couplings, &cfg.hc.options())?;
    let mut t = Table::new(&["u", "order", "k", "dn"]);
    let mut dn = Table::new(&["u", "order", "delta_n"]);
    for r in &rows {
        let order = match r.scheme {
            crate::hc::Scheme::Fc => 0.0,
            crate::hc::Scheme::Hc(n) => n as f64,
        };
        dn.push(vec![r.u, order, r.delta_n]);
        for i in ctx.grid.ascending() {
            t.push(vec![r.u, order, ctx.grid.k(i), r.dn[i]]);
        }
    }
    let summary: Vec<_> = rows
        .iter()
        .map(|r| json!({ "scheme": r.scheme.to_string(), "u": r.u, "delta_n": r.delta_n }))
        .collect();
    Ok(vec![
        Artifact::Csv("hc_delta_n.csv", dn),
        Artifact::Csv("hc_dn_k.csv", t),
        Artifact::Json("summary.json", json!(summary)),
    ])
}

/// Largest positive `n - n_bog` away from `k = 0` in a momentum
/// distribution file, with its momentum.
fn peak_from_file(path: &std::path::Path) -> Result<(f64, f64)> {
    let (_, t) = read_csv(path)?;
    let missing = |c: &str| Error::Config(format!("{}: no column {c:?}", path.display()));
    let k = t.column("k").ok_or_else(|| missing("k"))?;
    let dn = t.column("dn").ok_or_else(|| missing("dn"))?;
    k.iter()
        .zip(&dn)
        .filter(|(k, d)| **k != 0.0 && d.is_finite())
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, d)| (*k, *d))
        .ok_or_else(|| Error::Config(format!("{}: no modes", path.display())))
}

fn run_disorder(cfg: &RunConfig, ctx: &Context) -> Result<Vec<Artifact>> {
    let d = &cfg.disorder;
    let units = units(cfg)?;
    let pot = sample_potential(ctx.params.l, d.sigma, cfg.seed)?;
    let single = linear_response(&pot, &ctx.mf, &ctx.tables)?;
    let ens = ensemble_response(d.sigma, cfg.seed, d.seeds, &ctx.mf, &ctx.tables)?;
    let expected = expected_response(&ctx.mf, &ctx.tables, d.sigma);
    let mut t = Table::new(&["k", "closed_form", "solved", "ensemble_mean", "expected"]);
    for i in ctx.grid.ascending().filter(|&i| i != 0) {
        t.push(vec![ctx.grid.k(i), single.closed_form[i], single.solved[i], ens.mean[i], expected[i]]);
    }
    let (omega_peak, dn_peak, source) = match &d.nk_file {
        Some(p) => {
            let (k, dn) = peak_from_file(p)?;
            (ctx.tables.disp.omega(k), dn, format!("peak of {}", p.display()))
        }
        None => (d.omega_peak, LITERATURE_PEAK, "literature estimate".to_string()),
    };
    let sigma_max = disorder_threshold(omega_peak, dn_peak, ctx.mf.n0)?;
    let summary = json!({
        "max_relative_gap": single.max_relative_gap(),
        "spikiness_single": spikiness(&ens.single, &expected),
        "spikiness_mean": spikiness(&ens.mean, &expected),
        "threshold": {
            "omega_peak": omega_peak,
            "dn_peak": dn_peak,
            "n0": ctx.mf.n0,
            "source": source,
            "sigma_max": sigma_max,
            "sigma_max_uev": units.to_uev(sigma_max),
            "omega_peak_uev": units.to_uev(omega_peak),
        },
    });
    Ok(vec![Artifact::Csv("disorder.csv", t), Artifact::Json("summary.json", summary)])
}

fn run_observables(cfg: &RunConfig, ctx: &Context) -> Result<Vec<Artifact>> {
    let o = &cfg.observables;
    let units = units(cfg)?;
    let mut angles = Table::new(&["k", "theta_deg"]);
    let mut evanescent = 0usize;
    for i in ctx.grid.ascending().filter(|&i| i != 0) {
        let theta = match angle_of_mode(ctx.grid.k(i), &units) {
            Ok(t) => t,
            Err(Error::Evanescent { .. }) => {
                evanescent += 1;
                f64::NAN
            }
            Err(e) => return Err(e),
        };
        angles.push(vec![ctx.grid.k(i), theta]);
    }
    let k = match o.k {
        Some(k) => k,
        None => resonance_contours(&ctx.tables.disp, 512)
            .extremal
            .map(|e| e.q_min)
            .ok_or_else(|| Error::Config("no decay channel open; give observables.k".into()))?,
    };
    let (n_k, source) = match &o.nk_file {
        Some(p) => {
            let (_, t) = read_csv(p)?;
            let ks = t.column("k").ok_or_else(|| Error::Config(format!("{}: no column \"k\"", p.display())))?;
            let ns = t.column("n").ok_or_else(|| Error::Config(format!("{}: no column \"n\"", p.display())))?;
            let best = ks
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - k).abs().total_cmp(&(b.1 - k).abs()))
                .map(|(i, _)| i)
                .ok_or_else(|| Error::Config(format!("{}: no modes", p.display())))?;
            (ns[best], format!("{} at k = {}", p.display(), ks[best]))
        }
        None => (o.n_k, "configured".to_string()),
    };
    let flux = flux_in_bin(n_k, ctx.params.l, o.delta_k_frac, &units)?;
    let theta_max = angle_of_mode(std::f64::consts::PI, &units).ok();
    let summary = json!({
        "units": units,
        "theta_max_deg": theta_max,
        "evanescent_modes": evanescent,
        "k": k,
        "theta_k_deg": angle_of_mode(k, &units).ok(),
        "n_k": n_k,
        "n_k_source": source,
        "flux_per_second": flux,
        "click_rate_per_second": click_rate(flux, o.efficiency),
    });
    Ok(vec![Artifact::Csv("angles.csv", angles), Artifact::Json("summary.json", summary)])
}
