//! Subcommand bodies. Each one resolves and validates its inputs first,
//! then computes, writes its files through [`Output`] and returns the
//! headline numbers for the manifest.

use std::f64::consts::PI;

use log::info;
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use wickpt::dimer::{
    evolve_dimer, lock_report, reduced_params_from_table, sigma_sweep, DimerParams, DimerState,
    Regime,
};
use wickpt::dynamics::{
    classify_emission, evolve, EmissionClass, Evolution, PowerTrace, RunConfig, DEFAULT_DEPTH_TOL,
    DEFAULT_TRANSIENT_FRAC,
};
use wickpt::lattice::{assemble_hamiltonian, Grid, PotentialSpec};
use wickpt::roundtrip::units_report;
use wickpt::spectra::{max_abs_imag_of, mode_pair_at, scan_threshold, spectrum_vs_gamma, TOL_REAL};
use wickpt::table::Table;
use wickpt::weaknl::{limit_cycles, saturation_coeffs, CycleKind};
use wickpt::Complex64;

use crate::config::{linspace, Model, Params};
use crate::error::{config_err, AppError};
use crate::output::Output;

pub type Headline = Map<String, Value>;

const DIMER_DT: f64 = 0.1;
const DIMER_T_END: f64 = 20_000.0;

fn headline<const N: usize>(pairs: [(&str, Value); N]) -> Headline {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn class_name(c: &EmissionClass) -> &'static str {
    match c {
        EmissionClass::Stationary { .. } => "stationary",
        EmissionClass::Oscillatory { .. } => "oscillatory",
        EmissionClass::NotConverged => "not_converged",
    }
}

fn dimer_start() -> DimerState {
    DimerState::new(Complex64::new(0.01, 0.0), Complex64::from_polar(0.012, 0.5))
}

pub fn spectrum(p: &Params, out: &Output) -> Result<Headline, AppError> {
    let (family, grid) = p.family()?;
    let range = match p.model() {
        Model::Doublewell => (0.0, 0.001, 101),
        _ => (0.0, 0.1, 101),
    };
    let gammas = p.gamma_list(range)?;
    let k = p.k.unwrap_or(6);
    if k > grid.n() {
        return Err(config_err(format!(
            "k = {k} exceeds the {} grid points",
            grid.n()
        )));
    }
    info!(
        "spectrum: {} tilts, k = {k}, n = {}",
        gammas.len(),
        grid.n()
    );
    let table = spectrum_vs_gamma(&family, &grid, p.g0.unwrap_or(0.0), &gammas, k)?;
    out.write_table("spectrum.csv", &table.to_table())?;
    let first_complex = table
        .gammas
        .iter()
        .zip(&table.sorted)
        .find(|(_, row)| max_abs_imag_of(row) > TOL_REAL)
        .map(|(g, _)| *g);
    Ok(headline([
        ("points", json!(gammas.len())),
        ("first_complex_gamma", json!(first_complex)),
    ]))
}

pub fn threshold(p: &Params, out: &Output) -> Result<Headline, AppError> {
    let (family, grid) = p.family()?;
    let default = match p.model() {
        Model::Squire => Some((0.03, 0.08)),
        Model::Doublewell => Some((0.0003, 0.001)),
        Model::MirrorFile => None,
    };
    let (lo, hi) = match (p.gamma_min, p.gamma_max, default) {
        (Some(lo), Some(hi), _) => (lo, hi),
        (lo, hi, Some((dlo, dhi))) => (lo.unwrap_or(dlo), hi.unwrap_or(dhi)),
        _ => {
            return Err(config_err(
                "threshold needs gamma_min and gamma_max for this model",
            ))
        }
    };
    if lo >= hi {
        return Err(config_err(format!("gamma bracket [{lo}, {hi}] is empty")));
    }
    let r = scan_threshold(
        &family,
        &grid,
        p.g0.unwrap_or(0.0),
        (lo, hi),
        p.scan_settings(),
    )?;
    out.write_json("threshold.json", &r)?;
    Ok(headline([
        ("gamma_pt", json!(r.gamma_pt)),
        ("bracket", json!([r.bracket.0, r.bracket.1])),
    ]))
}

fn run_config(
    p: &Params,
    family: &PotentialSpec,
    grid: &Grid,
    gamma: f64,
) -> Result<RunConfig, AppError> {
    let mut cfg = RunConfig::new(family.with_gamma(gamma), *grid, p.default_g0());
    if let Some(dt) = p.dt {
        cfg.dt = dt;
    }
    if let Some(t) = p.t_end {
        cfg.t_end = t;
    }
    if let Some(a) = p.noise {
        cfg.noise_amp = a;
    }
    if let Some(s) = p.seed {
        cfg.seed = s;
    }
    cfg.set_default_strides();
    if let Some(s) = p.snapshot_stride {
        cfg.snapshot_stride = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_run(
    out: &Output,
    dir: &str,
    cfg: &RunConfig,
    ev: &Evolution,
) -> Result<EmissionClass, AppError> {
    let class = classify_emission(&ev.trace, DEFAULT_TRANSIENT_FRAC, DEFAULT_DEPTH_TOL)?;
    out.write_table(&format!("{dir}power.csv"), &ev.trace.to_table())?;
    if cfg.snapshot_stride > 0 {
        out.write_table(&format!("{dir}intensity.csv"), &ev.snapshots.to_table())?;
    }
    out.write_json(
        &format!("{dir}run.json"),
        &json!({
            "gamma": cfg.spec.gamma(),
            "g0": cfg.g0,
            "dt": cfg.dt,
            "t_end": cfg.t_end,
            "seed": cfg.seed,
            "classification": class,
        }),
    )?;
    Ok(class)
}

fn class_headline(class: &EmissionClass) -> Value {
    match class {
        EmissionClass::Stationary { p_ss } => json!({ "class": "stationary", "p_ss": p_ss }),
        EmissionClass::Oscillatory {
            period,
            modulation_depth,
        } => {
            json!({ "class": "oscillatory", "period": period, "modulation_depth": modulation_depth })
        }
        EmissionClass::NotConverged => json!({ "class": "not_converged" }),
    }
}

/// Independent runs, one subdirectory each (`gamma_<i>/`); a single run
/// writes into the output root.
fn evolve_runs(p: &Params, gammas: &[f64], out: &Output) -> Result<Headline, AppError> {
    let (family, grid) = p.family()?;
    let cfgs: Vec<RunConfig> = gammas
        .iter()
        .map(|&g| run_config(p, &family, &grid, g))
        .collect::<Result<_, _>>()?;
    let single = cfgs.len() == 1;
    let classes: Vec<EmissionClass> = cfgs
        .par_iter()
        .enumerate()
        .map(|(i, cfg)| {
            info!(
                "evolve: gamma = {}, {} steps",
                cfg.spec.gamma(),
                cfg.steps()
            );
            let ev = evolve(cfg)?;
            let dir = if single {
                String::new()
            } else {
                format!("gamma_{i}/")
            };
            write_run(out, &dir, cfg, &ev)
        })
        .collect::<Result<_, AppError>>()?;
    if single {
        let mut h = headline([("gamma", json!(gammas[0]))]);
        if let Value::Object(m) = class_headline(&classes[0]) {
            h.extend(m);
        }
        return Ok(h);
    }
    Ok(headline([(
        "runs",
        Value::Array(
            gammas
                .iter()
                .zip(&classes)
                .map(|(g, c)| {
                    let mut v = class_headline(c);
                    v["gamma"] = json!(g);
                    v
                })
                .collect(),
        ),
    )]))
}

pub fn evolve_cmd(p: &Params, out: &Output) -> Result<Headline, AppError> {
    let gammas = match (&p.gammas, p.gamma) {
        (Some(gs), _) => gs.clone(),
        (None, Some(g)) => vec![g],
        (None, None) => vec![0.0],
    };
    evolve_runs(p, &gammas, out)
}

pub fn dimer(p: &Params, sweep: bool, out: &Output) -> Result<Headline, AppError> {
    let params = p.dimer()?;
    let dt = p.dt.unwrap_or(DIMER_DT);
    let t_end = p.t_end.unwrap_or(DIMER_T_END);
    if t_end < dt {
        return Err(config_err(format!("t_end = {t_end} must be >= dt = {dt}")));
    }
    if sweep {
        let ratios = linspace(
            p.ratio_min.unwrap_or(0.0),
            p.ratio_max.unwrap_or(3.0),
            p.ratio_steps.unwrap_or(31),
            "ratio",
        )?;
        info!("dimer sweep: {} detunings", ratios.len());
        let table = sigma_sweep(&params, &ratios, dimer_start(), dt, t_end)?;
        out.write_table("sweep.csv", &table)?;
        let drift = table.column("drift_measured").expect("sweep column");
        let boundary = ratios
            .iter()
            .zip(&drift)
            .find(|(_, &d)| d > 0.5)
            .map(|(r, _)| *r);
        let step = if ratios.len() > 1 {
            ratios[1] - ratios[0]
        } else {
            0.0
        };
        return Ok(headline([
            ("kappa", json!(params.kappa)),
            ("lock_boundary_ratio", json!(boundary)),
            (
                "lock_boundary_sigma",
                json!(boundary.map(|r| r * params.kappa)),
            ),
            ("ratio_step", json!(step)),
        ]));
    }
    let traj = evolve_dimer(dimer_start(), &params, dt, t_end)?;
    let rep = lock_report(&params, &traj, DEFAULT_TRANSIENT_FRAC)?;
    let class = classify_emission(&traj.trace, DEFAULT_TRANSIENT_FRAC, DEFAULT_DEPTH_TOL)?;
    out.write_table("trajectory.csv", &traj.to_table())?;
    out.write_json(
        "report.json",
        &json!({ "params": params, "lock": rep, "classification": class }),
    )?;
    let (regime, predicted_period) = match rep.regime {
        Regime::Locked { .. } => ("locked", None),
        Regime::Drift { period } => ("drift", Some(period)),
    };
    Ok(headline([
        ("regime", json!(regime)),
        ("period_predicted", json!(predicted_period)),
        ("period_measured", json!(rep.measured_period)),
        ("r2_mean", json!(rep.measured_r2_mean)),
        ("class", json!(class_name(&class))),
    ]))
}

pub fn weaknl(p: &Params, out: &Output) -> Result<Headline, AppError> {
    let (family, grid) = p.family()?;
    let gamma = p.gamma.unwrap_or(0.07);
    let g0 = p.default_g0();
    let op = assemble_hamiltonian(&family.with_gamma(gamma), &grid, 0.0)?;
    let pair = mode_pair_at(&op)?;
    let coeffs = saturation_coeffs(&pair.u1, &grid)?;
    let cycles = limit_cycles(g0, pair.g0_th, &coeffs);
    let two = cycles
        .iter()
        .find(|c| c.kind == CycleKind::TwoMode)
        .expect("two-mode cycle");
    let period =
        (two.exists && pair.omega + two.delta > 0.0).then(|| PI / (pair.omega + two.delta));
    out.write_json(
        "weaknl.json",
        &json!({
            "gamma": gamma,
            "g0": g0,
            "omega": pair.omega,
            "g0_th": pair.g0_th,
            "near_defective": pair.near_defective,
            "alpha": [coeffs.alpha.re, coeffs.alpha.im],
            "beta": [coeffs.beta.re, coeffs.beta.im],
            "alpha_over_beta": coeffs.ratio(),
            "cycles": cycles,
            "beat_period": period,
        }),
    )?;
    Ok(headline([
        ("alpha_over_beta", json!(coeffs.ratio())),
        ("two_mode_stable", json!(two.stable)),
        ("period", json!(period)),
    ]))
}

pub fn units(p: &Params, out: &Output) -> Result<Headline, AppError> {
    let cfg = p.physical()?;
    let labels: Vec<(String, f64)> = match &p.gammas {
        Some(gs) => gs
            .iter()
            .enumerate()
            .map(|(i, &g)| (format!("gamma_{i}"), g))
            .collect(),
        None => vec![
            ("squire_threshold".to_string(), 0.056),
            ("double_well_threshold".to_string(), 0.00065),
        ],
    };
    let pairs: Vec<(&str, f64)> = labels.iter().map(|(l, g)| (l.as_str(), *g)).collect();
    let rep = units_report(&cfg, p.u.unwrap_or(6.0), &pairs)?;
    out.write_json("units.json", &rep)?;
    Ok(headline([
        ("l_um", json!(rep.scales.l * 1e6)),
        ("t_r_ns", json!(rep.scales.t_r * 1e9)),
        ("alpha_pt_mrad", json!(rep.tilts[0].alpha * 1e3)),
        ("aperture_um", json!(rep.aperture * 1e6)),
    ]))
}

pub fn fig2a(p: &Params, out: &Output) -> Result<Headline, AppError> {
    let p = Params {
        gamma_min: Some(0.0),
        gamma_max: Some(0.12),
        gamma_steps: Some(121),
        ..Params::default()
    }
    .overlay(p.clone());
    let (family, grid) = p.family()?;
    let gammas = p.gamma_list((0.0, 0.12, 121))?;
    let table = spectrum_vs_gamma(&family, &grid, 0.0, &gammas, p.k.unwrap_or(6))?;
    out.write_table("fig2a.csv", &table.to_table())?;
    Ok(headline([("points", json!(gammas.len()))]))
}

pub fn fig2cde(p: &Params, out: &Output) -> Result<Headline, AppError> {
    evolve_runs(
        p,
        &p.gammas.clone().unwrap_or_else(|| vec![0.0, 0.04, 0.07]),
        out,
    )
}

pub fn fig3b(p: &Params, out: &Output) -> Result<Headline, AppError> {
    let (family, grid) = p.family()?;
    let gammas = p.gamma_list((0.0, 0.001, 101))?;
    let threshold = scan_threshold(&family, &grid, 0.0, (0.0003, 0.001), p.scan_settings())?;
    let table = spectrum_vs_gamma(&family, &grid, 0.0, &gammas, 2)?;
    let fit_table = spectrum_vs_gamma(
        &family,
        &grid,
        0.0,
        &linspace(0.0, 0.8 * threshold.gamma_pt, 13, "gamma")?,
        2,
    )?;
    let reduced = reduced_params_from_table(&fit_table, 0.8 * threshold.gamma_pt, TOL_REAL)?;
    let base = table.to_sorted_table();
    let mut header = base.header.clone();
    header.extend(["model_re_e1", "model_re_e2", "model_im_e1", "model_im_e2"].map(String::from));
    let mut t = Table::new(header);
    for (row, &g) in base.rows.iter().zip(&gammas) {
        let (e1, e2) = reduced.levels(g);
        let mut r = row.clone();
        r.extend([e1.re, e2.re, e1.im, e2.im]);
        t.push(r);
    }
    out.write_table("fig3b.csv", &t)?;
    out.write_json(
        "reduced.json",
        &json!({ "threshold": threshold, "reduced": reduced }),
    )?;
    Ok(headline([
        ("gamma_pt", json!(threshold.gamma_pt)),
        ("kappa", json!(reduced.kappa)),
        ("q", json!(reduced.q)),
        ("sigma_slope", json!(reduced.sigma_slope)),
    ]))
}

/// Linear interpolation of a power trace at `t`, clamped to its ends.
fn sample(trace: &PowerTrace, t: f64) -> f64 {
    let k = trace.times.partition_point(|&s| s <= t);
    if k == 0 {
        return trace.power[0];
    }
    if k >= trace.times.len() {
        return trace.power[trace.power.len() - 1];
    }
    let (t0, t1) = (trace.times[k - 1], trace.times[k]);
    let w = (t - t0) / (t1 - t0);
    trace.power[k - 1] * (1.0 - w) + trace.power[k] * w
}

pub fn fig3c(p: &Params, out: &Output) -> Result<Headline, AppError> {
    let (family, grid) = p.family()?;
    let gammas = p
        .gammas
        .clone()
        .unwrap_or_else(|| vec![0.0, 0.0005, 0.0007]);
    let jobs: Vec<(RunConfig, DimerParams)> = gammas
        .iter()
        .map(|&g| {
            let dimer = Params {
                gamma: Some(g),
                ..p.clone()
            };
            Ok((run_config(p, &family, &grid, g)?, dimer.dimer()?))
        })
        .collect::<Result<_, AppError>>()?;
    let results: Vec<Value> = jobs
        .par_iter()
        .enumerate()
        .map(|(i, (cfg, dp))| {
            info!("fig3c: gamma = {}", cfg.spec.gamma());
            let ev = evolve(cfg)?;
            let traj = evolve_dimer(dimer_start(), dp, DIMER_DT, cfg.t_end)?;
            let full = classify_emission(&ev.trace, DEFAULT_TRANSIENT_FRAC, DEFAULT_DEPTH_TOL)?;
            let reduced =
                classify_emission(&traj.trace, DEFAULT_TRANSIENT_FRAC, DEFAULT_DEPTH_TOL)?;
            let mut t = Table::new(["t", "p_full", "p_reduced"]);
            for (&ti, &pi) in ev.trace.times.iter().zip(&ev.trace.power) {
                t.push(vec![ti, pi, sample(&traj.trace, ti)]);
            }
            let dir = format!("gamma_{i}/");
            out.write_table(&format!("{dir}power.csv"), &t)?;
            if cfg.snapshot_stride > 0 {
                out.write_table(&format!("{dir}intensity.csv"), &ev.snapshots.to_table())?;
            }
            let summary = json!({
                "gamma": cfg.spec.gamma(),
                "full": full,
                "reduced": reduced,
                "dimer": dp,
            });
            out.write_json(&format!("{dir}run.json"), &summary)?;
            Ok(json!({
                "gamma": cfg.spec.gamma(),
                "full": class_name(&full),
                "reduced": class_name(&reduced),
            }))
        })
        .collect::<Result<_, AppError>>()?;
    Ok(headline([("runs", Value::Array(results))]))
}
