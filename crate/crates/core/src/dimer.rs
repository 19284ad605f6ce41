//! Two coupled laser oscillators: the reduced model of the double well.
//!
//! ```text
//! da1/dt = (η - iσ) a1 + κ a2 - ρ|a1|² a1
//! da2/dt = (η + iσ) a2 + κ a1 - ρ|a2|² a2
//! ```
//!
//! With `a_j = r_j e^{iφ_j}` and `r1 = r2 = r` the relative phase
//! `φ = φ2 - φ1` obeys Adler's equation `dφ/dt = 2(σ - κ sin φ)`: locked for
//! `σ < κ`, drifting with period `π / √(σ² - κ²)` otherwise.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::PowerTrace;
use crate::error::{invalid, Error, Result};
use crate::spectra::SpectrumTable;
use crate::table::Table;

pub const DEFAULT_DT: f64 = 0.1;
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimerParams {
    /// Net gain `g0 - q`.
    pub eta: f64,
    pub kappa: f64,
    pub sigma: f64,
    pub rho: f64,
}

impl DimerParams {
    pub fn from_gain(g0: f64, q: f64, kappa: f64, sigma: f64, rho: f64) -> Self {
        Self {
            eta: g0 - q,
            kappa,
            sigma,
            rho,
        }
    }

    pub fn with_sigma(self, sigma: f64) -> Self {
        Self { sigma, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.eta, self.kappa, self.sigma, self.rho]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(invalid("dimer parameters must be finite"));
        }
        if self.kappa <= 0.0 {
            return Err(invalid(format!(
                "kappa must be positive, got {}",
                self.kappa
            )));
        }
        if self.rho <= 0.0 {
            return Err(invalid(format!("rho must be positive, got {}", self.rho)));
        }
        Ok(())
    }

    /// `|σ| ≤ κ`; at equality the locked point is marginal.
    pub fn is_locked(&self) -> bool {
        self.sigma.abs() <= self.kappa
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimerState {
    pub a1: Complex64,
    pub a2: Complex64,
}

impl DimerState {
    pub fn new(a1: Complex64, a2: Complex64) -> Self {
        Self { a1, a2 }
    }

    pub fn power(&self) -> f64 {
        self.a1.norm_sqr() + self.a2.norm_sqr()
    }

    /// Polar chart with `φ = arg a2 - arg a1` reduced to `(-π, π]`.
    pub fn to_polar(&self) -> PolarState {
        PolarState {
            r1: self.a1.norm(),
            r2: self.a2.norm(),
            phi: wrap(self.a2.arg() - self.a1.arg()),
        }
    }

    fn axpy(self, k: DimerState, s: f64) -> DimerState {
        DimerState {
            a1: self.a1 + k.a1 * s,
            a2: self.a2 + k.a2 * s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarState {
    pub r1: f64,
    pub r2: f64,
    /// Relative phase, accumulated without reduction mod 2π.
    pub phi: f64,
}

impl PolarState {
    fn axpy(self, k: PolarState, s: f64) -> PolarState {
        PolarState {
            r1: self.r1 + k.r1 * s,
            r2: self.r2 + k.r2 * s,
            phi: self.phi + k.phi * s,
        }
    }
}

fn wrap(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

pub fn dimer_rhs(s: &DimerState, p: &DimerParams) -> DimerState {
    let i = Complex64::i();
    DimerState {
        a1: (p.eta - i * p.sigma) * s.a1 + p.kappa * s.a2 - p.rho * s.a1.norm_sqr() * s.a1,
        a2: (p.eta + i * p.sigma) * s.a2 + p.kappa * s.a1 - p.rho * s.a2.norm_sqr() * s.a2,
    }
}

fn rk4<S: Copy>(s: S, dt: f64, f: impl Fn(S) -> S, axpy: impl Fn(S, S, f64) -> S) -> S {
    let k1 = f(s);
    let k2 = f(axpy(s, k1, 0.5 * dt));
    let k3 = f(axpy(s, k2, 0.5 * dt));
    let k4 = f(axpy(s, k3, dt));
    let s = axpy(s, k1, dt / 6.0);
    let s = axpy(s, k2, dt / 3.0);
    let s = axpy(s, k3, dt / 3.0);
    axpy(s, k4, dt / 6.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DimerTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<DimerState>,
    /// Unwrapped relative phase.
    pub phi: Vec<f64>,
    pub trace: PowerTrace,
}

impl DimerTrajectory {
    pub fn last(&self) -> &DimerState {
        self.states
            .last()
            .expect("trajectory holds the initial state")
    }

    pub fn r2_mean(&self) -> Vec<f64> {
        self.states.iter().map(|s| 0.5 * s.power()).collect()
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["t", "P", "re_a1", "im_a1", "re_a2", "im_a2", "phi"]);
        for ((&time, s), &phi) in self.times.iter().zip(&self.states).zip(&self.phi) {
            t.push(vec![
                time,
                s.power(),
                s.a1.re,
                s.a1.im,
                s.a2.re,
                s.a2.im,
                phi,
            ]);
        }
        t
    }
}

/// Fixed-step RK4 integration of the complex equations.
pub fn evolve_dimer(
    state0: DimerState,
    p: &DimerParams,
    dt: f64,
    t_end: f64,
) -> Result<DimerTrajectory> {
    p.validate()?;
    if !(dt > 0.0 && dt.is_finite()) || !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(invalid(format!(
            "need dt > 0 and t_end >= 0, got dt={dt}, t_end={t_end}"
        )));
    }
    let steps = (t_end / dt).round() as usize;
    let mut s = state0;
    let mut phi = state0.to_polar().phi;
    let mut traj = DimerTrajectory {
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        phi: Vec::with_capacity(steps + 1),
        trace: PowerTrace::default(),
    };
    let record = |t: f64, s: DimerState, phi: f64, traj: &mut DimerTrajectory| {
        traj.times.push(t);
        traj.states.push(s);
        traj.phi.push(phi);
        traj.trace.push(t, s.power());
    };
    record(0.0, s, phi, &mut traj);
    for k in 1..=steps {
        let prev = s.to_polar().phi;
        s = rk4(s, dt, |x| dimer_rhs(&x, p), |a, b, c| a.axpy(b, c));
        let t = k as f64 * dt;
        let amp = s.a1.norm().max(s.a2.norm());
        if !amp.is_finite() {
            return Err(Error::NonFinite { t });
        }
        if amp > DIVERGENCE_LIMIT {
            return Err(Error::Diverged { t, amplitude: amp });
        }
        phi += wrap(s.to_polar().phi - prev);
        record(t, s, phi, &mut traj);
    }
    Ok(traj)
}

pub fn polar_rhs(s: &PolarState, p: &DimerParams) -> Result<PolarState> {
    if !(s.r1 > 0.0 && s.r2 > 0.0) {
        return Err(Error::PolarSingular { r1: s.r1, r2: s.r2 });
    }
    let (sin, cos) = s.phi.sin_cos();
    Ok(PolarState {
        r1: p.eta * s.r1 + p.kappa * s.r2 * cos - p.rho * s.r1.powi(3),
        r2: p.eta * s.r2 + p.kappa * s.r1 * cos - p.rho * s.r2.powi(3),
        phi: 2.0 * p.sigma - p.kappa * (s.r1 / s.r2 + s.r2 / s.r1) * sin,
    })
}

/// RK4 in the polar chart; returns every state including the initial one.
pub fn evolve_polar(
    state0: PolarState,
    p: &DimerParams,
    dt: f64,
    steps: usize,
) -> Result<Vec<PolarState>> {
    p.validate()?;
    polar_rhs(&state0, p)?;
    let mut out = Vec::with_capacity(steps + 1);
    let mut s = state0;
    out.push(s);
    for _ in 0..steps {
        let f = |x: PolarState| {
            // a singular stage shows up as NaN and is caught below
            polar_rhs(&x, p).unwrap_or(PolarState {
                r1: f64::NAN,
                r2: f64::NAN,
                phi: f64::NAN,
            })
        };
        s = rk4(s, dt, f, |a, b, c| a.axpy(b, c));
        if !(s.r1 > 0.0 && s.r2 > 0.0 && s.phi.is_finite()) {
            return Err(Error::PolarSingular { r1: s.r1, r2: s.r2 });
        }
        out.push(s);
    }
    Ok(out)
}

pub fn adler_rhs(phi: f64, p: &DimerParams) -> f64 {
    2.0 * (p.sigma - p.kappa * phi.sin())
}

/// RK4 solution of Adler's equation.
pub fn integrate_adler(phi0: f64, p: &DimerParams, dt: f64, steps: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(steps + 1);
    let mut phi = phi0;
    out.push(phi);
    for _ in 0..steps {
        phi = rk4(phi, dt, |x| adler_rhs(x, p), |a, b, c| a + b * c);
        out.push(phi);
    }
    out
}

/// Phase-locked fixed point `(φ*, r*²)` of the symmetric reduction:
/// `φ* = asin(σ/κ)` and `r*² = (η + κ cos φ*) / ρ = (η + √(κ² - σ²)) / ρ`.
pub fn locked_state(p: &DimerParams) -> Result<(f64, f64)> {
    p.validate()?;
    if p.sigma.abs() > p.kappa {
        return Err(Error::DriftRegime {
            sigma: p.sigma,
            kappa: p.kappa,
        });
    }
    let phi = (p.sigma / p.kappa).clamp(-1.0, 1.0).asin();
    let r2 = (p.eta + (p.kappa * p.kappa - p.sigma * p.sigma).sqrt()) / p.rho;
    if r2 <= 0.0 {
        return Err(Error::BelowOscillationThreshold(r2));
    }
    Ok((phi, r2))
}

/// Period of the phase drift, `π / √(σ² - κ²)`.
pub fn drift_period(p: &DimerParams) -> Result<f64> {
    p.validate()?;
    if p.sigma.abs() <= p.kappa {
        return Err(Error::LockedRegime {
            sigma: p.sigma,
            kappa: p.kappa,
        });
    }
    Ok(PI / (p.sigma * p.sigma - p.kappa * p.kappa).sqrt())
}

/// Long-time amplitude slaved to the phase:
/// `r² = (σ² + η² - κ²) η / (ρ (σ² + η² - κη cos φ - κσ sin φ))`.
pub fn asymptotic_r2(phi: &[f64], p: &DimerParams) -> Result<Vec<f64>> {
    p.validate()?;
    let (k, e, s) = (p.kappa, p.eta, p.sigma);
    let num = (s * s + e * e - k * k) * e / p.rho;
    let mut sign = 0.0;
    phi.iter()
        .enumerate()
        .map(|(index, &f)| {
            let den = s * s + e * e - k * e * f.cos() - k * s * f.sin();
            if den == 0.0 || den * sign < 0.0 {
                return Err(Error::SingularDenominator { index });
            }
            sign = den.signum();
            Ok(num / den)
        })
        .collect()
}

/// Potential of the Adler gradient flow, `G(φ) = -2σφ - 2κ cos φ`.
pub fn lyapunov_g(phi: f64, p: &DimerParams) -> f64 {
    -2.0 * p.sigma * phi - 2.0 * p.kappa * phi.cos()
}

/// True when consecutive values never rise by more than `slack`.
pub fn is_non_increasing(values: &[f64], slack: f64) -> bool {
    values.windows(2).all(|w| w[1] <= w[0] + slack)
}

/// Mean time for the unwrapped phase to advance by 2π over the samples
/// after `transient_frac` of the run, or `None` if fewer than two full
/// turns are completed.
pub fn measured_phase_period(times: &[f64], phi: &[f64], transient_frac: f64) -> Option<f64> {
    let start = ((times.len() as f64) * transient_frac.clamp(0.0, 1.0)) as usize;
    let (t, f) = (&times[start..], &phi[start..]);
    if t.len() < 2 {
        return None;
    }
    let dir = (f[f.len() - 1] - f[0]).signum();
    let base = f[0];
    let mut crossings = Vec::new();
    let mut next = 1.0;
    for i in 1..t.len() {
        let (a, b) = (dir * (f[i - 1] - base), dir * (f[i] - base));
        while b >= next * 2.0 * PI && a < next * 2.0 * PI {
            let level = next * 2.0 * PI;
            let w = (level - a) / (b - a);
            crossings.push(t[i - 1] + w * (t[i] - t[i - 1]));
            next += 1.0;
        }
        if b < (next - 1.0) * 2.0 * PI - PI {
            // went backwards by more than half a turn: not a drift
            return None;
        }
    }
    if crossings.len() < 3 {
        return None;
    }
    Some((crossings[crossings.len() - 1] - crossings[0]) / (crossings.len() - 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regime {
    Locked { phi_star: f64, r_star2: f64 },
    Drift { period: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LockReport {
    pub regime: Regime,
    pub measured_period: Option<f64>,
    /// Time mean of `(|a1|² + |a2|²) / 2` after the transient.
    pub measured_r2_mean: f64,
    /// Whether the trajectory itself looks locked (phase stays put).
    pub measured_locked: bool,
}

/// Compares a trajectory with the analytic regime for its parameters.
pub fn lock_report(
    p: &DimerParams,
    traj: &DimerTrajectory,
    transient_frac: f64,
) -> Result<LockReport> {
    let regime = if p.is_locked() {
        let (phi_star, r_star2) = match locked_state(p) {
            Ok(v) => v,
            Err(Error::BelowOscillationThreshold(r2)) => ((p.sigma / p.kappa).asin(), r2),
            Err(e) => return Err(e),
        };
        Regime::Locked { phi_star, r_star2 }
    } else {
        Regime::Drift {
            period: drift_period(p)?,
        }
    };
    let start = ((traj.times.len() as f64) * transient_frac.clamp(0.0, 1.0)) as usize;
    let tail = &traj.states[start..];
    if tail.is_empty() {
        return Err(invalid("no samples after the transient"));
    }
    let r2_mean = tail.iter().map(|s| 0.5 * s.power()).sum::<f64>() / tail.len() as f64;
    let measured_period = measured_phase_period(&traj.times, &traj.phi, transient_frac);
    let advance = (traj.phi[traj.phi.len() - 1] - traj.phi[start]).abs();
    Ok(LockReport {
        regime,
        measured_period,
        measured_r2_mean: r2_mean,
        measured_locked: advance < PI,
    })
}

/// One row per `σ/κ` ratio: analytic regime and period against the
/// integrated trajectory.
pub fn sigma_sweep(
    base: &DimerParams,
    ratios: &[f64],
    state0: DimerState,
    dt: f64,
    t_end: f64,
) -> Result<Table> {
    let rows: Vec<Result<Vec<f64>>> = ratios
        .par_iter()
        .map(|&ratio| {
            let p = base.with_sigma(ratio * base.kappa);
            let traj = evolve_dimer(state0, &p, dt, t_end)?;
            let rep = lock_report(&p, &traj, 0.5)?;
            let predicted = match rep.regime {
                Regime::Drift { period } => period,
                Regime::Locked { .. } => f64::NAN,
            };
            Ok(vec![
                ratio,
                p.sigma,
                if p.is_locked() { 0.0 } else { 1.0 },
                if rep.measured_locked { 0.0 } else { 1.0 },
                predicted,
                rep.measured_period.unwrap_or(f64::NAN),
                rep.measured_r2_mean,
            ])
        })
        .collect();
    let mut t = Table::new([
        "sigma_over_kappa",
        "sigma",
        "drift_predicted",
        "drift_measured",
        "period_predicted",
        "period_measured",
        "r2_mean",
    ]);
    for r in rows {
        t.push(r?);
    }
    Ok(t)
}

/// Parameters of the two-level model read off a double-well spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedParams {
    pub kappa: f64,
    pub q: f64,
    /// `σ = sigma_slope · γ`.
    pub sigma_slope: f64,
    pub samples_used: usize,
}

impl ReducedParams {
    /// Two lowest levels predicted by the reduced model at tilt `gamma`:
    /// `q ∓ √(κ² - σ²)`.
    pub fn levels(&self, gamma: f64) -> (Complex64, Complex64) {
        let sigma = self.sigma_slope * gamma;
        let root = Complex64::new(self.kappa * self.kappa - sigma * sigma, 0.0).sqrt();
        (self.q - root, self.q + root)
    }

    /// Tilt at which the reduced levels coalesce, `κ / slope`.
    pub fn gamma_pt(&self) -> f64 {
        self.kappa / self.sigma_slope
    }
}

/// Fits `κ`, `q` and the `σ`-slope to the two lowest levels.
///
/// `κ` and `q` are half the splitting and the mean at `γ = 0`. For each
/// `γ > 0` with both levels real, `σ² = κ² - ((E2 - E1)/2)²`, and the slope
/// is the least-squares fit of `σ = slope · γ` through the origin.
pub fn extract_reduced_params(
    gammas: &[f64],
    e1: &[Complex64],
    e2: &[Complex64],
    tol_real: f64,
) -> Result<ReducedParams> {
    if gammas.len() != e1.len() || gammas.len() != e2.len() {
        return Err(invalid("gamma and level samples differ in length"));
    }
    let i0 = gammas
        .iter()
        .position(|&g| g == 0.0)
        .ok_or(Error::MissingLevels)?;
    let real = |z: &Complex64| z.im.abs() <= tol_real * z.re.abs().max(1.0);
    if !(real(&e1[i0]) && real(&e2[i0])) {
        return Err(Error::MissingLevels);
    }
    let kappa = 0.5 * (e2[i0].re - e1[i0].re);
    let q = 0.5 * (e1[i0].re + e2[i0].re);
    if kappa <= 0.0 {
        return Err(invalid("the two lowest levels are not split at gamma = 0"));
    }
    let (mut sxy, mut sxx, mut used) = (0.0, 0.0, 0);
    for ((&g, a), b) in gammas.iter().zip(e1).zip(e2) {
        if g <= 0.0 || !(real(a) && real(b)) {
            continue;
        }
        let half = 0.5 * (b.re - a.re);
        let sigma = (kappa * kappa - half * half).max(0.0).sqrt();
        sxy += g * sigma;
        sxx += g * g;
        used += 1;
    }
    if used < 2 {
        return Err(Error::MissingLevels);
    }
    Ok(ReducedParams {
        kappa,
        q,
        sigma_slope: sxy / sxx,
        samples_used: used,
    })
}

/// [`extract_reduced_params`] on the first two sorted levels of a table,
/// keeping only `γ ≤ gamma_max`.
pub fn reduced_params_from_table(
    table: &SpectrumTable,
    gamma_max: f64,
    tol_real: f64,
) -> Result<ReducedParams> {
    let mut g = Vec::new();
    let mut e1 = Vec::new();
    let mut e2 = Vec::new();
    for (gamma, levels) in table.gammas.iter().zip(&table.sorted) {
        if *gamma > gamma_max {
            continue;
        }
        if levels.len() < 2 {
            return Err(Error::MissingLevels);
        }
        g.push(*gamma);
        e1.push(levels[0]);
        e2.push(levels[1]);
    }
    extract_reduced_params(&g, &e1, &e2, tol_real)
}
