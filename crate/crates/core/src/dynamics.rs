//! Time integration of `dψ/dt = -Hψ - |ψ|²ψ` and classification of the
//! resulting output power.
//!
//! Each step is a Strang splitting: half a step of the cubic saturation,
//! one Crank–Nicolson step of the linear part, and another half step of
//! the saturation. The saturation substep is integrated exactly,
//! `ψ <- ψ / sqrt(1 + 2|ψ|² τ)`, which leaves the phase untouched.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::eigen::TridiagLu;
use crate::error::{invalid, Error, Result};
use crate::lattice::{assemble_hamiltonian, Grid, OperatorMatrix, PotentialSpec};
use crate::table::Table;

pub const DEFAULT_DT: f64 = 0.05;
pub const DEFAULT_T_END: f64 = 600.0;
pub const DEFAULT_NOISE_AMP: f64 = 1e-3;
pub const DEFAULT_TRANSIENT_FRAC: f64 = 0.5;
pub const DEFAULT_DEPTH_TOL: f64 = 1e-3;
/// Minimum number of recorded power samples per run.
pub const MIN_POWER_SAMPLES: usize = 4000;
/// Mean power below which a run counts as not lasing.
pub const NOISE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub psi: Vec<Complex64>,
    pub t: f64,
}

impl FieldState {
    /// `Σ |ψ_j|² h`.
    pub fn power(&self, grid: &Grid) -> f64 {
        power_of(&self.psi, grid.h())
    }
}

fn power_of(psi: &[Complex64], h: f64) -> f64 {
    psi.iter().map(|z| z.norm_sqr()).sum::<f64>() * h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub spec: PotentialSpec,
    pub grid: Grid,
    pub g0: f64,
    pub dt: f64,
    pub t_end: f64,
    pub noise_amp: f64,
    pub seed: u64,
    /// Steps between recorded power samples.
    pub record_stride: usize,
    /// Steps between intensity snapshots; 0 disables snapshots.
    pub snapshot_stride: usize,
}

impl RunConfig {
    /// Configuration with the default time step, duration and noise level.
    pub fn new(spec: PotentialSpec, grid: Grid, g0: f64) -> Self {
        let mut cfg = Self {
            spec,
            grid,
            g0,
            dt: DEFAULT_DT,
            t_end: DEFAULT_T_END,
            noise_amp: DEFAULT_NOISE_AMP,
            seed: 1,
            record_stride: 1,
            snapshot_stride: 0,
        };
        cfg.set_default_strides();
        cfg
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    /// Chooses `record_stride` so that at least [`MIN_POWER_SAMPLES`] power
    /// samples are kept, and about 300 intensity snapshots.
    pub fn set_default_strides(&mut self) {
        let steps = self.steps().max(1);
        self.record_stride = (steps / MIN_POWER_SAMPLES).max(1);
        self.snapshot_stride = (steps / 300).max(1);
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= self.dt && self.t_end.is_finite()) {
            return Err(invalid(format!("t_end = {} must be >= dt", self.t_end)));
        }
        if !(self.noise_amp > 0.0 && self.noise_amp.is_finite()) {
            return Err(invalid(format!(
                "noise amplitude must be positive, got {}",
                self.noise_amp
            )));
        }
        if self.record_stride == 0 {
            return Err(invalid("record_stride must be at least 1"));
        }
        if !self.g0.is_finite() {
            return Err(invalid("g0 must be finite"));
        }
        self.spec.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PowerTrace {
    pub times: Vec<f64>,
    pub power: Vec<f64>,
}

impl PowerTrace {
    pub fn push(&mut self, t: f64, p: f64) {
        self.times.push(t);
        self.power.push(p);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Samples with `t >= t_start`.
    pub fn after(&self, t_start: f64) -> PowerTrace {
        let i = self.times.partition_point(|&t| t < t_start);
        PowerTrace {
            times: self.times[i..].to_vec(),
            power: self.power[i..].to_vec(),
        }
    }

    /// Drops the leading `frac` of the samples.
    pub fn tail(&self, frac: f64) -> PowerTrace {
        let skip = ((self.len() as f64) * frac.clamp(0.0, 1.0)).floor() as usize;
        PowerTrace {
            times: self.times[skip..].to_vec(),
            power: self.power[skip..].to_vec(),
        }
    }

    pub fn mean(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.power.iter().sum::<f64>() / self.len() as f64
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["t", "P"]);
        for (&ti, &p) in self.times.iter().zip(&self.power) {
            t.push(vec![ti, p]);
        }
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmissionClass {
    Stationary { p_ss: f64 },
    Oscillatory { period: f64, modulation_depth: f64 },
    NotConverged,
}

impl EmissionClass {
    pub fn is_stationary(&self) -> bool {
        matches!(self, EmissionClass::Stationary { .. })
    }

    pub fn is_oscillatory(&self) -> bool {
        matches!(self, EmissionClass::Oscillatory { .. })
    }
}

/// `ψ_j = amp (ξ_j + i ζ_j)` with ξ, ζ uniform on [-1, 1].
pub fn init_noise(grid: &Grid, amp: f64, seed: u64) -> Result<FieldState> {
    if !(amp > 0.0 && amp.is_finite()) {
        return Err(invalid(format!(
            "noise amplitude must be positive, got {amp}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let psi = (0..grid.n())
        .map(|_| {
            let re: f64 = rng.random_range(-1.0..=1.0);
            let im: f64 = rng.random_range(-1.0..=1.0);
            Complex64::new(amp * re, amp * im)
        })
        .collect();
    Ok(FieldState { psi, t: 0.0 })
}

/// Exact flow of `dψ/dt = -|ψ|²ψ` over time `tau`.
pub fn saturate(psi: &mut [Complex64], tau: f64) {
    for z in psi.iter_mut() {
        let rho = z.norm_sqr();
        *z /= (1.0 + 2.0 * rho * tau).sqrt();
    }
}

/// Split-step integrator with the Crank–Nicolson matrix factored once.
pub struct Stepper {
    op: OperatorMatrix,
    lu: TridiagLu,
    dt: f64,
}

impl Stepper {
    pub fn new(op: &OperatorMatrix, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid(format!("dt must be positive, got {dt}")));
        }
        let n = op.n();
        let half = 0.5 * dt;
        let off = Complex64::new(half * op.off_diag(), 0.0);
        let d: Vec<Complex64> = op
            .diag()
            .iter()
            .map(|&x| Complex64::new(1.0, 0.0) + x * half)
            .collect();
        let lu = TridiagLu::factor(vec![off; n - 1], d, vec![off; n - 1], f64::MIN_POSITIVE);
        Ok(Self {
            op: op.clone(),
            lu,
            dt,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// One Crank–Nicolson step of `dψ/dt = -Hψ`.
    pub fn linear_step(&self, psi: &mut [Complex64]) {
        let hpsi = self.op.apply(psi);
        let half = 0.5 * self.dt;
        for (z, hz) in psi.iter_mut().zip(&hpsi) {
            *z -= hz * half;
        }
        self.lu.solve(psi);
    }

    pub fn step(&self, state: &mut FieldState) -> Result<()> {
        let half = 0.5 * self.dt;
        saturate(&mut state.psi, half);
        self.linear_step(&mut state.psi);
        saturate(&mut state.psi, half);
        state.t += self.dt;
        if state
            .psi
            .iter()
            .any(|z| !(z.re.is_finite() && z.im.is_finite()))
        {
            return Err(Error::NonFinite { t: state.t });
        }
        Ok(())
    }
}

/// Advances `state` by one split step of size `dt`.
pub fn step(state: &FieldState, op: &OperatorMatrix, dt: f64) -> Result<FieldState> {
    if state.psi.len() != op.n() {
        return Err(invalid("field length does not match the operator"));
    }
    let stepper = Stepper::new(op, dt)?;
    let mut next = state.clone();
    stepper.step(&mut next)?;
    Ok(next)
}

/// Intensity `|ψ(x, t)|²` sampled at a set of times.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Snapshots {
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    pub intensity: Vec<Vec<f64>>,
}

impl Snapshots {
    /// Rows are times, columns are grid points; the first column is `t`.
    pub fn to_table(&self) -> Table {
        let header =
            std::iter::once("t".to_string()).chain(self.x.iter().map(|x| format!("{x:.6}")));
        let mut t = Table::new(header);
        for (ti, row) in self.times.iter().zip(&self.intensity) {
            let mut r = Vec::with_capacity(row.len() + 1);
            r.push(*ti);
            r.extend_from_slice(row);
            t.push(r);
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evolution {
    pub trace: PowerTrace,
    pub final_state: FieldState,
    pub snapshots: Snapshots,
}

/// Runs a full switch-on simulation from seeded noise.
pub fn evolve(cfg: &RunConfig) -> Result<Evolution> {
    cfg.validate()?;
    let op = assemble_hamiltonian(&cfg.spec, &cfg.grid, cfg.g0)?;
    let state = init_noise(&cfg.grid, cfg.noise_amp, cfg.seed)?;
    evolve_from(
        state,
        &op,
        cfg.dt,
        cfg.steps(),
        cfg.record_stride,
        cfg.snapshot_stride,
    )
}

/// Runs `steps` split steps from `state`.
pub fn evolve_from(
    mut state: FieldState,
    op: &OperatorMatrix,
    dt: f64,
    steps: usize,
    record_stride: usize,
    snapshot_stride: usize,
) -> Result<Evolution> {
    let grid = *op.grid();
    let stepper = Stepper::new(op, dt)?;
    let stride = record_stride.max(1);
    let mut trace = PowerTrace::default();
    let mut snapshots = Snapshots {
        x: grid.points(),
        ..Default::default()
    };
    let t0 = state.t;
    let record_snapshot = |snaps: &mut Snapshots, s: &FieldState| {
        snaps.times.push(s.t);
        snaps
            .intensity
            .push(s.psi.iter().map(|z| z.norm_sqr()).collect());
    };
    trace.push(state.t, state.power(&grid));
    if snapshot_stride > 0 {
        record_snapshot(&mut snapshots, &state);
    }
    for i in 1..=steps {
        stepper.step(&mut state)?;
        // avoid drift from repeated additions
        state.t = t0 + i as f64 * dt;
        if i % stride == 0 {
            trace.push(state.t, state.power(&grid));
        }
        if snapshot_stride > 0 && i % snapshot_stride == 0 {
            record_snapshot(&mut snapshots, &state);
        }
    }
    Ok(Evolution {
        trace,
        final_state: state,
        snapshots,
    })
}

/// Mean period between upward crossings of the window mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodEstimate {
    pub period: f64,
    pub std_dev: f64,
    pub crossings: usize,
}

/// Upward crossings of the mean with a small hysteresis band so that
/// jitter around the mean is not counted twice.
fn upward_crossings(trace: &PowerTrace) -> Vec<f64> {
    let mean = trace.mean();
    let (lo, hi) = trace
        .power
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &p| {
            (a.min(p), b.max(p))
        });
    let band = 0.05 * (hi - lo);
    let mut armed = false;
    let mut out = Vec::new();
    for i in 1..trace.len() {
        let (p0, p1) = (trace.power[i - 1], trace.power[i]);
        if p0 < mean - band {
            armed = true;
        }
        if armed && p0 < mean && p1 >= mean {
            let (t0, t1) = (trace.times[i - 1], trace.times[i]);
            out.push(t0 + (mean - p0) / (p1 - p0) * (t1 - t0));
            armed = false;
        }
    }
    out
}

/// Dominant oscillation period of the post-transient part of `trace`.
pub fn dominant_period(trace: &PowerTrace, transient_frac: f64) -> Result<PeriodEstimate> {
    let window = trace.tail(transient_frac);
    let crossings = upward_crossings(&window);
    if crossings.len() < 3 {
        return Err(Error::InsufficientCycles(crossings.len()));
    }
    let gaps: Vec<f64> = crossings.windows(2).map(|w| w[1] - w[0]).collect();
    let period = gaps.iter().sum::<f64>() / gaps.len() as f64;
    let var = gaps.iter().map(|g| (g - period).powi(2)).sum::<f64>() / gaps.len() as f64;
    Ok(PeriodEstimate {
        period,
        std_dev: var.sqrt(),
        crossings: crossings.len(),
    })
}

/// Classifies the output as stationary, oscillatory or not lasing from the
/// modulation depth `(P_max - P_min) / mean(P)` after the transient.
pub fn classify_emission(
    trace: &PowerTrace,
    transient_frac: f64,
    depth_tol: f64,
) -> Result<EmissionClass> {
    let window = trace.tail(transient_frac);
    if window.len() < 100 {
        return Err(invalid(format!(
            "need at least 100 post-transient samples, have {}",
            window.len()
        )));
    }
    let mean = window.mean();
    if !(mean >= NOISE_FLOOR) {
        return Ok(EmissionClass::NotConverged);
    }
    let (lo, hi) = window
        .power
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &p| {
            (a.min(p), b.max(p))
        });
    let depth = (hi - lo) / mean;
    if depth < depth_tol {
        return Ok(EmissionClass::Stationary { p_ss: mean });
    }
    match dominant_period(&window, 0.0) {
        Ok(p) => Ok(EmissionClass::Oscillatory {
            period: p.period,
            modulation_depth: depth,
        }),
        // still drifting without completing cycles
        Err(Error::InsufficientCycles(_)) => Ok(EmissionClass::NotConverged),
        Err(e) => Err(e),
    }
}
