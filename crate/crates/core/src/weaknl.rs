//! Weakly nonlinear two-mode analysis above the PT transition.
//!
//! Near threshold the field is written as
//! `ψ ≈ c1 u1 e^{iΩt} + c2* u2 e^{-iΩt}` with `u2(x) = conj(u1(-x))`.
//! Solvability at third order gives Stuart–Landau equations for `c1`, `c2`
//! whose self- and cross-saturation coefficients are
//!
//! ```text
//! α = ∫ u1² |u1|² / ∫ u1²        β = 2 ∫ u1² |u1(-x)|² / ∫ u1²
//! ```
//!
//! Mode profiles are normalized to `∫ |u1|² dx = 1` before the quadrature,
//! so α and β do not depend on how `u1` was scaled and the amplitudes
//! `c1`, `c2` carry the power directly.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::PowerTrace;
use crate::error::{invalid, Error, Result};
use crate::lattice::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationCoefficients {
    pub alpha: Complex64,
    pub beta: Complex64,
}

impl SaturationCoefficients {
    /// `α_R / β_R`.
    pub fn ratio(&self) -> f64 {
        self.alpha.re / self.beta.re
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeState {
    pub c1: Complex64,
    pub c2: Complex64,
}

impl std::ops::Add for AmplitudeState {
    type Output = AmplitudeState;
    fn add(self, o: AmplitudeState) -> AmplitudeState {
        AmplitudeState {
            c1: self.c1 + o.c1,
            c2: self.c2 + o.c2,
        }
    }
}

impl std::ops::Mul<f64> for AmplitudeState {
    type Output = AmplitudeState;
    fn mul(self, s: f64) -> AmplitudeState {
        AmplitudeState {
            c1: self.c1 * s,
            c2: self.c2 * s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CycleKind {
    SingleMode1,
    SingleMode2,
    TwoMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitCycle {
    pub kind: CycleKind,
    /// `|c|²` of each oscillating amplitude.
    pub amplitude2: f64,
    /// Frequency shift: the amplitudes rotate as `exp(i δ t)`.
    pub delta: f64,
    pub exists: bool,
    pub stable: bool,
    /// Set when `α_R = β_R`, where neither cycle type is attracting.
    pub degenerate: bool,
}

/// Mode profile rescaled to unit `∫|u|² dx` (Dirichlet endpoints are zero,
/// so the trapezoidal rule is `h Σ`).
pub fn normalize_mode(u: &[Complex64], grid: &Grid) -> Result<Vec<Complex64>> {
    if u.len() != grid.n() {
        return Err(invalid(format!(
            "mode has {} samples, grid has {}",
            u.len(),
            grid.n()
        )));
    }
    let norm2 = u.iter().map(|z| z.norm_sqr()).sum::<f64>() * grid.h();
    if !(norm2 > 0.0 && norm2.is_finite()) {
        return Err(invalid("mode profile has zero or non-finite norm"));
    }
    let s = norm2.sqrt().recip();
    Ok(u.iter().map(|z| z * s).collect())
}

fn mirrored(u: &[Complex64]) -> impl Iterator<Item = &Complex64> {
    u.iter().rev()
}

/// Self- and cross-saturation coefficients of mode `u1`.
pub fn saturation_coeffs(u1: &[Complex64], grid: &Grid) -> Result<SaturationCoefficients> {
    if !grid.is_symmetric() {
        return Err(invalid(
            "saturation coefficients need a grid symmetric about x = 0",
        ));
    }
    let u = normalize_mode(u1, grid)?;
    let h = grid.h();
    let sq: Complex64 = u.iter().map(|z| z * z).sum::<Complex64>() * h;
    // ∫|u|² = 1 after normalization
    if sq.norm() < 1e-10 {
        return Err(Error::SelfOrthogonalMode(sq.norm()));
    }
    let self_term: Complex64 = u.iter().map(|z| z * z * z.norm_sqr()).sum::<Complex64>() * h;
    let cross_term: Complex64 = u
        .iter()
        .zip(mirrored(&u))
        .map(|(z, m)| z * z * m.norm_sqr())
        .sum::<Complex64>()
        * h;
    Ok(SaturationCoefficients {
        alpha: self_term / sq,
        beta: cross_term * 2.0 / sq,
    })
}

/// Right-hand side of the slow amplitude equations
/// `dc1/dt = μ c1 - (α|c1|² + β|c2|²) c1`,
/// `dc2/dt = μ c2 - (α|c2|² + β|c1|²) c2`, with `μ = g0 - g0_th`.
pub fn amplitude_rhs(
    state: AmplitudeState,
    g0: f64,
    g0_th: f64,
    coeffs: &SaturationCoefficients,
) -> AmplitudeState {
    let mu = g0 - g0_th;
    let (n1, n2) = (state.c1.norm_sqr(), state.c2.norm_sqr());
    let (a, b) = (coeffs.alpha, coeffs.beta);
    AmplitudeState {
        c1: state.c1 * mu - (a * n1 + b * n2) * state.c1,
        c2: state.c2 * mu - (a * n2 + b * n1) * state.c2,
    }
}

/// Solvability conditions on the slow time `T2 = ε² t`, written for the
/// amplitudes `a1`, `a2` of `u1 e^{iΩt}` and `u2 e^{-iΩt}`:
/// `da1/dT2 = a1 - (α|a1|² + β|a2|²) a1`,
/// `da2/dT2 = a2 - (α*|a2|² + β*|a1|²) a2`.
pub fn solvability_rhs(
    a1: Complex64,
    a2: Complex64,
    coeffs: &SaturationCoefficients,
) -> (Complex64, Complex64) {
    let (n1, n2) = (a1.norm_sqr(), a2.norm_sqr());
    let (a, b) = (coeffs.alpha, coeffs.beta);
    (
        a1 - (a * n1 + b * n2) * a1,
        a2 - (a.conj() * n2 + b.conj() * n1) * a2,
    )
}

/// Classical RK4 integration of [`amplitude_rhs`]; returns the state at
/// every step including the initial one.
pub fn integrate_amplitudes(
    state0: AmplitudeState,
    g0: f64,
    g0_th: f64,
    coeffs: &SaturationCoefficients,
    dt: f64,
    steps: usize,
) -> Vec<AmplitudeState> {
    let f = |s: AmplitudeState| amplitude_rhs(s, g0, g0_th, coeffs);
    let mut out = Vec::with_capacity(steps + 1);
    let mut s = state0;
    out.push(s);
    for _ in 0..steps {
        let k1 = f(s);
        let k2 = f(s + k1 * (0.5 * dt));
        let k3 = f(s + k2 * (0.5 * dt));
        let k4 = f(s + k3 * dt);
        s = s + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        out.push(s);
    }
    out
}

fn is_degenerate(coeffs: &SaturationCoefficients) -> bool {
    let (a, b) = (coeffs.alpha.re, coeffs.beta.re);
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

/// The two single-mode cycles and the two-mode cycle of the amplitude
/// equations, with existence and stability flags.
pub fn limit_cycles(g0: f64, g0_th: f64, coeffs: &SaturationCoefficients) -> [LimitCycle; 3] {
    let mu = g0 - g0_th;
    let above = mu > 0.0;
    let (ar, ai) = (coeffs.alpha.re, coeffs.alpha.im);
    let (br, bi) = (coeffs.beta.re, coeffs.beta.im);
    let degenerate = is_degenerate(coeffs);

    let single_exists = above && ar > 0.0;
    let single = |kind| LimitCycle {
        kind,
        amplitude2: if single_exists { mu / ar } else { 0.0 },
        delta: if single_exists { -(ai / ar) * mu } else { 0.0 },
        exists: single_exists,
        stable: single_exists && !degenerate && br > ar,
        degenerate,
    };
    let sum_r = ar + br;
    let two_exists = above && sum_r > 0.0;
    let two = LimitCycle {
        kind: CycleKind::TwoMode,
        amplitude2: if two_exists { mu / sum_r } else { 0.0 },
        delta: if two_exists {
            -((ai + bi) / sum_r) * mu
        } else {
            0.0
        },
        exists: two_exists,
        stable: two_exists && !degenerate && br < ar,
        degenerate,
    };
    [
        single(CycleKind::SingleMode1),
        single(CycleKind::SingleMode2),
        two,
    ]
}

/// Output power of `ψ = c1(t) u1 e^{iΩt} + c2*(t) u2 e^{-iΩt}` with
/// `c_j(t) = c_j e^{iδt}`:
///
/// `P = |c1|² ∫|u1|² + |c2|² ∫|u2|² + 2 Re{c1 c2 e^{2i(Ω+δ)t} ∫ u1 conj(u2)}`.
///
/// Both profiles are normalized to unit `∫|u|² dx`.
#[allow(clippy::too_many_arguments)]
pub fn predicted_power_with_modes(
    c1: Complex64,
    c2: Complex64,
    delta: f64,
    u1: &[Complex64],
    u2: &[Complex64],
    omega: f64,
    grid: &Grid,
    times: &[f64],
) -> Result<PowerTrace> {
    let u1 = normalize_mode(u1, grid)?;
    let u2 = normalize_mode(u2, grid)?;
    let overlap: Complex64 = u1
        .iter()
        .zip(&u2)
        .map(|(a, b)| a * b.conj())
        .sum::<Complex64>()
        * grid.h();
    let base = c1.norm_sqr() + c2.norm_sqr();
    let mut trace = PowerTrace::default();
    for &t in times {
        let phase = Complex64::from_polar(1.0, 2.0 * (omega + delta) * t);
        let cross = 2.0 * (c1 * c2 * phase * overlap).re;
        trace.push(t, base + cross);
    }
    Ok(trace)
}

/// [`predicted_power_with_modes`] with the PT partner `u2(x) = conj(u1(-x))`,
/// for which the overlap is `∫ u1(x) u1(-x) dx`.
pub fn predicted_power(
    c1: Complex64,
    c2: Complex64,
    delta: f64,
    u1: &[Complex64],
    omega: f64,
    grid: &Grid,
    times: &[f64],
) -> Result<PowerTrace> {
    let u2: Vec<Complex64> = mirrored(u1).map(|z| z.conj()).collect();
    predicted_power_with_modes(c1, c2, delta, u1, &u2, omega, grid, times)
}

/// Power trace predicted on the two-mode limit cycle.
pub fn two_mode_power(
    cycle: &LimitCycle,
    u1: &[Complex64],
    omega: f64,
    grid: &Grid,
    times: &[f64],
) -> Result<PowerTrace> {
    if cycle.kind != CycleKind::TwoMode || !cycle.exists {
        return Err(invalid("two-mode power needs an existing two-mode cycle"));
    }
    let amp = Complex64::new(cycle.amplitude2.sqrt(), 0.0);
    predicted_power(amp, amp, cycle.delta, u1, omega, grid, times)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_grid;

    fn coeffs(ar: f64, ai: f64, br: f64, bi: f64) -> SaturationCoefficients {
        SaturationCoefficients {
            alpha: Complex64::new(ar, ai),
            beta: Complex64::new(br, bi),
        }
    }

    #[test]
    fn even_real_mode_has_beta_twice_alpha() {
        let grid = build_grid(-6.0, 6.0, 301).unwrap();
        let u: Vec<Complex64> = grid
            .points()
            .iter()
            .map(|x| {
                Complex64::new(
                    (std::f64::consts::PI * x / 12.0).cos() * (1.0 + 0.1 * x * x),
                    0.0,
                )
            })
            .collect();
        let c = saturation_coeffs(&u, &grid).unwrap();
        assert!((c.beta - c.alpha * 2.0).norm() < 1e-14 * c.alpha.norm());
    }

    #[test]
    fn coefficients_are_scale_invariant() {
        let grid = build_grid(-6.0, 6.0, 201).unwrap();
        let u: Vec<Complex64> = grid
            .points()
            .iter()
            .map(|&x| {
                Complex64::new(
                    (-(x - 1.0f64).powi(2)).exp(),
                    0.3 * x * (-(x * x) / 4.0).exp(),
                )
            })
            .collect();
        let a = saturation_coeffs(&u, &grid).unwrap();
        let scaled: Vec<Complex64> = u.iter().map(|z| z * Complex64::new(-3.0, 7.5)).collect();
        let b = saturation_coeffs(&scaled, &grid).unwrap();
        assert!((a.alpha - b.alpha).norm() < 1e-12 * a.alpha.norm());
        assert!((a.beta - b.beta).norm() < 1e-12 * a.beta.norm());
    }

    #[test]
    fn self_orthogonal_mode_is_rejected() {
        let grid = build_grid(-1.0, 1.0, 4).unwrap();
        // Σ u² = 1 + i² = 0
        let u = vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
        ];
        assert!(matches!(
            saturation_coeffs(&u, &grid),
            Err(Error::SelfOrthogonalMode(_))
        ));
        let asym = build_grid(-1.0, 2.0, 4).unwrap();
        assert!(saturation_coeffs(&u, &asym).is_err());
    }

    #[test]
    fn rhs_structure() {
        let c = coeffs(1.0, 0.2, 0.3, -0.1);
        let zero = AmplitudeState {
            c1: Complex64::new(0.0, 0.0),
            c2: Complex64::new(0.0, 0.0),
        };
        assert_eq!(amplitude_rhs(zero, 0.3, 0.2, &c), zero);
        // c2 = 0: Stuart–Landau for c1, c2 stays put
        let s = AmplitudeState {
            c1: Complex64::new(0.5, 0.1),
            c2: Complex64::new(0.0, 0.0),
        };
        let d = amplitude_rhs(s, 0.3, 0.2, &c);
        assert_eq!(d.c2, Complex64::new(0.0, 0.0));
        let expect = s.c1 * 0.1 - c.alpha * s.c1.norm_sqr() * s.c1;
        assert!((d.c1 - expect).norm() < 1e-15);
        // on the single-mode cycle d|c1|²/dt = 0
        let mu: f64 = 0.1;
        let s = AmplitudeState {
            c1: Complex64::new((mu / c.alpha.re).sqrt(), 0.0),
            c2: Complex64::new(0.0, 0.0),
        };
        let d = amplitude_rhs(s, 0.3, 0.2, &c);
        let dn = 2.0 * (s.c1.conj() * d.c1).re;
        assert!(dn.abs() < 1e-15);
    }

    #[test]
    fn cycle_existence_and_stability() {
        let c = coeffs(4.8, 0.1, 1.0, 0.3);
        let [i, ii, iii] = limit_cycles(0.3, 0.2, &c);
        assert!(i.exists && ii.exists && iii.exists);
        assert!(!i.stable && !ii.stable && iii.stable);
        assert!((i.amplitude2 - 0.1 / 4.8).abs() < 1e-15);
        assert!((iii.amplitude2 - 0.1 / 5.8).abs() < 1e-15);
        assert!((iii.delta + 0.4 / 5.8 * 0.1).abs() < 1e-15);
        assert!((i.delta + 0.1 / 4.8 * 0.1).abs() < 1e-15);

        let c = coeffs(1.0, 0.0, 2.0, 0.0);
        let [i, _, iii] = limit_cycles(0.3, 0.2, &c);
        assert!(i.stable && !iii.stable);

        let c = coeffs(1.0, 0.0, 1.0, 0.0);
        let cycles = limit_cycles(0.3, 0.2, &c);
        assert!(cycles.iter().all(|c| c.exists && !c.stable && c.degenerate));

        let c = coeffs(-1.0, 0.0, -0.5, 0.0);
        assert!(limit_cycles(0.3, 0.2, &c).iter().all(|c| !c.exists));

        let c = coeffs(4.8, 0.1, 1.0, 0.3);
        assert!(limit_cycles(0.2, 0.2, &c).iter().all(|c| !c.exists));
    }

    /// Exactly one cycle family is stable for generic positive coefficients.
    #[test]
    fn stability_dichotomy() {
        for (ar, br) in [(1.0, 0.5), (0.5, 1.0), (3.0, 2.9), (0.1, 7.0)] {
            let c = coeffs(ar, 0.2, br, -0.4);
            let [i, _, iii] = limit_cycles(1.0, 0.0, &c);
            assert!(i.stable ^ iii.stable);
        }
    }

    #[test]
    fn amplitudes_converge_to_two_mode_cycle() {
        let c = coeffs(4.8, 0.5, 1.0, -0.2);
        let s0 = AmplitudeState {
            c1: Complex64::new(0.01, 0.0),
            c2: Complex64::new(0.003, 0.002),
        };
        let traj = integrate_amplitudes(s0, 0.3, 0.2, &c, 0.05, 40_000);
        let last = traj.last().unwrap();
        let [_, _, iii] = limit_cycles(0.3, 0.2, &c);
        assert!((last.c1.norm_sqr() - iii.amplitude2).abs() < 1e-10);
        assert!((last.c2.norm_sqr() - iii.amplitude2).abs() < 1e-10);
    }

    /// The c-equations are the a-equations after c1 = ε a1, c2 = ε conj(a2)
    /// and t = T2 / ε².
    #[test]
    fn slow_time_equations_map_onto_amplitude_equations() {
        let c = coeffs(2.0, 0.7, 0.6, -0.9);
        let (g0, g0_th): (f64, f64) = (0.31, 0.3);
        let eps = (g0 - g0_th).sqrt();
        let (mut a1, mut a2) = (Complex64::new(0.2, 0.1), Complex64::new(-0.1, 0.3));
        let s0 = AmplitudeState {
            c1: a1 * eps,
            c2: a2.conj() * eps,
        };
        let dt = 0.5;
        let steps = 400;
        let traj = integrate_amplitudes(s0, g0, g0_th, &c, dt, steps);
        let d_slow = dt * eps * eps;
        for _ in 0..steps {
            let f = |x: Complex64, y: Complex64| solvability_rhs(x, y, &c);
            let k1 = f(a1, a2);
            let k2 = f(a1 + k1.0 * (0.5 * d_slow), a2 + k1.1 * (0.5 * d_slow));
            let k3 = f(a1 + k2.0 * (0.5 * d_slow), a2 + k2.1 * (0.5 * d_slow));
            let k4 = f(a1 + k3.0 * d_slow, a2 + k3.1 * d_slow);
            a1 += (k1.0 + k2.0 * 2.0 + k3.0 * 2.0 + k4.0) * (d_slow / 6.0);
            a2 += (k1.1 + k2.1 * 2.0 + k3.1 * 2.0 + k4.1) * (d_slow / 6.0);
        }
        let last = traj.last().unwrap();
        assert!((last.c1 - a1 * eps).norm() < 1e-12);
        assert!((last.c2 - a2.conj() * eps).norm() < 1e-12);
    }

    #[test]
    fn single_mode_power_is_constant() {
        let grid = build_grid(-6.0, 6.0, 101).unwrap();
        let u: Vec<Complex64> = grid
            .points()
            .iter()
            .map(|&x| Complex64::new((x / 3.0).cos(), 0.2 * x))
            .collect();
        let times: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let p = predicted_power(
            Complex64::new(0.7, 0.1),
            Complex64::new(0.0, 0.0),
            0.01,
            &u,
            0.08,
            &grid,
            &times,
        )
        .unwrap();
        let p0 = p.power[0];
        assert!((p0 - 0.5).abs() < 1e-12);
        assert!(p.power.iter().all(|&x| (x - p0).abs() < 1e-14));
    }
}
