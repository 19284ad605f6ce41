//! Resonator round-trip map and the chain from lab units to the normalized
//! model.
//!
//! One round trip through the self-imaging lensguide is
//! `P = exp(g) r(X) exp(D ∂²_X)`: a Gaussian spectral filter followed by the
//! mirror and the double-pass gain. Measuring `X` in units of `L = √D` makes
//! the filter `exp(∂²_x)`, and `P ≈ exp(-(H - g0))` when `r = exp(-V)`.

use std::f64::consts::PI;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::eigen::{dense_inverse_iteration, hessenberg_eigenvalues};
use crate::error::{invalid, Error, Result};
use crate::lattice::{evaluate_potential, Grid, PotentialSpec};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Padding on each side of the aperture, as a fraction of its samples.
pub const PAD_FRACTION: f64 = 0.25;
/// Fraction of the filtered energy in the padding that triggers a warning.
pub const PAD_WARN: f64 = 1e-3;

static PAD_WARNED: AtomicBool = AtomicBool::new(false);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConfig {
    /// Wavelength (m).
    pub lambda: f64,
    /// Lens focal length (m).
    pub f: f64,
    /// Gaussian aperture size (m).
    pub w_a: f64,
    /// Total cavity length `4f + d` (m).
    pub cavity_length: f64,
}

impl PhysicalConfig {
    /// He-Ne laser with a 250 μm aperture, 10 cm lenses and a 60 cm cavity.
    pub fn he_ne() -> Self {
        Self {
            lambda: 633e-9,
            f: 0.1,
            w_a: 250e-6,
            cavity_length: 0.6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda", self.lambda),
            ("f", self.f),
            ("w_a", self.w_a),
            ("cavity_length", self.cavity_length),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedScales {
    /// Filtering parameter `2 (λ f / 2π w_a)²` (m²).
    pub d: f64,
    /// Transverse scale `√D` (m).
    pub l: f64,
    /// Round-trip time `2𝓛/c` (s).
    pub t_r: f64,
    /// `λ / (π w_a²)` (1/m).
    pub theta: f64,
}

pub fn derived_scales(cfg: &PhysicalConfig) -> Result<DerivedScales> {
    cfg.validate()?;
    let a = cfg.lambda * cfg.f / (2.0 * PI * cfg.w_a);
    let d = 2.0 * a * a;
    Ok(DerivedScales {
        d,
        l: d.sqrt(),
        t_r: 2.0 * cfg.cavity_length / SPEED_OF_LIGHT,
        theta: cfg.lambda / (PI * cfg.w_a * cfg.w_a),
    })
}

/// Normalized tilt `γ = (2π/λ) α L` of a mirror tilted by `alpha` radians.
pub fn tilt_to_gamma(alpha: f64, cfg: &PhysicalConfig) -> Result<f64> {
    let s = derived_scales(cfg)?;
    Ok(2.0 * PI / cfg.lambda * alpha * s.l)
}

pub fn gamma_to_tilt(gamma: f64, cfg: &PhysicalConfig) -> Result<f64> {
    let s = derived_scales(cfg)?;
    Ok(gamma * cfg.lambda / (2.0 * PI * s.l))
}

/// Physical width `2uL` of a hard aperture of normalized half-width `u`.
pub fn aperture_width(u: f64, cfg: &PhysicalConfig) -> Result<f64> {
    Ok(2.0 * u * derived_scales(cfg)?.l)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TiltEntry {
    pub label: String,
    pub gamma: f64,
    /// Mirror tilt (rad).
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitsReport {
    pub config: PhysicalConfig,
    pub scales: DerivedScales,
    pub squire_half_width: f64,
    /// `2uL` (m).
    pub aperture: f64,
    pub tilts: Vec<TiltEntry>,
}

pub fn units_report(
    cfg: &PhysicalConfig,
    squire_half_width: f64,
    gammas: &[(&str, f64)],
) -> Result<UnitsReport> {
    let scales = derived_scales(cfg)?;
    let tilts = gammas
        .iter()
        .map(|&(label, gamma)| {
            Ok(TiltEntry {
                label: label.to_string(),
                gamma,
                alpha: gamma_to_tilt(gamma, cfg)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(UnitsReport {
        config: *cfg,
        scales,
        squire_half_width,
        aperture: aperture_width(squire_half_width, cfg)?,
        tilts,
    })
}

/// `exp(-d k²)` Gaussian filter on a zero-padded FFT grid.
#[derive(Clone)]
pub struct SpectralFilter {
    n: usize,
    pad: usize,
    weights: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SpectralFilter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralFilter")
            .field("n", &self.n)
            .field("pad", &self.pad)
            .finish()
    }
}

/// Filtered field plus the fraction of its energy that landed in the
/// padding (and was discarded).
#[derive(Debug, Clone, PartialEq)]
pub struct Filtered {
    pub psi: Vec<Complex64>,
    pub pad_energy: f64,
}

impl SpectralFilter {
    pub fn new(n: usize, h: f64, d_norm: f64) -> Result<Self> {
        Self::with_padding(n, h, d_norm, ((n as f64) * PAD_FRACTION).ceil() as usize)
    }

    pub fn with_padding(n: usize, h: f64, d_norm: f64, pad: usize) -> Result<Self> {
        if n == 0 || !(h > 0.0) || !(d_norm >= 0.0 && d_norm.is_finite()) {
            return Err(invalid(format!(
                "bad filter setup: n={n}, h={h}, D={d_norm}"
            )));
        }
        let big = n + 2 * pad;
        let mut planner = FftPlanner::new();
        let dk = 2.0 * PI / (big as f64 * h);
        let weights = (0..big)
            .map(|m| {
                let m = if m <= big / 2 {
                    m as f64
                } else {
                    m as f64 - big as f64
                };
                let k = m * dk;
                (-d_norm * k * k).exp() / big as f64
            })
            .collect();
        Ok(Self {
            n,
            pad,
            weights,
            fwd: planner.plan_fft_forward(big),
            inv: planner.plan_fft_inverse(big),
        })
    }

    pub fn apply(&self, psi: &[Complex64]) -> Filtered {
        assert_eq!(psi.len(), self.n, "field length does not match the filter");
        let mut buf = vec![Complex64::new(0.0, 0.0); self.n + 2 * self.pad];
        buf[self.pad..self.pad + self.n].copy_from_slice(psi);
        self.fwd.process(&mut buf);
        for (z, w) in buf.iter_mut().zip(&self.weights) {
            *z *= w;
        }
        self.inv.process(&mut buf);
        let total: f64 = buf.iter().map(|z| z.norm_sqr()).sum();
        let inside: f64 = buf[self.pad..self.pad + self.n]
            .iter()
            .map(|z| z.norm_sqr())
            .sum();
        let pad_energy = if total > 0.0 {
            (total - inside) / total
        } else {
            0.0
        };
        if self.pad > 0 && pad_energy > PAD_WARN && !PAD_WARNED.swap(true, Ordering::Relaxed) {
            log::warn!(
                "{:.2e} of the filtered energy reached the padding; widen the grid if this is not aperture loss",
                pad_energy
            );
        }
        Filtered {
            psi: buf[self.pad..self.pad + self.n].to_vec(),
            pad_energy,
        }
    }
}

/// Applies `exp(D ∂²)` to samples with spacing `h`, zero-padded by 25% on
/// each side.
pub fn huygens_filter(psi: &[Complex64], d_norm: f64, h: f64) -> Result<Vec<Complex64>> {
    Ok(SpectralFilter::new(psi.len(), h, d_norm)?.apply(psi).psi)
}

/// Same filter on a periodic grid (no padding).
pub fn periodic_filter(psi: &[Complex64], d_norm: f64, h: f64) -> Result<Vec<Complex64>> {
    Ok(SpectralFilter::with_padding(psi.len(), h, d_norm, 0)?
        .apply(psi)
        .psi)
}

/// `P = exp(g) r(x) exp(D ∂²)` on the grid interior.
#[derive(Debug, Clone)]
pub struct RoundTripOperator {
    pub g: f64,
    pub r_profile: Vec<Complex64>,
    pub d_norm: f64,
    pub grid: Grid,
    filter: SpectralFilter,
}

impl RoundTripOperator {
    pub fn new(g: f64, r_profile: Vec<Complex64>, d_norm: f64, grid: Grid) -> Result<Self> {
        if r_profile.len() != grid.n() {
            return Err(invalid("mirror profile length does not match the grid"));
        }
        if !g.is_finite() {
            return Err(invalid("gain must be finite"));
        }
        let filter = SpectralFilter::new(grid.n(), grid.h(), d_norm)?;
        Ok(Self {
            g,
            r_profile,
            d_norm,
            grid,
            filter,
        })
    }

    /// Round trip equivalent to the time step `scale` of `-(H - g0)`:
    /// `r = exp(-scale V)`, gain `scale g0`, filter strength `scale`.
    /// Samples outside the grid are fully absorbed, which realizes the
    /// hard walls of a Squire aperture.
    pub fn from_potential(spec: &PotentialSpec, grid: &Grid, g0: f64, scale: f64) -> Result<Self> {
        let v = evaluate_potential(spec, grid)?;
        let r = v.iter().map(|vj| (-vj * scale).exp()).collect();
        Self::new(g0 * scale, r, scale, *grid)
    }

    /// Every parameter multiplied by `s`: `exp(s g) r^s exp(s D ∂²)`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        let r = self.r_profile.iter().map(|z| (z.ln() * s).exp()).collect();
        Self::new(self.g * s, r, self.d_norm * s, self.grid)
    }

    pub fn is_passive(&self) -> bool {
        self.r_profile.iter().all(|z| z.norm() <= 1.0 + 1e-12)
    }

    pub fn filter(&self) -> &SpectralFilter {
        &self.filter
    }
}

/// One round trip: filter, then mirror and gain.
pub fn round_trip(psi: &[Complex64], op: &RoundTripOperator) -> Result<Vec<Complex64>> {
    if psi.len() != op.grid.n() {
        return Err(invalid("field length does not match the round-trip grid"));
    }
    let gain = op.g.exp();
    let mut out = op.filter.apply(psi).psi;
    for (z, r) in out.iter_mut().zip(&op.r_profile) {
        *z *= r * gain;
    }
    Ok(out)
}

/// Per-round-trip amplification of the dominant transverse mode, from
/// power iteration started at `psi0`.
pub fn growth_factor(psi0: &[Complex64], op: &RoundTripOperator, iterations: usize) -> Result<f64> {
    let mut psi = psi0.to_vec();
    let mut factor = 0.0;
    for _ in 0..iterations.max(1) {
        let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::NonFinite { t: 0.0 });
        }
        psi.iter_mut().for_each(|z| *z /= norm);
        psi = round_trip(&psi, op)?;
        factor = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    }
    Ok(factor)
}

/// Orthonormal sine basis of the Dirichlet grid and the wave numbers of its
/// columns.
fn sine_basis(grid: &Grid) -> (DMatrix<f64>, Vec<f64>) {
    let n = grid.n();
    let norm = (2.0 / (n + 1) as f64).sqrt();
    let s = DMatrix::from_fn(n, n, |j, m| {
        norm * (PI * ((j + 1) * (m + 1)) as f64 / (n + 1) as f64).sin()
    });
    let box_len = (n + 1) as f64 * grid.h();
    let k = (1..=n).map(|m| PI * m as f64 / box_len).collect();
    (s, k)
}

/// Sine-spectral matrix of `D ∂²` with Dirichlet walls at the grid ends.
pub fn spectral_laplacian(grid: &Grid, d_norm: f64) -> DMatrix<Complex64> {
    spectral_function(grid, |k| -d_norm * k * k)
}

fn spectral_function(grid: &Grid, f: impl Fn(f64) -> f64) -> DMatrix<Complex64> {
    let (s, k) = sine_basis(grid);
    let d = DMatrix::from_diagonal(&DVector::from_iterator(k.len(), k.iter().map(|&k| f(k))));
    (&s * d * &s).map(|x| Complex64::new(x, 0.0))
}

/// `exp(A) v` from the eigendecomposition `A = V Λ V⁻¹`.
pub fn expm_apply(a: &DMatrix<Complex64>, v: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = a.nrows();
    if a.ncols() != n || v.len() != n {
        return Err(invalid(
            "expm_apply needs a square matrix and a matching vector",
        ));
    }
    let values = hessenberg_eigenvalues(a)?;
    let mut vecs = DMatrix::<Complex64>::zeros(n, n);
    for (j, &lambda) in values.iter().enumerate() {
        let col = dense_inverse_iteration(a, lambda, 3);
        vecs.set_column(j, &DVector::from_vec(col));
    }
    let coeffs = vecs
        .clone()
        .lu()
        .solve(&DVector::from_column_slice(v))
        .ok_or_else(|| Error::NoConvergence("eigenvector matrix is singular".into()))?;
    let scaled = DVector::from_iterator(n, coeffs.iter().zip(&values).map(|(c, l)| c * l.exp()));
    Ok((vecs * scaled).iter().copied().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BchReport {
    pub scales: Vec<f64>,
    /// `‖P_s ψ - exp(π0_s) ψ‖ / ‖ψ‖` at each scale.
    pub errors: Vec<f64>,
    /// `errors[i] / errors[i + 1]`.
    pub ratios: Vec<f64>,
}

/// Size of the neglected Baker–Campbell–Hausdorff remainder: compares the
/// split map `exp(g) r exp(D∂²)` with `exp(g + ln r + D∂²)` for the
/// operator scaled by each of `scales`.
///
/// Both sides use the sine-spectral `∂²` of the grid, so `exp(D∂²)` is
/// exact and the difference is the commutator series alone. Dense and
/// `O(n³)`; meant for grids of a few hundred points.
pub fn bch_consistency(
    psi: &[Complex64],
    op: &RoundTripOperator,
    scales: &[f64],
) -> Result<BchReport> {
    let grid = &op.grid;
    if psi.len() != grid.n() {
        return Err(invalid("field length does not match the round-trip grid"));
    }
    if op.r_profile.iter().any(|z| z.norm() == 0.0) {
        return Err(invalid(
            "ln r is undefined where the mirror is fully absorbing",
        ));
    }
    let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let ln_r: Vec<Complex64> = op.r_profile.iter().map(|z| z.ln()).collect();
    let mut errors = Vec::with_capacity(scales.len());
    for &s in scales {
        let filter = spectral_function(grid, |k| (-s * op.d_norm * k * k).exp());
        let filtered = &filter * DVector::from_column_slice(psi);
        let split: Vec<Complex64> = filtered
            .iter()
            .zip(&ln_r)
            .map(|(z, lr)| z * ((lr + op.g) * s).exp())
            .collect();
        let mut pi0 = spectral_laplacian(grid, s * op.d_norm);
        for (j, lr) in ln_r.iter().enumerate() {
            pi0[(j, j)] += (lr + op.g) * s;
        }
        let joint = expm_apply(&pi0, psi)?;
        let err = split
            .iter()
            .zip(&joint)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        errors.push(err / norm);
    }
    let ratios = errors.windows(2).map(|w| w[0] / w[1]).collect();
    Ok(BchReport {
        scales: scales.to_vec(),
        errors,
        ratios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_grid;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn gaussian(grid: &Grid, x0: f64, w: f64) -> Vec<Complex64> {
        grid.points()
            .iter()
            .map(|&x| c((-((x - x0) / w).powi(2)).exp(), 0.0))
            .collect()
    }

    #[test]
    fn he_ne_scales() {
        let cfg = PhysicalConfig::he_ne();
        let s = derived_scales(&cfg).unwrap();
        assert!((s.l - 57e-6).abs() < 0.01 * 57e-6);
        assert!((s.t_r - 4e-9).abs() < 0.05 * 4e-9);
        assert!((s.l - s.d.sqrt()).abs() < 1e-20);
        assert!((s.l - cfg.lambda * cfg.f / (2f64.sqrt() * PI * cfg.w_a)).abs() < 1e-18);
        let wide = PhysicalConfig {
            w_a: 2.0 * cfg.w_a,
            ..cfg
        };
        assert!((derived_scales(&wide).unwrap().l * 2.0 - s.l).abs() < 1e-18);
        assert!((aperture_width(6.0, &cfg).unwrap() - 684e-6).abs() < 0.01 * 684e-6);
        assert!(derived_scales(&PhysicalConfig { f: 0.0, ..cfg }).is_err());
    }

    #[test]
    fn tilt_conversion() {
        let cfg = PhysicalConfig::he_ne();
        assert_eq!(tilt_to_gamma(0.0, &cfg).unwrap(), 0.0);
        for alpha in [1e-7, 3.3e-5, 0.01] {
            let back = gamma_to_tilt(tilt_to_gamma(alpha, &cfg).unwrap(), &cfg).unwrap();
            assert!((back - alpha).abs() <= 1e-15 * alpha);
        }
        let squire = gamma_to_tilt(0.056, &cfg).unwrap();
        assert!((squire - 1e-4).abs() < 0.05e-4, "{squire}");
        let dimer = gamma_to_tilt(0.00065, &cfg).unwrap();
        assert!((dimer - 1.2e-6).abs() < 0.12e-6, "{dimer}");
    }

    #[test]
    fn filter_identity_and_plane_waves() {
        let grid = build_grid(0.0, 10.0, 63).unwrap();
        let psi = gaussian(&grid, 5.0, 1.0);
        let out = huygens_filter(&psi, 0.0, grid.h()).unwrap();
        assert!(psi.iter().zip(&out).all(|(a, b)| (a - b).norm() < 1e-14));

        // a plane wave that is periodic on the sample set
        let n = 64;
        let h = 0.1;
        let k = 2.0 * PI * 5.0 / (n as f64 * h);
        let wave: Vec<Complex64> = (0..n)
            .map(|j| Complex64::from_polar(1.0, k * j as f64 * h))
            .collect();
        let out = periodic_filter(&wave, 0.3, h).unwrap();
        let factor = (-0.3 * k * k).exp();
        assert!(wave
            .iter()
            .zip(&out)
            .all(|(a, b)| (a * factor - b).norm() < 1e-13));
    }

    /// A Gaussian `exp(-x²/w²)` spreads to `w'² = w² + 4D` with its integral
    /// conserved.
    #[test]
    fn gaussian_broadening() {
        let grid = build_grid(-20.0, 20.0, 799).unwrap();
        let (w, d): (f64, f64) = (1.5, 0.7);
        let out = huygens_filter(&gaussian(&grid, 0.0, w), d, grid.h()).unwrap();
        let w2 = (w * w + 4.0 * d).sqrt();
        let amp = w / w2;
        let expect = gaussian(&grid, 0.0, w2);
        let err = out
            .iter()
            .zip(&expect)
            .map(|(a, b)| (a - b * amp).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn filter_is_a_contraction() {
        let grid = build_grid(-5.0, 5.0, 127).unwrap();
        let psi: Vec<Complex64> = grid
            .points()
            .iter()
            .map(|&x| c(x.sin(), (3.0 * x).cos()))
            .collect();
        let out = huygens_filter(&psi, 0.5, grid.h()).unwrap();
        let spec = |v: &[Complex64]| {
            let mut b = v.to_vec();
            FftPlanner::new().plan_fft_forward(b.len()).process(&mut b);
            b
        };
        let norm = |v: &[Complex64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>();
        assert!(norm(&out) <= norm(&psi));
        let (a, b) = (
            spec(&psi),
            spec(&periodic_filter(&psi, 0.5, grid.h()).unwrap()),
        );
        assert!(a.iter().zip(&b).all(|(x, y)| y.norm() <= x.norm() + 1e-12));
    }

    #[test]
    fn trivial_round_trips() {
        let grid = build_grid(-6.0, 6.0, 101).unwrap();
        let psi: Vec<Complex64> = gaussian(&grid, 0.5, 1.0)
            .iter()
            .map(|z| z * c(0.3, 1.0))
            .collect();
        let id = RoundTripOperator::new(0.0, vec![c(1.0, 0.0); 101], 0.0, grid).unwrap();
        let out = round_trip(&psi, &id).unwrap();
        assert!(psi.iter().zip(&out).all(|(a, b)| (a - b).norm() < 1e-14));

        let q: f64 = 0.37;
        let balanced = RoundTripOperator::new(q, vec![c((-q).exp(), 0.0); 101], 0.0, grid).unwrap();
        assert!(balanced.is_passive());
        let out = round_trip(&psi, &balanced).unwrap();
        assert!(psi.iter().zip(&out).all(|(a, b)| (a - b).norm() < 1e-14));
    }

    /// With a hard-edged aperture the mirror edge absorbs like a wall a
    /// fraction of the diffusion length away, so the apparent loss rate
    /// approaches `E1` only as `√s`.
    #[test]
    fn squire_growth_approaches_lowest_level() {
        let grid = build_grid(-6.0, 6.0, 400).unwrap();
        let spec = PotentialSpec::SquireWell { u: 6.0, gamma: 0.0 };
        let op = crate::lattice::assemble_hamiltonian(&spec, &grid, 0.0).unwrap();
        let e1 = crate::spectra::eig(&op, 1).unwrap().eigenvalues[0].re;
        let g0 = e1 + 0.01;
        let seed = crate::dynamics::init_noise(&grid, 1.0, 3).unwrap().psi;
        let rate_error = |s: f64| {
            let rt = RoundTripOperator::from_potential(&spec, &grid, g0, s).unwrap();
            let f = growth_factor(&seed, &rt, (3000.0 / s) as usize).unwrap();
            e1 - (g0 - f.ln() / s)
        };
        let (e_1, e_q) = (rate_error(1.0), rate_error(0.25));
        assert!(e_1 > 0.0 && e_1 / e1 < 0.3, "{e_1}");
        assert!((e_1 / e_q - 2.0).abs() < 0.3, "{}", e_1 / e_q);
    }

    /// Smooth mirror: growth per unit action converges to `g0 - E1` at O(s²),
    /// since `exp(sA) exp(sB)` is similar to the symmetric split product.
    #[test]
    fn smooth_mirror_growth_matches_spectrum() {
        let grid = build_grid(-30.0, 30.0, 600).unwrap();
        let spec = PotentialSpec::QuarticDoubleWell {
            beta: 1e-3,
            x0: 0.5,
            gamma: 0.0,
        };
        let op = crate::lattice::assemble_hamiltonian(&spec, &grid, 0.0).unwrap();
        let e1 = crate::spectra::eig(&op, 1).unwrap().eigenvalues[0].re;
        let g0 = 0.2;
        let seed = gaussian(&grid, 1.0, 4.0);
        let rate_error = |s: f64| {
            let rt = RoundTripOperator::from_potential(&spec, &grid, g0, s).unwrap();
            let f = growth_factor(&seed, &rt, (2000.0 / s) as usize).unwrap();
            ((g0 - f.ln() / s) - e1).abs()
        };
        let (a, b) = (rate_error(0.2), rate_error(0.1));
        assert!(a < 0.02 * e1, "{a}");
        assert!((a / b - 4.0).abs() < 0.8, "{}", a / b);
    }

    #[test]
    fn continuous_limit_matches_crank_nicolson() {
        let grid = build_grid(-30.0, 30.0, 1500).unwrap();
        let spec = PotentialSpec::QuarticDoubleWell {
            beta: 1e-3,
            x0: 3.0,
            gamma: 0.05,
        };
        let h_op = crate::lattice::assemble_hamiltonian(&spec, &grid, 0.1).unwrap();
        let psi = gaussian(&grid, 1.0, 2.0);
        let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let mismatch = |s: f64| {
            let rt = RoundTripOperator::from_potential(&spec, &grid, 0.1, s).unwrap();
            let a = round_trip(&psi, &rt).unwrap();
            let mut b = psi.clone();
            crate::dynamics::Stepper::new(&h_op, s)
                .unwrap()
                .linear_step(&mut b);
            a.iter()
                .zip(&b)
                .map(|(x, y)| (x - y).norm_sqr())
                .sum::<f64>()
                .sqrt()
                / norm
        };
        let (e1, e2, e4) = (mismatch(0.4), mismatch(0.2), mismatch(0.1));
        assert!((e1 / e2 - 4.0).abs() < 0.8, "{e1} {e2}");
        assert!((e2 / e4 - 4.0).abs() < 0.8, "{e2} {e4}");
    }

    #[test]
    fn expm_matches_pade_oracle() {
        let grid = build_grid(-3.0, 3.0, 24).unwrap();
        let mut a = spectral_laplacian(&grid, 0.3);
        for (j, x) in grid.points().iter().enumerate() {
            a[(j, j)] += c(-0.1 * x * x, 0.2 * x);
        }
        let v: Vec<Complex64> = (0..24)
            .map(|j| c((j as f64).sin(), 0.1 * j as f64))
            .collect();
        let ours = expm_apply(&a, &v).unwrap();
        let oracle = a.exp() * DVector::from_vec(v);
        let err = ours
            .iter()
            .zip(oracle.iter())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn bch_remainder_vanishes_for_uniform_mirror() {
        let grid = build_grid(-6.0, 6.0, 60).unwrap();
        let op = RoundTripOperator::new(0.1, vec![c(0.9, 0.1); 60], 1.0, grid).unwrap();
        let rep = bch_consistency(&gaussian(&grid, 0.5, 1.5), &op, &[1.0]).unwrap();
        assert!(rep.errors[0] < 1e-11, "{:?}", rep.errors);
    }

    #[test]
    fn bch_remainder_is_second_order() {
        let grid = build_grid(-6.0, 6.0, 90).unwrap();
        let spec = PotentialSpec::SquireWell {
            u: 6.0,
            gamma: 0.04,
        };
        let op = RoundTripOperator::from_potential(&spec, &grid, 0.1, 1.0).unwrap();
        let lowest: Vec<Complex64> = grid
            .points()
            .iter()
            .map(|&x| c((PI * x / 12.0).cos(), 0.0))
            .collect();
        let rep = bch_consistency(&lowest, &op, &[1.0, 0.5, 0.25]).unwrap();
        for r in &rep.ratios {
            assert!((r - 4.0).abs() < 0.8, "{rep:?}");
        }
    }
}
