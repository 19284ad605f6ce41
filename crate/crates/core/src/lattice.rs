//! Uniform grids, complex mirror potentials and the finite-difference
//! operator `H = -d²/dx² + V(x) - g0`.
//!
//! The operator is discretized with second-order central differences on
//! the interior points of a grid whose two endpoints carry Dirichlet zeros.
//! The result is a complex-symmetric tridiagonal matrix; it is stored in
//! banded form and only expanded to a dense matrix on request.

use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Relative tolerance used when matching grid endpoints to well walls.
const WALL_TOL: f64 = 1e-9;

/// Uniform grid of `n` interior points on `(x_min, x_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    n: usize,
    x_min: f64,
    x_max: f64,
    h: f64,
}

impl Grid {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    /// Grid spacing `(x_max - x_min) / (n + 1)`.
    pub fn h(&self) -> f64 {
        self.h
    }

    /// Coordinate of interior point `j` (zero based).
    pub fn x(&self, j: usize) -> f64 {
        self.x_min + (j + 1) as f64 * self.h
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.x(j)).collect()
    }

    /// True when the interior points are mirror images of each other, so
    /// that `x -> -x` is the index reversal `j -> n - 1 - j`.
    pub fn is_symmetric(&self) -> bool {
        (self.x_min + self.x_max).abs() <= WALL_TOL * (self.x_max - self.x_min)
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        self.n == other.n
            && (self.x_min - other.x_min).abs() <= WALL_TOL * self.h
            && (self.x_max - other.x_max).abs() <= WALL_TOL * self.h
    }
}

/// Builds a grid of `n` interior points; the endpoints are excluded.
pub fn build_grid(x_min: f64, x_max: f64, n: usize) -> Result<Grid> {
    if !x_min.is_finite() || !x_max.is_finite() {
        return Err(invalid(format!(
            "grid bounds must be finite, got [{x_min}, {x_max}]"
        )));
    }
    if x_max <= x_min {
        return Err(invalid(format!(
            "grid requires x_max > x_min, got [{x_min}, {x_max}]"
        )));
    }
    if n < 3 {
        return Err(invalid(format!("grid requires n >= 3, got {n}")));
    }
    Ok(Grid {
        n,
        x_min,
        x_max,
        h: (x_max - x_min) / (n + 1) as f64,
    })
}

/// Complex optical potential families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialSpec {
    /// Flat-bottomed well on `(-u, u)` with hard walls and a linear tilt
    /// `i gamma x`. The walls are realized only by the Dirichlet boundary,
    /// so the grid must span exactly `(-u, u)`.
    SquireWell { u: f64, gamma: f64 },
    /// `beta (x² - x0²)² + i gamma x`.
    QuarticDoubleWell { beta: f64, x0: f64, gamma: f64 },
    /// Reflectance and phase sampled on the grid interior, plus an optional
    /// extra tilt `i gamma x`.
    MirrorProfile {
        reflectance: Vec<f64>,
        phase: Vec<f64>,
        gamma: f64,
    },
}

impl PotentialSpec {
    pub fn gamma(&self) -> f64 {
        match self {
            PotentialSpec::SquireWell { gamma, .. }
            | PotentialSpec::QuarticDoubleWell { gamma, .. }
            | PotentialSpec::MirrorProfile { gamma, .. } => *gamma,
        }
    }

    /// Same family with a different tilt.
    pub fn with_gamma(&self, gamma: f64) -> PotentialSpec {
        let mut spec = self.clone();
        match &mut spec {
            PotentialSpec::SquireWell { gamma: g, .. }
            | PotentialSpec::QuarticDoubleWell { gamma: g, .. }
            | PotentialSpec::MirrorProfile { gamma: g, .. } => *g = gamma,
        }
        spec
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PotentialSpec::SquireWell { u, gamma } => {
                if !(u.is_finite() && *u > 0.0) {
                    return Err(invalid(format!("SquireWell needs u > 0, got {u}")));
                }
                finite("gamma", *gamma)
            }
            PotentialSpec::QuarticDoubleWell { beta, x0, gamma } => {
                if !(beta.is_finite() && *beta > 0.0) {
                    return Err(invalid(format!("double well needs beta > 0, got {beta}")));
                }
                if !(x0.is_finite() && *x0 > 0.0) {
                    return Err(invalid(format!("double well needs x0 > 0, got {x0}")));
                }
                finite("gamma", *gamma)
            }
            PotentialSpec::MirrorProfile {
                reflectance,
                phase,
                gamma,
            } => {
                if reflectance.len() != phase.len() {
                    return Err(invalid(format!(
                        "mirror profile has {} reflectance but {} phase samples",
                        reflectance.len(),
                        phase.len()
                    )));
                }
                check_reflectance(reflectance)?;
                finite("gamma", *gamma)
            }
        }
    }

    /// Default computational grid for the family.
    pub fn default_grid(&self) -> Result<Grid> {
        match self {
            PotentialSpec::SquireWell { u, .. } => build_grid(-u, *u, 2000),
            PotentialSpec::QuarticDoubleWell { .. } => build_grid(-30.0, 30.0, 3000),
            PotentialSpec::MirrorProfile { .. } => {
                Err(invalid("sampled mirror profiles carry no default grid"))
            }
        }
    }
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be finite, got {v}")))
    }
}

fn check_reflectance(r: &[f64]) -> Result<()> {
    match r.iter().position(|&r| !(r > 0.0 && r <= 1.0)) {
        Some(j) => Err(invalid(format!(
            "reflectance sample {j} = {} outside (0, 1]",
            r[j]
        ))),
        None => Ok(()),
    }
}

/// `V_j = -ln sqrt(R_j) - i Delta_j`.
pub fn potential_from_mirror(reflectance: &[f64], phase: &[f64]) -> Result<Vec<Complex64>> {
    if reflectance.len() != phase.len() {
        return Err(invalid("reflectance and phase sample counts differ"));
    }
    check_reflectance(reflectance)?;
    Ok(reflectance
        .iter()
        .zip(phase)
        .map(|(&r, &d)| Complex64::new(-0.5 * r.ln(), -d))
        .collect())
}

/// Samples the potential on the grid interior.
pub fn evaluate_potential(spec: &PotentialSpec, grid: &Grid) -> Result<Vec<Complex64>> {
    spec.validate()?;
    match spec {
        PotentialSpec::SquireWell { u, gamma } => {
            let tol = WALL_TOL * u.max(1.0);
            if grid.x_min() < -u - tol || grid.x_max() > u + tol {
                return Err(invalid(format!(
                    "grid [{}, {}] extends beyond the hard walls at ±{u}",
                    grid.x_min(),
                    grid.x_max()
                )));
            }
            if (grid.x_min() + u).abs() > tol || (grid.x_max() - u).abs() > tol {
                return Err(invalid(format!(
                    "grid endpoints [{}, {}] must coincide with the walls at ±{u}",
                    grid.x_min(),
                    grid.x_max()
                )));
            }
            Ok(grid
                .points()
                .into_iter()
                .map(|x| Complex64::new(0.0, gamma * x))
                .collect())
        }
        PotentialSpec::QuarticDoubleWell { beta, x0, gamma } => Ok(grid
            .points()
            .into_iter()
            .map(|x| {
                let s = x * x - x0 * x0;
                Complex64::new(beta * s * s, gamma * x)
            })
            .collect()),
        PotentialSpec::MirrorProfile {
            reflectance,
            phase,
            gamma,
        } => {
            if reflectance.len() != grid.n() {
                return Err(invalid(format!(
                    "mirror profile has {} samples but the grid has {} points",
                    reflectance.len(),
                    grid.n()
                )));
            }
            let mut v = potential_from_mirror(reflectance, phase)?;
            for (j, vj) in v.iter_mut().enumerate() {
                vj.im += gamma * grid.x(j);
            }
            Ok(v)
        }
    }
}

/// Tridiagonal discretization of `-d²/dx² + V(x) - g0`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    diag: Vec<Complex64>,
    off: f64,
    grid: Grid,
    g0: f64,
}

impl OperatorMatrix {
    /// Builds the operator from a potential already sampled on `grid`.
    pub fn from_potential(potential: &[Complex64], grid: Grid, g0: f64) -> Result<Self> {
        if potential.len() != grid.n() {
            return Err(invalid(format!(
                "potential has {} samples, grid has {}",
                potential.len(),
                grid.n()
            )));
        }
        finite("g0", g0)?;
        let inv_h2 = 1.0 / (grid.h() * grid.h());
        let diag = potential
            .iter()
            .map(|&v| v + Complex64::new(2.0 * inv_h2 - g0, 0.0))
            .collect();
        Ok(Self {
            diag,
            off: -inv_h2,
            grid,
            g0,
        })
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn g0(&self) -> f64 {
        self.g0
    }

    pub fn diag(&self) -> &[Complex64] {
        &self.diag
    }

    /// Value of every sub- and super-diagonal entry, `-1/h²`.
    pub fn off_diag(&self) -> f64 {
        self.off
    }

    /// Same operator with the gain shift replaced by `g0`.
    pub fn with_g0(&self, g0: f64) -> OperatorMatrix {
        let shift = Complex64::new(self.g0 - g0, 0.0);
        OperatorMatrix {
            diag: self.diag.iter().map(|&d| d + shift).collect(),
            off: self.off,
            grid: self.grid,
            g0,
        }
    }

    /// Potential samples `V(x_j)` recovered from the diagonal.
    pub fn potential(&self) -> Vec<Complex64> {
        let c = Complex64::new(-2.0 * self.off - self.g0, 0.0);
        self.diag.iter().map(|&d| d - c).collect()
    }

    /// Conjugate transpose, which for this complex-symmetric matrix is the
    /// entrywise conjugate.
    pub fn adjoint(&self) -> OperatorMatrix {
        OperatorMatrix {
            diag: self.diag.iter().map(|d| d.conj()).collect(),
            off: self.off,
            grid: self.grid,
            g0: self.g0,
        }
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let n = self.n();
        assert_eq!(v.len(), n, "vector length must match the operator");
        (0..n)
            .map(|j| {
                let mut acc = self.diag[j] * v[j];
                if j > 0 {
                    acc += v[j - 1] * self.off;
                }
                if j + 1 < n {
                    acc += v[j + 1] * self.off;
                }
                acc
            })
            .collect()
    }

    /// Infinity norm (maximum absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        let n = self.n();
        (0..n)
            .map(|j| {
                let neighbours = usize::from(j > 0) + usize::from(j + 1 < n);
                self.diag[j].norm() + neighbours as f64 * self.off.abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                self.diag[i]
            } else if i.abs_diff(j) == 1 {
                Complex64::new(self.off, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }
}

/// Assembles `H = -d²/dx² + V(x) - g0` on `grid`.
pub fn assemble_hamiltonian(spec: &PotentialSpec, grid: &Grid, g0: f64) -> Result<OperatorMatrix> {
    let v = evaluate_potential(spec, grid)?;
    OperatorMatrix::from_potential(&v, *grid, g0)
}

/// Mirror reflectance and phase read from a CSV file with columns
/// `x, R[, Delta]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MirrorSamples {
    pub x: Vec<f64>,
    pub reflectance: Vec<f64>,
    pub phase: Vec<f64>,
}

impl MirrorSamples {
    /// Reads a two- or three-column CSV. A non-numeric first row is taken
    /// as a header.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .flexible(true)
            .from_path(path)?;
        let mut out = MirrorSamples {
            x: Vec::new(),
            reflectance: Vec::new(),
            phase: Vec::new(),
        };
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parsed: std::result::Result<Vec<f64>, _> =
                rec.iter().map(|f| f.parse::<f64>()).collect();
            let vals = match parsed {
                Ok(v) => v,
                Err(_) if row == 0 => continue,
                Err(e) => return Err(invalid(format!("mirror csv row {}: {e}", row + 1))),
            };
            if !(2..=3).contains(&vals.len()) {
                return Err(invalid(format!(
                    "mirror csv row {} has {} columns, expected 2 or 3",
                    row + 1,
                    vals.len()
                )));
            }
            out.x.push(vals[0]);
            out.reflectance.push(vals[1]);
            out.phase.push(vals.get(2).copied().unwrap_or(0.0));
        }
        if out.x.len() < 2 {
            return Err(invalid("mirror csv needs at least two samples"));
        }
        if out.x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("mirror csv x column must be strictly increasing"));
        }
        check_reflectance(&out.reflectance)?;
        Ok(out)
    }

    /// Linearly interpolates the samples onto the grid interior and wraps
    /// them into a [`PotentialSpec::MirrorProfile`].
    pub fn to_spec(&self, grid: &Grid, gamma: f64) -> Result<PotentialSpec> {
        let (lo, hi) = (self.x[0], self.x[self.x.len() - 1]);
        let mut reflectance = Vec::with_capacity(grid.n());
        let mut phase = Vec::with_capacity(grid.n());
        for x in grid.points() {
            if x < lo || x > hi {
                return Err(invalid(format!(
                    "grid point {x} outside mirror samples [{lo}, {hi}]"
                )));
            }
            let k = self
                .x
                .partition_point(|&s| s <= x)
                .clamp(1, self.x.len() - 1);
            let t = (x - self.x[k - 1]) / (self.x[k] - self.x[k - 1]);
            reflectance.push(self.reflectance[k - 1] * (1.0 - t) + self.reflectance[k] * t);
            phase.push(self.phase[k - 1] * (1.0 - t) + self.phase[k] * t);
        }
        Ok(PotentialSpec::MirrorProfile {
            reflectance,
            phase,
            gamma,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn squire(gamma: f64) -> PotentialSpec {
        PotentialSpec::SquireWell { u: 6.0, gamma }
    }

    #[test]
    fn grid_arithmetic() {
        let g = build_grid(-6.0, 6.0, 5).unwrap();
        assert_eq!(g.h(), 2.0);
        assert_eq!(g.points(), vec![-4.0, -2.0, 0.0, 2.0, 4.0]);
        let g = build_grid(-6.0, 6.0, 1999).unwrap();
        assert!((g.h() - 0.006).abs() < 1e-15);
        assert_eq!(g.points().len(), 1999);
        assert!(g.is_symmetric());
    }

    #[test]
    fn grid_rejects_degenerate_input() {
        assert!(build_grid(0.0, 0.0, 10).is_err());
        assert!(build_grid(1.0, 0.0, 10).is_err());
        assert!(build_grid(0.0, 1.0, 2).is_err());
        assert!(build_grid(f64::NEG_INFINITY, 1.0, 10).is_err());
        assert!(build_grid(0.0, f64::NAN, 10).is_err());
    }

    #[test]
    fn mirror_potential_values() {
        let v = potential_from_mirror(&[1.0, 1.0], &[0.0, 0.0]).unwrap();
        assert!(v.iter().all(|z| z.norm() == 0.0));
        let v = potential_from_mirror(&[(-2.0f64).exp()], &[0.0]).unwrap();
        assert!((v[0].re - 1.0).abs() < 1e-15);
        assert!(potential_from_mirror(&[0.0], &[0.0]).is_err());
        assert!(potential_from_mirror(&[1.5], &[0.0]).is_err());
    }

    #[test]
    fn tilted_mirror_gives_linear_imaginary_potential() {
        // Delta(x) = c x with c standing for (2 pi / lambda) alpha L.
        let grid = build_grid(-1.0, 1.0, 9).unwrap();
        let c = 0.3;
        let r = vec![1.0; grid.n()];
        let d: Vec<f64> = grid.points().iter().map(|x| c * x).collect();
        let v = potential_from_mirror(&r, &d).unwrap();
        for (vj, x) in v.iter().zip(grid.points()) {
            assert_eq!(vj.re, 0.0);
            assert!((vj.im + c * x).abs() < 1e-15);
        }
    }

    #[test]
    fn potential_examples() {
        let grid = build_grid(-30.0, 30.0, 5).unwrap();
        let dw = PotentialSpec::QuarticDoubleWell {
            beta: 7e-6,
            x0: 10.0,
            gamma: 0.0,
        };
        let v = evaluate_potential(&dw, &grid).unwrap();
        // grid points are -20, -10, 0, 10, 20
        assert!((v[2].re - 0.07).abs() < 1e-15);
        assert_eq!(v[1].re, 0.0);
        assert_eq!(v[3].re, 0.0);

        let grid = build_grid(-6.0, 6.0, 2000).unwrap();
        let v = evaluate_potential(&squire(0.056), &grid).unwrap();
        let last = v[grid.n() - 1];
        assert!((last.im - 0.336).abs() < 1e-3);
        assert_eq!(last.re, 0.0);
    }

    #[test]
    fn squire_rejects_mismatched_walls() {
        let wide = build_grid(-7.0, 7.0, 100).unwrap();
        assert!(evaluate_potential(&squire(0.0), &wide).is_err());
        let narrow = build_grid(-5.0, 5.0, 100).unwrap();
        assert!(evaluate_potential(&squire(0.0), &narrow).is_err());
    }

    #[test]
    fn pt_symmetry_of_potential() {
        let grid = build_grid(-30.0, 30.0, 301).unwrap();
        let dw = PotentialSpec::QuarticDoubleWell {
            beta: 7e-6,
            x0: 10.0,
            gamma: 0.0007,
        };
        let g6 = build_grid(-6.0, 6.0, 300).unwrap();
        for (spec, grid) in [(dw, grid), (squire(0.07), g6)] {
            let v = evaluate_potential(&spec, &grid).unwrap();
            let n = v.len();
            for j in 0..n {
                assert!((v[n - 1 - j] - v[j].conj()).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn hermitian_structure_without_tilt() {
        let grid = build_grid(-6.0, 6.0, 50).unwrap();
        let op = assemble_hamiltonian(&squire(0.0), &grid, 0.0).unwrap();
        let m = op.to_dense();
        for i in 0..50 {
            for j in 0..50 {
                assert_eq!(m[(i, j)].im, 0.0);
                assert_eq!(m[(i, j)], m[(j, i)]);
                if i.abs_diff(j) > 1 {
                    assert_eq!(m[(i, j)].norm(), 0.0);
                }
            }
        }
    }

    #[test]
    fn complex_symmetric_with_tilt() {
        let grid = build_grid(-6.0, 6.0, 40).unwrap();
        let op = assemble_hamiltonian(&squire(0.07), &grid, 0.25).unwrap();
        let m = op.to_dense();
        assert_eq!(m, m.transpose());
        assert_eq!(op.adjoint().to_dense(), m.adjoint());
        let back = op.potential();
        let v = evaluate_potential(&squire(0.07), &grid).unwrap();
        for (a, b) in back.iter().zip(&v) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    /// The discrete Laplacian applied to sin(k x) returns k² sin(k x) up to
    /// O(h²); halving h divides the error by four.
    #[test]
    fn laplacian_is_second_order() {
        let k = 3.0 * std::f64::consts::PI / 12.0;
        let err = |n: usize| {
            let grid = build_grid(-6.0, 6.0, n).unwrap();
            let zero = vec![Complex64::new(0.0, 0.0); n];
            let op = OperatorMatrix::from_potential(&zero, grid, 0.0).unwrap();
            let v: Vec<Complex64> = grid
                .points()
                .iter()
                .map(|&x| Complex64::new((k * (x + 6.0)).sin(), 0.0))
                .collect();
            let lv = op.apply(&v);
            lv.iter()
                .zip(&v)
                .map(|(a, b)| (a - b * (k * k)).norm())
                .fold(0.0, f64::max)
        };
        // n + 1 intervals: 100 -> 200 halves h exactly.
        let ratio = err(99) / err(199);
        assert!((ratio - 4.0).abs() < 0.05, "ratio {ratio}");
    }

    #[test]
    fn mirror_csv_roundtrip() {
        let dir = std::env::temp_dir().join(format!("wickpt-mirror-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("mirror.csv");
        std::fs::write(&path, "x,R,Delta\n-2,0.5,0.1\n0,1.0,0.0\n2,0.5,-0.1\n").unwrap();
        let m = MirrorSamples::from_csv(&path).unwrap();
        assert_eq!(m.x, vec![-2.0, 0.0, 2.0]);
        let grid = build_grid(-2.0, 2.0, 3).unwrap();
        let spec = m.to_spec(&grid, 0.0).unwrap();
        let v = evaluate_potential(&spec, &grid).unwrap();
        assert!((v[1].re - 0.0).abs() < 1e-15);
        assert!((v[0].re + 0.5 * 0.75f64.ln()).abs() < 1e-12);
        assert!((v[0].im + 0.05).abs() < 1e-12);

        std::fs::write(&path, "-1,0.5\n0,0.0\n1,0.5\n").unwrap();
        assert!(MirrorSamples::from_csv(&path).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }
}
