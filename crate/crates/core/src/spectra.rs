//! Complex spectra of the discretized operator, PT-threshold scans and the
//! pair of modes that share a gain threshold above the transition.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigen::{
    dense_inverse_iteration, fix_phase, hessenberg_eigenvalues, tridiagonal_eigenvalues,
    tridiagonal_inverse_iteration,
};
use crate::error::{invalid, Error, Result};
use crate::lattice::{assemble_hamiltonian, Grid, OperatorMatrix, PotentialSpec};
use crate::table::Table;

/// Default imaginary-part threshold separating real from complex spectra.
pub const TOL_REAL: f64 = 1e-7;
/// Eigenvalues closer than this are treated as coalesced (near-defective).
pub const NEAR_DEFECTIVE_GAP: f64 = 1e-6;
const INVERSE_ITERATION_STEPS: usize = 3;

/// Eigenvalues sorted by real part (ties by imaginary part) with unit-norm
/// right eigenvectors whose largest entry is real and positive.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: Vec<Complex64>,
    pub right_vectors: Vec<Vec<Complex64>>,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }
}

/// Sorts ascending by real part; real parts equal to within a relative
/// 1e-9 count as ties and are ordered by imaginary part.
pub fn sort_eigenvalues(values: &mut [Complex64]) {
    values.sort_by(|a, b| a.re.total_cmp(&b.re));
    let mut start = 0;
    while start < values.len() {
        let anchor = values[start].re;
        let tol = 1e-9 * anchor.abs().max(1.0);
        let mut end = start + 1;
        while end < values.len() && (values[end].re - anchor).abs() <= tol {
            end += 1;
        }
        values[start..end].sort_by(|a, b| a.im.total_cmp(&b.im));
        start = end;
    }
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(invalid(format!(
            "requested k = {k} eigenpairs from an order-{n} matrix"
        )));
    }
    Ok(())
}

/// All eigenvalues of the operator, sorted.
///
/// The tridiagonal QL route is tried first; if a complex orthogonal
/// rotation breaks down the dense Hessenberg QR route takes over.
pub fn eigenvalues(op: &OperatorMatrix) -> Result<Vec<Complex64>> {
    let n = op.n();
    let off = vec![Complex64::new(op.off_diag(), 0.0); n - 1];
    let mut values = match tridiagonal_eigenvalues(op.diag(), &off) {
        Ok(v) => v,
        Err(Error::NoConvergence(_)) => hessenberg_eigenvalues(&op.to_dense())?,
        Err(e) => return Err(e),
    };
    sort_eigenvalues(&mut values);
    Ok(values)
}

/// Residual `||H v - E v||` of an eigenpair.
pub fn residual(op: &OperatorMatrix, value: Complex64, v: &[Complex64]) -> f64 {
    op.apply(v)
        .iter()
        .zip(v)
        .map(|(hv, vj)| (hv - vj * value).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

fn refine_pair(
    value: Complex64,
    v: Vec<Complex64>,
    apply: impl Fn(&[Complex64]) -> Vec<Complex64>,
) -> (Complex64, Vec<Complex64>) {
    // Rayleigh quotient for a unit vector; keep whichever value has the
    // smaller residual.
    let hv = apply(&v);
    let rq: Complex64 = v.iter().zip(&hv).map(|(a, b)| a.conj() * b).sum();
    let res = |e: Complex64| -> f64 {
        hv.iter()
            .zip(&v)
            .map(|(h, x)| (h - x * e).norm_sqr())
            .sum::<f64>()
    };
    if res(rq) < res(value) {
        (rq, v)
    } else {
        (value, v)
    }
}

/// The `k` eigenpairs of smallest real part.
pub fn eig(op: &OperatorMatrix, k: usize) -> Result<Spectrum> {
    let n = op.n();
    check_k(k, n)?;
    let values = eigenvalues(op)?;
    let off = vec![Complex64::new(op.off_diag(), 0.0); n - 1];
    let mut pairs: Vec<(Complex64, Vec<Complex64>)> = values[..k]
        .iter()
        .map(|&e| {
            let v =
                tridiagonal_inverse_iteration(&off, op.diag(), &off, e, INVERSE_ITERATION_STEPS);
            refine_pair(e, v, |x| op.apply(x))
        })
        .collect();
    finish(&mut pairs)
}

/// The `k` eigenpairs of smallest real part of a general dense matrix.
pub fn eig_dense(m: &DMatrix<Complex64>, k: usize) -> Result<Spectrum> {
    let n = m.nrows();
    check_k(k, n)?;
    let mut values = hessenberg_eigenvalues(m)?;
    sort_eigenvalues(&mut values);
    let mut pairs: Vec<(Complex64, Vec<Complex64>)> = values[..k]
        .iter()
        .map(|&e| {
            let v = dense_inverse_iteration(m, e, INVERSE_ITERATION_STEPS);
            refine_pair(e, v, |x| {
                let xv = nalgebra::DVector::from_column_slice(x);
                (m * xv).iter().copied().collect()
            })
        })
        .collect();
    finish(&mut pairs)
}

fn finish(pairs: &mut [(Complex64, Vec<Complex64>)]) -> Result<Spectrum> {
    let mut eigenvalues: Vec<Complex64> = pairs.iter().map(|p| p.0).collect();
    sort_eigenvalues(&mut eigenvalues);
    // keep vectors aligned with the (possibly refined) sorted values
    let mut right_vectors = Vec::with_capacity(pairs.len());
    let mut used = vec![false; pairs.len()];
    for e in &eigenvalues {
        let idx = (0..pairs.len())
            .filter(|&i| !used[i])
            .find(|&i| pairs[i].0 == *e)
            .expect("sorted value comes from the pair list");
        used[idx] = true;
        let mut v = std::mem::take(&mut pairs[idx].1);
        fix_phase(&mut v);
        right_vectors.push(v);
    }
    Ok(Spectrum {
        eigenvalues,
        right_vectors,
    })
}

/// Largest `|Im E|` over the spectrum.
pub fn max_abs_imag(s: &Spectrum) -> f64 {
    max_abs_imag_of(&s.eigenvalues)
}

pub fn max_abs_imag_of(values: &[Complex64]) -> f64 {
    values.iter().map(|e| e.im.abs()).fold(0.0, f64::max)
}

/// Settings for [`scan_threshold`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanSettings {
    /// Number of lowest eigenvalues inspected at each γ.
    pub k: usize,
    pub tol_real: f64,
    pub tol_gamma: f64,
}

impl ScanSettings {
    pub fn squire() -> Self {
        Self {
            k: 6,
            tol_real: TOL_REAL,
            tol_gamma: 1e-4,
        }
    }

    pub fn double_well() -> Self {
        Self {
            k: 6,
            tol_real: TOL_REAL,
            tol_gamma: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub gamma_pt: f64,
    pub bracket: (f64, f64),
    /// Index (in real-part order) of the first eigenvalue of the lowest
    /// complex-conjugate pair at the upper end of the bracket.
    pub pair_index: usize,
    pub max_imag_at_hi: f64,
    pub evaluations: usize,
}

fn lowest_values(
    family: &PotentialSpec,
    grid: &Grid,
    g0: f64,
    gamma: f64,
    k: usize,
) -> Result<Vec<Complex64>> {
    let op = assemble_hamiltonian(&family.with_gamma(gamma), grid, g0)?;
    check_k(k, op.n())?;
    let mut v = eigenvalues(&op)?;
    v.truncate(k);
    Ok(v)
}

/// Bisects on γ for the point where the lowest `k` eigenvalues stop being
/// real (`max |Im E| > tol_real`).
pub fn scan_threshold(
    family: &PotentialSpec,
    grid: &Grid,
    g0: f64,
    gamma_range: (f64, f64),
    settings: ScanSettings,
) -> Result<ThresholdResult> {
    let (mut lo, mut hi) = gamma_range;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(invalid(format!(
            "gamma range [{lo}, {hi}] must satisfy lo < hi"
        )));
    }
    if !(settings.tol_gamma > 0.0 && settings.tol_real > 0.0) {
        return Err(invalid("scan tolerances must be positive"));
    }
    let imag_at =
        |g: f64| lowest_values(family, grid, g0, g, settings.k).map(|v| max_abs_imag_of(&v));
    let mut evaluations = 2;
    if imag_at(lo)? > settings.tol_real || imag_at(hi)? <= settings.tol_real {
        return Err(Error::NoTransition { lo, hi });
    }
    while hi - lo > settings.tol_gamma {
        let mid = 0.5 * (lo + hi);
        evaluations += 1;
        if imag_at(mid)? > settings.tol_real {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let at_hi = lowest_values(family, grid, g0, hi, settings.k)?;
    let pair_index = at_hi
        .iter()
        .position(|e| e.im.abs() > settings.tol_real)
        .unwrap_or(0);
    Ok(ThresholdResult {
        gamma_pt: 0.5 * (lo + hi),
        bracket: (lo, hi),
        pair_index,
        max_imag_at_hi: max_abs_imag_of(&at_hi),
        evaluations,
    })
}

/// The two modes sharing the lowest gain threshold above the PT transition,
/// with their adjoint partners.
///
/// With `L = -H(g0 = g0_th)`, `u1` satisfies `L u1 = +iΩ u1` and `u2`
/// satisfies `L u2 = -iΩ u2`. The adjoint vectors are eigenvectors of `H†`
/// normalized so that `<u_i†|u_i> = 1`, unless the pair is near-defective.
#[derive(Debug, Clone, PartialEq)]
pub struct ModePair {
    pub omega: f64,
    /// Gain at threshold, `Re E1` of `H(g0 = 0)`.
    pub g0_th: f64,
    /// Eigenvalues of `H(g0 = 0)` for `u1` and `u2`.
    pub e1: Complex64,
    pub e2: Complex64,
    pub u1: Vec<Complex64>,
    pub u2: Vec<Complex64>,
    pub u1_adj: Vec<Complex64>,
    pub u2_adj: Vec<Complex64>,
    pub near_defective: bool,
}

/// Hermitian inner product `<a|b> = Σ conj(a_j) b_j`.
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn mode_pair_at(op: &OperatorMatrix) -> Result<ModePair> {
    if op.n() < 2 {
        return Err(invalid("operator too small for a mode pair"));
    }
    let spec = eig(op, 2)?;
    let (ea, eb) = (spec.eigenvalues[0], spec.eigenvalues[1]);
    if ea.im.abs() <= TOL_REAL || eb.im.abs() <= TOL_REAL {
        return Err(Error::BelowThreshold(format!(
            "lowest eigenvalues {ea} and {eb} are real"
        )));
    }
    // u1 carries Im E = -Ω
    let (i1, i2) = if ea.im < 0.0 { (0, 1) } else { (1, 0) };
    let shift = Complex64::new(op.g0(), 0.0);
    let e1 = spec.eigenvalues[i1] + shift;
    let e2 = spec.eigenvalues[i2] + shift;
    let u1 = spec.right_vectors[i1].clone();
    let u2 = spec.right_vectors[i2].clone();

    let adj = op.adjoint();
    let n = op.n();
    let off = vec![Complex64::new(adj.off_diag(), 0.0); n - 1];
    let left = |e: Complex64| {
        let w = tridiagonal_inverse_iteration(
            &off,
            adj.diag(),
            &off,
            e.conj(),
            INVERSE_ITERATION_STEPS,
        );
        refine_pair(e.conj(), w, |x| adj.apply(x)).1
    };
    let mut u1_adj = left(spec.eigenvalues[i1]);
    let mut u2_adj = left(spec.eigenvalues[i2]);
    let near_defective = (e1 - e2).norm() < NEAR_DEFECTIVE_GAP;
    if !near_defective {
        for (w, u) in [(&mut u1_adj, &u1), (&mut u2_adj, &u2)] {
            let p = inner(w, u);
            // <w|u> = 1 requires scaling w by 1/conj(p)
            let s = p.conj().inv();
            w.iter_mut().for_each(|z| *z *= s);
        }
    } else {
        fix_phase(&mut u1_adj);
        fix_phase(&mut u2_adj);
    }
    Ok(ModePair {
        omega: e1.im.abs(),
        g0_th: e1.re,
        e1,
        e2,
        u1,
        u2,
        u1_adj,
        u2_adj,
        near_defective,
    })
}

/// Spectra over a set of γ values.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumTable {
    pub gammas: Vec<f64>,
    /// Per-γ eigenvalues in sorted order.
    pub sorted: Vec<Vec<Complex64>>,
    /// Per-γ eigenvalues reordered so that column `i` follows one branch.
    pub branches: Vec<Vec<Complex64>>,
}

impl SpectrumTable {
    /// CSV layout: `gamma, Re E1..Ek, Im E1..Ek`, using the branch order.
    pub fn to_table(&self) -> Table {
        self.layout(&self.branches)
    }

    pub fn to_sorted_table(&self) -> Table {
        self.layout(&self.sorted)
    }

    fn layout(&self, rows: &[Vec<Complex64>]) -> Table {
        let k = rows.first().map_or(0, Vec::len);
        let header = std::iter::once("gamma".to_string())
            .chain((1..=k).map(|i| format!("re_e{i}")))
            .chain((1..=k).map(|i| format!("im_e{i}")));
        let mut t = Table::new(header);
        for (g, row) in self.gammas.iter().zip(rows) {
            let mut r = vec![*g];
            r.extend(row.iter().map(|e| e.re));
            r.extend(row.iter().map(|e| e.im));
            t.push(r);
        }
        t
    }
}

/// Reorders `next` so that entry `i` is the nearest unused neighbour of
/// `prev[i]`; ties go to the smaller index.
pub fn match_branches(prev: &[Complex64], next: &[Complex64]) -> Vec<Complex64> {
    let mut used = vec![false; next.len()];
    let mut out = Vec::with_capacity(prev.len());
    for p in prev {
        let mut best: Option<(usize, f64)> = None;
        for (j, q) in next.iter().enumerate() {
            if used[j] {
                continue;
            }
            let d = (q - p).norm();
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((j, d));
            }
        }
        if let Some((j, _)) = best {
            used[j] = true;
            out.push(next[j]);
        }
    }
    out
}

/// Lowest `k` eigenvalues at each γ, evaluated in parallel and continued
/// along branches.
pub fn spectrum_vs_gamma(
    family: &PotentialSpec,
    grid: &Grid,
    g0: f64,
    gammas: &[f64],
    k: usize,
) -> Result<SpectrumTable> {
    if let Some(g) = gammas.iter().find(|g| !g.is_finite()) {
        return Err(invalid(format!("non-finite gamma sample {g}")));
    }
    let sorted: Vec<Vec<Complex64>> = gammas
        .par_iter()
        .map(|&g| lowest_values(family, grid, g0, g, k))
        .collect::<Result<_>>()?;
    let mut branches: Vec<Vec<Complex64>> = Vec::with_capacity(sorted.len());
    for row in &sorted {
        let next = match branches.last() {
            Some(prev) => match_branches(prev, row),
            None => row.clone(),
        };
        branches.push(next);
    }
    Ok(SpectrumTable {
        gammas: gammas.to_vec(),
        sorted,
        branches,
    })
}
