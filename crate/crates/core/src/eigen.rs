//! Dense and tridiagonal complex eigensolvers.
//!
//! Two routes compute eigenvalues:
//!
//! * [`hessenberg_eigenvalues`] reduces a general complex matrix to upper
//!   Hessenberg form with Householder reflections and then runs shifted QR
//!   iterations (Wilkinson shift, exceptional shifts on stagnation).
//! * [`tridiagonal_eigenvalues`] handles complex-symmetric tridiagonal
//!   matrices with a QL iteration that uses complex orthogonal rotations
//!   (`cᵀc + sᵀs = 1`, no conjugation), which keeps the tridiagonal form and
//!   makes a sweep O(n). A rotation can break down on an isotropic vector
//!   (`f² + g² = 0`); the caller then falls back to the dense route.
//!
//! Eigenvectors are obtained afterwards by inverse iteration.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

const EPS: f64 = f64::EPSILON;
const MAX_ITER_PER_EIGENVALUE: usize = 60;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Eigenvalues of a complex-symmetric tridiagonal matrix with diagonal
/// `diag` and (sub = super) diagonal `off`, `off.len() == diag.len() - 1`.
pub fn tridiagonal_eigenvalues(diag: &[Complex64], off: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = diag.len();
    assert!(
        n > 0 && off.len() + 1 == n,
        "off-diagonal must have n - 1 entries"
    );
    let mut d = diag.to_vec();
    let mut e = off.to_vec();
    e.push(c(0.0));

    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].norm() + d[m + 1].norm();
                if e[m].norm() <= EPS * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > MAX_ITER_PER_EIGENVALUE {
                return Err(Error::NoConvergence(format!(
                    "tridiagonal QL stalled at index {l} after {iter} sweeps"
                )));
            }
            // Shift from the leading 2x2 block, choosing the root closer to d[l].
            let mut g = (d[l + 1] - d[l]) / (e[l] * 2.0);
            let mut r = (g * g + 1.0).sqrt();
            let denom = if (g + r).norm() >= (g - r).norm() {
                g + r
            } else {
                g - r
            };
            g = d[m] - d[l] + e[l] / denom;
            if iter % 20 == 0 {
                // exceptional shift
                g += e[l] * Complex64::new(0.75, 0.5);
            }
            let mut s = c(1.0);
            let mut cs = c(1.0);
            let mut p = c(0.0);
            let mut i = m;
            let mut underflow = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = cs * e[i];
                r = (f * f + g * g).sqrt();
                let scale = f.norm() + g.norm();
                if r.norm() <= 1e-12 * scale && scale > 0.0 {
                    return Err(Error::NoConvergence(
                        "complex orthogonal rotation hit an isotropic vector".into(),
                    ));
                }
                e[i + 1] = r;
                if scale == 0.0 {
                    d[i + 1] -= p;
                    e[m] = c(0.0);
                    underflow = true;
                    break;
                }
                s = f / r;
                cs = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + cs * b * 2.0;
                p = s * r;
                d[i + 1] = g + p;
                g = cs * r - b;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = c(0.0);
            if d.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::NoConvergence("non-finite value in QL sweep".into()));
            }
        }
    }
    Ok(d)
}

/// Reduces `a` to upper Hessenberg form in place with Householder
/// reflections (similarity transform; eigenvalues are preserved).
pub fn hessenberg_reduce(a: &mut DMatrix<Complex64>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "matrix must be square");
    if n < 3 {
        return;
    }
    let mut v = vec![c(0.0); n];
    for k in 0..n - 2 {
        let alpha_norm: f64 = (k + 1..n).map(|i| a[(i, k)].norm_sqr()).sum::<f64>().sqrt();
        if alpha_norm == 0.0 {
            continue;
        }
        let x0 = a[(k + 1, k)];
        let phase = if x0.norm() == 0.0 {
            c(1.0)
        } else {
            x0 / x0.norm()
        };
        // v = x + phase * ||x|| e1 avoids cancellation
        for i in k + 1..n {
            v[i] = a[(i, k)];
        }
        v[k + 1] += phase * alpha_norm;
        let vnorm2: f64 = (k + 1..n).map(|i| v[i].norm_sqr()).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        let tau = 2.0 / vnorm2;
        // A <- (I - tau v v^H) A
        for j in k..n {
            let mut s = c(0.0);
            for i in k + 1..n {
                s += v[i].conj() * a[(i, j)];
            }
            s *= tau;
            for i in k + 1..n {
                let vi = v[i];
                a[(i, j)] -= vi * s;
            }
        }
        // A <- A (I - tau v v^H)
        for i in 0..n {
            let mut s = c(0.0);
            for j in k + 1..n {
                s += a[(i, j)] * v[j];
            }
            s *= tau;
            for j in k + 1..n {
                let vj = v[j].conj();
                a[(i, j)] -= s * vj;
            }
        }
        for i in k + 2..n {
            a[(i, k)] = c(0.0);
        }
    }
}

/// Givens rotation `[c s; -s̄ c]` (c real) with `G [a; b] = [r; 0]`.
fn givens(a: Complex64, b: Complex64) -> (f64, Complex64) {
    let bn = b.norm();
    if bn == 0.0 {
        return (1.0, c(0.0));
    }
    let an = a.norm();
    if an == 0.0 {
        return (0.0, b.conj() / bn);
    }
    let r = an.hypot(bn);
    let cs = an / r;
    let s = (a / an) * b.conj() / r;
    (cs, s)
}

/// Eigenvalue of the trailing 2x2 block `[a b; c d]` closest to `d`.
fn wilkinson_shift(a: Complex64, b: Complex64, cc: Complex64, d: Complex64) -> Complex64 {
    let tr_half = (a + d) * 0.5;
    let det = a * d - b * cc;
    let disc = (tr_half * tr_half - det).sqrt();
    let l1 = tr_half + disc;
    let l2 = tr_half - disc;
    if (l1 - d).norm() <= (l2 - d).norm() {
        l1
    } else {
        l2
    }
}

/// All eigenvalues of a general complex square matrix.
pub fn hessenberg_eigenvalues(a: &DMatrix<Complex64>) -> Result<Vec<Complex64>> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "matrix must be square");
    if n == 0 {
        return Ok(Vec::new());
    }
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NoConvergence("matrix has non-finite entries".into()));
    }
    let mut h = a.clone();
    hessenberg_reduce(&mut h);
    let anorm = h
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);

    let mut eig = vec![c(0.0); n];
    let mut hi = n - 1;
    let mut iter = 0usize;
    let mut rot: Vec<(f64, Complex64)> = Vec::with_capacity(n);
    loop {
        if hi == 0 {
            eig[0] = h[(0, 0)];
            break;
        }
        // find the active block [lo, hi]
        let mut lo = hi;
        while lo > 0 {
            let sub = h[(lo, lo - 1)].norm();
            let mut scale = h[(lo, lo)].norm() + h[(lo - 1, lo - 1)].norm();
            if scale == 0.0 {
                scale = anorm;
            }
            if sub <= EPS * scale {
                h[(lo, lo - 1)] = c(0.0);
                break;
            }
            lo -= 1;
        }
        if lo == hi {
            eig[hi] = h[(hi, hi)];
            hi -= 1;
            iter = 0;
            continue;
        }
        iter += 1;
        if iter > MAX_ITER_PER_EIGENVALUE {
            return Err(Error::NoConvergence(format!(
                "Hessenberg QR stalled on block [{lo}, {hi}] after {} sweeps",
                iter - 1
            )));
        }
        let mu = if iter.is_multiple_of(10) {
            // exceptional shift
            h[(hi, hi)] + c(h[(hi, hi - 1)].norm() * 0.75)
        } else {
            wilkinson_shift(
                h[(hi - 1, hi - 1)],
                h[(hi - 1, hi)],
                h[(hi, hi - 1)],
                h[(hi, hi)],
            )
        };
        // explicit shifted QR step on the active block: H - mu I = QR, H <- RQ + mu I
        for k in lo..=hi {
            h[(k, k)] -= mu;
        }
        rot.clear();
        for k in lo..hi {
            let (cs, s) = givens(h[(k, k)], h[(k + 1, k)]);
            rot.push((cs, s));
            for j in k..=hi {
                let x = h[(k, j)];
                let y = h[(k + 1, j)];
                h[(k, j)] = x * cs + s * y;
                h[(k + 1, j)] = -s.conj() * x + y * cs;
            }
        }
        for (idx, &(cs, s)) in rot.iter().enumerate() {
            let k = lo + idx;
            let rmax = (k + 2).min(hi);
            for i in lo..=rmax {
                let x = h[(i, k)];
                let y = h[(i, k + 1)];
                h[(i, k)] = x * cs + y * s.conj();
                h[(i, k + 1)] = -x * s + y * cs;
            }
        }
        for k in lo..=hi {
            h[(k, k)] += mu;
        }
    }
    Ok(eig)
}

/// LU factorization with partial pivoting of a tridiagonal matrix
/// (`dl`, `d`, `du`), following the layout of LAPACK `?gttrf`.
pub(crate) struct TridiagLu {
    dl: Vec<Complex64>,
    d: Vec<Complex64>,
    du: Vec<Complex64>,
    du2: Vec<Complex64>,
    swapped: Vec<bool>,
}

impl TridiagLu {
    pub(crate) fn factor(
        mut dl: Vec<Complex64>,
        mut d: Vec<Complex64>,
        mut du: Vec<Complex64>,
        tiny: f64,
    ) -> Self {
        let n = d.len();
        let mut du2 = vec![c(0.0); n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        for i in 0..n.saturating_sub(1) {
            if d[i].norm() >= dl[i].norm() {
                if d[i].norm() == 0.0 {
                    d[i] = c(tiny);
                }
                let fact = dl[i] / d[i];
                dl[i] = fact;
                d[i + 1] -= fact * du[i];
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] = -fact * du[i + 1];
                }
                swapped[i] = true;
            }
        }
        for di in d.iter_mut() {
            if di.norm() == 0.0 {
                *di = c(tiny);
            }
        }
        Self {
            dl,
            d,
            du,
            du2,
            swapped,
        }
    }

    pub(crate) fn solve(&self, b: &mut [Complex64]) {
        let n = self.d.len();
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                b.swap(i, i + 1);
                let bi = b[i];
                b[i + 1] -= self.dl[i] * bi;
            } else {
                let bi = b[i];
                b[i + 1] -= self.dl[i] * bi;
            }
        }
        for i in (0..n).rev() {
            let mut x = b[i];
            if i + 1 < n {
                x -= self.du[i] * b[i + 1];
            }
            if i + 2 < n {
                x -= self.du2[i] * b[i + 2];
            }
            b[i] = x / self.d[i];
        }
    }
}

fn start_vector(n: usize) -> Vec<Complex64> {
    // deterministic, generic start vector
    (0..n)
        .map(|j| {
            let t = j as f64 + 1.0;
            Complex64::new(1.0 + 0.37 * (1.3 * t).sin(), 0.29 * (0.7 * t).cos())
        })
        .collect()
}

fn normalize(v: &mut [Complex64]) {
    let nrm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if nrm > 0.0 {
        for z in v.iter_mut() {
            *z /= nrm;
        }
    }
}

/// Inverse iteration for the eigenvector of a tridiagonal matrix
/// (`sub`, `diag`, `sup`) nearest `shift`. Returns a unit vector.
pub fn tridiagonal_inverse_iteration(
    sub: &[Complex64],
    diag: &[Complex64],
    sup: &[Complex64],
    shift: Complex64,
    steps: usize,
) -> Vec<Complex64> {
    let n = diag.len();
    let scale = diag.iter().map(|z| z.norm()).fold(0.0, f64::max)
        + sub.iter().chain(sup).map(|z| z.norm()).fold(0.0, f64::max);
    let tiny = EPS * scale.max(f64::MIN_POSITIVE);
    let shifted: Vec<Complex64> = diag.iter().map(|&d| d - shift).collect();
    let lu = TridiagLu::factor(sub.to_vec(), shifted, sup.to_vec(), tiny);
    let mut v = start_vector(n);
    normalize(&mut v);
    for _ in 0..steps.max(1) {
        lu.solve(&mut v);
        normalize(&mut v);
    }
    v
}

/// Inverse iteration on a dense matrix using LU with partial pivoting.
pub fn dense_inverse_iteration(
    a: &DMatrix<Complex64>,
    shift: Complex64,
    steps: usize,
) -> Vec<Complex64> {
    let n = a.nrows();
    let scale = a
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut m = a.clone();
    for i in 0..n {
        m[(i, i)] -= shift;
    }
    // LU with partial pivoting in place
    let mut piv: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let (p, pmax) = (k..n)
            .map(|i| (i, m[(i, k)].norm()))
            .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if pmax <= EPS * scale {
            m[(p, k)] = c(EPS * scale);
        }
        if p != k {
            m.swap_rows(p, k);
            piv.swap(p, k);
        }
        let pivot = m[(k, k)];
        for i in k + 1..n {
            let f = m[(i, k)] / pivot;
            m[(i, k)] = f;
            if f.norm() != 0.0 {
                for j in k + 1..n {
                    let mkj = m[(k, j)];
                    m[(i, j)] -= f * mkj;
                }
            }
        }
    }
    let mut v = start_vector(n);
    normalize(&mut v);
    for _ in 0..steps.max(1) {
        let mut b: Vec<Complex64> = piv.iter().map(|&p| v[p]).collect();
        for i in 0..n {
            for k in 0..i {
                let bk = b[k];
                b[i] -= m[(i, k)] * bk;
            }
        }
        for i in (0..n).rev() {
            let mut x = b[i];
            for k in i + 1..n {
                x -= m[(i, k)] * b[k];
            }
            b[i] = x / m[(i, i)];
        }
        v = b;
        normalize(&mut v);
    }
    v
}

/// Scales `v` to unit Euclidean norm and rotates its phase so that the
/// largest-magnitude entry is real and positive.
pub fn fix_phase(v: &mut [Complex64]) {
    normalize(v);
    let (_, big) = v.iter().enumerate().fold((0, c(0.0)), |acc, (i, &z)| {
        if z.norm() > acc.1.norm() {
            (i, z)
        } else {
            acc
        }
    });
    if big.norm() > 0.0 {
        let rot = big.conj() / big.norm();
        for z in v.iter_mut() {
            *z *= rot;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_matrix_eigenvalues_are_exact() {
        let d = [c(3.0), Complex64::new(-1.0, 2.0), c(0.5)];
        let m = DMatrix::from_fn(3, 3, |i, j| if i == j { d[i] } else { c(0.0) });
        let mut e = hessenberg_eigenvalues(&m).unwrap();
        e.sort_by(|a, b| a.re.total_cmp(&b.re));
        assert_eq!(e, vec![d[1], d[2], d[0]]);
        let mut e = tridiagonal_eigenvalues(&d, &[c(0.0), c(0.0)]).unwrap();
        e.sort_by(|a, b| a.re.total_cmp(&b.re));
        assert_eq!(e, vec![d[1], d[2], d[0]]);
    }

    #[test]
    fn two_by_two_conjugate_pair() {
        // [[i, 1], [1, -i]] is PT-symmetric with a defective EP at 0;
        // [[0.5i, 1], [1, -0.5i]] has eigenvalues ±sqrt(0.75).
        let d = [Complex64::new(0.0, 0.5), Complex64::new(0.0, -0.5)];
        let mut e = tridiagonal_eigenvalues(&d, &[c(1.0)]).unwrap();
        e.sort_by(|a, b| a.re.total_cmp(&b.re));
        assert!((e[0] - c(-0.75f64.sqrt())).norm() < 1e-14);
        assert!((e[1] - c(0.75f64.sqrt())).norm() < 1e-14);

        let d = [Complex64::new(0.0, 2.0), Complex64::new(0.0, -2.0)];
        let mut e = tridiagonal_eigenvalues(&d, &[c(1.0)]).unwrap();
        e.sort_by(|a, b| a.im.total_cmp(&b.im));
        assert!((e[0] - Complex64::new(0.0, -3f64.sqrt())).norm() < 1e-14);
        assert!((e[1] - Complex64::new(0.0, 3f64.sqrt())).norm() < 1e-14);
    }

    #[test]
    fn hessenberg_form_preserves_trace_and_structure() {
        let n = 6;
        let m = DMatrix::from_fn(n, n, |i, j| {
            Complex64::new(
                ((i * 7 + j * 3) % 5) as f64 - 2.0,
                ((i + 2 * j) % 3) as f64 - 1.0,
            )
        });
        let mut h = m.clone();
        hessenberg_reduce(&mut h);
        for i in 0..n {
            for j in 0..n {
                if i > j + 1 {
                    assert_eq!(h[(i, j)], c(0.0));
                }
            }
        }
        assert!((h.trace() - m.trace()).norm() < 1e-12);
        assert!(((&h * &h).trace() - (&m * &m).trace()).norm() < 1e-10);
    }

    #[test]
    fn tridiagonal_lu_solves_with_pivoting() {
        let dl = vec![c(5.0), Complex64::new(0.0, 2.0), c(1.0)];
        let d = vec![c(0.0), c(1.0), Complex64::new(3.0, 1.0), c(2.0)];
        let du = vec![c(1.0), c(-1.0), c(0.5)];
        let x = vec![
            c(1.0),
            Complex64::new(2.0, -1.0),
            c(-3.0),
            Complex64::new(0.0, 1.0),
        ];
        let mut b = vec![c(0.0); 4];
        for i in 0..4 {
            b[i] = d[i] * x[i];
            if i > 0 {
                b[i] += dl[i - 1] * x[i - 1];
            }
            if i < 3 {
                b[i] += du[i] * x[i + 1];
            }
        }
        let lu = TridiagLu::factor(dl, d, du, 1e-300);
        lu.solve(&mut b);
        for (a, e) in b.iter().zip(&x) {
            assert!((a - e).norm() < 1e-13);
        }
    }

    #[test]
    fn phase_fixing() {
        let mut v = vec![Complex64::new(0.0, 3.0), Complex64::new(0.0, -4.0)];
        fix_phase(&mut v);
        assert!((v[1] - c(0.8)).norm() < 1e-15);
        assert!((v[0] - c(-0.6)).norm() < 1e-15);
    }
}
