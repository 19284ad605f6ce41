//! Independent eigenvalue oracle: characteristic polynomial by
//! Faddeev–LeVerrier, roots by Aberth iteration with Newton polishing.

#![allow(dead_code)]

use nalgebra::DMatrix;
use wickpt::Complex64;

/// Coefficients `c[0..=n]` of `det(λI - A) = Σ c[k] λ^k`, `c[n] = 1`.
pub fn charpoly(a: &DMatrix<Complex64>) -> Vec<Complex64> {
    let n = a.nrows();
    let one = Complex64::new(1.0, 0.0);
    let mut c = vec![Complex64::new(0.0, 0.0); n + 1];
    c[n] = one;
    let mut m = DMatrix::<Complex64>::zeros(n, n);
    for k in 1..=n {
        let mut next = a * &m;
        for i in 0..n {
            next[(i, i)] += c[n - k + 1];
        }
        m = next;
        let am = a * &m;
        c[n - k] = -am.trace() / k as f64;
    }
    c
}

fn horner(c: &[Complex64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &ck in c.iter().rev() {
        dp = dp * z + p;
        p = p * z + ck;
    }
    (p, dp)
}

pub fn poly_roots(c: &[Complex64]) -> Vec<Complex64> {
    let n = c.len() - 1;
    let radius = 1.0 + c[..n].iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut z: Vec<Complex64> = (0..n)
        .map(|k| {
            Complex64::from_polar(
                0.5 * radius,
                2.0 * std::f64::consts::PI * k as f64 / n as f64 + 0.4,
            )
        })
        .collect();
    for _ in 0..500 {
        let mut moved = 0.0f64;
        for i in 0..n {
            let (p, dp) = horner(c, z[i]);
            if p.norm() == 0.0 {
                continue;
            }
            let ratio = p / dp;
            let repulsion: Complex64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| (z[i] - z[j]).inv())
                .sum();
            let step = ratio / (Complex64::new(1.0, 0.0) - ratio * repulsion);
            z[i] -= step;
            moved = moved.max(step.norm());
        }
        if moved < 1e-15 {
            break;
        }
    }
    for zi in z.iter_mut() {
        for _ in 0..3 {
            let (p, dp) = horner(c, *zi);
            if dp.norm() > 0.0 {
                *zi -= p / dp;
            }
        }
    }
    z
}

pub fn oracle_eigenvalues(a: &DMatrix<Complex64>) -> Vec<Complex64> {
    poly_roots(&charpoly(a))
}

/// Largest distance in a greedy nearest-neighbour pairing of two sets,
/// relative to `max(1, |λ|)`.
pub fn set_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut used = vec![false; b.len()];
    let mut worst = 0.0f64;
    for x in a {
        let (j, d) = b
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, y)| (j, (x - y).norm()))
            .fold((usize::MAX, f64::INFINITY), |acc, v| {
                if v.1 < acc.1 {
                    v
                } else {
                    acc
                }
            });
        used[j] = true;
        worst = worst.max(d / x.norm().max(1.0));
    }
    worst
}
