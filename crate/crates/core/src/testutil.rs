//! Constructions shared by unit tests.

use crate::design::Design;
use crate::science::ScienceMatrix;

/// Mutually orthogonal centered vectors of length `n` with squared norm `n - 1`.
pub fn helmert(n: usize, count: usize) -> Vec<Vec<f64>> {
    assert!(count < n);
    (1..=count)
        .map(|m| {
            let mut v = vec![0.0; n];
            for x in v.iter_mut().take(m) {
                *x = 1.0;
            }
            v[m] = -(m as f64);
            let norm = (v.iter().map(|x| x * x).sum::<f64>() / (n as f64 - 1.0)).sqrt();
            v.iter().map(|x| x / norm).collect()
        })
        .collect()
}

/// Science whose covariance is exactly `s2` on the diagonal and `rho s2` elsewhere
/// (`0 <= rho <= 1`, `n > J + 1`).
pub fn compound_symmetric_science(design: &Design, n: usize, s2: f64, rho: f64) -> ScienceMatrix {
    let j = design.combinations_count();
    let h = helmert(n, j + 1);
    let (a, b) = ((rho * s2).sqrt(), ((1.0 - rho) * s2).sqrt());
    let data = (0..n)
        .flat_map(|i| {
            let h = &h;
            (0..j).map(move |l| 5.0 + l as f64 + a * h[0][i] + b * h[l + 1][i])
        })
        .collect();
    ScienceMatrix::new(design, data).unwrap()
}
