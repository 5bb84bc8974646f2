//! The science: the full table of potential outcomes, its estimands and its
//! exact population moments, plus synthetic generators.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::design::Design;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::seed;

/// `N x J` matrix of potential outcomes, one row per unit, columns in the
/// design's combination order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScienceMatrix {
    k: usize,
    n: usize,
    j: usize,
    data: Vec<f64>,
}

impl ScienceMatrix {
    /// Builds a science from row-major outcomes. Requires `N = r 2^K` and finite entries.
    pub fn new(design: &Design, data: Vec<f64>) -> Result<Self> {
        let j = design.combinations_count();
        if data.is_empty() || data.len() % j != 0 {
            return Err(Error::DimensionMismatch {
                expected: j,
                actual: data.len() % j,
                context: "science row length",
            });
        }
        let n = data.len() / j;
        if n % j != 0 {
            return Err(Error::Size(format!(
                "science has {n} units, not a multiple of {j} combinations"
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite potential outcome at unit {}, combination {}",
                pos / j,
                pos % j
            )));
        }
        Ok(Self {
            k: design.factors(),
            n,
            j,
            data,
        })
    }

    pub fn from_rows(design: &Design, rows: &[Vec<f64>]) -> Result<Self> {
        let j = design.combinations_count();
        if let Some(bad) = rows.iter().find(|r| r.len() != j) {
            return Err(Error::DimensionMismatch {
                expected: j,
                actual: bad.len(),
                context: "science row length",
            });
        }
        Self::new(design, rows.concat())
    }

    pub fn factors(&self) -> usize {
        self.k
    }

    pub fn units(&self) -> usize {
        self.n
    }

    pub fn combinations_count(&self) -> usize {
        self.j
    }

    pub fn replications(&self) -> usize {
        self.n / self.j
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.j..(i + 1) * self.j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.j)
    }

    pub fn get(&self, i: usize, l: usize) -> f64 {
        self.data[i * self.j + l]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.j];
        for row in self.rows() {
            for (s, v) in sums.iter_mut().zip(row) {
                *s += v;
            }
        }
        sums.into_iter().map(|s| s / self.n as f64).collect()
    }

    pub(crate) fn check_design(&self, design: &Design) -> Result<()> {
        if design.factors() != self.k {
            return Err(Error::DimensionMismatch {
                expected: design.factors(),
                actual: self.k,
                context: "science factor count",
            });
        }
        Ok(())
    }
}

/// `N x (J-1)` matrix of unit-level factorial effects `tau_ij = 2^{-(K-1)} g_j' Y_i`.
pub fn unit_effects(science: &ScienceMatrix, design: &Design) -> Result<DMatrix<f64>> {
    science.check_design(design)?;
    let m = design.effects_count();
    let mut out = DMatrix::zeros(science.units(), m);
    for (i, row) in science.rows().enumerate() {
        for (j, t) in design.contrasts(row)?.into_iter().enumerate() {
            out[(i, j)] = t;
        }
    }
    Ok(out)
}

/// Finite-population estimands `2^{-(K-1)} g_j' Ybar`.
pub fn finite_population_effects(science: &ScienceMatrix, design: &Design) -> Result<Vec<f64>> {
    science.check_design(design)?;
    design.contrasts(&science.column_means())
}

/// Exact population moments of a science (divisor `N - 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationMoments {
    /// `Ybar(z)` per combination.
    pub means: Vec<f64>,
    /// `S^2(z, z*)`; the diagonal holds `S^2(z)`.
    pub covariance: DMatrix<f64>,
    /// `S_j^2` computed from the unit-level effects.
    pub effect_variances: Vec<f64>,
    /// `S_j^2` computed from the block expansion over `Z_j^+` and `Z_j^-`.
    pub effect_variances_expansion: Vec<f64>,
    /// `S^2_{jj'}` from the unit-level effects.
    pub effect_covariances: DMatrix<f64>,
}

impl PopulationMoments {
    pub fn variances(&self) -> Vec<f64> {
        self.covariance.diagonal().iter().copied().collect()
    }
}

pub fn population_moments(science: &ScienceMatrix, design: &Design) -> Result<PopulationMoments> {
    science.check_design(design)?;
    let n = science.units();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "population moments need at least 2 units, got {n}"
        )));
    }
    let j = science.combinations_count();
    let means = science.column_means();
    let mut covariance = DMatrix::zeros(j, j);
    for row in science.rows() {
        for a in 0..j {
            let da = row[a] - means[a];
            for b in a..j {
                covariance[(a, b)] += da * (row[b] - means[b]);
            }
        }
    }
    for a in 0..j {
        for b in a..j {
            let v = covariance[(a, b)] / (n as f64 - 1.0);
            covariance[(a, b)] = v;
            covariance[(b, a)] = v;
        }
    }

    let tau = unit_effects(science, design)?;
    let m = design.effects_count();
    let tau_means: Vec<f64> = (0..m).map(|c| tau.column(c).mean()).collect();
    let mut effect_covariances = DMatrix::zeros(m, m);
    for i in 0..n {
        for a in 0..m {
            let da = tau[(i, a)] - tau_means[a];
            for b in a..m {
                effect_covariances[(a, b)] += da * (tau[(i, b)] - tau_means[b]);
            }
        }
    }
    for a in 0..m {
        for b in a..m {
            let v = effect_covariances[(a, b)] / (n as f64 - 1.0);
            effect_covariances[(a, b)] = v;
            effect_covariances[(b, a)] = v;
        }
    }
    let effect_variances: Vec<f64> = effect_covariances.diagonal().iter().copied().collect();

    let effect_variances_expansion = (1..j)
        .map(|e| effect_variance_expansion(design, &covariance, e))
        .collect::<Result<Vec<_>>>()?;

    let scale = covariance
        .diagonal()
        .iter()
        .fold(1.0_f64, |acc, v| acc.max(v.abs()));
    for (e, (direct, expanded)) in effect_variances
        .iter()
        .zip(&effect_variances_expansion)
        .enumerate()
    {
        if (direct - expanded).abs() > 1e-10 * scale {
            return Err(Error::Numeric(format!(
                "effect {} variance routes disagree: {direct} vs {expanded}",
                e + 1
            )));
        }
    }

    Ok(PopulationMoments {
        means,
        covariance,
        effect_variances,
        effect_variances_expansion,
        effect_covariances,
    })
}

/// `S_j^2` from the population covariance via the partition of the treatment set:
/// total variance, plus twice the within-half pair covariances, minus twice the
/// cross-half pair covariances, all scaled by `2^{-2(K-1)}`.
fn effect_variance_expansion(design: &Design, covariance: &DMatrix<f64>, j: usize) -> Result<f64> {
    let part = design.partition(j)?;
    let within = |set: &[usize]| -> f64 {
        let mut s = 0.0;
        for (x, &a) in set.iter().enumerate() {
            for &b in &set[x + 1..] {
                s += covariance[(a, b)];
            }
        }
        s
    };
    let cross: f64 = part
        .plus
        .iter()
        .flat_map(|&a| part.minus.iter().map(move |&b| (a, b)))
        .map(|(a, b)| covariance[(a, b)])
        .sum();
    let total = covariance.trace() + 2.0 * (within(&part.plus) + within(&part.minus) - cross);
    Ok(total * design.effect_scale().powi(2))
}

/// Correlation structure of potential outcomes across treatment combinations.
#[derive(Debug, Clone, PartialEq)]
pub enum CorrelationStructure {
    /// All correlations equal to one.
    StrictAdditive,
    /// Common correlation `rho` between every pair.
    CompoundSymmetry(f64),
    /// `2^2` only: outcomes sharing the level of factor 1 correlate with `rho`.
    WithinFactorBlock(f64),
    /// `2^2` only: `rho1` between combinations differing in factor 2 alone,
    /// `rho2` between combinations differing in factor 1 alone.
    TwoParameter(f64, f64),
    Explicit(DMatrix<f64>),
}

impl CorrelationStructure {
    /// The `J x J` correlation matrix for a design.
    pub fn matrix(&self, design: &Design) -> Result<DMatrix<f64>> {
        let j = design.combinations_count();
        let check_rho = |rho: f64| {
            if !(-1.0..=1.0).contains(&rho) {
                Err(Error::Model(format!("correlation {rho} outside [-1, 1]")))
            } else {
                Ok(())
            }
        };
        let require_two = || {
            if design.factors() != 2 {
                Err(Error::Model(
                    "block correlation structures are defined for 2^2 designs only; use an explicit matrix"
                        .into(),
                ))
            } else {
                Ok(())
            }
        };
        match self {
            CorrelationStructure::StrictAdditive => Ok(DMatrix::from_element(j, j, 1.0)),
            CorrelationStructure::CompoundSymmetry(rho) => {
                check_rho(*rho)?;
                Ok(DMatrix::from_fn(
                    j,
                    j,
                    |a, b| if a == b { 1.0 } else { *rho },
                ))
            }
            CorrelationStructure::WithinFactorBlock(rho) => {
                check_rho(*rho)?;
                require_two()?;
                #[rustfmt::skip]
                let m = DMatrix::from_row_slice(4, 4, &[
                    1.0, *rho, 0.0, 0.0,
                    *rho, 1.0, 0.0, 0.0,
                    0.0, 0.0, 1.0, *rho,
                    0.0, 0.0, *rho, 1.0,
                ]);
                Ok(m)
            }
            CorrelationStructure::TwoParameter(r1, r2) => {
                check_rho(*r1)?;
                check_rho(*r2)?;
                require_two()?;
                #[rustfmt::skip]
                let m = DMatrix::from_row_slice(4, 4, &[
                    1.0, *r1, *r2, 0.0,
                    *r1, 1.0, 0.0, *r2,
                    *r2, 0.0, 1.0, *r1,
                    0.0, *r2, *r1, 1.0,
                ]);
                Ok(m)
            }
            CorrelationStructure::Explicit(m) => {
                if m.nrows() != j || m.ncols() != j {
                    return Err(Error::DimensionMismatch {
                        expected: j,
                        actual: m.nrows(),
                        context: "explicit correlation matrix",
                    });
                }
                if (m - m.transpose()).abs().max() > 1e-12 {
                    return Err(Error::Model(
                        "explicit correlation matrix is not symmetric".into(),
                    ));
                }
                Ok(m.clone())
            }
        }
    }
}

/// Square-root factor `L` with `L L' = cov`, clipping eigenvalues down to
/// `-1e-10` to zero and rejecting anything more negative.
pub(crate) fn psd_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(cov.clone());
    let min = eig.eigenvalues.min();
    if min < -1e-10 {
        return Err(Error::Model(format!(
            "covariance is not positive semi-definite (min eigenvalue {min:.3e})"
        )));
    }
    let roots = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()),
    );
    Ok(eig.eigenvectors * DMatrix::from_diagonal(&roots))
}

/// Draws `N` units independently from `N_J(mean, D R D)` with `D = diag(sd)`.
///
/// Row `i` uses stream `i` of `seed`, so the output is independent of `exec`.
pub fn simulate_gaussian_science(
    design: &Design,
    n: usize,
    mean: &[f64],
    sd: &[f64],
    structure: &CorrelationStructure,
    seed: u64,
    exec: Execution,
) -> Result<ScienceMatrix> {
    let j = design.combinations_count();
    design.check_len(mean.len(), "mean vector")?;
    design.check_len(sd.len(), "scale vector")?;
    if sd.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
        return Err(Error::Model(
            "scales must be finite and non-negative".into(),
        ));
    }
    if n == 0 || n % j != 0 {
        return Err(Error::Size(format!(
            "N = {n} is not a positive multiple of {j}"
        )));
    }
    let r = structure.matrix(design)?;
    let d = DMatrix::from_diagonal(&DVector::from_column_slice(sd));
    let factor = psd_factor(&(&d * r * &d))?;
    let rows = exec.map(n, |i| {
        let mut rng = seed::stream_rng(seed, i as u64);
        let z = DVector::from_iterator(j, (0..j).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let y = &factor * z;
        (0..j).map(|l| mean[l] + y[l]).collect::<Vec<f64>>()
    });
    ScienceMatrix::new(design, rows.concat())
}

/// Independent Bernoulli potential outcomes with per-combination success probabilities.
pub fn simulate_bernoulli_science(
    design: &Design,
    r: usize,
    probabilities: &[f64],
    seed: u64,
    exec: Execution,
) -> Result<ScienceMatrix> {
    design.check_len(probabilities.len(), "probability vector")?;
    if let Some(p) = probabilities.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Model(format!("probability {p} outside [0, 1]")));
    }
    if r == 0 {
        return Err(Error::Size("replications must be positive".into()));
    }
    let n = r * design.combinations_count();
    let rows = exec.map(n, |i| {
        let mut rng = seed::stream_rng(seed, i as u64);
        probabilities
            .iter()
            .map(|&p| if rng.random::<f64>() < p { 1.0 } else { 0.0 })
            .collect::<Vec<f64>>()
    });
    ScienceMatrix::new(design, rows.concat())
}
