//! Repeated-sampling (Neymanian) inference: unbiased effect estimates, their
//! conservative variance estimates and normal-theory intervals, and the exact
//! sampling moments implied by a known science.

use nalgebra::DMatrix;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor};

use crate::assignment::{self, ObservedExperiment};
use crate::design::Design;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::science::{self, CorrelationStructure, ScienceMatrix};
use crate::seed;
use crate::stats;

/// Condition number above which the full covariance estimate is not inverted.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Point estimates and, when `r >= 2`, variance-based inference.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NeymanEstimate {
    pub effects: Vec<f64>,
    pub arm_means: Vec<f64>,
    /// `s^2(z)`; absent when an arm holds a single unit.
    pub arm_variances: Option<Vec<f64>>,
    pub replications: usize,
    pub units: usize,
    pub inference: Option<NeymanInference>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NeymanInference {
    pub alpha: f64,
    /// Per-effect variance estimate (identical across effects).
    pub var_estimates: Vec<f64>,
    #[serde(serialize_with = "serialize_matrix")]
    pub cov_estimates: DMatrix<f64>,
    pub intervals: Vec<[f64; 2]>,
    pub t_statistic: TStatistic,
}

/// Which covariance estimate the `T^N` statistic inverted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceForm {
    Full,
    Diagonal,
}

/// `T^N = tau_hat' Sigma_hat^{-1} tau_hat` with its two reference distributions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TStatistic {
    pub value: Option<f64>,
    /// Numerator degrees of freedom `J - 1`.
    pub df: usize,
    /// Denominator degrees of freedom `N - J` of the F approximation.
    pub df_denominator: usize,
    /// Upper tail of chi-square(`J - 1`) at `T^N`.
    pub p_chi2: Option<f64>,
    /// Upper tail of F(`J - 1`, `N - J`) at `T^N / (J - 1)`.
    pub p_f: Option<f64>,
    pub form: CovarianceForm,
    pub warning: Option<String>,
}

pub(crate) fn serialize_matrix<S: serde::Serializer>(
    m: &DMatrix<f64>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(m.nrows()))?;
    for row in m.row_iter() {
        seq.serialize_element(&row.iter().copied().collect::<Vec<f64>>())?;
    }
    seq.end()
}

/// Arm means and effect contrasts; arm sample variances when `r >= 2`.
pub fn estimate(obs: &ObservedExperiment, design: &Design) -> Result<NeymanEstimate> {
    obs.check_design(design)?;
    let j = design.combinations_count();
    let r = obs.replications();
    let outcomes = obs.outcomes();
    let arms = obs.assignment();
    let arm_means = assignment::arm_means(&outcomes, arms.arms(), j, r);
    let effects = design.contrasts(&arm_means)?;
    let arm_variances = (r >= 2).then(|| {
        let mut ss = vec![0.0; j];
        for (&y, &a) in outcomes.iter().zip(arms.arms()) {
            ss[a] += (y - arm_means[a]).powi(2);
        }
        ss.into_iter().map(|s| s / (r as f64 - 1.0)).collect()
    });
    Ok(NeymanEstimate {
        effects,
        arm_means,
        arm_variances,
        replications: r,
        units: obs.units(),
        inference: None,
    })
}

/// Fills variance estimates, intervals `tau_hat +- z_{alpha/2} sqrt(V_hat)` and `T^N`.
pub fn variance_estimates(
    mut est: NeymanEstimate,
    design: &Design,
    alpha: f64,
) -> Result<NeymanEstimate> {
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::Config(format!("alpha = {alpha} outside (0, 1)")));
    }
    let s2 = est.arm_variances.as_ref().ok_or_else(|| {
        Error::InsufficientData("variance estimates need at least 2 units per arm".into())
    })?;
    let m = design.effects_count();
    let factor = design.effect_scale().powi(2) / est.replications as f64;
    let cov = DMatrix::from_fn(m, m, |a, b| {
        factor
            * s2.iter()
                .enumerate()
                .map(|(l, s)| design.sign(a + 1, l) * design.sign(b + 1, l) * s)
                .sum::<f64>()
    });
    let v = factor * s2.iter().sum::<f64>();
    let z = stats::normal_upper(alpha / 2.0);
    let half = z * v.sqrt();
    let intervals = est.effects.iter().map(|t| [t - half, t + half]).collect();
    let t_statistic = t_statistic(&est.effects, &cov, est.units, design);
    est.inference = Some(NeymanInference {
        alpha,
        var_estimates: vec![v; m],
        cov_estimates: cov,
        intervals,
        t_statistic,
    });
    Ok(est)
}

/// Point estimates plus variance inference when the replication allows it.
pub fn analyze(obs: &ObservedExperiment, design: &Design, alpha: f64) -> Result<NeymanEstimate> {
    let est = estimate(obs, design)?;
    if est.arm_variances.is_some() {
        variance_estimates(est, design, alpha)
    } else {
        Ok(est)
    }
}

fn condition_number(cov: &DMatrix<f64>) -> f64 {
    let eig = cov.clone().symmetric_eigenvalues();
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), &e| {
        (lo.min(e.abs()), hi.max(e.abs()))
    });
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

fn t_statistic(effects: &[f64], cov: &DMatrix<f64>, n: usize, design: &Design) -> TStatistic {
    let m = design.effects_count();
    let df_denominator = n - design.combinations_count();
    let tau = nalgebra::DVector::from_column_slice(effects);
    let diag_value = |warning: Option<String>| {
        let v = cov[(0, 0)];
        if v > 0.0 {
            (
                Some(tau.norm_squared() / v),
                CovarianceForm::Diagonal,
                warning,
            )
        } else {
            (
                None,
                CovarianceForm::Diagonal,
                Some("all arm variances are zero; T^N undefined".to_string()),
            )
        }
    };
    let is_diagonal = (0..m).all(|a| (0..m).all(|b| a == b || cov[(a, b)] == 0.0));
    let (value, form, warning) = if is_diagonal {
        diag_value(None)
    } else {
        let cond = condition_number(cov);
        if cond > CONDITION_LIMIT {
            diag_value(Some(format!(
                "covariance estimate ill-conditioned (condition number {cond:.3e}); used diagonal form"
            )))
        } else {
            match cov.clone().cholesky() {
                Some(ch) => (Some(tau.dot(&ch.solve(&tau))), CovarianceForm::Full, None),
                None => diag_value(Some(
                    "covariance estimate not positive definite; used diagonal form".to_string(),
                )),
            }
        }
    };
    let p_chi2 = value.map(|t| ChiSquared::new(m as f64).expect("df > 0").sf(t));
    let p_f = value.and_then(|t| {
        FisherSnedecor::new(m as f64, df_denominator as f64)
            .ok()
            .map(|f| f.sf(t / m as f64))
    });
    TStatistic {
        value,
        df: m,
        df_denominator,
        p_chi2,
        p_f,
        form,
        warning,
    }
}

/// One-way analysis of variance over the `J` treatment combinations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Anova {
    pub ss_treatment: f64,
    pub ms_treatment: f64,
    pub ms_residual: f64,
    pub f: f64,
}

pub fn anova(obs: &ObservedExperiment, design: &Design) -> Result<Anova> {
    let est = estimate(obs, design)?;
    let s2 = est
        .arm_variances
        .ok_or_else(|| Error::InsufficientData("ANOVA needs at least 2 units per arm".into()))?;
    let j = design.combinations_count() as f64;
    let grand = stats::mean(&est.arm_means);
    let ss_treatment = est.replications as f64
        * est
            .arm_means
            .iter()
            .map(|m| (m - grand).powi(2))
            .sum::<f64>();
    let ms_treatment = ss_treatment / (j - 1.0);
    let ms_residual = s2.iter().sum::<f64>() / j;
    Ok(Anova {
        ss_treatment,
        ms_treatment,
        ms_residual,
        f: ms_treatment / ms_residual,
    })
}

/// Exact randomization moments of the effect estimates for a known science.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplingOracle {
    pub effects: Vec<f64>,
    pub true_variances: Vec<f64>,
    #[serde(serialize_with = "serialize_matrix")]
    pub true_covariances: DMatrix<f64>,
    /// Expectation of the variance estimator, `2^{-2(K-1)} r^{-1} sum_z S^2(z)`.
    pub estimator_expectation: f64,
    /// `S_j^2 / N`, the gap between estimator expectation and true variance.
    pub bias_terms: Vec<f64>,
}

pub fn sampling_oracle(science: &ScienceMatrix, design: &Design) -> Result<SamplingOracle> {
    let moments = science::population_moments(science, design)?;
    let m = design.effects_count();
    let n = science.units() as f64;
    let factor = design.effect_scale().powi(2) / science.replications() as f64;
    let s2 = moments.variances();
    let first = DMatrix::from_fn(m, m, |a, b| {
        factor
            * s2.iter()
                .enumerate()
                .map(|(l, s)| design.sign(a + 1, l) * design.sign(b + 1, l) * s)
                .sum::<f64>()
    });
    let true_covariances = first - &moments.effect_covariances / n;
    Ok(SamplingOracle {
        effects: science::finite_population_effects(science, design)?,
        true_variances: true_covariances.diagonal().iter().copied().collect(),
        true_covariances,
        estimator_expectation: factor * s2.iter().sum::<f64>(),
        bias_terms: moments.effect_variances.iter().map(|v| v / n).collect(),
    })
}

/// Moments of the effect estimates over a set of assignments.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalMoments {
    pub assignments: usize,
    pub mean: Vec<f64>,
    #[serde(serialize_with = "serialize_matrix")]
    pub covariance: DMatrix<f64>,
    /// Average of the variance estimate over the same assignments.
    pub mean_var_estimate: f64,
}

fn accumulate(design: &Design, draws: &[(Vec<f64>, f64)]) -> EmpiricalMoments {
    let m = design.effects_count();
    let count = draws.len() as f64;
    let mut mean = vec![0.0; m];
    for (t, _) in draws {
        for (a, v) in mean.iter_mut().zip(t) {
            *a += v / count;
        }
    }
    let mut covariance = DMatrix::zeros(m, m);
    for (t, _) in draws {
        for a in 0..m {
            for b in 0..m {
                covariance[(a, b)] += (t[a] - mean[a]) * (t[b] - mean[b]) / count;
            }
        }
    }
    EmpiricalMoments {
        assignments: draws.len(),
        mean,
        covariance,
        mean_var_estimate: draws.iter().map(|(_, v)| v).sum::<f64>() / count,
    }
}

fn estimates_under(science: &ScienceMatrix, design: &Design, arms: &[usize]) -> (Vec<f64>, f64) {
    let j = design.combinations_count();
    let r = science.replications();
    let y: Vec<f64> = arms
        .iter()
        .enumerate()
        .map(|(i, &a)| science.get(i, a))
        .collect();
    let means = assignment::arm_means(&y, arms, j, r);
    let effects = design.contrasts(&means).expect("length J");
    let v = if r >= 2 {
        let mut ss = vec![0.0; j];
        for (&yi, &a) in y.iter().zip(arms) {
            ss[a] += (yi - means[a]).powi(2);
        }
        design.effect_scale().powi(2) / r as f64 * ss.iter().sum::<f64>() / (r as f64 - 1.0)
    } else {
        f64::NAN
    };
    (effects, v)
}

/// Exact moments of the estimates over every balanced assignment (population divisor).
pub fn enumeration_moments(
    science: &ScienceMatrix,
    design: &Design,
    cap: u64,
) -> Result<EmpiricalMoments> {
    science.check_design(design)?;
    let draws: Vec<_> = assignment::enumerate_assignments(science.units(), design, cap)?
        .map(|a| estimates_under(science, design, a.arms()))
        .collect();
    Ok(accumulate(design, &draws))
}

/// Monte Carlo moments over `n_draws` random assignments.
pub fn monte_carlo_moments(
    science: &ScienceMatrix,
    design: &Design,
    n_draws: usize,
    seed: u64,
    exec: Execution,
) -> Result<EmpiricalMoments> {
    science.check_design(design)?;
    if n_draws == 0 {
        return Err(Error::Config("n_draws must be positive".into()));
    }
    let n = science.units();
    let draws = exec.map(n_draws, |d| {
        let a = assignment::randomize_with(n, design, &mut seed::stream_rng(seed, d as u64))
            .expect("science is balanced");
        estimates_under(science, design, a.arms())
    });
    Ok(accumulate(design, &draws))
}

/// Comparison of the variance estimator with the truth for a known science.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConservativenessReport {
    pub oracle: SamplingOracle,
    pub monte_carlo: EmpiricalMoments,
    /// `E[V_hat] - Var(tau_hat_j)` from the closed forms, i.e. `S_j^2 / N`.
    pub gap: Vec<f64>,
    /// Monte Carlo mean of `V_hat` minus the oracle variance, per effect.
    pub monte_carlo_gap: Vec<f64>,
}

pub fn conservativeness_report(
    science: &ScienceMatrix,
    design: &Design,
    n_draws: usize,
    seed: u64,
    exec: Execution,
) -> Result<ConservativenessReport> {
    let oracle = sampling_oracle(science, design)?;
    let monte_carlo = monte_carlo_moments(science, design, n_draws, seed, exec)?;
    let monte_carlo_gap = oracle
        .true_variances
        .iter()
        .map(|v| monte_carlo.mean_var_estimate - v)
        .collect();
    Ok(ConservativenessReport {
        gap: oracle.bias_terms.clone(),
        oracle,
        monte_carlo,
        monte_carlo_gap,
    })
}

/// Interval half-widths in units of `z_{alpha/2} s / sqrt(N)` for a science with
/// common variance and correlation matrix `R`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HalfWidths {
    /// With `R` known: `sqrt(N Var(tau_hat_j) / S^2)`.
    pub known: Vec<f64>,
    /// Assuming strict additivity: `sqrt(N E[V_hat] / S^2)`.
    pub additive: Vec<f64>,
}

impl HalfWidths {
    pub fn ratios(&self) -> Vec<f64> {
        self.known
            .iter()
            .zip(&self.additive)
            .map(|(k, a)| k / a)
            .collect()
    }
}

pub fn half_widths(structure: &CorrelationStructure, design: &Design) -> Result<HalfWidths> {
    let r = structure.matrix(design)?;
    let scale2 = design.effect_scale().powi(2);
    let j = design.combinations_count() as f64;
    let base = j * scale2 * r.trace();
    let known = (1..design.combinations_count())
        .map(|e| {
            let g = nalgebra::DVector::from_iterator(
                design.combinations_count(),
                (0..design.combinations_count()).map(|l| design.sign(e, l)),
            );
            let s2j = scale2 * g.dot(&(&r * &g));
            (base - s2j).max(0.0).sqrt()
        })
        .collect();
    Ok(HalfWidths {
        known,
        additive: vec![base.sqrt(); design.effects_count()],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assignment::{observe, Assignment, UnitRecord, DEFAULT_ENUMERATION_CAP};
    use crate::io;

    fn table2() -> (Design, ObservedExperiment) {
        let d = Design::new(2).unwrap();
        let obs = io::read_observed(crate::fixtures::TABLE2_CSV.as_bytes(), &d).unwrap();
        (d, obs)
    }

    #[test]
    fn table2_points_and_intervals() {
        let (d, obs) = table2();
        let est = analyze(&obs, &d, 0.05).unwrap();
        for (e, p) in est.effects.iter().zip([2.98, 1.74, 0.36]) {
            assert!((e - p).abs() < 0.005, "{e}");
        }
        let inf = est.inference.unwrap();
        for (ci, want) in inf
            .intervals
            .iter()
            .zip([[1.93, 4.03], [0.69, 2.78], [-0.69, 1.40]])
        {
            assert!(
                (ci[0] - want[0]).abs() < 0.01 && (ci[1] - want[1]).abs() < 0.01,
                "{ci:?}"
            );
        }
        assert!(inf.var_estimates.iter().all(|v| *v == inf.var_estimates[0]));
        assert_eq!(inf.t_statistic.df, 3);
        assert_eq!(inf.t_statistic.df_denominator, 16);
    }

    #[test]
    fn hand_computed_k1() {
        let d = Design::new(1).unwrap();
        let rec = |arm, y| UnitRecord {
            id: String::new(),
            arm,
            y,
        };
        let obs =
            ObservedExperiment::new(&d, vec![rec(0, 0.0), rec(0, 0.0), rec(1, 2.0), rec(1, 4.0)])
                .unwrap();
        let est = estimate(&obs, &d).unwrap();
        assert_eq!(est.effects, vec![3.0]);
        assert_eq!(est.arm_variances, Some(vec![0.0, 2.0]));
    }

    #[test]
    fn constant_outcomes() {
        let d = Design::new(2).unwrap();
        let s = ScienceMatrix::new(&d, vec![7.0; 32]).unwrap();
        let obs = observe(&s, &assignment::randomize(8, &d, 3).unwrap(), &d).unwrap();
        let est = analyze(&obs, &d, 0.05).unwrap();
        assert_eq!(est.effects, vec![0.0; 3]);
        assert_eq!(est.arm_variances, Some(vec![0.0; 4]));
        let t = est.inference.unwrap().t_statistic;
        assert!(t.value.is_none() && t.warning.is_some());
    }

    #[test]
    fn single_replicate_gives_points_only() {
        let d = Design::new(2).unwrap();
        let s = ScienceMatrix::from_rows(&d, &vec![vec![1.0, 2.0, 3.0, 5.0]; 4]).unwrap();
        let obs = observe(&s, &Assignment::new(&d, vec![3, 2, 1, 0]).unwrap(), &d).unwrap();
        let est = analyze(&obs, &d, 0.05).unwrap();
        assert!(est.inference.is_none() && est.arm_variances.is_none());
        assert!(variance_estimates(est, &d, 0.05).is_err());
    }

    #[test]
    fn equal_arm_variances_cancel_covariances() {
        let d = Design::new(2).unwrap();
        let est = NeymanEstimate {
            effects: vec![1.0, 2.0, 0.5],
            arm_means: vec![0.0; 4],
            arm_variances: Some(vec![1.5; 4]),
            replications: 3,
            units: 12,
            inference: None,
        };
        let inf = variance_estimates(est, &d, 0.05)
            .unwrap()
            .inference
            .unwrap();
        for a in 0..3 {
            for b in 0..3 {
                if a != b {
                    assert_eq!(inf.cov_estimates[(a, b)], 0.0);
                }
            }
        }
        assert_eq!(inf.t_statistic.form, CovarianceForm::Diagonal);
    }

    #[test]
    fn t_statistic_matches_anova_under_additivity() {
        for k in 1..=3 {
            let d = Design::new(k).unwrap();
            let j = d.combinations_count();
            let s = science::simulate_gaussian_science(
                &d,
                4 * j,
                &(0..j).map(|l| l as f64 * 0.4).collect::<Vec<_>>(),
                &vec![1.0; j],
                &CorrelationStructure::StrictAdditive,
                11,
                Execution::Sequential,
            )
            .unwrap();
            let obs = observe(&s, &assignment::randomize(4 * j, &d, 5).unwrap(), &d).unwrap();
            let a = anova(&obs, &d).unwrap();
            let est = analyze(&obs, &d, 0.05).unwrap();
            let inf = est.inference.unwrap();
            // Pooled form: Sigma_hat = V_hat I.
            let v = inf.var_estimates[0];
            let pooled = est.effects.iter().map(|t| t * t).sum::<f64>() / v;
            assert!((pooled - a.ss_treatment / a.ms_residual).abs() < 1e-9);
            assert!((pooled / (j - 1) as f64 - a.f).abs() < 1e-9);
            if k == 1 {
                assert!((inf.t_statistic.value.unwrap() - a.f).abs() < 1e-9);
            }
            let p_f = inf.t_statistic.p_f.unwrap();
            assert!((0.0..=1.0).contains(&p_f));
        }
    }

    #[test]
    fn oracle_matches_enumeration() {
        let d = Design::new(1).unwrap();
        let s = ScienceMatrix::from_rows(
            &d,
            &[
                vec![0.0, 1.0],
                vec![1.0, 3.0],
                vec![2.0, 5.0],
                vec![3.0, 7.0],
            ],
        )
        .unwrap();
        let o = sampling_oracle(&s, &d).unwrap();
        let e = enumeration_moments(&s, &d, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(e.assignments, 6);
        assert!((o.true_variances[0] - e.covariance[(0, 0)]).abs() < 1e-12);
        assert!((o.effects[0] - e.mean[0]).abs() < 1e-12);
        assert!((o.estimator_expectation - e.mean_var_estimate).abs() < 1e-12);
    }

    #[test]
    fn corollaries_for_structured_sciences() {
        for k in 1..=3 {
            let d = Design::new(k).unwrap();
            let j = d.combinations_count();
            let n = 2 * j;
            let (s2, rho) = (1.7, 0.4);
            let s = crate::testutil::compound_symmetric_science(&d, n, s2, rho);
            let o = sampling_oracle(&s, &d).unwrap();
            let want = 4.0 / n as f64 * (1.0 - (1.0 - rho) / j as f64) * s2;
            let lower = 4.0 / n as f64 * (1.0 - 1.0 / (j as f64 - 1.0)) * s2;
            for v in &o.true_variances {
                assert!((v - want).abs() < 1e-10);
                assert!(*v > lower - 1e-12 && *v <= 4.0 * s2 / n as f64 + 1e-12);
            }
            for a in 0..j - 1 {
                for b in 0..j - 1 {
                    if a != b {
                        assert!(o.true_covariances[(a, b)].abs() < 1e-10);
                    }
                }
            }
            let additive = crate::testutil::compound_symmetric_science(&d, n, s2, 1.0);
            let o = sampling_oracle(&additive, &d).unwrap();
            for (v, b) in o.true_variances.iter().zip(&o.bias_terms) {
                assert!((v - 4.0 * s2 / n as f64).abs() < 1e-10);
                assert!(b.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn table_one_half_widths() {
        let d = Design::new(2).unwrap();
        let r2 = half_widths(&CorrelationStructure::CompoundSymmetry(0.5), &d).unwrap();
        for ratio in r2.ratios() {
            assert!((ratio - 3.5f64.sqrt() / 2.0).abs() < 1e-12);
        }
        let r1 = half_widths(&CorrelationStructure::StrictAdditive, &d).unwrap();
        assert!(r1.ratios().iter().all(|x| (x - 1.0).abs() < 1e-12));
        assert!(r1.additive.iter().all(|x| (x - 2.0).abs() < 1e-12));

        let rho = 0.3;
        let r3 = half_widths(&CorrelationStructure::WithinFactorBlock(rho), &d).unwrap();
        let want = [3.0 - rho, 3.0 + rho, 3.0 + rho];
        for (h, w) in r3.known.iter().zip(want) {
            assert!((h * h - w).abs() < 1e-12);
        }

        // Main effects agree with the published factors; the interaction is
        // derived from first principles (sum of S_j^2 is 3 - rho1 - rho2).
        let (r1_, r2_) = (0.2, 0.3);
        let r4 = half_widths(&CorrelationStructure::TwoParameter(r1_, r2_), &d).unwrap();
        let want = [3.0 - (r1_ - r2_), 3.0 - (r2_ - r1_), 3.0 + (r1_ + r2_)];
        for (h, w) in r4.known.iter().zip(want) {
            assert!((h * h - w).abs() < 1e-12);
        }
    }

    #[test]
    fn monte_carlo_conservativeness() {
        let d = Design::new(2).unwrap();
        let s = science::simulate_gaussian_science(
            &d,
            20,
            &crate::fixtures::TABLE2_TRUE_MEANS,
            &[1.0; 4],
            &CorrelationStructure::CompoundSymmetry(0.5),
            2,
            Execution::Parallel,
        )
        .unwrap();
        let rep = conservativeness_report(&s, &d, 20_000, 8, Execution::Parallel).unwrap();
        let seq = conservativeness_report(&s, &d, 20_000, 8, Execution::Sequential).unwrap();
        assert_eq!(rep, seq);
        for (j, gap) in rep.gap.iter().enumerate() {
            assert!(*gap >= 0.0);
            let truth = rep.oracle.true_variances[j];
            assert!((rep.monte_carlo.covariance[(j, j)] - truth).abs() < 0.05 * truth);
            assert!((rep.monte_carlo_gap[j] - gap).abs() < 0.05 * truth);
        }
    }
}
