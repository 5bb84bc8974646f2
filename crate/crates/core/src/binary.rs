//! Binary outcomes: plug-in contrasts of success proportions and a logistic
//! hierarchical model sampled by random-walk Metropolis, for both super- and
//! finite-population effects.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::assignment::ObservedExperiment;
use crate::config::Config;
use crate::design::Design;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fixtures;
use crate::neyman::{self, serialize_matrix};
use crate::science::{self, ScienceMatrix};
use crate::seed;
use crate::stats::DrawSummary;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinaryStudyConfig {
    pub k: usize,
    pub r: usize,
    pub pi: Vec<f64>,
    /// Yates positions of the effects entering the linear predictor.
    pub selected_effects: Vec<usize>,
    /// Prior mean of (intercept, selected coefficients).
    pub prior_mean: Vec<f64>,
    #[serde(serialize_with = "serialize_matrix")]
    pub prior_cov: DMatrix<f64>,
    pub n_draws: usize,
    pub burn_in: usize,
}

impl Default for BinaryStudyConfig {
    fn default() -> Self {
        Self::from_config(&Config::parse(fixtures::TABLE5_CONFIG).expect("bundled config parses"))
            .expect("bundled config is valid")
    }
}

impl BinaryStudyConfig {
    /// Reads `design.k` and the `binary.*` keys.
    pub fn from_config(c: &Config) -> Result<Self> {
        let missing = |key: &str| Error::Config(format!("missing {key}"));
        let cfg = Self {
            k: c.get("design.k")?.ok_or_else(|| missing("design.k"))?,
            r: c.get("binary.r")?.ok_or_else(|| missing("binary.r"))?,
            pi: c
                .get_list("binary.pi")?
                .ok_or_else(|| missing("binary.pi"))?,
            selected_effects: c
                .get_usize_list("binary.selected_effects")?
                .ok_or_else(|| missing("binary.selected_effects"))?,
            prior_mean: c
                .get_list("binary.prior_mean")?
                .ok_or_else(|| missing("binary.prior_mean"))?,
            prior_cov: c
                .get_matrix("binary.prior_cov")?
                .ok_or_else(|| missing("binary.prior_cov"))?,
            n_draws: c.get_or("binary.n_draws", 10_000)?,
            burn_in: c.get_or("binary.burn_in", 2_000)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn design(&self) -> Result<Design> {
        Design::new(self.k)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.design()?;
        d.check_len(self.pi.len(), "binary.pi")?;
        if self.pi.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config("binary.pi entries must lie in [0, 1]".into()));
        }
        for &j in &self.selected_effects {
            d.effect(j)?;
        }
        let p = self.selected_effects.len() + 1;
        if self.prior_mean.len() != p || self.prior_cov.nrows() != p || self.prior_cov.ncols() != p
        {
            return Err(Error::Config(format!(
                "prior needs {p} coefficients (intercept plus selected effects)"
            )));
        }
        if (&self.prior_cov - self.prior_cov.transpose()).abs().max() > 1e-12
            || self.prior_cov.clone().cholesky().is_none()
        {
            return Err(Error::Config(
                "binary.prior_cov must be symmetric positive definite".into(),
            ));
        }
        if self.r == 0 || self.n_draws == 0 {
            return Err(Error::Config(
                "binary.r and binary.n_draws must be positive".into(),
            ));
        }
        Ok(())
    }
}

fn check_binary(obs: &ObservedExperiment) -> Result<()> {
    match obs.records().iter().position(|r| r.y != 0.0 && r.y != 1.0) {
        Some(i) => Err(Error::Ingestion {
            line: i + 2,
            message: format!(
                "unit {}: outcome {} is not 0 or 1",
                obs.records()[i].id,
                obs.records()[i].y
            ),
        }),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PluginEstimate {
    pub name: String,
    pub estimate: f64,
    /// `2^{-(K-1)} sqrt(sum_z p(z)(1 - p(z)) / r)`, common to all effects.
    pub se: f64,
}

pub fn plugin_estimates(obs: &ObservedExperiment, design: &Design) -> Result<Vec<PluginEstimate>> {
    check_binary(obs)?;
    let est = neyman::estimate(obs, design)?;
    let r = est.replications as f64;
    let se = design.effect_scale()
        * (est.arm_means.iter().map(|p| p * (1.0 - p)).sum::<f64>() / r).sqrt();
    Ok(design
        .effect_names()
        .into_iter()
        .zip(est.effects)
        .map(|(name, estimate)| PluginEstimate { name, estimate, se })
        .collect())
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `pi(z) = logistic(theta_0 + sum_s theta_s g_s(z))`, kept strictly inside (0, 1).
pub fn probabilities(design: &Design, selected: &[usize], theta: &[f64]) -> Vec<f64> {
    (0..design.combinations_count())
        .map(|l| {
            let eta = theta[0]
                + selected
                    .iter()
                    .zip(&theta[1..])
                    .map(|(&s, t)| design.sign(s, l) * t)
                    .sum::<f64>();
            (1.0 / (1.0 + (-eta).exp())).clamp(f64::EPSILON, 1.0 - f64::EPSILON)
        })
        .collect()
}

struct Target<'a> {
    design: &'a Design,
    selected: &'a [usize],
    successes: Vec<f64>,
    r: f64,
    prior_mean: DVector<f64>,
    prior_precision: DMatrix<f64>,
}

impl Target<'_> {
    fn log_density(&self, theta: &[f64]) -> f64 {
        let mut ll = 0.0;
        for l in 0..self.design.combinations_count() {
            let eta = theta[0]
                + self
                    .selected
                    .iter()
                    .zip(&theta[1..])
                    .map(|(&s, t)| self.design.sign(s, l) * t)
                    .sum::<f64>();
            ll -= self.successes[l] * softplus(-eta) + (self.r - self.successes[l]) * softplus(eta);
        }
        let dev = DVector::from_column_slice(theta) - &self.prior_mean;
        ll - 0.5 * dev.dot(&(&self.prior_precision * &dev))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinaryPosterior {
    pub selected_effects: Vec<usize>,
    /// `coefficients[d]`: (intercept, selected coefficients) of draw `d`.
    pub coefficients: Vec<Vec<f64>>,
    /// `super_population[j][d]`: `2^{-(K-1)} g_j' pi` for every effect.
    pub super_population: Vec<Vec<f64>>,
    pub acceptance_rate: f64,
    pub burn_in_acceptance_rate: f64,
    /// Per-coordinate proposal standard deviations after adaptation.
    pub proposal_sd: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Logit-scale least squares start: `theta_s = J^{-1} sum_z g_s(z) logit(p(z))`.
fn starting_point(design: &Design, selected: &[usize], p: &[f64], r: f64) -> Vec<f64> {
    let logit = |q: f64| {
        let q = (q * r + 0.5) / (r + 1.0);
        (q / (1.0 - q)).ln()
    };
    let lp: Vec<f64> = p.iter().map(|&q| logit(q)).collect();
    let j = design.combinations_count() as f64;
    std::iter::once(lp.iter().sum::<f64>() / j)
        .chain(selected.iter().map(|&s| {
            lp.iter()
                .enumerate()
                .map(|(l, v)| design.sign(s, l) * v)
                .sum::<f64>()
                / j
        }))
        .collect()
}

const ADAPT_WINDOW: usize = 50;
const TARGET_ACCEPTANCE: f64 = 0.3;

/// Adaptive random-walk Metropolis on the logistic coefficients.
///
/// Burn-in tunes a global step multiplier towards 30% acceptance in windows of
/// 50 iterations; halfway through burn-in the per-coordinate scales are reset
/// to `2.38 / sqrt(d)` times the spread of the second quarter of burn-in.
/// The proposal is frozen for the retained draws.
pub fn sample_binary_posterior(
    obs: &ObservedExperiment,
    design: &Design,
    config: &BinaryStudyConfig,
    n_draws: usize,
    burn_in: usize,
    seed: u64,
) -> Result<BinaryPosterior> {
    config.validate()?;
    check_binary(obs)?;
    if design.factors() != config.k {
        return Err(Error::Config("binary config and data disagree on K".into()));
    }
    if n_draws == 0 {
        return Err(Error::Config("n_draws must be positive".into()));
    }
    let est = neyman::estimate(obs, design)?;
    let r = est.replications as f64;
    let selected = &config.selected_effects;
    let precision = config
        .prior_cov
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Config("prior covariance is singular".into()))?;
    let target = Target {
        design,
        selected,
        successes: est.arm_means.iter().map(|p| p * r).collect(),
        r,
        prior_mean: DVector::from_column_slice(&config.prior_mean),
        prior_precision: precision,
    };
    let dim = selected.len() + 1;
    let mut rng = seed::rng(seed);
    let mut theta = starting_point(design, selected, &est.arm_means, r);
    let mut log_p = target.log_density(&theta);
    let mut sd = vec![0.1; dim];
    let mut lambda = 1.0;
    let mut history: Vec<Vec<f64>> = Vec::with_capacity(burn_in);
    let (mut window_accepts, mut burn_accepts, mut accepts) = (0usize, 0usize, 0usize);
    let mut coefficients = Vec::with_capacity(n_draws);

    for it in 0..burn_in + n_draws {
        let proposal: Vec<f64> = theta
            .iter()
            .zip(&sd)
            .map(|(t, s)| t + lambda * s * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let log_q = target.log_density(&proposal);
        let accepted = rng.random::<f64>().ln() < log_q - log_p;
        if accepted {
            theta = proposal;
            log_p = log_q;
        }
        if it < burn_in {
            window_accepts += usize::from(accepted);
            burn_accepts += usize::from(accepted);
            history.push(theta.clone());
            if (it + 1) % ADAPT_WINDOW == 0 {
                let rate = window_accepts as f64 / ADAPT_WINDOW as f64;
                lambda *= (2.0 * (rate - TARGET_ACCEPTANCE)).exp();
                window_accepts = 0;
            }
            if it + 1 == burn_in / 2 && burn_in >= 8 * ADAPT_WINDOW {
                let tail = &history[burn_in / 4..];
                for (c, s) in sd.iter_mut().enumerate() {
                    let xs: Vec<f64> = tail.iter().map(|t| t[c]).collect();
                    let spread = crate::stats::sample_variance(&xs).sqrt();
                    if spread > 0.0 {
                        *s = 2.38 / (dim as f64).sqrt() * spread;
                    }
                }
                lambda = 1.0;
            }
        } else {
            accepts += usize::from(accepted);
            coefficients.push(theta.clone());
        }
    }

    let m = design.effects_count();
    let mut super_population = vec![Vec::with_capacity(n_draws); m];
    for theta in &coefficients {
        let pi = probabilities(design, selected, theta);
        for (e, v) in design.contrasts(&pi)?.into_iter().enumerate() {
            super_population[e].push(v);
        }
    }
    let acceptance_rate = accepts as f64 / n_draws as f64;
    let mut warnings = Vec::new();
    if !(0.05..=0.8).contains(&acceptance_rate) {
        warnings.push(format!(
            "acceptance rate {acceptance_rate:.3} outside [0.05, 0.8]"
        ));
    }
    Ok(BinaryPosterior {
        selected_effects: selected.clone(),
        coefficients,
        super_population,
        acceptance_rate,
        burn_in_acceptance_rate: if burn_in > 0 {
            burn_accepts as f64 / burn_in as f64
        } else {
            f64::NAN
        },
        proposal_sd: sd.iter().map(|s| s * lambda).collect(),
        warnings,
    })
}

/// Finite-population effect draws: per coefficient draw, every missing cell is
/// imputed as an independent Bernoulli(`pi(z)`) and the science completed.
pub fn finite_population_binary(
    posterior: &BinaryPosterior,
    obs: &ObservedExperiment,
    design: &Design,
    seed: u64,
    exec: Execution,
) -> Result<Vec<Vec<f64>>> {
    check_binary(obs)?;
    let per_draw = exec.map(posterior.coefficients.len(), |d| -> Result<Vec<f64>> {
        let s = impute_binary_science(posterior, d, obs, design, seed)?;
        science::finite_population_effects(&s, design)
    });
    let m = design.effects_count();
    let mut out = vec![Vec::with_capacity(per_draw.len()); m];
    for row in per_draw {
        for (e, v) in row?.into_iter().enumerate() {
            out[e].push(v);
        }
    }
    Ok(out)
}

/// The completed science for posterior draw `d`.
pub fn impute_binary_science(
    posterior: &BinaryPosterior,
    d: usize,
    obs: &ObservedExperiment,
    design: &Design,
    seed: u64,
) -> Result<ScienceMatrix> {
    let pi = probabilities(
        design,
        &posterior.selected_effects,
        &posterior.coefficients[d],
    );
    let mut rng = seed::stream_rng(seed, d as u64);
    let j = design.combinations_count();
    let mut data = Vec::with_capacity(obs.units() * j);
    for rec in obs.records() {
        for (z, p) in pi.iter().enumerate() {
            let u: f64 = rng.random();
            data.push(if z == rec.arm {
                rec.y
            } else if u < *p {
                1.0
            } else {
                0.0
            });
        }
    }
    ScienceMatrix::new(design, data)
}

/// Per-effect summaries of a set of draws.
pub fn summarize(draws: &[Vec<f64>], alpha: f64) -> Vec<DrawSummary> {
    draws
        .iter()
        .map(|d| DrawSummary::from_draws(d, alpha))
        .collect()
}
