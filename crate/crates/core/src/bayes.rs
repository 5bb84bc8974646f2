//! Conjugate Bayesian inference for finite-population factorial effects.
//!
//! Model: given `(mu, sigma^2)` each unit's potential outcomes are Gaussian with
//! mean `mu`, variance `sigma^2` and common correlation `rho` (known); the
//! prior is `mu | sigma^2 ~ N(mu0, sigma^2 / r0 I)` and
//! `sigma^2 ~ InvGamma(alpha, beta)` with shape `alpha` and rate `beta`.

use rand::Rng;
use rand_distr::{Gamma, StandardNormal};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::assignment::ObservedExperiment;
use crate::design::Design;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::neyman;
use crate::science::{self, ScienceMatrix};
use crate::seed;
use crate::stats::DrawSummary;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianPrior {
    /// Prior mean of `mu(z)` per combination.
    pub mu0: Vec<f64>,
    /// Prior sample size.
    pub r0: f64,
    /// Inverse-gamma shape.
    pub alpha: f64,
    /// Inverse-gamma rate.
    pub beta: f64,
    /// Correlation between a unit's potential outcomes.
    pub rho: f64,
}

impl GaussianPrior {
    /// Near-flat prior: `mu0 = 0`, `r0 = 1e-9`, `alpha = 1`, `beta = 1e-12`.
    pub fn diffuse(design: &Design, rho: f64) -> Self {
        Self {
            mu0: vec![0.0; design.combinations_count()],
            r0: 1e-9,
            alpha: 1.0,
            beta: 1e-12,
            rho,
        }
    }

    pub fn validate(&self, design: &Design) -> Result<()> {
        design.check_len(self.mu0.len(), "prior mean")?;
        let j = design.combinations_count() as f64;
        if !(self.r0 > 0.0) || !(self.alpha > 0.0) || !(self.beta >= 0.0) {
            return Err(Error::Model(
                "prior needs r0 > 0, alpha > 0 and beta >= 0".into(),
            ));
        }
        if self.mu0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Model("prior mean must be finite".into()));
        }
        if !(self.rho > -1.0 / (j - 1.0) && self.rho <= 1.0) {
            return Err(Error::Model(format!(
                "rho = {} outside (-1/{}, 1]; the outcome covariance is not positive definite",
                self.rho,
                j - 1.0
            )));
        }
        Ok(())
    }
}

/// `k(rho) = (1 - rho)(J - 1 + rho)`.
pub fn k_rho(rho: f64, j: usize) -> f64 {
    (1.0 - rho) * (j as f64 - 1.0 + rho)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectPosterior {
    pub name: String,
    pub mean: f64,
    pub variance: f64,
    pub ci: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PosteriorSummary {
    /// Posterior mean of `mu(z)`.
    pub m: Vec<f64>,
    /// Inverse-gamma posterior of `sigma^2`.
    pub shape: f64,
    pub rate: f64,
    /// Posterior mean of `sigma^2`.
    pub v: f64,
    pub k_rho: f64,
    pub alpha_level: f64,
    /// Finite-population effects.
    pub effects: Vec<EffectPosterior>,
    /// Super-population effects `2^{-(K-1)} g_j' mu`.
    pub super_population: Vec<EffectPosterior>,
}

struct Sufficient {
    r: usize,
    n: usize,
    means: Vec<f64>,
    /// Within-arm sums of squares.
    ss: Vec<f64>,
    tau_hat: Vec<f64>,
}

fn sufficient(obs: &ObservedExperiment, design: &Design) -> Result<Sufficient> {
    let est = neyman::estimate(obs, design)?;
    let mut ss = vec![0.0; design.combinations_count()];
    for rec in obs.records() {
        ss[rec.arm] += (rec.y - est.arm_means[rec.arm]).powi(2);
    }
    Ok(Sufficient {
        r: obs.replications(),
        n: obs.units(),
        means: est.arm_means,
        ss,
        tau_hat: est.effects,
    })
}

struct Posterior {
    m: Vec<f64>,
    shape: f64,
    rate: f64,
    /// Posterior precision multiplier `r + r0` of `mu`.
    precision: f64,
}

fn conjugate_update(stats: &Sufficient, prior: &GaussianPrior) -> Posterior {
    let r = stats.r as f64;
    let m = stats
        .means
        .iter()
        .zip(&prior.mu0)
        .map(|(y, mu0)| (r * y + prior.r0 * mu0) / (r + prior.r0))
        .collect();
    let shrink = r * prior.r0 / (r + prior.r0);
    let rate = prior.beta
        + 0.5 * stats.ss.iter().sum::<f64>()
        + 0.5
            * shrink
            * stats
                .means
                .iter()
                .zip(&prior.mu0)
                .map(|(y, mu0)| (y - mu0).powi(2))
                .sum::<f64>();
    Posterior {
        m,
        shape: prior.alpha + stats.n as f64 / 2.0,
        rate,
        precision: r + prior.r0,
    }
}

fn t_interval(mean: f64, variance_given_unit: f64, shape: f64, rate: f64, alpha: f64) -> [f64; 2] {
    let scale = (variance_given_unit * rate / shape).sqrt();
    if scale == 0.0 {
        return [mean, mean];
    }
    let t = StudentsT::new(0.0, 1.0, 2.0 * shape).expect("positive degrees of freedom");
    let q = t.inverse_cdf(1.0 - alpha / 2.0);
    [mean - q * scale, mean + q * scale]
}

/// Closed-form posterior mean and variance of every finite-population effect.
pub fn posterior_closed_form(
    obs: &ObservedExperiment,
    design: &Design,
    prior: &GaussianPrior,
    alpha: f64,
) -> Result<PosteriorSummary> {
    prior.validate(design)?;
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::Config(format!("alpha = {alpha} outside (0, 1)")));
    }
    let stats = sufficient(obs, design)?;
    let post = conjugate_update(&stats, prior);
    if post.shape <= 1.0 {
        return Err(Error::Model(format!(
            "posterior shape {} <= 1; posterior mean of sigma^2 undefined",
            post.shape
        )));
    }
    let v = post.rate / (post.shape - 1.0);
    let j = design.combinations_count();
    let jf = j as f64;
    let rho = prior.rho;
    let k = k_rho(rho, j);
    let w = (1.0 - rho) / jf;
    let scale2 = design.effect_scale().powi(2);
    // Posterior variance of each effect given sigma^2 = 1.
    let c_finite = scale2 * (k / stats.n as f64 + jf / post.precision * (1.0 - w).powi(2));
    let c_super = scale2 * jf / post.precision;
    let contrasts_m = design.contrasts(&post.m)?;
    let names = design.effect_names();
    let effects = (0..j - 1)
        .map(|e| {
            let mean = (1.0 - w) * contrasts_m[e] + w * stats.tau_hat[e];
            EffectPosterior {
                name: names[e].clone(),
                mean,
                variance: c_finite * v,
                ci: t_interval(mean, c_finite, post.shape, post.rate, alpha),
            }
        })
        .collect();
    let super_population = (0..j - 1)
        .map(|e| EffectPosterior {
            name: names[e].clone(),
            mean: contrasts_m[e],
            variance: c_super * v,
            ci: t_interval(contrasts_m[e], c_super, post.shape, post.rate, alpha),
        })
        .collect();
    Ok(PosteriorSummary {
        m: post.m,
        shape: post.shape,
        rate: post.rate,
        v,
        k_rho: k,
        alpha_level: alpha,
        effects,
        super_population,
    })
}

/// One posterior draw of `(sigma^2, mu)` and the completed science.
struct Draw {
    mu: Vec<f64>,
    science: ScienceMatrix,
}

fn draw_once<R: Rng>(
    obs: &ObservedExperiment,
    design: &Design,
    post: &Posterior,
    rho: f64,
    rng: &mut R,
) -> Result<Draw> {
    let gamma = Gamma::new(post.shape, 1.0).map_err(|e| Error::Model(e.to_string()))?;
    let sigma2 = post.rate / rng.sample(gamma);
    let sd_mu = (sigma2 / post.precision).sqrt();
    let mu: Vec<f64> = post
        .m
        .iter()
        .map(|m| m + sd_mu * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let j = design.combinations_count();
    let missing = (j - 1) as f64;
    // Missing outcomes of a unit have covariance sigma^2 (1 - rho)(I + rho 11'),
    // factored as sqrt(sigma^2 (1 - rho)) (I + b 11').
    let b = (-1.0 + (1.0 + missing * rho).sqrt()) / missing;
    let amp = (sigma2 * (1.0 - rho)).max(0.0).sqrt();
    let mut data = Vec::with_capacity(obs.units() * j);
    let mut e = vec![0.0; j - 1];
    for rec in obs.records() {
        for x in e.iter_mut() {
            *x = rng.sample(StandardNormal);
        }
        let sum: f64 = e.iter().sum();
        let shift = rho * (rec.y - mu[rec.arm]);
        let mut slot = 0;
        for z in 0..j {
            if z == rec.arm {
                data.push(rec.y);
            } else {
                data.push(mu[z] + shift + amp * (e[slot] + b * sum));
                slot += 1;
            }
        }
    }
    Ok(Draw {
        mu,
        science: ScienceMatrix::new(design, data)?,
    })
}

/// Monte Carlo posterior obtained by imputing every missing potential outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloPosterior {
    pub n_draws: usize,
    /// `finite[j][d]`: finite-population effect `j` in draw `d`.
    pub finite: Vec<Vec<f64>>,
    /// `super_population[j][d]`: `2^{-(K-1)} g_j' mu` in draw `d`.
    pub super_population: Vec<Vec<f64>>,
    pub finite_summary: Vec<DrawSummary>,
    pub super_summary: Vec<DrawSummary>,
}

pub fn posterior_monte_carlo(
    obs: &ObservedExperiment,
    design: &Design,
    prior: &GaussianPrior,
    n_draws: usize,
    alpha: f64,
    seed: u64,
    exec: Execution,
) -> Result<MonteCarloPosterior> {
    prior.validate(design)?;
    if n_draws < 2 {
        return Err(Error::Config(
            "posterior Monte Carlo needs at least 2 draws".into(),
        ));
    }
    let stats = sufficient(obs, design)?;
    let post = conjugate_update(&stats, prior);
    let per_draw = exec.map(n_draws, |d| -> Result<(Vec<f64>, Vec<f64>)> {
        let draw = draw_once(
            obs,
            design,
            &post,
            prior.rho,
            &mut seed::stream_rng(seed, d as u64),
        )?;
        Ok((
            science::finite_population_effects(&draw.science, design)?,
            design.contrasts(&draw.mu)?,
        ))
    });
    let m = design.effects_count();
    let mut finite = vec![Vec::with_capacity(n_draws); m];
    let mut super_population = vec![Vec::with_capacity(n_draws); m];
    for item in per_draw {
        let (f, s) = item?;
        for e in 0..m {
            finite[e].push(f[e]);
            super_population[e].push(s[e]);
        }
    }
    Ok(MonteCarloPosterior {
        n_draws,
        finite_summary: finite
            .iter()
            .map(|d| DrawSummary::from_draws(d, alpha))
            .collect(),
        super_summary: super_population
            .iter()
            .map(|d| DrawSummary::from_draws(d, alpha))
            .collect(),
        finite,
        super_population,
    })
}

/// A completed science drawn from the posterior predictive distribution.
pub fn impute_completed_science(
    obs: &ObservedExperiment,
    design: &Design,
    prior: &GaussianPrior,
    seed: u64,
) -> Result<ScienceMatrix> {
    prior.validate(design)?;
    let post = conjugate_update(&sufficient(obs, design)?, prior);
    Ok(draw_once(obs, design, &post, prior.rho, &mut seed::rng(seed))?.science)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiniteVsSuper {
    pub name: String,
    pub finite_variance: f64,
    pub super_variance: f64,
    /// `finite_variance / super_variance`.
    pub ratio: f64,
    pub finite_ci: [f64; 2],
    pub super_ci: [f64; 2],
    pub monte_carlo_finite_variance: f64,
    pub monte_carlo_super_variance: f64,
}

pub fn finite_vs_super_report(
    obs: &ObservedExperiment,
    design: &Design,
    prior: &GaussianPrior,
    n_draws: usize,
    alpha: f64,
    seed: u64,
    exec: Execution,
) -> Result<Vec<FiniteVsSuper>> {
    let closed = posterior_closed_form(obs, design, prior, alpha)?;
    let mc = posterior_monte_carlo(obs, design, prior, n_draws, alpha, seed, exec)?;
    Ok(closed
        .effects
        .iter()
        .zip(&closed.super_population)
        .enumerate()
        .map(|(e, (f, s))| FiniteVsSuper {
            name: f.name.clone(),
            finite_variance: f.variance,
            super_variance: s.variance,
            ratio: f.variance / s.variance,
            finite_ci: f.ci,
            super_ci: s.ci,
            monte_carlo_finite_variance: mc.finite_summary[e].variance,
            monte_carlo_super_variance: mc.super_summary[e].variance,
        })
        .collect())
}
