//! End-to-end pipelines producing serializable reports.
//!
//! Every stochastic step draws its seed from one master seed through
//! [`seed::derive`] with a fixed task label (`"fisher"`, `"bayes"`,
//! `"binary.science"`, ...), so reports are reproducible regardless of thread
//! count. Absent methods serialize as explicit `null`s.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;

use crate::assignment::{self, ObservedExperiment};
use crate::bayes::{self, GaussianPrior};
use crate::binary::{self, BinaryStudyConfig, PluginEstimate};
use crate::config::Config;
use crate::design::Design;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fisher::{
    self, FiducialInterval, FiducialSearch, GridSpec, Mode, RandomEtaSpec, RandomizationResult,
    RandomizationSettings, SharpNull,
};
use crate::neyman::{self, serialize_matrix, TStatistic};
use crate::science::{self, ScienceMatrix};
use crate::seed;
use crate::stats::DrawSummary;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Run metadata. `wall_time_ms` is the only field that varies between
/// identical runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetadata {
    pub command: String,
    pub seed: u64,
    pub version: String,
    pub parallel: bool,
    /// Fully resolved configuration, re-runnable as a config file.
    pub config: BTreeMap<String, String>,
    pub wall_time_ms: f64,
}

impl RunMetadata {
    fn new(command: &str, seed: u64, config: &Config, exec: Execution, started: Instant) -> Self {
        Self {
            command: command.to_string(),
            seed,
            version: VERSION.to_string(),
            parallel: exec.is_parallel(),
            config: config.entries().clone(),
            wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Methods {
    pub neyman: bool,
    pub fisher: bool,
    pub bayes: bool,
}

impl Methods {
    /// Parses a `+` or `,` separated list such as `neyman+fisher`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut m = Methods {
            neyman: false,
            fisher: false,
            bayes: false,
        };
        for item in text
            .split(['+', ','])
            .map(str::trim)
            .filter(|s| !s.is_empty())
        {
            match item {
                "neyman" => m.neyman = true,
                "fisher" => m.fisher = true,
                "bayes" => m.bayes = true,
                "all" => {
                    m = Methods {
                        neyman: true,
                        fisher: true,
                        bayes: true,
                    }
                }
                other => return Err(Error::Config(format!("unknown method {other:?}"))),
            }
        }
        Ok(m)
    }
}

/// Options of the `analyze` pipeline, resolved from a [`Config`].
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzeOptions {
    pub alpha: f64,
    pub seed: u64,
    pub methods: Methods,
    pub fisher_mode: Mode,
    pub fisher_draws: usize,
    pub fisher_search: FiducialSearch,
    /// Sharp null for the randomization histograms; point estimates when absent.
    pub fisher_eta: Option<Vec<f64>>,
    pub enumeration_cap: u64,
    pub prior: Option<GaussianPrior>,
    pub rho: f64,
    /// Monte Carlo draws for the Bayesian cross-check; 0 skips it.
    pub bayes_draws: usize,
    pub exec: Execution,
}

impl AnalyzeOptions {
    /// Reads `alpha`, `seed`, `methods`, `fisher.*`, `bayes.*` and `exec.parallel`.
    pub fn from_config(c: &Config, design: &Design) -> Result<Self> {
        let search = match c.raw("fisher.search").unwrap_or("scan") {
            "scan" => FiducialSearch::Scan(GridSpec {
                lower: c.get("fisher.grid.lower")?,
                upper: c.get("fisher.grid.upper")?,
                points: c.get_or("fisher.grid.points", GridSpec::default().points)?,
                tol: c.get_or("fisher.grid.tol", GridSpec::default().tol)?,
            }),
            "random_eta" => FiducialSearch::RandomEta(RandomEtaSpec {
                count: c.get_or("fisher.eta_count", RandomEtaSpec::default().count)?,
                lower: c.get_or("fisher.eta_lower", RandomEtaSpec::default().lower)?,
                upper: c.get_or("fisher.eta_upper", RandomEtaSpec::default().upper)?,
            }),
            other => {
                return Err(Error::Config(format!(
                    "fisher.search: unknown search {other:?}"
                )))
            }
        };
        let fisher_mode = match c.raw("fisher.mode").unwrap_or("monte_carlo") {
            "monte_carlo" => Mode::MonteCarlo,
            "exact" => Mode::Exact,
            other => {
                return Err(Error::Config(format!(
                    "fisher.mode: unknown mode {other:?}"
                )))
            }
        };
        let rho = c.get_or("bayes.rho", 0.5)?;
        let prior = if c.contains("bayes.mu0") || c.contains("bayes.r0") {
            let j = design.combinations_count();
            let mu0 = c.get_list("bayes.mu0")?.unwrap_or_else(|| vec![0.0]);
            let mu0 = match mu0.len() {
                1 => vec![mu0[0]; j],
                _ => mu0,
            };
            let diffuse = GaussianPrior::diffuse(design, rho);
            Some(GaussianPrior {
                mu0,
                r0: c.get_or("bayes.r0", diffuse.r0)?,
                alpha: c.get_or("bayes.alpha", diffuse.alpha)?,
                beta: c.get_or("bayes.beta", diffuse.beta)?,
                rho,
            })
        } else {
            None
        };
        let alpha: f64 = c.get_or("alpha", 0.05)?;
        if !(0.0 < alpha && alpha < 1.0) {
            return Err(Error::Config(format!("alpha = {alpha} outside (0, 1)")));
        }
        Ok(Self {
            alpha,
            seed: c.get_or("seed", 0)?,
            methods: Methods::parse(c.raw("methods").unwrap_or("neyman+fisher"))?,
            fisher_mode,
            fisher_draws: c.get_or("fisher.n_draws", 2000)?,
            fisher_search: search,
            fisher_eta: c.get_list("fisher.eta")?,
            enumeration_cap: c.get_or(
                "fisher.enumeration_cap",
                assignment::DEFAULT_ENUMERATION_CAP,
            )?,
            prior,
            rho,
            bayes_draws: c.get_or("bayes.n_draws", 0)?,
            exec: execution(c)?,
        })
    }

    fn fisher_settings(&self) -> RandomizationSettings {
        RandomizationSettings {
            mode: self.fisher_mode,
            n_draws: self.fisher_draws,
            seed: seed::derive(self.seed, "fisher"),
            enumeration_cap: self.enumeration_cap,
            exec: self.exec,
        }
    }
}

/// `exec.parallel = false` selects the sequential path.
pub fn execution(c: &Config) -> Result<Execution> {
    Ok(if c.get_or("exec.parallel", true)? {
        Execution::Parallel
    } else {
        Execution::Sequential
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectRow {
    pub name: String,
    pub point: f64,
    pub neyman_var: Option<f64>,
    pub neyman_ci: Option<[f64; 2]>,
    pub fisher_ci: Option<[f64; 2]>,
    pub bayes_mean: Option<f64>,
    pub bayes_var: Option<f64>,
    pub bayes_ci: Option<[f64; 2]>,
    pub bayes_mc_mean: Option<f64>,
    pub bayes_mc_var: Option<f64>,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectReport {
    pub alpha: f64,
    pub units: usize,
    pub replications: usize,
    pub effects: Vec<EffectRow>,
    pub t_statistic: Option<TStatistic>,
    pub fisher_n_draws: Option<usize>,
    pub fisher_mode: Option<Mode>,
    pub fisher_search: Option<FiducialSearch>,
    pub bayes_prior: Option<GaussianPrior>,
    pub diagnostics: Vec<String>,
    pub metadata: RunMetadata,
}

/// Full output of `analyze`: the report plus plot data.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzeOutput {
    pub report: EffectReport,
    pub fiducial: Vec<FiducialInterval>,
    pub randomization: Option<RandomizationResult>,
}

pub fn analyze(
    obs: &ObservedExperiment,
    design: &Design,
    config: &Config,
) -> Result<AnalyzeOutput> {
    let started = Instant::now();
    let opts = AnalyzeOptions::from_config(config, design)?;
    let ney = neyman::analyze(obs, design, opts.alpha)?;
    let names = design.effect_names();
    let mut diagnostics = Vec::new();
    let mut rows: Vec<EffectRow> = names
        .iter()
        .zip(&ney.effects)
        .map(|(name, &point)| EffectRow {
            name: name.clone(),
            point,
            neyman_var: None,
            neyman_ci: None,
            fisher_ci: None,
            bayes_mean: None,
            bayes_var: None,
            bayes_ci: None,
            bayes_mc_mean: None,
            bayes_mc_var: None,
            diagnostics: Vec::new(),
        })
        .collect();

    let mut t_statistic = None;
    if opts.methods.neyman {
        match &ney.inference {
            Some(inf) => {
                for (e, row) in rows.iter_mut().enumerate() {
                    row.neyman_var = Some(inf.var_estimates[e]);
                    row.neyman_ci = Some(inf.intervals[e]);
                }
                if let Some(w) = &inf.t_statistic.warning {
                    diagnostics.push(w.clone());
                }
                t_statistic = Some(inf.t_statistic.clone());
            }
            None => diagnostics.push(
                "neyman: one unit per arm, variance estimates unavailable (need r >= 2)".into(),
            ),
        }
    }

    let mut fiducial = Vec::new();
    let mut randomization = None;
    if opts.methods.fisher {
        let settings = opts.fisher_settings();
        let eta = opts
            .fisher_eta
            .clone()
            .unwrap_or_else(|| ney.effects.clone());
        let result =
            fisher::randomization_pvalues(obs, design, &SharpNull::new(design, eta)?, &settings)?;
        diagnostics.extend(result.warnings.iter().map(|w| format!("fisher: {w}")));
        randomization = Some(result);
        fiducial =
            fisher::fiducial_intervals(obs, design, opts.alpha, &opts.fisher_search, &settings)?;
        for (row, iv) in rows.iter_mut().zip(&fiducial) {
            row.fisher_ci = Some([iv.lower, iv.upper]);
        }
    }

    let mut bayes_prior = None;
    if opts.methods.bayes {
        let prior = opts
            .prior
            .clone()
            .unwrap_or_else(|| GaussianPrior::diffuse(design, opts.rho));
        let post = bayes::posterior_closed_form(obs, design, &prior, opts.alpha)?;
        for (row, p) in rows.iter_mut().zip(&post.effects) {
            row.bayes_mean = Some(p.mean);
            row.bayes_var = Some(p.variance);
            row.bayes_ci = Some(p.ci);
        }
        if opts.bayes_draws > 0 {
            let mc = bayes::posterior_monte_carlo(
                obs,
                design,
                &prior,
                opts.bayes_draws,
                opts.alpha,
                seed::derive(opts.seed, "bayes"),
                opts.exec,
            )?;
            for (row, s) in rows.iter_mut().zip(&mc.finite_summary) {
                row.bayes_mc_mean = Some(s.mean);
                row.bayes_mc_var = Some(s.variance);
            }
        }
        bayes_prior = Some(prior);
    }

    let report = EffectReport {
        alpha: opts.alpha,
        units: obs.units(),
        replications: obs.replications(),
        effects: rows,
        t_statistic,
        fisher_n_draws: opts
            .methods
            .fisher
            .then_some(randomization.as_ref().map_or(0, |r| r.n_draws)),
        fisher_mode: opts.methods.fisher.then_some(opts.fisher_mode),
        fisher_search: opts.methods.fisher.then_some(opts.fisher_search),
        bayes_prior,
        diagnostics,
        metadata: RunMetadata::new("analyze", opts.seed, config, opts.exec, started),
    };
    Ok(AnalyzeOutput {
        report,
        fiducial,
        randomization,
    })
}

/// Effect table as CSV rows (empty cells for absent methods).
pub fn effect_table_csv(report: &EffectReport) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = String::from(
        "name,point,neyman_var,neyman_lo,neyman_hi,fisher_lo,fisher_hi,bayes_mean,bayes_var,bayes_lo,bayes_hi\n",
    );
    for r in &report.effects {
        let cells = [
            r.name.clone(),
            r.point.to_string(),
            opt(r.neyman_var),
            opt(r.neyman_ci.map(|c| c[0])),
            opt(r.neyman_ci.map(|c| c[1])),
            opt(r.fisher_ci.map(|c| c[0])),
            opt(r.fisher_ci.map(|c| c[1])),
            opt(r.bayes_mean),
            opt(r.bayes_var),
            opt(r.bayes_ci.map(|c| c[0])),
            opt(r.bayes_ci.map(|c| c[1])),
        ];
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Population quantities of a known science.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruthReport {
    pub effect_names: Vec<String>,
    pub effects: Vec<f64>,
    pub means: Vec<f64>,
    #[serde(serialize_with = "serialize_matrix")]
    pub covariance: nalgebra::DMatrix<f64>,
    pub effect_variances: Vec<f64>,
    /// `S_j^2 / N`.
    pub bias_terms: Vec<f64>,
    pub true_variances: Vec<f64>,
    pub metadata: RunMetadata,
}

/// Options of the `simulate` pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulateOptions {
    pub k: usize,
    pub n: usize,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub structure: science::CorrelationStructure,
    pub seed: u64,
    pub exec: Execution,
}

impl SimulateOptions {
    /// Reads `design.k`, `simulate.n`, `simulate.mean`, `simulate.sd` and the
    /// `simulate.structure` block (`additive`, `compound`, `block`, `two_parameter`).
    pub fn from_config(c: &Config) -> Result<Self> {
        let k: usize = c.get_or("design.k", 2)?;
        let design = Design::new(k)?;
        let j = design.combinations_count();
        let broadcast = |key: &str, default: f64| -> Result<Vec<f64>> {
            Ok(match c.get_list(key)? {
                Some(v) if v.len() == 1 => vec![v[0]; j],
                Some(v) => v,
                None => vec![default; j],
            })
        };
        let rho = c.get_or("simulate.rho", 0.5)?;
        let structure = match c.raw("simulate.structure").unwrap_or("compound") {
            "additive" => science::CorrelationStructure::StrictAdditive,
            "compound" => science::CorrelationStructure::CompoundSymmetry(rho),
            "block" => science::CorrelationStructure::WithinFactorBlock(rho),
            "two_parameter" => science::CorrelationStructure::TwoParameter(
                c.get_or("simulate.rho1", 0.0)?,
                c.get_or("simulate.rho2", 0.0)?,
            ),
            "explicit" => science::CorrelationStructure::Explicit(
                c.get_matrix("simulate.correlation")?.ok_or_else(|| {
                    Error::Config("simulate.correlation required for explicit structure".into())
                })?,
            ),
            other => {
                return Err(Error::Config(format!(
                    "simulate.structure: unknown {other:?}"
                )))
            }
        };
        Ok(Self {
            k,
            n: c.get_or("simulate.n", 5 * j)?,
            mean: broadcast("simulate.mean", 0.0)?,
            sd: broadcast("simulate.sd", 1.0)?,
            structure,
            seed: c.get_or("seed", 0)?,
            exec: execution(c)?,
        })
    }
}

pub fn truth_report(
    science: &ScienceMatrix,
    design: &Design,
    metadata: RunMetadata,
) -> Result<TruthReport> {
    let moments = science::population_moments(science, design)?;
    let oracle = neyman::sampling_oracle(science, design)?;
    Ok(TruthReport {
        effect_names: design.effect_names(),
        effects: oracle.effects.clone(),
        means: moments.means.clone(),
        covariance: moments.covariance.clone(),
        effect_variances: moments.effect_variances.clone(),
        bias_terms: oracle.bias_terms.clone(),
        true_variances: oracle.true_variances,
        metadata,
    })
}

/// Generates a Gaussian science and its truth report.
pub fn simulate(config: &Config) -> Result<(Design, ScienceMatrix, TruthReport)> {
    let started = Instant::now();
    let opts = SimulateOptions::from_config(config)?;
    let design = Design::new(opts.k)?;
    let science = science::simulate_gaussian_science(
        &design,
        opts.n,
        &opts.mean,
        &opts.sd,
        &opts.structure,
        seed::derive(opts.seed, "simulate"),
        opts.exec,
    )?;
    let meta = RunMetadata::new("simulate", opts.seed, config, opts.exec, started);
    let truth = truth_report(&science, &design, meta)?;
    Ok((design, science, truth))
}

/// Draws one balanced assignment and the observed data it reveals.
pub fn assign(
    science: &ScienceMatrix,
    design: &Design,
    config: &Config,
) -> Result<ObservedExperiment> {
    let master: u64 = config.get_or("seed", 0)?;
    let a = assignment::randomize(science.units(), design, seed::derive(master, "assign"))?;
    assignment::observe(science, &a, design)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleEffect {
    pub name: String,
    pub truth: f64,
    pub mean_estimate: f64,
    pub variance: f64,
    pub variance_theorem: f64,
    pub estimator_expectation: f64,
    pub mean_var_estimate: f64,
    /// `S_j^2 / N`.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub method: String,
    pub assignments: usize,
    pub effects: Vec<OracleEffect>,
    /// Largest absolute difference between the empirical and closed-form
    /// means, variances and covariances.
    pub max_deviation: f64,
    pub metadata: RunMetadata,
}

/// Compares the exact sampling moments with enumeration (or Monte Carlo).
pub fn oracle(science: &ScienceMatrix, design: &Design, config: &Config) -> Result<OracleReport> {
    let started = Instant::now();
    let master: u64 = config.get_or("seed", 0)?;
    let exec = execution(config)?;
    let method = config.raw("oracle.method").unwrap_or("exact").to_string();
    let cap = config.get_or(
        "oracle.enumeration_cap",
        assignment::DEFAULT_ENUMERATION_CAP,
    )?;
    let empirical = match method.as_str() {
        "exact" => neyman::enumeration_moments(science, design, cap)?,
        "monte_carlo" => neyman::monte_carlo_moments(
            science,
            design,
            config.get_or("oracle.n_draws", 100_000)?,
            seed::derive(master, "oracle"),
            exec,
        )?,
        other => return Err(Error::Config(format!("oracle.method: unknown {other:?}"))),
    };
    let closed = neyman::sampling_oracle(science, design)?;
    let m = design.effects_count();
    let mut max_deviation: f64 = 0.0;
    for a in 0..m {
        max_deviation = max_deviation.max((empirical.mean[a] - closed.effects[a]).abs());
        for b in 0..m {
            max_deviation = max_deviation
                .max((empirical.covariance[(a, b)] - closed.true_covariances[(a, b)]).abs());
        }
    }
    let effects = design
        .effect_names()
        .into_iter()
        .enumerate()
        .map(|(e, name)| OracleEffect {
            name,
            truth: closed.effects[e],
            mean_estimate: empirical.mean[e],
            variance: empirical.covariance[(e, e)],
            variance_theorem: closed.true_variances[e],
            estimator_expectation: closed.estimator_expectation,
            mean_var_estimate: empirical.mean_var_estimate,
            gap: closed.bias_terms[e],
        })
        .collect();
    Ok(OracleReport {
        method,
        assignments: empirical.assignments,
        effects,
        max_deviation,
        metadata: RunMetadata::new("oracle", master, config, exec, started),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinaryEffectRow {
    pub name: String,
    pub true_effect: f64,
    pub plugin: f64,
    pub plugin_se: f64,
    pub super_population: DrawSummary,
    pub finite_population: DrawSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinaryReport {
    pub study: BinaryStudyConfig,
    pub effects: Vec<BinaryEffectRow>,
    pub acceptance_rate: f64,
    pub burn_in_acceptance_rate: f64,
    pub warnings: Vec<String>,
    pub metadata: RunMetadata,
}

/// The binary spring study: simulate, randomize, estimate, sample, impute.
pub fn binary_demo(config: &Config) -> Result<(BinaryReport, ObservedExperiment)> {
    let started = Instant::now();
    let mut full = Config::parse(crate::fixtures::TABLE5_CONFIG)?;
    for (k, v) in config.entries() {
        full.set(k, v.clone());
    }
    let study = BinaryStudyConfig::from_config(&full)?;
    let master: u64 = full.get_or("seed", 0)?;
    let alpha: f64 = full.get_or("alpha", 0.05)?;
    let exec = execution(&full)?;
    let design = study.design()?;
    let science = science::simulate_bernoulli_science(
        &design,
        study.r,
        &study.pi,
        seed::derive(master, "binary.science"),
        exec,
    )?;
    let a = assignment::randomize(
        science.units(),
        &design,
        seed::derive(master, "binary.assign"),
    )?;
    let obs = assignment::observe(&science, &a, &design)?;
    let plugin: Vec<PluginEstimate> = binary::plugin_estimates(&obs, &design)?;
    let post = binary::sample_binary_posterior(
        &obs,
        &design,
        &study,
        study.n_draws,
        study.burn_in,
        seed::derive(master, "binary.mcmc"),
    )?;
    let finite = binary::finite_population_binary(
        &post,
        &obs,
        &design,
        seed::derive(master, "binary.finite"),
        exec,
    )?;
    let truth = design.contrasts(&study.pi)?;
    let effects = plugin
        .into_iter()
        .enumerate()
        .map(|(e, p)| BinaryEffectRow {
            name: p.name,
            true_effect: truth[e],
            plugin: p.estimate,
            plugin_se: p.se,
            super_population: DrawSummary::from_draws(&post.super_population[e], alpha),
            finite_population: DrawSummary::from_draws(&finite[e], alpha),
        })
        .collect();
    let report = BinaryReport {
        study,
        effects,
        acceptance_rate: post.acceptance_rate,
        burn_in_acceptance_rate: post.burn_in_acceptance_rate,
        warnings: post.warnings,
        metadata: RunMetadata::new("binary-demo", master, &full, exec, started),
    };
    Ok((report, obs))
}

/// JSON text with the timing field removed, for reproducibility comparisons.
pub fn without_timing<T: Serialize>(report: &T) -> Result<String> {
    let mut value = serde_json::to_value(report)?;
    if let Some(meta) = value.get_mut("metadata").and_then(|m| m.as_object_mut()) {
        meta.remove("wall_time_ms");
    }
    Ok(serde_json::to_string(&value)?)
}
