//! Sharp-null randomization tests and their inversion into fiducial intervals.
//!
//! Under `H0: tau_i = eta` for every unit, each unit's missing outcomes follow
//! from its observed one, so the randomization distribution of every effect
//! estimate is known. All p-values for one call share a single reference set of
//! assignments (common random numbers): assignment `d` depends only on the seed
//! and `d`, never on `eta`. With a fixed reference set the upper-tail p-value of
//! effect `j` is non-decreasing in `eta_j`.

use rand::Rng;
use serde::Serialize;

use crate::assignment::{self, ObservedExperiment};
use crate::design::Design;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::neyman;
use crate::science::ScienceMatrix;
use crate::seed;

/// Below this many draws a result carries a warning.
pub const MIN_RECOMMENDED_DRAWS: usize = 100;

const TIE_TOLERANCE: f64 = 1e-9;

/// `H0: tau_i = eta` for all units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SharpNull {
    pub eta: Vec<f64>,
}

impl SharpNull {
    pub fn new(design: &Design, eta: Vec<f64>) -> Result<Self> {
        if eta.len() != design.effects_count() {
            return Err(Error::DimensionMismatch {
                expected: design.effects_count(),
                actual: eta.len(),
                context: "sharp null effect vector",
            });
        }
        if eta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Model("sharp null effects must be finite".into()));
        }
        Ok(Self { eta })
    }
}

/// Completes the science under the sharp null: unit `i` gets
/// `tau_i0 = y_i - (1/2) g_obs' eta` and outcomes `g_0 tau_i0 + sum_j g_j eta_j / 2`.
/// The observed cell is copied from the data so it is reproduced exactly.
pub fn impute_science(
    obs: &ObservedExperiment,
    design: &Design,
    null: &SharpNull,
) -> Result<ScienceMatrix> {
    obs.check_design(design)?;
    let base = design.reconstruct_outcomes(0.0, &null.eta)?;
    let j = design.combinations_count();
    let mut data = Vec::with_capacity(obs.units() * j);
    for rec in obs.records() {
        let tau0 = rec.y - base[rec.arm];
        data.extend(base.iter().map(|b| tau0 + b));
        let last = data.len() - j;
        data[last + rec.arm] = rec.y;
    }
    ScienceMatrix::new(design, data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Every balanced assignment (the observed one among them).
    Exact,
    /// Random assignments; the observed assignment is added to the reference set.
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomizationSettings {
    pub mode: Mode,
    pub n_draws: usize,
    pub seed: u64,
    pub enumeration_cap: u64,
    pub exec: Execution,
}

impl Default for RandomizationSettings {
    fn default() -> Self {
        Self {
            mode: Mode::MonteCarlo,
            n_draws: 2000,
            seed: 0,
            enumeration_cap: assignment::DEFAULT_ENUMERATION_CAP,
            exec: Execution::default(),
        }
    }
}

/// The assignments against which observed estimates are compared.
#[derive(Debug, Clone)]
pub struct ReferenceSet {
    mode: Mode,
    arms: Vec<Vec<usize>>,
    exec: Execution,
}

impl ReferenceSet {
    pub fn build(
        obs: &ObservedExperiment,
        design: &Design,
        settings: &RandomizationSettings,
    ) -> Result<Self> {
        obs.check_design(design)?;
        let n = obs.units();
        let arms = match settings.mode {
            Mode::Exact => assignment::enumerate_assignments(n, design, settings.enumeration_cap)?
                .map(|a| a.arms().to_vec())
                .collect(),
            Mode::MonteCarlo => {
                if settings.n_draws == 0 {
                    return Err(Error::Config("n_draws must be positive".into()));
                }
                settings.exec.map(settings.n_draws, |d| {
                    let mut rng = seed::stream_rng(settings.seed, d as u64);
                    assignment::randomize_with(n, design, &mut rng)
                        .expect("observed data is balanced")
                        .arms()
                        .to_vec()
                })
            }
        };
        Ok(Self {
            mode: settings.mode,
            arms,
            exec: settings.exec,
        })
    }

    pub fn len(&self) -> usize {
        self.arms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arms.is_empty()
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Effect estimates of a complete science under every reference assignment.
    fn estimates(&self, science: &ScienceMatrix, design: &Design) -> Vec<Vec<f64>> {
        let j = design.combinations_count();
        let r = science.replications();
        self.exec.map(self.arms.len(), |d| {
            let arms = &self.arms[d];
            let y: Vec<f64> = arms
                .iter()
                .enumerate()
                .map(|(i, &a)| science.get(i, a))
                .collect();
            let means = assignment::arm_means(&y, arms, j, r);
            design.contrasts(&means).expect("length J")
        })
    }
}

/// Randomization distribution and p-values of every effect under one sharp null.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RandomizationResult {
    pub eta: Vec<f64>,
    pub observed: Vec<f64>,
    /// `draws[j][d]`: estimate of effect `j` under reference assignment `d`.
    pub draws: Vec<Vec<f64>>,
    /// Center used for the two-sided p-value (`eta_j`, the randomization mean).
    pub null_mean: Vec<f64>,
    /// Share of assignments with `|tau_d - eta_j| >= |tau_obs - eta_j|`.
    pub p_two_sided: Vec<f64>,
    /// Share of assignments with `tau_d >= tau_obs`.
    pub p_upper: Vec<f64>,
    /// Share of assignments with `tau_d <= tau_obs`.
    pub p_lower: Vec<f64>,
    pub n_draws: usize,
    pub mode: Mode,
    pub warnings: Vec<String>,
}

fn tail_share(count: usize, total: usize, mode: Mode) -> f64 {
    match mode {
        Mode::Exact => count as f64 / total as f64,
        Mode::MonteCarlo => (count + 1) as f64 / (total + 1) as f64,
    }
}

/// p-values of all effects under `null` against a prepared reference set.
pub fn pvalues_with(
    obs: &ObservedExperiment,
    design: &Design,
    null: &SharpNull,
    reference: &ReferenceSet,
) -> Result<RandomizationResult> {
    let observed = neyman::estimate(obs, design)?.effects;
    let science = impute_science(obs, design, null)?;
    let per_draw = reference.estimates(&science, design);
    let m = design.effects_count();
    let total = per_draw.len();
    let mut draws = vec![Vec::with_capacity(total); m];
    for est in &per_draw {
        for (col, v) in draws.iter_mut().zip(est) {
            col.push(*v);
        }
    }
    let mut p_two_sided = Vec::with_capacity(m);
    let mut p_upper = Vec::with_capacity(m);
    let mut p_lower = Vec::with_capacity(m);
    for e in 0..m {
        let obs_e = observed[e];
        let tol = TIE_TOLERANCE * obs_e.abs().max(1.0);
        let center = null.eta[e];
        let dev = (obs_e - center).abs();
        let col = &draws[e];
        let count = |f: &dyn Fn(f64) -> bool| col.iter().filter(|&&v| f(v)).count();
        p_two_sided.push(tail_share(
            count(&|v| (v - center).abs() >= dev - tol),
            total,
            reference.mode,
        ));
        p_upper.push(tail_share(
            count(&|v| v >= obs_e - tol),
            total,
            reference.mode,
        ));
        p_lower.push(tail_share(
            count(&|v| v <= obs_e + tol),
            total,
            reference.mode,
        ));
    }
    let mut warnings = Vec::new();
    if reference.mode == Mode::MonteCarlo && total < MIN_RECOMMENDED_DRAWS {
        warnings.push(format!(
            "only {total} randomization draws; at least {MIN_RECOMMENDED_DRAWS} recommended"
        ));
    }
    Ok(RandomizationResult {
        eta: null.eta.clone(),
        observed,
        draws,
        null_mean: null.eta.clone(),
        p_two_sided,
        p_upper,
        p_lower,
        n_draws: total,
        mode: reference.mode,
        warnings,
    })
}

pub fn randomization_pvalues(
    obs: &ObservedExperiment,
    design: &Design,
    null: &SharpNull,
    settings: &RandomizationSettings,
) -> Result<RandomizationResult> {
    let reference = ReferenceSet::build(obs, design, settings)?;
    pvalues_with(obs, design, null, &reference)
}

/// Coarse scan followed by bisection on each bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    /// Scan range; defaults to the point estimate plus or minus
    /// `max(8 SE, 1)` with the Neymanian standard error.
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub points: usize,
    /// Bisection stops when the bracket is at most this wide.
    pub tol: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            lower: None,
            upper: None,
            points: 21,
            tol: 0.05,
        }
    }
}

/// Uniform random `eta` vectors over a cube, each effect read marginally.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RandomEtaSpec {
    pub count: usize,
    pub lower: f64,
    pub upper: f64,
}

impl Default for RandomEtaSpec {
    fn default() -> Self {
        Self {
            count: 100,
            lower: -6.0,
            upper: 6.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FiducialSearch {
    Scan(GridSpec),
    RandomEta(RandomEtaSpec),
}

impl Default for FiducialSearch {
    fn default() -> Self {
        FiducialSearch::Scan(GridSpec::default())
    }
}

/// `[zeta_L, zeta_U]` with `zeta_L = sup{eta_j : p(eta_j) <= alpha/2}` and
/// `zeta_U = inf{eta_j : p(eta_j) >= 1 - alpha/2}`, `p` the upper-tail p-value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiducialInterval {
    /// Yates position of the effect.
    pub effect: usize,
    pub name: String,
    pub alpha: f64,
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    /// Every evaluated `(eta_j, p)` pair, sorted by `eta_j`.
    pub curve: Vec<(f64, f64)>,
}

struct Curve<'a> {
    obs: &'a ObservedExperiment,
    design: &'a Design,
    reference: &'a ReferenceSet,
    base_eta: Vec<f64>,
    effect: usize,
    evaluated: Vec<(f64, f64)>,
}

impl Curve<'_> {
    fn p(&mut self, value: f64) -> Result<f64> {
        let mut eta = self.base_eta.clone();
        eta[self.effect - 1] = value;
        let null = SharpNull::new(self.design, eta)?;
        let res = pvalues_with(self.obs, self.design, &null, self.reference)?;
        let p = res.p_upper[self.effect - 1];
        self.evaluated.push((value, p));
        Ok(p)
    }
}

/// Finds the crossing between `lo` (predicate false) and `hi` (predicate true).
fn bisect(
    curve: &mut Curve<'_>,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
    pred: impl Fn(f64) -> bool,
) -> Result<(f64, f64)> {
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if pred(curve.p(mid)?) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((lo, hi))
}

/// Fiducial interval for effect `j` (Yates position) from a one-dimensional scan
/// of `eta_j` with the other components fixed at their point estimates.
pub fn fiducial_interval(
    obs: &ObservedExperiment,
    design: &Design,
    j: usize,
    alpha: f64,
    grid: &GridSpec,
    settings: &RandomizationSettings,
) -> Result<FiducialInterval> {
    let reference = ReferenceSet::build(obs, design, settings)?;
    fiducial_interval_with(obs, design, j, alpha, grid, &reference)
}

pub fn fiducial_interval_with(
    obs: &ObservedExperiment,
    design: &Design,
    j: usize,
    alpha: f64,
    grid: &GridSpec,
    reference: &ReferenceSet,
) -> Result<FiducialInterval> {
    check_alpha(alpha)?;
    let effect = design.effect(j)?;
    if grid.points < 2 || !(grid.tol > 0.0) {
        return Err(Error::Config(
            "grid needs at least 2 points and a positive tolerance".into(),
        ));
    }
    let est = neyman::analyze(obs, design, alpha)?;
    let point = est.effects[j - 1];
    let width = est
        .inference
        .as_ref()
        .map(|i| 8.0 * i.var_estimates[0].sqrt())
        .unwrap_or(0.0)
        .max(1.0);
    let lower = grid.lower.unwrap_or(point - width);
    let upper = grid.upper.unwrap_or(point + width);
    if !(lower < point && point < upper) {
        return Err(Error::Config(format!(
            "grid [{lower}, {upper}] does not bracket the point estimate {point}"
        )));
    }
    let mut curve = Curve {
        obs,
        design,
        reference,
        base_eta: est.effects.clone(),
        effect: j,
        evaluated: Vec::new(),
    };
    let step = (upper - lower) / (grid.points - 1) as f64;
    let xs: Vec<f64> = (0..grid.points).map(|i| lower + step * i as f64).collect();
    let ps = xs.iter().map(|&x| curve.p(x)).collect::<Result<Vec<_>>>()?;
    let bracket_error = || Error::Bracket {
        effect: effect.name(),
        lower,
        upper,
    };

    let lo_target = alpha / 2.0;
    let hi_target = 1.0 - alpha / 2.0;
    // Last grid point still rejecting from below, and the first that does not.
    let last_low = ps
        .iter()
        .rposition(|&p| p <= lo_target)
        .ok_or_else(bracket_error)?;
    if last_low + 1 >= xs.len() {
        return Err(bracket_error());
    }
    let (zeta_l, _) = bisect(&mut curve, xs[last_low], xs[last_low + 1], grid.tol, |p| {
        p > lo_target
    })?;
    let first_high = ps
        .iter()
        .position(|&p| p >= hi_target)
        .ok_or_else(bracket_error)?;
    if first_high == 0 {
        return Err(bracket_error());
    }
    let (_, zeta_u) = bisect(
        &mut curve,
        xs[first_high - 1],
        xs[first_high],
        grid.tol,
        |p| p >= hi_target,
    )?;

    let mut evaluated = curve.evaluated;
    evaluated.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(FiducialInterval {
        effect: j,
        name: effect.name(),
        alpha,
        point,
        lower: zeta_l,
        upper: zeta_u,
        curve: evaluated,
    })
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::Config(format!("alpha = {alpha} outside (0, 1)")));
    }
    Ok(())
}

/// Fiducial intervals for every effect from randomly drawn `eta` vectors.
///
/// Each effect's bounds are the largest `eta_j` whose p-value is at most
/// `alpha/2` and the smallest whose p-value is at least `1 - alpha/2`. The
/// `eta` draws use a seed derived from `settings.seed`.
pub fn fiducial_intervals_random_eta(
    obs: &ObservedExperiment,
    design: &Design,
    alpha: f64,
    spec: &RandomEtaSpec,
    settings: &RandomizationSettings,
) -> Result<Vec<FiducialInterval>> {
    check_alpha(alpha)?;
    if spec.count == 0 || !(spec.lower < spec.upper) {
        return Err(Error::Config(
            "random eta search needs a positive count and lower < upper".into(),
        ));
    }
    let reference = ReferenceSet::build(obs, design, settings)?;
    let m = design.effects_count();
    let eta_seed = seed::derive(settings.seed, "fisher.eta");
    let etas: Vec<Vec<f64>> = (0..spec.count)
        .map(|k| {
            let mut rng = seed::stream_rng(eta_seed, k as u64);
            (0..m)
                .map(|_| rng.random_range(spec.lower..spec.upper))
                .collect()
        })
        .collect();
    let results = etas
        .iter()
        .map(|eta| {
            pvalues_with(
                obs,
                design,
                &SharpNull::new(design, eta.clone())?,
                &reference,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let points = neyman::estimate(obs, design)?.effects;
    (1..=m)
        .map(|j| {
            let name = design.effect(j)?.name();
            let mut curve: Vec<(f64, f64)> = results
                .iter()
                .map(|r| (r.eta[j - 1], r.p_upper[j - 1]))
                .collect();
            curve.sort_by(|a, b| a.0.total_cmp(&b.0));
            let bracket_error = || Error::Bracket {
                effect: name.clone(),
                lower: spec.lower,
                upper: spec.upper,
            };
            let lower = curve
                .iter()
                .filter(|(_, p)| *p <= alpha / 2.0)
                .map(|(x, _)| *x)
                .reduce(f64::max)
                .ok_or_else(bracket_error)?;
            let upper = curve
                .iter()
                .filter(|(_, p)| *p >= 1.0 - alpha / 2.0)
                .map(|(x, _)| *x)
                .reduce(f64::min)
                .ok_or_else(bracket_error)?;
            Ok(FiducialInterval {
                effect: j,
                name: name.clone(),
                alpha,
                point: points[j - 1],
                lower,
                upper,
                curve,
            })
        })
        .collect()
}

/// Fiducial intervals for all effects with the chosen search.
pub fn fiducial_intervals(
    obs: &ObservedExperiment,
    design: &Design,
    alpha: f64,
    search: &FiducialSearch,
    settings: &RandomizationSettings,
) -> Result<Vec<FiducialInterval>> {
    match search {
        FiducialSearch::Scan(grid) => {
            let reference = ReferenceSet::build(obs, design, settings)?;
            (1..design.combinations_count())
                .map(|j| fiducial_interval_with(obs, design, j, alpha, grid, &reference))
                .collect()
        }
        FiducialSearch::RandomEta(spec) => {
            fiducial_intervals_random_eta(obs, design, alpha, spec, settings)
        }
    }
}
