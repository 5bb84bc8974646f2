//! Balanced complete randomization, exact enumeration and observed data.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::design::{Design, TreatmentCombination};
use crate::error::{Error, Result};
use crate::science::ScienceMatrix;
use crate::seed;

/// Default cap on the number of assignments an exact enumeration may visit.
pub const DEFAULT_ENUMERATION_CAP: u64 = 10_000_000;

/// Map from unit index to combination index, with `r` units per combination.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assignment {
    arms: Vec<usize>,
}

impl Assignment {
    /// Validates an explicit assignment against the balance constraints.
    pub fn new(design: &Design, arms: Vec<usize>) -> Result<Self> {
        let r = replications(arms.len(), design)?;
        let mut counts = vec![0usize; design.combinations_count()];
        for &a in &arms {
            if a >= counts.len() {
                return Err(Error::Size(format!("combination index {a} out of range")));
            }
            counts[a] += 1;
        }
        check_counts(design, &counts, r)?;
        Ok(Self { arms })
    }

    pub fn arm_of(&self, unit: usize) -> usize {
        self.arms[unit]
    }

    pub fn arms(&self) -> &[usize] {
        &self.arms
    }

    pub fn units(&self) -> usize {
        self.arms.len()
    }
}

fn replications(n: usize, design: &Design) -> Result<usize> {
    let j = design.combinations_count();
    if n == 0 || n % j != 0 {
        return Err(Error::Size(format!(
            "N = {n} is not a positive multiple of {j} combinations"
        )));
    }
    Ok(n / j)
}

fn check_counts(design: &Design, counts: &[usize], r: usize) -> Result<()> {
    match counts.iter().position(|&c| c != r) {
        Some(l) => Err(Error::Unbalanced {
            arm: design.combination(l).token(),
            count: counts[l],
            expected: r,
        }),
        None => Ok(()),
    }
}

/// The sorted label multiset `0^r 1^r ... (J-1)^r`.
fn label_multiset(n: usize, design: &Design) -> Result<Vec<usize>> {
    let r = replications(n, design)?;
    Ok((0..design.combinations_count())
        .flat_map(|l| std::iter::repeat_n(l, r))
        .collect())
}

/// Uniform draw over all balanced assignments of `n` units, using `rng`.
pub fn randomize_with<R: Rng + ?Sized>(
    n: usize,
    design: &Design,
    rng: &mut R,
) -> Result<Assignment> {
    let mut arms = label_multiset(n, design)?;
    arms.shuffle(rng);
    Ok(Assignment { arms })
}

/// Uniform draw over all balanced assignments, deterministic given `seed`.
pub fn randomize(n: usize, design: &Design, seed: u64) -> Result<Assignment> {
    randomize_with(n, design, &mut seed::rng(seed))
}

/// Number of balanced assignments `N! / (r!)^J` (as a float; may be huge).
pub fn assignment_count(n: usize, design: &Design) -> Result<f64> {
    let r = replications(n, design)?;
    // Product of binomials C(n - l r, r), accumulated in log space.
    let ln_choose = |a: usize, b: usize| -> f64 {
        (1..=b)
            .map(|t| ((a - b + t) as f64).ln() - (t as f64).ln())
            .sum()
    };
    let j = design.combinations_count();
    let log: f64 = (0..j).map(|l| ln_choose(n - l * r, r)).sum();
    Ok(log.exp().round())
}

/// Iterator over every balanced assignment, in lexicographic order of the
/// label sequence.
#[derive(Debug, Clone)]
pub struct Enumeration {
    next: Option<Vec<usize>>,
}

impl Iterator for Enumeration {
    type Item = Assignment;

    fn next(&mut self) -> Option<Assignment> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        if next_permutation(&mut succ) {
            self.next = Some(succ);
        }
        Some(Assignment { arms: current })
    }
}

fn next_permutation(v: &mut [usize]) -> bool {
    let Some(i) = (1..v.len()).rev().find(|&i| v[i - 1] < v[i]) else {
        return false;
    };
    let pivot = i - 1;
    let k = (i..v.len())
        .rev()
        .find(|&k| v[k] > v[pivot])
        .expect("successor exists");
    v.swap(pivot, k);
    v[i..].reverse();
    true
}

/// Enumerates all balanced assignments, refusing when there are more than `cap`.
pub fn enumerate_assignments(n: usize, design: &Design, cap: u64) -> Result<Enumeration> {
    let count = assignment_count(n, design)?;
    if count > cap as f64 {
        return Err(Error::EnumerationTooLarge { count, cap });
    }
    Ok(Enumeration {
        next: Some(label_multiset(n, design)?),
    })
}

/// One observed unit.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitRecord {
    pub id: String,
    pub arm: usize,
    pub y: f64,
}

/// Observed data from a balanced experiment: one combination and one outcome per unit.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedExperiment {
    k: usize,
    r: usize,
    records: Vec<UnitRecord>,
}

impl ObservedExperiment {
    /// Validates balance (naming the offending arm) and finiteness.
    pub fn new(design: &Design, records: Vec<UnitRecord>) -> Result<Self> {
        let j = design.combinations_count();
        let mut counts = vec![0usize; j];
        for rec in &records {
            if rec.arm >= j {
                return Err(Error::Size(format!(
                    "unit {}: combination index {} out of range",
                    rec.id, rec.arm
                )));
            }
            if !rec.y.is_finite() {
                return Err(Error::Numeric(format!(
                    "unit {}: non-finite outcome",
                    rec.id
                )));
            }
            counts[rec.arm] += 1;
        }
        if records.is_empty() {
            return Err(Error::InsufficientData("no observed units".into()));
        }
        let r = records.len() / j;
        if records.len() % j != 0 || r == 0 {
            // Name the arm furthest from the average count.
            let target = records.len().div_ceil(j);
            let l = (0..j)
                .max_by_key(|&l| counts[l].abs_diff(target))
                .expect("non-empty design");
            return Err(Error::Unbalanced {
                arm: design.combination(l).token(),
                count: counts[l],
                expected: target,
            });
        }
        check_counts(design, &counts, r)?;
        Ok(Self {
            k: design.factors(),
            r,
            records,
        })
    }

    /// Builds an experiment from combinations given as factor levels.
    pub fn from_levels(design: &Design, rows: &[(TreatmentCombination, f64)]) -> Result<Self> {
        let records = rows
            .iter()
            .enumerate()
            .map(|(i, (z, y))| {
                let arm = design
                    .combination_index(z)
                    .ok_or(Error::DimensionMismatch {
                        expected: design.factors(),
                        actual: z.factors(),
                        context: "treatment combination",
                    })?;
                Ok(UnitRecord {
                    id: (i + 1).to_string(),
                    arm,
                    y: *y,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(design, records)
    }

    pub fn factors(&self) -> usize {
        self.k
    }

    pub fn units(&self) -> usize {
        self.records.len()
    }

    pub fn replications(&self) -> usize {
        self.r
    }

    pub fn records(&self) -> &[UnitRecord] {
        &self.records
    }

    pub fn outcomes(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.y).collect()
    }

    pub fn assignment(&self) -> Assignment {
        Assignment {
            arms: self.records.iter().map(|r| r.arm).collect(),
        }
    }

    pub(crate) fn check_design(&self, design: &Design) -> Result<()> {
        if design.factors() != self.k {
            return Err(Error::DimensionMismatch {
                expected: design.factors(),
                actual: self.k,
                context: "observed factor count",
            });
        }
        Ok(())
    }
}

/// `Y_i^obs = Y_i(z(i))` for every unit.
pub fn observe(
    science: &ScienceMatrix,
    assignment: &Assignment,
    design: &Design,
) -> Result<ObservedExperiment> {
    science.check_design(design)?;
    if assignment.units() != science.units() {
        return Err(Error::DimensionMismatch {
            expected: science.units(),
            actual: assignment.units(),
            context: "assignment length",
        });
    }
    let records = assignment
        .arms
        .iter()
        .enumerate()
        .map(|(i, &arm)| UnitRecord {
            id: (i + 1).to_string(),
            arm,
            y: science.get(i, arm),
        })
        .collect();
    ObservedExperiment::new(design, records)
}

/// Arm means of observed outcomes given an assignment, without building records.
pub(crate) fn arm_means(outcomes: &[f64], arms: &[usize], j: usize, r: usize) -> Vec<f64> {
    let mut sums = vec![0.0; j];
    for (&y, &a) in outcomes.iter().zip(arms) {
        sums[a] += y;
    }
    sums.into_iter().map(|s| s / r as f64).collect()
}

/// Exhaustive check of the second moments of `D_i(z) = W_i(z) - r/N`.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorMomentCheck {
    pub same_unit_same_arm: f64,
    pub other_unit_same_arm: f64,
    pub same_unit_other_arm: f64,
    pub other_unit_other_arm: f64,
    /// Largest deviation of any enumerated moment from its closed form.
    pub max_deviation: f64,
}

pub fn indicator_moment_check(n: usize, design: &Design, cap: u64) -> Result<IndicatorMomentCheck> {
    let j = design.combinations_count();
    let r = replications(n, design)?;
    let (nf, rf) = (n as f64, r as f64);
    let p = rf / nf;
    let expected = [
        rf * (nf - rf) / (nf * nf),
        -rf * (nf - rf) / (nf * nf * (nf - 1.0)),
        -rf * rf / (nf * nf),
        rf * rf / (nf * nf * (nf - 1.0)),
    ];
    let mut moments = vec![0.0; n * j * n * j];
    let mut total = 0usize;
    for a in enumerate_assignments(n, design, cap)? {
        total += 1;
        for (i, &zi) in a.arms.iter().enumerate() {
            for z in 0..j {
                let di = f64::from(u8::from(zi == z)) - p;
                for (i2, &zi2) in a.arms.iter().enumerate() {
                    for z2 in 0..j {
                        let di2 = f64::from(u8::from(zi2 == z2)) - p;
                        moments[((i * j + z) * n + i2) * j + z2] += di * di2;
                    }
                }
            }
        }
    }
    let mut max_deviation: f64 = 0.0;
    for i in 0..n {
        for z in 0..j {
            for i2 in 0..n {
                for z2 in 0..j {
                    let m = moments[((i * j + z) * n + i2) * j + z2] / total as f64;
                    let case = usize::from(i != i2) + 2 * usize::from(z != z2);
                    max_deviation = max_deviation.max((m - expected[case]).abs());
                }
            }
        }
    }
    Ok(IndicatorMomentCheck {
        same_unit_same_arm: expected[0],
        other_unit_same_arm: expected[1],
        same_unit_other_arm: expected[2],
        other_unit_other_arm: expected[3],
        max_deviation,
    })
}
