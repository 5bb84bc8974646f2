//! Contrast structure of a balanced two-level factorial design.
//!
//! Treatment combinations are indexed `0..J` with factor `K` varying fastest:
//! bit `K - f` of the index is set exactly when factor `f` (1-based) sits at
//! its high level. Effects are indexed `1..J` in Yates order: main effects by
//! factor, then two-factor interactions lexicographically, and so on up to the
//! `K`-factor interaction. Index `0` is reserved for the all-ones vector.
//!
//! Contrast vectors are never tabulated. The entry of `g_j` at combination `l`
//! is `(-1)^popcount(mask_j & !l)`, which lets full contrast sweeps run as a
//! fast Walsh-Hadamard transform in `O(J log J)`.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported factor count.
pub const MAX_FACTORS: usize = 20;

/// One treatment combination: a level in `{-1, +1}` for each factor.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TreatmentCombination(Vec<i8>);

impl TreatmentCombination {
    pub fn new(levels: Vec<i8>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::Size(
                "treatment combination needs at least one factor".into(),
            ));
        }
        if let Some(bad) = levels.iter().find(|&&v| v != 1 && v != -1) {
            return Err(Error::Model(format!("factor level {bad} is not -1 or +1")));
        }
        Ok(Self(levels))
    }

    pub fn levels(&self) -> &[i8] {
        &self.0
    }

    pub fn factors(&self) -> usize {
        self.0.len()
    }

    /// Comma-joined level tokens, e.g. `-1,1`.
    pub fn token(&self) -> String {
        self.0
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn parse_token(token: &str) -> Result<Self> {
        let levels = token
            .split(',')
            .map(|t| match t.trim() {
                "-1" => Ok(-1),
                "1" | "+1" => Ok(1),
                other => Err(Error::Model(format!(
                    "invalid factor level token {other:?}"
                ))),
            })
            .collect::<Result<Vec<i8>>>()?;
        Self::new(levels)
    }
}

impl fmt::Display for TreatmentCombination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})", self.token())
    }
}

/// A factorial effect: the set of factors it involves and its Yates position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EffectIndex {
    /// 1-based factor numbers in increasing order.
    pub factors: Vec<usize>,
    /// Position `j` in `1..J`.
    pub position: usize,
}

impl EffectIndex {
    /// Report name: `A`, `B`, ..., `AB`, `AC`, ..., `ABC...`.
    pub fn name(&self) -> String {
        self.factors.iter().map(|&f| factor_letter(f)).collect()
    }

    pub fn is_main_effect(&self) -> bool {
        self.factors.len() == 1
    }
}

fn factor_letter(factor: usize) -> char {
    char::from(b'A' + (factor - 1) as u8)
}

/// Split of the treatment set by the sign of one contrast vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    /// Combination indices where the contrast is `+1`.
    pub plus: Vec<usize>,
    /// Combination indices where the contrast is `-1`.
    pub minus: Vec<usize>,
}

/// Immutable description of a `2^K` design.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Design {
    k: usize,
    j: usize,
    /// Factor bitmask for each Yates position; `masks[0] == 0`.
    masks: Vec<usize>,
}

impl Design {
    pub fn new(k: usize) -> Result<Self> {
        if !(1..=MAX_FACTORS).contains(&k) {
            return Err(Error::Size(format!(
                "factor count {k} outside supported range 1..={MAX_FACTORS}"
            )));
        }
        let j = 1usize << k;
        let mut masks = Vec::with_capacity(j);
        masks.push(0);
        for size in 1..=k {
            // Lexicographic k-subsets of 1..=K.
            let mut subset: Vec<usize> = (1..=size).collect();
            loop {
                masks.push(subset.iter().fold(0, |m, &f| m | (1 << (k - f))));
                let mut i = size;
                while i > 0 && subset[i - 1] == k - size + i {
                    i -= 1;
                }
                if i == 0 {
                    break;
                }
                subset[i - 1] += 1;
                for t in i..size {
                    subset[t] = subset[t - 1] + 1;
                }
            }
        }
        debug_assert_eq!(masks.len(), j);
        Ok(Self { k, j, masks })
    }

    /// Number of factors `K`.
    pub fn factors(&self) -> usize {
        self.k
    }

    /// Number of treatment combinations `J = 2^K`.
    pub fn combinations_count(&self) -> usize {
        self.j
    }

    /// Number of factorial effects `J - 1`.
    pub fn effects_count(&self) -> usize {
        self.j - 1
    }

    /// The scale `2^{-(K-1)}` applied to every contrast.
    pub fn effect_scale(&self) -> f64 {
        2.0 / self.j as f64
    }

    /// Level of factor `factor` (1-based) in combination `l`.
    pub fn level(&self, l: usize, factor: usize) -> i8 {
        if l >> (self.k - factor) & 1 == 1 {
            1
        } else {
            -1
        }
    }

    pub fn combination(&self, l: usize) -> TreatmentCombination {
        TreatmentCombination((1..=self.k).map(|f| self.level(l, f)).collect())
    }

    pub fn combinations(&self) -> Vec<TreatmentCombination> {
        (0..self.j).map(|l| self.combination(l)).collect()
    }

    /// Index of a combination, or `None` if it does not belong to this design.
    pub fn combination_index(&self, z: &TreatmentCombination) -> Option<usize> {
        (z.factors() == self.k).then(|| {
            z.levels()
                .iter()
                .fold(0, |acc, &v| (acc << 1) | usize::from(v == 1))
        })
    }

    pub fn effect(&self, j: usize) -> Result<EffectIndex> {
        self.check_effect(j)?;
        let mask = self.masks[j];
        let factors = (1..=self.k)
            .filter(|&f| mask >> (self.k - f) & 1 == 1)
            .collect();
        Ok(EffectIndex {
            factors,
            position: j,
        })
    }

    pub fn effects(&self) -> Vec<EffectIndex> {
        (1..self.j)
            .map(|j| self.effect(j).expect("valid position"))
            .collect()
    }

    pub fn effect_names(&self) -> Vec<String> {
        self.effects().iter().map(EffectIndex::name).collect()
    }

    /// Position of the effect with the given report name (`"AB"`, ...).
    pub fn effect_position(&self, name: &str) -> Option<usize> {
        (1..self.j).find(|&j| self.effect(j).map(|e| e.name() == name).unwrap_or(false))
    }

    fn check_effect(&self, j: usize) -> Result<()> {
        if j == 0 || j >= self.j {
            return Err(Error::Size(format!(
                "effect index {j} outside 1..{} for K={}",
                self.j, self.k
            )));
        }
        Ok(())
    }

    /// Entry `l` of `g_j` (`j = 0` is the all-ones vector).
    #[inline]
    pub fn sign(&self, j: usize, l: usize) -> f64 {
        if (self.masks[j] & !l).count_ones() % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// The contrast vector `g_j` for `j` in `0..J`.
    pub fn g_vector(&self, j: usize) -> Vec<i8> {
        (0..self.j).map(|l| self.sign(j, l) as i8).collect()
    }

    /// `J x J` matrix whose columns are `g_0, ..., g_{J-1}`.
    pub fn g_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.j, self.j, |l, j| self.sign(j, l))
    }

    pub fn partition(&self, j: usize) -> Result<Partition> {
        self.check_effect(j)?;
        let (plus, minus) = (0..self.j).partition(|&l| self.sign(j, l) > 0.0);
        Ok(Partition { plus, minus })
    }

    /// `2^{-(K-1)} g_j' values` for a single effect.
    pub fn contrast(&self, j: usize, values: &[f64]) -> f64 {
        values
            .iter()
            .enumerate()
            .map(|(l, v)| self.sign(j, l) * v)
            .sum::<f64>()
            * self.effect_scale()
    }

    /// `2^{-(K-1)} g_j' values` for every effect `j = 1..J`, in Yates order.
    pub fn contrasts(&self, values: &[f64]) -> Result<Vec<f64>> {
        self.check_len(values.len(), "contrast input")?;
        let mut h = values.to_vec();
        walsh_hadamard(&mut h);
        let scale = self.effect_scale();
        Ok(self.masks[1..]
            .iter()
            .map(|&m| parity_sign(m) * h[m] * scale)
            .collect())
    }

    /// Splits a length-`J` vector into its mean and its `J - 1` factorial effects.
    pub fn extract_effects(&self, values: &[f64]) -> Result<(f64, Vec<f64>)> {
        let mean = values.iter().sum::<f64>() / self.j as f64;
        Ok((mean, self.contrasts(values)?))
    }

    /// Inverse of [`Design::extract_effects`]: `g_0 tau0 + sum_j g_j tau_j / 2`.
    pub fn reconstruct_outcomes(&self, tau0: f64, tau: &[f64]) -> Result<Vec<f64>> {
        if tau.len() != self.j - 1 {
            return Err(Error::DimensionMismatch {
                expected: self.j - 1,
                actual: tau.len(),
                context: "effect vector",
            });
        }
        let mut c = vec![0.0; self.j];
        c[0] = tau0;
        for (&m, &t) in self.masks[1..].iter().zip(tau) {
            c[m] = parity_sign(m) * t / 2.0;
        }
        walsh_hadamard(&mut c);
        Ok(c)
    }

    pub(crate) fn check_len(&self, len: usize, context: &'static str) -> Result<()> {
        if len != self.j {
            return Err(Error::DimensionMismatch {
                expected: self.j,
                actual: len,
                context,
            });
        }
        Ok(())
    }
}

#[inline]
fn parity_sign(mask: usize) -> f64 {
    if mask.count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// In-place unnormalized fast Walsh-Hadamard transform in natural order.
fn walsh_hadamard(v: &mut [f64]) {
    let n = v.len();
    let mut h = 1;
    while h < n {
        for start in (0..n).step_by(2 * h) {
            for i in start..start + h {
                let (a, b) = (v[i], v[i + h]);
                v[i] = a + b;
                v[i + h] = a - b;
            }
        }
        h *= 2;
    }
}
