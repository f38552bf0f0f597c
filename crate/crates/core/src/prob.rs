//! Probability vectors on graph vertex sets, plus compensated summation
//! used by every functional that aggregates many small terms.

use crate::error::Error;
use crate::Result;

/// Tolerance on |sum - 1| accepted by [`ProbVector::new`].
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Neumaier-compensated sum; the plain loop loses ~n*eps relative
/// accuracy, which is visible against the 1e-12 closed-form tolerances
/// once graphs reach a few hundred thousand vertices.
pub fn stable_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// A finite, non-negative vector summing to one within [`SIMPLEX_TOL`].
#[derive(Clone, Debug, PartialEq)]
pub struct ProbVector {
    values: Vec<f64>,
}

impl ProbVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        for (index, &value) in values.iter().enumerate() {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(Error::NegativeEntry { index, value });
            }
        }
        let sum = stable_sum(values.iter().copied());
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::NotNormalised { sum, tol: SIMPLEX_TOL });
        }
        Ok(ProbVector { values })
    }

    /// Normalises arbitrary non-negative weights with positive total mass.
    pub fn from_weights(mut weights: Vec<f64>) -> Result<Self> {
        for (index, &value) in weights.iter().enumerate() {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(Error::NegativeEntry { index, value });
            }
        }
        let sum = stable_sum(weights.iter().copied());
        if !(sum > 0.0) {
            return Err(Error::NotNormalised { sum, tol: SIMPLEX_TOL });
        }
        for w in &mut weights {
            *w /= sum;
        }
        Ok(ProbVector { values: weights })
    }

    pub fn uniform(n: usize) -> Self {
        ProbVector { values: vec![1.0 / n as f64; n] }
    }

    pub fn point_mass(n: usize, at: usize) -> Self {
        let mut values = vec![0.0; n];
        values[at] = 1.0;
        ProbVector { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Clamps every entry to at least `floor` and renormalises; keeps the
    /// vector strictly positive for gradient evaluation.
    pub fn floored(&self, floor: f64) -> ProbVector {
        let mut values: Vec<f64> = self.values.iter().map(|&v| v.max(floor)).collect();
        let sum = stable_sum(values.iter().copied());
        for v in &mut values {
            *v /= sum;
        }
        ProbVector { values }
    }
}

impl std::ops::Index<usize> for ProbVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

impl AsRef<[f64]> for ProbVector {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}
