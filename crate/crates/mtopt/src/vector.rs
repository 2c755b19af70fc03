//! Dense parameter vectors and the handful of linear-algebra kernels the
//! optimizers need.
//!
//! `ParamVector` is an immutable value type: every operation returns a new
//! vector and dimension mismatches are reported as errors, never panics.

use crate::error::{Error, Result};

/// A non-empty, finite vector of `f64` parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
}

impl ParamVector {
    /// Builds a vector, rejecting empty input and non-finite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyVector);
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("ParamVector entry {bad}"),
            });
        }
        Ok(Self { values })
    }

    /// The all-zeros vector of the given dimension.
    pub fn zeros(dim: usize) -> Result<Self> {
        Self::new(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// True when every entry is finite. Optimizer steps use this to detect
    /// divergence; ordinary arithmetic below does not re-check.
    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(())
    }

    /// Inner product `<self, other>`.
    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.check_dim(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum())
    }

    /// Euclidean norm.
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Euclidean distance `||self - other||`.
    pub fn l2_distance(&self, other: &Self) -> Result<f64> {
        self.check_dim(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }

    /// Cosine of the angle between two vectors.
    ///
    /// A zero-norm operand is an error: returning 0 would silently count a
    /// vanished gradient as "orthogonal" in alignment statistics.
    pub fn cosine_similarity(&self, other: &Self) -> Result<f64> {
        self.check_dim(other)?;
        let na = self.norm();
        let nb = other.norm();
        if na == 0.0 {
            return Err(Error::ZeroNorm { side: "left" });
        }
        if nb == 0.0 {
            return Err(Error::ZeroNorm { side: "right" });
        }
        Ok(self.dot(other)? / (na * nb))
    }

    /// Element-wise sum.
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Ok(Self {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    /// Element-wise difference `self - other`.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Ok(Self {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    /// Scalar multiple `c * self`.
    pub fn scale(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    /// Fused update `self + c * other`, the shape of every gradient step.
    pub fn axpy(&self, c: f64, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Ok(Self {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + c * b)
                .collect(),
        })
    }
}

impl std::ops::Index<usize> for ParamVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

impl std::fmt::Display for ParamVector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.values.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}
