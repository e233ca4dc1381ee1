//! Dense real vectors.
//!
//! All module boundaries reject NaN and infinite entries; iterates that turn
//! non-finite mid-solve are caught by the solver's degeneracy guard instead.

use std::ops::{Add, Index, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A dense vector in `R^d` with finite entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Vector(Vec<f64>);

impl Vector {
    /// Validates that every entry is finite.
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        for (i, v) in entries.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite(i));
            }
        }
        Ok(Vector(entries))
    }

    pub fn zeros(dim: usize) -> Self {
        Vector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        assert_eq!(self.dim(), other.dim(), "dot: dimension mismatch");
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|a| a * a).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Squared Euclidean distance, computed without an intermediate allocation.
    pub fn dist_sq(&self, other: &Vector) -> f64 {
        assert_eq!(self.dim(), other.dim(), "dist_sq: dimension mismatch");
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| {
                let d = a - b;
                d * d
            })
            .sum()
    }

    pub fn dist(&self, other: &Vector) -> f64 {
        self.dist_sq(other).sqrt()
    }

    /// `self + t * other`.
    pub fn add_scaled(&self, t: f64, other: &Vector) -> Vector {
        assert_eq!(self.dim(), other.dim(), "add_scaled: dimension mismatch");
        Vector(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + t * b)
                .collect(),
        )
    }

    /// `self + t * (target - self)`, the relaxation step primitive.
    pub fn step_toward(&self, target: &Vector, t: f64) -> Vector {
        assert_eq!(self.dim(), target.dim(), "step_toward: dimension mismatch");
        Vector(
            self.0
                .iter()
                .zip(&target.0)
                .map(|(a, b)| a + t * (b - a))
                .collect(),
        )
    }

    pub fn scale(&self, t: f64) -> Vector {
        Vector(self.0.iter().map(|a| t * a).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl TryFrom<Vec<f64>> for Vector {
    type Error = Error;

    fn try_from(entries: Vec<f64>) -> Result<Self> {
        Vector::new(entries)
    }
}

impl From<Vector> for Vec<f64> {
    fn from(v: Vector) -> Self {
        v.0
    }
}

impl Index<usize> for Vector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl Add for &Vector {
    type Output = Vector;

    fn add(self, rhs: &Vector) -> Vector {
        self.add_scaled(1.0, rhs)
    }
}

impl Sub for &Vector {
    type Output = Vector;

    fn sub(self, rhs: &Vector) -> Vector {
        self.add_scaled(-1.0, rhs)
    }
}

/// Convenience constructor used throughout the tests.
#[macro_export]
macro_rules! vector {
    ($($x:expr),* $(,)?) => {
        $crate::Vector::new(vec![$($x as f64),*]).expect("finite entries")
    };
}
