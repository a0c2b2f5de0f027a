use std::ops::{Deref, DerefMut};

use crate::scalar::Scalar;

/// Flat model parameter vector: the unit every holon exchanges.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ParamVector<S> {
    values: Vec<S>,
}

impl<S: Scalar> ParamVector<S> {
    pub fn new(values: Vec<S>) -> Self {
        Self { values }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { values: vec![S::zero(); dim] }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[S] {
        &self.values
    }

    pub fn into_inner(self) -> Vec<S> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `self -= step * direction`, in place.
    pub fn axpy_neg(&mut self, step: S, direction: &[S]) {
        debug_assert_eq!(self.values.len(), direction.len());
        for (v, g) in self.values.iter_mut().zip(direction) {
            *v = *v - step * *g;
        }
    }

    /// Largest absolute per-coordinate difference.
    pub fn max_abs_diff(&self, other: &Self) -> S {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (*a - *b).abs())
            .fold(S::zero(), S::max)
    }
}

impl<S> Deref for ParamVector<S> {
    type Target = [S];

    fn deref(&self) -> &[S] {
        &self.values
    }
}

impl<S> DerefMut for ParamVector<S> {
    fn deref_mut(&mut self) -> &mut [S] {
        &mut self.values
    }
}

impl<S> From<Vec<S>> for ParamVector<S> {
    fn from(values: Vec<S>) -> Self {
        Self { values }
    }
}
