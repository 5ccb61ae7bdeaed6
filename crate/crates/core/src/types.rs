use std::ops::Deref;

use crate::error::{Error, Result};

/// Target parameters of a simulation model.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector(Vec<f64>);

/// One synthetic realization of a simulator, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable(Vec<f64>);

macro_rules! finite_vector {
    ($name:ident, $what:literal) => {
        impl $name {
            pub fn new(values: Vec<f64>) -> Result<Self> {
                if let Some(i) = values.iter().position(|v| !v.is_finite()) {
                    return Err(Error::InvalidArgument(format!(
                        "{} entry {i} is not finite",
                        $what
                    )));
                }
                Ok(Self(values))
            }

            pub fn values(&self) -> &[f64] {
                &self.0
            }

            pub fn into_inner(self) -> Vec<f64> {
                self.0
            }
        }

        impl Deref for $name {
            type Target = [f64];

            fn deref(&self) -> &[f64] {
                &self.0
            }
        }
    };
}

finite_vector!(ParameterVector, "parameter");
finite_vector!(Observable, "observable");

/// A draw `theta ~ p(theta)`, `x ~ p(x | theta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSample {
    pub theta: ParameterVector,
    pub x: Observable,
}
