//! Shipped scenarios: parametrized plant, problem, operator and certificate bundles.

pub mod building;
pub mod lti;
pub mod occupancy;
pub mod robots;
pub mod thermostat;

use thiserror::Error;

use crate::algorithms::AlgorithmError;
use crate::certificates::CertificateError;
use crate::equilibrium::EquilibriumError;
use crate::plant::PlantError;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("open-loop plant is not stable: {0}")]
    UnstableOpenLoop(String),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Equilibrium(#[from] EquilibriumError),
    #[error(transparent)]
    Algorithm(#[from] AlgorithmError),
    #[error(transparent)]
    Certificate(#[from] CertificateError),
}

/// Serde adapters writing infinite box bounds as `null`.
pub(crate) mod bounds {
    use serde::{Deserialize, Deserializer, Serializer};

    fn write<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|x| x.is_finite().then_some(*x)))
    }

    fn read<'de, D: Deserializer<'de>>(d: D, missing: f64) -> Result<Vec<f64>, D::Error> {
        Ok(Vec::<Option<f64>>::deserialize(d)?.into_iter().map(|x| x.unwrap_or(missing)).collect())
    }

    pub mod lower {
        use serde::{Deserializer, Serializer};

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            super::write(v, s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            super::read(d, f64::NEG_INFINITY)
        }
    }

    pub mod upper {
        use serde::{Deserializer, Serializer};

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            super::write(v, s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            super::read(d, f64::INFINITY)
        }
    }
}
