//! Sampled-data feedback equilibrium seeking.
//!
//! Continuous-time plants are driven by discrete equilibrium-seeking algorithms
//! through a zero-order hold. The crate provides the plant and problem models,
//! the proximal-gradient and best-response operators, the small-gain
//! certificate arithmetic, a closed-loop simulator, and two shipped scenarios
//! (a reduced building thermal model and a unicycle Nash game).
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix `f64` for everyday use.

// `!(a > b)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

pub mod algorithms;
pub mod certificates;
pub mod equilibrium;
pub mod linalg;
pub mod plant;
pub mod scalar;
pub mod scenarios;
pub mod simulator;

pub use scalar::Scalar;

pub type Plant = plant::PlantModel<f64>;
pub type Disturbance = plant::DisturbanceSignal<f64>;
pub type Bundle = certificates::CertificateBundle<f64>;
pub type Operator = algorithms::AlgorithmOperator<f64>;
pub type Problem = equilibrium::EquilibriumProblem<f64>;
pub type LoopConfig = simulator::ClosedLoopConfig<f64>;
pub type Oracle = simulator::SolutionOracle<f64>;
pub type Log = simulator::TrajectoryLog<f64>;
