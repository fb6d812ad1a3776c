//! Sequential-in-time natural-gradient training of neural PDE solutions,
//! with the disk heat equation and its Bessel-series solution as benchmark.
//!
//! Numerical code is generic over [`scalar::Real`] (`f32` or `f64`); the
//! aliases below fix the scalar for callers that do not care.

pub mod ansatz;
pub mod engine;
pub mod linalg;
pub mod pde;
pub mod sampling;
pub mod scalar;
pub mod special;
pub mod verify;

pub use scalar::Real;

pub type Point64 = scalar::Point<f64>;
pub type Vector64 = linalg::Vector<f64>;
pub type Matrix64 = linalg::Matrix<f64>;
pub type ParamVector64 = ansatz::ParamVector<f64>;
pub type SampleSet64 = sampling::SampleSet<f64>;
pub type EvalGrid64 = sampling::EvalGrid<f64>;
pub type DiskHarmonic64 = special::DiskHarmonic<f64>;
pub type ModalExpansion64 = special::ModalExpansion<f64>;
pub type ExactSolution64 = special::ExactSolution<f64>;
pub type DirichletBC64 = pde::DirichletBC<f64>;
pub type StepperConfig64 = engine::StepperConfig<f64>;
pub type IntegratorConfig64 = engine::IntegratorConfig<f64>;

pub type Point32 = scalar::Point<f32>;
pub type ParamVector32 = ansatz::ParamVector<f32>;
pub type SampleSet32 = sampling::SampleSet<f32>;
pub type StepperConfig32 = engine::StepperConfig<f32>;
