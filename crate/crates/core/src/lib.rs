//! Quantum state diffusion and quantum-jump trajectories for driven, damped
//! nonlinear oscillators (Duffing pairs and SQUID rings), with the Lindblad
//! master equation as a reference and the classical limits for comparison.

pub mod batch;
pub mod classical;
pub mod config;
pub mod constants;
pub mod ensemble;
pub mod hilbert;
pub mod lindblad;
pub mod models;
pub mod observables;
pub mod stochastic;

pub use hilbert::{DensityMatrix, FockSpace, SparseOperator, StateVector, C64};
pub use models::{DuffingParams, SquidDimensionlessParams, SquidPhysicalParams, SystemModel};
pub use stochastic::{StepperConfig, TrajectoryRecord, Unravelling};
