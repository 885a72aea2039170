//! Bloch-decomposition stochastic Galerkin solver for the semiclassical
//! Schrödinger equation with a periodic lattice and a random external
//! potential.

pub mod baselines;
pub mod bdstep;
pub mod bloch;
pub mod cache;
pub mod diagnostics;
pub mod driver;
pub mod experiments;
pub mod gpc;
pub mod lattice;
pub mod scalar;
pub mod scenarios;

pub use scalar::{Complex, Real};

pub type Grid64 = lattice::Grid<f64>;
pub type Grid32 = lattice::Grid<f32>;
pub type WaveField64 = lattice::WaveField<f64>;
pub type WaveField32 = lattice::WaveField<f32>;
pub type LatticeTable64 = bloch::LatticeTable<f64>;
pub type LatticeTable32 = bloch::LatticeTable<f32>;
pub type GpcState64 = gpc::GpcState<f64>;
pub type GpcState32 = gpc::GpcState<f32>;
pub type BdsgSolver64 = driver::BdsgSolver<f64>;
pub type BdsgSolver32 = driver::BdsgSolver<f32>;
pub type Statistics64 = diagnostics::Statistics<f64>;
pub type Statistics32 = diagnostics::Statistics<f32>;
