//! Simulation of electronic excitation-energy transfer through the 24-site
//! FMO trimer (three monomers of eight bacteriochlorophylls each) coupled to
//! a non-Markovian vibrational environment.
//!
//! The environment is a Drude-Lorentz spectral density whose finite-temperature
//! correlation function is fitted by a sum of complex exponentials; the reduced
//! density matrix is propagated with a master equation that carries one
//! auxiliary operator per (site, exponential term). A Lindblad pure-dephasing
//! propagator provides the Markovian comparison and a unitary mode the
//! bath-free limit. Exact references (analytic two-level formulas, the
//! independent-boson pure-dephasing solution, and a pseudomode solver) live in
//! [`oracle`] and pin every sign convention.
//!
//! Numerical kernels are generic over the floating-point scalar through
//! [`Real`]; the `*64` aliases below fix the `f64` instantiation used by the
//! CLI and the test suite.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};

pub mod bath;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod plot;
pub mod propagator;
pub mod quad;
pub mod scenarios;

/// Floating-point scalar the numerical core is generic over.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Conversion from `f64` literals; exact for f64, rounded for f32.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 converts to every supported scalar")
    }
}

impl Real for f32 {}
impl Real for f64 {}

pub type CMat64 = linalg::CMat<f64>;
pub type SpectralDensity64 = bath::SpectralDensity<f64>;
pub type BathExpansion64 = bath::BathExpansion<f64>;
pub type TrimerHamiltonian64 = model::TrimerHamiltonian<f64>;
pub type Trajectory64 = propagator::Trajectory<f64>;
pub type ScenarioConfig64 = scenarios::ScenarioConfig<f64>;

/// Error taxonomy; the process exit code of the CLI follows [`Error::exit_code`].
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),
    #[error("numerics: {0}")]
    Numerics(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Numerics(_) => 3,
            Error::Io(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
