//! Classical emulation of split-step Fourier schemes for anisotropic
//! convection and diffusion equations on the unit torus, with reference
//! solvers and error analysis for the product-formula (Trotter) error.

pub mod analysis;
pub mod coeffs;
pub mod error;
pub mod evolve;
pub mod field;
pub mod oracle;
pub mod stencil;
pub mod walsh;

pub use coeffs::{CoefficientSet, EquationKind, Expr};
pub use error::{Error, Result};
pub use evolve::{evolve, Evolution, EvolutionPlan, Formula};
pub use field::{distance, sample_function, Field, GridSpec, Observable, ObservableValue};
pub use stencil::{derivative_symbol, stencil_coefficients, DerivativeSymbol, StencilCoefficients};
