//! Probability on local fields at finite precision.
//!
//! Elements of `Q_p` and `F_p((t))` are stored as a valuation plus a fixed
//! number of base-`p` digits. On top of that sit ultrametric linear algebra
//! over the valuation ring `D`, seeded samplers for the Haar-type laws,
//! closed forms in exact arithmetic and the statistical harness that checks
//! samplers against them.

pub mod error;
pub mod field;
pub mod harness;
pub mod laws;
pub mod linalg;
pub mod rng;
pub mod sampling;
pub mod suites;

pub use error::{Error, Result};
pub use field::{Backend, ElementRecord, FieldConfig, FieldElement, PhaseFraction, Valuation};
pub use harness::{CheckOutcome, GofReport, GramCertificate, SuiteReport, TvEstimate, Verdict, ViolationSearch};
pub use laws::{RadialProfile, Radius, Rational};
pub use linalg::{IsometryCheck, Polar, UMatrix, UVector};
pub use rng::RngStream;
pub use sampling::ScaleLaw;
pub use suites::{Suite, SuiteParams};
