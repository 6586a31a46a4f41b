//! Simulation and numerical verification for convoluted Lévy processes
//! `M(t) = ∫ f(t, s) L(ds)` driven by a zero-mean pure-jump Lévy process.
//!
//! The crate is organised bottom-up:
//!
//! * [`levy`]: jump measures, characteristic exponents, two-sided paths;
//! * [`kernels`]: Volterra kernels (indicator, shot noise, Ornstein–Uhlenbeck,
//!   fractional) with hypothesis checks;
//! * [`frac`]: Riemann–Liouville fractional integrals;
//! * [`conv`]: convoluted paths by two independent routes plus closed-form
//!   distributional quantities;
//! * [`stransform`]: Wick exponentials, test functions and the S-transform as
//!   an executable change of measure;
//! * [`skorokhod`]: closed-form Skorokhod integrals verified through their
//!   S-transforms;
//! * [`ito`]: both Itô formulas, term by term.
//!
//! [`quad`] and [`mc`] hold the shared numerical machinery.

pub mod conv;
pub mod error;
pub mod frac;
pub mod ito;
pub mod kernels;
pub mod levy;
pub mod mc;
pub mod quad;
pub mod report;
pub mod skorokhod;
pub mod stransform;

pub use error::{Error, Result};
