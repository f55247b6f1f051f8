//! First frequency moment estimation for turnstile streams.
//!
//! [`Estimator`] combines a table of Cauchy sketches for light items with
//! CountSketch read-back for heavy items. [`oracle::ExactState`] keeps the
//! exact frequency vector for verification.

pub mod cli;
pub mod countsketch;
pub mod error;
pub mod estimator;
pub mod hash;
pub mod oracle;
pub mod stable;
pub mod stream;

pub use error::{Error, Result};
pub use estimator::{Classification, EstimateReport, Estimator, EstimatorConfig};
