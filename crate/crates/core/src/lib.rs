//! Adaptive Monte Carlo dropout combined with split conformal prediction.
//!
//! The crate covers the whole pipeline at desk scale:
//!
//! * [`nn`]: a dense network with inverted dropout, cross-entropy and
//!   multi-quantile (pinball) losses, SGD-momentum and Adam.
//! * [`adaptive`]: MC dropout that stops once per-dimension variance
//!   changes stay below `delta` for `patience` consecutive passes.
//! * [`conformal`]: naive and RAPS prediction sets with temperature
//!   scaling, conformalized quantile regression, and their MC variants.
//! * [`metrics`], [`data`] and [`harness`]: evaluation, datasets and the
//!   experiment runner behind the `mccp` binary.
//!
//! ```
//! use mccp::adaptive::{adaptive_mc_dropout, AdaptiveConfig};
//! use mccp::predictor::ConstantPredictor;
//! use mccp::rng::stream;
//!
//! let p = ConstantPredictor(vec![0.2, 0.8]);
//! let r = adaptive_mc_dropout(&p, &[], &AdaptiveConfig::default(), &mut stream(0, &[])).unwrap();
//! assert_eq!(r.passes, 11);
//! assert!(r.converged);
//! ```

pub mod adaptive;
pub mod conformal;
pub mod data;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod moments;
pub mod nn;
pub mod predictor;
pub mod quantile;
pub mod rng;
pub mod serde_f64;
pub mod types;

pub use error::{Error, Result};
pub use types::{PredictionInterval, PredictionSet, ProbVector, QuantilePair};
