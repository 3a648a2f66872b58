//! p*-values: random variables that dominate the uniform law in second
//! order, together with calibrators to and from p- and e-values, randomized
//! tests with random thresholds, merging functions, and the Gaussian power
//! simulations that compare them.

pub mod calibrate;
pub mod construct;
pub mod error;
pub mod experiments;
pub mod io;
pub mod merge;
pub mod numeric;
pub mod order;
pub mod rng;
pub mod serde_ext;
pub mod testing;
pub mod threshold;

pub use calibrate::{Calibrator, CalibratorKind, Scale};
pub use construct::{DiscreteNull, WeightVector};
pub use error::{Error, Result};
pub use experiments::{GaussianScenario, Method, PowerEstimate};
pub use order::{EmpiricalSample, OrderCheckReport, QuantileFn};
pub use rng::{RngProvenance, StreamRng};
pub use testing::{MartingalePath, TestDecision};
pub use threshold::{RandomThreshold, ValidatedThreshold};
