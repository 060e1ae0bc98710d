//! Bayesian Markov-switching structural VARs with time-varying
//! identification and stochastic volatility.

pub mod analytics;
pub mod error;
pub mod forecasting;
pub mod gibbs;
pub mod linalg;
pub mod model;
pub mod priors;
pub mod regime;
pub mod selfcheck;
pub mod simulator;
pub mod store;
pub mod structural;
pub mod sv;
pub mod var;

pub use error::{Error, Result};
