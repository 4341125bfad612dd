//! GARCH-family option pricing, neural surrogate surfaces, and calibration.
//!
//! The pipeline this crate implements:
//!
//! 1. [`garch`] prices European options by Monte Carlo under risk-neutral
//!    GARCH dynamics with Gaussian ([`Model::Duan`]) or tempered stable
//!    ([`Model::Cts`], see [`cts`]) innovations.
//! 2. [`dataset`] samples the input box at Halton points ([`quasirandom`])
//!    and prices each point to build a training surface.
//! 3. [`fnn`] trains a small feedforward network on that surface with
//!    Levenberg-Marquardt, giving a millisecond-fast surrogate pricer.
//! 4. [`calibration`] fits model parameters to an out-of-the-money option
//!    chain by relative-RMSE minimization, using either pricer.
//! 5. [`greeks`] differentiates whichever pricer you hand it.
//!
//! Everything stochastic is keyed by explicit seeds ([`rng`]) and reduced in
//! fixed order, so results are reproducible bit-for-bit across runs and
//! thread counts.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub mod bs;
pub mod calibration;
pub mod cts;
pub mod dataset;
pub mod error;
pub mod fnn;
pub mod garch;
pub mod greeks;
pub mod quasirandom;
pub mod rng;

pub use bs::{bs_price, implied_vol, normal_cdf};
pub use calibration::{
    calibrate, filter_chain, ingest_chain, otm_value, rel_rmse, residuals, CalibrateOptions,
    CalibrationBounds, CalibrationResult, OptionChain, OptionQuote, OtmValue, PricerSpec,
    CHAIN_CSV_HEADER, PENALTY_LOG_REL_PRICE,
};
pub use cts::{
    build_inverse_cdf, cf_stdcts, log_cf_stdcts, log_laplace, sample_stdcts, CtsParams,
    InverseCdfTable, LogLaplace, DEFAULT_CDF_RESOLUTION,
};
pub use dataset::{
    generate_training_set, load_training_set, save_training_set, GenerationMeta, TrainingSample,
    TrainingSet,
};
pub use error::{Error, Result};
pub use fnn::{
    jacobian, load_network, save_network, train_lm, Network, StopReason, TrainOptions,
    TrainReport,
};
pub use garch::{
    price_chain_mcs, price_mcs, price_mcs_with, simulate_paths, simulate_paths_with,
    steps_for_tau, Innovation, PricingRequest, QuoteSpec, RiskNeutralParams, SimulationOptions,
    TRADING_DAYS,
};
pub use greeks::{greeks, greeks_with, GreeksOptions, GreeksReport};
pub use quasirandom::{
    halton, lambda_from_uniform, sample_parameter_space, uniform_from_lambda, ParameterRanges,
    PRIMES,
};

/// Which innovation family drives the GARCH dynamics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    /// Gaussian daily innovations.
    Duan,
    /// Standardized classical tempered stable innovations.
    Cts,
}

impl Model {
    /// Network input dimension: `[m, tau, kappa, psi, gamma, theta, sigma0]`
    /// plus `[alpha, lambda+, lambda-]` for the CTS model.
    pub fn input_dim(self) -> usize {
        match self {
            Model::Duan => 7,
            Model::Cts => 10,
        }
    }

    /// Number of free model parameters (the input dimension minus the two
    /// contract coordinates `m` and `tau`).
    pub fn param_dim(self) -> usize {
        self.input_dim() - 2
    }

    pub fn name(self) -> &'static str {
        match self {
            Model::Duan => "duan",
            Model::Cts => "cts",
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "duan" | "gaussian" => Ok(Model::Duan),
            "cts" => Ok(Model::Cts),
            other => Err(Error::InvalidParams(format!(
                "unknown model `{other}` (expected `duan` or `cts`)"
            ))),
        }
    }
}

/// European option side.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptionKind {
    Call,
    Put,
}

impl OptionKind {
    pub fn name(self) -> &'static str {
        match self {
            OptionKind::Call => "call",
            OptionKind::Put => "put",
        }
    }
}

impl fmt::Display for OptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "call" | "c" => Ok(OptionKind::Call),
            "put" | "p" => Ok(OptionKind::Put),
            other => Err(Error::InvalidParams(format!(
                "unknown option kind `{other}` (expected `call` or `put`)"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_and_kind_parse_and_display() {
        assert_eq!("duan".parse::<Model>().unwrap(), Model::Duan);
        assert_eq!("CTS".parse::<Model>().unwrap(), Model::Cts);
        assert!("garch".parse::<Model>().is_err());
        assert_eq!(Model::Cts.to_string(), "cts");
        assert_eq!(Model::Duan.input_dim(), 7);
        assert_eq!(Model::Cts.input_dim(), 10);
        assert_eq!(Model::Duan.param_dim(), 5);
        assert_eq!(Model::Cts.param_dim(), 8);

        assert_eq!("put".parse::<OptionKind>().unwrap(), OptionKind::Put);
        assert_eq!("C".parse::<OptionKind>().unwrap(), OptionKind::Call);
        assert!("straddle".parse::<OptionKind>().is_err());
        assert_eq!(OptionKind::Call.to_string(), "call");
    }
}
