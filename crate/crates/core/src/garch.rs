//! Risk-neutral GARCH dynamics and Monte Carlo option pricing.
//!
//! Both supported models share one volatility recursion; they differ only in
//! the innovation law and the matching martingale correction. Under the
//! pricing measure the cumulative log return after `T` daily steps is
//!
//! ```text
//! X_T = sum_{t=1..T} (-w_t + sigma_t eta_t)
//! sigma_t^2 = kappa + gamma/(psi+1) (psi sigma_{t-1}^2 (eta_{t-1} - theta)^2 + sigma_{t-1}^2)
//! ```
//!
//! with `sigma_0` given and `eta_0 = 0`. The correction `w_t` makes
//! `exp(X_T)` a martingale with unit mean: `w_t = sigma_t^2 / 2` for Gaussian
//! innovations, `w_t = l(sigma_t)` (the stdCTS log-Laplace transform) for
//! tempered stable ones. Prices are plain payoff averages over simulated
//! paths against the forward moneyness `m = K exp(-r tau) / S0`:
//!
//! ```text
//! call = mean((exp(X_T) - m)^+),  put = mean((m - exp(X_T))^+)
//! ```
//!
//! in units of the spot. One business year is 250 steps.
//!
//! Paths draw from per-path keyed streams, so prices are bit-identical for a
//! given seed no matter how many threads run the simulation, and a chain of
//! quotes can be priced off one shared set of paths (which is also what makes
//! call/put and strike-to-strike comparisons noise-free).

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::cts::{build_inverse_cdf, CtsParams, InverseCdfTable, LogLaplace, DEFAULT_CDF_RESOLUTION};
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::{Model, OptionKind};

/// Trading days per year: maturities in years convert to simulation steps as
/// `T = round(250 tau)`.
pub const TRADING_DAYS: f64 = 250.0;

/// Innovation law of the daily shocks (standardized to mean 0, variance 1).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Innovation {
    Gaussian,
    Cts(CtsParams),
}

/// Risk-neutral model parameters. Construction validates the admissible
/// region; `gamma = 0` is allowed and degenerates the recursion to
/// `sigma_t^2 = kappa`, which the zero-volatility diagnostics rely on.
///
/// No stationarity condition is imposed: strongly persistent corners of the
/// box are simulated as-is over the finite horizon, and downstream consumers
/// deal with the occasional exploding path (a non-finite price is skipped by
/// the dataset generator and penalized by the calibrator).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RiskNeutralParams {
    kappa: f64,
    psi: f64,
    gamma: f64,
    theta: f64,
    sigma0: f64,
    innovation: Innovation,
}

impl RiskNeutralParams {
    pub fn new(
        kappa: f64,
        psi: f64,
        gamma: f64,
        theta: f64,
        sigma0: f64,
        innovation: Innovation,
    ) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if !kappa.is_finite() || kappa < 0.0 {
            return bad(format!("kappa must be >= 0, got {kappa}"));
        }
        if !psi.is_finite() || psi <= 0.0 {
            return bad(format!("psi must be > 0, got {psi}"));
        }
        if !gamma.is_finite() || !(0.0..1.0).contains(&gamma) {
            return bad(format!("gamma must lie in [0, 1), got {gamma}"));
        }
        if !theta.is_finite() || theta < 0.0 {
            return bad(format!("theta must be >= 0, got {theta}"));
        }
        if !sigma0.is_finite() || sigma0 <= 0.0 {
            return bad(format!("sigma0 must be > 0, got {sigma0}"));
        }
        Ok(Self {
            kappa,
            psi,
            gamma,
            theta,
            sigma0,
            innovation,
        })
    }

    pub fn new_duan(kappa: f64, psi: f64, gamma: f64, theta: f64, sigma0: f64) -> Result<Self> {
        Self::new(kappa, psi, gamma, theta, sigma0, Innovation::Gaussian)
    }

    pub fn new_cts(
        kappa: f64,
        psi: f64,
        gamma: f64,
        theta: f64,
        sigma0: f64,
        cts: CtsParams,
    ) -> Result<Self> {
        Self::new(kappa, psi, gamma, theta, sigma0, Innovation::Cts(cts))
    }

    /// Build from a flat parameter slice in the canonical order
    /// `[kappa, psi, gamma, theta, sigma0]` plus `[alpha, lambda+, lambda-]`
    /// for the CTS model (the layout used by training rows, calibration
    /// vectors, and result files).
    pub fn from_slice(model: Model, theta: &[f64]) -> Result<Self> {
        let want = model.param_dim();
        if theta.len() != want {
            return Err(Error::DimensionMismatch {
                expected: want,
                got: theta.len(),
            });
        }
        let innovation = match model {
            Model::Duan => Innovation::Gaussian,
            Model::Cts => Innovation::Cts(CtsParams::new(theta[5], theta[6], theta[7])?),
        };
        Self::new(theta[0], theta[1], theta[2], theta[3], theta[4], innovation)
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn psi(&self) -> f64 {
        self.psi
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn sigma0(&self) -> f64 {
        self.sigma0
    }

    pub fn innovation(&self) -> &Innovation {
        &self.innovation
    }

    pub fn model(&self) -> Model {
        match self.innovation {
            Innovation::Gaussian => Model::Duan,
            Innovation::Cts(_) => Model::Cts,
        }
    }

    /// News impact coefficient `xi = gamma psi / (1 + psi)` of the expanded
    /// recursion `sigma_t^2 = kappa + xi sigma^2 (eta - theta)^2 + zeta sigma^2`.
    pub fn xi(&self) -> f64 {
        self.gamma * self.psi / (1.0 + self.psi)
    }

    /// Volatility memory coefficient `zeta = gamma / (1 + psi)`.
    pub fn zeta(&self) -> f64 {
        self.gamma / (1.0 + self.psi)
    }
}

/// One European option priced by Monte Carlo, in normalized units: strikes
/// enter through the forward moneyness `m = K exp(-r tau) / S0` and prices
/// come out as fractions of the spot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PricingRequest {
    pub moneyness: f64,
    pub tau: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub kind: OptionKind,
}

impl PricingRequest {
    /// Simulation steps for the maturity: `round(250 tau)`, at least 1.
    pub fn steps(&self) -> Result<usize> {
        steps_for_tau(self.tau)
    }

    fn validate(&self) -> Result<()> {
        if !(self.moneyness.is_finite() && self.moneyness > 0.0) {
            return Err(Error::InvalidParams(format!(
                "moneyness must be > 0, got {}",
                self.moneyness
            )));
        }
        self.steps()?;
        if self.n_paths == 0 {
            return Err(Error::InvalidParams("need at least one path".into()));
        }
        Ok(())
    }
}

/// Steps for a maturity in years: `round(250 tau)`, at least 1.
pub fn steps_for_tau(tau: f64) -> Result<usize> {
    if !tau.is_finite() || tau <= 0.0 {
        return Err(Error::InvalidParams(format!("tau must be > 0, got {tau}")));
    }
    let steps = (TRADING_DAYS * tau).round();
    if steps < 1.0 {
        return Err(Error::InvalidParams(format!(
            "tau = {tau} rounds to zero simulation steps"
        )));
    }
    Ok(steps as usize)
}

/// Simulation switches.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SimulationOptions {
    /// Freeze the volatility at `sigma0` (skip the GARCH recursion). The
    /// Gaussian model then collapses to exact Black-Scholes dynamics, which
    /// is the closed-form cross-check used by the test suite.
    pub frozen_vol: bool,
}

/// One quote of a chain priced off a shared set of paths.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuoteSpec {
    pub moneyness: f64,
    pub steps: usize,
    pub kind: OptionKind,
}

/// Innovation machinery resolved once per simulation call.
enum InnovationCtx {
    Gaussian,
    Cts { table: InverseCdfTable, ll: LogLaplace },
}

impl InnovationCtx {
    fn build(params: &RiskNeutralParams) -> Result<Self> {
        match &params.innovation {
            Innovation::Gaussian => Ok(Self::Gaussian),
            Innovation::Cts(cts) => Ok(Self::Cts {
                table: build_inverse_cdf(cts, DEFAULT_CDF_RESOLUTION)?,
                ll: LogLaplace::new(cts),
            }),
        }
    }
}

/// Fixed-shape summation: splits recursively regardless of data, so the
/// result is independent of thread count and reproducible bit-for-bit.
pub(crate) fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// Simulate the cumulative exponent `X` of every path at each step in
/// `marks` (sorted, distinct, >= 1). Returns a row-major matrix: row `r`
/// holds `X_{marks[r]}` for paths `0..n_paths`.
fn simulate_exponents_at(
    params: &RiskNeutralParams,
    marks: &[usize],
    n_paths: usize,
    seed: u64,
    opts: &SimulationOptions,
) -> Result<Vec<f64>> {
    debug_assert!(marks.windows(2).all(|w| w[0] < w[1]));
    debug_assert!(marks.first().is_some_and(|&m| m >= 1));
    let ctx = InnovationCtx::build(params)?;
    let t_max = *marks.last().unwrap();
    let n_marks = marks.len();

    let kappa = params.kappa;
    let zeta = params.zeta();
    let psi = params.psi;
    let theta = params.theta;
    let sig2_0 = params.sigma0 * params.sigma0;

    const CHUNK: usize = 1024;
    let blocks: Vec<Result<Vec<f64>>> = (0..n_paths.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let width = CHUNK.min(n_paths - lo);
            let mut block = vec![0.0f64; n_marks * width];
            for local in 0..width {
                let path = (lo + local) as u64;
                let mut rng = stream_rng(seed, path);
                let mut sig2 = sig2_0;
                let mut eta_prev = 0.0;
                let mut acc = 0.0;
                let mut next_mark = 0;
                for t in 1..=t_max {
                    if !opts.frozen_vol {
                        let dev = eta_prev - theta;
                        sig2 = kappa + zeta * sig2 * (psi * dev * dev + 1.0);
                    }
                    let sigma = sig2.sqrt();
                    let (w, eta) = match &ctx {
                        InnovationCtx::Gaussian => {
                            (0.5 * sig2, rng.sample::<f64, _>(StandardNormal))
                        }
                        InnovationCtx::Cts { table, ll } => {
                            if sigma >= ll.upper_limit() {
                                return Err(Error::Domain(format!(
                                    "sigma_t = {sigma} reached lambda_plus = {} at step {t} \
                                     of path {path}; exponential moment undefined",
                                    ll.upper_limit()
                                )));
                            }
                            (ll.eval_unchecked(sigma), table.quantile(rng.random::<f64>()))
                        }
                    };
                    acc += sigma * eta - w;
                    eta_prev = eta;
                    if marks[next_mark] == t {
                        block[next_mark * width + local] = acc;
                        next_mark += 1;
                        if next_mark == n_marks {
                            break;
                        }
                    }
                }
            }
            Ok(block)
        })
        .collect();

    let mut out = vec![0.0f64; n_marks * n_paths];
    for (c, block) in blocks.into_iter().enumerate() {
        let block = block?;
        let lo = c * CHUNK;
        let width = CHUNK.min(n_paths - lo);
        for r in 0..n_marks {
            out[r * n_paths + lo..r * n_paths + lo + width]
                .copy_from_slice(&block[r * width..(r + 1) * width]);
        }
    }
    Ok(out)
}

/// Terminal cumulative exponents `X_T` of `n_paths` simulated paths.
pub fn simulate_paths(
    params: &RiskNeutralParams,
    t_steps: usize,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    simulate_paths_with(params, t_steps, n_paths, seed, &SimulationOptions::default())
}

pub fn simulate_paths_with(
    params: &RiskNeutralParams,
    t_steps: usize,
    n_paths: usize,
    seed: u64,
    opts: &SimulationOptions,
) -> Result<Vec<f64>> {
    if t_steps == 0 {
        return Err(Error::InvalidParams("need at least one step".into()));
    }
    if n_paths == 0 {
        return Ok(Vec::new());
    }
    simulate_exponents_at(params, &[t_steps], n_paths, seed, opts)
}

/// Monte Carlo price of one option, in units of the spot.
pub fn price_mcs(params: &RiskNeutralParams, req: &PricingRequest) -> Result<f64> {
    price_mcs_with(params, req, &SimulationOptions::default())
}

pub fn price_mcs_with(
    params: &RiskNeutralParams,
    req: &PricingRequest,
    opts: &SimulationOptions,
) -> Result<f64> {
    req.validate()?;
    let quote = QuoteSpec {
        moneyness: req.moneyness,
        steps: req.steps()?,
        kind: req.kind,
    };
    Ok(price_chain_mcs_with(params, &[quote], req.n_paths, req.seed, opts)?[0])
}

/// Price a whole chain of quotes off one shared set of paths. Each path is
/// simulated once to the longest maturity and read at every quoted horizon,
/// so a `k`-quote chain costs barely more than its single longest quote, and
/// cross-quote comparisons (parity, strike monotonicity) are free of
/// independent-sampling noise.
///
/// Quote `i` of the result equals `price_mcs` called with the same seed and
/// quote `i` alone, bit for bit.
pub fn price_chain_mcs(
    params: &RiskNeutralParams,
    quotes: &[QuoteSpec],
    n_paths: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    price_chain_mcs_with(params, quotes, n_paths, seed, &SimulationOptions::default())
}

pub fn price_chain_mcs_with(
    params: &RiskNeutralParams,
    quotes: &[QuoteSpec],
    n_paths: usize,
    seed: u64,
    opts: &SimulationOptions,
) -> Result<Vec<f64>> {
    if quotes.is_empty() {
        return Ok(Vec::new());
    }
    if n_paths == 0 {
        return Err(Error::InvalidParams("need at least one path".into()));
    }
    for q in quotes {
        if !(q.moneyness.is_finite() && q.moneyness > 0.0) || q.steps == 0 {
            return Err(Error::InvalidParams(format!(
                "bad quote: moneyness = {}, steps = {}",
                q.moneyness, q.steps
            )));
        }
    }

    let mut marks: Vec<usize> = quotes.iter().map(|q| q.steps).collect();
    marks.sort_unstable();
    marks.dedup();

    let exponents = simulate_exponents_at(params, &marks, n_paths, seed, opts)?;
    let terminal: Vec<f64> = exponents.iter().map(|x| x.exp()).collect();

    let mut payoff = vec![0.0f64; n_paths];
    let prices = quotes
        .iter()
        .map(|q| {
            let row_at = marks.binary_search(&q.steps).unwrap() * n_paths;
            let row = &terminal[row_at..row_at + n_paths];
            let m = q.moneyness;
            match q.kind {
                OptionKind::Call => {
                    for (p, &s) in payoff.iter_mut().zip(row) {
                        *p = (s - m).max(0.0);
                    }
                }
                OptionKind::Put => {
                    for (p, &s) in payoff.iter_mut().zip(row) {
                        *p = (m - s).max(0.0);
                    }
                }
            }
            pairwise_sum(&payoff) / n_paths as f64
        })
        .collect();
    Ok(prices)
}
