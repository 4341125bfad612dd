//! Fitting model parameters to an out-of-the-money option chain.
//!
//! The objective follows the market-standard relative error on log prices:
//! every quote contributes `(model - market) / market` where both sides are
//! log prices relative to the spot, `v = ln(V / S0)`, and the reported
//! loss is the 2-norm of that residual vector (root of the *sum*, not the
//! mean, of squares). Quotes are used on their out-of-the-money side: puts
//! below the forward (`m < 1`), calls at or above it, which keeps values
//! small, positive-vega and informative about the smile.
//!
//! The optimizer is a projected Levenberg-Marquardt on the box of admissible
//! parameters with finite-difference residual Jacobians; tempering rates are
//! optimized through their bounded uniform pre-image (`u = atan(lambda -
//! 0.1) / (pi/2)`) rather than their natural half-infinite range. Points
//! where pricing fails (inversion failure, domain exit, zero price) receive
//! a fixed penalty value instead of aborting, so the optimizer can walk out
//! of bad regions. Multi-start comes from Halton points of the box; with a
//! fixed Monte Carlo seed the whole procedure is deterministic.

use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fnn::Network;
use crate::garch::{price_chain_mcs, steps_for_tau, QuoteSpec, RiskNeutralParams, TRADING_DAYS};
use crate::quasirandom::{halton, lambda_from_uniform, uniform_from_lambda, ParameterRanges, PRIMES};
use crate::{Model, OptionKind};

/// Stand-in log relative price for points that cannot be priced. Market
/// values `ln(mid/S0)` are always negative, so +10 is far from every real
/// quote and the optimizer is pushed away from the region.
pub const PENALTY_LOG_REL_PRICE: f64 = 10.0;

/// Tempering rates above this are numerically Gaussian; the calibration box
/// caps there to keep the u-space coordinate away from its singular end.
pub const LAMBDA_CALIBRATION_CAP: f64 = 1.0e4;

/// One market quote.
#[derive(Clone, Debug, PartialEq)]
pub struct OptionQuote {
    pub strike: f64,
    pub maturity_days: u32,
    pub kind: OptionKind,
    pub bid: f64,
    pub ask: f64,
}

impl OptionQuote {
    pub fn mid(&self) -> f64 {
        0.5 * (self.bid + self.ask)
    }

    /// Maturity in years (250 trading days).
    pub fn tau(&self) -> f64 {
        f64::from(self.maturity_days) / TRADING_DAYS
    }
}

/// An option chain: one date, one underlying level, one rate, many quotes.
#[derive(Clone, Debug, PartialEq)]
pub struct OptionChain {
    pub date: String,
    pub spot: f64,
    /// Continuously compounded annual rate.
    pub rate: f64,
    pub quotes: Vec<OptionQuote>,
}

impl OptionChain {
    /// Forward moneyness `m = K exp(-r tau) / S0` of a quote.
    pub fn forward_moneyness(&self, q: &OptionQuote) -> f64 {
        q.strike * (-self.rate * q.tau()).exp() / self.spot
    }

    /// Market log relative price `ln(mid / S0)`.
    pub fn market_value(&self, q: &OptionQuote) -> f64 {
        (q.mid() / self.spot).ln()
    }
}

pub const CHAIN_CSV_HEADER: &str = "date,spot,rate,strike,maturity_days,kind,bid,ask";

/// Parse a chain CSV (see [`CHAIN_CSV_HEADER`]) and run it through
/// [`filter_chain`]. All rows must share one date, spot, and rate.
pub fn ingest_chain(path: impl AsRef<Path>) -> Result<OptionChain> {
    filter_chain(parse_chain(path)?)
}

fn parse_chain(path: impl AsRef<Path>) -> Result<OptionChain> {
    let path = path.as_ref();
    let pstr = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(pstr.clone(), e))?;
    let mut lines = text.lines().enumerate();

    let (_, header) = lines.next().ok_or_else(|| Error::MalformedFile {
        path: pstr.clone(),
        message: "empty file".into(),
    })?;
    let canon: String = header.split(',').map(|t| t.trim().to_ascii_lowercase()).collect::<Vec<_>>().join(",");
    if canon != CHAIN_CSV_HEADER {
        return Err(Error::MalformedFile {
            path: pstr,
            message: format!("expected header `{CHAIN_CSV_HEADER}`, got `{header}`"),
        });
    }

    let mut chain: Option<OptionChain> = None;
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: pstr.clone(),
            line: lineno + 1,
            message,
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 8 {
            return Err(err(format!("expected 8 fields, got {}", fields.len())));
        }
        let num = |i: usize, name: &str| -> Result<f64> {
            fields[i]
                .parse::<f64>()
                .map_err(|_| err(format!("bad {name} `{}`", fields[i])))
        };
        let date = fields[0].to_string();
        let spot = num(1, "spot")?;
        let rate = num(2, "rate")?;
        let strike = num(3, "strike")?;
        let maturity_days: u32 = fields[4]
            .parse()
            .map_err(|_| err(format!("bad maturity_days `{}`", fields[4])))?;
        let kind: OptionKind = fields[5].parse().map_err(|_| err(format!("bad kind `{}`", fields[5])))?;
        let bid = num(6, "bid")?;
        let ask = num(7, "ask")?;

        if !(spot > 0.0) || !rate.is_finite() {
            return Err(err(format!("bad market state: spot = {spot}, rate = {rate}")));
        }
        if !(strike > 0.0) {
            return Err(err(format!("strike must be positive, got {strike}")));
        }
        if maturity_days == 0 {
            return Err(err("maturity_days must be at least 1".into()));
        }
        if bid < 0.0 || !bid.is_finite() || !ask.is_finite() {
            return Err(err(format!("bad bid/ask {bid}/{ask}")));
        }

        match &chain {
            None => {
                chain = Some(OptionChain {
                    date,
                    spot,
                    rate,
                    quotes: Vec::new(),
                })
            }
            Some(c) => {
                if c.date != date {
                    return Err(err(format!("inconsistent date `{date}` (chain is `{}`)", c.date)));
                }
                if c.spot != spot {
                    return Err(err(format!("inconsistent spot {spot} (chain is {})", c.spot)));
                }
                if c.rate != rate {
                    return Err(err(format!("inconsistent rate {rate} (chain is {})", c.rate)));
                }
            }
        }
        chain.as_mut().unwrap().quotes.push(OptionQuote {
            strike,
            maturity_days,
            kind,
            bid,
            ask,
        });
    }
    chain.ok_or(Error::EmptyChain("file has a header but no quotes".into()))
}

/// Keep the quotes the calibration objective is defined on: positive mid
/// below the spot, uncrossed, and out of the money for their kind under
/// forward moneyness (puts with `m < 1`, calls with `m >= 1`). Errors if
/// nothing survives.
pub fn filter_chain(chain: OptionChain) -> Result<OptionChain> {
    let before = chain.quotes.len();
    let mut kept = Vec::with_capacity(before);
    for q in &chain.quotes {
        let mid = q.mid();
        if q.ask < q.bid || mid <= 0.0 || mid >= chain.spot {
            continue;
        }
        let m = chain.forward_moneyness(q);
        let otm = match q.kind {
            OptionKind::Put => m < 1.0,
            OptionKind::Call => m >= 1.0,
        };
        if otm {
            kept.push(q.clone());
        }
    }
    if kept.is_empty() {
        return Err(Error::EmptyChain(format!(
            "all {before} quotes dropped (crossed, worthless, or in the money)"
        )));
    }
    log::info!(
        "chain {}: kept {} of {before} quotes after filtering",
        chain.date,
        kept.len()
    );
    Ok(OptionChain { quotes: kept, ..chain })
}

/// Which pricer evaluates model values during calibration and greeks.
#[derive(Clone, Copy, Debug)]
pub enum PricerSpec<'a> {
    /// Trained surrogate pair; the put net serves `m < 1`, the call net the
    /// rest. Inputs outside the training box are clamped to its faces.
    Ann { call: &'a Network, put: &'a Network },
    /// Direct Monte Carlo with a fixed seed (shared across every evaluation
    /// of one calibration run, so the objective is deterministic).
    Mcs { n_paths: usize, seed: u64 },
}

impl PricerSpec<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            PricerSpec::Ann { .. } => "ann",
            PricerSpec::Mcs { .. } => "mcs",
        }
    }

    fn validate(&self, model: Model) -> Result<()> {
        if let PricerSpec::Ann { call, put } = self {
            for (side, net) in [("call", call), ("put", put)] {
                if net.input_dim() != model.input_dim() {
                    return Err(Error::InvalidParams(format!(
                        "{side} net expects {} inputs, model {model} has {}",
                        net.input_dim(),
                        model.input_dim()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// An out-of-the-money model value plus what happened while computing it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OtmValue {
    /// Log relative price `ln(V / S0)` ([`PENALTY_LOG_REL_PRICE`] if failed).
    pub value: f64,
    /// An ANN input left the training box and was clamped to its face.
    pub clamped: bool,
    /// Pricing failed; `value` is the penalty stand-in.
    pub failed: bool,
}

/// Out-of-the-money log relative price at one contract point: the put value
/// for `m < 1`, the call value otherwise. `theta` is the flat parameter
/// vector in canonical order (see [`RiskNeutralParams::from_slice`]).
pub fn otm_value(
    model: Model,
    m: f64,
    tau: f64,
    theta: &[f64],
    pricer: &PricerSpec,
) -> Result<OtmValue> {
    pricer.validate(model)?;
    if theta.len() != model.param_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.param_dim(),
            got: theta.len(),
        });
    }
    if !(m > 0.0) || !(tau > 0.0) {
        return Err(Error::InvalidParams(format!("need m > 0 and tau > 0, got {m}, {tau}")));
    }
    let view = QuoteView {
        m,
        tau,
        steps: steps_for_tau(tau)?,
        v_market: f64::NAN, // unused by evaluation
    };
    let mut detail = eval_values(&[view], model, theta, pricer)?;
    Ok(detail.pop().unwrap())
}

/// Contract point of one quote, precomputed once per chain.
#[derive(Clone, Copy, Debug)]
struct QuoteView {
    m: f64,
    tau: f64,
    steps: usize,
    v_market: f64,
}

fn build_views(chain: &OptionChain) -> Result<Vec<QuoteView>> {
    if chain.quotes.is_empty() {
        return Err(Error::EmptyChain("chain has no quotes".into()));
    }
    chain
        .quotes
        .iter()
        .map(|q| {
            let v = chain.market_value(q);
            if v >= 0.0 {
                return Err(Error::InvalidParams(format!(
                    "quote mid {} at or above spot {}; filter the chain first",
                    q.mid(),
                    chain.spot
                )));
            }
            Ok(QuoteView {
                m: chain.forward_moneyness(q),
                tau: q.tau(),
                steps: q.maturity_days as usize,
                v_market: v,
            })
        })
        .collect()
}

/// Model OTM values at each view point. Failures become penalties, never
/// errors; the ANN clamp flag is per point.
fn eval_values(
    views: &[QuoteView],
    model: Model,
    theta: &[f64],
    pricer: &PricerSpec,
) -> Result<Vec<OtmValue>> {
    match pricer {
        PricerSpec::Ann { call, put } => views
            .iter()
            .map(|view| {
                let net = if view.m < 1.0 { put } else { call };
                let mut x = Vec::with_capacity(2 + theta.len());
                x.push(view.m);
                x.push(view.tau);
                x.extend_from_slice(theta);
                let clamped = net.clamp_input(&mut x)?;
                let value = net.forward(&x)?;
                if value.is_finite() {
                    Ok(OtmValue { value, clamped, failed: false })
                } else {
                    Ok(OtmValue { value: PENALTY_LOG_REL_PRICE, clamped, failed: true })
                }
            })
            .collect(),
        PricerSpec::Mcs { n_paths, seed } => {
            let all_failed = || {
                views
                    .iter()
                    .map(|_| OtmValue {
                        value: PENALTY_LOG_REL_PRICE,
                        clamped: false,
                        failed: true,
                    })
                    .collect()
            };
            let params = match RiskNeutralParams::from_slice(model, theta) {
                Ok(p) => p,
                Err(_) => return Ok(all_failed()),
            };
            let quotes: Vec<QuoteSpec> = views
                .iter()
                .map(|view| QuoteSpec {
                    moneyness: view.m,
                    steps: view.steps,
                    kind: if view.m < 1.0 { OptionKind::Put } else { OptionKind::Call },
                })
                .collect();
            let prices = match price_chain_mcs(&params, &quotes, *n_paths, *seed) {
                Ok(p) => p,
                // Unpriceable parameter point (bad tempering corner or a
                // volatility path outside the exponential-moment domain).
                Err(Error::Domain(_)) | Err(Error::InversionFailure(_)) => return Ok(all_failed()),
                Err(e) => return Err(e),
            };
            Ok(prices
                .into_iter()
                .map(|p| {
                    if p.is_finite() && p > 0.0 {
                        OtmValue { value: p.ln(), clamped: false, failed: false }
                    } else {
                        OtmValue { value: PENALTY_LOG_REL_PRICE, clamped: false, failed: true }
                    }
                })
                .collect())
        }
    }
}

struct EvalDetail {
    residuals: Vec<f64>,
    clamped: usize,
    failed: usize,
}

impl EvalDetail {
    fn sum_sq(&self) -> f64 {
        self.residuals.iter().map(|r| r * r).sum()
    }
}

fn eval_residuals(
    views: &[QuoteView],
    model: Model,
    theta: &[f64],
    pricer: &PricerSpec,
) -> Result<EvalDetail> {
    let values = eval_values(views, model, theta, pricer)?;
    let mut clamped = 0;
    let mut failed = 0;
    let residuals = views
        .iter()
        .zip(&values)
        .map(|(view, v)| {
            clamped += usize::from(v.clamped);
            failed += usize::from(v.failed);
            (v.value - view.v_market) / view.v_market
        })
        .collect();
    Ok(EvalDetail { residuals, clamped, failed })
}

/// Per-quote relative residuals `(model - market) / market` of log prices.
pub fn residuals(
    chain: &OptionChain,
    model: Model,
    theta: &[f64],
    pricer: &PricerSpec,
) -> Result<Vec<f64>> {
    pricer.validate(model)?;
    check_theta_dim(model, theta)?;
    Ok(eval_residuals(&build_views(chain)?, model, theta, pricer)?.residuals)
}

/// Calibration loss: the 2-norm of the residual vector,
/// `sqrt(sum_i ((v_model_i - v_mkt_i) / v_mkt_i)^2)`.
pub fn rel_rmse(
    chain: &OptionChain,
    model: Model,
    theta: &[f64],
    pricer: &PricerSpec,
) -> Result<f64> {
    pricer.validate(model)?;
    check_theta_dim(model, theta)?;
    Ok(eval_residuals(&build_views(chain)?, model, theta, pricer)?
        .sum_sq()
        .sqrt())
}

fn check_theta_dim(model: Model, theta: &[f64]) -> Result<()> {
    if theta.len() != model.param_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.param_dim(),
            got: theta.len(),
        });
    }
    Ok(())
}

/// Box constraints on the natural parameter vector. Tempering-rate bounds
/// are capped at [`LAMBDA_CALIBRATION_CAP`].
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationBounds {
    model: Model,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl CalibrationBounds {
    pub fn new(model: Model, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let k = model.param_dim();
        if lower.len() != k || upper.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: lower.len().min(upper.len()),
            });
        }
        let mut lower = lower;
        let mut upper = upper;
        if model == Model::Cts {
            for j in [6, 7] {
                lower[j] = lower[j].max(0.1);
                upper[j] = upper[j].min(LAMBDA_CALIBRATION_CAP);
            }
        }
        for j in 0..k {
            if !(lower[j].is_finite() && upper[j].is_finite() && lower[j] <= upper[j]) {
                return Err(Error::InvalidParams(format!(
                    "bound {j} is not a finite ordered pair: [{}, {}]",
                    lower[j], upper[j]
                )));
            }
        }
        // The box must stay inside the admissible parameter region.
        let ok = lower[0] >= 0.0        // kappa
            && lower[1] > 0.0           // psi
            && lower[2] >= 0.0 && upper[2] < 1.0 // gamma
            && lower[3] >= 0.0          // theta
            && lower[4] > 0.0           // sigma0
            && (model == Model::Duan || (lower[5] > 0.0 && upper[5] < 2.0)); // alpha
        if !ok {
            return Err(Error::InvalidParams(
                "bounds leave the admissible parameter region".into(),
            ));
        }
        Ok(Self { model, lower, upper })
    }

    /// Bounds matching a sampling box (the region a surrogate net was
    /// trained on).
    pub fn from_ranges(model: Model, ranges: &ParameterRanges) -> Result<Self> {
        ranges.validate()?;
        let mut lower = vec![
            ranges.kappa.0,
            ranges.psi.0,
            ranges.gamma.0,
            ranges.theta.0,
            ranges.sigma0.0,
        ];
        let mut upper = vec![
            ranges.kappa.1,
            ranges.psi.1,
            ranges.gamma.1,
            ranges.theta.1,
            ranges.sigma0.1,
        ];
        if model == Model::Cts {
            lower.extend([ranges.alpha.0, lambda_from_uniform(ranges.u_plus.0), lambda_from_uniform(ranges.u_minus.0)]);
            upper.extend([ranges.alpha.1, lambda_from_uniform(ranges.u_plus.1), lambda_from_uniform(ranges.u_minus.1)]);
        }
        Self::new(model, lower, upper)
    }

    /// The default sampling box.
    pub fn training_box(model: Model) -> Self {
        Self::from_ranges(model, &ParameterRanges::pricing()).expect("static box is valid")
    }

    /// Training box with the leverage parameter opened up to 3 (daily-scale
    /// leverage fitted on index chains routinely lands above the sampling
    /// box; the surrogate clamps there, Monte Carlo does not).
    pub fn extended(model: Model) -> Self {
        let mut b = Self::training_box(model);
        b.upper[3] = 3.0;
        b
    }

    pub fn profile(name: &str, model: Model) -> Option<Self> {
        match name {
            "training-box" => Some(Self::training_box(model)),
            "extended" => Some(Self::extended(model)),
            _ => None,
        }
    }

    pub fn model(&self) -> Model {
        self.model
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| v >= lo && v <= hi)
    }

    /// Internal optimizer coordinates: identity for most parameters,
    /// u-space for the tempering rates.
    fn to_internal(&self, theta: &[f64]) -> Vec<f64> {
        let mut z = theta.to_vec();
        if self.model == Model::Cts {
            for j in [6, 7] {
                z[j] = uniform_from_lambda(z[j]);
            }
        }
        z
    }

    fn to_natural(&self, z: &[f64]) -> Vec<f64> {
        let mut theta = z.to_vec();
        if self.model == Model::Cts {
            for j in [6, 7] {
                theta[j] = lambda_from_uniform(theta[j]);
            }
        }
        theta
    }

    fn internal_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (self.to_internal(&self.lower), self.to_internal(&self.upper))
    }
}

#[derive(Clone, Debug)]
pub struct CalibrateOptions {
    /// Halton multi-starts when no initial point is given.
    pub starts: usize,
    /// LM iteration budget per start.
    pub max_iters: usize,
    pub mu0: f64,
    pub mu_min: f64,
    pub mu_max: f64,
    /// Declare convergence when an accepted step improves the squared loss
    /// by less than this relative amount...
    pub fun_tol: f64,
    /// ...or moves the (internal) parameter vector by less than this.
    pub step_tol: f64,
}

impl Default for CalibrateOptions {
    fn default() -> Self {
        Self {
            starts: 5,
            max_iters: 100,
            mu0: 1e-3,
            mu_min: 1e-12,
            mu_max: 1e10,
            fun_tol: 1e-10,
            step_tol: 1e-10,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CalibrationResult {
    /// Fitted parameters in canonical order (tempering rates natural).
    pub params: Vec<f64>,
    /// Loss at the fit: `sqrt(sum of squared relative residuals)`.
    pub rel_rmse: f64,
    /// Per-quote residuals at the fit, in chain order.
    pub residuals: Vec<f64>,
    /// Accepted LM iterations of the winning start.
    pub iterations: usize,
    /// The winning start satisfied a convergence tolerance (as opposed to
    /// running out of iterations or damping).
    pub converged: bool,
    /// Quotes whose ANN input was clamped to the training box at the fit.
    pub clamped_quotes: usize,
    /// Quotes still carrying the failure penalty at the fit (unpriceable).
    pub failed_quotes: usize,
    pub n_quotes: usize,
    /// Which start won (0-based; 0 is the user-supplied point if given).
    pub start_index: usize,
}

/// Fit `model` to the chain by projected Levenberg-Marquardt on the bounded
/// parameter box, minimizing [`rel_rmse`]. With `initial = None` the
/// optimizer runs from `opts.starts` Halton points of the box and keeps the
/// best fit; an explicit initial point (clamped into the box) runs alone.
pub fn calibrate(
    chain: &OptionChain,
    model: Model,
    pricer: &PricerSpec,
    initial: Option<&[f64]>,
    bounds: &CalibrationBounds,
    opts: &CalibrateOptions,
) -> Result<CalibrationResult> {
    pricer.validate(model)?;
    if bounds.model() != model {
        return Err(Error::InvalidParams(format!(
            "bounds are for model {}, calibrating {model}",
            bounds.model()
        )));
    }
    let views = build_views(chain)?;
    let (lo, hi) = bounds.internal_bounds();
    let k = bounds.dim();

    let starts: Vec<Vec<f64>> = match initial {
        Some(theta0) => {
            check_theta_dim(model, theta0)?;
            let mut z = bounds.to_internal(theta0);
            for j in 0..k {
                z[j] = z[j].clamp(lo[j], hi[j]);
            }
            vec![z]
        }
        None => {
            if opts.starts == 0 {
                return Err(Error::InvalidParams("need at least one start".into()));
            }
            (0..opts.starts)
                .map(|s| {
                    (0..k)
                        .map(|j| lo[j] + (hi[j] - lo[j]) * halton(s as u64 + 1, PRIMES[j]))
                        .collect()
                })
                .collect()
        }
    };

    let mut best: Option<(f64, Vec<f64>, usize, bool, usize)> = None;
    for (s, z0) in starts.iter().enumerate() {
        let run = lm_minimize(&views, model, pricer, bounds, z0, &lo, &hi, opts)?;
        let better = match &best {
            None => true,
            Some((f, ..)) => run.0 < *f,
        };
        if better {
            best = Some((run.0, run.1, run.2, run.3, s));
        }
    }
    let (f_best, z_best, iterations, converged, start_index) = best.unwrap();

    let params = bounds.to_natural(&z_best);
    let detail = eval_residuals(&views, model, &params, pricer)?;
    debug_assert!((detail.sum_sq() - f_best).abs() <= 1e-9 * f_best.max(1e-30));
    Ok(CalibrationResult {
        params,
        rel_rmse: f_best.sqrt(),
        residuals: detail.residuals,
        iterations,
        converged,
        clamped_quotes: detail.clamped,
        failed_quotes: detail.failed,
        n_quotes: views.len(),
        start_index,
    })
}

/// One projected-LM run. Returns (squared loss, argmin, iterations,
/// converged).
#[allow(clippy::too_many_arguments)]
fn lm_minimize(
    views: &[QuoteView],
    model: Model,
    pricer: &PricerSpec,
    bounds: &CalibrationBounds,
    z0: &[f64],
    lo: &[f64],
    hi: &[f64],
    opts: &CalibrateOptions,
) -> Result<(f64, Vec<f64>, usize, bool)> {
    let k = z0.len();
    let n = views.len();
    let eval = |z: &[f64]| -> Result<(DVector<f64>, f64)> {
        let detail = eval_residuals(views, model, &bounds.to_natural(z), pricer)?;
        let r = DVector::from_vec(detail.residuals);
        let f = r.norm_squared();
        Ok((r, f))
    };

    let mut z = z0.to_vec();
    let (mut r, mut f) = eval(&z)?;
    if !f.is_finite() {
        return Err(Error::NonFiniteLoss(format!(
            "objective not finite at start {z:?}"
        )));
    }
    let mut mu = opts.mu0;
    let mut iterations = 0;
    let mut converged = false;

    'outer: for _ in 0..opts.max_iters {
        // Finite-difference residual Jacobian with projected bumps: at a
        // bound face the difference degrades to one-sided automatically.
        let mut jac = DMatrix::zeros(n, k);
        for j in 0..k {
            let h = (1e-6 * (hi[j] - lo[j])).max(1e-9);
            let mut zp = z.clone();
            zp[j] = (z[j] + h).min(hi[j]);
            let mut zm = z.clone();
            zm[j] = (z[j] - h).max(lo[j]);
            let denom = zp[j] - zm[j];
            if denom == 0.0 {
                continue; // degenerate (point-like) coordinate
            }
            let (rp, _) = eval(&zp)?;
            let (rm, _) = eval(&zm)?;
            jac.set_column(j, &((rp - rm) / denom));
        }
        let g = jac.transpose() * &r;
        let h_mat = jac.transpose() * &jac;

        loop {
            let mut a = h_mat.clone();
            for i in 0..k {
                a[(i, i)] += mu;
            }
            let step = Cholesky::new(a).map(|c| c.solve(&(-&g)));
            let accepted = match step {
                None => None,
                Some(p) => {
                    let mut zt = z.clone();
                    for j in 0..k {
                        zt[j] = (z[j] + p[j]).clamp(lo[j], hi[j]);
                    }
                    let (rt, ft) = eval(&zt)?;
                    (ft.is_finite() && ft < f).then_some((zt, rt, ft))
                }
            };
            match accepted {
                Some((zt, rt, ft)) => {
                    let df = f - ft;
                    let dz: f64 = z
                        .iter()
                        .zip(&zt)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    z = zt;
                    r = rt;
                    f = ft;
                    iterations += 1;
                    mu = (mu * 0.1).max(opts.mu_min);
                    if df <= opts.fun_tol * f.max(1e-300) || dz <= opts.step_tol {
                        converged = true;
                        break 'outer;
                    }
                    break;
                }
                None => {
                    mu *= 10.0;
                    if mu > opts.mu_max {
                        // No direction improves: either a (local) minimum
                        // pressed against the box or noise floor reached.
                        converged = true;
                        break 'outer;
                    }
                }
            }
        }
    }
    Ok((f, z, iterations, converged))
}
