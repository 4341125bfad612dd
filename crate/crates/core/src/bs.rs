//! Black-Scholes utilities: normal CDF, closed-form prices, implied vol.
//!
//! These are reporting and cross-checking aids. Pricing in this crate is
//! Monte Carlo; Black-Scholes enters as the zero-GARCH limit (constant
//! volatility collapses the dynamics onto lognormal returns) and as the
//! common yardstick when plotting model against market quotes.

use crate::error::{Error, Result};
use crate::OptionKind;

/// Standard normal CDF via the rational approximations of West (2005),
/// accurate to ~1e-15 over the whole line.
pub fn normal_cdf(x: f64) -> f64 {
    let xabs = x.abs();
    if xabs > 37.0 {
        return if x > 0.0 { 1.0 } else { 0.0 };
    }
    let e = (-0.5 * xabs * xabs).exp();
    let cum = if xabs < 7.071067811865475 {
        let num = ((((((3.52624965998911e-2 * xabs + 0.700383064443688) * xabs
            + 6.37396220353165)
            * xabs
            + 33.912866078383)
            * xabs
            + 112.079291497871)
            * xabs
            + 221.213596169931)
            * xabs
            + 220.206867912376)
            * e;
        let den = ((((((8.83883476483184e-2 * xabs + 1.75566716318264) * xabs
            + 16.064177579207)
            * xabs
            + 86.7807322029461)
            * xabs
            + 296.564248779674)
            * xabs
            + 637.333633378831)
            * xabs
            + 793.826512519948)
            * xabs
            + 440.413735824752;
        num / den
    } else {
        let mut b = xabs + 0.65;
        b = xabs + 4.0 / b;
        b = xabs + 3.0 / b;
        b = xabs + 2.0 / b;
        b = xabs + 1.0 / b;
        e / (b * 2.506628274631000502)
    };
    if x > 0.0 {
        1.0 - cum
    } else {
        cum
    }
}

fn validate_contract(spot: f64, strike: f64, tau: f64) -> Result<()> {
    if !(spot > 0.0 && strike > 0.0 && tau > 0.0) {
        return Err(Error::InvalidParams(format!(
            "need positive spot/strike/maturity, got {spot}/{strike}/{tau}"
        )));
    }
    Ok(())
}

/// Black-Scholes price of a European option. `vol = 0` returns the
/// discounted intrinsic value (the zero-volatility limit).
pub fn bs_price(
    kind: OptionKind,
    spot: f64,
    strike: f64,
    rate: f64,
    vol: f64,
    tau: f64,
) -> Result<f64> {
    validate_contract(spot, strike, tau)?;
    if vol < 0.0 {
        return Err(Error::InvalidParams(format!("negative volatility {vol}")));
    }
    let disc_k = strike * (-rate * tau).exp();
    if vol == 0.0 {
        return Ok(match kind {
            OptionKind::Call => (spot - disc_k).max(0.0),
            OptionKind::Put => (disc_k - spot).max(0.0),
        });
    }
    let sq = vol * tau.sqrt();
    let d1 = ((spot / strike).ln() + (rate + 0.5 * vol * vol) * tau) / sq;
    let d2 = d1 - sq;
    Ok(match kind {
        OptionKind::Call => spot * normal_cdf(d1) - disc_k * normal_cdf(d2),
        OptionKind::Put => disc_k * normal_cdf(-d2) - spot * normal_cdf(-d1),
    })
}

/// Volatility bisection bracket; quotes outside the prices this spans have
/// no implied volatility worth reporting.
pub const IMPLIED_VOL_BRACKET: (f64, f64) = (1.0e-4, 5.0);

/// Back out the Black-Scholes volatility that reproduces `price`. Bisection
/// on [`IMPLIED_VOL_BRACKET`]; errors if the price falls outside the
/// arbitrage bounds or the bracket.
pub fn implied_vol(
    kind: OptionKind,
    price: f64,
    spot: f64,
    strike: f64,
    rate: f64,
    tau: f64,
) -> Result<f64> {
    validate_contract(spot, strike, tau)?;
    let (mut lo, mut hi) = IMPLIED_VOL_BRACKET;
    let f = |v: f64| bs_price(kind, spot, strike, rate, v, tau).map(|p| p - price);
    let (flo, fhi) = (f(lo)?, f(hi)?);
    if flo > 0.0 || fhi < 0.0 {
        return Err(Error::Numeric(format!(
            "price {price} not bracketed by volatilities in [{}, {}]",
            lo, hi
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid)? <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
