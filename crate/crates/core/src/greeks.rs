//! Finite-difference sensitivities of the dollar option price.
//!
//! The price is reconstructed from the normalized surface as
//! `V(S, K, tau, r) = S * exp(f_kind(m, tau, theta))` with forward moneyness
//! `m = K exp(-r tau) / S`, where `f_kind` is the surrogate net matching the
//! option kind (the call net for calls, the put net for puts, regardless of
//! moneyness). Monte Carlo evaluation is available through the same
//! interface with one shared seed, so every bump reuses the same random
//! paths; outside degenerate parameter corners it is still noise-dominated
//! at practical path counts and is meant for research, not reporting.
//!
//! Sign convention: `theta` here is `dV/dtau` per year, the sensitivity to
//! *remaining* maturity. The market's time-decay quote is its negative.
//! No vega is reported: volatility is a state variable of these models, not
//! a parameter.

use crate::calibration::PricerSpec;
use crate::error::{Error, Result};
use crate::garch::{price_mcs, PricingRequest, RiskNeutralParams, TRADING_DAYS};
use crate::{Model, OptionKind};

/// Bump sizes for the central differences. `h_spot_rel` is relative to the
/// spot; `h_tau` (years) and `h_rate` (absolute) are used as-is.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GreeksOptions {
    pub h_spot_rel: f64,
    pub h_tau: f64,
    pub h_rate: f64,
}

impl Default for GreeksOptions {
    fn default() -> Self {
        Self {
            h_spot_rel: 1e-4,
            h_tau: 1.0 / TRADING_DAYS,
            h_rate: 1e-4,
        }
    }
}

/// Sensitivities at one contract point, with the bump sizes that produced
/// them. `theta` follows the `dV/dtau` convention (see the module docs).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GreeksReport {
    /// Dollar price at the base point.
    pub price: f64,
    /// dV/dS.
    pub delta: f64,
    /// d2V/dS2.
    pub gamma: f64,
    /// dV/dtau, per year of remaining maturity.
    pub theta: f64,
    /// dV/dr, per unit of rate.
    pub rho: f64,
    pub h_spot: f64,
    pub h_tau: f64,
    pub h_rate: f64,
}

/// Dollar price of one option under the given pricer.
fn dollar_value(
    model: Model,
    kind: OptionKind,
    spot: f64,
    strike: f64,
    tau: f64,
    rate: f64,
    theta: &[f64],
    pricer: &PricerSpec,
) -> Result<f64> {
    let m = strike * (-rate * tau).exp() / spot;
    match pricer {
        PricerSpec::Ann { call, put } => {
            let net = match kind {
                OptionKind::Call => call,
                OptionKind::Put => put,
            };
            let mut x = Vec::with_capacity(2 + theta.len());
            x.push(m);
            x.push(tau);
            x.extend_from_slice(theta);
            net.clamp_input(&mut x)?;
            Ok(spot * net.forward(&x)?.exp())
        }
        PricerSpec::Mcs { n_paths, seed } => {
            let params = RiskNeutralParams::from_slice(model, theta)?;
            let req = PricingRequest {
                moneyness: m,
                tau,
                n_paths: *n_paths,
                seed: *seed,
                kind,
            };
            Ok(spot * price_mcs(&params, &req)?)
        }
    }
}

/// Finite-difference Greeks with the default bump sizes (relative 1e-4 in
/// spot, one trading day in maturity, 1e-4 in rate).
#[allow(clippy::too_many_arguments)]
pub fn greeks(
    model: Model,
    spot: f64,
    strike: f64,
    tau: f64,
    rate: f64,
    theta: &[f64],
    kind: OptionKind,
    pricer: &PricerSpec,
) -> Result<GreeksReport> {
    greeks_with(
        model,
        spot,
        strike,
        tau,
        rate,
        theta,
        kind,
        pricer,
        &GreeksOptions::default(),
    )
}

/// [`greeks`] with explicit bump sizes. Delta and gamma come from one
/// central-difference stencil in the spot; theta is central in maturity
/// unless the contract is within one bump of expiry, where it degrades to a
/// forward difference; rho is central in the rate. Monte Carlo pricers keep
/// their seed across bumps, so differences cancel the common noise.
#[allow(clippy::too_many_arguments)]
pub fn greeks_with(
    model: Model,
    spot: f64,
    strike: f64,
    tau: f64,
    rate: f64,
    theta: &[f64],
    kind: OptionKind,
    pricer: &PricerSpec,
    opts: &GreeksOptions,
) -> Result<GreeksReport> {
    if !(spot > 0.0) || !(strike > 0.0) || !(tau > 0.0) || !rate.is_finite() {
        return Err(Error::InvalidParams(format!(
            "need spot > 0, strike > 0, tau > 0, finite rate; got {spot}, {strike}, {tau}, {rate}"
        )));
    }
    if theta.len() != model.param_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.param_dim(),
            got: theta.len(),
        });
    }
    if !(opts.h_spot_rel > 0.0) || !(opts.h_tau > 0.0) || !(opts.h_rate > 0.0) {
        return Err(Error::InvalidParams("bump sizes must be positive".into()));
    }

    let value = |s: f64, t: f64, r: f64| dollar_value(model, kind, s, strike, t, r, theta, pricer);

    let h_s = opts.h_spot_rel * spot;
    let v0 = value(spot, tau, rate)?;
    let v_up = value(spot + h_s, tau, rate)?;
    let v_dn = value(spot - h_s, tau, rate)?;
    let delta = (v_up - v_dn) / (2.0 * h_s);
    let gamma = (v_up - 2.0 * v0 + v_dn) / (h_s * h_s);

    let h_t = opts.h_tau;
    let theta_greek = if tau - h_t > 1e-12 {
        (value(spot, tau + h_t, rate)? - value(spot, tau - h_t, rate)?) / (2.0 * h_t)
    } else {
        (value(spot, tau + h_t, rate)? - v0) / h_t
    };

    let h_r = opts.h_rate;
    let rho = (value(spot, tau, rate + h_r)? - value(spot, tau, rate - h_r)?) / (2.0 * h_r);

    Ok(GreeksReport {
        price: v0,
        delta,
        gamma,
        theta: theta_greek,
        rho,
        h_spot: h_s,
        h_tau: h_t,
        h_rate: h_r,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fnn::Network;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    /// Near-zero volatility parameters: prices collapse to discounted
    /// intrinsic value and Monte Carlo differences carry no noise.
    fn degenerate_theta() -> [f64; 5] {
        [0.0, 0.2, 0.0, 0.0, 1e-6]
    }

    #[test]
    fn deep_itm_call_is_linear_in_spot() {
        let pricer = PricerSpec::Mcs { n_paths: 2000, seed: 5 };
        let spot = 100.0;
        let tau = 0.4_f64;
        let rate = 0.02;
        // m = 0.5: strike at half the forward.
        let strike = 0.5 * spot * (rate * tau).exp();
        let g = greeks(
            Model::Duan,
            spot,
            strike,
            tau,
            rate,
            &degenerate_theta(),
            OptionKind::Call,
            &pricer,
        )
        .unwrap();
        assert_abs_diff_eq!(g.delta, 1.0, epsilon = 1e-2);
        assert_abs_diff_eq!(g.gamma, 0.0, epsilon = 1e-2);
        // V = S - K exp(-r tau): rho = tau * K exp(-r tau).
        assert_relative_eq!(g.rho, tau * strike * (-rate * tau).exp(), max_relative = 1e-2);
        assert_relative_eq!(g.price, spot - strike * (-rate * tau).exp(), max_relative = 1e-4);
    }

    #[test]
    fn deep_otm_call_has_vanishing_sensitivities() {
        let pricer = PricerSpec::Mcs { n_paths: 2000, seed: 5 };
        let spot = 100.0;
        let tau = 0.4_f64;
        let rate = 0.02;
        let strike = 1.5 * spot * (rate * tau).exp();
        let g = greeks(
            Model::Duan,
            spot,
            strike,
            tau,
            rate,
            &degenerate_theta(),
            OptionKind::Call,
            &pricer,
        )
        .unwrap();
        assert_abs_diff_eq!(g.delta, 0.0, epsilon = 1e-2);
        assert_abs_diff_eq!(g.gamma, 0.0, epsilon = 1e-2);
        assert_abs_diff_eq!(g.rho, 0.0, epsilon = 1e-2);
        assert_eq!(g.price, 0.0);
    }

    #[test]
    fn deep_itm_put_has_unit_negative_delta() {
        let pricer = PricerSpec::Mcs { n_paths: 2000, seed: 5 };
        let spot = 100.0;
        let tau = 0.4_f64;
        let rate = 0.02;
        let strike = 1.5 * spot * (rate * tau).exp();
        let g = greeks(
            Model::Duan,
            spot,
            strike,
            tau,
            rate,
            &degenerate_theta(),
            OptionKind::Put,
            &pricer,
        )
        .unwrap();
        assert_abs_diff_eq!(g.delta, -1.0, epsilon = 1e-2);
        assert_abs_diff_eq!(g.gamma, 0.0, epsilon = 1e-2);
    }

    /// A smooth random surrogate pair over a box wide enough that no bump
    /// leaves it.
    fn smooth_pricer_nets(seed: u64) -> (Network, Network) {
        let d = Model::Duan.input_dim();
        let center = [1.0, 0.6, 5e-6, 0.25, 0.75, 0.4, 0.02];
        let halfspan = [0.9, 0.55, 5e-6, 0.15, 0.25, 0.4, 0.02];
        let mut call = Network::with_topology(&[d, 6, 1], seed).unwrap();
        let mut put = Network::with_topology(&[d, 6, 1], seed + 1).unwrap();
        call.set_normalization(&center, &halfspan).unwrap();
        put.set_normalization(&center, &halfspan).unwrap();
        (call, put)
    }

    #[test]
    fn gamma_matches_the_first_difference_of_delta() {
        let (call, put) = smooth_pricer_nets(31);
        let pricer = PricerSpec::Ann { call: &call, put: &put };
        let theta = [1e-6, 0.2, 0.7, 0.3, 0.01];
        let spot = 100.0;
        let rate = 0.01;
        for i in 0..20 {
            let m = 0.8 + 0.02 * i as f64;
            let tau = 0.3 + 0.02 * i as f64;
            let strike = m * spot * (rate * tau).exp();
            let g = greeks(Model::Duan, spot, strike, tau, rate, &theta, OptionKind::Call, &pricer).unwrap();
            // First difference of delta over a wider stencil.
            let dh = 10.0 * g.h_spot;
            let d_at = |s: f64| {
                greeks(Model::Duan, s, strike, tau, rate, &theta, OptionKind::Call, &pricer)
                    .unwrap()
                    .delta
            };
            let gamma_from_delta = (d_at(spot + dh) - d_at(spot - dh)) / (2.0 * dh);
            assert_relative_eq!(g.gamma, gamma_from_delta, max_relative = 0.1);
        }
    }

    #[test]
    fn delta_is_stable_under_bump_halving() {
        let (call, put) = smooth_pricer_nets(37);
        let pricer = PricerSpec::Ann { call: &call, put: &put };
        let theta = [1e-6, 0.2, 0.7, 0.3, 0.01];
        let spot = 100.0;
        let rate = 0.01;
        let strike = spot * (rate * 0.5f64).exp(); // ATM forward
        let base = greeks(Model::Duan, spot, strike, 0.5, rate, &theta, OptionKind::Call, &pricer).unwrap();
        let halved = greeks_with(
            Model::Duan,
            spot,
            strike,
            0.5,
            rate,
            &theta,
            OptionKind::Call,
            &pricer,
            &GreeksOptions { h_spot_rel: 0.5e-4, ..GreeksOptions::default() },
        )
        .unwrap();
        assert_relative_eq!(base.delta, halved.delta, max_relative = 0.01);
        assert_eq!(halved.h_spot, 0.5 * base.h_spot);
    }

    #[test]
    fn theta_uses_a_forward_difference_at_one_day_to_expiry() {
        let pricer = PricerSpec::Mcs { n_paths: 500, seed: 9 };
        let spot = 100.0;
        let rate = 0.0;
        let tau = 1.0 / TRADING_DAYS;
        let g = greeks(
            Model::Duan,
            spot,
            90.0,
            tau,
            rate,
            &degenerate_theta(),
            OptionKind::Call,
            &pricer,
        )
        .unwrap();
        // V is (almost exactly) S - K at both tau and tau + h: flat.
        assert_abs_diff_eq!(g.theta, 0.0, epsilon = 1e-6);
        assert!(g.price > 9.9 && g.price < 10.1);
    }

    #[test]
    fn kind_selects_the_net_not_the_moneyness_side() {
        // Distinct constant nets: requesting a call must use the call net
        // even deep in the money (m < 1), unlike the calibration splice.
        let d = Model::Duan.input_dim();
        let mut call = Network::with_topology(&[d, 3, 1], 0).unwrap();
        let mut put = Network::with_topology(&[d, 3, 1], 1).unwrap();
        for (net, b) in [(&mut call, -1.0f64), (&mut put, -2.0)] {
            let mut flat = net.flat_weights();
            let n = flat.len();
            for i in 0..n {
                flat[i] = 0.0;
            }
            flat[n - 1] = b;
            net.set_flat_weights(&flat).unwrap();
        }
        let pricer = PricerSpec::Ann { call: &call, put: &put };
        let theta = [1e-6, 0.2, 0.7, 0.3, 0.01];
        let g = greeks(Model::Duan, 100.0, 50.0, 0.5, 0.0, &theta, OptionKind::Call, &pricer).unwrap();
        assert_relative_eq!(g.price, 100.0 * (-1.0f64).exp(), max_relative = 1e-12);
        let p = greeks(Model::Duan, 100.0, 50.0, 0.5, 0.0, &theta, OptionKind::Put, &pricer).unwrap();
        assert_relative_eq!(p.price, 100.0 * (-2.0f64).exp(), max_relative = 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let pricer = PricerSpec::Mcs { n_paths: 100, seed: 0 };
        let theta = degenerate_theta();
        assert!(greeks(Model::Duan, -1.0, 90.0, 0.5, 0.0, &theta, OptionKind::Call, &pricer).is_err());
        assert!(greeks(Model::Duan, 100.0, 90.0, 0.0, 0.0, &theta, OptionKind::Call, &pricer).is_err());
        assert!(greeks(Model::Duan, 100.0, 90.0, 0.5, 0.0, &theta[..3], OptionKind::Call, &pricer).is_err());
        assert!(greeks_with(
            Model::Duan,
            100.0,
            90.0,
            0.5,
            0.0,
            &theta,
            OptionKind::Call,
            &pricer,
            &GreeksOptions { h_spot_rel: 0.0, ..GreeksOptions::default() },
        )
        .is_err());
    }
}
