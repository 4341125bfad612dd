//! Standardized classical tempered stable (stdCTS) innovations.
//!
//! The distribution is parameterized by a stability index `alpha` and
//! tempering rates `lambda_plus`, `lambda_minus`, scaled so that the mean is
//! zero and the variance is one. Its characteristic function is
//!
//! ```text
//! log phi(u) = i u (lp^(a-1) - lm^(a-1)) / ((a - 1) D)
//!            + ((lp - iu)^a - lp^a + (lm + iu)^a - lm^a) / (a (a - 1) D)
//! D = lp^(a-2) + lm^(a-2)
//! ```
//!
//! There is no closed-form density or quantile function, so sampling goes
//! through numeric inversion: evaluate the characteristic function on a grid,
//! FFT it to a density, integrate to a CDF, and tabulate the inverse. The
//! exponential moment (log-Laplace transform) `l(x) = log phi(-ix)` exists for
//! `-lambda_minus < x < lambda_plus` and is what makes the martingale
//! correction of the GARCH dynamics computable in closed form.

use num_complex::Complex64;
use rand::Rng;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Tempering rates below this make the tails too heavy for reliable CDF
/// inversion (and sit outside the sampled parameter box anyway).
pub const LAMBDA_MIN: f64 = 0.1;
/// Above this the distribution is numerically Gaussian and the `lambda^alpha`
/// terms overflow long before.
pub const LAMBDA_MAX: f64 = 1.0e6;
/// The characteristic function has a removable singularity at `alpha = 1`;
/// we keep a guard band around it instead of implementing the limit branch.
pub const ALPHA_ONE_GAP: f64 = 1.0e-3;

/// FFT size used by [`sample_stdcts`] and the dataset generator.
pub const DEFAULT_CDF_RESOLUTION: usize = 1 << 16;
/// Hard ceiling for automatic resolution escalation.
pub const MAX_CDF_RESOLUTION: usize = 1 << 22;

/// Recovered density must integrate to 1 within this window before
/// renormalization, otherwise the inversion is rejected.
const MASS_WINDOW: (f64, f64) = (0.999, 1.001);
/// CDF points closer than this to 0 or 1 are dropped from the quantile table;
/// beyond them the table extrapolates linearly.
const TAIL_CUTOFF: f64 = 1.0e-7;
/// Target for |phi| at the edge of the frequency grid; larger values alias.
const ALIAS_TOL: f64 = 1.0e-12;
/// If even the largest grid cannot push |phi| below this, fail fast instead
/// of burning a 4M-point FFT on a hopeless case.
const ALIAS_TOL_AT_CAP: f64 = 1.0e-8;
/// Post-build sanity bounds on the tabulated moments.
const MEAN_TOL: f64 = 0.01;
const VAR_TOL: f64 = 0.02;
/// Fewer usable CDF points than this means the distribution collapsed onto a
/// handful of grid cells and the table would be garbage.
const MIN_TABLE_LEN: usize = 64;
/// Quantile tables are thinned to at most this many knots.
const MAX_TABLE_LEN: usize = 65_536;

/// Parameters of a standardized CTS distribution. Construction validates the
/// admissible region, so a value of this type is always usable.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CtsParams {
    alpha: f64,
    lambda_plus: f64,
    lambda_minus: f64,
}

impl CtsParams {
    pub fn new(alpha: f64, lambda_plus: f64, lambda_minus: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha <= 0.0 || alpha >= 2.0 {
            return Err(Error::InvalidParams(format!(
                "alpha must lie in (0, 2), got {alpha}"
            )));
        }
        if (alpha - 1.0).abs() < ALPHA_ONE_GAP {
            return Err(Error::InvalidParams(format!(
                "alpha = {alpha} is within {ALPHA_ONE_GAP} of the singular point 1"
            )));
        }
        for (name, l) in [("lambda_plus", lambda_plus), ("lambda_minus", lambda_minus)] {
            if !l.is_finite() || !(LAMBDA_MIN..=LAMBDA_MAX).contains(&l) {
                return Err(Error::InvalidParams(format!(
                    "{name} must lie in [{LAMBDA_MIN}, {LAMBDA_MAX:e}], got {l}"
                )));
            }
        }
        Ok(Self {
            alpha,
            lambda_plus,
            lambda_minus,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn lambda_plus(&self) -> f64 {
        self.lambda_plus
    }

    pub fn lambda_minus(&self) -> f64 {
        self.lambda_minus
    }

    /// Coefficients shared by the characteristic function and the
    /// log-Laplace transform:
    /// `log phi(z) = i z drift + scale ((lp - iz)^a - lp^a + (lm + iz)^a - lm^a)`.
    fn coeffs(&self) -> CtsCoeffs {
        let a = self.alpha;
        let lp = self.lambda_plus;
        let lm = self.lambda_minus;
        let d = lp.powf(a - 2.0) + lm.powf(a - 2.0);
        CtsCoeffs {
            alpha: a,
            lp,
            lm,
            lp_a: lp.powf(a),
            lm_a: lm.powf(a),
            drift: (lp.powf(a - 1.0) - lm.powf(a - 1.0)) / ((a - 1.0) * d),
            scale: 1.0 / (a * (a - 1.0) * d),
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct CtsCoeffs {
    alpha: f64,
    lp: f64,
    lm: f64,
    lp_a: f64,
    lm_a: f64,
    drift: f64,
    scale: f64,
}

impl CtsCoeffs {
    fn log_cf(&self, z: Complex64) -> Complex64 {
        let iz = Complex64::new(0.0, 1.0) * z;
        let up = (Complex64::new(self.lp, 0.0) - iz).powf(self.alpha) - self.lp_a;
        let um = (Complex64::new(self.lm, 0.0) + iz).powf(self.alpha) - self.lm_a;
        iz * self.drift + (up + um) * self.scale
    }

    /// Real-argument log-Laplace transform; caller guarantees the domain.
    fn log_laplace(&self, x: f64) -> f64 {
        let up = (self.lp - x).powf(self.alpha) - self.lp_a;
        let um = (self.lm + x).powf(self.alpha) - self.lm_a;
        self.drift * x + self.scale * (up + um)
    }
}

/// Characteristic function `phi(u) = E[exp(i u X)]`.
pub fn cf_stdcts(u: f64, params: &CtsParams) -> Complex64 {
    log_cf_stdcts(Complex64::new(u, 0.0), params).exp()
}

/// Log characteristic function continued to complex arguments. The real axis
/// gives `log phi(u)`; the imaginary axis gives the log-Laplace transform via
/// `l(x) = log_cf_stdcts(-i x)`.
pub fn log_cf_stdcts(z: Complex64, params: &CtsParams) -> Complex64 {
    params.coeffs().log_cf(z)
}

/// Log of the exponential moment, `l(x) = log E[exp(x X)]`. Defined for
/// `-lambda_minus < x < lambda_plus`; outside that strip the moment is
/// infinite and an error is returned.
pub fn log_laplace(x: f64, params: &CtsParams) -> Result<f64> {
    if !(x < params.lambda_plus && x > -params.lambda_minus) {
        return Err(Error::Domain(format!(
            "log-Laplace argument {x} outside (-{}, {})",
            params.lambda_minus, params.lambda_plus
        )));
    }
    Ok(params.coeffs().log_laplace(x))
}

/// Precomputed log-Laplace evaluator for hot loops (one power-law pair per
/// call instead of re-deriving the shared coefficients every step).
#[derive(Clone, Copy, Debug)]
pub struct LogLaplace {
    coeffs: CtsCoeffs,
}

impl LogLaplace {
    pub fn new(params: &CtsParams) -> Self {
        Self {
            coeffs: params.coeffs(),
        }
    }

    /// Upper edge of the domain; arguments must stay strictly below it.
    pub fn upper_limit(&self) -> f64 {
        self.coeffs.lp
    }

    pub fn lower_limit(&self) -> f64 {
        -self.coeffs.lm
    }

    /// Evaluate without a domain check; caller guarantees
    /// `lower_limit < x < upper_limit` (checked in debug builds).
    pub fn eval_unchecked(&self, x: f64) -> f64 {
        debug_assert!(x < self.coeffs.lp && x > -self.coeffs.lm);
        self.coeffs.log_laplace(x)
    }
}

/// Third cumulant (skewness, since the variance is one).
pub fn third_cumulant(params: &CtsParams) -> f64 {
    let a = params.alpha;
    let lp = params.lambda_plus;
    let lm = params.lambda_minus;
    let d = lp.powf(a - 2.0) + lm.powf(a - 2.0);
    (2.0 - a) * (lp.powf(a - 3.0) - lm.powf(a - 3.0)) / d
}

/// Fourth cumulant (excess kurtosis, since the variance is one).
pub fn fourth_cumulant(params: &CtsParams) -> f64 {
    let a = params.alpha;
    let lp = params.lambda_plus;
    let lm = params.lambda_minus;
    let d = lp.powf(a - 2.0) + lm.powf(a - 2.0);
    (2.0 - a) * (3.0 - a) * (lp.powf(a - 4.0) + lm.powf(a - 4.0)) / d
}

/// Tabulated inverse CDF of a stdCTS distribution.
///
/// Knots are (probability, quantile) pairs with strictly increasing
/// probabilities inside `[tail_cutoff, 1 - tail_cutoff]`; between knots the
/// quantile function is linearly interpolated and beyond the outermost knots
/// it is linearly extrapolated with the adjacent segment's slope.
#[derive(Clone, Debug)]
pub struct InverseCdfTable {
    probs: Vec<f64>,
    quants: Vec<f64>,
    /// Guide index: `guide[k]` is the first knot with probability >= k/GUIDE_SIZE,
    /// so a lookup only bisects the short run between two guide entries.
    guide: Vec<u32>,
    params: CtsParams,
    resolution: usize,
    mass: f64,
    mean: f64,
    variance: f64,
}

/// Number of strata in the quantile guide index. 4096 u32 slots stay
/// cache-resident and cut the per-draw search to a couple of probes.
const GUIDE_SIZE: usize = 4096;

impl InverseCdfTable {
    pub fn params(&self) -> &CtsParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// FFT size that produced the table (after any automatic escalation).
    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// Integral of the recovered density before renormalization.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Mean implied by the tabulated quantiles; should be ~0.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Variance implied by the tabulated quantiles; should be ~1.
    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// Map a uniform draw to a stdCTS variate.
    pub fn quantile(&self, u: f64) -> f64 {
        debug_assert!(u.is_finite());
        let p = &self.probs;
        let q = &self.quants;
        let n = p.len();
        // Locate the first knot with probability >= u. The guide brackets it
        // between two entries, leaving only a short run to bisect.
        let hi = if u <= p[0] {
            0
        } else if u > p[n - 1] {
            n
        } else {
            let k = ((u * GUIDE_SIZE as f64) as usize).min(GUIDE_SIZE - 1);
            let lo = self.guide[k] as usize;
            let end = self.guide[k + 1] as usize;
            lo + p[lo..end].partition_point(|&pk| pk < u)
        };
        let (i0, i1) = if hi == 0 {
            (0, 1) // extrapolate left with the first segment
        } else if hi == n {
            (n - 2, n - 1) // extrapolate right with the last segment
        } else {
            (hi - 1, hi)
        };
        let t = (u - p[i0]) / (p[i1] - p[i0]);
        q[i0] + t * (q[i1] - q[i0])
    }

    /// Draw `n` variates from the keyed uniform stream `(seed, 0)`.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = stream_rng(seed, 0);
        (0..n).map(|_| self.quantile(rng.random::<f64>())).collect()
    }
}

/// Invert a characteristic function to a grid CDF by FFT.
///
/// Grid: `x_j = (j - n/2) dx`, `u_k = (k - n/2) du` with `dx du = 2 pi / n`,
/// so the span `[-span, span]` in x fixes `du = pi / span` and the frequency
/// reach grows linearly with `n`. Returns the x grid, the renormalized CDF,
/// and the raw mass (integral before renormalization).
fn invert_cf(
    phi: impl Fn(f64) -> Complex64,
    n: usize,
    span: f64,
) -> (Vec<f64>, Vec<f64>, f64) {
    assert!(n >= 8 && n.is_power_of_two(), "fft size must be a power of two");
    let dx = 2.0 * span / n as f64;
    let du = std::f64::consts::PI / span;
    let half = (n / 2) as i64;

    let mut buf: Vec<Complex64> = (0..n)
        .map(|k| {
            let u = (k as i64 - half) as f64 * du;
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            phi(u) * sign
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);

    // f(x_j) = du/(2 pi) * (-1)^j * Re(FFT[phi(u_k) (-1)^k])_j, valid for n
    // divisible by 4 (guaranteed: power of two >= 8). Negative excursions are
    // inversion noise; clamp them before integrating.
    let scale = du / (2.0 * std::f64::consts::PI);
    let density: Vec<f64> = buf
        .iter()
        .enumerate()
        .map(|(j, v)| {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            (scale * sign * v.re).max(0.0)
        })
        .collect();

    let xs: Vec<f64> = (0..n).map(|j| (j as i64 - half) as f64 * dx).collect();
    let mut cdf = Vec::with_capacity(n);
    let mut acc = 0.0;
    cdf.push(0.0);
    for j in 1..n {
        acc += 0.5 * dx * (density[j - 1] + density[j]);
        cdf.push(acc);
    }
    let mass = acc;
    if mass > 0.0 {
        for c in cdf.iter_mut() {
            *c /= mass;
        }
    }
    (xs, cdf, mass)
}

/// Half-width of the x grid: wide enough that the truncated tail mass is
/// negligible both under the tempered-exponential tail (~exp(-lambda x)) and
/// under the moment-driven bulk spread.
fn grid_span(params: &CtsParams) -> f64 {
    let c3 = third_cumulant(params).abs();
    let c4 = fourth_cumulant(params).max(0.0);
    let bulk = 10.0 * (1.0 + c3 + c4.sqrt());
    let tail = 30.0 / params.lambda_plus.min(params.lambda_minus);
    bulk.max(tail).clamp(8.0, 5000.0)
}

/// Build an inverse-CDF table for a stdCTS distribution by FFT inversion of
/// its characteristic function.
///
/// `resolution` is the starting FFT size (rounded up to a power of two; use
/// [`DEFAULT_CDF_RESOLUTION`] unless profiling says otherwise). If the
/// characteristic function has not decayed enough at the grid edge, or the
/// recovered density misses the mass window, the size escalates automatically
/// up to [`MAX_CDF_RESOLUTION`] before the build is rejected. Slowly decaying
/// cases (small `alpha` combined with small tempering) are genuinely
/// unrepresentable on any affordable grid and come back as
/// [`Error::InversionFailure`]; callers sampling a parameter box are expected
/// to skip them.
pub fn build_inverse_cdf(params: &CtsParams, resolution: usize) -> Result<InverseCdfTable> {
    let span = grid_span(params);
    let du = std::f64::consts::PI / span;
    let coeffs = params.coeffs();
    let edge_decay = |n: usize| {
        let u_max = (n / 2) as f64 * du;
        coeffs.log_cf(Complex64::new(u_max, 0.0)).re.exp()
    };

    let mut n = resolution.next_power_of_two().clamp(1 << 10, MAX_CDF_RESOLUTION);
    loop {
        while n < MAX_CDF_RESOLUTION && edge_decay(n) > ALIAS_TOL {
            n *= 2;
        }
        if n >= MAX_CDF_RESOLUTION && edge_decay(n) > ALIAS_TOL_AT_CAP {
            return Err(Error::InversionFailure(format!(
                "characteristic function decays too slowly: |phi| = {:.3e} at the \
                 edge of the largest grid (alpha = {}, lambda = {}/{})",
                edge_decay(MAX_CDF_RESOLUTION),
                params.alpha,
                params.lambda_plus,
                params.lambda_minus,
            )));
        }

        let (xs, cdf, mass) = invert_cf(|u| coeffs.log_cf(Complex64::new(u, 0.0)).exp(), n, span);
        if !(MASS_WINDOW.0..=MASS_WINDOW.1).contains(&mass) {
            if n < MAX_CDF_RESOLUTION {
                n = (n * 4).min(MAX_CDF_RESOLUTION);
                continue;
            }
            return Err(Error::InversionFailure(format!(
                "recovered density integrates to {mass:.6} outside [{}, {}] \
                 (alpha = {}, lambda = {}/{})",
                MASS_WINDOW.0, MASS_WINDOW.1, params.alpha, params.lambda_plus, params.lambda_minus,
            )));
        }

        return finish_table(params, n, mass, &xs, &cdf);
    }
}

fn finish_table(
    params: &CtsParams,
    resolution: usize,
    mass: f64,
    xs: &[f64],
    cdf: &[f64],
) -> Result<InverseCdfTable> {
    // Keep strictly increasing CDF values inside the tail cutoffs; plateaus
    // (regions of zero recovered density) collapse to their left edge.
    let mut probs = Vec::new();
    let mut quants = Vec::new();
    let mut last = 0.0;
    for (&x, &p) in xs.iter().zip(cdf) {
        if p >= TAIL_CUTOFF && p <= 1.0 - TAIL_CUTOFF && p > last {
            probs.push(p);
            quants.push(x);
            last = p;
        }
    }
    if probs.len() < MIN_TABLE_LEN {
        return Err(Error::InversionFailure(format!(
            "only {} usable cdf points (alpha = {}, lambda = {}/{})",
            probs.len(),
            params.alpha,
            params.lambda_plus,
            params.lambda_minus,
        )));
    }
    if probs.len() > MAX_TABLE_LEN {
        let stride = probs.len().div_ceil(MAX_TABLE_LEN);
        let keep_last = (probs.len() - 1) % stride != 0;
        let (lp, lq) = (*probs.last().unwrap(), *quants.last().unwrap());
        probs = probs.into_iter().step_by(stride).collect();
        quants = quants.into_iter().step_by(stride).collect();
        if keep_last {
            probs.push(lp);
            quants.push(lq);
        }
    }

    // Moments of the piecewise-linear quantile representation, with the cut
    // tails folded in as point masses at the outermost knots.
    let mut mean = probs[0] * quants[0] + (1.0 - probs[probs.len() - 1]) * quants[quants.len() - 1];
    let mut e2 = probs[0] * quants[0].powi(2)
        + (1.0 - probs[probs.len() - 1]) * quants[quants.len() - 1].powi(2);
    for i in 1..probs.len() {
        let dp = probs[i] - probs[i - 1];
        let (a, b) = (quants[i - 1], quants[i]);
        mean += dp * 0.5 * (a + b);
        e2 += dp * (a * a + a * b + b * b) / 3.0;
    }
    let variance = e2 - mean * mean;
    if mean.abs() > MEAN_TOL || (variance - 1.0).abs() > VAR_TOL {
        return Err(Error::InversionFailure(format!(
            "tabulated moments off target: mean = {mean:.4e}, variance = {variance:.6} \
             (alpha = {}, lambda = {}/{})",
            params.alpha, params.lambda_plus, params.lambda_minus,
        )));
    }

    let guide = (0..=GUIDE_SIZE)
        .map(|k| probs.partition_point(|&p| p < k as f64 / GUIDE_SIZE as f64) as u32)
        .collect();

    Ok(InverseCdfTable {
        probs,
        quants,
        guide,
        params: *params,
        resolution,
        mass,
        mean,
        variance,
    })
}

/// Draw `n` stdCTS variates: build the inverse-CDF table at the default
/// resolution and push a keyed uniform stream through it. Deterministic in
/// `(params, n, seed)`.
pub fn sample_stdcts(params: &CtsParams, n: usize, seed: u64) -> Result<Vec<f64>> {
    let table = build_inverse_cdf(params, DEFAULT_CDF_RESOLUTION)?;
    Ok(table.sample(n, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    fn p(alpha: f64, lp: f64, lm: f64) -> CtsParams {
        CtsParams::new(alpha, lp, lm).unwrap()
    }

    #[test]
    fn rejects_parameters_outside_admissible_region() {
        assert!(CtsParams::new(0.0, 1.0, 1.0).is_err());
        assert!(CtsParams::new(2.0, 1.0, 1.0).is_err());
        assert!(CtsParams::new(1.0, 1.0, 1.0).is_err());
        assert!(CtsParams::new(1.0005, 1.0, 1.0).is_err(), "guard band around alpha = 1");
        assert!(CtsParams::new(1.5, 0.05, 1.0).is_err(), "lambda below floor");
        assert!(CtsParams::new(1.5, 1.0, 2.0e6).is_err(), "lambda above cap");
        assert!(CtsParams::new(f64::NAN, 1.0, 1.0).is_err());
        assert!(CtsParams::new(1.5, 2.0, 3.0).is_ok());
    }

    #[test]
    fn cf_at_zero_is_one() {
        for params in [p(0.8, 1.0, 10.0), p(1.5, 2.0, 2.0), p(1.99, 0.1, 5.0)] {
            let v = cf_stdcts(0.0, &params);
            assert_abs_diff_eq!(v.re, 1.0, epsilon = 1e-15);
            assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-15);
        }
    }

    // Reference values from an independent high-precision evaluation of the
    // closed form (50-digit arithmetic, then rounded to f64).
    #[test]
    fn cf_matches_reference_values() {
        let v = cf_stdcts(1.0, &p(1.5, 1.0, 1.0));
        assert_relative_eq!(v.re, 0.6217559274856517, max_relative = 1e-14);
        assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-16); // symmetric case

        let v = cf_stdcts(0.7, &p(0.8, 2.0, 3.0));
        assert_relative_eq!(v.re, 0.7865492152027435, max_relative = 1e-14);
        assert_relative_eq!(v.im, -0.009310782019302963, max_relative = 1e-13);
    }

    #[test]
    fn cf_derivative_at_zero_gives_zero_mean_unit_variance() {
        // log phi'(0) = i * mean = 0, log phi''(0) = -variance = -1.
        for params in [p(1.5, 2.0, 3.0), p(0.8, 1.0, 10.0), p(1.9, 0.5, 0.5)] {
            let h = 1e-4;
            let lc = |u: f64| log_cf_stdcts(Complex64::new(u, 0.0), &params);
            let d1 = (lc(h) - lc(-h)) / (2.0 * h);
            let d2 = (lc(h) - 2.0 * lc(0.0) + lc(-h)) / (h * h);
            assert_abs_diff_eq!(d1.im, 0.0, epsilon = 1e-6); // mean
            assert_abs_diff_eq!(d2.re, -1.0, epsilon = 1e-6); // -variance
        }
    }

    #[test]
    fn log_laplace_matches_reference_values() {
        assert_abs_diff_eq!(log_laplace(0.0, &p(1.5, 2.0, 2.0)).unwrap(), 0.0, epsilon = 1e-15);
        // Small-x expansion l(x) ~ x^2/2 for the symmetric case. The value
        // comes from cancelling O(1) power terms down to 5e-5, so rounding
        // in powf leaves ~1e-11 relative error on the result.
        assert_relative_eq!(
            log_laplace(0.01, &p(1.5, 2.0, 2.0)).unwrap(),
            5.000007812556967e-5,
            max_relative = 1e-9
        );
        assert_relative_eq!(
            log_laplace(0.5, &p(0.8, 1.5, 4.0)).unwrap(),
            0.13935064117244807,
            max_relative = 1e-14
        );
    }

    #[test]
    fn log_laplace_rejects_arguments_outside_strip() {
        let params = p(1.5, 2.0, 3.0);
        assert!(log_laplace(2.0, &params).is_err());
        assert!(log_laplace(2.5, &params).is_err());
        assert!(log_laplace(-3.0, &params).is_err());
        assert!(log_laplace(1.999, &params).is_ok());
        assert!(log_laplace(-2.999, &params).is_ok());
    }

    #[test]
    fn log_laplace_is_analytic_continuation_of_cf() {
        let cases = [
            (p(1.5, 2.0, 3.0), 0.7),
            (p(0.8, 1.0, 10.0), -0.4),
            (p(1.9, 0.5, 0.5), 0.3),
            (p(0.3, 5.0, 2.0), 1.2),
        ];
        for (params, x) in cases {
            let direct = log_laplace(x, &params).unwrap();
            let continued = log_cf_stdcts(Complex64::new(0.0, -x), &params);
            assert_relative_eq!(direct, continued.re, max_relative = 1e-12);
            assert_abs_diff_eq!(continued.im, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn precomputed_evaluator_agrees_with_checked_form() {
        let params = p(0.8, 1.5, 4.0);
        let ll = LogLaplace::new(&params);
        assert_eq!(ll.upper_limit(), 1.5);
        assert_eq!(ll.lower_limit(), -4.0);
        for x in [-3.9, -1.0, 0.0, 0.02, 1.49] {
            assert_eq!(ll.eval_unchecked(x), log_laplace(x, &params).unwrap());
        }
    }

    #[test]
    fn cumulants_match_reference_values() {
        // Same independent high-precision source as the CF values.
        assert_relative_eq!(
            third_cumulant(&p(0.8, 1.0, 10.0)),
            1.1216567551043468,
            max_relative = 1e-14
        );
        assert_relative_eq!(fourth_cumulant(&p(1.5, 2.0, 2.0)), 0.1875, max_relative = 1e-14);
        assert_relative_eq!(
            fourth_cumulant(&p(0.8, 1.0, 10.0)),
            2.4848803751066066,
            max_relative = 1e-14
        );
        // Symmetric tempering kills the third cumulant.
        assert_abs_diff_eq!(third_cumulant(&p(1.5, 2.0, 2.0)), 0.0, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn cf_modulus_bounded_and_hermitian(
            alpha in 0.05f64..1.95,
            lp in 0.1f64..20.0,
            lm in 0.1f64..20.0,
            u in -50.0f64..50.0,
        ) {
            prop_assume!((alpha - 1.0).abs() >= ALPHA_ONE_GAP);
            let params = p(alpha, lp, lm);
            let v = cf_stdcts(u, &params);
            prop_assert!(v.norm() <= 1.0 + 1e-12);
            let w = cf_stdcts(-u, &params);
            prop_assert!((w - v.conj()).norm() <= 1e-12 * v.norm().max(1e-300));
        }
    }

    // --- CDF inversion ---

    #[test]
    fn inversion_recovers_gaussian_cdf() {
        // phi(u) = exp(-u^2/2) is the standard normal; check the recovered
        // CDF against reference normal CDF values. The grid must be fine
        // enough that cumulative-trapezoid bias (~ f'(x) dx^2 / 12) stays
        // below the assertion tolerance.
        let (xs, cdf, mass) = invert_cf(
            |u| Complex64::new((-0.5 * u * u).exp(), 0.0),
            1 << 14,
            10.0,
        );
        assert!((mass - 1.0).abs() < 1e-9, "mass = {mass}");
        let lookup = |x: f64| {
            let i = xs.partition_point(|&v| v < x);
            let t = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
            cdf[i - 1] + t * (cdf[i] - cdf[i - 1])
        };
        let refs = [
            (-1.96, 0.024997895148220434),
            (-0.5, 0.3085375387259869),
            (0.0, 0.5),
            (0.5, 0.6914624612740131),
            (1.0, 0.8413447460685429),
            (2.3, 0.9892758899783242),
        ];
        for (x, want) in refs {
            assert_abs_diff_eq!(lookup(x), want, epsilon = 1e-7);
        }
    }

    #[test]
    fn near_gaussian_cts_table_matches_normal_quantiles() {
        // Heavy tempering (lambda = 50) makes the CTS numerically normal.
        let table = build_inverse_cdf(&p(1.9, 50.0, 50.0), DEFAULT_CDF_RESOLUTION).unwrap();
        let refs = [
            (0.024997895148220434, -1.96),
            (0.3085375387259869, -0.5),
            (0.5, 0.0),
            (0.8413447460685429, 1.0),
        ];
        for (u, want) in refs {
            assert_abs_diff_eq!(table.quantile(u), want, epsilon = 2e-3);
        }
    }

    #[test]
    fn table_moments_and_symmetry() {
        let table = build_inverse_cdf(&p(1.5, 2.0, 2.0), DEFAULT_CDF_RESOLUTION).unwrap();
        assert!(table.mean().abs() < 1e-3, "mean = {}", table.mean());
        assert!((table.variance() - 1.0).abs() < 5e-3, "var = {}", table.variance());
        assert!((table.mass() - 1.0).abs() < 1e-3);
        // Symmetric parameters: median at zero, symmetric quantiles.
        assert_abs_diff_eq!(table.quantile(0.5), 0.0, epsilon = 1e-3);
        assert_abs_diff_eq!(
            table.quantile(0.1) + table.quantile(0.9),
            0.0,
            epsilon = 1e-3
        );
    }

    #[test]
    fn quantiles_are_monotone_and_extrapolate_tails() {
        let table = build_inverse_cdf(&p(0.8, 1.0, 10.0), DEFAULT_CDF_RESOLUTION).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=1000 {
            let u = i as f64 / 1000.0 * 0.999_998 + 1e-6;
            let q = table.quantile(u);
            assert!(q >= prev, "quantile not monotone at u = {u}");
            prev = q;
        }
        // Tail extrapolation stays finite and ordered beyond the knots.
        let lo = table.quantile(1e-9);
        let hi = table.quantile(1.0 - 1e-9);
        assert!(lo.is_finite() && hi.is_finite());
        assert!(lo < table.quantile(1e-4));
        assert!(hi > table.quantile(1.0 - 1e-4));
    }

    #[test]
    fn guided_lookup_agrees_with_plain_binary_search() {
        let table = build_inverse_cdf(&p(0.8, 1.0, 10.0), DEFAULT_CDF_RESOLUTION).unwrap();
        let plain = |u: f64| {
            let n = table.probs.len();
            let hi = table.probs.partition_point(|&pk| pk < u);
            let (i0, i1) = if hi == 0 {
                (0, 1)
            } else if hi == n {
                (n - 2, n - 1)
            } else {
                (hi - 1, hi)
            };
            let t = (u - table.probs[i0]) / (table.probs[i1] - table.probs[i0]);
            table.quants[i0] + t * (table.quants[i1] - table.quants[i0])
        };
        for i in 0..=100_000u64 {
            let u = i as f64 / 100_000.0;
            assert_eq!(table.quantile(u), plain(u), "u = {u}");
        }
    }

    #[test]
    fn sample_statistics_match_cumulants() {
        // Positive third cumulant for lambda_minus >> lambda_plus; the
        // empirical skewness of a large sample must match its sign, and the
        // first two moments must be near (0, 1).
        let params = p(0.8, 1.0, 10.0);
        let xs = sample_stdcts(&params, 1_000_000, 31).unwrap();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let skew = xs.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n / var.powf(1.5);
        assert!(mean.abs() < 5e-3, "mean = {mean}");
        assert!((var - 1.0).abs() < 2e-2, "var = {var}");
        assert_eq!(
            skew.signum(),
            third_cumulant(&params).signum(),
            "skew = {skew}, c3 = {}",
            third_cumulant(&params)
        );
    }

    #[test]
    fn sampling_is_deterministic_and_seed_sensitive() {
        let params = p(1.5, 2.0, 3.0);
        let a = sample_stdcts(&params, 256, 7).unwrap();
        let b = sample_stdcts(&params, 256, 7).unwrap();
        assert_eq!(a, b, "same seed must reproduce bit-identical draws");
        let c = sample_stdcts(&params, 256, 8).unwrap();
        assert_ne!(a, c);
        assert!(sample_stdcts(&params, 0, 7).unwrap().is_empty());
    }

    #[test]
    fn hopeless_corner_reports_inversion_failure() {
        // alpha near zero with weak tempering: |phi| decays like a slowly
        // varying function and no affordable grid can capture the density.
        let params = p(0.01, 0.1, 0.1);
        match build_inverse_cdf(&params, 1 << 10) {
            Err(Error::InversionFailure(_)) => {}
            other => panic!("expected inversion failure, got {other:?}"),
        }
    }

    #[test]
    fn resolution_escalates_when_requested_grid_is_too_coarse() {
        // Moderately slow decay: a 2^10 start must be escalated, not failed.
        let params = p(0.5, 1.0, 1.0);
        let table = build_inverse_cdf(&params, 1 << 10).unwrap();
        assert!(table.resolution() > 1 << 10);
        assert!((table.mass() - 1.0).abs() < 1e-3);
    }
}
