//! Halton low-discrepancy sequences and the training parameter box.
//!
//! Training surfaces are sampled at Halton points rather than pseudo-random
//! ones: the sequence fills the box evenly at any sample count, and a run can
//! be extended later by continuing from the next index. Coordinate `j` of the
//! sequence uses the `j`-th prime as its base, in the fixed input order
//! `[m, tau, kappa, psi, gamma, theta, sigma0, alpha, u+, u-]` (the first
//! seven for the Gaussian model).

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Model;

/// Halton bases for the input coordinates, in input order.
pub const PRIMES: [u64; 10] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29];

/// Radical inverse of `index` in the given base: the van der Corput value
/// obtained by mirroring the base-`base` digits around the radix point.
/// `index` starts at 1; index 0 would map to 0, which is outside (0, 1).
pub fn halton(index: u64, base: u64) -> f64 {
    assert!(index >= 1, "halton index starts at 1");
    assert!(base >= 2, "halton base must be at least 2");
    let b = base as f64;
    let mut i = index;
    let mut f = 1.0;
    let mut x = 0.0;
    while i > 0 {
        f /= b;
        x += f * (i % base) as f64;
        i /= base;
    }
    x
}

/// Tempering rate from its uniform pre-image: `tan(u pi/2) + 0.1` maps
/// (0, 1) onto (0.1, inf) with a long right tail, so the box can reach both
/// heavy and essentially Gaussian tails.
pub fn lambda_from_uniform(u: f64) -> f64 {
    (u * std::f64::consts::FRAC_PI_2).tan() + 0.1
}

/// Inverse of [`lambda_from_uniform`]; used to optimize tempering rates in
/// the bounded uniform coordinate instead of the unbounded natural one.
pub fn uniform_from_lambda(lambda: f64) -> f64 {
    (lambda - 0.1).atan() / std::f64::consts::FRAC_PI_2
}

/// Closed sampling ranges for every input coordinate. Tempering rates are
/// ranged through their uniform pre-images `u+`, `u-` (see
/// [`lambda_from_uniform`]), which is also how they are stored on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterRanges {
    pub m: (f64, f64),
    pub tau: (f64, f64),
    pub kappa: (f64, f64),
    pub psi: (f64, f64),
    pub gamma: (f64, f64),
    pub theta: (f64, f64),
    pub sigma0: (f64, f64),
    pub alpha: (f64, f64),
    pub u_plus: (f64, f64),
    pub u_minus: (f64, f64),
}

impl ParameterRanges {
    /// The surface box used for the pricing experiments: maturities from
    /// just under half a year up to one year.
    pub fn pricing() -> Self {
        Self {
            m: (0.5, 1.5),
            tau: (0.4, 1.0),
            kappa: (0.0, 1.0e-5),
            psi: (0.1, 0.4),
            gamma: (0.5, 0.9999),
            theta: (0.0, 0.8),
            sigma0: (1.0e-6, 0.04),
            alpha: (0.01, 1.999),
            u_plus: (0.0, 1.0),
            u_minus: (0.0, 1.0),
        }
    }

    /// Same box with maturities widened down to one week, so a surface
    /// trained on it covers the short-dated quotes in market chains.
    pub fn calibration() -> Self {
        Self {
            tau: (0.02, 1.0),
            ..Self::pricing()
        }
    }

    pub fn profile(name: &str) -> Option<Self> {
        match name {
            "pricing" => Some(Self::pricing()),
            "calibration" => Some(Self::calibration()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pairs = self.named_pairs();
        for (name, (lo, hi)) in &pairs {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(Error::InvalidParams(format!(
                    "range {name} = [{lo}, {hi}] is not a finite ordered pair"
                )));
            }
        }
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidParams(msg.to_string()))
            }
        };
        check(self.m.0 > 0.0, "moneyness must be positive")?;
        check(self.tau.0 > 0.0, "maturity must be positive")?;
        check(self.kappa.0 >= 0.0, "kappa must be nonnegative")?;
        check(self.psi.0 > 0.0, "psi must be positive")?;
        check(self.gamma.0 >= 0.0 && self.gamma.1 < 1.0, "gamma must lie in [0, 1)")?;
        check(self.theta.0 >= 0.0, "theta must be nonnegative")?;
        check(self.sigma0.0 > 0.0, "sigma0 must be positive")?;
        check(self.alpha.0 > 0.0 && self.alpha.1 < 2.0, "alpha must lie in (0, 2)")?;
        check(
            self.u_plus.0 >= 0.0 && self.u_plus.1 <= 1.0,
            "u+ must lie in [0, 1]",
        )?;
        check(
            self.u_minus.0 >= 0.0 && self.u_minus.1 <= 1.0,
            "u- must lie in [0, 1]",
        )?;
        Ok(())
    }

    fn named_pairs(&self) -> [(&'static str, (f64, f64)); 10] {
        [
            ("m", self.m),
            ("tau", self.tau),
            ("kappa", self.kappa),
            ("psi", self.psi),
            ("gamma", self.gamma),
            ("theta", self.theta),
            ("sigma0", self.sigma0),
            ("alpha", self.alpha),
            ("u_plus", self.u_plus),
            ("u_minus", self.u_minus),
        ]
    }

    fn set(&mut self, key: &str, pair: (f64, f64)) -> bool {
        match key {
            "m" => self.m = pair,
            "tau" => self.tau = pair,
            "kappa" => self.kappa = pair,
            "psi" => self.psi = pair,
            "gamma" => self.gamma = pair,
            "theta" => self.theta = pair,
            "sigma0" => self.sigma0 = pair,
            "alpha" => self.alpha = pair,
            "u_plus" => self.u_plus = pair,
            "u_minus" => self.u_minus = pair,
            _ => return false,
        }
        true
    }

    /// Parse a `key = lo hi` config file. Unspecified keys keep their
    /// [`ParameterRanges::pricing`] defaults; `#` starts a comment.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut ranges = Self::pricing();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                message,
            };
            let (key, rest) = line
                .split_once('=')
                .ok_or_else(|| parse_err("expected `key = lo hi`".into()))?;
            let values: Vec<f64> = rest
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| parse_err(format!("bad number `{s}`")))
                })
                .collect::<Result<_>>()?;
            if values.len() != 2 {
                return Err(parse_err(format!(
                    "expected two values, got {}",
                    values.len()
                )));
            }
            if !ranges.set(key.trim(), (values[0], values[1])) {
                return Err(parse_err(format!("unknown range key `{}`", key.trim())));
            }
        }
        ranges.validate()?;
        Ok(ranges)
    }

    /// Render in the same `key = lo hi` format accepted by
    /// [`ParameterRanges::from_file`].
    pub fn to_key_value_string(&self) -> String {
        let mut out = String::from("# input sampling ranges (lambda via u: lambda = tan(u pi/2) + 0.1)\n");
        for (name, (lo, hi)) in self.named_pairs() {
            writeln!(out, "{name} = {lo:?} {hi:?}").unwrap();
        }
        out
    }
}

/// Sample `n` points of the model's input space at Halton indices
/// `start_index, start_index + 1, ...`. Each row is an input vector in the
/// fixed coordinate order (`[m, tau, kappa, psi, gamma, theta, sigma0]`, plus
/// `[alpha, lambda+, lambda-]` for the CTS model, with the tempering rates
/// already mapped out of u-space). Continuing a previous run means passing
/// `start_index = previous start + previous n`.
pub fn sample_parameter_space(
    model: Model,
    n: usize,
    ranges: &ParameterRanges,
    start_index: u64,
) -> Result<Vec<Vec<f64>>> {
    if start_index == 0 {
        return Err(Error::InvalidParams(
            "halton start index must be at least 1".into(),
        ));
    }
    ranges.validate()?;
    let affine = |u: f64, (lo, hi): (f64, f64)| lo + u * (hi - lo);
    let mut out = Vec::with_capacity(n);
    for i in 0..n as u64 {
        let idx = start_index + i;
        let h = |coord: usize| halton(idx, PRIMES[coord]);
        let mut row = vec![
            affine(h(0), ranges.m),
            affine(h(1), ranges.tau),
            affine(h(2), ranges.kappa),
            affine(h(3), ranges.psi),
            affine(h(4), ranges.gamma),
            affine(h(5), ranges.theta),
            affine(h(6), ranges.sigma0),
        ];
        if model == Model::Cts {
            row.push(affine(h(7), ranges.alpha));
            row.push(lambda_from_uniform(affine(h(8), ranges.u_plus)));
            row.push(lambda_from_uniform(affine(h(9), ranges.u_minus)));
        }
        out.push(row);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    #[test]
    fn halton_hand_values() {
        assert_eq!(halton(1, 2), 0.5);
        assert_eq!(halton(2, 2), 0.25);
        assert_eq!(halton(3, 2), 0.75);
        assert_eq!(halton(4, 2), 0.125);
        assert_relative_eq!(halton(1, 3), 1.0 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(halton(2, 3), 2.0 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(halton(4, 3), 4.0 / 9.0, max_relative = 1e-15);
        assert_relative_eq!(halton(5, 5), 1.0 / 25.0, max_relative = 1e-15);
    }

    #[test]
    fn base2_prefix_is_a_permutation_of_dyadic_grid() {
        // The first 2^k - 1 base-2 values are exactly {1/2^k, ..., (2^k-1)/2^k}.
        let k = 4u32;
        let n = 2u64.pow(k) - 1;
        let mut got: Vec<f64> = (1..=n).map(|i| halton(i, 2)).collect();
        got.sort_by(f64::total_cmp);
        let want: Vec<f64> = (1..=n).map(|i| i as f64 / 2f64.powi(k as i32)).collect();
        assert_eq!(got, want);
    }

    proptest! {
        #[test]
        fn halton_stays_in_open_unit_interval(index in 1u64..1_000_000, base_idx in 0usize..10) {
            let x = halton(index, PRIMES[base_idx]);
            prop_assert!(x > 0.0 && x < 1.0);
        }
    }

    #[test]
    fn lambda_transform_hand_values_and_inverse() {
        assert_abs_diff_eq!(lambda_from_uniform(0.5), 1.1, epsilon = 1e-15);
        assert_abs_diff_eq!(lambda_from_uniform(0.0), 0.1, epsilon = 1e-15);
        assert!(lambda_from_uniform(0.999) > 600.0);
        for u in [0.01, 0.25, 0.5, 0.9, 0.9999] {
            assert_relative_eq!(
                uniform_from_lambda(lambda_from_uniform(u)),
                u,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn first_duan_point_matches_hand_computation() {
        let ranges = ParameterRanges::pricing();
        let rows = sample_parameter_space(Model::Duan, 2, &ranges, 1).unwrap();
        assert_eq!(rows[0].len(), 7);
        // m = 0.5 + halton(1,2) * 1.0, tau = 0.4 + halton(1,3) * 0.6
        assert_abs_diff_eq!(rows[0][0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(rows[0][1], 0.6, epsilon = 1e-15);
        // Second index: m = 0.5 + 0.25, tau = 0.4 + (2/3) 0.6 = 0.8
        assert_abs_diff_eq!(rows[1][0], 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(rows[1][1], 0.8, epsilon = 1e-15);
    }

    #[test]
    fn samples_stay_inside_box() {
        let ranges = ParameterRanges::calibration();
        let rows = sample_parameter_space(Model::Cts, 1000, &ranges, 1).unwrap();
        for row in &rows {
            assert_eq!(row.len(), 10);
            let span = [
                ranges.m,
                ranges.tau,
                ranges.kappa,
                ranges.psi,
                ranges.gamma,
                ranges.theta,
                ranges.sigma0,
                ranges.alpha,
            ];
            for (j, (lo, hi)) in span.iter().enumerate() {
                assert!(row[j] >= *lo && row[j] <= *hi, "coord {j} = {} outside", row[j]);
            }
            assert!(row[8] >= 0.1 && row[9] >= 0.1, "tempering below floor");
        }
    }

    #[test]
    fn start_index_continues_the_sequence() {
        let ranges = ParameterRanges::pricing();
        let full = sample_parameter_space(Model::Cts, 7, &ranges, 1).unwrap();
        let tail = sample_parameter_space(Model::Cts, 5, &ranges, 3).unwrap();
        assert_eq!(&full[2..], &tail[..]);
        assert!(sample_parameter_space(Model::Duan, 1, &ranges, 0).is_err());
    }

    #[test]
    fn profiles_differ_only_in_maturity() {
        let a = ParameterRanges::pricing();
        let b = ParameterRanges::calibration();
        assert_eq!(a.tau, (0.4, 1.0));
        assert_eq!(b.tau, (0.02, 1.0));
        assert_eq!(a.m, b.m);
        assert!(ParameterRanges::profile("pricing").is_some());
        assert!(ParameterRanges::profile("nope").is_none());
    }

    #[test]
    fn range_file_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ranges.txt");
        let ranges = ParameterRanges::calibration();
        std::fs::write(&path, ranges.to_key_value_string()).unwrap();
        assert_eq!(ParameterRanges::from_file(&path).unwrap(), ranges);

        // Partial files override pricing-box defaults.
        std::fs::write(&path, "tau = 0.1 0.5\n# comment\n").unwrap();
        let got = ParameterRanges::from_file(&path).unwrap();
        assert_eq!(got.tau, (0.1, 0.5));
        assert_eq!(got.m, ParameterRanges::pricing().m);

        std::fs::write(&path, "tau = 0.1\n").unwrap();
        match ParameterRanges::from_file(&path) {
            Err(Error::Parse { line: 1, .. }) => {}
            other => panic!("expected parse error on line 1, got {other:?}"),
        }
        std::fs::write(&path, "\nwhat = 0.1 0.2\n").unwrap();
        match ParameterRanges::from_file(&path) {
            Err(Error::Parse { line: 2, .. }) => {}
            other => panic!("expected parse error on line 2, got {other:?}"),
        }
        std::fs::write(&path, "tau = 0.5 0.1\n").unwrap();
        assert!(ParameterRanges::from_file(&path).is_err(), "inverted range");
    }
}
