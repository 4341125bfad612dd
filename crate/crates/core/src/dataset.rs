//! Training surface generation and the on-disk training-set format.
//!
//! A training set is the Monte Carlo log-price surface sampled at Halton
//! points: row `i` is the input vector (contract + model parameters) at
//! Halton index `start_index + i` and the target `ln V` of the Monte Carlo
//! price at that point. Each row prices with its own derived seed, so a set
//! can be regenerated row-by-row, extended by continuing the Halton index,
//! and is bit-identical across runs and thread counts.
//!
//! Some corners of the CTS box price nothing: the quantile table build can
//! reject the tempering/stability combination, the simulated volatility can
//! leave the domain of the exponential moment, or the deep-OTM price can be
//! exactly zero (no path finishes in the money), which has no logarithm.
//! Such rows are skipped and counted, not fabricated.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::garch::{price_mcs, PricingRequest, RiskNeutralParams};
use crate::quasirandom::{sample_parameter_space, uniform_from_lambda, ParameterRanges};
use crate::rng::derive_seed;
use crate::{Model, OptionKind};

pub const TRAINING_SET_VERSION: u32 = 1;

/// Warn when more than this fraction of requested rows were skipped.
const SKIP_WARN_FRACTION: f64 = 0.05;

/// One row of the surface: input vector in canonical coordinate order and
/// the log Monte Carlo price as the regression target.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSample {
    pub input: Vec<f64>,
    pub target: f64,
}

/// Everything needed to regenerate or extend a training set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationMeta {
    pub version: u32,
    pub model: Model,
    pub kind: OptionKind,
    pub n_requested: usize,
    pub paths_per_price: usize,
    pub seed: u64,
    pub start_index: u64,
    pub skipped: usize,
    pub ranges: ParameterRanges,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    pub meta: GenerationMeta,
    pub samples: Vec<TrainingSample>,
}

impl TrainingSet {
    pub fn input_dim(&self) -> usize {
        self.meta.model.input_dim()
    }

    /// Halton index at which a follow-up generation run should start to
    /// extend this set without repeating points.
    pub fn next_start_index(&self) -> u64 {
        self.meta.start_index + self.meta.n_requested as u64
    }
}

/// Price `n` Halton-sampled input points and keep the rows with a usable
/// log price. Row `i` uses seed `derive_seed(seed, start_index + i)`, making
/// every row independently reproducible. Skipped rows are counted in the
/// returned metadata; a skip rate above 5% logs a warning describing where
/// in the box the failures cluster.
pub fn generate_training_set(
    model: Model,
    kind: OptionKind,
    n: usize,
    ranges: &ParameterRanges,
    paths_per_price: usize,
    seed: u64,
    start_index: u64,
) -> Result<TrainingSet> {
    if paths_per_price == 0 {
        return Err(Error::InvalidParams("paths_per_price must be >= 1".into()));
    }
    let inputs = sample_parameter_space(model, n, ranges, start_index)?;

    let priced: Vec<std::result::Result<TrainingSample, Vec<f64>>> = inputs
        .into_par_iter()
        .enumerate()
        .map(|(i, input)| {
            let row_seed = derive_seed(seed, start_index + i as u64);
            match price_row(model, kind, &input, paths_per_price, row_seed) {
                Some(target) => Ok(TrainingSample { input, target }),
                None => Err(input),
            }
        })
        .collect();

    let mut samples = Vec::with_capacity(n);
    let mut skipped_inputs = Vec::new();
    for row in priced {
        match row {
            Ok(s) => samples.push(s),
            Err(input) => skipped_inputs.push(input),
        }
    }
    let skipped = skipped_inputs.len();
    if n > 0 && skipped as f64 > SKIP_WARN_FRACTION * n as f64 {
        let corner = corner_description(model, ranges, &skipped_inputs)
            .unwrap_or_else(|| "no single corner".into());
        log::warn!(
            "skipped {skipped} of {n} requested training rows ({:.1}%); failures cluster at: {corner}",
            100.0 * skipped as f64 / n as f64
        );
    }

    Ok(TrainingSet {
        meta: GenerationMeta {
            version: TRAINING_SET_VERSION,
            model,
            kind,
            n_requested: n,
            paths_per_price,
            seed,
            start_index,
            skipped,
            ranges: ranges.clone(),
        },
        samples,
    })
}

/// Monte Carlo log price of one input row, or `None` if the row cannot be
/// priced (invalid corner, inversion failure, domain exit, zero or
/// non-finite price).
fn price_row(
    model: Model,
    kind: OptionKind,
    input: &[f64],
    paths_per_price: usize,
    row_seed: u64,
) -> Option<f64> {
    let params = RiskNeutralParams::from_slice(model, &input[2..]).ok()?;
    let req = PricingRequest {
        moneyness: input[0],
        tau: input[1],
        n_paths: paths_per_price,
        seed: row_seed,
        kind,
    };
    let price = price_mcs(&params, &req).ok()?;
    (price.is_finite() && price > 0.0).then(|| price.ln())
}

/// Where in the box do the skipped inputs sit? Reports the coordinates whose
/// skipped-row average leans hard toward one end of its range.
fn corner_description(
    model: Model,
    ranges: &ParameterRanges,
    skipped: &[Vec<f64>],
) -> Option<String> {
    if skipped.is_empty() {
        return None;
    }
    let names: [&str; 10] = [
        "m", "tau", "kappa", "psi", "gamma", "theta", "sigma0", "alpha", "lambda+", "lambda-",
    ];
    let spans = [
        ranges.m,
        ranges.tau,
        ranges.kappa,
        ranges.psi,
        ranges.gamma,
        ranges.theta,
        ranges.sigma0,
        ranges.alpha,
        ranges.u_plus,
        ranges.u_minus,
    ];
    let dim = model.input_dim();
    let mut parts = Vec::new();
    for j in 0..dim {
        let (lo, hi) = spans[j];
        if hi <= lo {
            continue;
        }
        let mean: f64 = skipped
            .iter()
            .map(|row| {
                // Tempering rates normalize through their uniform pre-image.
                let v = if j >= 8 { uniform_from_lambda(row[j]) } else { row[j] };
                (v - lo) / (hi - lo)
            })
            .sum::<f64>()
            / skipped.len() as f64;
        if mean < 0.25 {
            parts.push(format!("{} low", names[j]));
        } else if mean > 0.75 {
            parts.push(format!("{} high", names[j]));
        }
    }
    (!parts.is_empty()).then(|| parts.join(", "))
}

/// Write a training set as a CSV with a single `# {json}` metadata header.
/// Floats are written with enough digits to round-trip exactly.
pub fn save_training_set(set: &TrainingSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(path.display().to_string(), e);
    let meta = serde_json::to_string(&set.meta)
        .map_err(|e| Error::MalformedFile {
            path: path.display().to_string(),
            message: format!("metadata serialization failed: {e}"),
        })?;
    writeln!(w, "# {meta}").map_err(io_err)?;
    let mut line = String::new();
    for s in &set.samples {
        line.clear();
        for v in &s.input {
            line.push_str(&format!("{v:?},"));
        }
        line.push_str(&format!("{:?}", s.target));
        writeln!(w, "{line}").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Read a training set written by [`save_training_set`], verifying version,
/// row widths, and the row count implied by the metadata.
pub fn load_training_set(path: impl AsRef<Path>) -> Result<TrainingSet> {
    let path = path.as_ref();
    let pstr = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| Error::io(pstr.clone(), e))?;
    let mut lines = BufReader::new(file).lines();

    let header = lines
        .next()
        .transpose()
        .map_err(|e| Error::io(pstr.clone(), e))?
        .ok_or_else(|| Error::MalformedFile {
            path: pstr.clone(),
            message: "empty file".into(),
        })?;
    let json = header.strip_prefix("# ").ok_or_else(|| Error::MalformedFile {
        path: pstr.clone(),
        message: "first line must be a `# {json}` metadata header".into(),
    })?;
    let meta: GenerationMeta = serde_json::from_str(json).map_err(|e| Error::MalformedFile {
        path: pstr.clone(),
        message: format!("bad metadata header: {e}"),
    })?;
    if meta.version != TRAINING_SET_VERSION {
        return Err(Error::UnsupportedVersion {
            path: pstr,
            found: meta.version.to_string(),
            supported: TRAINING_SET_VERSION.to_string(),
        });
    }

    let width = meta.model.input_dim() + 1;
    let mut samples = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(pstr.clone(), e))?;
        if line.is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: pstr.clone(),
            line: lineno + 2, // 1-based, after the header
            message,
        };
        let values: Vec<f64> = line
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| parse_err(format!("bad number `{s}`")))
            })
            .collect::<Result<_>>()?;
        if values.len() != width {
            return Err(parse_err(format!(
                "expected {width} comma-separated values, got {}",
                values.len()
            )));
        }
        let (target, input) = values.split_last().unwrap();
        samples.push(TrainingSample {
            input: input.to_vec(),
            target: *target,
        });
    }

    let expected_rows = meta.n_requested - meta.skipped;
    if samples.len() != expected_rows {
        return Err(Error::MalformedFile {
            path: pstr,
            message: format!(
                "metadata promises {expected_rows} rows, file has {}",
                samples.len()
            ),
        });
    }
    Ok(TrainingSet { meta, samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_seed;

    /// Sub-box of the default ranges where every point prices strictly
    /// positive: near-forward strikes and enough volatility that no Monte
    /// Carlo estimate collapses to zero.
    fn near_forward_ranges() -> ParameterRanges {
        ParameterRanges {
            m: (0.9, 1.05),
            kappa: (1e-6, 1e-5),
            gamma: (0.85, 0.9999),
            sigma0: (0.02, 0.04),
            ..ParameterRanges::pricing()
        }
    }

    fn small_duan_set(n: usize, start: u64) -> TrainingSet {
        generate_training_set(
            Model::Duan,
            OptionKind::Call,
            n,
            &near_forward_ranges(),
            200,
            77,
            start,
        )
        .unwrap()
    }

    #[test]
    fn near_forward_box_prices_everything() {
        let set = small_duan_set(8, 1);
        assert_eq!(set.meta.skipped, 0);
        assert_eq!(set.samples.len(), 8);
        assert_eq!(set.input_dim(), 7);
        for s in &set.samples {
            assert_eq!(s.input.len(), 7);
            assert!(s.target.is_finite());
            // Call on these boxes is worth less than the spot: ln V < 0.
            assert!(s.target < 0.0);
        }
    }

    #[test]
    fn full_box_skips_worthless_corners_but_never_fabricates() {
        // The full default box contains corners (tiny volatility, far
        // strike) whose OTM price is exactly zero at finite path counts;
        // those rows are dropped, and the countable invariant holds.
        let set = generate_training_set(
            Model::Duan,
            OptionKind::Call,
            8,
            &ParameterRanges::pricing(),
            200,
            77,
            1,
        )
        .unwrap();
        assert_eq!(set.samples.len(), 8 - set.meta.skipped);
        for s in &set.samples {
            assert!(s.target.is_finite() && s.target < 0.0);
        }
    }

    #[test]
    fn rows_are_reproducible_and_extendable() {
        let full = small_duan_set(8, 1);
        let again = small_duan_set(8, 1);
        assert_eq!(full, again, "same inputs must regenerate bit-identically");

        // Generating [1..6) and [6..9) separately gives the same rows.
        let head = small_duan_set(5, 1);
        let tail = small_duan_set(3, 6);
        assert_eq!(head.next_start_index(), 6);
        let glued: Vec<_> = head.samples.iter().chain(&tail.samples).cloned().collect();
        assert_eq!(glued, full.samples);
    }

    #[test]
    fn target_is_log_price_under_derived_seed() {
        let set = small_duan_set(3, 1);
        let s = &set.samples[2];
        let params = RiskNeutralParams::from_slice(Model::Duan, &s.input[2..]).unwrap();
        let req = PricingRequest {
            moneyness: s.input[0],
            tau: s.input[1],
            n_paths: 200,
            seed: derive_seed(77, 3), // start_index 1 + row 2
            kind: OptionKind::Call,
        };
        assert_eq!(price_mcs(&params, &req).unwrap().ln(), s.target);
    }

    #[test]
    fn cts_box_generates_with_usable_tempering() {
        let ranges = ParameterRanges {
            alpha: (1.2, 1.6),
            u_plus: (0.3, 0.7),
            u_minus: (0.3, 0.7),
            ..near_forward_ranges()
        };
        let set = generate_training_set(Model::Cts, OptionKind::Put, 4, &ranges, 400, 5, 1)
            .unwrap();
        assert_eq!(set.meta.skipped, 0);
        assert_eq!(set.samples.len(), 4);
        assert_eq!(set.input_dim(), 10);
    }

    #[test]
    fn hopeless_corner_is_skipped_not_fabricated() {
        // alpha pinned near zero with the weakest tempering: every row fails
        // CDF inversion.
        let ranges = ParameterRanges {
            alpha: (0.01, 0.011),
            u_plus: (0.0, 1e-6),
            u_minus: (0.0, 1e-6),
            ..ParameterRanges::pricing()
        };
        let set = generate_training_set(Model::Cts, OptionKind::Call, 4, &ranges, 50, 5, 1)
            .unwrap();
        assert_eq!(set.meta.skipped, 4);
        assert!(set.samples.is_empty());
    }

    #[test]
    fn corner_description_names_the_cluster() {
        let ranges = ParameterRanges::pricing();
        // Fabricated skipped rows: alpha at the low end, lambdas at the low
        // end (u ~ 0 maps to lambda ~ 0.1), everything else centered.
        let rows: Vec<Vec<f64>> = (0..10)
            .map(|_| vec![1.0, 0.7, 5e-6, 0.25, 0.75, 0.4, 0.02, 0.05, 0.1001, 0.1001])
            .collect();
        let desc = corner_description(Model::Cts, &ranges, &rows).unwrap();
        assert!(desc.contains("alpha low"), "got: {desc}");
        assert!(desc.contains("lambda+ low"), "got: {desc}");
        assert!(!desc.contains("m "), "centered coords must not appear: {desc}");
        assert!(corner_description(Model::Cts, &ranges, &[]).is_none());
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("set.csv");
        let set = small_duan_set(6, 1);
        save_training_set(&set, &path).unwrap();
        let loaded = load_training_set(&path).unwrap();
        assert_eq!(set, loaded);
    }

    #[test]
    fn load_rejects_damaged_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("set.csv");
        let set = small_duan_set(3, 1);
        save_training_set(&set, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();

        // Version bump.
        std::fs::write(&path, text.replace("\"version\":1", "\"version\":9")).unwrap();
        assert!(matches!(
            load_training_set(&path),
            Err(Error::UnsupportedVersion { .. })
        ));

        // Missing header.
        std::fs::write(&path, text.lines().skip(1).collect::<Vec<_>>().join("\n")).unwrap();
        assert!(matches!(
            load_training_set(&path),
            Err(Error::MalformedFile { .. })
        ));

        // Truncated row set no longer matches the metadata count.
        let truncated: Vec<&str> = text.lines().take(2).collect();
        std::fs::write(&path, truncated.join("\n")).unwrap();
        assert!(matches!(
            load_training_set(&path),
            Err(Error::MalformedFile { .. })
        ));

        // Corrupt number, reported with its line.
        std::fs::write(&path, text.replace("0.6", "zero.six")).unwrap();
        match load_training_set(&path) {
            Err(Error::Parse { line, .. }) => assert!(line >= 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
