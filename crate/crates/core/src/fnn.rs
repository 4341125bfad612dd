//! Feedforward surrogate of the log-price surface, trained by
//! Levenberg-Marquardt.
//!
//! The default shape is three sigmoid hidden layers of 20 nodes and one
//! linear output; inputs are min-max normalized to [-1, 1] with statistics
//! stored inside the network file. Training minimizes the mean squared error
//! of the log price with full-batch LM: damped normal equations
//! `(J^T J + mu I) p = -J^T r` where `J` is the analytic Jacobian of the
//! residuals with respect to every weight and bias. At ~1000 weights the
//! normal-equations route is far cheaper per epoch than anything
//! factorization-free, and it reaches surface-fitting accuracy in tens of
//! epochs where first-order methods need tens of thousands.

use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::TrainingSample;
use crate::error::{Error, Result};

pub const NETWORK_FILE_VERSION: u32 = 1;

/// Default hidden layout: three layers of 20.
pub const DEFAULT_HIDDEN: [usize; 3] = [20, 20, 20];

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Fully connected network with sigmoid hidden layers and a single linear
/// output, plus the input normalization baked in.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    /// Layer widths, input first, output (always 1) last.
    sizes: Vec<usize>,
    /// `weights[l]` maps layer `l` (sizes[l] wide) to layer `l+1`.
    weights: Vec<DMatrix<f64>>,
    biases: Vec<DVector<f64>>,
    /// Inputs are mapped to `(x - center) / halfspan` before the first layer.
    center: DVector<f64>,
    halfspan: DVector<f64>,
}

impl Network {
    /// Network with the default three hidden layers of 20 nodes.
    pub fn new(input_dim: usize, seed: u64) -> Self {
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(&DEFAULT_HIDDEN);
        sizes.push(1);
        Self::with_topology(&sizes, seed).expect("default topology is valid")
    }

    /// Network with explicit layer widths (input first, the trailing 1 for
    /// the scalar output included). Weights and biases initialize uniformly
    /// on [-1/sqrt(fan_in), 1/sqrt(fan_in)], deterministically in `seed`;
    /// normalization starts as the identity.
    pub fn with_topology(sizes: &[usize], seed: u64) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::InvalidParams(
                "topology needs at least input and output layers".into(),
            ));
        }
        if sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidParams("zero-width layer".into()));
        }
        if *sizes.last().unwrap() != 1 {
            return Err(Error::InvalidParams(format!(
                "output layer must have width 1, got {}",
                sizes.last().unwrap()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..sizes.len() - 1 {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let mut draw = |_: usize, _: usize| rng.random::<f64>().mul_add(2.0 * bound, -bound);
            weights.push(DMatrix::from_fn(fan_out, fan_in, &mut draw));
            biases.push(DVector::from_fn(fan_out, |i, _| draw(i, 0)));
        }
        let d = sizes[0];
        Ok(Self {
            sizes: sizes.to_vec(),
            weights,
            biases,
            center: DVector::zeros(d),
            halfspan: DVector::from_element(d, 1.0),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Total number of trainable parameters (weights and biases).
    pub fn n_weights(&self) -> usize {
        self.sizes
            .windows(2)
            .map(|w| w[1] * w[0] + w[1])
            .sum()
    }

    /// Normalization statistics as `(center, halfspan)` slices.
    pub fn normalization(&self) -> (&[f64], &[f64]) {
        (self.center.as_slice(), self.halfspan.as_slice())
    }

    pub fn set_normalization(&mut self, center: &[f64], halfspan: &[f64]) -> Result<()> {
        let d = self.input_dim();
        if center.len() != d || halfspan.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: center.len().min(halfspan.len()),
            });
        }
        if halfspan.iter().any(|&h| !(h > 0.0) || !h.is_finite()) {
            return Err(Error::InvalidParams("halfspan entries must be positive".into()));
        }
        self.center = DVector::from_column_slice(center);
        self.halfspan = DVector::from_column_slice(halfspan);
        Ok(())
    }

    /// Set normalization from the min-max statistics of a sample set, so the
    /// training inputs map onto [-1, 1]. Constant coordinates get a unit
    /// halfspan (they normalize to exactly 0).
    pub fn fit_normalization(&mut self, samples: &[TrainingSample]) -> Result<()> {
        let d = self.input_dim();
        if samples.is_empty() {
            return Err(Error::InvalidParams("cannot fit normalization to no samples".into()));
        }
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for s in samples {
            if s.input.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: s.input.len(),
                });
            }
            for (j, &v) in s.input.iter().enumerate() {
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
        }
        let mut center = Vec::with_capacity(d);
        let mut halfspan = Vec::with_capacity(d);
        for j in 0..d {
            if hi[j] > lo[j] {
                center.push(0.5 * (lo[j] + hi[j]));
                halfspan.push(0.5 * (hi[j] - lo[j]));
            } else {
                center.push(lo[j]);
                halfspan.push(1.0);
            }
        }
        self.set_normalization(&center, &halfspan)
    }

    /// Clamp an input vector into the normalized box [center - halfspan,
    /// center + halfspan]. Returns whether anything moved. Queries outside
    /// the training box are extrapolation the sigmoid net cannot back, so
    /// callers pin them to the nearest face instead.
    pub fn clamp_input(&self, x: &mut [f64]) -> Result<bool> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let mut moved = false;
        for (j, v) in x.iter_mut().enumerate() {
            let lo = self.center[j] - self.halfspan[j];
            let hi = self.center[j] + self.halfspan[j];
            let clamped = v.clamp(lo, hi);
            if clamped != *v {
                *v = clamped;
                moved = true;
            }
        }
        Ok(moved)
    }

    fn normalize(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_fn(x.len(), |i, _| (x[i] - self.center[i]) / self.halfspan[i])
    }

    /// Evaluate the network.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let mut a = self.normalize(x);
        let last = self.weights.len() - 1;
        for l in 0..last {
            a = (&self.weights[l] * a + &self.biases[l]).map(sigmoid);
        }
        Ok((&self.weights[last] * a + &self.biases[last])[0])
    }

    /// Forward pass keeping each layer's activation (the backprop cache).
    /// `acts[l]` is the input to weight layer `l`; the return value is the
    /// network output.
    fn forward_trace(&self, x: &[f64]) -> (Vec<DVector<f64>>, f64) {
        let mut acts = Vec::with_capacity(self.weights.len());
        let mut a = self.normalize(x);
        let last = self.weights.len() - 1;
        for l in 0..last {
            let next = (&self.weights[l] * &a + &self.biases[l]).map(sigmoid);
            acts.push(a);
            a = next;
        }
        let out = (&self.weights[last] * &a + &self.biases[last])[0];
        acts.push(a);
        (acts, out)
    }

    /// Gradient of the output with respect to every weight and bias, written
    /// into `col` in the canonical flat order. Returns the output value.
    fn output_gradient(&self, x: &[f64], col: &mut [f64]) -> f64 {
        debug_assert_eq!(col.len(), self.n_weights());
        let (acts, out) = self.forward_trace(x);
        let n_layers = self.weights.len();
        // Offsets of each layer's weight block in the flat layout.
        let mut offset = self.n_weights();
        // delta = d out / d (pre-activation of layer l+1)
        let mut delta = DVector::from_element(1, 1.0);
        for l in (0..n_layers).rev() {
            let out_w = self.sizes[l + 1];
            let in_w = self.sizes[l];
            offset -= out_w * in_w + out_w;
            // d out / d W[l][r, c] = delta[r] * acts[l][c], column-major.
            let wslice = &mut col[offset..offset + out_w * in_w];
            for c in 0..in_w {
                let a = acts[l][c];
                for r in 0..out_w {
                    wslice[c * out_w + r] = delta[r] * a;
                }
            }
            col[offset + out_w * in_w..offset + out_w * in_w + out_w]
                .copy_from_slice(delta.as_slice());
            if l > 0 {
                // Propagate through W[l] and the sigmoid of layer l.
                let back = self.weights[l].tr_mul(&delta);
                delta = DVector::from_fn(in_w, |i, _| {
                    let a = acts[l][i];
                    back[i] * a * (1.0 - a)
                });
            }
        }
        debug_assert_eq!(offset, 0);
        out
    }

    /// All weights and biases as one flat vector (layer by layer, each
    /// weight matrix column-major, then its bias).
    pub fn flat_weights(&self) -> DVector<f64> {
        let mut out = Vec::with_capacity(self.n_weights());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b.as_slice());
        }
        DVector::from_vec(out)
    }

    /// Overwrite all weights and biases from a flat vector in the
    /// [`Network::flat_weights`] layout.
    pub fn set_flat_weights(&mut self, flat: &DVector<f64>) -> Result<()> {
        if flat.len() != self.n_weights() {
            return Err(Error::DimensionMismatch {
                expected: self.n_weights(),
                got: flat.len(),
            });
        }
        let mut at = 0;
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            let wn = w.nrows() * w.ncols();
            w.as_mut_slice().copy_from_slice(&flat.as_slice()[at..at + wn]);
            at += wn;
            let bn = b.len();
            b.as_mut_slice().copy_from_slice(&flat.as_slice()[at..at + bn]);
            at += bn;
        }
        Ok(())
    }
}

fn check_batch(net: &Network, samples: &[TrainingSample]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::InvalidParams("empty sample batch".into()));
    }
    for s in samples {
        if s.input.len() != net.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: net.input_dim(),
                got: s.input.len(),
            });
        }
    }
    Ok(())
}

/// Jacobian of the residuals `f(x_i) - y_i` with respect to every weight:
/// one row per sample, one column per flat weight. The target offset does
/// not depend on the weights, so this is also the Jacobian of the outputs.
pub fn jacobian(net: &Network, samples: &[TrainingSample]) -> Result<DMatrix<f64>> {
    let (jt, _, _) = jacobian_transposed(net, samples)?;
    Ok(jt.transpose())
}

/// Column-per-sample Jacobian (better write locality), plus residuals and
/// their mean square. Sample columns are filled in parallel; the layout and
/// values are independent of thread count.
fn jacobian_transposed(
    net: &Network,
    samples: &[TrainingSample],
) -> Result<(DMatrix<f64>, DVector<f64>, f64)> {
    check_batch(net, samples)?;
    let w = net.n_weights();
    let n = samples.len();
    let mut data = vec![0.0f64; w * n];
    let mut residuals = vec![0.0f64; n];

    const CHUNK: usize = 64;
    data.par_chunks_mut(w * CHUNK)
        .zip(residuals.par_chunks_mut(CHUNK))
        .zip(samples.par_chunks(CHUNK))
        .for_each(|((cols, res), batch)| {
            for (k, s) in batch.iter().enumerate() {
                let out = net.output_gradient(&s.input, &mut cols[k * w..(k + 1) * w]);
                res[k] = out - s.target;
            }
        });

    let mse = residuals.iter().map(|r| r * r).sum::<f64>() / n as f64;
    Ok((
        DMatrix::from_vec(w, n, data),
        DVector::from_vec(residuals),
        mse,
    ))
}

/// Residual mean square at the current weights.
fn batch_mse(net: &Network, samples: &[TrainingSample]) -> f64 {
    let sq: Vec<f64> = samples
        .par_iter()
        .map(|s| {
            let r = net.forward(&s.input).expect("dimensions checked upfront") - s.target;
            r * r
        })
        .collect();
    sq.iter().sum::<f64>() / samples.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    /// Epoch budget exhausted.
    MaxEpochs,
    /// Reached the requested training MSE.
    TargetMse,
    /// Gradient norm below tolerance (a stationary point).
    GradientTolerance,
    /// No damping value produced an acceptable step.
    DampingCap,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StopReason::MaxEpochs => "epoch budget exhausted",
            StopReason::TargetMse => "target mse reached",
            StopReason::GradientTolerance => "gradient below tolerance",
            StopReason::DampingCap => "damping cap hit without an accepted step",
        })
    }
}

#[derive(Clone, Debug)]
pub struct TrainOptions {
    pub max_epochs: usize,
    /// Stop as soon as the training MSE drops to this value.
    pub target_mse: Option<f64>,
    /// Initial damping.
    pub mu0: f64,
    /// Damping shrinks by 10 on acceptance down to this floor...
    pub mu_min: f64,
    /// ...and grows by 10 on rejection up to this cap.
    pub mu_max: f64,
    /// Stop when the MSE gradient 2-norm falls below this.
    pub grad_tol: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            max_epochs: 300,
            target_mse: None,
            mu0: 1e-3,
            mu_min: 1e-12,
            mu_max: 1e10,
            grad_tol: 1e-10,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    /// Accepted epochs actually run.
    pub epochs: usize,
    /// MSE trace: entry 0 is the initial MSE, entry `e` the MSE after
    /// accepted epoch `e`. Strictly decreasing by construction.
    pub mse_trace: Vec<f64>,
    pub best_mse: f64,
    pub best_epoch: usize,
    pub stop: StopReason,
}

/// Full-batch Levenberg-Marquardt. Refits the input normalization to the
/// batch, then iterates damped normal-equation steps, accepting only strict
/// MSE improvements. The network is left at the best weights seen (which is
/// the final accepted state, kept explicit in case a future schedule accepts
/// uphill moves). Deterministic: same initial network and samples, same
/// result, independent of thread count.
pub fn train_lm(
    net: &mut Network,
    samples: &[TrainingSample],
    opts: &TrainOptions,
) -> Result<TrainReport> {
    check_batch(net, samples)?;
    if samples.iter().any(|s| !s.target.is_finite()) {
        return Err(Error::InvalidParams("non-finite training target".into()));
    }
    net.fit_normalization(samples)?;

    let n = samples.len() as f64;
    let mut mu = opts.mu0;
    let mut w = net.flat_weights();
    let mut mse = batch_mse(net, samples);
    if !mse.is_finite() {
        return Err(Error::NonFiniteLoss(format!("initial mse = {mse}")));
    }
    let mut trace = vec![mse];
    let mut best = (mse, w.clone(), 0usize);

    let finish = |net: &mut Network,
                  trace: Vec<f64>,
                  best: (f64, DVector<f64>, usize),
                  stop: StopReason|
     -> Result<TrainReport> {
        net.set_flat_weights(&best.1)?;
        Ok(TrainReport {
            epochs: trace.len() - 1,
            mse_trace: trace,
            best_mse: best.0,
            best_epoch: best.2,
            stop,
        })
    };

    if opts.target_mse.is_some_and(|t| mse <= t) {
        return finish(net, trace, best, StopReason::TargetMse);
    }

    for epoch in 1..=opts.max_epochs {
        let (jt, r, _) = jacobian_transposed(net, samples)?;
        let g = &jt * &r;
        if (2.0 / n) * g.norm() < opts.grad_tol {
            return finish(net, trace, best, StopReason::GradientTolerance);
        }
        let h = &jt * jt.transpose();

        // Damping loop: retry the step with stronger damping until the MSE
        // strictly improves.
        let accepted = loop {
            let mut a = h.clone();
            for i in 0..a.nrows() {
                a[(i, i)] += mu;
            }
            let trial_mse = match Cholesky::new(a) {
                Some(chol) => {
                    let p = chol.solve(&(-&g));
                    let w_trial = &w + &p;
                    net.set_flat_weights(&w_trial)?;
                    let trial = batch_mse(net, samples);
                    if trial.is_finite() && trial < mse {
                        w = w_trial;
                        Some(trial)
                    } else {
                        None
                    }
                }
                None => None, // not positive definite at this damping
            };
            match trial_mse {
                Some(t) => {
                    mu = (mu * 0.1).max(opts.mu_min);
                    break Some(t);
                }
                None => {
                    mu *= 10.0;
                    if mu > opts.mu_max {
                        break None;
                    }
                }
            }
        };

        match accepted {
            None => {
                // Roll back the last rejected trial weights.
                net.set_flat_weights(&w)?;
                return finish(net, trace, best, StopReason::DampingCap);
            }
            Some(new_mse) => {
                mse = new_mse;
                trace.push(mse);
                if mse < best.0 {
                    best = (mse, w.clone(), epoch);
                }
                if opts.target_mse.is_some_and(|t| mse <= t) {
                    return finish(net, trace, best, StopReason::TargetMse);
                }
            }
        }
    }
    finish(net, trace, best, StopReason::MaxEpochs)
}

// --- network file format ---

/// Write the network as a versioned plain-text file: topology line,
/// normalization lines, then per-layer weight rows and bias line, closed by
/// an `end` marker. Floats round-trip exactly.
pub fn save_network(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut out = BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(path.display().to_string(), e);

    let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
    writeln!(out, "deepcal-net {NETWORK_FILE_VERSION}").map_err(io_err)?;
    writeln!(
        out,
        "sizes {}",
        net.sizes.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" ")
    )
    .map_err(io_err)?;
    writeln!(out, "center {}", join(net.center.as_slice())).map_err(io_err)?;
    writeln!(out, "halfspan {}", join(net.halfspan.as_slice())).map_err(io_err)?;
    for (l, (w, b)) in net.weights.iter().zip(&net.biases).enumerate() {
        writeln!(out, "weights {l}").map_err(io_err)?;
        for r in 0..w.nrows() {
            let row: Vec<f64> = w.row(r).iter().copied().collect();
            writeln!(out, "{}", join(&row)).map_err(io_err)?;
        }
        writeln!(out, "bias {l}").map_err(io_err)?;
        writeln!(out, "{}", join(b.as_slice())).map_err(io_err)?;
    }
    writeln!(out, "end").map_err(io_err)?;
    out.flush().map_err(io_err)
}

/// Read a network written by [`save_network`].
pub fn load_network(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let pstr = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(pstr.clone(), e))?;
    let mut lines = text.lines().enumerate();

    let mut next_line = move || lines.next();
    let parse_err = |line: usize, message: String| Error::Parse {
        path: pstr.clone(),
        line: line + 1,
        message,
    };
    let truncated = || Error::MalformedFile {
        path: path.display().to_string(),
        message: "file ends before the `end` marker".into(),
    };
    let floats = |line: usize, s: &str| -> Result<Vec<f64>> {
        s.split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| parse_err(line, format!("bad number `{t}`")))
            })
            .collect()
    };

    // Version line.
    let (ln, first) = next_line().ok_or_else(truncated)?;
    let version = first
        .strip_prefix("deepcal-net ")
        .ok_or_else(|| parse_err(ln, "expected `deepcal-net <version>` header".into()))?;
    if version.trim() != NETWORK_FILE_VERSION.to_string() {
        return Err(Error::UnsupportedVersion {
            path: path.display().to_string(),
            found: version.trim().to_string(),
            supported: NETWORK_FILE_VERSION.to_string(),
        });
    }

    // Topology.
    let (ln, sline) = next_line().ok_or_else(truncated)?;
    let sizes: Vec<usize> = sline
        .strip_prefix("sizes ")
        .ok_or_else(|| parse_err(ln, "expected `sizes ...`".into()))?
        .split_whitespace()
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| parse_err(ln, format!("bad size `{t}`")))
        })
        .collect::<Result<_>>()?;
    let mut net = Network::with_topology(&sizes, 0)?;

    // Normalization.
    let (ln, cline) = next_line().ok_or_else(truncated)?;
    let center = floats(
        ln,
        cline
            .strip_prefix("center ")
            .ok_or_else(|| parse_err(ln, "expected `center ...`".into()))?,
    )?;
    let (ln, hline) = next_line().ok_or_else(truncated)?;
    let halfspan = floats(
        ln,
        hline
            .strip_prefix("halfspan ")
            .ok_or_else(|| parse_err(ln, "expected `halfspan ...`".into()))?,
    )?;
    net.set_normalization(&center, &halfspan)?;

    // Layers.
    for l in 0..sizes.len() - 1 {
        let (ln, wline) = next_line().ok_or_else(truncated)?;
        if wline.trim() != format!("weights {l}") {
            return Err(parse_err(ln, format!("expected `weights {l}`, got `{wline}`")));
        }
        let (rows, cols) = (sizes[l + 1], sizes[l]);
        let mut w = DMatrix::zeros(rows, cols);
        for r in 0..rows {
            let (ln, row) = next_line().ok_or_else(truncated)?;
            let vals = floats(ln, row)?;
            if vals.len() != cols {
                return Err(parse_err(ln, format!("expected {cols} weights, got {}", vals.len())));
            }
            for (c, v) in vals.into_iter().enumerate() {
                w[(r, c)] = v;
            }
        }
        let (ln, bline) = next_line().ok_or_else(truncated)?;
        if bline.trim() != format!("bias {l}") {
            return Err(parse_err(ln, format!("expected `bias {l}`, got `{bline}`")));
        }
        let (ln, bvals) = next_line().ok_or_else(truncated)?;
        let b = floats(ln, bvals)?;
        if b.len() != rows {
            return Err(parse_err(ln, format!("expected {rows} biases, got {}", b.len())));
        }
        net.weights[l] = w;
        net.biases[l] = DVector::from_vec(b);
    }

    let (ln, end) = next_line().ok_or_else(truncated)?;
    if end.trim() != "end" {
        return Err(parse_err(ln, format!("expected `end`, got `{end}`")));
    }
    Ok(net)
}
