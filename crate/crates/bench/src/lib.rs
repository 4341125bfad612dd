//! Benchmark-only crate; the measurements live in `benches/`.
//!
//! `cargo bench -p deepcal-bench` times the hot paths of the pipeline:
//! Monte Carlo chain pricing versus the network surrogate, tempered-stable
//! table construction and sampling, and Halton point generation.
