//! Criterion benchmarks for the controller and analysis hot paths; see `benches/`.
