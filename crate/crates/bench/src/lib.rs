//! Criterion benchmarks for the respricing core; see `benches/`.
