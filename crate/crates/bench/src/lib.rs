//! Criterion benchmarks for `ulf-core`; see `benches/core.rs`.
