//! Criterion benchmarks for the hymlab kernels live in `benches/`.
