//! Benchmarks for mlforge-core live in `benches/`.
