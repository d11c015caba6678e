//! Benchmarks live in `benches/`; run `cargo bench -p twoview-bench`.
