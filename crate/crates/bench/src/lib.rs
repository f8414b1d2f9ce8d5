//! Benchmarks live in `benches/`; run them with `cargo bench -p q2rl-bench`.

pub use q2rl_core;
