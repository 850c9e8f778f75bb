//! Acceptance harness for the gencls workspace. The checks live in
//! `tests/acceptance.rs` and run last under `cargo test --workspace`.
