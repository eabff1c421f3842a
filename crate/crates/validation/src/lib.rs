//! End-to-end acceptance checks for `gmimo`; see `tests/acceptance.rs`.
