//! Acceptance checks for `cellbuck-core`; see `tests/acceptance.rs`.
