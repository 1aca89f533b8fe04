//! Criterion harness crate; see benches/profiles.rs.
