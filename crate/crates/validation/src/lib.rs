//! Holds the `acceptance` test target, a standalone harness that checks the
//! library and command-line behavior end to end. Run it with
//! `cargo test -p gatetrim-validation --test acceptance`.
