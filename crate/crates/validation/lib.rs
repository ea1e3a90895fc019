//! Holds the `acceptance` test target. Run it with
//! `cargo test -p einsel-validation --test acceptance`.
