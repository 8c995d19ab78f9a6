//! Holds the `acceptance` test target, which runs last in a workspace test
//! run. Run it alone with `cargo test -p dualcart-verify`.
