//! The guide under `book/` as doctests, one module per chapter, so that
//! `cargo test` fails when a snippet stops compiling or its assertions stop
//! holding. mdbook cannot link external crates into its own test runner.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/model.md")]
pub mod model {}
#[doc = include_str!("../../../book/src/samplers.md")]
pub mod samplers {}
#[doc = include_str!("../../../book/src/spectral.md")]
pub mod spectral {}
#[doc = include_str!("../../../book/src/diagnostics.md")]
pub mod diagnostics {}
#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
