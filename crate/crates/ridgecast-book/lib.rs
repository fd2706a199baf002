//! Compiles the book's Rust snippets as doctests, one module per chapter,
//! so `cargo test` keeps the book honest.

#[doc = include_str!("../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../book/src/data.md")]
pub mod data {}
#[doc = include_str!("../../book/src/sampler.md")]
pub mod sampler {}
#[doc = include_str!("../../book/src/gibbs.md")]
pub mod gibbs {}
#[doc = include_str!("../../book/src/scoring.md")]
pub mod scoring {}
#[doc = include_str!("../../book/src/experiments.md")]
pub mod experiments {}
#[doc = include_str!("../../book/src/cli.md")]
pub mod cli {}
