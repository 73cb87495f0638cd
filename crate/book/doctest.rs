//! Compiles every chapter of the guide as doctests, so `cargo test` keeps the
//! snippets honest.

#[doc = include_str!("src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("src/body.md")]
pub mod body {}
#[doc = include_str!("src/data.md")]
pub mod data {}
#[doc = include_str!("src/diffusion.md")]
pub mod diffusion {}
#[doc = include_str!("src/animator.md")]
pub mod animator {}
#[doc = include_str!("src/generator.md")]
pub mod generator {}
#[doc = include_str!("src/metrics.md")]
pub mod metrics {}
#[doc = include_str!("src/cli.md")]
pub mod cli {}
