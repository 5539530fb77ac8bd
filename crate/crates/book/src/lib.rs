//! mdbook cannot run listings that depend on a workspace crate, so each
//! chapter is included here as a module doc and checked by `cargo test --doc`.
//! A failing doctest is reported under the chapter's module name.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/data.md")]
pub mod data {}
#[doc = include_str!("../../../book/src/features.md")]
pub mod features {}
#[doc = include_str!("../../../book/src/network.md")]
pub mod network {}
#[doc = include_str!("../../../book/src/search.md")]
pub mod search {}
#[doc = include_str!("../../../book/src/baselines.md")]
pub mod baselines {}
#[doc = include_str!("../../../book/src/metrics.md")]
pub mod metrics {}
#[doc = include_str!("../../../book/src/calibration.md")]
pub mod calibration {}
#[doc = include_str!("../../../book/src/audit.md")]
pub mod audit {}
#[doc = include_str!("../../../book/src/pipeline.md")]
pub mod pipeline {}
