//! Domain core of the sketch-to-website pipeline.
//!
//! The pipeline moves a rough layout sketch and a theme prompt through three
//! stages: the sketch is rasterized ([`sketch`]), a requirements document is
//! written from it and its image placeholders resolved ([`prd`], [`images`]),
//! and a website is generated and iteratively refined ([`codegen`]). All model
//! traffic goes through the provider abstraction in [`gateway`].

pub mod codegen;
pub mod gateway;
pub mod hash;
pub mod images;
pub mod job;
pub mod prd;
pub mod prompts;
pub mod sketch;
#[cfg(feature = "testkit")]
pub mod testkit;
