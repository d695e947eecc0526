//! Learning to singulate cluttered objects with a push-proposal network.
//!
//! The crate holds the whole pipeline: a planar quasi-static push simulator
//! ([`scene`]), synthetic over-segmented observations ([`perception`]), push
//! proposal sampling ([`proposals`]), the push-centric image encoding
//! ([`encoder`]), a from-scratch CNN ranker ([`network`]), the automatic
//! labeling oracle ([`oracle`]), the free-space + tracking baseline
//! ([`baseline`]) and the closed-loop trial harness ([`runner`]).

pub mod baseline;
pub mod dataset;
pub mod encoder;
pub mod error;
pub mod geometry;
pub mod network;
pub mod oracle;
pub mod perception;
pub mod proposals;
pub mod rng;
pub mod runner;
pub mod scene;

pub use error::{Error, Result};
