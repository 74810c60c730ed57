//! Company record linkage.
//!
//! Offline, a reference dataset is ingested into an [`store::EntityStore`]
//! and every record name is turned into MinHash band keys stored in a
//! [`blocking::BlockingIndex`]. At query time the same keys retrieve a
//! candidate set which is ranked by a [`scoring::ScoringTree`].

pub mod blocking;
pub mod config;
pub mod error;
pub mod evalbench;
pub mod murmur3;
pub mod pipeline;
pub mod scoring;
pub mod shortname;
pub mod store;
pub mod synth;
pub mod textnorm;

pub use error::{Error, Result};
