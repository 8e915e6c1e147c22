//! Constructive pipeline for embedding bounded-degree, well-separable
//! spanning subgraphs `H` into dense host graphs `G`, plus the supporting
//! machinery: separability certification, regular-pair checking, clique
//! factors on the reduced graph, the exceptional-vertex assignment LP,
//! randomized mapping with rebalancing, and an embedding finisher with an
//! independent verifier.

pub mod assignment;
pub mod bitset;
pub mod embedder;
pub mod error;
pub mod factor;
pub mod graph;
pub mod harness;
pub mod lp;
pub mod regularity;
pub mod separability;

pub use error::{Error, Result};
