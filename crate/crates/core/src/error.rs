//! Shared error type for the whole crate.
//!
//! The variants mirror the distinct failure classes the operations can hit:
//! bad arguments, malformed composite inputs, exact-regime caps, certificate
//! contradictions, and host graphs that violate the degree regime the
//! pipeline assumes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value is out of range or malformed.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Text input failed to parse; carries the 1-based line number.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// A composite input (separation, partition, factor) is internally
    /// inconsistent, as opposed to merely failing a quantitative test.
    #[error("structural error: {0}")]
    Structural(String),

    /// The instance is too large for an exact operation.
    #[error("exact regime exceeded: {0}")]
    Regime(String),

    /// Observed data contradicts a certificate that was supposed to hold.
    #[error("certificate inconsistency: {0}")]
    Inconsistency(String),

    /// The host graph violates the degree regime at reduced scale
    /// (empty candidate intersections, missing move paths).
    #[error("host regime violation: {0}")]
    HostRegime(String),

    /// A pipeline-level precondition failed (e.g. an isolated vertex in
    /// the absorption graph).
    #[error("pipeline error: {0}")]
    Pipeline(String),

    /// A randomized balance target was missed after all retries.
    #[error("balance target missed: {0}")]
    Balance(String),

    /// The linear program has no feasible point.
    #[error("infeasible linear program: {0}")]
    Infeasible(String),

    /// Instance generation cannot satisfy its promises for these parameters.
    #[error("generation error: {0}")]
    Generation(String),

    /// The embedder got stuck; carries the clique and the Hall-set evidence.
    #[error("embedding failed in clique {clique}: {msg}")]
    EmbedFailed { clique: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
