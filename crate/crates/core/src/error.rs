use thiserror::Error;

use crate::scene::{LinkKey, NodeId};

#[derive(Debug, Error)]
pub enum RtiError {
    #[error("invalid deployment: {0}")]
    InvalidDeployment(String),

    #[error("channel {0} outside the 802.15.4 range 11..=26")]
    ChannelOutOfRange(i64),

    #[error("link {0} has coincident transmitter and receiver positions")]
    DegenerateLink(LinkKey),

    #[error("unknown node id {0}")]
    UnknownNode(NodeId),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("survey graph does not connect node(s) {0:?} to the reference node")]
    DisconnectedSurvey(Vec<NodeId>),

    #[error("position solver did not converge after {iterations} iterations (objective {objective:.6e})")]
    NotConverged { iterations: usize, objective: f64 },

    #[error("path-loss fit underdetermined for transmitter(s) {0:?}")]
    Underdetermined(Vec<NodeId>),

    #[error("path-loss model has no entry for transmitter {0}")]
    MissingModelEntry(NodeId),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("projection factorization failed: {0}")]
    Factorization(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("misaligned traces: {0}")]
    Misaligned(String),

    #[error("no frames contribute to the RMSE")]
    NoRmseFrames,

    #[error("strategy {strategy} unavailable: {reason}")]
    StrategyUnavailable { strategy: String, reason: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("csv error: {0}")]
    Csv(String),

    #[error("json error: {0}")]
    Json(String),
}

impl From<std::io::Error> for RtiError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

pub type Result<T, E = RtiError> = std::result::Result<T, E>;
