//! Spatial placement reasoning.
//!
//! Turns a location phrase such as `to the left of the 029_plate` into a
//! position for the held object. [`resolve_geometric`] is a deterministic
//! resolver working from poses and diameters; [`LlmPlacer`] asks a model
//! through a separate few-shot sub-prompt and checks its answer against the
//! geometric one. [`offset_stats`] aggregates placements per specifier.

mod convention;
mod directive;
mod llm;
mod resolve;
mod stats;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm_backend::BackendError;

pub use convention::{AxisConvention, ConventionError};
pub use directive::{parse_directive, CategoryMap, PlacementDirective, Target};
pub use llm::{parse_triple, LlmPlacement, LlmPlacer, ValidationPolicy, SUB_PROMPT_SYSTEM};
pub use resolve::{resolve_geometric, target_geometry, Resolution, ResolveConfig, TargetGeometry};
pub use stats::{offset_stats, OffsetRow, OffsetSample, OffsetStats, StatsError};

/// The closed set of location specifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpatialSpecifier {
    OnTop,
    NextTo,
    Left,
    Right,
    Near,
    Inside,
    InFront,
    Behind,
}

impl SpatialSpecifier {
    pub const ALL: [SpatialSpecifier; 8] = [
        SpatialSpecifier::OnTop,
        SpatialSpecifier::NextTo,
        SpatialSpecifier::Left,
        SpatialSpecifier::Right,
        SpatialSpecifier::Near,
        SpatialSpecifier::Inside,
        SpatialSpecifier::InFront,
        SpatialSpecifier::Behind,
    ];

    /// Row label used in spatial reports.
    pub fn label(self) -> &'static str {
        match self {
            SpatialSpecifier::OnTop => "on top",
            SpatialSpecifier::NextTo => "next to",
            SpatialSpecifier::Left => "left",
            SpatialSpecifier::Right => "right",
            SpatialSpecifier::Near => "near",
            SpatialSpecifier::Inside => "inside",
            SpatialSpecifier::InFront => "in front",
            SpatialSpecifier::Behind => "behind",
        }
    }

    /// Canonical phrase, e.g. `to the left of`.
    pub fn phrase(self) -> &'static str {
        match self {
            SpatialSpecifier::OnTop => "on top of",
            SpatialSpecifier::NextTo => "next to",
            SpatialSpecifier::Left => "to the left of",
            SpatialSpecifier::Right => "to the right of",
            SpatialSpecifier::Near => "near",
            SpatialSpecifier::Inside => "inside",
            SpatialSpecifier::InFront => "in front of",
            SpatialSpecifier::Behind => "behind",
        }
    }

    /// Left, Right, InFront and Behind: a fixed direction, no fallback.
    pub fn is_directional(self) -> bool {
        matches!(
            self,
            SpatialSpecifier::Left | SpatialSpecifier::Right | SpatialSpecifier::InFront | SpatialSpecifier::Behind
        )
    }

    /// OnTop and Inside: the result rests on / in the target.
    pub fn is_supported(self) -> bool {
        matches!(self, SpatialSpecifier::OnTop | SpatialSpecifier::Inside)
    }
}

impl fmt::Display for SpatialSpecifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for SpatialSpecifier {
    type Err = PlacerError;

    /// Accepts report labels (`in front`), snake_case names (`in_front`) and
    /// the surface forms of [`parse_directive`].
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_lowercase().replace('_', " ");
        if let Some(spec) = Self::ALL.into_iter().find(|sp| sp.label() == norm) {
            return Ok(spec);
        }
        directive::match_specifier(&norm)
            .filter(|(start, end, _)| *start == 0 && *end == norm.len())
            .map(|(_, _, spec)| spec)
            .ok_or_else(|| PlacerError::UnknownSpecifier(s.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum PlacerError {
    #[error("unknown location specifier in {0:?}; known specifiers are: on top of, next to, to the left of, to the right of, near, inside, in front of, behind")]
    UnknownSpecifier(String),
    #[error("unknown target {0:?}")]
    UnknownTarget(String),
    #[error("{0} is not in the scene")]
    TargetMissing(String),
    #[error("held diameter must be positive (got {0})")]
    InvalidHeldDiameter(f64),
    #[error("no valid placement: {0}")]
    NoValidPlacement(String),
    #[error("axis convention disagrees with the scene: {0}")]
    ConventionMismatch(String),
    #[error("placement backend unavailable: {0}")]
    BackendUnavailable(#[source] BackendError),
    #[error("could not read coordinates from the placement reply: {0:?}")]
    UnparseableReply(String),
    #[error("placement reply failed validation: {0}")]
    ValidationFailed(String),
}
