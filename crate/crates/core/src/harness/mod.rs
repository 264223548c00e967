//! Evaluation harness: scenario suites with goal checking, the spatial
//! offset evaluation, ratings aggregation and scene rendering.

mod goal;
mod ratings;
mod render;
mod scenario;
mod spatial;
mod suite;

use std::path::Path;

use thiserror::Error;

use crate::agent::AgentError;
use crate::llm_backend::BackendError;

pub use goal::{check_goal, GoalReport, GoalTolerance, PredicateResult};
pub use ratings::{aggregate_ratings, ratings_markdown, RatingError, RatingSet, RatingSummary, RATING_MAX, RATING_MIN};
pub use render::render_scene;
pub use scenario::{load_scenario, load_scenarios, Category, GoalPredicate, Scenario};
pub use spatial::{load_spatial_cases, run_spatial_eval, SpatialCase, SpatialEvalConfig, SpatialReport, SpatialRow};
pub use suite::{
    run_suite, write_episode_artifacts, CategoryRow, ScenarioResult, SuiteBackend, SuiteConfig, SuiteReport,
    STEP_CONVENTION_NOTE,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {error}")]
    Io { path: String, error: std::io::Error },
    #[error("no scenarios found in {0}")]
    NoScenarios(String),
    #[error("scenario file {path}: {message}")]
    Scenario { path: String, message: String },
    #[error("scene file {path}: {message}")]
    Scene { path: String, message: String },
    #[error("scenario {0} has no fixture but the replay backend is selected")]
    MissingFixture(String),
    #[error("goal refers to unknown object {0}")]
    UnknownGoalObject(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("{0}")]
    Config(String),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, error: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            error,
        }
    }
}
