use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const RATING_MIN: u8 = 1;
pub const RATING_MAX: u8 = 10;

/// Evaluator scores for one final scene.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingSet {
    pub label: String,
    pub ratings: Vec<u8>,
}

impl RatingSet {
    pub fn new(label: impl Into<String>, ratings: impl Into<Vec<u8>>) -> Self {
        Self {
            label: label.into(),
            ratings: ratings.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingSummary {
    pub label: String,
    /// Rounded to two decimals.
    pub mean: f64,
    /// Sample standard deviation (n − 1), rounded to two decimals.
    pub std_dev: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RatingError {
    #[error("{label}: rating {value} is outside {RATING_MIN}..={RATING_MAX}")]
    OutOfRange { label: String, value: u8 },
    #[error("{label}: need at least 2 ratings for a standard deviation, got {count}")]
    TooFew { label: String, count: usize },
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

pub fn aggregate_ratings(sets: &[RatingSet]) -> Result<Vec<RatingSummary>, RatingError> {
    sets.iter()
        .map(|set| {
            if let Some(&value) = set.ratings.iter().find(|r| !(RATING_MIN..=RATING_MAX).contains(*r)) {
                return Err(RatingError::OutOfRange {
                    label: set.label.clone(),
                    value,
                });
            }
            let n = set.ratings.len();
            if n < 2 {
                return Err(RatingError::TooFew {
                    label: set.label.clone(),
                    count: n,
                });
            }
            let values = set.ratings.iter().map(|&r| f64::from(r));
            let mean = values.clone().sum::<f64>() / n as f64;
            let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            Ok(RatingSummary {
                label: set.label.clone(),
                mean: round2(mean),
                std_dev: round2(var.sqrt()),
            })
        })
        .collect()
}

/// Markdown table of summaries.
pub fn ratings_markdown(summaries: &[RatingSummary]) -> String {
    let mut out = String::from("| Scene | Mean Rating | σ |\n|---|---:|---:|\n");
    for s in summaries {
        out.push_str(&format!("| {} | {:.2} | {:.2} |\n", s.label, s.mean, s.std_dev));
    }
    out
}
