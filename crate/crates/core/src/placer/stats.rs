use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::SpatialSpecifier;
use crate::world::Vec3;

/// One placement: where the object went and where the target centroid was.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetSample {
    pub specifier: SpatialSpecifier,
    /// Identifies repeated trials of the same scene and specifier.
    pub trial_group: String,
    pub placed: Vec3,
    pub centroid: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffsetRow {
    pub specifier: SpatialSpecifier,
    /// Mean of `placed - centroid` per axis, meters.
    pub mean_offset: [f64; 3],
    /// Mean over axes and trial groups of the population variance of the
    /// placed position, m².
    pub avg_variance: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffsetStats {
    pub rows: Vec<OffsetRow>,
}

impl OffsetStats {
    pub fn row(&self, specifier: SpatialSpecifier) -> Option<&OffsetRow> {
        self.rows.iter().find(|r| r.specifier == specifier)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("no offset samples")]
    Empty,
}

/// Computed on values shifted by the first one, so identical inputs give
/// exactly zero.
fn population_variance(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let Some(first) = values.clone().next() else {
        return 0.0;
    };
    let shifted = values.map(move |v| v - first);
    let n = shifted.clone().count() as f64;
    let mean = shifted.clone().sum::<f64>() / n;
    shifted.map(|d| (d - mean).powi(2)).sum::<f64>() / n
}

/// Per-specifier mean offset and average coordinate variance. Rows come out
/// in [`SpatialSpecifier::ALL`] order and only for specifiers with samples.
pub fn offset_stats(samples: &[OffsetSample]) -> Result<OffsetStats, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::Empty);
    }
    let mut by_spec: BTreeMap<SpatialSpecifier, BTreeMap<&str, Vec<&OffsetSample>>> = BTreeMap::new();
    for s in samples {
        by_spec
            .entry(s.specifier)
            .or_default()
            .entry(s.trial_group.as_str())
            .or_default()
            .push(s);
    }
    let rows = SpatialSpecifier::ALL
        .into_iter()
        .filter_map(|spec| {
            let groups = by_spec.get(&spec)?;
            let all: Vec<&OffsetSample> = groups.values().flatten().copied().collect();
            let n = all.len() as f64;
            let mean: Vec3 = all.iter().map(|s| s.placed - s.centroid).sum::<Vec3>() / n;
            let avg_variance = groups
                .values()
                .map(|trials| {
                    (0..3)
                        .map(|axis| population_variance(trials.iter().map(move |s| s.placed[axis])))
                        .sum::<f64>()
                        / 3.0
                })
                .sum::<f64>()
                / groups.len() as f64;
            Some(OffsetRow {
                specifier: spec,
                mean_offset: mean.into(),
                avg_variance,
                samples: all.len(),
            })
        })
        .collect();
    Ok(OffsetStats { rows })
}
