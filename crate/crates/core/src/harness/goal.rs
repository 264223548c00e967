use serde::{Deserialize, Serialize};

use super::scenario::GoalPredicate;
use super::HarnessError;
use crate::placer::{target_geometry, AxisConvention, CategoryMap, SpatialSpecifier};
use crate::world::{horizontal_distance, Scene, SupportKind, Vec3};

/// Thresholds for relation predicates, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalTolerance {
    /// Allowed interpenetration / shortfall.
    pub tolerance: f64,
    /// Largest surface gap that still counts as "next to".
    pub next_to_max_gap: f64,
    /// Largest surface gap that still counts as "near".
    pub near_max_gap: f64,
}

impl Default for GoalTolerance {
    fn default() -> Self {
        Self {
            tolerance: 0.005,
            next_to_max_gap: 0.05,
            near_max_gap: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredicateResult {
    pub predicate: GoalPredicate,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalReport {
    pub passed: bool,
    pub results: Vec<PredicateResult>,
}

impl GoalReport {
    pub fn failures(&self) -> impl Iterator<Item = &PredicateResult> {
        self.results.iter().filter(|r| !r.passed)
    }
}

/// Target ids for a relation: a category name expands to its members in the
/// scene, anything else must be an object id.
fn target_ids(scene: &Scene, target: &str, categories: &CategoryMap) -> Result<Vec<String>, HarnessError> {
    if scene.object(target).is_some() {
        return Ok(vec![target.to_string()]);
    }
    let category = categories.category_for_noun(target).unwrap_or(target);
    let members: Vec<String> = scene
        .ids()
        .into_iter()
        .filter(|id| categories.is_member(category, id))
        .map(String::from)
        .collect();
    if members.is_empty() {
        return Err(HarnessError::UnknownGoalObject(target.to_string()));
    }
    Ok(members)
}

/// Checks every predicate against `scene`.
pub fn check_goal(
    scene: &Scene,
    goals: &[GoalPredicate],
    convention: &AxisConvention,
    categories: &CategoryMap,
    tol: &GoalTolerance,
) -> Result<GoalReport, HarnessError> {
    let mut results = Vec::with_capacity(goals.len());
    for goal in goals {
        let (passed, detail) = match goal {
            GoalPredicate::HeldEmpty => match scene.held() {
                None => (true, "gripper is empty".to_string()),
                Some(h) => (false, format!("still holding {}", h.id)),
            },
            GoalPredicate::ObjectAbsentExpected { object } => match scene.object(object) {
                None if scene.held().map(|h| &h.id) != Some(object) => (true, format!("{object} is absent")),
                _ => (false, format!("{object} is present")),
            },
            GoalPredicate::Relation {
                specifier,
                object,
                target,
            } => {
                let placed = scene
                    .object(object)
                    .ok_or_else(|| HarnessError::UnknownGoalObject(object.clone()))?;
                let mut ids = target_ids(scene, target, categories)?;
                ids.retain(|id| id != object);
                if ids.is_empty() {
                    return Err(HarnessError::UnknownGoalObject(target.clone()));
                }
                check_relation(
                    scene,
                    *specifier,
                    &placed.id,
                    placed.center(),
                    placed.radius(),
                    &ids,
                    convention,
                    tol,
                )
            }
        };
        results.push(PredicateResult {
            predicate: goal.clone(),
            passed,
            detail,
        });
    }
    Ok(GoalReport {
        passed: results.iter().all(|r| r.passed),
        results,
    })
}

#[allow(clippy::too_many_arguments)]
fn check_relation(
    scene: &Scene,
    specifier: SpatialSpecifier,
    object: &str,
    position: Vec3,
    radius: f64,
    targets: &[String],
    convention: &AxisConvention,
    tol: &GoalTolerance,
) -> (bool, String) {
    let geometry = match target_geometry(scene, targets, convention.up_sign()) {
        Ok(g) => g,
        Err(e) => return (false, e.to_string()),
    };
    let distance = horizontal_distance(&position, &geometry.centroid);
    let required = geometry.radius + radius;
    let gap = distance - required;
    let links: Vec<SupportKind> = targets
        .iter()
        .filter_map(|t| scene.support_between(object, t))
        .collect();
    match specifier {
        SpatialSpecifier::OnTop | SpatialSpecifier::Inside => {
            let wanted = if specifier == SpatialSpecifier::OnTop {
                SupportKind::OnTop
            } else {
                SupportKind::Inside
            };
            if links.contains(&wanted) {
                (true, format!("{object} is {wanted} the target"))
            } else if let Some(other) = links.first() {
                (false, format!("{object} is {other} the target, not {wanted} it"))
            } else {
                (false, format!("{object} is not {wanted} the target"))
            }
        }
        _ if !links.is_empty() => (false, format!("{object} is {} the target", links[0])),
        SpatialSpecifier::NextTo | SpatialSpecifier::Near => {
            let max_gap = if specifier == SpatialSpecifier::NextTo {
                tol.next_to_max_gap
            } else {
                tol.near_max_gap
            };
            if gap < -tol.tolerance {
                (false, format!("overlaps the target (gap {gap:.3} m)"))
            } else if gap > max_gap {
                (false, format!("too far: gap {gap:.3} m exceeds {max_gap:.3} m"))
            } else {
                (true, format!("gap {gap:.3} m"))
            }
        }
        _ => {
            let dir = convention.direction(specifier);
            let offset = position - geometry.centroid;
            let offset = Vec3::new(offset.x, offset.y, 0.0);
            let along = offset.dot(&dir);
            let perp = (offset - dir * along).norm();
            if perp > along.abs() {
                (
                    false,
                    format!("axis mismatch: {perp:.3} m across vs {along:.3} m along"),
                )
            } else if along <= 0.0 {
                (
                    false,
                    format!("sign mismatch: offset {along:.3} m along the {specifier} direction"),
                )
            } else if gap < -tol.tolerance {
                (false, format!("too close: {distance:.3} m < {required:.3} m"))
            } else {
                (true, format!("offset {along:.3} m along the {specifier} direction"))
            }
        }
    }
}
