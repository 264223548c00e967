use serde::{Deserialize, Serialize};

use super::{AxisConvention, PlacerError, SpatialSpecifier};
use crate::world::{horizontal_distance, Scene, Support, SupportKind, Vec3};

const CONTACT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolveConfig {
    /// Gap left between the held object and the target, meters.
    pub placement_margin: f64,
    /// Near uses `near_factor` times the margin.
    pub near_factor: f64,
}

impl Default for ResolveConfig {
    fn default() -> Self {
        Self {
            placement_margin: 0.02,
            near_factor: 3.0,
        }
    }
}

/// Combined geometry of one or more targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetGeometry {
    pub centroid: Vec3,
    /// Horizontal radius of the circle around the centroid enclosing every
    /// target's bounding circle. Equals the target radius for one target.
    pub radius: f64,
    /// Highest point of the targets along the up direction (height units).
    pub top: f64,
    /// Lowest point of the targets along the up direction (height units).
    pub base: f64,
}

pub fn target_geometry(scene: &Scene, target_ids: &[String], up: f64) -> Result<TargetGeometry, PlacerError> {
    if target_ids.is_empty() {
        return Err(PlacerError::UnknownTarget(String::new()));
    }
    let targets = target_ids
        .iter()
        .map(|id| scene.object(id).ok_or_else(|| PlacerError::TargetMissing(id.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let centroid = targets.iter().map(|o| o.center()).sum::<Vec3>() / targets.len() as f64;
    let radius = targets
        .iter()
        .map(|o| horizontal_distance(&o.center(), &centroid) + o.radius())
        .fold(0.0, f64::max);
    let height = |o: &&crate::world::SceneObject| o.center().z * up;
    let top = targets
        .iter()
        .map(|o| height(o) + o.radius())
        .fold(f64::NEG_INFINITY, f64::max);
    let base = targets
        .iter()
        .map(|o| height(o) - o.radius())
        .fold(f64::INFINITY, f64::min);
    Ok(TargetGeometry {
        centroid,
        radius,
        top,
        base,
    })
}

/// A resolved placement ready for [`Scene::place_at`].
#[derive(Debug, Clone, PartialEq)]
pub struct Resolution {
    pub position: Vec3,
    pub support: Support,
    pub geometry: TargetGeometry,
}

/// Deterministic placement for `specifier` relative to `target_ids`.
///
/// With `c` the target centroid, `r_t` the enclosing target radius, `r_h`
/// the held radius and `m` the margin:
///
/// * Left / Right / InFront / Behind: `c + dir * (r_t + r_h + m)`, resting on
///   the table. Blocked by another object → [`PlacerError::NoValidPlacement`].
/// * NextTo: same distance, starting from the convention's next-to direction
///   and then the fixed scan order until a free, in-bounds spot is found.
/// * Near: as NextTo with distance `r_t + r_h + near_factor * m`, scanning
///   only the fixed order.
/// * OnTop: above `c`, bottom of the held object at the targets' top.
/// * Inside: at `c`, bottom of the held object at the targets' base.
pub fn resolve_geometric(
    scene: &Scene,
    specifier: SpatialSpecifier,
    target_ids: &[String],
    held_diameter: f64,
    convention: &AxisConvention,
    config: &ResolveConfig,
) -> Result<Resolution, PlacerError> {
    if !(held_diameter.is_finite() && held_diameter > 0.0) {
        return Err(PlacerError::InvalidHeldDiameter(held_diameter));
    }
    let up = convention.up_sign();
    if up != scene.table.up {
        return Err(PlacerError::ConventionMismatch(format!(
            "convention puts up at {up:+} Z, scene at {:+} Z",
            scene.table.up
        )));
    }
    let geometry = target_geometry(scene, target_ids, up)?;
    let r_h = held_diameter / 2.0;
    let c = geometry.centroid;

    let blocker = |p: &Vec3, exempt: &[String]| {
        scene
            .objects()
            .iter()
            .filter(|o| !exempt.contains(&o.id))
            .find(|o| horizontal_distance(&o.center(), p) + CONTACT_EPS < o.radius() + r_h)
            .map(|o| o.id.clone())
    };
    let beside = |dir: Vec3, distance: f64| {
        let mut p = c + dir * distance;
        p.z = scene.table.resting_z(r_h);
        p
    };

    match specifier {
        SpatialSpecifier::Left | SpatialSpecifier::Right | SpatialSpecifier::InFront | SpatialSpecifier::Behind => {
            let distance = geometry.radius + r_h + config.placement_margin;
            let p = beside(convention.direction(specifier), distance);
            if let Some(offender) = blocker(&p, target_ids) {
                return Err(PlacerError::NoValidPlacement(format!(
                    "the spot {} the targets is blocked by {offender}",
                    specifier.phrase()
                )));
            }
            Ok(Resolution {
                position: p,
                support: Support::Free,
                geometry,
            })
        }
        SpatialSpecifier::NextTo | SpatialSpecifier::Near => {
            let (first, distance) = if specifier == SpatialSpecifier::NextTo {
                (
                    Some(convention.direction(SpatialSpecifier::NextTo)),
                    geometry.radius + r_h + config.placement_margin,
                )
            } else {
                (
                    None,
                    geometry.radius + r_h + config.near_factor * config.placement_margin,
                )
            };
            let mut tried: Vec<Vec3> = Vec::with_capacity(5);
            for dir in first.into_iter().chain(convention.scan_order()) {
                if tried.iter().any(|d| (d - dir).norm() < 1e-12) {
                    continue;
                }
                tried.push(dir);
                let p = beside(dir, distance);
                if scene.table.contains(&p) && blocker(&p, target_ids).is_none() {
                    return Ok(Resolution {
                        position: p,
                        support: Support::Free,
                        geometry,
                    });
                }
            }
            Err(PlacerError::NoValidPlacement(format!(
                "every spot {} the targets is blocked or off the table",
                specifier.phrase()
            )))
        }
        SpatialSpecifier::OnTop | SpatialSpecifier::Inside => {
            let height = if specifier == SpatialSpecifier::OnTop {
                geometry.top + r_h
            } else {
                geometry.base + r_h
            };
            let p = Vec3::new(c.x, c.y, height * up);
            let exempt: Vec<String> = target_ids.iter().flat_map(|t| scene.stack_group(t)).collect();
            if let Some(offender) = blocker(&p, &exempt) {
                return Err(PlacerError::NoValidPlacement(format!(
                    "the spot {} the targets overlaps {offender}",
                    specifier.phrase()
                )));
            }
            let kind = if specifier == SpatialSpecifier::OnTop {
                SupportKind::OnTop
            } else {
                SupportKind::Inside
            };
            Ok(Resolution {
                position: p,
                support: Support::On(kind, target_ids.to_vec()),
                geometry,
            })
        }
    }
}
