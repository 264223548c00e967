//! Simulated tabletop.
//!
//! A [`Scene`] is an immutable snapshot of the table: placed objects with 6D
//! poses and bounding-sphere diameters, an optional held object, and the
//! registry of stacked/contained pairs. The four tool behaviors (list, pick,
//! place, release) each return a successor scene and leave `self` untouched.
//!
//! Failures are [`WorldError`]s whose `Display` text is the observation the
//! planning agent reads.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use nalgebra::Quaternion;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = nalgebra::Vector3<f64>;

/// Maximum deviation of a quaternion norm from 1.
pub const QUATERNION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldConfig {
    /// Allowed horizontal interpenetration between two placed objects, meters.
    pub overlap_tolerance: f64,
    /// Extra clearance demanded by [`Scene::release_free_space`], meters.
    pub free_space_margin: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            overlap_tolerance: 0.005,
            free_space_margin: 0.02,
        }
    }
}

/// Translation plus unit quaternion orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose6D {
    translation: Vec3,
    orientation: Quaternion<f64>,
}

impl Pose6D {
    /// Builds a pose from a translation and an `(x, y, z, w)` quaternion.
    pub fn new(translation: Vec3, orientation_xyzw: [f64; 4]) -> Result<Self, PoseError> {
        if !translation.iter().all(|c| c.is_finite()) {
            return Err(PoseError::NonFiniteTranslation);
        }
        let [x, y, z, w] = orientation_xyzw;
        let orientation = Quaternion::new(w, x, y, z);
        let norm = orientation.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > QUATERNION_TOLERANCE {
            return Err(PoseError::NonUnitQuaternion(norm));
        }
        Ok(Self {
            translation,
            orientation,
        })
    }

    pub fn at(translation: Vec3) -> Self {
        Self {
            translation,
            orientation: Quaternion::identity(),
        }
    }

    pub fn translation(&self) -> Vec3 {
        self.translation
    }

    /// Orientation as `[x, y, z, w]`.
    pub fn orientation_xyzw(&self) -> [f64; 4] {
        let c = self.orientation.coords;
        [c[0], c[1], c[2], c[3]]
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PoseError {
    #[error("translation has non-finite components")]
    NonFiniteTranslation,
    #[error("non-unit quaternion (norm {0})")]
    NonUnitQuaternion(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub id: String,
    pub pose: Pose6D,
    pub diameter: f64,
}

impl SceneObject {
    pub fn new(id: impl Into<String>, pose: Pose6D, diameter: f64) -> Self {
        Self {
            id: id.into(),
            pose,
            diameter,
        }
    }

    pub fn radius(&self) -> f64 {
        self.diameter / 2.0
    }

    pub fn center(&self) -> Vec3 {
        self.pose.translation
    }
}

/// Object in the gripper. Its pose is forgotten until it is put down again.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Held {
    pub id: String,
    pub diameter: f64,
}

/// Horizontal extent of the table plus its surface height.
///
/// The vertical axis of the scene frame is Z. `up` is `+1.0` or `-1.0` and
/// says which way along Z points away from the table surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Table {
    pub min: [f64; 2],
    pub max: [f64; 2],
    pub surface_z: f64,
    pub up: f64,
}

impl Table {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Self {
        Self {
            min,
            max,
            surface_z: 0.0,
            up: -1.0,
        }
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        p.x >= self.min[0] && p.x <= self.max[0] && p.y >= self.min[1] && p.y <= self.max[1]
    }

    /// Z coordinate of the center of a sphere of `radius` resting on the surface.
    pub fn resting_z(&self, radius: f64) -> f64 {
        self.surface_z + self.up * radius
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportKind {
    OnTop,
    Inside,
}

impl fmt::Display for SupportKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SupportKind::OnTop => "on top of",
            SupportKind::Inside => "inside",
        })
    }
}

/// `object` rests on top of / inside `target`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SupportLink {
    pub object: String,
    pub target: String,
    pub relation: SupportKind,
}

/// How a held object is being put down.
#[derive(Debug, Clone, PartialEq)]
pub enum Support {
    /// Directly on the table; subject to bounds and collision checks.
    Free,
    /// Stacked on / contained in the given objects. Their stack groups are
    /// exempt from the collision check.
    On(SupportKind, Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorldError {
    #[error("Cannot pick up {0}: there is no object with that name in the scene.")]
    NotFound(String),
    #[error("Cannot pick up {requested}: the gripper is already holding {held}.")]
    AlreadyHolding { held: String, requested: String },
    #[error("Cannot pick up {id}: {burden} is {relation} it.")]
    Supporting {
        id: String,
        burden: String,
        relation: SupportKind,
    },
    #[error("Cannot {0}: the gripper is empty.")]
    NothingHeld(&'static str),
    #[error("Cannot place {id}: {target} is not in the scene.")]
    TargetMissing { id: String, target: String },
    #[error("Cannot place {id} at {position}: the position is outside the table bounds.")]
    OutOfBounds { id: String, position: Coords },
    #[error("Cannot place {id} at {position}: it would collide with {offender}.")]
    CollisionRejected {
        id: String,
        position: Coords,
        offender: String,
    },
    #[error("Cannot release {0}: there is no free space left on the table.")]
    NoFreeSpace(String),
}

/// Display helper for positions in observations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coords(pub Vec3);

impl fmt::Display for Coords {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.3}, {:.3}, {:.3})", self.0.x, self.0.y, self.0.z)
    }
}

/// Scene invariant violations reported by [`Scene::check_invariants`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum InvariantViolation {
    #[error("empty object id")]
    EmptyId,
    #[error("duplicate object id {0}")]
    DuplicateId(String),
    #[error("{0}: non-positive diameter")]
    NonPositiveDiameter(String),
    #[error("{0}: invalid pose: {1}")]
    InvalidPose(String, PoseError),
    #[error("held object {0} is also placed")]
    HeldAlsoPlaced(String),
    #[error("{a} and {b} overlap: distance {distance:.4} < {required:.4}")]
    Overlap {
        a: String,
        b: String,
        distance: f64,
        required: f64,
    },
    #[error("support link references unknown object {0}")]
    DanglingSupport(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub table: Table,
    objects: Vec<SceneObject>,
    held: Option<Held>,
    supports: Vec<SupportLink>,
    config: WorldConfig,
}

pub fn horizontal_distance(a: &Vec3, b: &Vec3) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

impl Scene {
    pub fn new(table: Table) -> Self {
        Self {
            table,
            objects: Vec::new(),
            held: None,
            supports: Vec::new(),
            config: WorldConfig::default(),
        }
    }

    pub fn with_config(mut self, config: WorldConfig) -> Self {
        self.config = config;
        self
    }

    /// Adds a placed object without any collision check. Used while building
    /// scenes; [`Scene::check_invariants`] validates the result.
    pub fn with_object(mut self, object: SceneObject) -> Self {
        self.objects.push(object);
        self
    }

    pub fn with_held(mut self, held: Held) -> Self {
        self.held = Some(held);
        self
    }

    /// Shifts one object's translation by `delta`; unknown ids are ignored.
    pub fn with_offset(mut self, id: &str, delta: Vec3) -> Self {
        if let Some(o) = self.objects.iter_mut().find(|o| o.id == id) {
            o.pose.translation += delta;
        }
        self
    }

    pub fn with_support(mut self, link: SupportLink) -> Self {
        self.supports.push(link);
        self
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn objects(&self) -> &[SceneObject] {
        &self.objects
    }

    pub fn object(&self, id: &str) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn held(&self) -> Option<&Held> {
        self.held.as_ref()
    }

    pub fn supports(&self) -> &[SupportLink] {
        &self.supports
    }

    /// The relation recorded between `object` and `target`, if any.
    pub fn support_between(&self, object: &str, target: &str) -> Option<SupportKind> {
        self.supports
            .iter()
            .find(|l| l.object == object && l.target == target)
            .map(|l| l.relation)
    }

    pub fn ids(&self) -> Vec<&str> {
        self.objects.iter().map(|o| o.id.as_str()).collect()
    }

    /// Maps a loosely written object name to a placed object id.
    ///
    /// Accepts the exact id, or a name that matches the part after the
    /// numeric prefix (`banana` or `mustard bottle` for `006_mustard_bottle`)
    /// when exactly one object matches.
    pub fn resolve_name(&self, name: &str) -> Option<&str> {
        let name = name
            .trim()
            .trim_matches(|c: char| matches!(c, '\'' | '"' | '`' | '.' | ','))
            .trim();
        let name = name.strip_prefix("the ").unwrap_or(name).trim();
        if let Some(o) = self.object(name) {
            return Some(&o.id);
        }
        let wanted = name.to_lowercase().replace([' ', '-'], "_");
        if wanted.is_empty() {
            return None;
        }
        let mut matches = self.objects.iter().filter(|o| {
            let id = o.id.to_lowercase();
            id == wanted || id.split_once('_').is_some_and(|(_, rest)| rest == wanted)
        });
        match (matches.next(), matches.next()) {
            (Some(o), None) => Some(&o.id),
            _ => None,
        }
    }

    /// Placed-object ids rendered as the agent sees them: `['a', 'b']`.
    pub fn object_list(&self) -> String {
        let quoted: Vec<String> = self.objects.iter().map(|o| format!("'{}'", o.id)).collect();
        format!("[{}]", quoted.join(", "))
    }

    /// Objects connected to `id` through stacked/contained links, including `id`.
    pub fn stack_group(&self, id: &str) -> BTreeSet<String> {
        let mut group = BTreeSet::from([id.to_string()]);
        loop {
            let before = group.len();
            for link in &self.supports {
                if group.contains(&link.object) || group.contains(&link.target) {
                    group.insert(link.object.clone());
                    group.insert(link.target.clone());
                }
            }
            if group.len() == before {
                return group;
            }
        }
    }

    fn stack_group_ids(&self) -> BTreeMap<&str, usize> {
        let mut labels = BTreeMap::new();
        let mut next = 0;
        for o in &self.objects {
            if labels.contains_key(o.id.as_str()) {
                continue;
            }
            for member in self.stack_group(&o.id) {
                if let Some(obj) = self.object(&member) {
                    labels.insert(obj.id.as_str(), next);
                }
            }
            next += 1;
        }
        labels
    }

    pub fn check_invariants(&self) -> Result<(), InvariantViolation> {
        let mut seen = BTreeSet::new();
        for o in &self.objects {
            if o.id.is_empty() {
                return Err(InvariantViolation::EmptyId);
            }
            if !seen.insert(o.id.as_str()) {
                return Err(InvariantViolation::DuplicateId(o.id.clone()));
            }
            if !(o.diameter.is_finite() && o.diameter > 0.0) {
                return Err(InvariantViolation::NonPositiveDiameter(o.id.clone()));
            }
            if let Err(e) = Pose6D::new(o.pose.translation, o.pose.orientation_xyzw()) {
                return Err(InvariantViolation::InvalidPose(o.id.clone(), e));
            }
        }
        if let Some(h) = &self.held {
            if h.id.is_empty() {
                return Err(InvariantViolation::EmptyId);
            }
            if seen.contains(h.id.as_str()) {
                return Err(InvariantViolation::HeldAlsoPlaced(h.id.clone()));
            }
            if h.diameter.is_nan() || h.diameter <= 0.0 {
                return Err(InvariantViolation::NonPositiveDiameter(h.id.clone()));
            }
        }
        for link in &self.supports {
            for id in [&link.object, &link.target] {
                if !seen.contains(id.as_str()) {
                    return Err(InvariantViolation::DanglingSupport(id.clone()));
                }
            }
        }
        let groups = self.stack_group_ids();
        for (i, a) in self.objects.iter().enumerate() {
            for b in &self.objects[i + 1..] {
                if groups[a.id.as_str()] == groups[b.id.as_str()] {
                    continue;
                }
                let distance = horizontal_distance(&a.center(), &b.center());
                let required = (a.diameter + b.diameter) / 2.0 - self.config.overlap_tolerance;
                if distance < required {
                    return Err(InvariantViolation::Overlap {
                        a: a.id.clone(),
                        b: b.id.clone(),
                        distance,
                        required,
                    });
                }
            }
        }
        Ok(())
    }

    /// Moves `id` from the table into the gripper.
    pub fn pick(&self, id: &str) -> Result<(Scene, String), WorldError> {
        if let Some(held) = &self.held {
            return Err(WorldError::AlreadyHolding {
                held: held.id.clone(),
                requested: id.to_string(),
            });
        }
        let index = self
            .objects
            .iter()
            .position(|o| o.id == id)
            .ok_or_else(|| WorldError::NotFound(id.to_string()))?;
        if let Some(link) = self.supports.iter().find(|l| l.target == id) {
            return Err(WorldError::Supporting {
                id: id.to_string(),
                burden: link.object.clone(),
                relation: link.relation,
            });
        }
        let mut next = self.clone();
        let object = next.objects.remove(index);
        next.supports.retain(|l| l.object != id);
        next.held = Some(Held {
            id: object.id,
            diameter: object.diameter,
        });
        Ok((next, format!("You have picked up {id}")))
    }

    /// Puts the held object down at `position` with identity orientation.
    ///
    /// `phrase` is the location phrase echoed in the observation.
    pub fn place_at(&self, position: Vec3, support: &Support, phrase: &str) -> Result<(Scene, String), WorldError> {
        let held = self.held.as_ref().ok_or(WorldError::NothingHeld("place"))?;
        let exempt = match support {
            Support::Free => {
                if !position.iter().all(|c| c.is_finite()) || !self.table.contains(&position) {
                    return Err(WorldError::OutOfBounds {
                        id: held.id.clone(),
                        position: Coords(position),
                    });
                }
                BTreeSet::new()
            }
            Support::On(_, targets) => {
                let mut exempt = BTreeSet::new();
                for target in targets {
                    if self.object(target).is_none() {
                        return Err(WorldError::TargetMissing {
                            id: held.id.clone(),
                            target: target.clone(),
                        });
                    }
                    exempt.extend(self.stack_group(target));
                }
                if !position.iter().all(|c| c.is_finite()) {
                    return Err(WorldError::OutOfBounds {
                        id: held.id.clone(),
                        position: Coords(position),
                    });
                }
                exempt
            }
        };
        let offender = self
            .objects
            .iter()
            .filter(|o| !exempt.contains(&o.id))
            .map(|o| (o, horizontal_distance(&o.center(), &position)))
            .filter(|(o, d)| *d < (o.diameter + held.diameter) / 2.0 - self.config.overlap_tolerance)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((o, _)) = offender {
            return Err(WorldError::CollisionRejected {
                id: held.id.clone(),
                position: Coords(position),
                offender: o.id.clone(),
            });
        }

        let mut next = self.clone();
        let held = next.held.take().expect("checked above");
        if let Support::On(kind, targets) = support {
            for target in targets {
                next.supports.push(SupportLink {
                    object: held.id.clone(),
                    target: target.clone(),
                    relation: *kind,
                });
            }
        }
        let phrase = phrase.trim();
        let observation = if phrase.is_empty() {
            format!("You have placed {} at {}", held.id, Coords(position))
        } else {
            format!("You have placed {} {}", held.id, phrase)
        };
        next.objects
            .push(SceneObject::new(held.id, Pose6D::at(position), held.diameter));
        Ok((next, observation))
    }

    /// Candidate cell centers for a grid of pitch `pitch`, row-major from the
    /// table minimum corner.
    fn grid_cells(&self, pitch: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let span = |axis: usize| {
            let extent = self.table.max[axis] - self.table.min[axis];
            // Cells must lie fully on the table.
            ((extent / pitch) + 1e-9).floor().max(0.0) as usize
        };
        let (cols, rows) = (span(0), span(1));
        let (min, half) = (self.table.min, pitch / 2.0);
        (0..rows).flat_map(move |row| {
            (0..cols).map(move |col| (min[0] + half + col as f64 * pitch, min[1] + half + row as f64 * pitch))
        })
    }

    /// Puts the held object down in the first free grid cell.
    ///
    /// Cells have pitch equal to the held diameter and are scanned row by row
    /// from the minimum corner. A cell is free when its clearance to every
    /// placed object is at least `(d_held + d_other) / 2 + free_space_margin`.
    pub fn release_free_space(&self) -> Result<(Scene, String), WorldError> {
        let held = self.held.as_ref().ok_or(WorldError::NothingHeld("release"))?;
        let margin = self.config.free_space_margin;
        let z = self.table.resting_z(held.diameter / 2.0);
        let cell = self.grid_cells(held.diameter).find(|&(x, y)| {
            let p = Vec3::new(x, y, z);
            self.objects
                .iter()
                .all(|o| horizontal_distance(&o.center(), &p) >= (o.diameter + held.diameter) / 2.0 + margin)
        });
        let Some((x, y)) = cell else {
            return Err(WorldError::NoFreeSpace(held.id.clone()));
        };
        let position = Vec3::new(x, y, z);
        let mut next = self.clone();
        let held = next.held.take().expect("checked above");
        let observation = format!("You have released {} at {}", held.id, Coords(position));
        next.objects
            .push(SceneObject::new(held.id, Pose6D::at(position), held.diameter));
        Ok((next, observation))
    }
}

// ---------------------------------------------------------------------------
// Scene file
// ---------------------------------------------------------------------------

#[derive(Debug, Error)]
pub enum SceneFileError {
    #[error("malformed scene document: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("{field}: {message}")]
    Field { field: String, message: String },
}

fn field_error(field: impl Into<String>, message: impl Into<String>) -> SceneFileError {
    SceneFileError::Field {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundsDoc {
    min: [f64; 2],
    max: [f64; 2],
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectDoc {
    id: String,
    translation: [f64; 3],
    quaternion: [f64; 4],
    diameter: f64,
}

fn default_up() -> f64 {
    -1.0
}

fn is_default_up(up: &f64) -> bool {
    *up == -1.0
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneDoc {
    table_bounds: BoundsDoc,
    #[serde(default, skip_serializing_if = "is_zero")]
    table_surface_z: f64,
    #[serde(default = "default_up", skip_serializing_if = "is_default_up")]
    up: f64,
    objects: Vec<ObjectDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    held: Option<Held>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    supports: Vec<SupportLink>,
}

/// Parses a scene document (JSON).
///
/// ```
/// let scene = tamp_core::world::load_scene(r#"{
///   "table_bounds": {"min": [-0.5, -0.4], "max": [0.5, 0.4]},
///   "objects": [
///     {"id": "029_plate", "translation": [0.0, 0.0, -0.02], "quaternion": [0, 0, 0, 1], "diameter": 0.26}
///   ]
/// }"#).unwrap();
/// assert_eq!(scene.object_list(), "['029_plate']");
/// ```
pub fn load_scene(document: &str) -> Result<Scene, SceneFileError> {
    let doc: SceneDoc = serde_json::from_str(document)?;
    let b = &doc.table_bounds;
    if !b.min.iter().chain(&b.max).all(|v| v.is_finite()) {
        return Err(field_error("table_bounds", "non-finite bound"));
    }
    if b.min[0] >= b.max[0] || b.min[1] >= b.max[1] {
        return Err(field_error("table_bounds", "min must be strictly below max"));
    }
    if !doc.table_surface_z.is_finite() {
        return Err(field_error("table_surface_z", "non-finite value"));
    }
    if doc.up != 1.0 && doc.up != -1.0 {
        return Err(field_error("up", "must be 1 or -1"));
    }
    let mut scene = Scene::new(Table {
        min: b.min,
        max: b.max,
        surface_z: doc.table_surface_z,
        up: doc.up,
    });
    let mut seen = BTreeSet::new();
    for (i, o) in doc.objects.into_iter().enumerate() {
        let at = |f: &str| format!("objects[{i}].{f}");
        if o.id.trim().is_empty() {
            return Err(field_error(at("id"), "empty id"));
        }
        if !seen.insert(o.id.clone()) {
            return Err(field_error(at("id"), format!("duplicate id {}", o.id)));
        }
        if !(o.diameter.is_finite() && o.diameter > 0.0) {
            return Err(field_error(
                at("diameter"),
                format!("non-positive diameter ({})", o.diameter),
            ));
        }
        let pose = Pose6D::new(Vec3::from(o.translation), o.quaternion).map_err(|e| {
            let field = match e {
                PoseError::NonFiniteTranslation => "translation",
                PoseError::NonUnitQuaternion(_) => "quaternion",
            };
            field_error(at(field), e.to_string())
        })?;
        scene.objects.push(SceneObject::new(o.id, pose, o.diameter));
    }
    if let Some(held) = doc.held {
        if held.id.trim().is_empty() {
            return Err(field_error("held.id", "empty id"));
        }
        if seen.contains(&held.id) {
            return Err(field_error("held.id", format!("{} is also placed", held.id)));
        }
        if !(held.diameter.is_finite() && held.diameter > 0.0) {
            return Err(field_error(
                "held.diameter",
                format!("non-positive diameter ({})", held.diameter),
            ));
        }
        scene.held = Some(held);
    }
    for (i, link) in doc.supports.into_iter().enumerate() {
        for id in [&link.object, &link.target] {
            if !seen.contains(id) {
                return Err(field_error(format!("supports[{i}]"), format!("unknown object {id}")));
            }
        }
        scene.supports.push(link);
    }
    scene
        .check_invariants()
        .map_err(|e| field_error("objects", e.to_string()))?;
    Ok(scene)
}

impl Scene {
    /// Serializes to the scene document format accepted by [`load_scene`].
    pub fn to_document(&self) -> String {
        let doc = SceneDoc {
            table_bounds: BoundsDoc {
                min: self.table.min,
                max: self.table.max,
            },
            table_surface_z: self.table.surface_z,
            up: self.table.up,
            objects: self
                .objects
                .iter()
                .map(|o| ObjectDoc {
                    id: o.id.clone(),
                    translation: o.center().into(),
                    quaternion: o.pose.orientation_xyzw(),
                    diameter: o.diameter,
                })
                .collect(),
            held: self.held.clone(),
            supports: self.supports.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("scene serializes") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn banana_plate() -> Scene {
        Scene::new(Table::new([-0.5, -0.4], [0.5, 0.4]))
            .with_object(SceneObject::new(
                "029_plate",
                Pose6D::at(Vec3::new(0.0, 0.0, -0.02)),
                0.26,
            ))
            .with_object(SceneObject::new(
                "011_banana",
                Pose6D::at(Vec3::new(-0.3, 0.2, -0.02)),
                0.2,
            ))
    }

    #[test]
    fn object_list_matches_observation_format() {
        let scene = banana_plate();
        assert_eq!(scene.object_list(), "['029_plate', '011_banana']");
        let (after, _) = scene.pick("011_banana").unwrap();
        assert_eq!(after.object_list(), "['029_plate']");
        assert_eq!(Scene::new(Table::new([0.0, 0.0], [1.0, 1.0])).object_list(), "[]");
    }

    #[test]
    fn resolve_name_accepts_loose_forms() {
        let scene = banana_plate();
        assert_eq!(scene.resolve_name("011_banana"), Some("011_banana"));
        assert_eq!(scene.resolve_name("'011_banana'"), Some("011_banana"));
        assert_eq!(scene.resolve_name("the banana"), Some("011_banana"));
        assert_eq!(scene.resolve_name("Plate."), Some("029_plate"));
        assert_eq!(scene.resolve_name("mustard"), None);
        assert_eq!(scene.resolve_name(""), None);
    }

    #[test]
    fn pick_observations() {
        let scene = banana_plate();
        let (held, obs) = scene.pick("011_banana").unwrap();
        assert_eq!(obs, "You have picked up 011_banana");
        assert_eq!(held.held().unwrap().id, "011_banana");
        // input untouched
        assert!(scene.held().is_none());
        assert_eq!(scene.objects().len(), 2);

        let err = held.pick("011_banana").unwrap_err();
        assert!(matches!(err, WorldError::AlreadyHolding { .. }));
        assert!(err.to_string().contains("already holding 011_banana"));

        let err = scene.pick("999_ghost").unwrap_err();
        assert_eq!(err, WorldError::NotFound("999_ghost".into()));
        assert!(err.to_string().contains("999_ghost"));
    }

    #[test]
    fn place_observation_echoes_phrase() {
        let (held, _) = banana_plate().pick("011_banana").unwrap();
        let (placed, obs) = held
            .place_at(
                Vec3::new(0.25, 0.0, -0.1),
                &Support::Free,
                "to the left of the 029_plate",
            )
            .unwrap();
        assert_eq!(obs, "You have placed 011_banana to the left of the 029_plate");
        assert!(placed.held().is_none());
        assert_eq!(
            placed.object("011_banana").unwrap().pose.orientation_xyzw(),
            [0.0, 0.0, 0.0, 1.0]
        );
        placed.check_invariants().unwrap();
    }

    #[test]
    fn place_errors() {
        let scene = banana_plate();
        let err = scene.place_at(Vec3::zeros(), &Support::Free, "anywhere").unwrap_err();
        assert_eq!(err, WorldError::NothingHeld("place"));

        let (held, _) = scene.pick("011_banana").unwrap();
        let err = held
            .place_at(Vec3::new(2.0, 0.0, 0.0), &Support::Free, "far away")
            .unwrap_err();
        assert!(matches!(err, WorldError::OutOfBounds { .. }));

        // Plate radius 0.13 + banana radius 0.10 - 0.005 tolerance = 0.225.
        let err = held
            .place_at(Vec3::new(0.22, 0.0, 0.0), &Support::Free, "x")
            .unwrap_err();
        assert_eq!(
            err,
            WorldError::CollisionRejected {
                id: "011_banana".into(),
                position: Coords(Vec3::new(0.22, 0.0, 0.0)),
                offender: "029_plate".into(),
            }
        );
        assert!(held.place_at(Vec3::new(0.226, 0.0, 0.0), &Support::Free, "x").is_ok());
    }

    #[test]
    fn stacking_is_exempt_and_recorded() {
        let (held, _) = banana_plate().pick("011_banana").unwrap();
        let (stacked, _) = held
            .place_at(
                Vec3::new(0.0, 0.0, -0.2),
                &Support::On(SupportKind::OnTop, vec!["029_plate".into()]),
                "on top of the 029_plate",
            )
            .unwrap();
        stacked.check_invariants().unwrap();
        assert_eq!(
            stacked.support_between("011_banana", "029_plate"),
            Some(SupportKind::OnTop)
        );
        let err = stacked.pick("029_plate").unwrap_err();
        assert!(matches!(err, WorldError::Supporting { .. }));
        let (lifted, _) = stacked.pick("011_banana").unwrap();
        assert!(lifted.supports().is_empty());
    }

    #[test]
    fn release_on_empty_table_uses_first_cell() {
        let scene = Scene::new(Table::new([-0.5, -0.4], [0.5, 0.4])).with_held(Held {
            id: "013_apple".into(),
            diameter: 0.08,
        });
        let (after, obs) = scene.release_free_space().unwrap();
        let apple = after.object("013_apple").unwrap();
        assert_eq!(apple.center(), Vec3::new(-0.5 + 0.04, -0.4 + 0.04, -0.04));
        assert_eq!(obs, "You have released 013_apple at (-0.460, -0.360, -0.040)");
    }

    #[test]
    fn release_errors() {
        let scene = banana_plate();
        assert_eq!(
            scene.release_free_space().unwrap_err(),
            WorldError::NothingHeld("release")
        );
        // A 0.2 x 0.2 table tiled by one 0.2 m object leaves no room for a 0.1 m one.
        let full = Scene::new(Table::new([0.0, 0.0], [0.2, 0.2]))
            .with_object(SceneObject::new("big", Pose6D::at(Vec3::new(0.1, 0.1, 0.0)), 0.2))
            .with_held(Held {
                id: "small".into(),
                diameter: 0.1,
            });
        assert_eq!(
            full.release_free_space().unwrap_err(),
            WorldError::NoFreeSpace("small".into())
        );
    }

    #[test]
    fn load_scene_validates_fields() {
        let ok = r#"{"table_bounds": {"min": [-0.5, -0.4], "max": [0.5, 0.4]}, "objects": [
            {"id": "029_plate", "translation": [0, 0, 0], "quaternion": [0, 0, 0, 1], "diameter": 0.26},
            {"id": "011_banana", "translation": [0.3, 0, 0], "quaternion": [0, 0, 0, 1], "diameter": 0.2}]}"#;
        let scene = load_scene(ok).unwrap();
        assert_eq!(scene.ids(), vec!["029_plate", "011_banana"]);

        let empty = r#"{"table_bounds": {"min": [0, 0], "max": [1, 1]}, "objects": []}"#;
        assert!(load_scene(empty).unwrap().objects().is_empty());

        let zero = ok.replace("0.26", "0");
        let err = load_scene(&zero).unwrap_err().to_string();
        assert!(err.contains("non-positive diameter"), "{err}");
        assert!(err.contains("objects[0].diameter"), "{err}");

        let dup = ok.replace("011_banana", "029_plate");
        assert!(load_scene(&dup).unwrap_err().to_string().contains("duplicate id"));

        let bad_q = ok.replacen("[0, 0, 0, 1]", "[0, 0, 0, 2]", 1);
        let err = load_scene(&bad_q).unwrap_err().to_string();
        assert!(err.contains("objects[0].quaternion"), "{err}");

        assert!(matches!(
            load_scene("{not json").unwrap_err(),
            SceneFileError::Malformed(_)
        ));
    }

    #[test]
    fn document_round_trip() {
        let (held, _) = banana_plate().pick("011_banana").unwrap();
        let text = held.to_document();
        assert_eq!(load_scene(&text).unwrap(), held);
    }
}
