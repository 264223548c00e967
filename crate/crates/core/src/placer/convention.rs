use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::SpatialSpecifier;
use crate::assets;
use crate::world::Vec3;

const UNIT_TOLERANCE: f64 = 1e-9;

/// Unit direction per specifier in the scene frame.
///
/// The vertical axis is Z; `on_top` must be `(0, 0, ±1)` and every
/// horizontal direction must have a zero Z component. The shipped default
/// maps Left to +X, Right to −X, InFront to −Y, Behind to +Y and OnTop to
/// −Z (table surface at the far end of Z, as seen from a camera above).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisConvention {
    left: [f64; 3],
    right: [f64; 3],
    in_front: [f64; 3],
    behind: [f64; 3],
    next_to: [f64; 3],
    on_top: [f64; 3],
}

#[derive(Debug, Error)]
pub enum ConventionError {
    #[error("invalid convention document: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{0} direction is not a unit vector")]
    NotUnit(&'static str),
    #[error("{0} and {1} must be antiparallel")]
    NotAntiparallel(&'static str, &'static str),
    #[error("on_top must lie on the vertical (Z) axis")]
    TiltedVertical,
    #[error("{0} must be horizontal (zero Z component)")]
    NotHorizontal(&'static str),
}

impl Default for AxisConvention {
    fn default() -> Self {
        Self::from_toml(assets::AXIS_CONVENTION).expect("shipped convention is valid")
    }
}

impl AxisConvention {
    pub fn from_toml(text: &str) -> Result<Self, ConventionError> {
        let convention: Self = toml::from_str(text)?;
        convention.validate()?;
        Ok(convention)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("convention serializes")
    }

    /// Default horizontal directions with `up` as the on-top direction.
    pub fn with_up(mut self, up: f64) -> Self {
        self.on_top = [0.0, 0.0, up.signum()];
        self
    }

    /// Builds and validates a convention from explicit directions.
    pub fn new(left: Vec3, in_front: Vec3, next_to: Vec3, on_top: Vec3) -> Result<Self, ConventionError> {
        let c = Self {
            left: left.into(),
            right: (-left).into(),
            in_front: in_front.into(),
            behind: (-in_front).into(),
            next_to: next_to.into(),
            on_top: on_top.into(),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ConventionError> {
        let named = [
            ("left", self.left),
            ("right", self.right),
            ("in_front", self.in_front),
            ("behind", self.behind),
            ("next_to", self.next_to),
            ("on_top", self.on_top),
        ];
        for (name, v) in named {
            let v = Vec3::from(v);
            if !v.iter().all(|c| c.is_finite()) || (v.norm() - 1.0).abs() > UNIT_TOLERANCE {
                return Err(ConventionError::NotUnit(name));
            }
            if name != "on_top" && v.z != 0.0 {
                return Err(ConventionError::NotHorizontal(name));
            }
        }
        let anti = |a: [f64; 3], b: [f64; 3]| (Vec3::from(a) + Vec3::from(b)).norm() <= UNIT_TOLERANCE;
        if !anti(self.left, self.right) {
            return Err(ConventionError::NotAntiparallel("left", "right"));
        }
        if !anti(self.in_front, self.behind) {
            return Err(ConventionError::NotAntiparallel("in_front", "behind"));
        }
        if self.on_top[0] != 0.0 || self.on_top[1] != 0.0 {
            return Err(ConventionError::TiltedVertical);
        }
        Ok(())
    }

    /// Unit direction of a specifier. Near uses the first scan direction;
    /// Inside points down.
    pub fn direction(&self, spec: SpatialSpecifier) -> Vec3 {
        Vec3::from(match spec {
            SpatialSpecifier::Left => self.left,
            SpatialSpecifier::Right => self.right,
            SpatialSpecifier::InFront => self.in_front,
            SpatialSpecifier::Behind => self.behind,
            SpatialSpecifier::NextTo => self.next_to,
            SpatialSpecifier::Near => self.left,
            SpatialSpecifier::OnTop => self.on_top,
            SpatialSpecifier::Inside => return -Vec3::from(self.on_top),
        })
    }

    /// `+1` or `-1`: the sign of Z pointing away from the table.
    pub fn up_sign(&self) -> f64 {
        self.on_top[2]
    }

    pub fn up(&self) -> Vec3 {
        Vec3::from(self.on_top)
    }

    /// Fixed scan order used by NextTo/Near when a direction is blocked.
    pub fn scan_order(&self) -> [Vec3; 4] {
        [self.left, self.right, self.in_front, self.behind].map(Vec3::from)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_convention_signs() {
        let c = AxisConvention::default();
        assert_eq!(c.direction(SpatialSpecifier::Left), Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(c.direction(SpatialSpecifier::Right), Vec3::new(-1.0, 0.0, 0.0));
        assert_eq!(c.direction(SpatialSpecifier::InFront), Vec3::new(0.0, -1.0, 0.0));
        assert_eq!(c.direction(SpatialSpecifier::Behind), Vec3::new(0.0, 1.0, 0.0));
        assert_eq!(c.direction(SpatialSpecifier::OnTop), Vec3::new(0.0, 0.0, -1.0));
        assert_eq!(c.up_sign(), -1.0);
        assert_eq!(AxisConvention::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn rejects_bad_conventions() {
        let x = Vec3::x();
        let y = Vec3::y();
        let z = Vec3::z();
        assert!(AxisConvention::new(x, y, x, z).is_ok());
        assert!(matches!(
            AxisConvention::new(x * 2.0, y, x, z),
            Err(ConventionError::NotUnit("left"))
        ));
        assert!(matches!(
            AxisConvention::new(x, z, x, z),
            Err(ConventionError::NotHorizontal("in_front"))
        ));
        assert!(matches!(
            AxisConvention::new(x, y, x, x),
            Err(ConventionError::TiltedVertical)
        ));
        let text = AxisConvention::default()
            .to_toml()
            .replace("right = [-1.0, 0.0, 0.0]", "right = [0.0, 1.0, 0.0]");
        assert!(matches!(
            AxisConvention::from_toml(&text),
            Err(ConventionError::NotAntiparallel("left", "right"))
        ));
    }
}
