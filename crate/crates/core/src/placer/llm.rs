use std::sync::{Arc, OnceLock};

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{resolve_geometric, AxisConvention, PlacerError, Resolution, ResolveConfig, SpatialSpecifier};
use crate::assets;
use crate::llm_backend::{ChatBackend, ChatMessage, ChatRequest};
use crate::world::{Coords, Held, Scene, Vec3};

pub const SUB_PROMPT_SYSTEM: &str =
    "You are the spatial reasoning module of a tabletop robot. You answer with one 3D position.";

const REASK: &str = "Your reply did not contain a position. Reply with only the position as (x, y, z) in meters.";

/// What to do when the model's position fails validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValidationPolicy {
    Error,
    #[default]
    Fallback,
}

/// Last `(x, y, z)` or `[x, y, z]` triple in `text`.
pub fn parse_triple(text: &str) -> Option<Vec3> {
    static TRIPLE: OnceLock<Regex> = OnceLock::new();
    let re = TRIPLE.get_or_init(|| {
        let num = r"([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)";
        Regex::new(&format!(r"[\(\[]\s*{num}\s*,\s*{num}\s*,\s*{num}\s*[\)\]]")).unwrap()
    });
    let caps = re.captures_iter(text).last()?;
    let coord = |i: usize| caps[i].parse::<f64>().ok();
    let v = Vec3::new(coord(1)?, coord(2)?, coord(3)?);
    v.iter().all(|c| c.is_finite()).then_some(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlmPlacement {
    pub resolution: Resolution,
    /// True when the geometric answer replaced the model's.
    pub fell_back: bool,
    pub sub_prompt: String,
    pub reply: String,
    /// Why validation failed, when it did.
    pub rejection: Option<String>,
}

/// Few-shot sub-prompt placement, gated by the geometric resolver.
#[derive(Clone)]
pub struct LlmPlacer {
    backend: Arc<dyn ChatBackend>,
    template: String,
    pub validation_radius: f64,
    pub policy: ValidationPolicy,
}

impl std::fmt::Debug for LlmPlacer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LlmPlacer")
            .field("backend", &self.backend.identity())
            .field("validation_radius", &self.validation_radius)
            .field("policy", &self.policy)
            .finish()
    }
}

impl LlmPlacer {
    pub fn new(backend: Arc<dyn ChatBackend>) -> Self {
        Self {
            backend,
            template: assets::PLACER_PROMPT.to_string(),
            validation_radius: 0.30,
            policy: ValidationPolicy::Fallback,
        }
    }

    pub fn with_template(mut self, template: impl Into<String>) -> Self {
        self.template = template.into();
        self
    }

    pub fn backend_identity(&self) -> String {
        self.backend.identity()
    }

    /// Renders the sub-prompt from object names, poses and diameters.
    pub fn render(&self, scene: &Scene, held: &Held, phrase: &str) -> String {
        let objects = scene
            .objects()
            .iter()
            .map(|o| {
                format!(
                    "- {}: position {}, diameter {:.3}",
                    o.id,
                    Coords(o.center()),
                    o.diameter
                )
            })
            .collect::<Vec<_>>()
            .join("\n");
        let table = format!(
            "x from {:.3} to {:.3}, y from {:.3} to {:.3}, surface at z = {:.3}",
            scene.table.min[0], scene.table.max[0], scene.table.min[1], scene.table.max[1], scene.table.surface_z
        );
        self.template
            .replace("{table}", &table)
            .replace("{objects}", &objects)
            .replace("{held}", &format!("{} (diameter {:.3})", held.id, held.diameter))
            .replace("{command}", &format!("Place {} {}", held.id, phrase.trim()))
    }

    #[allow(clippy::too_many_arguments)]
    pub fn resolve(
        &self,
        scene: &Scene,
        specifier: SpatialSpecifier,
        target_ids: &[String],
        phrase: &str,
        held: &Held,
        convention: &AxisConvention,
        config: &ResolveConfig,
    ) -> Result<LlmPlacement, PlacerError> {
        let oracle = resolve_geometric(scene, specifier, target_ids, held.diameter, convention, config)?;
        let sub_prompt = self.render(scene, held, phrase);
        let mut messages = vec![ChatMessage::user(sub_prompt.clone())];
        let ask = |messages: &[ChatMessage]| {
            // Temperature is pinned to 0 regardless of the agent's decoding.
            let request = ChatRequest::new(SUB_PROMPT_SYSTEM, messages.to_vec());
            self.backend
                .complete(&request)
                .map(|r| r.content)
                .map_err(PlacerError::BackendUnavailable)
        };
        let mut reply = ask(&messages)?;
        let position = match parse_triple(&reply) {
            Some(p) => p,
            None => {
                messages.push(ChatMessage::assistant(reply.clone()));
                messages.push(ChatMessage::user(REASK));
                reply = ask(&messages)?;
                parse_triple(&reply).ok_or_else(|| PlacerError::UnparseableReply(reply.clone()))?
            }
        };

        let rejection = if !scene.table.contains(&position) {
            Some(format!("{} is outside the table bounds", Coords(position)))
        } else {
            let gap = (position - oracle.position).norm();
            (gap > self.validation_radius).then(|| {
                format!(
                    "{} is {gap:.3} m from the geometric answer {} (limit {:.3} m)",
                    Coords(position),
                    Coords(oracle.position),
                    self.validation_radius
                )
            })
        };
        match (rejection, self.policy) {
            (None, _) => Ok(LlmPlacement {
                resolution: Resolution { position, ..oracle },
                fell_back: false,
                sub_prompt,
                reply,
                rejection: None,
            }),
            (Some(why), ValidationPolicy::Error) => Err(PlacerError::ValidationFailed(why)),
            (Some(why), ValidationPolicy::Fallback) => Ok(LlmPlacement {
                resolution: oracle,
                fell_back: true,
                sub_prompt,
                reply,
                rejection: Some(why),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm_backend::ReplayBackend;
    use crate::world::{Pose6D, SceneObject, Table};

    fn scene() -> Scene {
        let mut table = Table::new([-0.5, -0.5], [0.5, 0.5]);
        table.up = 1.0;
        Scene::new(table).with_object(SceneObject::new("029_plate", Pose6D::at(Vec3::zeros()), 0.2))
    }

    fn held() -> Held {
        Held {
            id: "011_banana".into(),
            diameter: 0.1,
        }
    }

    fn run(placer: &LlmPlacer) -> Result<LlmPlacement, PlacerError> {
        placer.resolve(
            &scene(),
            SpatialSpecifier::Left,
            &["029_plate".to_string()],
            "to the left of the 029_plate",
            &held(),
            &AxisConvention::default().with_up(1.0),
            &ResolveConfig::default(),
        )
    }

    #[test]
    fn parse_triple_forms() {
        assert_eq!(parse_triple("(0.17, 0.00, 0.05)"), Some(Vec3::new(0.17, 0.0, 0.05)));
        assert_eq!(
            parse_triple("Answer: [ -1e-2 , .5, 3 ]"),
            Some(Vec3::new(-0.01, 0.5, 3.0))
        );
        assert_eq!(
            parse_triple("target at (0, 0, 0). Answer: (1, 2, 3)"),
            Some(Vec3::new(1.0, 2.0, 3.0))
        );
        assert_eq!(parse_triple("somewhere on the left"), None);
    }

    #[test]
    fn matching_reply_is_accepted() {
        let placer = LlmPlacer::new(Arc::new(ReplayBackend::from_responses(["(0.17, 0.00, 0.05)"])));
        let out = run(&placer).unwrap();
        assert_eq!(out.resolution.position, Vec3::new(0.17, 0.0, 0.05));
        assert!(!out.fell_back);
        assert!(out
            .sub_prompt
            .contains("029_plate: position (0.000, 0.000, 0.000), diameter 0.200"));
        assert!(out.sub_prompt.contains("Place 011_banana to the left of the 029_plate"));
    }

    #[test]
    fn prose_reply_is_reasked_once() {
        let placer = LlmPlacer::new(Arc::new(ReplayBackend::from_responses([
            "It goes on the left.",
            "Still the left side.",
        ])));
        assert!(matches!(run(&placer), Err(PlacerError::UnparseableReply(_))));

        let placer = LlmPlacer::new(Arc::new(ReplayBackend::from_responses([
            "It goes on the left.",
            "(0.17, 0, 0.05)",
        ])));
        assert!(!run(&placer).unwrap().fell_back);
    }

    #[test]
    fn out_of_bounds_reply_falls_back_or_errors() {
        let backend = || Arc::new(ReplayBackend::from_responses(["(1.5, 0.0, 0.05)"]));
        let out = run(&LlmPlacer::new(backend())).unwrap();
        assert!(out.fell_back);
        assert!((out.resolution.position - Vec3::new(0.17, 0.0, 0.05)).norm() < 1e-12);

        let mut strict = LlmPlacer::new(backend());
        strict.policy = ValidationPolicy::Error;
        assert!(matches!(run(&strict), Err(PlacerError::ValidationFailed(_))));
    }

    #[test]
    fn far_reply_fails_radius_check() {
        let placer = LlmPlacer::new(Arc::new(ReplayBackend::from_responses(["(-0.3, 0.3, 0.05)"])));
        let out = run(&placer).unwrap();
        assert!(out.fell_back);
        assert!(out.rejection.unwrap().contains("from the geometric answer"));
    }

    #[test]
    fn backend_failure_is_reported() {
        let placer = LlmPlacer::new(Arc::new(ReplayBackend::from_responses(Vec::<String>::new())));
        assert!(matches!(run(&placer), Err(PlacerError::BackendUnavailable(_))));
    }
}
