//! The planning loop: render prompt, get a model turn, parse, dispatch a
//! tool, append the observation, repeat.
//!
//! `place_object` goes through the placer; any sub-prompt it issues stays in
//! [`Episode::placements`] and never reaches the agent's prompt or transcript.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::llm_backend::{ChatBackend, ChatMessage, ChatRequest};
use crate::placer::{
    parse_directive, resolve_geometric, AxisConvention, CategoryMap, LlmPlacer, PlacerError, ResolveConfig,
    SpatialSpecifier, ValidationPolicy,
};
use crate::react_protocol::{
    parse_model_output, validate_registry, FinalTurn, ModelTurn, Outcome, PlanTranscript, PromptTemplate,
    ProtocolError, ReActStep, StepDraft, OBSERVATION,
};
use crate::world::{InvariantViolation, Scene, WorldError};

/// Stop sequence that keeps the model from inventing observations.
pub const STOP_SEQUENCE: &str = "\nObservation:";

const MALFORMED_CORRECTION: &str = "Your last reply did not follow the format. Reply with a Thought line followed by either an Action and an Action Input line, or a Final Answer line.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlacementMode {
    /// Deterministic resolver only.
    #[default]
    Geometric,
    /// Model sub-prompt; a position that fails validation is an error.
    Llm,
    /// Model sub-prompt; a position that fails validation is replaced by the
    /// geometric answer.
    #[serde(rename = "llm-fallback", alias = "llm-with-fallback")]
    LlmWithFallback,
}

impl std::str::FromStr for PlacementMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "geometric" => Ok(Self::Geometric),
            "llm" => Ok(Self::Llm),
            "llm-fallback" | "llm-with-fallback" => Ok(Self::LlmWithFallback),
            other => Err(format!(
                "unknown placement mode {other:?} (expected geometric, llm or llm-fallback)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentLimits {
    pub max_steps: usize,
    /// Corrective re-prompts allowed in a row before the episode fails.
    pub max_consecutive_malformed: usize,
    /// Turns slower than this end the episode as a failure. The backend's own
    /// timeout is what interrupts a hung request.
    pub turn_timeout: Option<Duration>,
}

impl Default for AgentLimits {
    fn default() -> Self {
        Self {
            max_steps: 15,
            max_consecutive_malformed: 2,
            turn_timeout: None,
        }
    }
}

/// Phrases that mark a final answer as a refusal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfeasibilityLexicon {
    pub phrases: Vec<String>,
}

impl Default for InfeasibilityLexicon {
    fn default() -> Self {
        Self::new(["impossible", "cannot", "not possible", "not present in the scene"])
    }
}

impl InfeasibilityLexicon {
    pub fn new<S: Into<String>>(phrases: impl IntoIterator<Item = S>) -> Self {
        Self {
            phrases: phrases.into_iter().map(Into::into).collect(),
        }
    }

    /// Case-insensitive substring match against any phrase.
    pub fn matches(&self, text: &str) -> bool {
        let text = text.to_lowercase();
        self.phrases
            .iter()
            .any(|p| !p.trim().is_empty() && text.contains(&p.to_lowercase()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tool {
    GetObjectList,
    PickObject,
    PlaceObject,
    ReleaseObject,
}

impl Tool {
    pub const ALL: [Tool; 4] = [
        Tool::GetObjectList,
        Tool::PickObject,
        Tool::PlaceObject,
        Tool::ReleaseObject,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Tool::GetObjectList => "get_object_list",
            Tool::PickObject => "pick_object",
            Tool::PlaceObject => "place_object",
            Tool::ReleaseObject => "release_object",
        }
    }

    pub fn spec(self) -> crate::react_protocol::ToolSpec {
        use crate::react_protocol::ToolSpec;
        match self {
            Tool::GetObjectList => ToolSpec::new(
                self.name(),
                "Returns the ids of all objects on the table as a list. Use it to check which objects are present.",
                "a short note on what you are looking for (ignored)",
            ),
            Tool::PickObject => ToolSpec::new(
                self.name(),
                "Picks up one object from the table. The gripper must be empty.",
                "the object id, e.g. 011_banana",
            ),
            Tool::PlaceObject => ToolSpec::new(
                self.name(),
                "Places the held object relative to other objects. Supported relations: on top of, next to, to the left of, to the right of, near, inside, in front of, behind.",
                "the relation and target, e.g. to the left of the 029_plate",
            ),
            Tool::ReleaseObject => ToolSpec::new(
                self.name(),
                "Puts the held object down in any free space on the table.",
                "anything (ignored)",
            ),
        }
    }
}

/// The tools offered to the agent, in prompt order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolRegistry {
    tools: Vec<Tool>,
}

impl Default for ToolRegistry {
    fn default() -> Self {
        Self {
            tools: Tool::ALL.to_vec(),
        }
    }
}

impl ToolRegistry {
    pub fn tools(&self) -> &[Tool] {
        &self.tools
    }

    pub fn specs(&self) -> Vec<crate::react_protocol::ToolSpec> {
        self.tools.iter().map(|t| t.spec()).collect()
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.tools.iter().map(|t| t.name()).collect()
    }

    pub fn lookup(&self, name: &str) -> Option<Tool> {
        let name = name.trim().trim_matches(|c| c == '`' || c == '"' || c == '\'');
        self.tools.iter().copied().find(|t| t.name() == name)
    }
}

/// Everything `place_object` needs besides the scene.
#[derive(Debug, Clone)]
pub struct PlacementEngine {
    pub mode: PlacementMode,
    pub convention: AxisConvention,
    pub categories: CategoryMap,
    pub resolve: ResolveConfig,
    pub llm: Option<LlmPlacer>,
}

impl Default for PlacementEngine {
    fn default() -> Self {
        Self {
            mode: PlacementMode::Geometric,
            convention: AxisConvention::default(),
            categories: CategoryMap::default(),
            resolve: ResolveConfig::default(),
            llm: None,
        }
    }
}

/// Record of one `place_object` resolution, kept out of the transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementTrace {
    /// 1-based index of the step that issued the placement.
    pub step: usize,
    pub specifier: SpatialSpecifier,
    pub targets: Vec<String>,
    pub position: [f64; 3],
    pub sub_prompt: Option<String>,
    pub reply: Option<String>,
    pub fell_back: bool,
    pub rejection: Option<String>,
}

impl PlacementEngine {
    pub fn with_mode(mut self, mode: PlacementMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_llm(mut self, placer: LlmPlacer) -> Self {
        self.llm = Some(placer);
        self
    }

    fn validate(&self) -> Result<(), AgentError> {
        if self.mode != PlacementMode::Geometric && self.llm.is_none() {
            return Err(AgentError::Config(format!(
                "placement mode {:?} needs a placement backend",
                self.mode
            )));
        }
        Ok(())
    }

    /// Resolves and executes a placement of the held object.
    fn place(&self, scene: &Scene, input: &str, step: usize) -> (Scene, String, Option<PlacementTrace>) {
        let Some(held) = scene.held().cloned() else {
            return (scene.clone(), WorldError::NothingHeld("place").to_string(), None);
        };
        let phrase = strip_leading_id(input, &held.id);
        let fail = |e: PlacerError| (scene.clone(), format!("Cannot place {}: {e}.", held.id), None);
        let directive = match parse_directive(phrase, &self.categories) {
            Ok(d) => d,
            Err(e) => return fail(e),
        };
        let targets = match directive.target_ids(scene, &self.categories) {
            Ok(t) => t,
            Err(e) => return fail(e),
        };
        if targets.contains(&held.id) {
            return (
                scene.clone(),
                format!("Cannot place {}: it cannot be placed relative to itself.", held.id),
                None,
            );
        }
        let (resolution, sub_prompt, reply, fell_back, rejection) = match (self.mode, &self.llm) {
            (PlacementMode::Geometric, _) | (_, None) => {
                match resolve_geometric(
                    scene,
                    directive.specifier,
                    &targets,
                    held.diameter,
                    &self.convention,
                    &self.resolve,
                ) {
                    Ok(r) => (r, None, None, false, None),
                    Err(e) => return fail(e),
                }
            }
            (mode, Some(llm)) => {
                let mut llm = llm.clone();
                llm.policy = match mode {
                    PlacementMode::Llm => ValidationPolicy::Error,
                    _ => ValidationPolicy::Fallback,
                };
                match llm.resolve(
                    scene,
                    directive.specifier,
                    &targets,
                    &directive.raw_phrase,
                    &held,
                    &self.convention,
                    &self.resolve,
                ) {
                    Ok(p) => (
                        p.resolution,
                        Some(p.sub_prompt),
                        Some(p.reply),
                        p.fell_back,
                        p.rejection,
                    ),
                    Err(e) => return fail(e),
                }
            }
        };
        let trace = PlacementTrace {
            step,
            specifier: directive.specifier,
            targets,
            position: resolution.position.into(),
            sub_prompt,
            reply,
            fell_back,
            rejection,
        };
        match scene.place_at(resolution.position, &resolution.support, &directive.raw_phrase) {
            Ok((next, obs)) => (next, obs, Some(trace)),
            Err(e) => (scene.clone(), e.to_string(), Some(trace)),
        }
    }
}

/// `011_banana to the left of ...` → `to the left of ...` when holding the
/// banana; quotes around the input are dropped.
fn strip_leading_id<'a>(input: &'a str, held: &str) -> &'a str {
    let input = clean_input(input);
    match input.strip_prefix(held) {
        Some(rest) if rest.starts_with(char::is_whitespace) => rest.trim(),
        _ => input,
    }
}

fn clean_input(input: &str) -> &str {
    input.trim().trim_matches(|c| c == '"' || c == '\'' || c == '`').trim()
}

/// Executes one tool call. Every failure becomes an observation.
pub fn dispatch(
    registry: &ToolRegistry,
    placement: &PlacementEngine,
    action: &str,
    action_input: &str,
    scene: &Scene,
) -> (Scene, String) {
    let (scene, obs, _) = dispatch_traced(registry, placement, action, action_input, scene, 0);
    (scene, obs)
}

fn dispatch_traced(
    registry: &ToolRegistry,
    placement: &PlacementEngine,
    action: &str,
    action_input: &str,
    scene: &Scene,
    step: usize,
) -> (Scene, String, Option<PlacementTrace>) {
    let Some(tool) = registry.lookup(action) else {
        return (
            scene.clone(),
            format!(
                "Unknown tool '{}'. Valid tools are: {}.",
                action.trim(),
                registry.names().join(", ")
            ),
            None,
        );
    };
    let untraced = |r: Result<(Scene, String), WorldError>| match r {
        Ok((next, obs)) => (next, obs, None),
        Err(e) => (scene.clone(), e.to_string(), None),
    };
    match tool {
        Tool::GetObjectList => (scene.clone(), scene.object_list(), None),
        Tool::PickObject => {
            let name = clean_input(action_input);
            let id = scene.resolve_name(name).unwrap_or(name).to_string();
            untraced(scene.pick(&id))
        }
        Tool::PlaceObject => placement.place(scene, action_input, step),
        Tool::ReleaseObject => untraced(scene.release_free_space()),
    }
}

/// Classifies a final answer. Infeasible needs a lexicon match and no
/// successful placement in the transcript.
pub fn classify_final(answer: &str, transcript: &PlanTranscript, lexicon: &InfeasibilityLexicon) -> Outcome {
    if answer.trim().is_empty() {
        return Outcome::Failure;
    }
    let placed = transcript
        .steps
        .iter()
        .any(|s| s.action == Tool::PlaceObject.name() && s.observation.starts_with("You have placed"));
    if lexicon.matches(answer) && !placed {
        Outcome::Infeasible
    } else {
        Outcome::Success
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("invalid scene: {0}")]
    Scene(#[from] InvariantViolation),
    #[error("invalid tool registry: {0}")]
    Registry(#[from] ProtocolError),
    #[error("invalid agent configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone)]
pub struct AgentConfig {
    pub limits: AgentLimits,
    pub lexicon: InfeasibilityLexicon,
    pub template: PromptTemplate,
    pub registry: ToolRegistry,
    pub placement: PlacementEngine,
    pub temperature: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            limits: AgentLimits::default(),
            lexicon: InfeasibilityLexicon::default(),
            template: PromptTemplate::default(),
            registry: ToolRegistry::default(),
            placement: PlacementEngine::default(),
            temperature: 0.0,
        }
    }
}

impl AgentConfig {
    /// Hex SHA-256 of every setting that can change an episode's course.
    pub fn digest(&self) -> String {
        let doc = serde_json::json!({
            "limits": self.limits,
            "lexicon": self.lexicon,
            "template": self.template.text(),
            "registry": self.registry,
            "placement_mode": self.placement.mode,
            "convention": self.placement.convention,
            "categories": self.placement.categories,
            "resolve": self.placement.resolve,
            "temperature": self.temperature,
        });
        hex::encode(Sha256::digest(doc.to_string()))
    }
}

/// Per-episode run record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetadata {
    pub question: String,
    pub config_digest: String,
    pub backend: String,
    pub placement_mode: PlacementMode,
    /// Decoding settings sent with every turn; anything else (token limit,
    /// top-p) is left to the serving stack's defaults.
    pub temperature: f64,
    pub stop: Vec<String>,
    pub limits: AgentLimits,
    pub lexicon: InfeasibilityLexicon,
    pub outcome: Outcome,
    pub reported_steps: usize,
    pub tool_steps: usize,
    pub wall_time_ms: u128,
}

#[derive(Debug, Clone)]
pub struct Episode {
    pub transcript: PlanTranscript,
    pub scene: Scene,
    pub metadata: EpisodeMetadata,
    pub placements: Vec<PlacementTrace>,
}

impl Episode {
    pub fn outcome(&self) -> Outcome {
        self.metadata.outcome
    }
}

/// Runs one episode to a final answer, the step limit, the malformed-output
/// limit or a backend error.
pub fn run_episode(
    question: &str,
    scene: &Scene,
    config: &AgentConfig,
    backend: &dyn ChatBackend,
) -> Result<Episode, AgentError> {
    scene.check_invariants()?;
    let specs = config.registry.specs();
    validate_registry(&specs)?;
    config.placement.validate()?;
    if config.limits.max_steps == 0 {
        return Err(AgentError::Config("max_steps must be at least 1".into()));
    }

    let started = Instant::now();
    let mut transcript = PlanTranscript::new(question);
    let mut scene = scene.clone();
    let mut placements = Vec::new();
    // Corrective exchanges appended after the cue while the model is off-format.
    let mut correction = String::new();
    let mut malformed = 0usize;

    let outcome = loop {
        if transcript.steps.len() >= config.limits.max_steps {
            break Outcome::StepLimit;
        }
        let mut prompt = config.template.render(&specs, question, &transcript.steps)?;
        prompt.push_str(&correction);
        let mut request = ChatRequest::new("", vec![ChatMessage::user(prompt)]);
        request.temperature = config.temperature;
        request.stop = vec![STOP_SEQUENCE.to_string()];

        let turn_started = Instant::now();
        let reply = match backend.complete(&request) {
            Ok(r) => r.content,
            Err(e) => {
                transcript.notes.push(format!("backend error: {e}"));
                break Outcome::Failure;
            }
        };
        if let Some(limit) = config.limits.turn_timeout {
            let took = turn_started.elapsed();
            if took > limit {
                transcript
                    .notes
                    .push(format!("backend error: turn took {took:?}, limit is {limit:?}"));
                break Outcome::Failure;
            }
        }

        match parse_model_output(&reply) {
            Ok(ModelTurn::Step(draft)) => {
                malformed = 0;
                correction.clear();
                let index = transcript.steps.len() + 1;
                let StepDraft {
                    thought,
                    action,
                    action_input,
                } = draft;
                let (next, observation, trace) = dispatch_traced(
                    &config.registry,
                    &config.placement,
                    &action,
                    &action_input,
                    &scene,
                    index,
                );
                scene = next;
                placements.extend(trace);
                transcript.steps.push(ReActStep {
                    thought,
                    action,
                    action_input,
                    observation,
                });
            }
            Ok(ModelTurn::Final(FinalTurn { thought, answer })) => {
                let outcome = classify_final(&answer, &transcript, &config.lexicon);
                transcript.final_turn = Some(FinalTurn { thought, answer });
                break outcome;
            }
            Err(e) => {
                malformed += 1;
                transcript
                    .notes
                    .push(format!("malformed reply after step {}: {e}", transcript.steps.len()));
                if malformed > config.limits.max_consecutive_malformed {
                    break Outcome::Failure;
                }
                let bad = reply.trim();
                correction.push_str(&format!(" {bad}\n{OBSERVATION} {MALFORMED_CORRECTION}\nThought:"));
            }
        }
    };
    transcript.outcome = Some(outcome);

    let metadata = EpisodeMetadata {
        question: question.to_string(),
        config_digest: config.digest(),
        backend: backend.identity(),
        placement_mode: config.placement.mode,
        temperature: config.temperature,
        stop: vec![STOP_SEQUENCE.to_string()],
        limits: config.limits,
        lexicon: config.lexicon.clone(),
        outcome,
        reported_steps: transcript.reported_steps(),
        tool_steps: transcript.steps.len(),
        wall_time_ms: started.elapsed().as_millis(),
    };
    Ok(Episode {
        transcript,
        scene,
        metadata,
        placements,
    })
}

/// Re-applies a transcript's tool calls to `initial`.
pub fn replay_effects(
    initial: &Scene,
    transcript: &PlanTranscript,
    registry: &ToolRegistry,
    placement: &PlacementEngine,
) -> Scene {
    transcript.steps.iter().fold(initial.clone(), |scene, step| {
        dispatch(registry, placement, &step.action, &step.action_input, &scene).0
    })
}
