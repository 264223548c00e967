//! Thought / Action / Action Input / Observation grammar.
//!
//! Markers are recognized only at the start of a line (after leading
//! whitespace). Lines that do not start with a marker continue the value of
//! the previous marker. Values are trimmed.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assets;

pub const THOUGHT: &str = "Thought:";
pub const ACTION: &str = "Action:";
pub const ACTION_INPUT: &str = "Action Input:";
pub const OBSERVATION: &str = "Observation:";
pub const FINAL_ANSWER: &str = "Final Answer:";
pub const QUESTION: &str = "Question:";

/// Cue appended after the history; the model continues from here.
pub const CONTINUATION_CUE: &str = "Thought:";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    pub input_signature: String,
}

impl ToolSpec {
    pub fn new(name: &str, description: &str, input_signature: &str) -> Self {
        Self {
            name: name.into(),
            description: description.into(),
            input_signature: input_signature.into(),
        }
    }

    pub fn has_valid_name(&self) -> bool {
        !self.name.is_empty() && self.name.bytes().all(|b| b.is_ascii_lowercase() || b == b'_')
    }
}

/// A model turn requesting a tool call, before dispatch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepDraft {
    pub thought: String,
    pub action: String,
    pub action_input: String,
}

/// One completed Thought / Action / Action Input / Observation quadruple.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReActStep {
    pub thought: String,
    pub action: String,
    pub action_input: String,
    pub observation: String,
}

impl ReActStep {
    pub fn complete(draft: StepDraft, observation: impl Into<String>) -> Self {
        Self {
            thought: draft.thought,
            action: draft.action,
            action_input: draft.action_input,
            observation: observation.into(),
        }
    }

    pub fn draft(&self) -> StepDraft {
        StepDraft {
            thought: self.thought.clone(),
            action: self.action.clone(),
            action_input: self.action_input.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Success,
    Infeasible,
    Failure,
    StepLimit,
}

impl Outcome {
    pub fn has_final_answer(self) -> bool {
        matches!(self, Outcome::Success | Outcome::Infeasible)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalTurn {
    pub thought: String,
    pub answer: String,
}

/// A full episode record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanTranscript {
    pub question: String,
    pub steps: Vec<ReActStep>,
    pub final_turn: Option<FinalTurn>,
    pub outcome: Option<Outcome>,
    /// Problems the loop ran into that are not steps: corrective re-prompts,
    /// transport errors.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl PlanTranscript {
    pub fn new(question: impl Into<String>) -> Self {
        Self {
            question: question.into(),
            steps: Vec::new(),
            final_turn: None,
            outcome: None,
            notes: Vec::new(),
        }
    }

    pub fn final_answer(&self) -> Option<&str> {
        self.final_turn.as_ref().map(|f| f.answer.as_str())
    }

    /// Tool steps plus one for the final-thought turn, when there is one.
    pub fn reported_steps(&self) -> usize {
        self.steps.len() + usize::from(self.final_turn.is_some())
    }

    /// One JSON record per step, then one for the final turn, one per line.
    pub fn to_sidecar(&self) -> String {
        #[derive(Serialize)]
        #[serde(tag = "kind", rename_all = "snake_case")]
        enum Record<'a> {
            Step {
                index: usize,
                #[serde(flatten)]
                step: &'a ReActStep,
            },
            Final {
                #[serde(flatten)]
                turn: &'a FinalTurn,
                outcome: Option<Outcome>,
            },
        }
        let mut out = String::new();
        let records = self
            .steps
            .iter()
            .enumerate()
            .map(|(i, step)| Record::Step { index: i + 1, step })
            .chain(self.final_turn.iter().map(|turn| Record::Final {
                turn,
                outcome: self.outcome,
            }));
        for record in records {
            out.push_str(&serde_json::to_string(&record).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    /// Line-oriented log in the step grammar.
    pub fn to_log(&self) -> String {
        let mut out = String::new();
        push_field(&mut out, QUESTION, &self.question);
        for step in &self.steps {
            out.push_str(&serialize_step(step));
        }
        if let Some(f) = &self.final_turn {
            out.push_str(&serialize_final(f));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelTurn {
    Step(StepDraft),
    Final(FinalTurn),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("no recognizable Thought/Action/Final Answer markers")]
    NoMarkers,
    #[error("missing or empty {0}")]
    MissingField(&'static str),
    #[error("tool registry is empty")]
    EmptyRegistry,
    #[error("invalid tool name {0:?}")]
    InvalidToolName(String),
    #[error("duplicate tool name {0}")]
    DuplicateTool(String),
    #[error("incomplete step: {0} is empty")]
    IncompleteStep(&'static str),
    #[error("unexpected line in transcript: {0:?}")]
    UnexpectedLine(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Marker {
    Question,
    Thought,
    Action,
    ActionInput,
    Observation,
    FinalAnswer,
}

const MARKERS: [(&str, Marker); 6] = [
    (ACTION_INPUT, Marker::ActionInput),
    (ACTION, Marker::Action),
    (THOUGHT, Marker::Thought),
    (OBSERVATION, Marker::Observation),
    (FINAL_ANSWER, Marker::FinalAnswer),
    (QUESTION, Marker::Question),
];

fn split_marker(line: &str) -> Option<(Marker, &str)> {
    let trimmed = line.trim_start();
    MARKERS
        .iter()
        .find_map(|(label, m)| trimmed.strip_prefix(label).map(|rest| (*m, rest)))
}

/// Splits text into `(marker, value)` segments. Text before the first marker
/// is returned as the preamble.
fn segments(text: &str) -> (String, Vec<(Marker, String)>) {
    let mut preamble = Vec::new();
    let mut segs: Vec<(Marker, Vec<&str>)> = Vec::new();
    for line in text.lines() {
        match split_marker(line) {
            Some((m, rest)) => segs.push((m, vec![rest])),
            None => match segs.last_mut() {
                Some((_, lines)) => lines.push(line),
                None => preamble.push(line),
            },
        }
    }
    let join = |lines: Vec<&str>| lines.join("\n").trim().to_string();
    (join(preamble), segs.into_iter().map(|(m, l)| (m, join(l))).collect())
}

/// Parses one model reply into a tool-call step or a final turn.
///
/// Text before the first marker counts as the thought, since the prompt ends
/// with a `Thought:` cue. A `Final Answer:` that appears before the action is
/// complete wins. Anything after a complete step (including an `Observation:`
/// the model made up) is ignored.
pub fn parse_model_output(text: &str) -> Result<ModelTurn, ProtocolError> {
    let (preamble, segs) = segments(text);
    if segs.is_empty() {
        return Err(ProtocolError::NoMarkers);
    }
    let mut thought: Option<String> = (!preamble.is_empty()).then_some(preamble);
    let mut action: Option<String> = None;
    let mut action_input: Option<String> = None;
    for (marker, value) in segs {
        if let (Some(_), Some(_)) = (&action, &action_input) {
            break;
        }
        match marker {
            Marker::Thought => {
                if action.is_none() {
                    thought = Some(value);
                }
            }
            Marker::Action => action = Some(value),
            Marker::ActionInput => action_input = Some(value),
            Marker::FinalAnswer => {
                if value.is_empty() {
                    return Err(ProtocolError::MissingField("Final Answer"));
                }
                return Ok(ModelTurn::Final(FinalTurn {
                    thought: thought.unwrap_or_default(),
                    answer: value,
                }));
            }
            Marker::Observation | Marker::Question => break,
        }
    }
    let nonempty = |v: Option<String>, name| v.filter(|s| !s.is_empty()).ok_or(ProtocolError::MissingField(name));
    let action = nonempty(action, "Action")?;
    let action_input = nonempty(action_input, "Action Input")?;
    let thought = nonempty(thought, "Thought")?;
    Ok(ModelTurn::Step(StepDraft {
        thought,
        action,
        action_input,
    }))
}

fn push_field(out: &mut String, label: &str, value: &str) {
    out.push_str(label);
    out.push(' ');
    out.push_str(value);
    out.push('\n');
}

fn check_nonempty(value: &str, name: &'static str) -> Result<(), ProtocolError> {
    if value.trim().is_empty() {
        Err(ProtocolError::IncompleteStep(name))
    } else {
        Ok(())
    }
}

/// Serializes the model-authored part of a step (no Observation line).
pub fn serialize_draft(draft: &StepDraft) -> Result<String, ProtocolError> {
    check_nonempty(&draft.thought, "thought")?;
    check_nonempty(&draft.action, "action")?;
    check_nonempty(&draft.action_input, "action input")?;
    let mut out = String::new();
    push_field(&mut out, THOUGHT, &draft.thought);
    push_field(&mut out, ACTION, &draft.action);
    push_field(&mut out, ACTION_INPUT, &draft.action_input);
    Ok(out)
}

/// Four labeled lines: Thought, Action, Action Input, Observation.
///
/// Panics on an incomplete step; use [`try_serialize_step`] for untrusted input.
pub fn serialize_step(step: &ReActStep) -> String {
    try_serialize_step(step).expect("complete step")
}

pub fn try_serialize_step(step: &ReActStep) -> Result<String, ProtocolError> {
    let mut out = serialize_draft(&step.draft())?;
    check_nonempty(&step.observation, "observation")?;
    push_field(&mut out, OBSERVATION, &step.observation);
    Ok(out)
}

pub fn serialize_final(turn: &FinalTurn) -> String {
    let mut out = String::new();
    push_field(&mut out, THOUGHT, &turn.thought);
    push_field(&mut out, FINAL_ANSWER, &turn.answer);
    out
}

/// Parses a full transcript log (as written by [`PlanTranscript::to_log`]).
///
/// The outcome is not part of the log and is left unset.
pub fn parse_transcript(text: &str) -> Result<PlanTranscript, ProtocolError> {
    let (preamble, segs) = segments(text);
    if !preamble.is_empty() {
        return Err(ProtocolError::UnexpectedLine(preamble));
    }
    let mut iter = segs.into_iter().peekable();
    let question = match iter.next() {
        Some((Marker::Question, q)) => q,
        Some((_, v)) => return Err(ProtocolError::UnexpectedLine(v)),
        None => return Err(ProtocolError::NoMarkers),
    };
    let mut transcript = PlanTranscript::new(question);
    while let Some((marker, value)) = iter.next() {
        if marker != Marker::Thought {
            return Err(ProtocolError::UnexpectedLine(value));
        }
        let thought = value;
        match iter.next() {
            Some((Marker::FinalAnswer, answer)) => {
                transcript.final_turn = Some(FinalTurn { thought, answer });
                if let Some((_, rest)) = iter.next() {
                    return Err(ProtocolError::UnexpectedLine(rest));
                }
                break;
            }
            Some((Marker::Action, action)) => {
                let mut take = |expected: Marker, name: &'static str| match iter.next() {
                    Some((m, v)) if m == expected => Ok(v),
                    _ => Err(ProtocolError::MissingField(name)),
                };
                let action_input = take(Marker::ActionInput, "Action Input")?;
                let observation = take(Marker::Observation, "Observation")?;
                transcript.steps.push(ReActStep {
                    thought,
                    action,
                    action_input,
                    observation,
                });
            }
            _ => return Err(ProtocolError::MissingField("Action")),
        }
    }
    Ok(transcript)
}

pub fn validate_registry(tools: &[ToolSpec]) -> Result<(), ProtocolError> {
    if tools.is_empty() {
        return Err(ProtocolError::EmptyRegistry);
    }
    let mut names = BTreeSet::new();
    for t in tools {
        if !t.has_valid_name() {
            return Err(ProtocolError::InvalidToolName(t.name.clone()));
        }
        if !names.insert(t.name.as_str()) {
            return Err(ProtocolError::DuplicateTool(t.name.clone()));
        }
    }
    Ok(())
}

/// Prompt template with `{tools}`, `{tool_names}`, `{question}` and
/// `{history}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    text: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self::new(assets::REACT_PROMPT)
    }
}

impl PromptTemplate {
    pub fn new(text: impl Into<String>) -> Self {
        Self { text: text.into() }
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Renders the agent prompt. The result ends with the serialized history
    /// followed by the continuation cue.
    pub fn render(&self, tools: &[ToolSpec], question: &str, history: &[ReActStep]) -> Result<String, ProtocolError> {
        validate_registry(tools)?;
        let tool_block = tools
            .iter()
            .map(|t| format!("{}: {} Input: {}", t.name, t.description, t.input_signature))
            .collect::<Vec<_>>()
            .join("\n");
        let names = tools.iter().map(|t| t.name.as_str()).collect::<Vec<_>>().join(", ");
        let mut scratch = String::new();
        for step in history {
            scratch.push_str(&try_serialize_step(step)?);
        }
        scratch.push_str(CONTINUATION_CUE);
        // Single pass so placeholder-like text inside values is left alone.
        let mut out = String::with_capacity(self.text.len() + scratch.len() + tool_block.len());
        let mut rest = self.text.as_str();
        while let Some(start) = rest.find('{') {
            out.push_str(&rest[..start]);
            let after = &rest[start..];
            let replaced = [
                ("{tools}", tool_block.as_str()),
                ("{tool_names}", names.as_str()),
                ("{question}", question),
                ("{history}", scratch.as_str()),
            ]
            .into_iter()
            .find(|(key, _)| after.starts_with(key));
            match replaced {
                Some((key, value)) => {
                    out.push_str(value);
                    rest = &after[key.len()..];
                }
                None => {
                    out.push('{');
                    rest = &after[1..];
                }
            }
        }
        out.push_str(rest);
        Ok(out)
    }
}

/// Renders with the shipped template.
pub fn render_prompt(tools: &[ToolSpec], question: &str, history: &[ReActStep]) -> Result<String, ProtocolError> {
    PromptTemplate::default().render(tools, question, history)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tools() -> Vec<ToolSpec> {
        vec![
            ToolSpec::new("get_object_list", "Lists objects.", "any text"),
            ToolSpec::new("pick_object", "Picks an object.", "object id"),
        ]
    }

    #[test]
    fn parses_step_with_unlabeled_thought() {
        let turn = parse_model_output(" I should look first.\nAction: get_object_list\nAction Input: all").unwrap();
        assert_eq!(
            turn,
            ModelTurn::Step(StepDraft {
                thought: "I should look first.".into(),
                action: "get_object_list".into(),
                action_input: "all".into(),
            })
        );
    }

    #[test]
    fn discards_fabricated_observation() {
        let turn = parse_model_output(
            "Thought: t\nAction: pick_object\nAction Input: 011_banana\nObservation: You have picked up 011_banana\nThought: more\nFinal Answer: done",
        )
        .unwrap();
        assert!(matches!(turn, ModelTurn::Step(ref s) if s.action_input == "011_banana"));
    }

    #[test]
    fn final_answer_beats_incomplete_action() {
        let turn = parse_model_output("Thought: t\nAction: pick_object\nFinal Answer: nope").unwrap();
        assert_eq!(
            turn,
            ModelTurn::Final(FinalTurn {
                thought: "t".into(),
                answer: "nope".into()
            })
        );
    }

    #[test]
    fn malformed_outputs() {
        assert_eq!(parse_model_output("hello world"), Err(ProtocolError::NoMarkers));
        assert_eq!(
            parse_model_output("Thought: hmm"),
            Err(ProtocolError::MissingField("Action"))
        );
        assert_eq!(
            parse_model_output("Thought: hmm\nAction: pick_object"),
            Err(ProtocolError::MissingField("Action Input"))
        );
        assert_eq!(
            parse_model_output("Action: pick_object\nAction Input: x"),
            Err(ProtocolError::MissingField("Thought"))
        );
    }

    #[test]
    fn multiline_values_join() {
        let turn = parse_model_output("Thought: line one\n  line two\nAction: a_b\nAction Input: x").unwrap();
        match turn {
            ModelTurn::Step(s) => assert_eq!(s.thought, "line one\n  line two"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn serialize_rejects_incomplete() {
        let step = ReActStep {
            thought: "t".into(),
            action: "a".into(),
            action_input: "".into(),
            observation: "o".into(),
        };
        assert_eq!(
            try_serialize_step(&step),
            Err(ProtocolError::IncompleteStep("action input"))
        );
    }

    #[test]
    fn render_requires_tools() {
        assert_eq!(render_prompt(&[], "q", &[]), Err(ProtocolError::EmptyRegistry));
        let bad = vec![ToolSpec::new("Pick-Object", "d", "s")];
        assert!(matches!(
            render_prompt(&bad, "q", &[]),
            Err(ProtocolError::InvalidToolName(_))
        ));
    }

    #[test]
    fn render_ends_with_history_and_cue() {
        let step = ReActStep {
            thought: "look".into(),
            action: "get_object_list".into(),
            action_input: "all".into(),
            observation: "['029_plate']".into(),
        };
        let prompt = render_prompt(&tools(), "Where is {question}?", &[step]).unwrap();
        assert!(prompt.ends_with("Observation: ['029_plate']\nThought:"), "{prompt}");
        assert!(prompt.contains("Where is {question}?"));
        assert!(prompt.contains("get_object_list") && prompt.contains("pick_object"));
    }

    #[test]
    fn transcript_log_round_trip() {
        let mut t = PlanTranscript::new("q?");
        t.steps.push(ReActStep {
            thought: "a\nb".into(),
            action: "x".into(),
            action_input: "y".into(),
            observation: "z".into(),
        });
        t.final_turn = Some(FinalTurn {
            thought: "done".into(),
            answer: "ok".into(),
        });
        let log = t.to_log();
        assert_eq!(parse_transcript(&log).unwrap(), t);
        assert_eq!(t.reported_steps(), 2);
    }
}
