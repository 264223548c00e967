use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::goal::{check_goal, GoalReport, GoalTolerance};
use super::render::render_scene;
use super::scenario::{Category, Scenario};
use super::HarnessError;
use crate::agent::{run_episode, AgentConfig, Episode};
use crate::llm_backend::{CaptureBackend, ChatBackend, MatchMode, ReplayBackend};
use crate::react_protocol::Outcome;
use crate::world::load_scene;

pub const STEP_CONVENTION_NOTE: &str =
    "Steps count each Thought/Action/Action Input/Observation quadruple plus one for the final-answer turn.";

/// Where each episode's model turns come from.
#[derive(Clone)]
pub enum SuiteBackend {
    /// Each scenario replays its own fixture file.
    Replay(MatchMode),
    /// One backend serves every scenario.
    Shared(Arc<dyn ChatBackend>),
    /// One live backend; each scenario's exchange is captured to
    /// `<dir>/<scenario id>.jsonl`.
    Capture { inner: Arc<dyn ChatBackend>, dir: PathBuf },
}

#[derive(Clone)]
pub struct SuiteConfig {
    pub agent: AgentConfig,
    pub backend: SuiteBackend,
    pub tolerance: GoalTolerance,
    /// Episodes run concurrently when above 1.
    pub parallel: usize,
    /// Per-scenario artifacts are written here when set.
    pub out_dir: Option<PathBuf>,
}

impl SuiteConfig {
    pub fn replay(agent: AgentConfig) -> Self {
        Self {
            agent,
            backend: SuiteBackend::Replay(MatchMode::StrictOrder),
            tolerance: GoalTolerance::default(),
            parallel: 1,
            out_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub id: String,
    pub category: Category,
    pub command: String,
    pub outcome: Option<Outcome>,
    pub steps: usize,
    pub goal: Option<GoalReport>,
    pub success: bool,
    /// Set when the scenario could not be run or checked.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRow {
    pub label: String,
    pub count: usize,
    pub successes: usize,
    /// Percent, 0 to 100.
    pub success_rate: f64,
    pub total_steps: usize,
    pub avg_steps: f64,
}

impl CategoryRow {
    fn from_results<'a>(label: &str, results: impl Iterator<Item = &'a ScenarioResult>) -> Self {
        let (mut count, mut successes, mut total_steps) = (0, 0, 0);
        for r in results {
            count += 1;
            successes += usize::from(r.success);
            total_steps += r.steps;
        }
        let ratio = |n: usize| if count == 0 { 0.0 } else { n as f64 / count as f64 };
        Self {
            label: label.to_string(),
            count,
            successes,
            success_rate: 100.0 * ratio(successes),
            total_steps,
            avg_steps: ratio(total_steps),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub rows: Vec<CategoryRow>,
    pub overall: CategoryRow,
    pub scenarios: Vec<ScenarioResult>,
    pub notes: Vec<String>,
}

impl SuiteReport {
    pub fn from_results(scenarios: Vec<ScenarioResult>) -> Self {
        let rows = Category::ALL
            .into_iter()
            .map(|c| CategoryRow::from_results(c.label(), scenarios.iter().filter(|r| r.category == c)))
            .filter(|row| row.count > 0)
            .collect();
        let overall = CategoryRow::from_results("Overall", scenarios.iter());
        Self {
            rows,
            overall,
            scenarios,
            notes: vec![STEP_CONVENTION_NOTE.to_string()],
        }
    }

    pub fn row(&self, category: Category) -> Option<&CategoryRow> {
        self.rows.iter().find(|r| r.label == category.label())
    }

    /// Summary table; average steps shown rounded to whole steps and to two
    /// decimals.
    pub fn to_markdown(&self) -> String {
        let mut out = String::from(
            "| Scenario Category | Count | Success Rate | Avg. Steps | Mean Steps |\n|---|---:|---:|---:|---:|\n",
        );
        for row in self.rows.iter().chain(std::iter::once(&self.overall)) {
            out.push_str(&format!(
                "| {} | {} | {:.1}% | {:.0} | {:.2} |\n",
                row.label, row.count, row.success_rate, row.avg_steps, row.avg_steps
            ));
        }
        out.push('\n');
        out.push_str("| Scenario | Category | Outcome | Steps | Goal | Success |\n|---|---|---|---:|---|---|\n");
        for r in &self.scenarios {
            let goal = match (&r.goal, &r.error) {
                (_, Some(e)) => format!("error: {e}"),
                (Some(g), None) if g.passed => "pass".to_string(),
                (Some(g), None) => g
                    .failures()
                    .map(|f| format!("{}: {}", f.predicate, f.detail))
                    .collect::<Vec<_>>()
                    .join("; "),
                (None, None) => "-".to_string(),
            };
            let outcome = r.outcome.map_or("-".to_string(), |o| format!("{o:?}"));
            out.push_str(&format!(
                "| {} | {} | {} | {} | {} | {} |\n",
                r.id,
                r.category,
                outcome,
                r.steps,
                goal.replace('|', "/"),
                if r.success { "yes" } else { "no" }
            ));
        }
        out.push('\n');
        for note in &self.notes {
            out.push_str(&format!("Note: {note}\n"));
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Writes transcript, step sidecar, final scene, render and metadata for one
/// episode.
pub fn write_episode_artifacts(dir: &Path, episode: &Episode) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let write = |name: &str, content: String| {
        let path = dir.join(name);
        fs::write(&path, content).map_err(|e| HarnessError::io(&path, e))
    };
    write("transcript.txt", episode.transcript.to_log())?;
    write("steps.jsonl", episode.transcript.to_sidecar())?;
    write("final_scene.json", episode.scene.to_document())?;
    write("final_scene.svg", render_scene(&episode.scene))?;
    let mut meta = serde_json::to_string_pretty(&episode.metadata).expect("metadata serializes");
    meta.push('\n');
    write("metadata.json", meta)?;
    if !episode.placements.is_empty() {
        let lines: String = episode
            .placements
            .iter()
            .map(|p| serde_json::to_string(p).expect("trace serializes") + "\n")
            .collect();
        write("placements.jsonl", lines)?;
    }
    Ok(())
}

fn run_one(scenario: &Scenario, config: &SuiteConfig) -> ScenarioResult {
    let mut result = ScenarioResult {
        id: scenario.id.clone(),
        category: scenario.category,
        command: scenario.command.clone(),
        outcome: None,
        steps: 0,
        goal: None,
        success: false,
        error: None,
    };
    let attempt = || -> Result<(Episode, GoalReport), HarnessError> {
        let text = fs::read_to_string(&scenario.scene).map_err(|e| HarnessError::io(&scenario.scene, e))?;
        let scene = load_scene(&text).map_err(|e| HarnessError::Scene {
            path: scenario.scene.display().to_string(),
            message: e.to_string(),
        })?;
        let backend: Box<dyn ChatBackend> = match &config.backend {
            SuiteBackend::Replay(mode) => {
                let path = scenario
                    .fixture
                    .as_ref()
                    .ok_or_else(|| HarnessError::MissingFixture(scenario.id.clone()))?;
                Box::new(ReplayBackend::load(path, *mode)?)
            }
            SuiteBackend::Shared(b) => Box::new(b.clone()),
            SuiteBackend::Capture { inner, dir } => Box::new(CaptureBackend::create(
                inner.clone(),
                &dir.join(format!("{}.jsonl", scenario.id)),
            )?),
        };
        let episode = run_episode(&scenario.command, &scene, &config.agent, backend.as_ref())?;
        let goal = check_goal(
            &episode.scene,
            &scenario.goal,
            &config.agent.placement.convention,
            &config.agent.placement.categories,
            &config.tolerance,
        )?;
        if let Some(out) = &config.out_dir {
            write_episode_artifacts(&out.join(&scenario.id), &episode)?;
        }
        Ok((episode, goal))
    };
    match attempt() {
        Ok((episode, goal)) => {
            let outcome = episode.outcome();
            result.success = match scenario.category {
                Category::Infeasible => outcome == Outcome::Infeasible,
                _ => outcome == Outcome::Success && goal.passed,
            };
            result.outcome = Some(outcome);
            result.steps = episode.transcript.reported_steps();
            result.goal = Some(goal);
        }
        Err(e) => result.error = Some(e.to_string()),
    }
    result
}

/// Runs every scenario and aggregates a per-category report. Results keep
/// scenario order regardless of `parallel`.
pub fn run_suite(scenarios: &[Scenario], config: &SuiteConfig) -> Result<SuiteReport, HarnessError> {
    if scenarios.is_empty() {
        return Err(HarnessError::NoScenarios("empty scenario set".into()));
    }
    let results: Vec<ScenarioResult> = if config.parallel > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.parallel)
            .build()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        pool.install(|| scenarios.par_iter().map(|s| run_one(s, config)).collect())
    } else {
        scenarios.iter().map(|s| run_one(s, config)).collect()
    };
    let report = SuiteReport::from_results(results);
    if let Some(out) = &config.out_dir {
        fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
        for (name, content) in [("report.md", report.to_markdown()), ("report.json", report.to_json())] {
            let path = out.join(name);
            fs::write(&path, content).map_err(|e| HarnessError::io(&path, e))?;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(category: Category, steps: usize, success: bool) -> ScenarioResult {
        ScenarioResult {
            id: format!("{category:?}"),
            category,
            command: String::new(),
            outcome: Some(Outcome::Success),
            steps,
            goal: None,
            success,
            error: None,
        }
    }

    #[test]
    fn report_arithmetic() {
        let report = SuiteReport::from_results(vec![
            result(Category::Simple, 4, true),
            result(Category::Simple, 4, false),
            result(Category::HighLevel, 6, true),
            result(Category::Infeasible, 5, true),
        ]);
        assert_eq!(report.overall.count, 4);
        assert_eq!(report.row(Category::Simple).unwrap().success_rate, 50.0);
        assert_eq!(report.overall.success_rate, 75.0);
        assert_eq!(report.overall.avg_steps, 19.0 / 4.0);
        let md = report.to_markdown();
        assert!(md.contains("| Simple Commands | 2 | 50.0% | 4 | 4.00 |"), "{md}");
        assert!(md.contains("Note: Steps count"));
    }

    #[test]
    fn empty_suite_is_an_error() {
        assert!(matches!(
            run_suite(&[], &SuiteConfig::replay(AgentConfig::default())),
            Err(HarnessError::NoScenarios(_))
        ));
    }
}
