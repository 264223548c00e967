use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::placer::SpatialSpecifier;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Simple,
    HighLevel,
    Infeasible,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Simple, Category::HighLevel, Category::Infeasible];

    pub fn label(self) -> &'static str {
        match self {
            Category::Simple => "Simple Commands",
            Category::HighLevel => "High-Level Commands",
            Category::Infeasible => "Infeasible Scenarios",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// A machine-checkable condition on the final scene.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GoalPredicate {
    /// `object` stands in `specifier` relation to `target`, an object id or a
    /// category name (all members present in the final scene).
    Relation {
        specifier: SpatialSpecifier,
        object: String,
        target: String,
    },
    /// The gripper ends empty.
    HeldEmpty,
    /// `object` is expected to be missing from the scene.
    ObjectAbsentExpected { object: String },
}

impl fmt::Display for GoalPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GoalPredicate::Relation {
                specifier,
                object,
                target,
            } => write!(f, "{object} {} {target}", specifier.phrase()),
            GoalPredicate::HeldEmpty => f.write_str("gripper empty"),
            GoalPredicate::ObjectAbsentExpected { object } => write!(f, "{object} absent"),
        }
    }
}

/// One suite entry. Paths are resolved relative to the scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub id: String,
    pub category: Category,
    pub command: String,
    pub scene: PathBuf,
    /// Replay fixture for the agent backend.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<PathBuf>,
    #[serde(default)]
    pub goal: Vec<GoalPredicate>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub notes: String,
}

impl Scenario {
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, toml::de::Error> {
        let mut s: Scenario = toml::from_str(text)?;
        s.scene = base.join(&s.scene);
        s.fixture = s.fixture.map(|f| base.join(f));
        Ok(s)
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    Scenario::from_toml(&text, base).map_err(|e| HarnessError::Scenario {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Loads every `*.toml` file in `dir`, sorted by file name.
pub fn load_scenarios(dir: &Path) -> Result<Vec<Scenario>, HarnessError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| HarnessError::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(HarnessError::NoScenarios(dir.display().to_string()));
    }
    paths.iter().map(|p| load_scenario(p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_scenario_document() {
        let text = r#"
id = "simple_01"
category = "simple"
command = "Place the banana to the left of the plate"
scene = "scenes/banana.json"
fixture = "fixtures/simple_01.jsonl"

[[goal]]
kind = "relation"
specifier = "left"
object = "011_banana"
target = "029_plate"

[[goal]]
kind = "held_empty"
"#;
        let s = Scenario::from_toml(text, Path::new("/suite")).unwrap();
        assert_eq!(s.category, Category::Simple);
        assert_eq!(s.scene, Path::new("/suite/scenes/banana.json"));
        assert_eq!(s.goal.len(), 2);
        assert_eq!(s.goal[0].to_string(), "011_banana to the left of 029_plate");
    }

    #[test]
    fn rejects_unknown_predicate() {
        let text = "id='x'\ncategory='simple'\ncommand='c'\nscene='s.json'\n[[goal]]\nkind='floating'\n";
        assert!(Scenario::from_toml(text, Path::new(".")).is_err());
    }
}
