use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{PlacerError, SpatialSpecifier};
use crate::assets;
use crate::world::Scene;

/// Surface forms, matched case-insensitively at word boundaries.
const SURFACE_FORMS: &[(&str, SpatialSpecifier)] = &[
    ("on top of", SpatialSpecifier::OnTop),
    ("onto", SpatialSpecifier::OnTop),
    ("next to", SpatialSpecifier::NextTo),
    ("beside", SpatialSpecifier::NextTo),
    ("to the left of", SpatialSpecifier::Left),
    ("left of", SpatialSpecifier::Left),
    ("to the right of", SpatialSpecifier::Right),
    ("right of", SpatialSpecifier::Right),
    ("near", SpatialSpecifier::Near),
    ("close to", SpatialSpecifier::Near),
    ("inside", SpatialSpecifier::Inside),
    ("into", SpatialSpecifier::Inside),
    ("in front of", SpatialSpecifier::InFront),
    ("in", SpatialSpecifier::Inside),
    ("behind", SpatialSpecifier::Behind),
];

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

/// Earliest surface form in `lower` (longest wins on ties), as
/// `(start, end, specifier)`.
pub(super) fn match_specifier(lower: &str) -> Option<(usize, usize, SpatialSpecifier)> {
    let bytes = lower.as_bytes();
    let mut best: Option<(usize, usize, SpatialSpecifier)> = None;
    for &(form, spec) in SURFACE_FORMS {
        for (start, _) in lower.match_indices(form) {
            let end = start + form.len();
            let left_ok = start == 0 || !is_word_byte(bytes[start - 1]);
            let right_ok = end == bytes.len() || !is_word_byte(bytes[end]);
            if !(left_ok && right_ok) {
                continue;
            }
            let better = match best {
                None => true,
                Some((s, e, _)) => start < s || (start == s && end > e),
            };
            if better {
                best = Some((start, end, spec));
            }
            break;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub name: String,
    /// Words that refer to the whole category, e.g. `fruit`, `fruits`.
    pub nouns: Vec<String>,
    /// Object-id prefixes belonging to the category.
    pub prefixes: Vec<String>,
}

/// Object categories keyed by object-id prefix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryMap {
    #[serde(rename = "category", default)]
    categories: Vec<Category>,
}

impl Default for CategoryMap {
    fn default() -> Self {
        Self::from_toml(assets::CATEGORIES).expect("shipped category map parses")
    }
}

impl CategoryMap {
    pub fn empty() -> Self {
        Self { categories: Vec::new() }
    }

    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Builds a map from `(category, members)` pairs; nouns are the name and
    /// the name with an `s` appended.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, Vec<&'a str>)>) -> Self {
        let mut grouped: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for (name, members) in pairs {
            grouped.entry(name).or_default().extend(members);
        }
        Self {
            categories: grouped
                .into_iter()
                .map(|(name, members)| Category {
                    name: name.to_string(),
                    nouns: vec![name.to_string(), format!("{name}s")],
                    prefixes: members.into_iter().map(String::from).collect(),
                })
                .collect(),
        }
    }

    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    /// Category named by a group noun (`fruits` → `fruit`).
    pub fn category_for_noun(&self, noun: &str) -> Option<&str> {
        let noun = noun.trim().to_lowercase();
        self.categories
            .iter()
            .find(|c| c.name == noun || c.nouns.contains(&noun))
            .map(|c| c.name.as_str())
    }

    pub fn is_member(&self, category: &str, id: &str) -> bool {
        self.categories
            .iter()
            .filter(|c| c.name == category)
            .any(|c| c.prefixes.iter().any(|p| id.starts_with(p.as_str())))
    }

    pub fn categories_of(&self, id: &str) -> Vec<&str> {
        self.categories
            .iter()
            .filter(|c| c.prefixes.iter().any(|p| id.starts_with(p.as_str())))
            .map(|c| c.name.as_str())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Target {
    /// An object named by id or by a loose name (`banana`).
    Object(String),
    /// Every placed object of a category.
    Group(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementDirective {
    pub specifier: SpatialSpecifier,
    pub targets: Vec<Target>,
    pub raw_phrase: String,
}

impl PlacementDirective {
    /// Resolves targets to placed object ids, in scene order per target.
    pub fn target_ids(&self, scene: &Scene, categories: &CategoryMap) -> Result<Vec<String>, PlacerError> {
        let mut ids: Vec<String> = Vec::new();
        for target in &self.targets {
            match target {
                Target::Object(name) => {
                    let id = scene
                        .resolve_name(name)
                        .ok_or_else(|| PlacerError::TargetMissing(name.clone()))?;
                    if !ids.iter().any(|i| i == id) {
                        ids.push(id.to_string());
                    }
                }
                Target::Group(category) => {
                    let members: Vec<&str> = scene
                        .ids()
                        .into_iter()
                        .filter(|id| categories.is_member(category, id))
                        .collect();
                    if members.is_empty() {
                        return Err(PlacerError::TargetMissing(format!("no {category} objects")));
                    }
                    for id in members {
                        if !ids.iter().any(|i| i == id) {
                            ids.push(id.to_string());
                        }
                    }
                }
            }
        }
        Ok(ids)
    }
}

fn clean_token(token: &str) -> &str {
    let token = token
        .trim()
        .trim_matches(|c: char| matches!(c, '\'' | '"' | '`' | '.' | '!' | '?' | ';'))
        .trim();
    for article in ["the ", "a ", "an ", "all the ", "all "] {
        if let Some(rest) = token.strip_prefix(article) {
            return rest.trim();
        }
    }
    token
}

/// Parses a relative-location phrase into a specifier and its targets.
///
/// The earliest specifier surface form in the phrase is used; text before it
/// is ignored. Targets after it are separated by commas or `and`.
pub fn parse_directive(phrase: &str, categories: &CategoryMap) -> Result<PlacementDirective, PlacerError> {
    let lower = phrase.to_lowercase();
    let (_, end, specifier) =
        match_specifier(&lower).ok_or_else(|| PlacerError::UnknownSpecifier(phrase.trim().to_string()))?;
    // `to_lowercase` keeps byte offsets for ASCII; fall back to the lowered
    // text if the phrase has case-changing non-ASCII characters.
    let rest = if lower.len() == phrase.len() {
        &phrase[end..]
    } else {
        &lower[end..]
    };
    let rest = rest.trim();
    let rest = rest.strip_prefix("of ").unwrap_or(rest);
    let mut targets = Vec::new();
    for part in rest.split(',').flat_map(|p| p.split(" and ")) {
        let token = clean_token(part);
        if token.is_empty() {
            continue;
        }
        match categories.category_for_noun(token) {
            Some(category) => targets.push(Target::Group(category.to_string())),
            None => targets.push(Target::Object(token.to_string())),
        }
    }
    if targets.is_empty() {
        return Err(PlacerError::UnknownTarget(phrase.trim().to_string()));
    }
    Ok(PlacementDirective {
        specifier,
        targets,
        raw_phrase: phrase.trim().to_string(),
    })
}
