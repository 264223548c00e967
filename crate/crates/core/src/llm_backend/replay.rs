use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{BackendError, ChatBackend, ChatRequest, ChatResponse, FinishReason};

/// One line of a fixture file (JSON Lines).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureRecord {
    /// Request fingerprint. Hand-authored strict-order fixtures may omit it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fingerprint: Option<String>,
    pub response: String,
    #[serde(default, skip_serializing_if = "is_stop")]
    pub finish_reason: FinishReason,
}

fn is_stop(r: &FinishReason) -> bool {
    *r == FinishReason::Stop
}

impl FixtureRecord {
    pub fn new(response: impl Into<String>) -> Self {
        Self {
            fingerprint: None,
            response: response.into(),
            finish_reason: FinishReason::Stop,
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchMode {
    /// Records are consumed once each, in file order. A record that carries
    /// a fingerprint must match the request.
    #[default]
    StrictOrder,
    /// Each request takes the first unused record with the same fingerprint.
    Fingerprint,
}

#[derive(Debug)]
pub struct ReplayBackend {
    records: Vec<FixtureRecord>,
    mode: MatchMode,
    used: Mutex<Vec<bool>>,
    label: String,
}

impl ReplayBackend {
    pub fn new(records: Vec<FixtureRecord>, mode: MatchMode) -> Self {
        let used = Mutex::new(vec![false; records.len()]);
        Self {
            records,
            mode,
            used,
            label: "inline".into(),
        }
    }

    /// Strict-order fixture from bare response texts.
    pub fn from_responses<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(
            responses.into_iter().map(FixtureRecord::new).collect(),
            MatchMode::StrictOrder,
        )
    }

    pub fn parse(text: &str, mode: MatchMode) -> Result<Self, BackendError> {
        Self::parse_labeled(text, mode, "<inline>")
    }

    fn parse_labeled(text: &str, mode: MatchMode, label: &str) -> Result<Self, BackendError> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: FixtureRecord = serde_json::from_str(line).map_err(|e| BackendError::Fixture {
                path: label.to_string(),
                message: format!("line {}: {e}", i + 1),
            })?;
            if mode == MatchMode::Fingerprint && record.fingerprint.is_none() {
                return Err(BackendError::Fixture {
                    path: label.to_string(),
                    message: format!("line {}: fingerprint mode needs a fingerprint", i + 1),
                });
            }
            records.push(record);
        }
        let mut backend = Self::new(records, mode);
        backend.label = label.to_string();
        Ok(backend)
    }

    pub fn load(path: &Path, mode: MatchMode) -> Result<Self, BackendError> {
        let label = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| BackendError::Fixture {
            path: label.clone(),
            message: e.to_string(),
        })?;
        Self::parse_labeled(&text, mode, &label)
    }

    pub fn remaining(&self) -> usize {
        self.used.lock().unwrap().iter().filter(|u| !**u).count()
    }
}

impl ChatBackend for ReplayBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        request.validate()?;
        let fingerprint = request.fingerprint();
        let mut used = self.used.lock().unwrap();
        let index = match self.mode {
            MatchMode::StrictOrder => {
                let next = used.iter().position(|u| !u);
                let Some(next) = next else {
                    return Err(BackendError::FixtureExhausted(self.records.len()));
                };
                if let Some(expected) = &self.records[next].fingerprint {
                    if *expected != fingerprint {
                        return Err(BackendError::FingerprintMiss(fingerprint));
                    }
                }
                next
            }
            MatchMode::Fingerprint => self
                .records
                .iter()
                .enumerate()
                .position(|(i, r)| !used[i] && r.fingerprint.as_deref() == Some(&fingerprint))
                .ok_or(BackendError::FingerprintMiss(fingerprint))?,
        };
        used[index] = true;
        let record = &self.records[index];
        Ok(ChatResponse {
            content: record.response.clone(),
            finish_reason: record.finish_reason,
            latency: std::time::Duration::ZERO,
            usage: None,
        })
    }

    fn identity(&self) -> String {
        format!("replay:{}", self.label)
    }
}
