use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use super::{BackendError, ChatBackend, ChatRequest, ChatResponse, FixtureRecord};

/// Forwards every request to `inner` and appends `(fingerprint, response)`
/// to a fixture file that [`super::ReplayBackend`] can load.
pub struct CaptureBackend<B> {
    inner: B,
    path: PathBuf,
    file: Mutex<File>,
}

impl<B: ChatBackend> CaptureBackend<B> {
    /// Creates (or truncates) the fixture file at `path`.
    pub fn create(inner: B, path: &Path) -> Result<Self, BackendError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let file = File::create(path)?;
        Ok(Self {
            inner,
            path: path.to_path_buf(),
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl<B: ChatBackend> ChatBackend for CaptureBackend<B> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let response = self.inner.complete(request)?;
        let record = FixtureRecord {
            fingerprint: Some(request.fingerprint()),
            response: response.content.clone(),
            finish_reason: response.finish_reason,
        };
        let mut file = self.file.lock().unwrap();
        writeln!(file, "{}", record.to_line())?;
        file.flush()?;
        Ok(response)
    }

    fn identity(&self) -> String {
        format!("capture:{}->{}", self.inner.identity(), self.path.display())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm_backend::{ChatMessage, MatchMode, ReplayBackend};

    #[test]
    fn captured_records_replay_in_both_modes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/capture.jsonl");
        let source = ReplayBackend::from_responses(["first", "second"]);
        let capture = CaptureBackend::create(source, &path).unwrap();
        let requests: Vec<_> = ["p1", "p2"]
            .iter()
            .map(|p| ChatRequest::new("s", vec![ChatMessage::user(*p)]))
            .collect();
        let live: Vec<_> = requests.iter().map(|r| capture.complete(r).unwrap().content).collect();

        for mode in [MatchMode::StrictOrder, MatchMode::Fingerprint] {
            let replay = ReplayBackend::load(&path, mode).unwrap();
            let replayed: Vec<_> = requests.iter().map(|r| replay.complete(r).unwrap().content).collect();
            assert_eq!(replayed, live);
        }
    }
}
