//! Interactive loop: each entered command runs one episode against the scene
//! left behind by the previous one.

use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Result;
use tamp_core::agent::{run_episode, AgentConfig};
use tamp_core::harness::{render_scene, write_episode_artifacts};
use tamp_core::llm_backend::ChatBackend;
use tamp_core::world::{Coords, Scene};

use crate::commands::write_file;

pub const PROMPT: &str = "> ";

const HELP: &str = "Enter a command such as \"Place the banana on the left of the plate\".\n\
Meta-commands: :scene (list objects), :render (write an SVG), :quit";

pub struct ReplSession {
    pub scene: Scene,
    agent: AgentConfig,
    backend: Arc<dyn ChatBackend>,
    out: PathBuf,
    episodes: usize,
    renders: usize,
}

impl ReplSession {
    pub fn new(scene: Scene, agent: AgentConfig, backend: Arc<dyn ChatBackend>, out: PathBuf) -> Self {
        Self {
            scene,
            agent,
            backend,
            out,
            episodes: 0,
            renders: 0,
        }
    }

    fn describe(&self) -> String {
        let mut text = String::new();
        for o in self.scene.objects() {
            text.push_str(&format!("  {} at {}\n", o.id, Coords(o.center())));
        }
        if let Some(h) = self.scene.held() {
            text.push_str(&format!("  holding {}\n", h.id));
        }
        text
    }

    fn episode<W: Write>(&mut self, command: &str, out: &mut W) -> Result<()> {
        self.episodes += 1;
        let episode = match run_episode(command, &self.scene, &self.agent, self.backend.as_ref()) {
            Ok(e) => e,
            Err(e) => {
                writeln!(out, "error: {e}")?;
                return Ok(());
            }
        };
        for step in &episode.transcript.steps {
            writeln!(out, "{}({}) -> {}", step.action, step.action_input, step.observation)?;
        }
        if let Some(answer) = episode.transcript.final_answer() {
            writeln!(out, "Final Answer: {answer}")?;
        }
        writeln!(
            out,
            "Outcome: {:?} in {} step(s)",
            episode.outcome(),
            episode.metadata.reported_steps
        )?;
        write_episode_artifacts(&self.out.join(format!("episode_{}", self.episodes)), &episode)?;
        self.scene = episode.scene;
        write!(out, "{}", self.describe())?;
        Ok(())
    }
}

/// Reads commands until `:quit` or end of input.
pub fn run_repl<R: BufRead, W: Write>(mut session: ReplSession, input: R, mut out: W) -> Result<Scene> {
    writeln!(out, "{HELP}")?;
    write!(out, "{PROMPT}")?;
    out.flush()?;
    for line in input.lines() {
        let line = line?;
        match line.trim() {
            "" => {}
            ":quit" | ":q" | ":exit" => break,
            ":scene" => write!(out, "{}", session.describe())?,
            ":render" => {
                session.renders += 1;
                let path = session.out.join(format!("render_{}.svg", session.renders));
                write_file(&path, &render_scene(&session.scene))?;
                writeln!(out, "wrote {}", path.display())?;
            }
            ":help" => writeln!(out, "{HELP}")?,
            meta if meta.starts_with(':') => writeln!(out, "unknown meta-command {meta}; try :help")?,
            command => session.episode(command, &mut out)?,
        }
        write!(out, "{PROMPT}")?;
        out.flush()?;
    }
    writeln!(out)?;
    Ok(session.scene)
}
