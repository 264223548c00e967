use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use tamp_core::agent::{run_episode, AgentConfig, PlacementMode};
use tamp_core::harness::{
    aggregate_ratings, load_scenarios, load_spatial_cases, ratings_markdown, render_scene, run_spatial_eval, run_suite,
    write_episode_artifacts, RatingSet, SpatialEvalConfig, SuiteBackend, SuiteConfig,
};
use tamp_core::llm_backend::{CaptureBackend, ChatBackend, HttpBackend, MatchMode, ReplayBackend};
use tamp_core::placer::{LlmPlacer, ValidationPolicy};
use tamp_core::react_protocol::Outcome;
use tamp_core::world::{load_scene, Scene};

use crate::config::{BackendKind, RunConfig};
use crate::repl::{run_repl, ReplSession};
use crate::{Cli, Command, Expect, EXIT_OK, EXIT_UNMET};

pub(crate) fn dispatch(cli: Cli) -> Result<i32> {
    let cfg = RunConfig::resolve(&cli.global)?;
    match cli.command {
        Command::Run {
            question,
            scene,
            expect,
        } => cmd_run(&cfg, &question, &scene, expect),
        Command::Repl { scene } => {
            let session = ReplSession::new(read_scene(&scene)?, agent_config(&cfg)?, agent_backend(&cfg)?, cfg.out);
            let stdin = io::stdin();
            run_repl(session, stdin.lock(), io::stdout())?;
            Ok(EXIT_OK)
        }
        Command::Eval { scenarios } => cmd_eval(&cfg, &scenarios),
        Command::SpatialEval {
            manifest,
            trials,
            sigma,
        } => cmd_spatial_eval(&cfg, &manifest, trials, sigma),
        Command::Render { scene, output } => {
            let doc = render_scene(&read_scene(&scene)?);
            let output = output.unwrap_or_else(|| {
                let stem = scene.file_stem().map(|s| s.to_string_lossy().into_owned());
                cfg.out.join(format!("{}.svg", stem.as_deref().unwrap_or("scene")))
            });
            write_file(&output, &doc)?;
            println!("{}", output.display());
            Ok(EXIT_OK)
        }
        Command::Ratings { file } => cmd_ratings(&file),
        Command::Config => {
            print!("{}", cfg.to_toml());
            Ok(EXIT_OK)
        }
    }
}

pub(crate) fn read_scene(path: &Path) -> Result<Scene> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read scene file {}", path.display()))?;
    load_scene(&text).with_context(|| format!("invalid scene file {}", path.display()))
}

pub(crate) fn write_file(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("cannot create directory {}", parent.display()))?;
    }
    fs::write(path, content).with_context(|| format!("cannot write {}", path.display()))
}

fn http_backend(cfg: &RunConfig) -> Result<HttpBackend> {
    Ok(HttpBackend::new(cfg.http()?)?)
}

/// Replays `fixture`, calls the endpoint, or calls it while recording into
/// `fixture` (default `<out>/<default_name>`).
fn make_backend(
    cfg: &RunConfig,
    fixture: Option<&PathBuf>,
    flag: &str,
    default_name: &str,
) -> Result<Arc<dyn ChatBackend>> {
    Ok(match cfg.backend {
        BackendKind::Replay => {
            let Some(path) = fixture else {
                bail!("the replay backend needs {flag} FILE (or choose --backend http)");
            };
            Arc::new(ReplayBackend::load(path, MatchMode::StrictOrder)?)
        }
        BackendKind::Http => Arc::new(http_backend(cfg)?),
        BackendKind::Capture => {
            let inner = http_backend(cfg)?;
            let path = fixture.cloned().unwrap_or_else(|| cfg.out.join(default_name));
            Arc::new(CaptureBackend::create(inner, &path)?)
        }
    })
}

pub(crate) fn agent_backend(cfg: &RunConfig) -> Result<Arc<dyn ChatBackend>> {
    make_backend(cfg, cfg.fixture.as_ref(), "--fixture", "fixture.jsonl")
}

fn placer(cfg: &RunConfig) -> Result<Option<LlmPlacer>> {
    if cfg.placement == PlacementMode::Geometric {
        return Ok(None);
    }
    let backend = make_backend(
        cfg,
        cfg.placer_fixture.as_ref(),
        "--placer-fixture",
        "placer_fixture.jsonl",
    )?;
    let mut placer = LlmPlacer::new(backend);
    if cfg.placement == PlacementMode::Llm {
        placer.policy = ValidationPolicy::Error;
    }
    Ok(Some(placer))
}

pub(crate) fn agent_config(cfg: &RunConfig) -> Result<AgentConfig> {
    let mut agent = AgentConfig::default();
    agent.limits.max_steps = cfg.max_steps;
    agent.temperature = cfg.temperature;
    agent.placement.mode = cfg.placement;
    agent.placement.convention = cfg.load_convention()?;
    agent.placement.llm = placer(cfg)?;
    Ok(agent)
}

fn cmd_run(cfg: &RunConfig, question: &str, scene: &Path, expect: Expect) -> Result<i32> {
    let scene = read_scene(scene)?;
    let agent = agent_config(cfg)?;
    let backend = agent_backend(cfg)?;
    let episode = run_episode(question, &scene, &agent, backend.as_ref())?;
    write_episode_artifacts(&cfg.out, &episode)?;
    write_file(&cfg.out.join("run_config.toml"), &cfg.to_toml())?;

    print!("{}", episode.transcript.to_log());
    let outcome = episode.outcome();
    println!(
        "\nOutcome: {outcome:?} in {} step(s). Artifacts in {}",
        episode.metadata.reported_steps,
        cfg.out.display()
    );
    let passed = match expect {
        Expect::Success => outcome == Outcome::Success,
        Expect::Infeasible => outcome == Outcome::Infeasible,
        Expect::Either => matches!(outcome, Outcome::Success | Outcome::Infeasible),
    };
    if !passed {
        eprintln!("expected {expect:?}, got {outcome:?}");
    }
    Ok(if passed { EXIT_OK } else { EXIT_UNMET })
}

fn cmd_eval(cfg: &RunConfig, dir: &Path) -> Result<i32> {
    let scenarios = load_scenarios(dir)?;
    let backend = match cfg.backend {
        BackendKind::Replay => SuiteBackend::Replay(MatchMode::StrictOrder),
        BackendKind::Http => SuiteBackend::Shared(Arc::new(http_backend(cfg)?)),
        BackendKind::Capture => SuiteBackend::Capture {
            inner: Arc::new(http_backend(cfg)?),
            dir: cfg.out.join("fixtures"),
        },
    };
    let config = SuiteConfig {
        agent: agent_config(cfg)?,
        backend,
        parallel: cfg.parallel,
        out_dir: Some(cfg.out.clone()),
        ..SuiteConfig::replay(AgentConfig::default())
    };
    let report = run_suite(&scenarios, &config)?;
    write_file(&cfg.out.join("run_config.toml"), &cfg.to_toml())?;
    print!("{}", report.to_markdown());
    let failed: Vec<_> = report.scenarios.iter().filter(|s| !s.success).collect();
    for s in &failed {
        let why = s.error.clone().unwrap_or_else(|| match (&s.outcome, &s.goal) {
            (Some(o), Some(g)) if !g.passed => format!(
                "{o:?}; goal failed: {}",
                g.failures().map(|r| r.detail.as_str()).collect::<Vec<_>>().join("; ")
            ),
            (o, _) => format!("{o:?}"),
        });
        eprintln!("FAILED {}: {why}", s.id);
    }
    Ok(if failed.is_empty() { EXIT_OK } else { EXIT_UNMET })
}

fn cmd_spatial_eval(cfg: &RunConfig, manifest: &Path, trials: usize, sigma: f64) -> Result<i32> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        bail!("--sigma must be >= 0 (got {sigma})");
    }
    let cases = load_spatial_cases(manifest)?;
    let config = SpatialEvalConfig {
        trials,
        sigma,
        seed: cfg.seed,
        convention: cfg.load_convention()?,
        llm: placer(cfg)?,
        ..Default::default()
    };
    let report = run_spatial_eval(&cases, &config)?;
    write_file(&cfg.out.join("spatial_report.md"), &report.to_markdown())?;
    write_file(&cfg.out.join("spatial_report.json"), &report.to_json())?;
    print!("{}", report.to_markdown());
    let errors: Vec<&String> = report.rows.iter().flat_map(|r| &r.errors).collect();
    for e in &errors {
        eprintln!("placement error: {e}");
    }
    Ok(if errors.is_empty() { EXIT_OK } else { EXIT_UNMET })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RatingsFile {
    scene: Vec<RatingSet>,
}

fn cmd_ratings(path: &Path) -> Result<i32> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read ratings file {}", path.display()))?;
    let file: RatingsFile =
        toml::from_str(&text).with_context(|| format!("invalid ratings file {}", path.display()))?;
    let summaries = aggregate_ratings(&file.scene)?;
    let mut out = io::stdout().lock();
    write!(out, "{}", ratings_markdown(&summaries))?;
    Ok(EXIT_OK)
}
