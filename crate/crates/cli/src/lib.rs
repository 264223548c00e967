//! Command-line front end: single episodes, an interactive loop, scenario
//! suites, the spatial evaluation, rendering and ratings.
//!
//! Exit codes: 0 when every machine-checkable expectation holds, 1 when an
//! episode or evaluation misses one, 2 for configuration and input errors.

pub mod config;
pub mod repl;

mod commands;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use config::GlobalOpts;

pub const EXIT_OK: i32 = 0;
pub const EXIT_UNMET: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "tamp", version, about = "Language-driven tabletop task planning")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

/// Which outcome `run` treats as a pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Expect {
    Success,
    Infeasible,
    /// Either success or a correctly declared infeasible task.
    Either,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one episode and write its artifacts.
    Run {
        /// The task, e.g. "How to place the banana on the left of the plate?".
        question: String,
        #[arg(long, value_name = "FILE")]
        scene: PathBuf,
        #[arg(long, value_enum, default_value = "success")]
        expect: Expect,
    },
    /// Enter commands one at a time against an evolving scene.
    Repl {
        #[arg(long, value_name = "FILE")]
        scene: PathBuf,
    },
    /// Run every scenario in a directory and write the summary report.
    Eval {
        #[arg(value_name = "DIR")]
        scenarios: PathBuf,
    },
    /// Measure placement offsets and their variance under pose noise.
    SpatialEval {
        #[arg(long, value_name = "FILE")]
        manifest: PathBuf,
        #[arg(long, default_value_t = 1)]
        trials: usize,
        /// Half-width of the uniform noise on target positions, meters.
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
    },
    /// Draw a scene file as a top-down SVG.
    Render {
        #[arg(value_name = "SCENE")]
        scene: PathBuf,
        /// Defaults to `<out>/<scene name>.svg`.
        #[arg(long, value_name = "FILE")]
        output: Option<PathBuf>,
    },
    /// Summarize evaluator ratings (TOML with `[[scene]]` label/ratings).
    Ratings {
        #[arg(value_name = "FILE")]
        file: PathBuf,
    },
    /// Print the effective configuration as TOML.
    Config,
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    }
}
