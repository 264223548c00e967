//! Language-driven tabletop task planning.
//!
//! A ReAct agent ([`agent`]) plans over a simulated table ([`world`]) by
//! calling four tools. Placement phrases are resolved by a separate spatial
//! reasoner ([`placer`]) that the agent never sees. [`harness`] runs scenario
//! suites and spatial evaluations and reports them.

pub mod agent;
pub mod assets;
pub mod harness;
pub mod llm_backend;
pub mod placer;
pub mod react_protocol;
pub mod world;
