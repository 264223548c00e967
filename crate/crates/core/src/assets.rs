//! Text assets shipped with the crate. Each can be overridden from a file at
//! run time.

pub const REACT_PROMPT: &str = include_str!("../assets/react_prompt.txt");
pub const PLACER_PROMPT: &str = include_str!("../assets/placer_prompt.txt");
pub const CATEGORIES: &str = include_str!("../assets/categories.toml");
pub const AXIS_CONVENTION: &str = include_str!("../assets/axis_convention.toml");
