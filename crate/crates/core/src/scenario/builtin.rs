use super::config::ScenarioConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuiltinScenario {
    pub name: &'static str,
    pub toml: &'static str,
}

pub const BUILTIN: [BuiltinScenario; 5] = [
    BuiltinScenario { name: "fig1", toml: include_str!("../../scenarios/fig1.toml") },
    BuiltinScenario { name: "fig2", toml: include_str!("../../scenarios/fig2.toml") },
    BuiltinScenario { name: "fig3", toml: include_str!("../../scenarios/fig3.toml") },
    BuiltinScenario { name: "fig4", toml: include_str!("../../scenarios/fig4.toml") },
    BuiltinScenario { name: "fig5", toml: include_str!("../../scenarios/fig5.toml") },
];

pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    BUILTIN.iter().map(|b| b.name)
}

/// Parsed builtin scenario by name.
pub fn builtin(name: &str) -> Result<ScenarioConfig> {
    let b = BUILTIN.iter().find(|b| b.name == name).ok_or_else(|| {
        Error::Config(format!("unknown scenario `{name}` (known: {})", builtin_names().collect::<Vec<_>>().join(", ")))
    })?;
    ScenarioConfig::from_toml(b.toml)
}
