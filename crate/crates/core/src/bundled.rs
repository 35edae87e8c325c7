//! Scenes and scenario configs shipped with the crate.

use crate::scenario::{ConfigError, Scenario, ScenarioConfig};
use crate::world::Scene;

pub const BRIDGE_TOWN_JSON: &str = include_str!("../../../assets/scenes/bridge_town.json");
pub const OPEN_FIELD_JSON: &str = include_str!("../../../assets/scenes/open_field.json");

pub const CONFIGS: [(&str, &str); 4] = [
    ("mapping", include_str!("../../../assets/configs/mapping.json")),
    ("planning", include_str!("../../../assets/configs/planning.json")),
    ("tracking", include_str!("../../../assets/configs/tracking.json")),
    ("formation", include_str!("../../../assets/configs/formation.json")),
];

pub fn bridge_town() -> Scene {
    Scene::parse(BRIDGE_TOWN_JSON).expect("bundled scene is valid")
}

pub fn open_field() -> Scene {
    Scene::parse(OPEN_FIELD_JSON).expect("bundled scene is valid")
}

pub fn scene(name: &str) -> Option<Scene> {
    match name {
        "bridge_town" => Some(bridge_town()),
        "open_field" => Some(open_field()),
        _ => None,
    }
}

/// A bundled scenario. Its scene path is resolved against the bundled
/// scenes by file stem.
pub fn scenario(name: &str) -> Result<Scenario, ConfigError> {
    let (_, text) = CONFIGS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| ConfigError::Invalid {
            field: "name".into(),
            message: format!("no bundled config `{name}`"),
        })?;
    let mut config = ScenarioConfig::parse(text)?;
    if let Some(stem) = std::path::Path::new(&config.scene).file_stem().and_then(|s| s.to_str()) {
        config.scene = format!("bundled:{stem}");
    }
    config.validate()?;
    let scene = config.load_scene(None)?;
    Ok(Scenario { config, scene })
}
