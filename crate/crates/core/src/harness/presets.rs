use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::dgp::ScenarioConfig;
use crate::error::{Error, Result};

/// Preset files compiled into the binary, keyed by file stem.
pub const PRESET_FILES: [(&str, &str); 10] = [
    ("table1-setup1", include_str!("../../../../presets/table1-setup1.toml")),
    ("table1-setup2", include_str!("../../../../presets/table1-setup2.toml")),
    ("table1-setup3", include_str!("../../../../presets/table1-setup3.toml")),
    ("table1-setup4", include_str!("../../../../presets/table1-setup4.toml")),
    ("table1-setup5", include_str!("../../../../presets/table1-setup5.toml")),
    ("table1-setup6", include_str!("../../../../presets/table1-setup6.toml")),
    ("figure2-grid", include_str!("../../../../presets/figure2-grid.toml")),
    ("supplement-fadeout", include_str!("../../../../presets/supplement-fadeout.toml")),
    ("supplement-twotiming", include_str!("../../../../presets/supplement-twotiming.toml")),
    ("supplement-smallN-largeT", include_str!("../../../../presets/supplement-smallN-largeT.toml")),
];

/// Scenarios plus the SHA-256 of every source file they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedPreset {
    pub scenarios: Vec<ScenarioConfig>,
    pub hashes: BTreeMap<String, String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PresetFile {
    scenario: Vec<ScenarioConfig>,
}

fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

fn parse(label: &str, text: &str, out: &mut LoadedPreset) -> Result<()> {
    let file: PresetFile = toml::from_str(text).map_err(|e| Error::Parse(format!("{label}: {e}")))?;
    for s in &file.scenario {
        s.validate()?;
    }
    out.scenarios.extend(file.scenario);
    out.hashes.insert(label.to_string(), sha256_hex(text));
    Ok(())
}

fn files_for(name: &str) -> Option<Vec<&'static str>> {
    let stems: Vec<&str> = match name {
        "table1" => (1..=6)
            .map(|k| PRESET_FILES[k - 1].0)
            .collect(),
        "figure2" | "grid" => vec!["figure2-grid"],
        _ => {
            let stem = name.strip_suffix(".toml").unwrap_or(name);
            let alias = stem.strip_prefix("setup").map(|k| format!("table1-setup{k}"));
            let key = alias.as_deref().unwrap_or(stem);
            vec![PRESET_FILES.iter().find(|(n, _)| *n == key)?.0]
        }
    };
    Some(stems)
}

/// Names accepted by [`load_preset`] besides file paths.
pub fn preset_names() -> Vec<String> {
    let mut names: Vec<String> = vec!["table1".into(), "figure2".into()];
    names.extend((1..=6).map(|k| format!("setup{k}")));
    names.extend(PRESET_FILES.iter().map(|(n, _)| n.to_string()));
    names
}

/// Loads a built-in preset by name (`table1`, `setup4`, `figure2-grid`, ...)
/// or a preset file by path.
pub fn load_preset(name_or_path: &str) -> Result<LoadedPreset> {
    let mut out = LoadedPreset {
        scenarios: Vec::new(),
        hashes: BTreeMap::new(),
    };
    if let Some(stems) = files_for(name_or_path) {
        for stem in stems {
            let text = PRESET_FILES.iter().find(|(n, _)| *n == stem).map(|(_, t)| *t).unwrap_or_default();
            parse(&format!("{stem}.toml"), text, &mut out)?;
        }
        return Ok(out);
    }
    let path = Path::new(name_or_path);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let label = path.file_name().map_or(name_or_path.into(), |f| f.to_string_lossy().into_owned());
        parse(&label, &text, &mut out)?;
        return Ok(out);
    }
    Err(Error::UnknownPreset(name_or_path.to_string()))
}
