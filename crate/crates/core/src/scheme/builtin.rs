use std::collections::BTreeSet;
use std::path::Path;

use super::template::SchemeTemplate;
use super::SchemeError;

const BUILTIN: [(&str, &str); 4] = [
    (
        "vacuum_station.toml",
        include_str!("../../templates/vacuum_station.toml"),
    ),
    (
        "fodo_channel.toml",
        include_str!("../../templates/fodo_channel.toml"),
    ),
    (
        "rlc_bench.toml",
        include_str!("../../templates/rlc_bench.toml"),
    ),
    (
        "pfn_modulator.toml",
        include_str!("../../templates/pfn_modulator.toml"),
    ),
];

/// The shipped templates: vacuum station, FODO-style transport channel,
/// RC/RLC bench and PFN modulator, one per lab kind.
pub fn builtin_templates() -> Vec<SchemeTemplate> {
    BUILTIN
        .iter()
        .map(|(name, text)| {
            SchemeTemplate::from_toml_str(text).unwrap_or_else(|e| panic!("built-in {name}: {e}"))
        })
        .collect()
}

pub fn builtin_template(template_id: &str) -> Option<SchemeTemplate> {
    builtin_templates()
        .into_iter()
        .find(|t| t.template_id == template_id)
}

/// File names and documents of the shipped templates.
pub fn builtin_template_files() -> impl Iterator<Item = (&'static str, &'static str)> {
    BUILTIN.into_iter()
}

pub fn load_template_file(path: &Path) -> Result<SchemeTemplate, SchemeError> {
    let text = std::fs::read_to_string(path).map_err(|e| SchemeError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    SchemeTemplate::from_toml_str(&text).map_err(|e| SchemeError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

/// Loads every `*.toml` file in `dir`, sorted by file name. Template ids
/// must be unique.
pub fn load_templates_dir(dir: &Path) -> Result<Vec<SchemeTemplate>, SchemeError> {
    let io = |e: std::io::Error| SchemeError::Io {
        path: dir.display().to_string(),
        reason: e.to_string(),
    };
    let mut paths = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "toml") {
            paths.push(path);
        }
    }
    paths.sort();
    let mut seen = BTreeSet::new();
    let mut templates = Vec::with_capacity(paths.len());
    for path in paths {
        let template = load_template_file(&path)?;
        if !seen.insert(template.template_id.clone()) {
            return Err(SchemeError::DuplicateTemplate(template.template_id));
        }
        templates.push(template);
    }
    Ok(templates)
}
