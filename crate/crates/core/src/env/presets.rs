use std::collections::HashMap;
use std::sync::OnceLock;

use serde::Deserialize;

use super::task::{parse_suite, TaskSpec};
use crate::{Error, Result};

const PRESETS_JSON: &str = include_str!("../../fixtures/presets.json");

#[derive(Deserialize)]
struct PresetFile {
    tasks: Vec<TaskSpec>,
    sequences: HashMap<String, Vec<String>>,
}

struct Presets {
    tasks: HashMap<String, TaskSpec>,
    sequences: HashMap<String, Vec<String>>,
}

fn presets() -> &'static Presets {
    static CELL: OnceLock<Presets> = OnceLock::new();
    CELL.get_or_init(|| {
        let file: PresetFile = serde_json::from_str(PRESETS_JSON).expect("embedded presets parse");
        let tasks = file
            .tasks
            .into_iter()
            .map(|t| {
                t.validate().expect("embedded task is valid");
                (t.name.clone(), t)
            })
            .collect();
        Presets {
            tasks,
            sequences: file.sequences,
        }
    })
}

/// Names of all built-in sequences.
pub fn preset_names() -> Vec<String> {
    let mut names: Vec<String> = presets().sequences.keys().cloned().collect();
    names.push("SW20".into());
    names.sort();
    names
}

/// Looks up a built-in task by name.
pub fn task(name: &str) -> Option<TaskSpec> {
    presets().tasks.get(name).cloned()
}

/// Built-in sequence. `SW20` is `SW10` twice.
pub fn sequence_preset(name: &str) -> Result<Vec<TaskSpec>> {
    if name == "SW20" {
        let mut s = sequence_preset("SW10")?;
        s.extend(s.clone());
        return Ok(s);
    }
    let p = presets();
    let names = p
        .sequences
        .get(name)
        .ok_or_else(|| Error::UnknownPreset(name.to_string()))?;
    Ok(names.iter().map(|n| p.tasks[n].clone()).collect())
}

/// A preset name, or a path to a suite JSON file.
pub fn resolve_sequence(name_or_path: &str) -> Result<Vec<TaskSpec>> {
    match sequence_preset(name_or_path) {
        Ok(s) => Ok(s),
        Err(Error::UnknownPreset(_)) if std::path::Path::new(name_or_path).is_file() => {
            parse_suite(&std::fs::read_to_string(name_or_path)?)
        }
        Err(e) => Err(e),
    }
}
