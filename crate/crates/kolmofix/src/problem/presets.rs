//! The shipped example problems, embedded in the binary so `examples`
//! works without any files on disk.

use super::Problem;
use crate::error::{Error, Result};

/// Names of the shipped problems, in catalog order.
pub const PRESET_NAMES: [&str; 6] = [
    "ou",
    "cubic-interaction",
    "compact-support-diffusion",
    "half-line-diffusion",
    "langevin-kinetic",
    "langevin-meanfield",
];

/// The raw problem-file text of a shipped problem.
pub fn preset_text(name: &str) -> Option<&'static str> {
    Some(match name {
        "ou" => include_str!("../../presets/ou.cfg"),
        "cubic-interaction" => include_str!("../../presets/cubic-interaction.cfg"),
        "compact-support-diffusion" => {
            include_str!("../../presets/compact-support-diffusion.cfg")
        }
        "half-line-diffusion" => include_str!("../../presets/half-line-diffusion.cfg"),
        "langevin-kinetic" => include_str!("../../presets/langevin-kinetic.cfg"),
        "langevin-meanfield" => include_str!("../../presets/langevin-meanfield.cfg"),
        _ => return None,
    })
}

/// Assemble a shipped problem by name.
pub fn load_preset(name: &str) -> Result<Problem> {
    let text = preset_text(name).ok_or_else(|| {
        Error::config(format!(
            "unknown preset `{name}`; available: {}",
            PRESET_NAMES.join(", ")
        ))
    })?;
    Problem::from_text(text, name)
}

/// `(name, description)` pairs for every shipped problem.
pub fn catalog() -> Vec<(&'static str, String)> {
    PRESET_NAMES
        .iter()
        .map(|name| {
            let p = load_preset(name).expect("shipped problems must assemble");
            (*name, p.describe)
        })
        .collect()
}
