//! Named configurations shipped with the binary.

use std::path::Path;

use crate::config::RunConfig;
use crate::error::{AppError, AppResult};

const PRESETS: &[(&str, &str)] = &[
    ("table1", include_str!("../presets/table1.toml")),
    ("waveguide", include_str!("../presets/waveguide.toml")),
    ("and", include_str!("../presets/and.toml")),
    ("xor", include_str!("../presets/xor.toml")),
    ("jammed-and", include_str!("../presets/jammed-and.toml")),
    ("desk-waveguide", include_str!("../presets/desk-waveguide.toml")),
    ("desk-and", include_str!("../presets/desk-and.toml")),
    ("desk-xor", include_str!("../presets/desk-xor.toml")),
    ("toy", include_str!("../presets/toy.toml")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

pub fn source(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn load(name: &str) -> AppResult<RunConfig> {
    let text = source(name).ok_or_else(|| {
        let known: Vec<_> = names().collect();
        AppError::Usage(format!("unknown preset '{name}' (known: {})", known.join(", ")))
    })?;
    RunConfig::from_toml(text, Path::new(&format!("preset:{name}")))
}
