use std::collections::BTreeMap;
use std::fs;

use serde::Deserialize;

use super::fixtures;

#[derive(Deserialize)]
pub struct Expected {
    pub loc: u32,
    pub ploc: u32,
    pub complexity: u32,
    pub functions: Vec<(String, u32, u32)>,
}

pub fn expected() -> BTreeMap<String, Expected> {
    let text = fs::read_to_string(fixtures().join("complexity/expected.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

pub fn source(name: &str) -> String {
    fs::read_to_string(fixtures().join("complexity").join(name)).unwrap()
}

/// Appends `noise` to the end of line `line` (1-based) of `src`.
pub fn inject(src: &str, line: usize, noise: &str) -> String {
    src.lines()
        .enumerate()
        .map(|(i, l)| if i + 1 == line { format!("{l}{noise}") } else { l.to_string() })
        .collect::<Vec<_>>()
        .join("\n")
}
