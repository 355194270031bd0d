//! JSON fact files: one page of word tokens.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DatatypeDetector, DocumentFacts, FactError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageSize {
    pub width: u32,
    pub height: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactToken {
    pub text: String,
    #[serde(rename = "box")]
    pub bbox: [u32; 4],
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactFile {
    pub doc_id: String,
    pub page: PageSize,
    pub tokens: Vec<FactToken>,
}

pub fn read_fact_file(path: &Path, detector: &DatatypeDetector) -> Result<DocumentFacts, FactError> {
    let p = path.display().to_string();
    let src = std::fs::read_to_string(path).map_err(|e| FactError::Io { path: p.clone(), message: e.to_string() })?;
    let file: FactFile =
        serde_json::from_str(&src).map_err(|e| FactError::Parse { path: p, message: e.to_string() })?;
    DocumentFacts::from_fact_file(file, detector)
}

pub fn write_fact_file(path: &Path, doc: &DocumentFacts) -> Result<(), FactError> {
    let io = |e: std::io::Error| FactError::Io { path: path.display().to_string(), message: e.to_string() };
    let mut json = serde_json::to_string_pretty(&doc.to_fact_file()).expect("fact file serializes");
    json.push('\n');
    std::fs::write(path, json).map_err(io)
}
