//! Word tokens of one page and the primitive relations derived from them.

mod datatype;
mod io;
mod layout;
mod relations;

use std::collections::HashMap;
use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::logic::{Constant, ExtensionalDb};

pub use datatype::{bundled_lexicon, DataTypeTag, DatatypeDetector, LexiconKind};
pub use io::{read_fact_file, write_fact_file, FactFile, FactToken, PageSize};
pub use layout::{analyze, BlockInfo, BoundingBox, Layout, LineInfo};
pub use relations::{derive, Relation, RelationStore, MAX_SUBSTRING_TOKENS, RELATIONS};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FactError {
    #[error("{path}: malformed fact file: {message}")]
    Parse { path: String, message: String },
    #[error("invalid document: {0}")]
    Validation(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("unknown relation {0}")]
    UnknownRelation(String),
}

/// A word with its position on the page.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WordToken {
    pub text: String,
    pub bbox: BoundingBox,
    pub line_id: usize,
    pub word_id: usize,
    pub block_id: usize,
    pub dtype: DataTypeTag,
}

/// Ground-truth value of one entity: the text and the token spans
/// `(line, first word, last word)` where it occurs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub entity: String,
    pub value: String,
    pub locations: Vec<(usize, usize, usize)>,
}

/// All facts about one document page.
#[derive(Clone, Debug)]
pub struct DocumentFacts {
    doc_id: String,
    page: PageSize,
    tokens: Vec<WordToken>,
    layout: Layout,
    store: RelationStore,
}

impl DocumentFacts {
    /// Validates the raw tokens, groups them and derives every relation.
    pub fn new(
        doc_id: impl Into<String>,
        page: PageSize,
        raw: Vec<(String, BoundingBox)>,
        detector: &DatatypeDetector,
    ) -> Result<Self, FactError> {
        let doc_id = doc_id.into();
        if doc_id.is_empty() {
            return Err(FactError::Validation("empty document id".into()));
        }
        let mut seen: HashMap<BoundingBox, &str> = HashMap::new();
        for (i, (text, b)) in raw.iter().enumerate() {
            if !b.is_valid() {
                return Err(FactError::Validation(format!("token {i}: degenerate box {b:?}")));
            }
            if text.is_empty() || text.chars().any(char::is_whitespace) {
                return Err(FactError::Validation(format!("token {i}: text {text:?} is not a single word")));
            }
            if let Some(prev) = seen.insert(*b, text) {
                if prev != text {
                    return Err(FactError::Validation(format!(
                        "token {i}: box {b:?} carries both {prev:?} and {text:?}"
                    )));
                }
            }
        }
        let boxes: Vec<BoundingBox> = raw.iter().map(|(_, b)| *b).collect();
        let layout = analyze(&boxes);
        let tokens: Vec<WordToken> = raw
            .into_iter()
            .enumerate()
            .map(|(i, (text, bbox))| {
                let (line_id, word_id) = layout.positions[i];
                WordToken {
                    dtype: detector.datatype_of(&text),
                    text,
                    bbox,
                    line_id,
                    word_id,
                    block_id: layout.lines[line_id].block,
                }
            })
            .collect();
        let store = derive(&doc_id, &tokens, &layout);
        Ok(DocumentFacts { doc_id, page, tokens, layout, store })
    }

    pub fn doc_id(&self) -> &str {
        &self.doc_id
    }

    pub fn page(&self) -> PageSize {
        self.page
    }

    /// Tokens in input order.
    pub fn tokens(&self) -> &[WordToken] {
        &self.tokens
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn relations(&self) -> &RelationStore {
        &self.store
    }

    pub fn line_count(&self) -> usize {
        self.layout.lines.len()
    }

    pub fn block_count(&self) -> usize {
        self.layout.blocks.len()
    }

    /// Texts of a line's tokens, left to right.
    pub fn line_words(&self, line: usize) -> Vec<&str> {
        self.layout.lines[line].tokens.iter().map(|&t| self.tokens[t].text.as_str()).collect()
    }

    pub fn line_text(&self, line: usize) -> String {
        self.line_words(line).join(" ")
    }

    /// Token index at `(line, word)`.
    pub fn token_at(&self, line: usize, word: usize) -> Option<usize> {
        self.layout.lines.get(line)?.tokens.get(word).copied()
    }

    /// Spans `(line, first word, last word)` whose joined text equals `value`.
    pub fn locate(&self, value: &str) -> Vec<(usize, usize, usize)> {
        let parts: Vec<&str> = value.split(' ').collect();
        let mut out = Vec::new();
        for line in &self.layout.lines {
            let words = self.line_words(line.id);
            if words.len() < parts.len() {
                continue;
            }
            for s in 0..=words.len() - parts.len() {
                if words[s..s + parts.len()] == parts[..] {
                    out.push((line.id, s, s + parts.len() - 1));
                }
            }
        }
        out
    }

    /// Tuples of `name` matching `pattern` (`None` = unbound position).
    pub fn query(&self, name: &str, pattern: &[Option<Constant>]) -> Result<Vec<Vec<Constant>>, FactError> {
        let rel = self.store.get(name).ok_or_else(|| FactError::UnknownRelation(name.to_string()))?;
        if rel.arity() != pattern.len() {
            return Err(FactError::UnknownRelation(format!("{name}/{}", pattern.len())));
        }
        let mut out = Vec::new();
        let _ = rel.scan(pattern, &mut |t| {
            out.push(t.to_vec());
            ControlFlow::Continue(())
        });
        Ok(out)
    }

    /// Raw tokens in input order, as accepted by [`DocumentFacts::new`].
    pub fn raw_tokens(&self) -> Vec<(String, BoundingBox)> {
        self.tokens.iter().map(|t| (t.text.clone(), t.bbox)).collect()
    }

    /// Rebuilds the document with some token texts replaced.
    pub fn with_replacements(
        &self,
        replace: &HashMap<usize, String>,
        detector: &DatatypeDetector,
    ) -> Result<Self, FactError> {
        let raw = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (replace.get(&i).cloned().unwrap_or_else(|| t.text.clone()), t.bbox))
            .collect();
        DocumentFacts::new(self.doc_id.clone(), self.page, raw, detector)
    }

    pub fn to_fact_file(&self) -> FactFile {
        FactFile {
            doc_id: self.doc_id.clone(),
            page: self.page,
            tokens: self
                .tokens
                .iter()
                .map(|t| FactToken { text: t.text.clone(), bbox: [t.bbox.x0, t.bbox.y0, t.bbox.x1, t.bbox.y1] })
                .collect(),
        }
    }

    pub fn from_fact_file(file: FactFile, detector: &DatatypeDetector) -> Result<Self, FactError> {
        let raw = file
            .tokens
            .into_iter()
            .map(|t| (t.text, BoundingBox::new(t.bbox[0], t.bbox[1], t.bbox[2], t.bbox[3])))
            .collect();
        DocumentFacts::new(file.doc_id, file.page, raw, detector)
    }
}

impl ExtensionalDb for DocumentFacts {
    fn relation_arity(&self, name: &str) -> Option<usize> {
        self.store.relation_arity(name)
    }

    fn scan(
        &self,
        name: &str,
        pattern: &[Option<Constant>],
        visit: &mut dyn FnMut(&[Constant]) -> ControlFlow<()>,
    ) -> ControlFlow<()> {
        self.store.scan(name, pattern, visit)
    }
}
