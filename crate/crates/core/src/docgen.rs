//! Synthetic same-template documents with known ground truth.
//!
//! A template places boilerplate elements at fixed page positions and entity
//! values relative to them. Glyphs are 10 px wide and 20 px high; words of
//! one element are separated by one glyph.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::factstore::{
    bundled_lexicon, write_fact_file, BoundingBox, DataTypeTag, DatatypeDetector, DocumentFacts, FactError,
    LexiconKind, PageSize,
};

pub const GLYPH_WIDTH: u32 = 10;
pub const GLYPH_HEIGHT: u32 = 20;
pub const LINE_PITCH: u32 = 30;
/// Bound on box jitter in pixels, below the inter-word gap.
pub const MAX_JITTER: i64 = 4;
const MAX_RESAMPLE: usize = 100;

const DOCTOR1: &str = include_str!("../data/templates/doctor1.json");
const DOCTOR2: &str = include_str!("../data/templates/doctor2.json");
const PATENT: &str = include_str!("../data/templates/patent.json");

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GenError {
    #[error("invalid template {template}: {message}")]
    Template { template: String, message: String },
    #[error("tokens of {a} and {b} overlap")]
    Collision { a: String, b: String },
    #[error("could not sample a fresh {dtype} value for {entity}")]
    Exhausted { entity: String, dtype: DataTypeTag },
    #[error(transparent)]
    Facts(#[from] FactError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Element {
    pub id: String,
    pub text: String,
    pub x: u32,
    pub y: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Placement {
    /// Absolute position of the first value token.
    At { x: u32, y: u32 },
    /// Same row, after the anchor element plus `gap` glyphs.
    RightOf {
        anchor: String,
        #[serde(default = "one")]
        gap: u32,
    },
    /// Next row, left-aligned with the anchor element.
    Below { anchor: String },
}

fn one() -> u32 {
    1
}

/// The value appears at every placement; with probability `decoy_prob`
/// all placements after the first carry one shared different value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ambiguity {
    pub k: usize,
    #[serde(default)]
    pub decoy_prob: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub entity: String,
    pub dtype: DataTypeTag,
    /// Characters for alphanumeric and number values, tokens for names.
    #[serde(default)]
    pub length: Option<usize>,
    pub placements: Vec<Placement>,
    #[serde(default)]
    pub ambiguity: Option<Ambiguity>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemplateSpec {
    pub template_id: String,
    pub page: PageSize,
    pub elements: Vec<Element>,
    pub fields: Vec<FieldSpec>,
    /// Alternative spellings for boilerplate words.
    #[serde(default)]
    pub synonyms: BTreeMap<String, Vec<String>>,
}

impl TemplateSpec {
    pub fn from_json(src: &str) -> Result<Self, GenError> {
        let spec: TemplateSpec = serde_json::from_str(src)
            .map_err(|e| GenError::Template { template: "?".into(), message: e.to_string() })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, GenError> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| GenError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Self::from_json(&src)
    }

    pub fn builtin(id: &str) -> Option<Self> {
        let src = match id {
            "doctor1" => DOCTOR1,
            "doctor2" => DOCTOR2,
            "patent" => PATENT,
            _ => return None,
        };
        Some(Self::from_json(src).expect("bundled template is valid"))
    }

    pub fn builtin_ids() -> [&'static str; 3] {
        ["doctor1", "doctor2", "patent"]
    }

    pub fn field(&self, entity: &str) -> Option<&FieldSpec> {
        self.fields.iter().find(|f| f.entity == entity)
    }

    pub fn entities(&self) -> Vec<String> {
        self.fields.iter().map(|f| f.entity.clone()).collect()
    }

    pub fn validate(&self) -> Result<(), GenError> {
        let err = |message: String| GenError::Template { template: self.template_id.clone(), message };
        let mut ids = HashSet::new();
        for e in &self.elements {
            if !ids.insert(e.id.as_str()) {
                return Err(err(format!("duplicate element id {}", e.id)));
            }
            if e.text.split_whitespace().next().is_none() {
                return Err(err(format!("element {} has no text", e.id)));
            }
        }
        let mut names = HashSet::new();
        for f in &self.fields {
            if !names.insert(f.entity.as_str()) {
                return Err(err(format!("duplicate entity {}", f.entity)));
            }
            if f.placements.is_empty() {
                return Err(err(format!("entity {} has no placement", f.entity)));
            }
            for p in &f.placements {
                if let Placement::RightOf { anchor, .. } | Placement::Below { anchor } = p {
                    if !ids.contains(anchor.as_str()) {
                        return Err(err(format!("entity {} refers to unknown element {anchor}", f.entity)));
                    }
                }
            }
            if let Some(a) = &f.ambiguity {
                if a.k < 2 || a.k != f.placements.len() || !(0.0..=1.0).contains(&a.decoy_prob) {
                    return Err(err(format!("bad ambiguity directive on {}", f.entity)));
                }
            }
        }
        Ok(())
    }

    /// All boilerplate words, including synonyms.
    fn boilerplate_words(&self) -> HashSet<String> {
        let mut out: HashSet<String> =
            self.elements.iter().flat_map(|e| e.text.split_whitespace().map(str::to_string)).collect();
        out.extend(self.synonyms.values().flatten().cloned());
        out
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfile {
    /// Standard deviation of per-token box translation, pixels.
    #[serde(default)]
    pub box_jitter: f64,
    #[serde(default)]
    pub token_drop_prob: f64,
    #[serde(default)]
    pub keyword_variant_prob: f64,
    #[serde(default)]
    pub line_shift_prob: f64,
}

impl NoiseProfile {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<(), GenError> {
        let p = [self.token_drop_prob, self.keyword_variant_prob, self.line_shift_prob];
        if self.box_jitter < 0.0 || !self.box_jitter.is_finite() || p.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(GenError::Template { template: "noise".into(), message: format!("{self:?}") });
        }
        Ok(())
    }
}

/// Ground truth for one entity of one document.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub doc_id: String,
    pub entity: String,
    pub value: String,
    pub locations: Vec<[usize; 3]>,
}

#[derive(Clone, Debug)]
pub struct GeneratedDoc {
    pub facts: DocumentFacts,
    pub truth: Vec<TruthRecord>,
}

/// Random values per data type.
#[derive(Clone, Debug)]
pub struct ValueSampler {
    names: Vec<String>,
    cities: Vec<String>,
    medical: Vec<String>,
    detector: DatatypeDetector,
}

const WORDS: [&str; 12] = [
    "Kontrolle",
    "Beratung",
    "Therapie",
    "Vorsorge",
    "Nachsorge",
    "Befund",
    "Termin",
    "Visite",
    "Abklärung",
    "Impfung",
    "Ausgabe",
    "Prüfung",
];

impl Default for ValueSampler {
    fn default() -> Self {
        ValueSampler {
            names: bundled_lexicon(LexiconKind::Name),
            cities: bundled_lexicon(LexiconKind::City),
            medical: bundled_lexicon(LexiconKind::MedicalTerm),
            detector: DatatypeDetector::default(),
        }
    }
}

impl ValueSampler {
    pub fn detector(&self) -> &DatatypeDetector {
        &self.detector
    }

    /// A value of `dtype`; `length` is the character count for alphanumeric
    /// and number values and the token count for names.
    pub fn sample(&self, dtype: DataTypeTag, length: Option<usize>, rng: &mut impl Rng) -> String {
        let pick = |xs: &[String], rng: &mut dyn rand::RngCore| xs.choose(rng).cloned().unwrap_or_default();
        match dtype {
            DataTypeTag::Date => {
                format!(
                    "{:02}.{:02}.{}",
                    rng.random_range(1..=28),
                    rng.random_range(1..=12),
                    rng.random_range(2010..=2024)
                )
            }
            DataTypeTag::Amount => {
                let euros: u32 = rng.random_range(10..5000);
                format!("{euros}.{:02}", rng.random_range(0..100))
            }
            DataTypeTag::Number => {
                let n = length.unwrap_or(5).max(1);
                let mut s = rng.random_range(1..=9).to_string();
                for _ in 1..n {
                    s.push(char::from(b'0' + rng.random_range(0..10u8)));
                }
                s
            }
            DataTypeTag::Alphanumeric => {
                let n = length.unwrap_or(10).max(2);
                let pattern: String = (0..n).map(|i| if i % 3 == 0 { 'A' } else { '0' }).collect();
                fill_pattern(&pattern, rng)
            }
            DataTypeTag::Name => {
                let n = length.unwrap_or(2).max(1);
                let mut parts: Vec<String> = Vec::new();
                while parts.len() < n {
                    let w = pick(&self.names, rng);
                    if !parts.contains(&w) {
                        parts.push(w);
                    }
                }
                parts.join(" ")
            }
            DataTypeTag::City => pick(&self.cities, rng),
            DataTypeTag::MedicalTerm => pick(&self.medical, rng),
            DataTypeTag::Word => WORDS.choose(rng).map(|w| w.to_string()).unwrap_or_default(),
        }
    }

    /// A fresh value shaped like `original`: same data type per token and the
    /// same token count; alphanumeric tokens keep their letter/digit pattern.
    pub fn sample_like(&self, original: &str, rng: &mut impl Rng) -> String {
        original
            .split(' ')
            .map(|tok| {
                let dtype = self.detector.datatype_of(tok);
                match dtype {
                    DataTypeTag::Alphanumeric => fill_pattern(tok, rng),
                    DataTypeTag::Number => self.sample(dtype, Some(tok.len()), rng),
                    DataTypeTag::Name => self.sample(dtype, Some(1), rng),
                    _ => self.sample(dtype, None, rng),
                }
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Token-wise data types of a value.
    pub fn dtypes(&self, value: &str) -> Vec<DataTypeTag> {
        value.split(' ').map(|t| self.detector.datatype_of(t)).collect()
    }
}

/// Replaces digits and letters with random ones of the same class.
fn fill_pattern(pattern: &str, rng: &mut impl Rng) -> String {
    pattern
        .chars()
        .map(|c| {
            if c.is_ascii_digit() {
                char::from(b'0' + rng.random_range(0..10u8))
            } else if c.is_ascii_uppercase() {
                char::from(b'A' + rng.random_range(0..26u8))
            } else if c.is_ascii_lowercase() {
                char::from(b'a' + rng.random_range(0..26u8))
            } else {
                c
            }
        })
        .collect()
}

/// The random stream for document `index` of a corpus.
pub fn doc_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn doc_id(spec: &TemplateSpec, index: usize) -> String {
    format!("{}_{index:03}", spec.template_id)
}

struct Placed {
    owner: String,
    text: String,
    bbox: BoundingBox,
    boilerplate: bool,
}

fn word_width(w: &str) -> u32 {
    w.chars().count() as u32 * GLYPH_WIDTH
}

fn lay_out(owner: &str, words: &[String], x: u32, y: u32, boilerplate: bool, out: &mut Vec<Placed>) -> u32 {
    let mut cx = x;
    for w in words {
        let bbox = BoundingBox::new(cx, y, cx + word_width(w), y + GLYPH_HEIGHT);
        out.push(Placed { owner: owner.to_string(), text: w.clone(), bbox, boilerplate });
        cx = bbox.x1 + GLYPH_WIDTH;
    }
    cx.saturating_sub(GLYPH_WIDTH).max(x)
}

/// Document 0 of a corpus generated from `seed`.
pub fn generate_document(spec: &TemplateSpec, seed: u64, noise: &NoiseProfile) -> Result<GeneratedDoc, GenError> {
    generate_indexed(spec, seed, 0, noise, &ValueSampler::default())
}

/// Document `index` of the corpus generated from `seed`.
pub fn generate_indexed(
    spec: &TemplateSpec,
    seed: u64,
    index: usize,
    noise: &NoiseProfile,
    sampler: &ValueSampler,
) -> Result<GeneratedDoc, GenError> {
    noise.validate()?;
    let mut rng = doc_rng(seed, index as u64);
    let reserved = spec.boilerplate_words();

    // values
    let mut used: HashSet<String> = HashSet::new();
    let mut fresh = |entity: &str, dtype: DataTypeTag, length: Option<usize>, rng: &mut ChaCha8Rng| {
        for _ in 0..MAX_RESAMPLE {
            let v = sampler.sample(dtype, length, rng);
            if v.split(' ').all(|t| !reserved.contains(t) && !used.contains(t)) {
                used.extend(v.split(' ').map(str::to_string));
                return Ok(v);
            }
        }
        Err(GenError::Exhausted { entity: entity.to_string(), dtype })
    };
    let mut values: Vec<Vec<String>> = Vec::new();
    for f in &spec.fields {
        let v = fresh(&f.entity, f.dtype, f.length, &mut rng)?;
        let mut per_placement = vec![v; f.placements.len()];
        if let Some(a) = &f.ambiguity {
            if rng.random_bool(a.decoy_prob) {
                let decoy = fresh(&f.entity, f.dtype, f.length, &mut rng)?;
                for slot in per_placement.iter_mut().skip(1) {
                    *slot = decoy.clone();
                }
            }
        }
        values.push(per_placement);
    }

    // boilerplate, with keyword variants, line shifts and drops
    let normal = Normal::new(0.0, noise.box_jitter.max(f64::MIN_POSITIVE)).expect("finite std-dev");
    let mut placed: Vec<Placed> = Vec::new();
    let mut anchors: HashMap<&str, (u32, u32, u32)> = HashMap::new();
    for e in &spec.elements {
        let words: Vec<String> = e
            .text
            .split_whitespace()
            .map(|w| match spec.synonyms.get(w) {
                Some(alts) if !alts.is_empty() && rng.random_bool(noise.keyword_variant_prob) => {
                    alts.choose(&mut rng).cloned().unwrap_or_else(|| w.to_string())
                }
                _ => w.to_string(),
            })
            .collect();
        let mut x = e.x;
        if rng.random_bool(noise.line_shift_prob) {
            x = (x as i64 + rng.random_range(-3..=3) * GLYPH_WIDTH as i64).max(0) as u32;
        }
        let end = lay_out(&e.id, &words, x, e.y, true, &mut placed);
        anchors.insert(e.id.as_str(), (x, end, e.y));
    }
    let before = placed.len();
    placed.retain(|_| !rng.random_bool(noise.token_drop_prob));
    debug_assert!(placed.len() <= before);

    for (f, vals) in spec.fields.iter().zip(&values) {
        for (p, v) in f.placements.iter().zip(vals) {
            let (x, y) = match p {
                Placement::At { x, y } => (*x, *y),
                Placement::RightOf { anchor, gap } => {
                    let (_, end, y) = anchors[anchor.as_str()];
                    (end + GLYPH_WIDTH * gap.max(&1), y)
                }
                Placement::Below { anchor } => {
                    let (x, _, y) = anchors[anchor.as_str()];
                    (x, y + LINE_PITCH)
                }
            };
            let words: Vec<String> = v.split(' ').map(str::to_string).collect();
            lay_out(&f.entity, &words, x, y, false, &mut placed);
        }
    }

    if noise.box_jitter > 0.0 {
        for t in &mut placed {
            let mut shift = || (normal.sample(&mut rng).round() as i64).clamp(-MAX_JITTER, MAX_JITTER);
            let (dx, dy) = (shift(), shift());
            let mv = |c: u32, d: i64| (c as i64 + d).max(0) as u32;
            let w = t.bbox.width();
            let h = t.bbox.height();
            let x0 = mv(t.bbox.x0, dx);
            let y0 = mv(t.bbox.y0, dy);
            t.bbox = BoundingBox::new(x0, y0, x0 + w, y0 + h);
        }
    }

    for i in 0..placed.len() {
        for j in i + 1..placed.len() {
            if placed[i].bbox.overlaps(&placed[j].bbox) {
                return Err(GenError::Collision { a: placed[i].owner.clone(), b: placed[j].owner.clone() });
            }
        }
    }

    let id = doc_id(spec, index);
    let raw = placed.iter().map(|t| (t.text.clone(), t.bbox)).collect();
    let facts = DocumentFacts::new(id.clone(), spec.page, raw, sampler.detector())?;
    let truth = spec
        .fields
        .iter()
        .zip(&values)
        .map(|(f, vals)| TruthRecord {
            doc_id: id.clone(),
            entity: f.entity.clone(),
            value: vals[0].clone(),
            locations: facts.locate(&vals[0]).into_iter().map(|(l, a, b)| [l, a, b]).collect(),
        })
        .collect();
    debug_assert!(placed.iter().filter(|t| !t.boilerplate).count() <= facts.tokens().len());
    Ok(GeneratedDoc { facts, truth })
}

/// `n` documents generated in parallel, in index order.
pub fn generate_corpus_docs(
    spec: &TemplateSpec,
    n: usize,
    seed: u64,
    noise: &NoiseProfile,
) -> Result<Vec<GeneratedDoc>, GenError> {
    let sampler = ValueSampler::default();
    (0..n).into_par_iter().map(|i| generate_indexed(spec, seed, i, noise, &sampler)).collect()
}

pub const TRUTH_FILE: &str = "truth.json";

/// Writes `n` fact files and `truth.json` into `dir`.
pub fn generate_corpus(
    spec: &TemplateSpec,
    n: usize,
    seed: u64,
    noise: &NoiseProfile,
    dir: &Path,
) -> Result<Vec<GeneratedDoc>, GenError> {
    if n == 0 {
        return Err(GenError::Template {
            template: spec.template_id.clone(),
            message: "corpus size must be ≥ 1".into(),
        });
    }
    let docs = generate_corpus_docs(spec, n, seed, noise)?;
    let io = |p: &Path, e: std::io::Error| GenError::Io { path: p.display().to_string(), message: e.to_string() };
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    for d in &docs {
        write_fact_file(&dir.join(format!("{}.json", d.facts.doc_id())), &d.facts)?;
    }
    let truth: Vec<&TruthRecord> = docs.iter().flat_map(|d| &d.truth).collect();
    let path = dir.join(TRUTH_FILE);
    let mut json = serde_json::to_string_pretty(&truth).expect("truth serializes");
    json.push('\n');
    std::fs::write(&path, json).map_err(|e| io(&path, e))?;
    Ok(docs)
}

pub fn read_truth(path: &Path) -> Result<Vec<TruthRecord>, GenError> {
    let src = std::fs::read_to_string(path)
        .map_err(|e| GenError::Io { path: path.display().to_string(), message: e.to_string() })?;
    serde_json::from_str(&src).map_err(|e| GenError::Io { path: path.display().to_string(), message: e.to_string() })
}
