//! Abstract data-type detection for word tokens.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::FactError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataTypeTag {
    Word,
    Alphanumeric,
    Number,
    Amount,
    Date,
    Name,
    City,
    MedicalTerm,
}

impl DataTypeTag {
    pub const ALL: [DataTypeTag; 8] = [
        DataTypeTag::Word,
        DataTypeTag::Alphanumeric,
        DataTypeTag::Number,
        DataTypeTag::Amount,
        DataTypeTag::Date,
        DataTypeTag::Name,
        DataTypeTag::City,
        DataTypeTag::MedicalTerm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DataTypeTag::Word => "word",
            DataTypeTag::Alphanumeric => "alphanumeric",
            DataTypeTag::Number => "number",
            DataTypeTag::Amount => "amount",
            DataTypeTag::Date => "date",
            DataTypeTag::Name => "name",
            DataTypeTag::City => "city",
            DataTypeTag::MedicalTerm => "medical_term",
        }
    }

    /// The bracketed form used inside relations and programs, e.g. `<date>`.
    pub fn tag(self) -> &'static str {
        match self {
            DataTypeTag::Word => "<word>",
            DataTypeTag::Alphanumeric => "<alphanumeric>",
            DataTypeTag::Number => "<number>",
            DataTypeTag::Amount => "<amount>",
            DataTypeTag::Date => "<date>",
            DataTypeTag::Name => "<name>",
            DataTypeTag::City => "<city>",
            DataTypeTag::MedicalTerm => "<medical_term>",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.tag() == tag)
    }
}

impl fmt::Display for DataTypeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DataTypeTag {
    type Err = FactError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|d| d.as_str() == s || d.tag() == s)
            .ok_or_else(|| FactError::Validation(format!("unknown datatype '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LexiconKind {
    Name,
    City,
    MedicalTerm,
}

const NAMES: &str = include_str!("../../data/lexicons/names.txt");
const CITIES: &str = include_str!("../../data/lexicons/cities.txt");
const MEDICAL: &str = include_str!("../../data/lexicons/medical_terms.txt");

pub fn bundled_lexicon(kind: LexiconKind) -> Vec<String> {
    let src = match kind {
        LexiconKind::Name => NAMES,
        LexiconKind::City => CITIES,
        LexiconKind::MedicalTerm => MEDICAL,
    };
    parse_lexicon(src)
}

fn parse_lexicon(src: &str) -> Vec<String> {
    src.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect()
}

/// Assigns exactly one [`DataTypeTag`] per token text. Precedence:
/// date, amount, number, alphanumeric, then the lexicon tags (name, city,
/// medical term), falling back to word.
#[derive(Clone, Debug)]
pub struct DatatypeDetector {
    dates: Vec<Regex>,
    amount: Regex,
    number: Regex,
    alnum: Regex,
    names: HashSet<String>,
    cities: HashSet<String>,
    medical: HashSet<String>,
}

impl Default for DatatypeDetector {
    /// Detector with the bundled lexicons.
    fn default() -> Self {
        let mut d = Self::without_lexicons();
        d.names = bundled_lexicon(LexiconKind::Name).into_iter().collect();
        d.cities = bundled_lexicon(LexiconKind::City).into_iter().collect();
        d.medical = bundled_lexicon(LexiconKind::MedicalTerm).into_iter().collect();
        d
    }
}

impl DatatypeDetector {
    pub fn without_lexicons() -> Self {
        let re = |s: &str| Regex::new(s).expect("static pattern");
        DatatypeDetector {
            dates: vec![re(r"^(\d{1,2})[./-](\d{1,2})[./-](\d{4}|\d{2})$"), re(r"^(\d{4})-(\d{1,2})-(\d{1,2})$")],
            amount: re(r"^\d+[.,]\d{2}$"),
            number: re(r"^\d+$"),
            alnum: re(r"^[A-Za-z0-9./-]*\d[A-Za-z0-9./-]*$"),
            names: HashSet::new(),
            cities: HashSet::new(),
            medical: HashSet::new(),
        }
    }

    pub fn set_lexicon(&mut self, kind: LexiconKind, entries: impl IntoIterator<Item = String>) {
        let set = entries.into_iter().collect();
        match kind {
            LexiconKind::Name => self.names = set,
            LexiconKind::City => self.cities = set,
            LexiconKind::MedicalTerm => self.medical = set,
        }
    }

    /// Loads a lexicon file: one token per line, UTF-8.
    pub fn load_lexicon(&mut self, kind: LexiconKind, path: &Path) -> Result<(), FactError> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| FactError::Io { path: path.display().to_string(), message: e.to_string() })?;
        self.set_lexicon(kind, parse_lexicon(&src));
        Ok(())
    }

    pub fn lexicon_contains(&self, kind: LexiconKind, word: &str) -> bool {
        match kind {
            LexiconKind::Name => self.names.contains(word),
            LexiconKind::City => self.cities.contains(word),
            LexiconKind::MedicalTerm => self.medical.contains(word),
        }
    }

    fn is_date(&self, text: &str) -> bool {
        if let Some(c) = self.dates[0].captures(text) {
            let day: u32 = c[1].parse().unwrap_or(0);
            let month: u32 = c[2].parse().unwrap_or(0);
            return (1..=31).contains(&day) && (1..=12).contains(&month);
        }
        if let Some(c) = self.dates[1].captures(text) {
            let month: u32 = c[2].parse().unwrap_or(0);
            let day: u32 = c[3].parse().unwrap_or(0);
            return (1..=31).contains(&day) && (1..=12).contains(&month);
        }
        false
    }

    pub fn datatype_of(&self, text: &str) -> DataTypeTag {
        if self.is_date(text) {
            DataTypeTag::Date
        } else if self.amount.is_match(text) {
            DataTypeTag::Amount
        } else if self.number.is_match(text) {
            DataTypeTag::Number
        } else if self.alnum.is_match(text) {
            DataTypeTag::Alphanumeric
        } else if self.names.contains(text) {
            DataTypeTag::Name
        } else if self.cities.contains(text) {
            DataTypeTag::City
        } else if self.medical.contains(text) {
            DataTypeTag::MedicalTerm
        } else {
            DataTypeTag::Word
        }
    }
}
