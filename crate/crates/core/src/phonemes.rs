//! Unified multilingual phoneme inventory and its integer coding.
//!
//! Symbols are ordered lexicographically, codes are their positions, and the
//! CTC blank takes the first code past the end of the symbol list.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const INVENTORY_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhonemeSymbol {
    pub languages: BTreeSet<String>,
    pub symbol: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhonemeInventory {
    languages: Vec<String>,
    symbols: Vec<PhonemeSymbol>,
    codes: BTreeMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct InventoryFile {
    languages: Vec<String>,
    symbols: Vec<PhonemeSymbol>,
    version: u32,
}

fn check_symbol(symbol: &str) -> Result<()> {
    if symbol.is_empty() || symbol.chars().any(char::is_whitespace) {
        return Err(Error::Config(format!(
            "invalid phoneme symbol {symbol:?}: must be nonempty without whitespace"
        )));
    }
    Ok(())
}

impl PhonemeInventory {
    /// Union of per-language symbol lists with merged language provenance.
    pub fn build_union(per_language: &BTreeMap<String, Vec<String>>) -> Result<Self> {
        if per_language.is_empty() {
            return Err(Error::Config("phoneme inventory needs at least one language".into()));
        }
        let mut merged: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (lang, symbols) in per_language {
            if symbols.is_empty() {
                return Err(Error::Config(format!("language {lang} has an empty phoneme list")));
            }
            for s in symbols {
                check_symbol(s)?;
                merged.entry(s.clone()).or_default().insert(lang.clone());
            }
        }
        let languages = per_language.keys().cloned().collect();
        let symbols = merged
            .into_iter()
            .map(|(symbol, languages)| PhonemeSymbol { languages, symbol })
            .collect();
        Self::from_parts(languages, symbols)
    }

    fn from_parts(languages: Vec<String>, mut symbols: Vec<PhonemeSymbol>) -> Result<Self> {
        if languages.is_empty() {
            return Err(Error::Config("phoneme inventory needs at least one language".into()));
        }
        let known: BTreeSet<&String> = languages.iter().collect();
        symbols.sort_by(|a, b| a.symbol.cmp(&b.symbol));
        let mut codes = BTreeMap::new();
        for (i, s) in symbols.iter().enumerate() {
            check_symbol(&s.symbol)?;
            if s.languages.is_empty() {
                return Err(Error::Config(format!("symbol {} has no language", s.symbol)));
            }
            if let Some(l) = s.languages.iter().find(|l| !known.contains(l)) {
                return Err(Error::Config(format!(
                    "symbol {} tagged with unconfigured language {l}",
                    s.symbol
                )));
            }
            if codes.insert(s.symbol.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate symbol {}", s.symbol)));
            }
        }
        Ok(Self {
            languages,
            symbols,
            codes,
        })
    }

    /// Union of two inventories.
    pub fn merge(&self, other: &Self) -> Result<Self> {
        let mut per_language: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for inv in [self, other] {
            for s in &inv.symbols {
                for l in &s.languages {
                    per_language.entry(l.clone()).or_default().push(s.symbol.clone());
                }
            }
        }
        Self::build_union(&per_language)
    }

    /// Only the symbols occurring in `language`, recoded densely.
    pub fn sub_inventory(&self, language: &str) -> Result<Self> {
        let symbols: Vec<String> = self
            .symbols
            .iter()
            .filter(|s| s.languages.contains(language))
            .map(|s| s.symbol.clone())
            .collect();
        if symbols.is_empty() {
            return Err(Error::Lookup(format!("language {language} is not in the inventory")));
        }
        Self::build_union(&BTreeMap::from([(language.to_string(), symbols)]))
    }

    pub fn languages(&self) -> &[String] {
        &self.languages
    }

    pub fn symbols(&self) -> &[PhonemeSymbol] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// The CTC blank code, one past the last symbol.
    pub fn blank_id(&self) -> usize {
        self.symbols.len()
    }

    /// Output classes of the recognizer head: symbols plus blank.
    pub fn num_classes(&self) -> usize {
        self.symbols.len() + 1
    }

    pub fn code(&self, symbol: &str) -> Option<usize> {
        self.codes.get(symbol).copied()
    }

    pub fn symbol(&self, code: usize) -> Option<&str> {
        self.symbols.get(code).map(|s| s.symbol.as_str())
    }

    pub fn symbols_of(&self, language: &str) -> Vec<&str> {
        self.symbols
            .iter()
            .filter(|s| s.languages.contains(language))
            .map(|s| s.symbol.as_str())
            .collect()
    }

    pub fn encode<T: AsRef<str>>(&self, seq: &[T]) -> Result<Vec<usize>> {
        seq.iter()
            .enumerate()
            .map(|(pos, s)| {
                self.code(s.as_ref()).ok_or_else(|| {
                    Error::Lookup(format!("unknown phoneme {:?} at position {pos}", s.as_ref()))
                })
            })
            .collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Result<Vec<String>> {
        ids.iter()
            .enumerate()
            .map(|(pos, &id)| {
                if id == self.blank_id() {
                    return Err(Error::Lookup(format!("blank id {id} at position {pos} cannot be decoded")));
                }
                self.symbol(id)
                    .map(str::to_string)
                    .ok_or_else(|| Error::Lookup(format!("phoneme id {id} at position {pos} out of range")))
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let file = InventoryFile {
            languages: self.languages.clone(),
            symbols: self.symbols.clone(),
            version: INVENTORY_VERSION,
        };
        Ok(serde_json::to_string_pretty(&file)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(text)?;
        let version = raw.get("version").and_then(serde_json::Value::as_u64);
        if version != Some(u64::from(INVENTORY_VERSION)) {
            return Err(Error::Format(format!(
                "unsupported inventory version {version:?}, expected {INVENTORY_VERSION}"
            )));
        }
        let file: InventoryFile = serde_json::from_value(raw)?;
        Self::from_parts(file.languages, file.symbols)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
