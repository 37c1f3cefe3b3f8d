//! Lemma → (action, state changes) lexicon in a tab-separated format:
//!
//! ```text
//! # lemma<TAB>action<TAB>CATEGORY,CATEGORY
//! melt<TAB>melt<TAB>TEMPERATURE,COMPOSITION
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The six state-change categories. Variant order is alphabetical so sorted
/// sets serialize alphabetically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum StateChange {
    Cleanliness,
    Composition,
    Cookedness,
    Location,
    Shape,
    Temperature,
}

impl StateChange {
    pub const ALL: [StateChange; 6] = [
        StateChange::Cleanliness,
        StateChange::Composition,
        StateChange::Cookedness,
        StateChange::Location,
        StateChange::Shape,
        StateChange::Temperature,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StateChange::Cleanliness => "CLEANLINESS",
            StateChange::Composition => "COMPOSITION",
            StateChange::Cookedness => "COOKEDNESS",
            StateChange::Location => "LOCATION",
            StateChange::Shape => "SHAPE",
            StateChange::Temperature => "TEMPERATURE",
        }
    }
}

impl fmt::Display for StateChange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StateChange {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        StateChange::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| s.trim().to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexEntry {
    pub action: String,
    pub state_changes: BTreeSet<StateChange>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EventLexicon {
    entries: BTreeMap<String, LexEntry>,
    actions: BTreeMap<String, BTreeSet<StateChange>>,
}

impl EventLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, lemma: &str, action: &str, state_changes: BTreeSet<StateChange>) {
        self.actions
            .entry(action.to_string())
            .or_default()
            .extend(state_changes.iter().copied());
        self.entries.insert(
            lemma.to_lowercase(),
            LexEntry {
                action: action.to_string(),
                state_changes,
            },
        );
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &LexEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn entry(&self, lemma: &str) -> Option<&LexEntry> {
        self.entries.get(lemma)
    }

    /// State changes of an action label (union over lemmas mapping to it).
    pub fn action_state_changes(&self, action: &str) -> Option<&BTreeSet<StateChange>> {
        self.actions.get(action)
    }

    /// Finds the entry for a surface token via its stem candidates. When several
    /// lemmas match, the longest wins, ties going to the lexicographically first.
    pub fn lookup(&self, token: &str) -> Option<(&str, &LexEntry)> {
        let mut best: Option<(&str, &LexEntry)> = None;
        for cand in stem_candidates(token) {
            if let Some((lemma, entry)) = self.entries.get_key_value(cand.as_str()) {
                let better = match best {
                    None => true,
                    Some((b, _)) => lemma.len() > b.len() || (lemma.len() == b.len() && lemma.as_str() < b),
                };
                if better {
                    best = Some((lemma.as_str(), entry));
                }
            }
        }
        best
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut lex = EventLexicon::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let trimmed = line.trim_end_matches(['\r', '\n']);
            if trimmed.trim().is_empty() || trimmed.trim_start().starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split('\t').collect();
            if fields.len() < 2 || fields.len() > 3 {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: line_no,
                    message: format!("expected 2 or 3 tab-separated fields, got {}", fields.len()),
                });
            }
            let lemma = fields[0].trim();
            let action = fields[1].trim();
            if lemma.is_empty() || action.is_empty() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: line_no,
                    message: "empty lemma or action".into(),
                });
            }
            let mut cats = BTreeSet::new();
            if let Some(list) = fields.get(2) {
                for name in list.split(',').filter(|s| !s.trim().is_empty()) {
                    let c = name
                        .parse::<StateChange>()
                        .map_err(|name| Error::UnknownCategory { name, line: line_no })?;
                    cats.insert(c);
                }
            }
            lex.insert(lemma, action, cats);
        }
        Ok(lex)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (lemma, e) in &self.entries {
            let cats: Vec<&str> = e.state_changes.iter().map(|c| c.name()).collect();
            out.push_str(&format!("{lemma}\t{}\t{}\n", e.action, cats.join(",")));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tsv())?;
        Ok(())
    }
}

pub fn load_lexicon(path: &Path) -> Result<EventLexicon> {
    let text = std::fs::read_to_string(path)?;
    EventLexicon::parse(&text, path)
}

fn is_vowel(c: u8) -> bool {
    matches!(c, b'a' | b'e' | b'i' | b'o' | b'u')
}

/// Suffix-stripping lemma candidates: the token itself, then for each of
/// `s`, `es`, `ed`, `ing` the stripped base, the base plus `e`, and the base
/// with a doubled final consonant undoubled (`stirring` → `stir`).
pub fn stem_candidates(token: &str) -> Vec<String> {
    let token = token.to_lowercase();
    let mut out = vec![token.clone()];
    for suffix in ["s", "es", "ed", "ing"] {
        let Some(base) = token.strip_suffix(suffix) else { continue };
        if base.len() < 2 {
            continue;
        }
        out.push(base.to_string());
        out.push(format!("{base}e"));
        let b = base.as_bytes();
        let n = b.len();
        if n >= 3 && b[n - 1] == b[n - 2] && !is_vowel(b[n - 1]) && b[n - 1].is_ascii_alphabetic() {
            out.push(base[..n - 1].to_string());
        }
    }
    out.dedup();
    out
}
