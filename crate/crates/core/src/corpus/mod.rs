//! Recipe records, vocabularies, batching, the event lexicon and a synthetic
//! scripted-procedure corpus.

mod batch;
mod lexicon;
mod synthetic;
mod text;
mod vocab;

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use batch::{make_batches, Batch};
pub use lexicon::{load_lexicon, stem_candidates, EventLexicon, LexEntry, StateChange};
pub use synthetic::{generate_synthetic_corpus, split_train_dev, Grammar, Stage, SyntheticRecipe};
pub use text::{segment_ids, split_sentences, tokenize, SegmentedDoc};
pub use vocab::{build_vocab, Vocab, BOS, DEFAULT_DELIMITERS, EOS, PAD, UNK};

pub type TokenId = u32;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RecipeRecord {
    pub title_tokens: Vec<String>,
    pub ingredients: Vec<Vec<String>>,
    pub body_tokens: Vec<String>,
}

/// One line of the corpus file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawRecipe {
    pub title: String,
    pub ingredients: Vec<String>,
    pub text: String,
}

impl RecipeRecord {
    /// Tokenizes raw fields. Empty ingredient phrases are dropped; an empty body is rejected.
    pub fn from_text<S: AsRef<str>>(title: &str, ingredients: &[S], text: &str) -> Result<Self> {
        let body_tokens = tokenize(text);
        if body_tokens.is_empty() {
            return Err(Error::invalid("recipe body is empty"));
        }
        Ok(RecipeRecord {
            title_tokens: tokenize(title),
            ingredients: ingredients
                .iter()
                .map(|i| tokenize(i.as_ref()))
                .filter(|p| !p.is_empty())
                .collect(),
            body_tokens,
        })
    }

    pub fn from_raw(raw: &RawRecipe) -> Result<Self> {
        Self::from_text(&raw.title, &raw.ingredients, &raw.text)
    }

    pub fn to_raw(&self) -> RawRecipe {
        RawRecipe {
            title: self.title_tokens.join(" "),
            ingredients: self.ingredients.iter().map(|p| p.join(" ")).collect(),
            text: self.body_tokens.join(" "),
        }
    }

    pub fn encode(&self, vocab: &Vocab) -> EncodedRecipe {
        EncodedRecipe {
            title: vocab.encode(&self.title_tokens),
            ingredients: self.ingredients.iter().map(|p| vocab.encode(p)).collect(),
            body: vocab.encode(&self.body_tokens),
        }
    }
}

/// A record mapped through a [`Vocab`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedRecipe {
    pub title: Vec<TokenId>,
    pub ingredients: Vec<Vec<TokenId>>,
    pub body: Vec<TokenId>,
}

impl EncodedRecipe {
    pub fn segmented_body(&self, vocab: &Vocab) -> SegmentedDoc {
        segment_ids(&self.body, vocab.delimiters())
    }
}

/// Reads line-delimited JSON records `{"title", "ingredients", "text"}`.
pub fn read_corpus(path: &Path) -> Result<Vec<RecipeRecord>> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let raw: RawRecipe = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        out.push(RecipeRecord::from_raw(&raw).map_err(|e| parse_err(e.to_string()))?);
    }
    Ok(out)
}

pub fn write_corpus(path: &Path, records: &[RecipeRecord]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, &r.to_raw())?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
