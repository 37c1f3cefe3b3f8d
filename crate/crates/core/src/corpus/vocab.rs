use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{RecipeRecord, TokenId};
use crate::error::{Error, Result};
use crate::tensor::hex;

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";

pub const DEFAULT_DELIMITERS: [&str; 3] = [".", "!", ";"];

/// Token ↔ id bijection with four reserved ids and a sentence-delimiter set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "VocabFile", try_from = "VocabFile")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    delimiters: Vec<TokenId>,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    tokens: Vec<String>,
    delimiters: Vec<String>,
}

impl From<Vocab> for VocabFile {
    fn from(v: Vocab) -> Self {
        VocabFile {
            delimiters: v.delimiters.iter().map(|&d| v.token(d).to_string()).collect(),
            tokens: v.tokens,
        }
    }
}

impl TryFrom<VocabFile> for Vocab {
    type Error = Error;

    fn try_from(f: VocabFile) -> Result<Self> {
        Vocab::from_tokens(f.tokens, &f.delimiters)
    }
}

impl Vocab {
    pub const PAD_ID: TokenId = 0;
    pub const UNK_ID: TokenId = 1;
    pub const BOS_ID: TokenId = 2;
    pub const EOS_ID: TokenId = 3;

    /// Rebuilds a vocab from its id-ordered token list.
    pub fn from_tokens<S: AsRef<str>>(tokens: Vec<String>, delimiters: &[S]) -> Result<Self> {
        if tokens.len() < 4 || tokens[..4] != [PAD, UNK, BOS, EOS] {
            return Err(Error::invalid("vocab must start with the four reserved tokens"));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as TokenId).is_some() {
                return Err(Error::invalid(format!("duplicate vocab token {t:?}")));
            }
        }
        let mut delims = Vec::new();
        for d in delimiters {
            let id = *index
                .get(d.as_ref())
                .ok_or_else(|| Error::invalid(format!("delimiter {:?} not in vocab", d.as_ref())))?;
            delims.push(id);
        }
        if delims.is_empty() {
            return Err(Error::invalid("delimiter set is empty"));
        }
        delims.sort_unstable();
        delims.dedup();
        Ok(Vocab {
            tokens,
            index,
            delimiters: delims,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> TokenId {
        self.index.get(token).copied().unwrap_or(Self::UNK_ID)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: TokenId) -> &str {
        self.tokens.get(id as usize).map_or(UNK, String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn delimiters(&self) -> &[TokenId] {
        &self.delimiters
    }

    pub fn is_delimiter(&self, id: TokenId) -> bool {
        self.delimiters.contains(&id)
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<TokenId> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn decode(&self, ids: &[TokenId]) -> Vec<String> {
        ids.iter().map(|&i| self.token(i).to_string()).collect()
    }

    /// Space-joined tokens with BOS/EOS/PAD removed.
    pub fn detokenize(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .filter(|&&i| !matches!(i, Self::PAD_ID | Self::BOS_ID | Self::EOS_ID))
            .map(|&i| self.token(i))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update([0u8]);
        }
        h.update([1u8]);
        for d in &self.delimiters {
            h.update(d.to_le_bytes());
        }
        hex(&h.finalize())
    }
}

/// Counts tokens over titles, ingredients and bodies; keeps those seen at least
/// `min_count` times. Delimiters are always kept. Ids are assigned in
/// lexicographic order after the reserved ids.
pub fn build_vocab<S: AsRef<str>>(
    corpus: &[RecipeRecord],
    min_count: usize,
    delimiters: &[S],
) -> Result<Vocab> {
    if min_count < 1 {
        return Err(Error::invalid("min_count must be at least 1"));
    }
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in corpus {
        let all = r
            .title_tokens
            .iter()
            .chain(r.ingredients.iter().flatten())
            .chain(&r.body_tokens);
        for t in all {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut tokens: Vec<String> = [PAD, UNK, BOS, EOS].iter().map(|s| s.to_string()).collect();
    let reserved = tokens.clone();
    let mut kept: Vec<&str> = counts
        .iter()
        .filter(|(_, &c)| c >= min_count)
        .map(|(t, _)| *t)
        .collect();
    for d in delimiters {
        kept.push(d.as_ref());
    }
    kept.sort_unstable();
    kept.dedup();
    tokens.extend(
        kept.into_iter()
            .filter(|t| !reserved.iter().any(|r| r == t))
            .map(str::to_string),
    );
    Vocab::from_tokens(tokens, delimiters)
}
