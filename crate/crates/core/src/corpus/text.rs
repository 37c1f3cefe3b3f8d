//! Tokenization and sentence segmentation.

use serde::{Deserialize, Serialize};

use crate::corpus::TokenId;

/// Lowercases, splits punctuation into standalone tokens, then splits on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_whitespace() {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
        } else if ch.is_alphanumeric() {
            cur.extend(ch.to_lowercase());
        } else {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            out.push(ch.to_string());
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// A document split into sentences; each sentence keeps its closing delimiter.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SegmentedDoc {
    pub sentences: Vec<Vec<TokenId>>,
}

impl SegmentedDoc {
    pub fn new(sentences: Vec<Vec<TokenId>>) -> Self {
        SegmentedDoc { sentences }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn lengths(&self) -> Vec<usize> {
        self.sentences.iter().map(Vec::len).collect()
    }

    pub fn concat(&self) -> Vec<TokenId> {
        self.sentences.concat()
    }

    pub fn reversed(&self) -> SegmentedDoc {
        SegmentedDoc {
            sentences: self.sentences.iter().rev().cloned().collect(),
        }
    }

    /// Sentences `start..end`.
    pub fn window(&self, start: usize, end: usize) -> SegmentedDoc {
        SegmentedDoc {
            sentences: self.sentences[start..end].to_vec(),
        }
    }
}

/// Splits after every delimiter. A trailing run without a delimiter becomes the
/// last sentence; sentences made only of delimiters are dropped.
pub fn split_sentences<T: Clone>(tokens: &[T], is_delim: impl Fn(&T) -> bool) -> Vec<Vec<T>> {
    let mut out = Vec::new();
    let mut cur: Vec<T> = Vec::new();
    let mut has_content = false;
    for tok in tokens {
        let delim = is_delim(tok);
        cur.push(tok.clone());
        if delim {
            if has_content {
                out.push(std::mem::take(&mut cur));
            } else {
                cur.clear();
            }
            has_content = false;
        } else {
            has_content = true;
        }
    }
    if has_content {
        out.push(cur);
    }
    out
}

pub fn segment_ids(tokens: &[TokenId], delimiters: &[TokenId]) -> SegmentedDoc {
    SegmentedDoc::new(split_sentences(tokens, |t| delimiters.contains(t)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("Melt butter."), s(&["melt", "butter", "."]));
        assert!(tokenize("").is_empty());
        assert_eq!(
            tokenize("Add flour, stirring."),
            s(&["add", "flour", ",", "stirring", "."])
        );
        assert_eq!(tokenize("  Bake at 350-degree  "), s(&["bake", "at", "350", "-", "degree"]));
    }

    #[test]
    fn split_examples() {
        let is_d = |t: &&str| *t == ".";
        let toks = ["melt", "butter", ".", "add", "flour", "."];
        assert_eq!(
            split_sentences(&toks, is_d),
            vec![vec!["melt", "butter", "."], vec!["add", "flour", "."]]
        );
        assert_eq!(split_sentences(&["a", "b"], is_d), vec![vec!["a", "b"]]);
        assert!(split_sentences(&[".", "."], is_d).is_empty());
        assert_eq!(
            split_sentences(&["a", ".", ".", "b"], is_d),
            vec![vec!["a", "."], vec!["b"]]
        );
    }
}
