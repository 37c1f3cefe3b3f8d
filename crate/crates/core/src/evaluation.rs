//! Example-level BLEU and ROUGE-L over words, lexicon actions and
//! state-change categories.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::corpus::{EventLexicon, StateChange};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    None,
    /// Adds one to numerator and denominator of every precision with k ≥ 2.
    #[default]
    AddOne,
}

fn ngram_counts<T: Eq + Hash>(seq: &[T], k: usize) -> HashMap<&[T], usize> {
    let mut m = HashMap::new();
    if seq.len() >= k {
        for w in seq.windows(k) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// (clipped matches, candidate k-gram count).
pub fn modified_precision<T: Eq + Hash>(candidate: &[T], reference: &[T], k: usize) -> (usize, usize) {
    let cand = ngram_counts(candidate, k);
    let refc = ngram_counts(reference, k);
    let matches = cand
        .iter()
        .map(|(g, &c)| c.min(refc.get(g).copied().unwrap_or(0)))
        .sum();
    (matches, candidate.len().saturating_sub(k - 1))
}

/// BLEU-n with add-one smoothing for k ≥ 2.
pub fn bleu<T: Eq + Hash>(candidate: &[T], reference: &[T], n: usize) -> f64 {
    bleu_with(candidate, reference, n, Smoothing::AddOne)
}

/// Geometric mean of modified k-gram precisions (k = 1..=n) times the
/// brevity penalty. An empty candidate scores 0.
pub fn bleu_with<T: Eq + Hash>(candidate: &[T], reference: &[T], n: usize, smoothing: Smoothing) -> f64 {
    if candidate.is_empty() || n == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for k in 1..=n {
        let (m, c) = modified_precision(candidate, reference, k);
        let (m, c) = match smoothing {
            Smoothing::AddOne if k >= 2 => (m + 1, c + 1),
            _ => (m, c),
        };
        if m == 0 {
            return 0.0;
        }
        log_sum += (m as f64 / c as f64).ln();
    }
    let (c, r) = (candidate.len() as f64, reference.len() as f64);
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    bp * (log_sum / n as f64).exp()
}

/// Longest common subsequence length.
pub fn lcs_len<T: Eq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F1.
pub fn rouge_l<T: Eq>(candidate: &[T], reference: &[T]) -> f64 {
    rouge_l_beta(candidate, reference, 1.0)
}

/// LCS F-measure: (1 + β²)·P·R / (R + β²·P). Zero when the LCS is empty.
pub fn rouge_l_beta<T: Eq>(candidate: &[T], reference: &[T], beta: f64) -> f64 {
    let l = lcs_len(candidate, reference);
    if l == 0 {
        return 0.0;
    }
    let p = l as f64 / candidate.len() as f64;
    let r = l as f64 / reference.len() as f64;
    let b2 = beta * beta;
    (1.0 + b2) * p * r / (r + b2 * p)
}

/// Actions of lexicon-matching tokens, in token order.
pub fn extract_actions<S: AsRef<str>>(tokens: &[S], lexicon: &EventLexicon) -> Vec<String> {
    tokens
        .iter()
        .filter_map(|t| lexicon.lookup(&t.as_ref().to_lowercase()))
        .map(|(_, e)| e.action.clone())
        .collect()
}

/// Each action expanded to its sorted category list, concatenated.
pub fn extract_state_changes<S: AsRef<str>>(actions: &[S], lexicon: &EventLexicon) -> Result<Vec<StateChange>> {
    let mut out = Vec::new();
    for a in actions {
        let set = lexicon
            .action_state_changes(a.as_ref())
            .ok_or_else(|| Error::UnknownAction(a.as_ref().to_string()))?;
        out.extend(set.iter().copied());
    }
    Ok(out)
}

/// Ordered actions with their category sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventSequence {
    pub actions: Vec<String>,
    pub state_changes: Vec<BTreeSet<StateChange>>,
}

impl EventSequence {
    pub fn extract<S: AsRef<str>>(tokens: &[S], lexicon: &EventLexicon) -> Result<Self> {
        let actions = extract_actions(tokens, lexicon);
        let state_changes = actions
            .iter()
            .map(|a| {
                lexicon
                    .action_state_changes(a)
                    .cloned()
                    .ok_or_else(|| Error::UnknownAction(a.clone()))
            })
            .collect::<Result<_>>()?;
        Ok(EventSequence { actions, state_changes })
    }

    pub fn flattened_states(&self) -> Vec<StateChange> {
        self.state_changes.iter().flatten().copied().collect()
    }
}

/// The nine corpus means, each in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreReport {
    pub bleu1: f64,
    pub bleu4: f64,
    pub rouge_l: f64,
    pub action_bleu1: f64,
    pub action_bleu4: f64,
    pub action_rouge_l: f64,
    pub state_bleu1: f64,
    pub state_bleu4: f64,
    pub state_rouge_l: f64,
}

pub const REPORT_COLUMNS: [&str; 9] = [
    "BLEU-1", "BLEU-4", "R-L", "AB1", "AB4", "AR-L", "SCB1", "SCB4", "SCR-L",
];

impl ScoreReport {
    pub fn values(&self) -> [f64; 9] {
        [
            self.bleu1,
            self.bleu4,
            self.rouge_l,
            self.action_bleu1,
            self.action_bleu4,
            self.action_rouge_l,
            self.state_bleu1,
            self.state_bleu4,
            self.state_rouge_l,
        ]
    }

    /// Column name → score × 100.
    pub fn to_map(&self) -> BTreeMap<String, f64> {
        REPORT_COLUMNS
            .iter()
            .zip(self.values())
            .map(|(k, v)| (k.to_string(), v * 100.0))
            .collect()
    }

    /// Header row and one row of scores × 100 with two decimals.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        for c in REPORT_COLUMNS {
            let _ = write!(s, "{c:>8}");
        }
        s.push('\n');
        for v in self.values() {
            let _ = write!(s, "{:>8.2}", v * 100.0);
        }
        s.push('\n');
        s
    }
}

/// Per-example scores averaged over aligned generation/gold token lists.
pub fn evaluate_corpus<S: AsRef<str>>(
    generations: &[Vec<S>],
    golds: &[Vec<S>],
    lexicon: &EventLexicon,
) -> Result<ScoreReport> {
    if generations.len() != golds.len() {
        return Err(Error::LengthMismatch {
            left: generations.len(),
            right: golds.len(),
        });
    }
    if generations.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut sum = [0.0; 9];
    for (g, r) in generations.iter().zip(golds) {
        let gw: Vec<&str> = g.iter().map(|t| t.as_ref()).collect();
        let rw: Vec<&str> = r.iter().map(|t| t.as_ref()).collect();
        let ga = EventSequence::extract(&gw, lexicon)?;
        let ra = EventSequence::extract(&rw, lexicon)?;
        let (gs, rs) = (ga.flattened_states(), ra.flattened_states());
        let row = [
            bleu(&gw, &rw, 1),
            bleu(&gw, &rw, 4),
            rouge_l(&gw, &rw),
            bleu(&ga.actions, &ra.actions, 1),
            bleu(&ga.actions, &ra.actions, 4),
            rouge_l(&ga.actions, &ra.actions),
            bleu(&gs, &rs, 1),
            bleu(&gs, &rs, 4),
            rouge_l(&gs, &rs),
        ];
        for (s, v) in sum.iter_mut().zip(row) {
            *s += v;
        }
    }
    let n = generations.len() as f64;
    let m = sum.map(|s| s / n);
    Ok(ScoreReport {
        bleu1: m[0],
        bleu4: m[1],
        rouge_l: m[2],
        action_bleu1: m[3],
        action_bleu4: m[4],
        action_rouge_l: m[5],
        state_bleu1: m[6],
        state_bleu4: m[7],
        state_rouge_l: m[8],
    })
}
