//! Teacher and metric rewards, generation segmentation and credit assignment.

use crate::corpus::{segment_ids, SegmentedDoc, TokenId, Vocab};
use crate::error::{Error, Result};
use crate::evaluation::{bleu, rouge_l};
use crate::teacher::{cosine, Teacher, TeacherKind};

use super::RewardKind;

/// cos(f(S'), f(S→)) − cos(f(S'), f(S←)) under a frozen teacher.
pub fn reward_absolute(teacher: &Teacher, generated: &SegmentedDoc, gold: &SegmentedDoc) -> Result<f64> {
    if generated.is_empty() || gold.is_empty() {
        return Err(Error::invalid("reward_absolute needs nonempty documents"));
    }
    let g = teacher.encode_doc(generated)?;
    let fwd = teacher.encode_doc(gold)?;
    let rev = teacher.encode_doc(&gold.reversed())?;
    Ok(cosine(&g, &fwd) - cosine(&g, &rev))
}

/// Per generated sentence j: the mean over ℓ ∈ [l_min, l_max] of the
/// absolute-reward difference on trailing windows `max(0, j+1−ℓ)..j+1` of
/// both documents. Length-1 windows contribute 0; sentences past the end of
/// the gold document get 0.
pub fn reward_relative(
    teacher: &Teacher,
    generated: &SegmentedDoc,
    gold: &SegmentedDoc,
    l_min: usize,
    l_max: usize,
) -> Result<Vec<f64>> {
    if generated.is_empty() || gold.is_empty() {
        return Err(Error::invalid("reward_relative needs nonempty documents"));
    }
    if l_min == 0 || l_min > l_max {
        return Err(Error::invalid(format!("window bounds [{l_min}, {l_max}] are invalid")));
    }
    let gen_vecs = generated
        .sentences
        .iter()
        .map(|s| teacher.sentence_vector(s))
        .collect::<Result<Vec<_>>>()?;
    let gold_vecs = gold
        .sentences
        .iter()
        .map(|s| teacher.sentence_vector(s))
        .collect::<Result<Vec<_>>>()?;
    let n_terms = (l_max - l_min + 1) as f64;
    let mut out = Vec::with_capacity(generated.len());
    for j in 0..generated.len() {
        if j >= gold.len() {
            out.push(0.0);
            continue;
        }
        let mut total = 0.0;
        for l in l_min..=l_max {
            let start = (j + 1).saturating_sub(l);
            if j + 1 - start < 2 {
                continue;
            }
            let g = teacher.encode_vectors(&gen_vecs[start..=j]);
            let fwd = teacher.encode_vectors(&gold_vecs[start..=j]);
            let rev_order: Vec<&Vec<f64>> = gold_vecs[start..=j].iter().rev().collect();
            let rev = teacher.encode_vectors(&rev_order);
            total += cosine(&g, &fwd) - cosine(&g, &rev);
        }
        out.push(total / n_terms);
    }
    Ok(out)
}

/// A decoded token stream split into sentences.
#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub doc: SegmentedDoc,
    /// Sentence index of every token; non-decreasing, each < `n_sentences`.
    pub token_sentence: Vec<usize>,
    /// At least 1, even when `doc` is empty.
    pub n_sentences: usize,
}

/// Segments decoded tokens. Delimiter-only sentences and the final EOS
/// attach to the preceding sentence (or the following one at the start).
pub fn segment_generation(tokens: &[TokenId], delimiters: &[TokenId]) -> Segmentation {
    let eos = Vocab::EOS_ID;
    let body_len = match tokens.last() {
        Some(&t) if t == eos => tokens.len() - 1,
        _ => tokens.len(),
    };
    let body = &tokens[..body_len];
    let doc = segment_ids(body, delimiters);
    let mut token_sentence = Vec::with_capacity(tokens.len());
    let mut kept = 0usize;
    let mut has_content = false;
    let mut run_start = 0;
    for (i, t) in body.iter().enumerate() {
        if delimiters.contains(t) {
            let idx = if has_content {
                kept += 1;
                kept - 1
            } else {
                kept.saturating_sub(1)
            };
            token_sentence.extend(std::iter::repeat_n(idx, i + 1 - run_start));
            run_start = i + 1;
            has_content = false;
        } else {
            has_content = true;
        }
    }
    if has_content {
        kept += 1;
    }
    let tail = kept.saturating_sub(1);
    token_sentence.extend(std::iter::repeat_n(tail, tokens.len() - run_start));
    debug_assert_eq!(kept, doc.len());
    Segmentation {
        n_sentences: doc.len().max(1),
        doc,
        token_sentence,
    }
}

/// r(y_t): the sequence reward (if any) plus the reward of the token's
/// sentence (if any).
pub fn assign_credit(token_sentence: &[usize], sentence_rewards: Option<&[f64]>, sequence_reward: Option<f64>) -> Vec<f64> {
    token_sentence
        .iter()
        .map(|&j| match (sequence_reward, sentence_rewards) {
            (Some(s), Some(r)) => s + r[j],
            (Some(s), None) => s,
            (None, Some(r)) => r[j],
            (None, None) => 0.0,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardTrace {
    pub token_rewards: Vec<f64>,
    pub token_sentence: Vec<usize>,
    pub sentence_rewards: Option<Vec<f64>>,
    pub sequence_reward: Option<f64>,
    pub n_sentences: usize,
}

impl RewardTrace {
    /// (1/T) Σ_t r(y_t); 0 for an empty trace.
    pub fn mean(&self) -> f64 {
        if self.token_rewards.is_empty() {
            0.0
        } else {
            self.token_rewards.iter().sum::<f64>() / self.token_rewards.len() as f64
        }
    }
}

/// Frozen teachers plus the settings that turn decodes into token rewards.
#[derive(Debug, Clone)]
pub struct RewardModel<'t> {
    pub kind: RewardKind,
    pub absolute: Option<&'t Teacher>,
    pub relative: Option<&'t Teacher>,
    pub delimiters: Vec<TokenId>,
    pub l_min: usize,
    pub l_max: usize,
}

impl<'t> RewardModel<'t> {
    /// Rejects a missing teacher, or one of the wrong kind, for `kind`.
    pub fn new(
        kind: RewardKind,
        absolute: Option<&'t Teacher>,
        relative: Option<&'t Teacher>,
        delimiters: Vec<TokenId>,
        l_min: usize,
        l_max: usize,
    ) -> Result<Self> {
        if l_min == 0 || l_min > l_max {
            return Err(Error::invalid(format!("window bounds [{l_min}, {l_max}] are invalid")));
        }
        let check = |t: Option<&Teacher>, want: TeacherKind| match t {
            Some(t) if t.kind != want => Err(Error::invalid(format!(
                "reward {kind} needs a {want} teacher, got a {} teacher",
                t.kind
            ))),
            None => Err(Error::invalid(format!("reward {kind} needs a {want} teacher"))),
            Some(_) => Ok(()),
        };
        if kind == RewardKind::Ao {
            check(absolute, TeacherKind::Absolute)?;
        }
        if kind.uses_relative() {
            check(relative, TeacherKind::Relative)?;
        }
        if let Some(t) = absolute {
            check(Some(t), TeacherKind::Absolute)?;
        }
        if let Some(t) = relative {
            check(Some(t), TeacherKind::Relative)?;
        }
        Ok(RewardModel {
            kind,
            absolute,
            relative,
            delimiters,
            l_min,
            l_max,
        })
    }

    /// Same teachers and windows under a different reward kind.
    pub fn with_kind(&self, kind: RewardKind) -> Result<Self> {
        RewardModel::new(
            kind,
            self.absolute,
            self.relative,
            self.delimiters.clone(),
            self.l_min,
            self.l_max,
        )
    }

    /// Token rewards of a decode (`tokens`, possibly ending in EOS) against
    /// the gold body.
    pub fn trace(&self, tokens: &[TokenId], gold: &[TokenId]) -> Result<RewardTrace> {
        let seg = segment_generation(tokens, &self.delimiters);
        let gold_doc = segment_ids(gold, &self.delimiters);
        let gen_body = strip_eos(tokens);
        let comparable = !seg.doc.is_empty() && !gold_doc.is_empty();
        let relative = |m: &Self| -> Result<Vec<f64>> {
            if comparable {
                reward_relative(m.relative.expect("checked in new"), &seg.doc, &gold_doc, m.l_min, m.l_max)
            } else {
                Ok(vec![0.0; seg.n_sentences])
            }
        };
        let (sentence_rewards, sequence_reward) = match self.kind {
            RewardKind::Ao => {
                let r = if comparable {
                    reward_absolute(self.absolute.expect("checked in new"), &seg.doc, &gold_doc)?
                } else {
                    0.0
                };
                (None, Some(r))
            }
            RewardKind::Ro => (Some(relative(self)?), None),
            RewardKind::RoB4 => (Some(relative(self)?), Some(bleu(gen_body, gold, 4))),
            RewardKind::Bleu1 => (None, Some(bleu(gen_body, gold, 1))),
            RewardKind::Bleu4 => (None, Some(bleu(gen_body, gold, 4))),
            RewardKind::RougeL => (None, Some(rouge_l(gen_body, gold))),
        };
        let token_rewards = assign_credit(&seg.token_sentence, sentence_rewards.as_deref(), sequence_reward);
        Ok(RewardTrace {
            token_rewards,
            token_sentence: seg.token_sentence,
            sentence_rewards,
            sequence_reward,
            n_sentences: seg.n_sentences,
        })
    }
}

fn strip_eos(tokens: &[TokenId]) -> &[TokenId] {
    match tokens.last() {
        Some(&t) if t == Vocab::EOS_ID => &tokens[..tokens.len() - 1],
        _ => tokens,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const DOT: TokenId = 4;
    const EOS: TokenId = Vocab::EOS_ID;

    fn teacher(kind: TeacherKind, seed: u64) -> Teacher {
        Teacher::new(kind, 20, 6, 5, 0.0, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn segmentation_attaches_delimiters_and_eos() {
        let s = segment_generation(&[5, 6, DOT, 7, DOT, 8, EOS], &[DOT]);
        assert_eq!(s.doc.lengths(), vec![3, 2, 1]);
        assert_eq!(s.token_sentence, vec![0, 0, 0, 1, 1, 2, 2]);
        let s = segment_generation(&[DOT, 5, DOT, DOT, 6, EOS], &[DOT]);
        assert_eq!(s.doc.len(), 2);
        assert_eq!(s.token_sentence, vec![0, 0, 0, 0, 1, 1]);
        let s = segment_generation(&[DOT, DOT, EOS], &[DOT]);
        assert!(s.doc.is_empty());
        assert_eq!(s.n_sentences, 1);
        assert_eq!(s.token_sentence, vec![0, 0, 0]);
        assert_eq!(segment_generation(&[EOS], &[DOT]).token_sentence, vec![0]);
    }

    #[test]
    fn credit_examples() {
        assert_eq!(assign_credit(&[0; 7], None, Some(0.3)), vec![0.3; 7]);
        assert_eq!(
            assign_credit(&[0, 0, 0, 1, 1, 1, 1], Some(&[0.5, -0.2]), None),
            vec![0.5, 0.5, 0.5, -0.2, -0.2, -0.2, -0.2]
        );
    }

    #[test]
    fn single_sentence_gold_gives_zero() {
        let t = teacher(TeacherKind::Absolute, 1);
        let gold = SegmentedDoc::new(vec![vec![5, 6, DOT]]);
        let gen = SegmentedDoc::new(vec![vec![7, DOT], vec![8, 9, DOT]]);
        assert_eq!(reward_absolute(&t, &gen, &gold).unwrap(), 0.0);
    }

    #[test]
    fn gold_copy_is_nonnegative() {
        let t = teacher(TeacherKind::Relative, 2);
        let gold = SegmentedDoc::new(vec![vec![5, DOT], vec![6, 7, DOT], vec![8, DOT], vec![9, 10, DOT]]);
        let a = reward_absolute(&t, &gold, &gold).unwrap();
        assert!(a >= 0.0);
        let r = reward_relative(&t, &gold, &gold, 2, 3).unwrap();
        assert_eq!(r[0], 0.0);
        assert!(r.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn sentences_past_gold_get_zero() {
        let t = teacher(TeacherKind::Relative, 3);
        let gold = SegmentedDoc::new(vec![vec![5, DOT], vec![6, DOT]]);
        let gen = SegmentedDoc::new(vec![vec![7, DOT], vec![8, DOT], vec![9, DOT], vec![5, DOT]]);
        let r = reward_relative(&t, &gen, &gold, 2, 3).unwrap();
        assert_eq!(r.len(), 4);
        assert_eq!(&r[2..], &[0.0, 0.0]);
    }

    #[test]
    fn model_rejects_wrong_teacher() {
        let abs = teacher(TeacherKind::Absolute, 4);
        assert!(RewardModel::new(RewardKind::Ro, None, Some(&abs), vec![DOT], 3, 6).is_err());
        assert!(RewardModel::new(RewardKind::Ao, None, None, vec![DOT], 3, 6).is_err());
        assert!(RewardModel::new(RewardKind::Bleu4, None, None, vec![DOT], 3, 6).is_ok());
        assert!(RewardModel::new(RewardKind::Bleu4, None, None, vec![DOT], 4, 3).is_err());
    }

    #[test]
    fn trace_kinds() {
        let rel = teacher(TeacherKind::Relative, 5);
        let m = RewardModel::new(RewardKind::RoB4, None, Some(&rel), vec![DOT], 2, 3).unwrap();
        let gold = [5, 6, DOT, 7, DOT, 8, DOT];
        let gen = [5, 6, DOT, 8, DOT, EOS];
        let t = m.trace(&gen, &gold).unwrap();
        assert_eq!(t.token_rewards.len(), gen.len());
        let b4 = bleu(&gen[..5], &gold, 4);
        let s = t.sentence_rewards.clone().unwrap();
        for (r, &j) in t.token_rewards.iter().zip(&t.token_sentence) {
            assert_eq!(*r, b4 + s[j]);
        }
        let empty = m.trace(&[EOS], &gold).unwrap();
        assert_eq!(empty.token_rewards, vec![bleu::<TokenId>(&[], &gold, 4)]);
        let m = m.with_kind(RewardKind::RougeL).unwrap();
        let t = m.trace(&gen, &gold).unwrap();
        assert!(t.token_rewards.iter().all(|&r| r == rouge_l(&gen[..5], &gold)));
    }
}
