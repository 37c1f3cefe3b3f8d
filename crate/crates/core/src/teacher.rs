//! Sentence-ordering teachers.
//!
//! Each sentence is a bag (sum) of word embeddings; a GRU reads the sentence
//! vectors from a zero state and its final hidden state encodes the document.
//! Training minimizes the cosine similarity between the forward-order and
//! reverse-order encodings, over whole documents (absolute teacher) or over
//! sampled sentence windows (relative teacher).

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adam::{Adam, AdamConfig};
use crate::corpus::{SegmentedDoc, TokenId};
use crate::error::{Error, Result};
use crate::gru::{gru_step, gru_step_plain, GruParams, GruVars};
use crate::tape::{Tape, Var};
use crate::tensor::{GradBuffer, Parameterized, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TeacherKind {
    Absolute,
    Relative,
}

impl std::fmt::Display for TeacherKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TeacherKind::Absolute => "absolute",
            TeacherKind::Relative => "relative",
        })
    }
}

impl std::str::FromStr for TeacherKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "absolute" | "ao" => Ok(TeacherKind::Absolute),
            "relative" | "ro" => Ok(TeacherKind::Relative),
            _ => Err(Error::invalid(format!("unknown teacher kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Teacher {
    pub kind: TeacherKind,
    pub embedding: Tensor,
    pub gru: GruParams,
    pub dropout: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct TeacherVars {
    pub embedding: Var,
    pub gru: GruVars,
}

impl TeacherVars {
    pub fn params(&self) -> Vec<Var> {
        let mut v = vec![self.embedding];
        v.extend(self.gru.vars());
        v
    }
}

impl Parameterized for Teacher {
    fn params(&self) -> Vec<(String, &Tensor)> {
        let mut v = vec![("embedding".to_string(), &self.embedding)];
        v.extend(self.gru.named().into_iter().map(|(n, t)| (format!("gru.{n}"), t)));
        v
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut v = vec![("embedding".to_string(), &mut self.embedding)];
        v.extend(self.gru.named_mut().into_iter().map(|(n, t)| (format!("gru.{n}"), t)));
        v
    }
}

impl Teacher {
    pub fn new<R: Rng + ?Sized>(
        kind: TeacherKind,
        vocab_size: usize,
        embed_dim: usize,
        hidden: usize,
        dropout: f64,
        rng: &mut R,
    ) -> Self {
        Teacher {
            kind,
            embedding: Tensor::uniform(vec![vocab_size, embed_dim], 0.1, rng),
            gru: GruParams::new(embed_dim, hidden, rng),
            dropout,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.rows()
    }

    pub fn embed_dim(&self) -> usize {
        self.embedding.cols()
    }

    pub fn hidden(&self) -> usize {
        self.gru.hidden_size()
    }

    pub fn bind<'p>(&'p self, tape: &mut Tape<'p>) -> TeacherVars {
        TeacherVars {
            embedding: tape.param(&self.embedding),
            gru: self.gru.bind(tape),
        }
    }

    /// Inference-mode bag of words for one sentence.
    pub fn sentence_vector(&self, sentence: &[TokenId]) -> Result<Vec<f64>> {
        if sentence.is_empty() {
            return Err(Error::EmptySentence);
        }
        let mut out = vec![0.0; self.embed_dim()];
        for &id in sentence {
            if id as usize >= self.vocab_size() {
                return Err(Error::shape("sentence_vector", self.embedding.shape(), &[id as usize]));
            }
            for (o, x) in out.iter_mut().zip(self.embedding.row(id as usize)) {
                *o += x;
            }
        }
        Ok(out)
    }

    /// Inference-mode GRU fold over sentence vectors from a zero state.
    pub fn encode_vectors<V: AsRef<[f64]>>(&self, sentences: &[V]) -> Vec<f64> {
        let mut h = vec![0.0; self.hidden()];
        for s in sentences {
            h = gru_step_plain(s.as_ref(), &h, &self.gru);
        }
        h
    }

    /// f(S) for a document in the given order.
    pub fn encode_doc(&self, doc: &SegmentedDoc) -> Result<Vec<f64>> {
        let vecs = doc
            .sentences
            .iter()
            .map(|s| self.sentence_vector(s))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.encode_vectors(&vecs))
    }

    /// Inference-mode ordering loss: cosine(f(forward), f(reverse)).
    pub fn loss_value(&self, doc: &SegmentedDoc) -> Result<f64> {
        let vecs = doc
            .sentences
            .iter()
            .map(|s| self.sentence_vector(s))
            .collect::<Result<Vec<_>>>()?;
        let fwd = self.encode_vectors(&vecs);
        let rev: Vec<&Vec<f64>> = vecs.iter().rev().collect();
        let rev = self.encode_vectors(&rev);
        Ok(cosine(&fwd, &rev))
    }
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
}

/// s_j = Σ_i x_ij, followed by dropout in training mode.
pub fn encode_sentence_bow<R: Rng + ?Sized>(
    tape: &mut Tape<'_>,
    vars: &TeacherVars,
    sentence: &[TokenId],
    dropout: f64,
    training: bool,
    rng: &mut R,
) -> Result<Var> {
    if sentence.is_empty() {
        return Err(Error::EmptySentence);
    }
    let idx: Vec<usize> = sentence.iter().map(|&t| t as usize).collect();
    let bag = tape.rows_sum(vars.embedding, &idx, 1.0)?;
    tape.dropout(bag, dropout, training, rng)
}

/// f(S) = h_n of a GRU folded over `sentences` from a zero state.
pub fn encode_sequence(tape: &mut Tape<'_>, vars: &TeacherVars, sentences: &[Var]) -> Result<Var> {
    if sentences.is_empty() {
        return Err(Error::invalid("cannot encode an empty sentence list"));
    }
    let mut h = tape.zeros(vars.gru.hidden);
    for &s in sentences {
        h = gru_step(tape, s, h, &vars.gru)?;
    }
    Ok(h)
}

/// cosine(f(forward), f(reverse)) over `doc`. Sentence vectors (and their
/// dropout masks) are shared by both directions.
pub fn teacher_loss<R: Rng + ?Sized>(
    tape: &mut Tape<'_>,
    vars: &TeacherVars,
    doc: &SegmentedDoc,
    dropout: f64,
    training: bool,
    rng: &mut R,
) -> Result<Var> {
    if doc.is_empty() {
        return Err(Error::invalid("teacher_loss needs at least one sentence"));
    }
    let sents = doc
        .sentences
        .iter()
        .map(|s| encode_sentence_bow(tape, vars, s, dropout, training, rng))
        .collect::<Result<Vec<_>>>()?;
    let fwd = encode_sequence(tape, vars, &sents)?;
    let rev_order: Vec<Var> = sents.iter().rev().copied().collect();
    let rev = encode_sequence(tape, vars, &rev_order)?;
    tape.cosine(fwd, rev)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsequenceSample {
    pub start: usize,
    pub len: usize,
}

/// `k` windows drawn with replacement: length uniform over the feasible
/// lengths in `[l_min, l_max]`, start uniform over valid positions. Documents
/// shorter than `l_min` yield nothing.
pub fn sample_subsequences<R: Rng + ?Sized>(
    n_sentences: usize,
    l_min: usize,
    l_max: usize,
    k: usize,
    rng: &mut R,
) -> Vec<SubsequenceSample> {
    let hi = l_max.min(n_sentences);
    if n_sentences < l_min || l_min > hi || l_min == 0 {
        return Vec::new();
    }
    (0..k)
        .map(|_| {
            let len = rng.gen_range(l_min..=hi);
            let start = rng.gen_range(0..=n_sentences - len);
            SubsequenceSample { start, len }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherConfig {
    pub kind: TeacherKind,
    pub embed_dim: usize,
    pub hidden: usize,
    pub dropout: f64,
    pub lr: f64,
    pub epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub l_min: usize,
    pub l_max: usize,
    pub samples_per_doc: usize,
    pub seed: u64,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        TeacherConfig {
            kind: TeacherKind::Relative,
            embed_dim: 100,
            hidden: 100,
            dropout: 0.3,
            lr: 1e-3,
            epochs: 20,
            patience: 5,
            batch_size: 32,
            l_min: 3,
            l_max: 6,
            samples_per_doc: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TeacherTraining {
    pub teacher: Teacher,
    pub initial_dev_loss: f64,
    pub best_dev_loss: f64,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
}

/// Training examples for one epoch. Single-sentence slices are excluded since
/// forward and reverse coincide.
fn examples<R: Rng + ?Sized>(docs: &[SegmentedDoc], cfg: &TeacherConfig, rng: &mut R) -> Vec<SegmentedDoc> {
    match cfg.kind {
        TeacherKind::Absolute => docs.iter().filter(|d| d.len() >= 2).cloned().collect(),
        TeacherKind::Relative => docs
            .iter()
            .flat_map(|d| {
                sample_subsequences(d.len(), cfg.l_min, cfg.l_max, cfg.samples_per_doc, rng)
                    .into_iter()
                    .map(|s| d.window(s.start, s.start + s.len))
                    .collect::<Vec<_>>()
            })
            .filter(|w| w.len() >= 2)
            .collect(),
    }
}

fn mean_loss(teacher: &Teacher, examples: &[SegmentedDoc]) -> Result<f64> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for e in examples {
        total += teacher.loss_value(e)?;
    }
    Ok(total / examples.len() as f64)
}

/// Gradient of the summed loss over `batch`; returns (grads, loss sum, used count).
pub fn batch_gradient<R: Rng + ?Sized>(
    teacher: &Teacher,
    batch: &[SegmentedDoc],
    training: bool,
    rng: &mut R,
) -> Result<(GradBuffer, f64, usize)> {
    let mut grads = GradBuffer::zeros_like(teacher);
    let mut total = 0.0;
    let mut used = 0;
    for ex in batch {
        let mut tape = Tape::new();
        let vars = teacher.bind(&mut tape);
        let loss = teacher_loss(&mut tape, &vars, ex, teacher.dropout, training, rng)?;
        // A zero-norm encoding makes the cosine 0 with no gradient; skip it.
        if tape.scalar(loss) == 0.0 {
            continue;
        }
        total += tape.scalar(loss);
        used += 1;
        grads.add(&tape.backward(loss)?.collect(&vars.params()));
    }
    Ok((grads, total, used))
}

/// Trains a teacher with Adam on the mean ordering loss, evaluating on `dev`
/// after each epoch and returning the best-dev parameters. Stops early after
/// `patience` epochs without improvement.
pub fn train_teacher(
    train: &[SegmentedDoc],
    dev: &[SegmentedDoc],
    vocab_size: usize,
    cfg: &TeacherConfig,
) -> Result<TeacherTraining> {
    if cfg.l_min > cfg.l_max || cfg.l_min == 0 {
        return Err(Error::invalid("teacher window bounds must satisfy 1 ≤ l_min ≤ l_max"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut teacher = Teacher::new(cfg.kind, vocab_size, cfg.embed_dim, cfg.hidden, cfg.dropout, &mut rng);

    let usable = |d: &SegmentedDoc| match cfg.kind {
        TeacherKind::Absolute => d.len() >= 2,
        TeacherKind::Relative => d.len() >= cfg.l_min.max(2),
    };
    if !train.iter().any(usable) {
        return Err(Error::EmptyCorpus);
    }

    let mut dev_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_d0c5);
    let dev_examples = examples(dev, cfg, &mut dev_rng);
    let initial_dev_loss = mean_loss(&teacher, &dev_examples)?;

    let mut opt = Adam::new(&teacher, AdamConfig::with_lr(cfg.lr));
    let mut best = teacher.clone();
    let mut best_dev = initial_dev_loss;
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut log = Vec::new();

    for epoch in 1..=cfg.epochs {
        let mut ex = examples(train, cfg, &mut rng);
        ex.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_count = 0;
        for batch in ex.chunks(cfg.batch_size.max(1)) {
            let (mut grads, loss, used) = batch_gradient(&teacher, batch, true, &mut rng)?;
            if used == 0 {
                continue;
            }
            grads.scale(1.0 / used as f64);
            opt.step(&mut teacher, &grads)?;
            epoch_loss += loss;
            epoch_count += used;
        }
        let dev_loss = mean_loss(&teacher, &dev_examples)?;
        log.push(EpochLog {
            epoch,
            train_loss: epoch_loss / epoch_count.max(1) as f64,
            dev_loss,
        });
        if dev_loss < best_dev {
            best_dev = dev_loss;
            best = teacher.clone();
            best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }

    Ok(TeacherTraining {
        teacher: best,
        initial_dev_loss,
        best_dev_loss: best_dev,
        best_epoch,
        log,
    })
}
