//! The self-critical training loop and dev-set model selection.

use serde::{Deserialize, Serialize};

use crate::adam::{Adam, AdamConfig};
use crate::corpus::{make_batches, EncodedRecipe, TokenId};
use crate::error::{Error, Result};
use crate::generator::{encode_inputs, mle_loss, sample_decode_tape, GeneratorParams, DEFAULT_MAX_LEN};
use crate::seeding::{stream, PURPOSE_ENCODE, PURPOSE_MLE, PURPOSE_SAMPLE};
use crate::tape::Tape;
use crate::teacher::Teacher;
use crate::tensor::GradBuffer;

use super::objective::{check_gamma, mixed_loss, model_selection_score, self_critical_loss};
use super::reward::{assign_credit, RewardModel};
use super::RewardKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub kind: RewardKind,
    pub gamma: f64,
    pub l_min: usize,
    pub l_max: usize,
    pub lr: f64,
    pub max_len: usize,
    /// Sampling temperature.
    pub beta: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Skip sampling and optimize L_mle alone.
    pub mle_only: bool,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            kind: RewardKind::Ro,
            gamma: 0.97,
            l_min: 3,
            l_max: 6,
            lr: 3e-5,
            max_len: DEFAULT_MAX_LEN,
            beta: 2.0,
            epochs: 5,
            batch_size: 32,
            seed: 0,
            mle_only: false,
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchLog {
    pub step: usize,
    pub mean_reward: f64,
    #[serde(rename = "L_rl")]
    pub l_rl: f64,
    #[serde(rename = "L_mle")]
    pub l_mle: f64,
    pub mixed: f64,
}

/// Greedy-decode statistics over the dev set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DevSummary {
    pub epoch: usize,
    /// The kind's selection criterion: mean token reward (AO, RO), r̄
    /// (RO+B4) or the metric itself.
    pub selection: f64,
    /// Mean relative-order token reward, when a relative teacher is present.
    pub relative_reward: Option<f64>,
    pub mle: f64,
    /// Mean generated body length in tokens.
    pub mean_length: f64,
}

#[derive(Debug, Clone)]
pub struct PolicyTraining {
    /// Parameters of the best dev epoch.
    pub params: GeneratorParams,
    pub final_params: GeneratorParams,
    pub initial: DevSummary,
    pub epochs: Vec<DevSummary>,
    pub best_epoch: usize,
    pub batches: Vec<BatchLog>,
}

impl PolicyTraining {
    pub fn best(&self) -> &DevSummary {
        &self.epochs[self.best_epoch - 1]
    }
}

/// Greedy-decodes `dev` and scores it under `rewards`.
pub fn evaluate_dev(params: &GeneratorParams, rewards: &RewardModel<'_>, dev: &[EncodedRecipe], max_len: usize) -> Result<DevSummary> {
    if dev.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let relative = match rewards.relative {
        Some(_) => Some(rewards.with_kind(RewardKind::Ro)?),
        None => None,
    };
    let mut selection = Vec::with_capacity(dev.len());
    let mut rbar = Vec::new();
    let mut rel_total = 0.0;
    let mut len_total = 0.0;
    for r in dev {
        let ctx = params.encode(r)?;
        let d = params.greedy_decode(&ctx, max_len);
        len_total += d.body().len() as f64;
        let trace = rewards.trace(&d.tokens, &r.body)?;
        match rewards.kind {
            RewardKind::Ao | RewardKind::Ro => selection.push(trace.mean()),
            RewardKind::RoB4 => {
                let ro = assign_credit(&trace.token_sentence, trace.sentence_rewards.as_deref(), None);
                rbar.push((trace.sequence_reward.unwrap_or(0.0), ro));
            }
            _ => selection.push(trace.sequence_reward.unwrap_or(0.0)),
        }
        if let Some(m) = &relative {
            rel_total += if rewards.kind == RewardKind::Ro {
                trace.mean()
            } else {
                m.trace(&d.tokens, &r.body)?.mean()
            };
        }
    }
    let n = dev.len() as f64;
    let selection = if rewards.kind == RewardKind::RoB4 {
        model_selection_score(&rbar)?
    } else {
        selection.iter().sum::<f64>() / n
    };
    Ok(DevSummary {
        epoch: 0,
        selection,
        relative_reward: relative.map(|_| rel_total / n),
        mle: params.mean_mle_loss(dev)?,
        mean_length: len_total / n,
    })
}

struct RecordStats {
    reward: f64,
    l_rl: f64,
    l_mle: f64,
    mixed: f64,
}

fn record_gradient(
    params: &GeneratorParams,
    rewards: &RewardModel<'_>,
    recipe: &EncodedRecipe,
    cfg: &PolicyConfig,
    path: &[u64],
) -> Result<(GradBuffer, RecordStats)> {
    let rng_for = |purpose| stream(cfg.seed, &[path, &[purpose]].concat());
    let mut tape = Tape::new();
    let v = params.bind(&mut tape);
    let ctx = encode_inputs(&mut tape, &v, params, recipe, true, &mut rng_for(PURPOSE_ENCODE))?;
    let l_mle = mle_loss(
        &mut tape,
        &v,
        params,
        &ctx,
        &recipe.body,
        0.0,
        cfg.beta,
        true,
        &mut rng_for(PURPOSE_MLE),
    )?;
    let (root, reward, l_rl) = if cfg.mle_only {
        (l_mle, 0.0, 0.0)
    } else {
        let mut srng = rng_for(PURPOSE_SAMPLE);
        let (sampled, lps) = sample_decode_tape(&mut tape, &v, params, &ctx, cfg.beta, cfg.max_len, true, &mut srng)?;
        let greedy = params.greedy_decode(&params.encode(recipe)?, cfg.max_len);
        let st = rewards.trace(&sampled.tokens, &recipe.body)?;
        let gt = rewards.trace(&greedy.tokens, &recipe.body)?;
        let l_rl = self_critical_loss(&mut tape, &lps, &st.token_rewards, &gt.token_rewards)?;
        (mixed_loss(&mut tape, l_rl, l_mle, cfg.gamma)?, st.mean(), tape.scalar(l_rl))
    };
    let grads = tape.backward(root)?.collect(&v.params());
    Ok((
        grads,
        RecordStats {
            reward,
            l_rl,
            l_mle: tape.scalar(l_mle),
            mixed: tape.scalar(root),
        },
    ))
}

/// Fine-tunes `pretrained` on γ·L_rl + (1−γ)·L_mle with a fresh Adam. After
/// each epoch the dev set is greedy-decoded; the epoch with the best
/// selection score (lowest dev L_mle when `mle_only`) is returned.
/// `on_batch` sees every batch log as it is produced.
#[allow(clippy::too_many_arguments)]
pub fn train_policy(
    pretrained: &GeneratorParams,
    absolute: Option<&Teacher>,
    relative: Option<&Teacher>,
    delimiters: &[TokenId],
    train: &[EncodedRecipe],
    dev: &[EncodedRecipe],
    cfg: &PolicyConfig,
    mut on_batch: impl FnMut(&BatchLog),
) -> Result<PolicyTraining> {
    check_gamma(cfg.gamma)?;
    if train.is_empty() || dev.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    for t in absolute.iter().chain(relative.iter()) {
        if t.vocab_size() != pretrained.dims.vocab {
            return Err(Error::Checkpoint(format!(
                "teacher vocabulary has {} entries but the generator has {}",
                t.vocab_size(),
                pretrained.dims.vocab
            )));
        }
    }
    let rewards = RewardModel::new(cfg.kind, absolute, relative, delimiters.to_vec(), cfg.l_min, cfg.l_max)?;
    let mut params = pretrained.clone();
    let mut opt = Adam::new(&params, AdamConfig::with_lr(cfg.lr));
    let initial = evaluate_dev(&params, &rewards, dev, cfg.max_len)?;
    let mut best: Option<(f64, usize, GeneratorParams)> = None;
    let mut epochs = Vec::new();
    let mut batches_log = Vec::new();
    let mut step = 0;

    for epoch in 0..cfg.epochs {
        let batches = make_batches(train, cfg.batch_size.max(1), cfg.seed.wrapping_add(epoch as u64));
        for (bi, batch) in batches.iter().enumerate() {
            let mut grads = GradBuffer::zeros_like(&params);
            let mut sums = [0.0; 4];
            for &ri in &batch.indices {
                let path = [2, epoch as u64, bi as u64, ri as u64];
                let (g, s) = record_gradient(&params, &rewards, &train[ri], cfg, &path)?;
                grads.add(&g);
                for (acc, x) in sums.iter_mut().zip([s.reward, s.l_rl, s.l_mle, s.mixed]) {
                    *acc += x;
                }
            }
            let n = batch.indices.len() as f64;
            grads.scale(1.0 / n);
            opt.step(&mut params, &grads)?;
            step += 1;
            let log = BatchLog {
                step,
                mean_reward: sums[0] / n,
                l_rl: sums[1] / n,
                l_mle: sums[2] / n,
                mixed: sums[3] / n,
            };
            on_batch(&log);
            batches_log.push(log);
        }
        let mut summary = evaluate_dev(&params, &rewards, dev, cfg.max_len)?;
        summary.epoch = epoch + 1;
        let score = if cfg.mle_only { -summary.mle } else { summary.selection };
        if best.as_ref().is_none_or(|(b, _, _)| score > *b) {
            best = Some((score, epoch + 1, params.clone()));
        }
        epochs.push(summary);
    }
    let (best_params, best_epoch) = match best {
        Some((_, e, p)) => (p, e),
        None => return Err(Error::invalid("policy training needs at least one epoch")),
    };
    Ok(PolicyTraining {
        params: best_params,
        final_params: params,
        initial,
        epochs,
        best_epoch,
        batches: batches_log,
    })
}
