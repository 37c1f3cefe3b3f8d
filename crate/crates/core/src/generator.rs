//! Title/ingredient-conditioned recipe generator.
//!
//! Encoder: the title is a bag of embeddings `g`; each ingredient phrase is a
//! bag `e_i` and a bidirectional GRU over the phrases yields `e`. The context
//! is `h^e = [g, e]`.
//!
//! Decoder, per step:
//!
//! ```text
//! a_t = σ(W_1 h_{t-1} + W_2 x_t + b_1)
//! z_t = a_t ⊙ h^e
//! h_t = GRU([x_t, z_t], h_{t-1})
//! logits_t = W_o h_t + b_o
//! ```
//!
//! Every function exists in a taped form (for training) and a plain form
//! (for inference); both perform the same arithmetic.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adam::{Adam, AdamConfig};
use crate::corpus::{make_batches, EncodedRecipe, TokenId, Vocab};
use crate::error::{Error, Result};
use crate::gru::{gru_step, gru_step_plain, matvec_plain, GruParams, GruVars};
use crate::seeding::{stream, PURPOSE_ENCODE, PURPOSE_MLE};
use crate::tape::{log_softmax_pick, softmax, Tape, Var};
use crate::tensor::{GradBuffer, Parameterized, Tensor};

pub const DEFAULT_MAX_LEN: usize = 150;

const BOS: TokenId = Vocab::BOS_ID;
const EOS: TokenId = Vocab::EOS_ID;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BagMode {
    Sum,
    Mean,
}

impl std::str::FromStr for BagMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(BagMode::Sum),
            "mean" => Ok(BagMode::Mean),
            _ => Err(Error::invalid(format!("bag mode must be sum or mean, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorDims {
    pub vocab: usize,
    pub embed: usize,
    /// Per direction.
    pub enc_hidden: usize,
    pub dec_hidden: usize,
}

impl GeneratorDims {
    /// |h^e| = |g| + 2 · enc_hidden.
    pub fn context(&self) -> usize {
        self.embed + 2 * self.enc_hidden
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams {
    pub dims: GeneratorDims,
    pub bag: BagMode,
    pub dropout: f64,
    pub title_emb: Tensor,
    pub ingredient_emb: Tensor,
    pub text_emb: Tensor,
    pub enc_fwd: GruParams,
    pub enc_bwd: GruParams,
    pub empty_marker: Tensor,
    pub w1: Tensor,
    pub w2: Tensor,
    pub b1: Tensor,
    pub init_w: Tensor,
    pub init_b: Tensor,
    pub dec: GruParams,
    pub out_w: Tensor,
    pub out_b: Tensor,
}

/// [`GeneratorParams`] bound to a tape.
#[derive(Debug, Clone, Copy)]
pub struct GeneratorVars {
    pub title_emb: Var,
    pub ingredient_emb: Var,
    pub text_emb: Var,
    pub enc_fwd: GruVars,
    pub enc_bwd: GruVars,
    pub empty_marker: Var,
    pub w1: Var,
    pub w2: Var,
    pub b1: Var,
    pub init_w: Var,
    pub init_b: Var,
    pub dec: GruVars,
    pub out_w: Var,
    pub out_b: Var,
}

impl GeneratorVars {
    /// Same order as [`Parameterized::params`].
    pub fn params(&self) -> Vec<Var> {
        let mut v = vec![self.title_emb, self.ingredient_emb, self.text_emb];
        v.extend(self.enc_fwd.vars());
        v.extend(self.enc_bwd.vars());
        v.extend([self.empty_marker, self.w1, self.w2, self.b1, self.init_w, self.init_b]);
        v.extend(self.dec.vars());
        v.extend([self.out_w, self.out_b]);
        v
    }
}

impl Parameterized for GeneratorParams {
    fn params(&self) -> Vec<(String, &Tensor)> {
        let mut v: Vec<(String, &Tensor)> = vec![
            ("title_emb".into(), &self.title_emb),
            ("ingredient_emb".into(), &self.ingredient_emb),
            ("text_emb".into(), &self.text_emb),
        ];
        v.extend(self.enc_fwd.named().into_iter().map(|(n, t)| (format!("enc_fwd.{n}"), t)));
        v.extend(self.enc_bwd.named().into_iter().map(|(n, t)| (format!("enc_bwd.{n}"), t)));
        v.extend([
            ("empty_marker".into(), &self.empty_marker),
            ("w1".into(), &self.w1),
            ("w2".into(), &self.w2),
            ("b1".into(), &self.b1),
            ("init_w".into(), &self.init_w),
            ("init_b".into(), &self.init_b),
        ]);
        v.extend(self.dec.named().into_iter().map(|(n, t)| (format!("dec.{n}"), t)));
        v.extend([("out_w".into(), &self.out_w), ("out_b".into(), &self.out_b)]);
        v
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut v: Vec<(String, &mut Tensor)> = vec![
            ("title_emb".into(), &mut self.title_emb),
            ("ingredient_emb".into(), &mut self.ingredient_emb),
            ("text_emb".into(), &mut self.text_emb),
        ];
        v.extend(self.enc_fwd.named_mut().into_iter().map(|(n, t)| (format!("enc_fwd.{n}"), t)));
        v.extend(self.enc_bwd.named_mut().into_iter().map(|(n, t)| (format!("enc_bwd.{n}"), t)));
        v.extend([
            ("empty_marker".into(), &mut self.empty_marker),
            ("w1".into(), &mut self.w1),
            ("w2".into(), &mut self.w2),
            ("b1".into(), &mut self.b1),
            ("init_w".into(), &mut self.init_w),
            ("init_b".into(), &mut self.init_b),
        ]);
        v.extend(self.dec.named_mut().into_iter().map(|(n, t)| (format!("dec.{n}"), t)));
        v.extend([("out_w".into(), &mut self.out_w), ("out_b".into(), &mut self.out_b)]);
        v
    }
}

/// Plain encoder output.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedContext {
    pub he: Vec<f64>,
    pub g: Vec<f64>,
    pub e: Vec<f64>,
}

/// Taped encoder output.
#[derive(Debug, Clone, Copy)]
pub struct ContextVars {
    pub he: Var,
    pub g: Var,
    pub e: Var,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Eos,
    MaxLength,
}

/// Tokens include the terminating EOS when `termination == Eos`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    pub tokens: Vec<TokenId>,
    pub log_probs: Vec<f64>,
    pub termination: Termination,
}

impl DecodeResult {
    /// Tokens without the trailing EOS.
    pub fn body(&self) -> &[TokenId] {
        match self.tokens.last() {
            Some(&t) if t == EOS => &self.tokens[..self.tokens.len() - 1],
            _ => &self.tokens,
        }
    }
}

fn add3(a: &[f64], b: &[f64], c: &[f64]) -> Vec<f64> {
    a.iter().zip(b).zip(c).map(|((x, y), z)| (x + y) + z).collect()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Inverse-CDF draw from `probs`.
pub fn draw<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding can leave `acc` just under 1; take the last positive entry.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Scheduled-sampling rate: min(0.05 · ⌊epoch / 5⌋, 0.5).
pub fn schedule_rate(epoch: usize) -> f64 {
    (0.05 * (epoch / 5) as f64).min(0.5)
}

impl GeneratorParams {
    pub fn new<R: Rng + ?Sized>(dims: GeneratorDims, bag: BagMode, dropout: f64, rng: &mut R) -> Self {
        let GeneratorDims {
            vocab: v,
            embed: e,
            enc_hidden: he,
            dec_hidden: hd,
        } = dims;
        let c = dims.context();
        GeneratorParams {
            dims,
            bag,
            dropout,
            title_emb: Tensor::uniform(vec![v, e], 0.1, rng),
            ingredient_emb: Tensor::uniform(vec![v, e], 0.1, rng),
            text_emb: Tensor::uniform(vec![v, e], 0.1, rng),
            enc_fwd: GruParams::new(e, he, rng),
            enc_bwd: GruParams::new(e, he, rng),
            empty_marker: Tensor::uniform(vec![e], 0.1, rng),
            w1: Tensor::xavier(c, hd, rng),
            w2: Tensor::xavier(c, e, rng),
            b1: Tensor::zeros(vec![c]),
            init_w: Tensor::xavier(hd, c, rng),
            init_b: Tensor::zeros(vec![hd]),
            dec: GruParams::new(e + c, hd, rng),
            out_w: Tensor::xavier(v, hd, rng),
            out_b: Tensor::zeros(vec![v]),
        }
    }

    pub fn bind<'p>(&'p self, tape: &mut Tape<'p>) -> GeneratorVars {
        GeneratorVars {
            title_emb: tape.param(&self.title_emb),
            ingredient_emb: tape.param(&self.ingredient_emb),
            text_emb: tape.param(&self.text_emb),
            enc_fwd: self.enc_fwd.bind(tape),
            enc_bwd: self.enc_bwd.bind(tape),
            empty_marker: tape.param(&self.empty_marker),
            w1: tape.param(&self.w1),
            w2: tape.param(&self.w2),
            b1: tape.param(&self.b1),
            init_w: tape.param(&self.init_w),
            init_b: tape.param(&self.init_b),
            dec: self.dec.bind(tape),
            out_w: tape.param(&self.out_w),
            out_b: tape.param(&self.out_b),
        }
    }

    fn check_ids(&self, ids: &[TokenId]) -> Result<()> {
        match ids.iter().find(|&&i| i as usize >= self.dims.vocab) {
            Some(&bad) => Err(Error::shape("token id", &[self.dims.vocab], &[bad as usize])),
            None => Ok(()),
        }
    }

    fn bag_scale(&self, n: usize) -> f64 {
        match self.bag {
            BagMode::Sum => 1.0,
            BagMode::Mean => 1.0 / n as f64,
        }
    }

    fn bag_plain(&self, table: &Tensor, ids: &[TokenId]) -> Vec<f64> {
        let mut out = vec![0.0; table.cols()];
        if ids.is_empty() {
            return out;
        }
        for &i in ids {
            for (o, x) in out.iter_mut().zip(table.row(i as usize)) {
                *o += x;
            }
        }
        let s = self.bag_scale(ids.len());
        if s != 1.0 {
            for o in &mut out {
                *o *= s;
            }
        }
        out
    }

    /// Inference-mode encoder.
    pub fn encode(&self, recipe: &EncodedRecipe) -> Result<EncodedContext> {
        self.check_ids(&recipe.title)?;
        let g = self.bag_plain(&self.title_emb, &recipe.title);
        let mut phrases = Vec::new();
        for p in recipe.ingredients.iter().filter(|p| !p.is_empty()) {
            self.check_ids(p)?;
            phrases.push(self.bag_plain(&self.ingredient_emb, p));
        }
        if phrases.is_empty() {
            phrases.push(self.empty_marker.values().to_vec());
        }
        let mut hf = vec![0.0; self.dims.enc_hidden];
        for x in &phrases {
            hf = gru_step_plain(x, &hf, &self.enc_fwd);
        }
        let mut hb = vec![0.0; self.dims.enc_hidden];
        for x in phrases.iter().rev() {
            hb = gru_step_plain(x, &hb, &self.enc_bwd);
        }
        let e = [hf, hb].concat();
        Ok(EncodedContext {
            he: [g.as_slice(), e.as_slice()].concat(),
            g,
            e,
        })
    }

    /// h^d_0 = W_init h^e + b_init.
    pub fn initial_hidden(&self, ctx: &EncodedContext) -> Vec<f64> {
        matvec_plain(&self.init_w, &ctx.he)
            .iter()
            .zip(self.init_b.values())
            .map(|(a, b)| a + b)
            .collect()
    }

    /// One inference decoder step from input embedding `x`: (logits, hidden).
    pub fn step_embedded(&self, x: &[f64], h_prev: &[f64], ctx: &EncodedContext) -> (Vec<f64>, Vec<f64>) {
        let pre = add3(&matvec_plain(&self.w1, h_prev), &matvec_plain(&self.w2, x), self.b1.values());
        let z: Vec<f64> = pre.iter().zip(&ctx.he).map(|(p, h)| sigmoid(*p) * h).collect();
        let xt = [x, z.as_slice()].concat();
        let h = gru_step_plain(&xt, h_prev, &self.dec);
        let logits = matvec_plain(&self.out_w, &h)
            .iter()
            .zip(self.out_b.values())
            .map(|(a, b)| a + b)
            .collect();
        (logits, h)
    }

    /// One inference decoder step from input token `token`.
    pub fn step(&self, token: TokenId, h_prev: &[f64], ctx: &EncodedContext) -> (Vec<f64>, Vec<f64>) {
        self.step_embedded(self.text_emb.row(token as usize), h_prev, ctx)
    }

    /// Argmax decoding; log-probs recorded at β = 1.
    pub fn greedy_decode(&self, ctx: &EncodedContext, max_len: usize) -> DecodeResult {
        self.decode_with(ctx, max_len, 1.0, |logits, _| argmax(logits))
    }

    /// Samples from softmax(β · logits) each step; log-probs are tempered.
    pub fn sample_decode<R: Rng + ?Sized>(
        &self,
        ctx: &EncodedContext,
        beta: f64,
        max_len: usize,
        rng: &mut R,
    ) -> Result<DecodeResult> {
        if beta <= 0.0 || !beta.is_finite() {
            return Err(Error::invalid(format!("temperature must be positive, got {beta}")));
        }
        Ok(self.decode_with(ctx, max_len, beta, |_, probs| draw(probs, rng)))
    }

    fn decode_with(
        &self,
        ctx: &EncodedContext,
        max_len: usize,
        beta: f64,
        mut choose: impl FnMut(&[f64], &[f64]) -> usize,
    ) -> DecodeResult {
        let mut h = self.initial_hidden(ctx);
        let mut input = BOS;
        let mut tokens = Vec::new();
        let mut log_probs = Vec::new();
        for _ in 0..max_len {
            let (logits, nh) = self.step(input, &h, ctx);
            h = nh;
            let probs = softmax(&logits, beta);
            let y = choose(&logits, &probs);
            log_probs.push(log_softmax_pick(&logits, y, beta).0);
            tokens.push(y as TokenId);
            if y as TokenId == EOS {
                return DecodeResult {
                    tokens,
                    log_probs,
                    termination: Termination::Eos,
                };
            }
            input = y as TokenId;
        }
        DecodeResult {
            tokens,
            log_probs,
            termination: Termination::MaxLength,
        }
    }

    /// Teacher-forced −Σ log P(y_t) at β = 1 over `body` + EOS, no dropout.
    pub fn mle_loss_value(&self, recipe: &EncodedRecipe) -> Result<f64> {
        self.check_ids(&recipe.body)?;
        let ctx = self.encode(recipe)?;
        let mut h = self.initial_hidden(&ctx);
        let mut input = BOS;
        let mut loss = 0.0;
        for &y in recipe.body.iter().chain(std::iter::once(&EOS)) {
            let (logits, nh) = self.step(input, &h, &ctx);
            h = nh;
            loss -= log_softmax_pick(&logits, y as usize, 1.0).0;
            input = y;
        }
        Ok(loss)
    }

    pub fn mean_mle_loss(&self, corpus: &[EncodedRecipe]) -> Result<f64> {
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut total = 0.0;
        for r in corpus {
            total += self.mle_loss_value(r)?;
        }
        Ok(total / corpus.len() as f64)
    }
}

fn bag_tape<R: Rng + ?Sized>(
    tape: &mut Tape<'_>,
    p: &GeneratorParams,
    table: Var,
    ids: &[TokenId],
    training: bool,
    rng: &mut R,
) -> Result<Var> {
    if ids.is_empty() {
        return Ok(tape.zeros(p.dims.embed));
    }
    let idx: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
    let bag = tape.rows_sum(table, &idx, p.bag_scale(ids.len()))?;
    tape.dropout(bag, p.dropout, training, rng)
}

/// Taped encoder; dropout on the bag vectors in training mode.
pub fn encode_inputs<R: Rng + ?Sized>(
    tape: &mut Tape<'_>,
    v: &GeneratorVars,
    p: &GeneratorParams,
    recipe: &EncodedRecipe,
    training: bool,
    rng: &mut R,
) -> Result<ContextVars> {
    let g = bag_tape(tape, p, v.title_emb, &recipe.title, training, rng)?;
    let mut phrases = Vec::new();
    for ph in recipe.ingredients.iter().filter(|ph| !ph.is_empty()) {
        phrases.push(bag_tape(tape, p, v.ingredient_emb, ph, training, rng)?);
    }
    if phrases.is_empty() {
        phrases.push(v.empty_marker);
    }
    let mut hf = tape.zeros(p.dims.enc_hidden);
    for &x in &phrases {
        hf = gru_step(tape, x, hf, &v.enc_fwd)?;
    }
    let mut hb = tape.zeros(p.dims.enc_hidden);
    for &x in phrases.iter().rev() {
        hb = gru_step(tape, x, hb, &v.enc_bwd)?;
    }
    let e = tape.concat(&[hf, hb])?;
    let he = tape.concat(&[g, e])?;
    Ok(ContextVars { he, g, e })
}

/// Taped h^d_0 = W_init h^e + b_init.
pub fn initial_hidden(tape: &mut Tape<'_>, v: &GeneratorVars, ctx: &ContextVars) -> Result<Var> {
    let m = tape.matvec(v.init_w, ctx.he)?;
    tape.add(m, v.init_b)
}

/// Taped decoder step: returns (logits, hidden).
pub fn decode_step(
    tape: &mut Tape<'_>,
    v: &GeneratorVars,
    x: Var,
    h_prev: Var,
    ctx: &ContextVars,
) -> Result<(Var, Var)> {
    let a = tape.matvec(v.w1, h_prev)?;
    let b = tape.matvec(v.w2, x)?;
    let s = tape.add(a, b)?;
    let pre = tape.add(s, v.b1)?;
    let gate = tape.sigmoid(pre);
    let z = tape.mul(gate, ctx.he)?;
    let xt = tape.concat(&[x, z])?;
    let h = gru_step(tape, xt, h_prev, &v.dec)?;
    let o = tape.matvec(v.out_w, h)?;
    let logits = tape.add(o, v.out_b)?;
    Ok((logits, h))
}

/// Embedding row of `token`, with dropout in training mode.
pub fn embed_input<R: Rng + ?Sized>(
    tape: &mut Tape<'_>,
    v: &GeneratorVars,
    p: &GeneratorParams,
    token: TokenId,
    training: bool,
    rng: &mut R,
) -> Result<Var> {
    let x = tape.row(v.text_emb, token as usize)?;
    tape.dropout(x, p.dropout, training, rng)
}

/// L_mle = −Σ_t log P(y_t | y_<t, h^e) over `body` + EOS at β = 1.
///
/// With probability `rate` each input after BOS is replaced by a token drawn
/// from softmax(`sample_beta` · logits) of the previous step.
#[allow(clippy::too_many_arguments)]
pub fn mle_loss<R: Rng + ?Sized>(
    tape: &mut Tape<'_>,
    v: &GeneratorVars,
    p: &GeneratorParams,
    ctx: &ContextVars,
    body: &[TokenId],
    rate: f64,
    sample_beta: f64,
    training: bool,
    rng: &mut R,
) -> Result<Var> {
    p.check_ids(body)?;
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::invalid(format!("schedule rate {rate} outside [0, 1]")));
    }
    let mut h = initial_hidden(tape, v, ctx)?;
    let mut input = BOS;
    let mut terms = Vec::with_capacity(body.len() + 1);
    for &y in body.iter().chain(std::iter::once(&EOS)) {
        let x = embed_input(tape, v, p, input, training, rng)?;
        let (logits, nh) = decode_step(tape, v, x, h, ctx)?;
        h = nh;
        terms.push(tape.log_softmax_at(logits, y as usize, 1.0)?);
        input = if rate > 0.0 && rng.gen::<f64>() < rate {
            draw(&softmax(tape.value(logits), sample_beta), rng) as TokenId
        } else {
            y
        };
    }
    let w = vec![-1.0; terms.len()];
    tape.weighted_sum(&terms, &w)
}

/// Taped sampling from softmax(β · logits). Returns the decode and the
/// per-step tempered log-prob nodes.
#[allow(clippy::too_many_arguments)]
pub fn sample_decode_tape<R: Rng + ?Sized>(
    tape: &mut Tape<'_>,
    v: &GeneratorVars,
    p: &GeneratorParams,
    ctx: &ContextVars,
    beta: f64,
    max_len: usize,
    training: bool,
    rng: &mut R,
) -> Result<(DecodeResult, Vec<Var>)> {
    if beta <= 0.0 || !beta.is_finite() {
        return Err(Error::invalid(format!("temperature must be positive, got {beta}")));
    }
    let mut h = initial_hidden(tape, v, ctx)?;
    let mut input = BOS;
    let mut tokens = Vec::new();
    let mut log_probs = Vec::new();
    let mut lp_vars = Vec::new();
    let mut termination = Termination::MaxLength;
    for _ in 0..max_len {
        let x = embed_input(tape, v, p, input, training, rng)?;
        let (logits, nh) = decode_step(tape, v, x, h, ctx)?;
        h = nh;
        let y = draw(&softmax(tape.value(logits), beta), rng);
        let lp = tape.log_softmax_at(logits, y, beta)?;
        log_probs.push(tape.scalar(lp));
        lp_vars.push(lp);
        tokens.push(y as TokenId);
        if y as TokenId == EOS {
            termination = Termination::Eos;
            break;
        }
        input = y as TokenId;
    }
    Ok((
        DecodeResult {
            tokens,
            log_probs,
            termination,
        },
        lp_vars,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub embed: usize,
    pub enc_hidden: usize,
    pub dec_hidden: usize,
    pub dropout: f64,
    pub bag: BagMode,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    /// Temperature for scheduled-sampling draws.
    pub beta: f64,
    pub scheduled_sampling: bool,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            embed: 256,
            enc_hidden: 256,
            dec_hidden: 256,
            dropout: 0.3,
            bag: BagMode::Mean,
            lr: 3e-4,
            epochs: 30,
            batch_size: 32,
            patience: 5,
            beta: 2.0,
            scheduled_sampling: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainEpoch {
    pub epoch: usize,
    pub schedule_rate: f64,
    pub train_loss: f64,
    pub dev_loss: f64,
}

#[derive(Debug, Clone)]
pub struct Pretraining {
    pub params: GeneratorParams,
    pub initial_dev_loss: f64,
    pub best_dev_loss: f64,
    pub best_epoch: usize,
    pub log: Vec<PretrainEpoch>,
}

/// Gradient and value of L_mle for one record. Dropout and scheduled-sampling
/// draws come from streams keyed by `seed` and `path`.
pub fn mle_record_gradient(
    p: &GeneratorParams,
    recipe: &EncodedRecipe,
    rate: f64,
    sample_beta: f64,
    seed: u64,
    path: &[u64],
) -> Result<(GradBuffer, f64)> {
    let mut tape = Tape::new();
    let v = p.bind(&mut tape);
    let mut enc_rng = stream(seed, &[path, &[PURPOSE_ENCODE]].concat());
    let ctx = encode_inputs(&mut tape, &v, p, recipe, true, &mut enc_rng)?;
    let mut rng = stream(seed, &[path, &[PURPOSE_MLE]].concat());
    let loss = mle_loss(&mut tape, &v, p, &ctx, &recipe.body, rate, sample_beta, true, &mut rng)?;
    let g = tape.backward(loss)?.collect(&v.params());
    Ok((g, tape.scalar(loss)))
}

/// Adam on the mean per-record L_mle with scheduled sampling; returns the
/// best-dev parameters. Stops after `patience` non-improving epochs.
pub fn pretrain(
    train: &[EncodedRecipe],
    dev: &[EncodedRecipe],
    vocab_size: usize,
    cfg: &PretrainConfig,
) -> Result<Pretraining> {
    if train.is_empty() || dev.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let dims = GeneratorDims {
        vocab: vocab_size,
        embed: cfg.embed,
        enc_hidden: cfg.enc_hidden,
        dec_hidden: cfg.dec_hidden,
    };
    let mut init_rng = stream(cfg.seed, &[0]);
    let mut params = GeneratorParams::new(dims, cfg.bag, cfg.dropout, &mut init_rng);
    let mut opt = Adam::new(&params, AdamConfig::with_lr(cfg.lr));
    let initial_dev_loss = params.mean_mle_loss(dev)?;
    let mut best = params.clone();
    let mut best_dev = initial_dev_loss;
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut log = Vec::new();

    for epoch in 0..cfg.epochs {
        let rate = if cfg.scheduled_sampling { schedule_rate(epoch) } else { 0.0 };
        let batches = make_batches(train, cfg.batch_size.max(1), cfg.seed.wrapping_add(epoch as u64));
        let mut total = 0.0;
        for (bi, batch) in batches.iter().enumerate() {
            let mut grads = GradBuffer::zeros_like(&params);
            for &ri in &batch.indices {
                let path = [1, epoch as u64, bi as u64, ri as u64];
                let (g, l) = mle_record_gradient(&params, &train[ri], rate, cfg.beta, cfg.seed, &path)?;
                grads.add(&g);
                total += l;
            }
            grads.scale(1.0 / batch.indices.len() as f64);
            opt.step(&mut params, &grads)?;
        }
        let dev_loss = params.mean_mle_loss(dev)?;
        log.push(PretrainEpoch {
            epoch,
            schedule_rate: rate,
            train_loss: total / train.len() as f64,
            dev_loss,
        });
        if dev_loss < best_dev {
            best_dev = dev_loss;
            best = params.clone();
            best_epoch = epoch + 1;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    Ok(Pretraining {
        params: best,
        initial_dev_loss,
        best_dev_loss: best_dev,
        best_epoch,
        log,
    })
}
