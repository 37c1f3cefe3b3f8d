//! Measurements shared by the per-topic tests and the acceptance harness.
//! Each returns (case name, worst error) pairs.

use rand::Rng;

use discourse::corpus::{SegmentedDoc, TokenId, Vocab};
use discourse::evaluation::{bleu, lcs_len, rouge_l};
use discourse::generator::{
    decode_step, encode_inputs, initial_hidden, mle_loss, sample_decode_tape, BagMode, GeneratorParams,
};
use discourse::policy::{
    assign_credit, mixed_loss, model_selection_score, reward_absolute, reward_relative, segment_generation,
    self_critical_loss,
};
use discourse::seeding::stream;
use discourse::tape::{Tape, Var};
use discourse::teacher::{sample_subsequences, teacher_loss, Teacher, TeacherKind};
use discourse::tensor::GradBuffer;

use super::*;

const V: usize = 12;
const DELIM: TokenId = 4;

fn teacher_objective(t: &Teacher, docs: &[SegmentedDoc], seed: u64) -> (f64, GradBuffer) {
    let mut tape = Tape::new();
    let v = t.bind(&mut tape);
    let mut r = stream(seed, &[]);
    let losses: Vec<Var> = docs
        .iter()
        .map(|d| teacher_loss(&mut tape, &v, d, t.dropout, true, &mut r).unwrap())
        .collect();
    let w = vec![1.0 / docs.len() as f64; docs.len()];
    let root = tape.weighted_sum(&losses, &w).unwrap();
    let g = tape.backward(root).unwrap().collect(&v.params());
    (tape.scalar(root), g)
}

/// Builds a scalar objective over one recipe; dropout and sampling draw from
/// a stream re-created on every call so perturbed evaluations share masks.
fn generator_objective(
    p: &GeneratorParams,
    seed: u64,
    build: &dyn Fn(&mut Tape<'_>, &discourse::generator::GeneratorVars, &GeneratorParams, &mut rand_chacha::ChaCha8Rng) -> Var,
) -> (f64, GradBuffer) {
    let mut tape = Tape::new();
    let v = p.bind(&mut tape);
    let mut r = stream(seed, &[]);
    let root = build(&mut tape, &v, p, &mut r);
    let g = tape.backward(root).unwrap().collect(&v.params());
    (tape.scalar(root), g)
}

fn check_generator(
    name: &'static str,
    p: &GeneratorParams,
    build: &dyn Fn(&mut Tape<'_>, &discourse::generator::GeneratorVars, &GeneratorParams, &mut rand_chacha::ChaCha8Rng) -> Var,
) -> (&'static str, f64) {
    let (_, g) = generator_objective(p, 11, build);
    let err = fd_rel_error(p, &g, |m| generator_objective(m, 11, build).0);
    (name, err)
}

/// Central-difference relative error for every differentiable objective.
pub fn gradient_cases() -> Vec<(&'static str, f64)> {
    let mut out = Vec::new();
    let mut r = rng(1);

    let t = tiny_teacher(TeacherKind::Absolute, V, 2);
    let docs: Vec<SegmentedDoc> = (0..2).map(|_| random_doc(&mut r, V, 4)).collect();
    let (_, g) = teacher_objective(&t, &docs, 3);
    out.push(("teacher absolute-order loss", fd_rel_error(&t, &g, |m| teacher_objective(m, &docs, 3).0)));

    let t = tiny_teacher(TeacherKind::Relative, V, 4);
    let doc = random_doc(&mut r, V, 6);
    let windows: Vec<SegmentedDoc> = sample_subsequences(doc.len(), 3, 4, 3, &mut r)
        .into_iter()
        .map(|s| doc.window(s.start, s.start + s.len))
        .collect();
    let (_, g) = teacher_objective(&t, &windows, 5);
    out.push(("teacher relative-order loss", fd_rel_error(&t, &g, |m| teacher_objective(m, &windows, 5).0)));

    for (bag, label) in [(BagMode::Mean, "mean"), (BagMode::Sum, "sum")] {
        let p = tiny_generator(V, bag, 6);
        let recipe = random_recipe(&mut r, V, DELIM, 7);
        let coef: Vec<f64> = (0..V + p.dims.dec_hidden).map(|_| r.gen_range(-1.0..1.0)).collect();
        let name = if label == "mean" { "decoder step (mean bags)" } else { "decoder step (sum bags)" };
        out.push(check_generator(name, &p, &|tape, v, p, rr| {
            let ctx = encode_inputs(tape, v, p, &recipe, true, rr).unwrap();
            let h0 = initial_hidden(tape, v, &ctx).unwrap();
            let x = tape.row(v.text_emb, 5).unwrap();
            let (logits, h1) = decode_step(tape, v, x, h0, &ctx).unwrap();
            let both = tape.concat(&[logits, h1]).unwrap();
            let c = tape.constant(coef.clone());
            tape.dot(both, c).unwrap()
        }));
    }

    let p = tiny_generator(V, BagMode::Mean, 7);
    let mut recipe = random_recipe(&mut r, V, DELIM, 9);
    recipe.ingredients.clear();
    out.push(check_generator("likelihood loss, no ingredients", &p, &|tape, v, p, rr| {
        let ctx = encode_inputs(tape, v, p, &recipe, true, rr).unwrap();
        mle_loss(tape, v, p, &ctx, &recipe.body, 0.0, 2.0, true, rr).unwrap()
    }));
    let recipe = random_recipe(&mut r, V, DELIM, 9);
    out.push(check_generator("likelihood loss, scheduled sampling", &p, &|tape, v, p, rr| {
        let ctx = encode_inputs(tape, v, p, &recipe, true, rr).unwrap();
        mle_loss(tape, v, p, &ctx, &recipe.body, 0.5, 2.0, true, rr).unwrap()
    }));

    let sampled: Vec<f64> = (0..12).map(|_| r.gen_range(-1.0..1.0)).collect();
    let greedy: Vec<f64> = (0..5).map(|_| r.gen_range(-1.0..1.0)).collect();
    let rl = |tape: &mut Tape<'_>, v: &discourse::generator::GeneratorVars, p: &GeneratorParams, rr: &mut rand_chacha::ChaCha8Rng| {
        let ctx = encode_inputs(tape, v, p, &recipe, true, rr).unwrap();
        let (d, lps) = sample_decode_tape(tape, v, p, &ctx, 2.0, 12, true, rr).unwrap();
        let n = d.tokens.len();
        (self_critical_loss(tape, &lps, &sampled[..n], &greedy).unwrap(), ctx)
    };
    out.push(check_generator("self-critical loss", &p, &|tape, v, p, rr| rl(tape, v, p, rr).0));
    out.push(check_generator("mixed loss", &p, &|tape, v, p, rr| {
        let (l_rl, ctx) = rl(tape, v, p, rr);
        let l_mle = mle_loss(tape, v, p, &ctx, &recipe.body, 0.0, 2.0, true, rr).unwrap();
        mixed_loss(tape, l_rl, l_mle, 0.97).unwrap()
    }));
    out
}

fn random_gold_pair(r: &mut rand_chacha::ChaCha8Rng) -> (SegmentedDoc, SegmentedDoc) {
    let ng = r.gen_range(1..=6);
    let nd = r.gen_range(1..=6);
    (random_doc(r, V, ng), random_doc(r, V, nd))
}

/// Largest |library − reference| over `n` random fixtures per formula.
pub fn reward_oracle_cases(n: usize) -> Vec<(&'static str, f64)> {
    let mut r = rng(20);
    let mut abs_err: f64 = 0.0;
    let mut rel_err: f64 = 0.0;
    let mut credit_err: f64 = 0.0;
    let mut seg_err: f64 = 0.0;
    let mut rbar_err: f64 = 0.0;
    for i in 0..n {
        let ta = tiny_teacher(TeacherKind::Absolute, V, 100 + i as u64);
        let tr = tiny_teacher(TeacherKind::Relative, V, 500 + i as u64);
        let (gen, gold) = random_gold_pair(&mut r);
        let a = reward_absolute(&ta, &gen, &gold).unwrap();
        abs_err = abs_err.max((a - ref_reward_absolute(&ta, &gen, &gold)).abs());

        let l_min = r.gen_range(1..=4);
        let l_max = r.gen_range(l_min..=5);
        let lib = reward_relative(&tr, &gen, &gold, l_min, l_max).unwrap();
        let want = ref_reward_relative(&tr, &gen, &gold, l_min, l_max);
        rel_err = rel_err.max(lib.iter().zip(&want).map(|(x, y)| (x - y).abs()).fold(
            if lib.len() == want.len() { 0.0 } else { f64::INFINITY },
            f64::max,
        ));

        // Random decode with delimiters, runs of delimiters and optional EOS.
        let len = r.gen_range(0..=20);
        let mut tokens: Vec<TokenId> = (0..len)
            .map(|_| if r.gen_bool(0.3) { DELIM } else { r.gen_range(5..V as TokenId) })
            .collect();
        if r.gen_bool(0.5) {
            tokens.push(Vocab::EOS_ID);
        }
        let seg = segment_generation(&tokens, &[DELIM]);
        let (want_ts, want_n) = ref_token_sentences(&tokens, &[DELIM]);
        if seg.token_sentence != want_ts || seg.n_sentences != want_n {
            seg_err = f64::INFINITY;
        }

        let sent: Vec<f64> = (0..seg.n_sentences).map(|_| r.gen_range(-2.0..2.0)).collect();
        let seq = r.gen_range(0.0..1.0);
        for (s_opt, q_opt) in [(Some(&sent[..]), None), (None, Some(seq)), (Some(&sent[..]), Some(seq))] {
            let got = assign_credit(&seg.token_sentence, s_opt, q_opt);
            for (t, g) in got.iter().enumerate() {
                let mut w = 0.0;
                if let Some(q) = q_opt {
                    w += q;
                }
                if let Some(s) = s_opt {
                    w += s[want_ts[t]];
                }
                credit_err = credit_err.max((g - w).abs());
            }
        }

        // r̄ over a small dev set of decoded/gold token pairs.
        let examples: Vec<(f64, Vec<f64>)> = (0..3)
            .map(|_| {
                let c = random_tokens(&mut r, 6, 10);
                let g = random_tokens(&mut r, 6, 10);
                let ro: Vec<f64> = (0..c.len()).map(|_| r.gen_range(-2.0..2.0)).collect();
                (bleu(&c, &g, 4), ro)
            })
            .collect();
        let lib = model_selection_score(&examples).unwrap();
        let mut total = 0.0;
        for (b4, ro) in &examples {
            let t = ro.len();
            let mut s = 0.0;
            for x in ro {
                s += x;
            }
            total += if t == 0 { 0.0 } else { b4 * s / t as f64 };
        }
        rbar_err = rbar_err.max((lib - total / examples.len() as f64).abs());
    }
    vec![
        ("absolute-order reward", abs_err),
        ("relative-order reward", rel_err),
        ("sentence segmentation", seg_err),
        ("credit assignment", credit_err),
        ("selection score", rbar_err),
    ]
}

/// Largest |library − brute force| for BLEU-1, BLEU-4, ROUGE-L and the LCS,
/// plus the largest |score − 1| on identical pairs.
pub fn metric_oracle_cases(n: usize) -> Vec<(&'static str, f64)> {
    let mut r = rng(30);
    let mut e = [0.0f64; 5];
    for _ in 0..n {
        let alphabet = r.gen_range(2..6);
        let a = random_tokens(&mut r, alphabet, 14);
        let b = random_tokens(&mut r, alphabet, 14);
        e[0] = e[0].max((bleu(&a, &b, 1) - ref_bleu(&a, &b, 1)).abs());
        e[1] = e[1].max((bleu(&a, &b, 4) - ref_bleu(&a, &b, 4)).abs());
        e[2] = e[2].max((rouge_l(&a, &b) - ref_rouge_l(&a, &b)).abs());
        e[3] = e[3].max((lcs_len(&a, &b) as f64 - ref_lcs_brute(&a, &b) as f64).abs());
        if !a.is_empty() {
            for s in [bleu(&a, &a, 1), bleu(&a, &a, 4), rouge_l(&a, &a)] {
                e[4] = e[4].max((s - 1.0).abs());
            }
        }
    }
    vec![
        ("BLEU-1", e[0]),
        ("BLEU-4", e[1]),
        ("ROUGE-L", e[2]),
        ("LCS length", e[3]),
        ("identical pairs score 1", e[4]),
    ]
}

/// Bounds, partition identities, single-sentence cancellation, bag
/// permutation invariance and frozen teachers, over `n` random fixtures.
pub fn invariant_cases(n: usize) -> Vec<(&'static str, bool)> {
    use discourse::policy::{train_policy, PolicyConfig, RewardKind};
    use discourse::tensor::Parameterized;

    let mut r = rng(40);
    let mut bounds = true;
    let mut partition = true;
    let mut single = true;
    let mut bag = true;
    for i in 0..n {
        let t = tiny_teacher(TeacherKind::Relative, V, 900 + i as u64);
        let (gen, gold) = random_gold_pair(&mut r);
        let a = reward_absolute(&t, &gen, &gold).unwrap();
        let rel = reward_relative(&t, &gen, &gold, 2, 4).unwrap();
        bounds &= (-2.0..=2.0).contains(&a) && rel.iter().all(|x| (-2.0..=2.0).contains(x));

        let one = SegmentedDoc::new(vec![gold.sentences[0].clone()]);
        single &= reward_absolute(&t, &gen, &one).unwrap() == 0.0;

        let len = r.gen_range(0..=20);
        let tokens: Vec<TokenId> = (0..len)
            .map(|_| if r.gen_bool(0.3) { DELIM } else { r.gen_range(5..V as TokenId) })
            .collect();
        let seg = segment_generation(&tokens, &[DELIM]);
        let sent: Vec<f64> = (0..seg.n_sentences).map(|_| r.gen_range(-2.0..2.0)).collect();
        let credit = assign_credit(&seg.token_sentence, Some(&sent), None);
        let mut lengths = vec![0usize; seg.n_sentences];
        for (t, &j) in seg.token_sentence.iter().enumerate() {
            partition &= credit[t].to_bits() == sent[j].to_bits();
            lengths[j] += 1;
        }
        partition &= lengths.iter().sum::<usize>() == tokens.len();
        let q = r.gen_range(-2.0..2.0);
        partition &= assign_credit(&seg.token_sentence, None, Some(q)).iter().all(|x| x.to_bits() == q.to_bits());

        let s = random_sentence(&mut r, V, 6);
        let mut p = s.clone();
        p.reverse();
        let (x, y) = (t.sentence_vector(&s).unwrap(), t.sentence_vector(&p).unwrap());
        bag &= x.iter().zip(&y).all(|(a, b)| (a - b).abs() <= 1e-12);
    }

    let rel = tiny_teacher(TeacherKind::Relative, V, 1);
    let abs = tiny_teacher(TeacherKind::Absolute, V, 2);
    let before = (rel.checksum(), abs.checksum());
    let g = tiny_generator(V, BagMode::Mean, 3);
    let train: Vec<_> = (0..4).map(|_| random_recipe(&mut r, V, DELIM, 8)).collect();
    let dev: Vec<_> = (0..2).map(|_| random_recipe(&mut r, V, DELIM, 8)).collect();
    let mut frozen = true;
    for kind in [RewardKind::Ao, RewardKind::Ro, RewardKind::RoB4] {
        let cfg = PolicyConfig {
            kind,
            epochs: 1,
            batch_size: 2,
            max_len: 10,
            lr: 1e-2,
            ..PolicyConfig::default()
        };
        let run = train_policy(&g, Some(&abs), Some(&rel), &[DELIM], &train, &dev, &cfg, |_| {}).unwrap();
        frozen &= run.final_params.checksum() != g.checksum();
    }
    frozen &= (rel.checksum(), abs.checksum()) == before;

    vec![
        ("rewards within [-2, 2]", bounds),
        ("credit partitions exactly", partition),
        ("single-sentence gold gives 0", single),
        ("bag of words ignores order", bag),
        ("teachers frozen during policy training", frozen),
    ]
}
