//! Fixtures, finite differences and independent reference implementations
//! shared by the integration tests and the acceptance harness.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use discourse::corpus::{EncodedRecipe, SegmentedDoc, TokenId, Vocab};
use discourse::generator::{BagMode, GeneratorDims, GeneratorParams};
use discourse::gru::GruParams;
use discourse::seeding::stream;
use discourse::teacher::{Teacher, TeacherKind};
use discourse::tensor::{GradBuffer, Parameterized, Tensor};

pub mod suites;

pub const FD_STEP: f64 = 1e-6;
pub const FD_TOL: f64 = 1e-5;
pub const ORACLE_TOL: f64 = 1e-12;

pub fn rng(seed: u64) -> ChaCha8Rng {
    stream(seed, &[0xf17e])
}

/// Adds U(±scale) to every parameter so biases and gates are off their
/// initial symmetric values.
pub fn jitter<M: Parameterized>(model: &mut M, scale: f64, rng: &mut ChaCha8Rng) {
    for (_, t) in model.params_mut() {
        for v in t.values_mut() {
            *v += rng.gen_range(-scale..scale);
        }
    }
}

pub fn random_sentence(rng: &mut ChaCha8Rng, vocab: usize, max_len: usize) -> Vec<TokenId> {
    let n = rng.gen_range(1..=max_len);
    (0..n).map(|_| rng.gen_range(4..vocab as TokenId)).collect()
}

pub fn random_doc(rng: &mut ChaCha8Rng, vocab: usize, n_sentences: usize) -> SegmentedDoc {
    SegmentedDoc::new((0..n_sentences).map(|_| random_sentence(rng, vocab, 4)).collect())
}

pub fn tiny_teacher(kind: TeacherKind, vocab: usize, seed: u64) -> Teacher {
    let mut r = rng(seed);
    let mut t = Teacher::new(kind, vocab, 5, 4, 0.3, &mut r);
    jitter(&mut t, 0.2, &mut r);
    t
}

pub fn tiny_generator(vocab: usize, bag: BagMode, seed: u64) -> GeneratorParams {
    let mut r = rng(seed);
    let dims = GeneratorDims {
        vocab,
        embed: 4,
        enc_hidden: 3,
        dec_hidden: 5,
    };
    let mut p = GeneratorParams::new(dims, bag, 0.3, &mut r);
    jitter(&mut p, 0.2, &mut r);
    p
}

/// A recipe whose tokens avoid the reserved ids; the body ends in a delimiter
/// id `delim` every few tokens.
pub fn random_recipe(rng: &mut ChaCha8Rng, vocab: usize, delim: TokenId, body_len: usize) -> EncodedRecipe {
    let word = |r: &mut ChaCha8Rng| loop {
        let t = r.gen_range(4..vocab as TokenId);
        if t != delim {
            return t;
        }
    };
    let title = (0..rng.gen_range(1..=3)).map(|_| word(rng)).collect();
    let ingredients = (0..rng.gen_range(0..=3))
        .map(|_| (0..rng.gen_range(1..=3)).map(|_| word(rng)).collect())
        .collect();
    let body = (0..body_len)
        .map(|i| if i % 4 == 3 { delim } else { word(rng) })
        .collect();
    EncodedRecipe { title, ingredients, body }
}

/// Worst per-tensor relative error ‖a − n‖ / (‖a‖ + ‖n‖) between `analytic`
/// and central differences of `loss`. Tensors whose gradients are both
/// below 1e-10 in norm report the absolute difference.
pub fn fd_rel_error<M: Parameterized + Clone>(model: &M, analytic: &GradBuffer, loss: impl Fn(&M) -> f64) -> f64 {
    let mut m = model.clone();
    let n_tensors = model.params().len();
    let mut worst: f64 = 0.0;
    for ti in 0..n_tensors {
        let len = model.params()[ti].1.len();
        let mut numeric = vec![0.0; len];
        for (j, slot) in numeric.iter_mut().enumerate() {
            let orig = model.params()[ti].1.values()[j];
            m.params_mut()[ti].1.values_mut()[j] = orig + FD_STEP;
            let up = loss(&m);
            m.params_mut()[ti].1.values_mut()[j] = orig - FD_STEP;
            let down = loss(&m);
            m.params_mut()[ti].1.values_mut()[j] = orig;
            *slot = (up - down) / (2.0 * FD_STEP);
        }
        let a = &analytic.grads[ti];
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff: Vec<f64> = a.iter().zip(&numeric).map(|(x, y)| x - y).collect();
        let scale = norm(a) + norm(&numeric);
        let err = if scale < 1e-10 { norm(&diff) } else { norm(&diff) / scale };
        worst = worst.max(err);
    }
    worst
}

// ---- reference forward passes, written from the defining equations ----

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn affine(w: &Tensor, x: &[f64]) -> Vec<f64> {
    let (rows, cols) = (w.shape()[0], w.shape()[1]);
    (0..rows)
        .map(|i| (0..cols).map(|j| w.values()[i * cols + j] * x[j]).sum())
        .collect()
}

/// h' = (1 − z)·h + z·h̃.
pub fn ref_gru(p: &GruParams, x: &[f64], h: &[f64]) -> Vec<f64> {
    let n = h.len();
    let (wz, uz) = (affine(&p.w_z, x), affine(&p.u_z, h));
    let (wr, ur) = (affine(&p.w_r, x), affine(&p.u_r, h));
    let z: Vec<f64> = (0..n).map(|i| sigmoid(wz[i] + uz[i] + p.b_z.values()[i])).collect();
    let r: Vec<f64> = (0..n).map(|i| sigmoid(wr[i] + ur[i] + p.b_r.values()[i])).collect();
    let rh: Vec<f64> = (0..n).map(|i| r[i] * h[i]).collect();
    let (wh, uh) = (affine(&p.w_h, x), affine(&p.u_h, &rh));
    (0..n)
        .map(|i| {
            let cand = (wh[i] + uh[i] + p.b_h.values()[i]).tanh();
            (1.0 - z[i]) * h[i] + z[i] * cand
        })
        .collect()
}

pub fn ref_sentence(t: &Teacher, s: &[TokenId]) -> Vec<f64> {
    let d = t.embedding.shape()[1];
    let mut v = vec![0.0; d];
    for &tok in s {
        for (k, x) in v.iter_mut().enumerate() {
            *x += t.embedding.values()[tok as usize * d + k];
        }
    }
    v
}

pub fn ref_encode(t: &Teacher, sentences: &[&[TokenId]]) -> Vec<f64> {
    let mut h = vec![0.0; t.gru.b_z.len()];
    for s in sentences {
        h = ref_gru(&t.gru, &ref_sentence(t, s), &h);
    }
    h
}

pub fn ref_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

fn ordering_term(t: &Teacher, gen: &[Vec<TokenId>], gold: &[Vec<TokenId>]) -> f64 {
    let g: Vec<&[TokenId]> = gen.iter().map(|s| s.as_slice()).collect();
    let f: Vec<&[TokenId]> = gold.iter().map(|s| s.as_slice()).collect();
    let r: Vec<&[TokenId]> = gold.iter().rev().map(|s| s.as_slice()).collect();
    let eg = ref_encode(t, &g);
    ref_cosine(&eg, &ref_encode(t, &f)) - ref_cosine(&eg, &ref_encode(t, &r))
}

pub fn ref_reward_absolute(t: &Teacher, gen: &SegmentedDoc, gold: &SegmentedDoc) -> f64 {
    ordering_term(t, &gen.sentences, &gold.sentences)
}

/// Enumerates every (j, ℓ) window explicitly.
pub fn ref_reward_relative(t: &Teacher, gen: &SegmentedDoc, gold: &SegmentedDoc, l_min: usize, l_max: usize) -> Vec<f64> {
    let n_terms = (l_max - l_min + 1) as f64;
    (0..gen.len())
        .map(|j| {
            if j >= gold.len() {
                return 0.0;
            }
            let mut acc = 0.0;
            for l in l_min..=l_max {
                let start = (j + 1).saturating_sub(l);
                let len = j + 1 - start;
                if len == 1 {
                    continue;
                }
                acc += ordering_term(t, &gen.sentences[start..=j], &gold.sentences[start..=j]);
            }
            acc / n_terms
        })
        .collect()
}

/// Splits at delimiters, merging delimiter-only groups into the previous
/// content group (or the next one when none precedes).
pub fn ref_token_sentences(tokens: &[TokenId], delims: &[TokenId]) -> (Vec<usize>, usize) {
    let body_len = if tokens.last() == Some(&Vocab::EOS_ID) { tokens.len() - 1 } else { tokens.len() };
    let mut groups: Vec<(usize, bool)> = Vec::new(); // (length, has content)
    let mut cur = (0usize, false);
    for t in &tokens[..body_len] {
        cur.0 += 1;
        if delims.contains(t) {
            groups.push(cur);
            cur = (0, false);
        } else {
            cur.1 = true;
        }
    }
    if cur.0 > 0 {
        groups.push(cur);
    }
    let n_content = groups.iter().filter(|g| g.1).count();
    let mut out = Vec::new();
    let mut seen = 0usize;
    for (len, content) in &groups {
        if *content {
            seen += 1;
        }
        let idx = seen.saturating_sub(1);
        out.extend(std::iter::repeat_n(idx, *len));
    }
    if body_len < tokens.len() {
        out.push(n_content.saturating_sub(1));
    }
    (out, n_content.max(1))
}

// ---- metric oracles by direct counting ----

fn count_window<T: PartialEq>(seq: &[T], gram: &[T]) -> usize {
    if seq.len() < gram.len() {
        return 0;
    }
    (0..=seq.len() - gram.len()).filter(|&i| &seq[i..i + gram.len()] == gram).count()
}

/// Clipped n-gram matches by scanning every candidate position.
pub fn ref_clipped_matches<T: PartialEq>(cand: &[T], reference: &[T], k: usize) -> (usize, usize) {
    if cand.len() < k {
        return (0, 0);
    }
    let mut matches = 0;
    for i in 0..=cand.len() - k {
        let g = &cand[i..i + k];
        let first = (0..i).all(|p| &cand[p..p + k] != g);
        if first {
            matches += count_window(cand, g).min(count_window(reference, g));
        }
    }
    (matches, cand.len() - k + 1)
}

pub fn ref_bleu<T: PartialEq>(cand: &[T], reference: &[T], n: usize) -> f64 {
    if cand.is_empty() {
        return 0.0;
    }
    let mut product = 1.0;
    for k in 1..=n {
        let (m, c) = ref_clipped_matches(cand, reference, k);
        let (m, c) = if k >= 2 { (m + 1, c + 1) } else { (m, c) };
        if m == 0 {
            return 0.0;
        }
        product *= m as f64 / c as f64;
    }
    let bp = if cand.len() > reference.len() {
        1.0
    } else {
        (1.0 - reference.len() as f64 / cand.len() as f64).exp()
    };
    bp * product.powf(1.0 / n as f64)
}

/// LCS by enumerating candidate subsequences (exponential; short inputs only).
pub fn ref_lcs_brute<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    assert!(a.len() <= 16);
    let is_subseq = |mask: u32| {
        let mut j = 0;
        for (i, x) in a.iter().enumerate() {
            if mask >> i & 1 == 1 {
                while j < b.len() && &b[j] != x {
                    j += 1;
                }
                if j == b.len() {
                    return false;
                }
                j += 1;
            }
        }
        true
    };
    (0u32..1 << a.len())
        .filter(|&m| is_subseq(m))
        .map(|m| m.count_ones() as usize)
        .max()
        .unwrap_or(0)
}

pub fn ref_rouge_l<T: PartialEq>(cand: &[T], reference: &[T]) -> f64 {
    let l = ref_lcs_brute(cand, reference) as f64;
    if l == 0.0 {
        return 0.0;
    }
    let (p, r) = (l / cand.len() as f64, l / reference.len() as f64);
    2.0 * p * r / (p + r)
}

pub fn random_tokens(rng: &mut ChaCha8Rng, alphabet: u32, max_len: usize) -> Vec<u32> {
    let n = rng.gen_range(0..=max_len);
    (0..n).map(|_| rng.gen_range(0..alphabet)).collect()
}

