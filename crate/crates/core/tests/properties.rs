mod common;

use proptest::prelude::*;

use common::*;
use discourse::corpus::{SegmentedDoc, TokenId, Vocab};
use discourse::evaluation::{bleu, rouge_l};
use discourse::generator::{BagMode, DecodeResult};
use discourse::policy::{
    advantages, assign_credit, reward_absolute, reward_relative, segment_generation, train_policy, PolicyConfig,
    RewardKind,
};
use discourse::seeding::stream;
use discourse::tape::{log_softmax_pick, softmax};
use discourse::teacher::{Teacher, TeacherKind};
use discourse::tensor::Parameterized;

const V: usize = 14;
const DELIM: TokenId = 4;

fn doc_strategy(max_sentences: usize) -> impl Strategy<Value = SegmentedDoc> {
    prop::collection::vec(prop::collection::vec(5..V as TokenId, 1..5), 1..=max_sentences).prop_map(SegmentedDoc::new)
}

fn decode_strategy() -> impl Strategy<Value = Vec<TokenId>> {
    (
        prop::collection::vec(prop_oneof![Just(DELIM), 5..V as TokenId], 0..25),
        any::<bool>(),
    )
        .prop_map(|(mut t, eos)| {
            if eos {
                t.push(Vocab::EOS_ID);
            }
            t
        })
}

fn teacher(kind: TeacherKind, seed: u64) -> Teacher {
    tiny_teacher(kind, V, seed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ordering_rewards_are_bounded(seed in 0u64..1000, gen in doc_strategy(6), gold in doc_strategy(6), l_min in 1usize..4, extra in 0usize..3) {
        let t = teacher(TeacherKind::Absolute, seed);
        let a = reward_absolute(&t, &gen, &gold).unwrap();
        prop_assert!((-2.0..=2.0).contains(&a));
        let rel = reward_relative(&t, &gen, &gold, l_min, l_min + extra).unwrap();
        prop_assert_eq!(rel.len(), gen.len());
        for r in rel {
            prop_assert!((-2.0..=2.0).contains(&r));
        }
    }

    #[test]
    fn single_sentence_gold_gives_zero(seed in 0u64..1000, gen in doc_strategy(5), gold in doc_strategy(1)) {
        let t = teacher(TeacherKind::Absolute, seed);
        prop_assert_eq!(reward_absolute(&t, &gen, &gold).unwrap(), 0.0);
    }

    #[test]
    fn identical_documents_score_nonnegative(seed in 0u64..1000, doc in doc_strategy(6)) {
        let t = teacher(TeacherKind::Relative, seed);
        prop_assert!(reward_absolute(&t, &doc, &doc).unwrap() >= -1e-12);
        for r in reward_relative(&t, &doc, &doc, 2, 4).unwrap() {
            prop_assert!(r >= -1e-12);
        }
    }

    #[test]
    fn sentences_past_gold_end_score_zero(seed in 0u64..1000, gen in doc_strategy(6), gold in doc_strategy(3)) {
        let t = teacher(TeacherKind::Relative, seed);
        let rel = reward_relative(&t, &gen, &gold, 1, 3).unwrap();
        for r in &rel[gold.len().min(rel.len())..] {
            prop_assert_eq!(*r, 0.0);
        }
        // The first sentence only ever sees a length-1 window.
        prop_assert_eq!(rel[0], 0.0);
    }

    #[test]
    fn segmentation_invariants(tokens in decode_strategy()) {
        let seg = segment_generation(&tokens, &[DELIM]);
        prop_assert_eq!(seg.token_sentence.len(), tokens.len());
        prop_assert!(seg.n_sentences >= 1);
        prop_assert!(seg.token_sentence.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(seg.token_sentence.iter().all(|&j| j < seg.n_sentences));
        prop_assert_eq!(seg.n_sentences, seg.doc.len().max(1));
        let (want, n) = ref_token_sentences(&tokens, &[DELIM]);
        prop_assert_eq!(seg.token_sentence, want);
        prop_assert_eq!(seg.n_sentences, n);
    }

    #[test]
    fn credit_partitions_exactly(tokens in decode_strategy(), seed in any::<u64>()) {
        use rand::Rng;
        let seg = segment_generation(&tokens, &[DELIM]);
        let mut r = stream(seed, &[]);
        let sent: Vec<f64> = (0..seg.n_sentences).map(|_| r.gen_range(-2.0..2.0)).collect();
        let rel = assign_credit(&seg.token_sentence, Some(&sent), None);
        let mut counts = vec![0usize; seg.n_sentences];
        for (t, &j) in seg.token_sentence.iter().enumerate() {
            prop_assert_eq!(rel[t].to_bits(), sent[j].to_bits());
            counts[j] += 1;
        }
        let lhs: f64 = rel.iter().sum();
        let rhs: f64 = counts.iter().zip(&sent).map(|(&l, &s)| l as f64 * s).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-12);

        let q = r.gen_range(-1.0..1.0);
        let abs = assign_credit(&seg.token_sentence, None, Some(q));
        prop_assert!(abs.iter().all(|x| x.to_bits() == q.to_bits()));
        prop_assert!((abs.iter().sum::<f64>() - tokens.len() as f64 * q).abs() <= 1e-12);
    }

    #[test]
    fn equal_traces_have_zero_advantage(r in prop::collection::vec(-2.0f64..2.0, 0..20)) {
        prop_assert!(advantages(&r, &r).iter().all(|&a| a == 0.0));
    }

    #[test]
    fn bag_of_words_ignores_order(seed in 0u64..1000, mut s in prop::collection::vec(5..V as TokenId, 1..8), rot in 0usize..8) {
        let t = teacher(TeacherKind::Relative, seed);
        let a = t.sentence_vector(&s).unwrap();
        let k = rot % s.len();
        s.rotate_left(k);
        s.reverse();
        let b = t.sentence_vector(&s).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn generator_bags_ignore_order(seed in 0u64..200) {
        let p = tiny_generator(V, BagMode::Mean, seed);
        let mut r = rng(seed);
        let recipe = random_recipe(&mut r, V, DELIM, 6);
        let mut shuffled = recipe.clone();
        shuffled.title.reverse();
        for ph in &mut shuffled.ingredients {
            ph.reverse();
        }
        let a = p.encode(&recipe).unwrap();
        let b = p.encode(&shuffled).unwrap();
        for (x, y) in a.he.iter().zip(&b.he) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn metrics_are_bounded(a in prop::collection::vec(0u32..5, 0..15), b in prop::collection::vec(0u32..5, 0..15)) {
        for s in [bleu(&a, &b, 1), bleu(&a, &b, 4), rouge_l(&a, &b)] {
            prop_assert!((0.0..=1.0).contains(&s));
        }
        prop_assert_eq!(rouge_l(&a, &b), rouge_l(&b, &a));
    }

    #[test]
    fn softmax_is_a_distribution(x in prop::collection::vec(-30.0f64..30.0, 1..10), beta in 0.1f64..5.0) {
        let p = softmax(&x, beta);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let (lp, q) = log_softmax_pick(&x, 0, beta);
        prop_assert!((lp.exp() - p[0]).abs() < 1e-12);
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn huge_temperature_sampling_is_greedy(seed in 0u64..100) {
        let p = tiny_generator(V, BagMode::Mean, seed);
        let mut r = rng(seed);
        let ctx = p.encode(&random_recipe(&mut r, V, DELIM, 4)).unwrap();
        let g: DecodeResult = p.greedy_decode(&ctx, 20);
        let s = p.sample_decode(&ctx, 1e6, 20, &mut stream(seed, &[9])).unwrap();
        prop_assert_eq!(g.tokens, s.tokens);
    }
}

#[test]
fn teachers_are_unchanged_by_policy_training() {
    let mut r = rng(77);
    let rel = teacher(TeacherKind::Relative, 1);
    let abs = teacher(TeacherKind::Absolute, 2);
    let before = (rel.checksum(), abs.checksum());
    let gen = tiny_generator(V, BagMode::Mean, 3);
    let train: Vec<_> = (0..4).map(|_| random_recipe(&mut r, V, DELIM, 8)).collect();
    let dev: Vec<_> = (0..2).map(|_| random_recipe(&mut r, V, DELIM, 8)).collect();
    for kind in [RewardKind::Ro, RewardKind::Ao, RewardKind::RoB4] {
        let cfg = PolicyConfig {
            kind,
            epochs: 1,
            batch_size: 2,
            max_len: 10,
            lr: 1e-2,
            seed: 5,
            ..PolicyConfig::default()
        };
        let run = train_policy(&gen, Some(&abs), Some(&rel), &[DELIM], &train, &dev, &cfg, |_| {}).unwrap();
        assert_ne!(run.final_params.checksum(), gen.checksum());
    }
    assert_eq!((rel.checksum(), abs.checksum()), before);
}

#[test]
fn invariant_suite_holds() {
    for (name, ok) in common::suites::invariant_cases(100) {
        assert!(ok, "{name}");
    }
}
