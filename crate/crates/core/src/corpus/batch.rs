use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{EncodedRecipe, TokenId, Vocab};

/// A padded minibatch. Masks are 1 on real tokens and 0 on padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// Positions of the member records in the source corpus.
    pub indices: Vec<usize>,
    pub title_ids: Vec<Vec<TokenId>>,
    pub title_mask: Vec<Vec<u8>>,
    pub title_lens: Vec<usize>,
    /// `[record][phrase][token]`, padded on both inner axes.
    pub ingredient_ids: Vec<Vec<Vec<TokenId>>>,
    pub ingredient_mask: Vec<Vec<Vec<u8>>>,
    pub ingredient_counts: Vec<usize>,
    pub body_ids: Vec<Vec<TokenId>>,
    pub body_mask: Vec<Vec<u8>>,
    pub body_lens: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    fn assemble(corpus: &[EncodedRecipe], indices: Vec<usize>) -> Batch {
        let pad = |seqs: Vec<&[TokenId]>, width: usize| -> (Vec<Vec<TokenId>>, Vec<Vec<u8>>) {
            seqs.iter()
                .map(|s| {
                    let mut ids = s.to_vec();
                    let mut mask = vec![1u8; s.len()];
                    ids.resize(width, Vocab::PAD_ID);
                    mask.resize(width, 0);
                    (ids, mask)
                })
                .unzip()
        };
        let recs: Vec<&EncodedRecipe> = indices.iter().map(|&i| &corpus[i]).collect();

        let title_lens: Vec<usize> = recs.iter().map(|r| r.title.len()).collect();
        let (title_ids, title_mask) = pad(
            recs.iter().map(|r| r.title.as_slice()).collect(),
            title_lens.iter().copied().max().unwrap_or(0),
        );

        let body_lens: Vec<usize> = recs.iter().map(|r| r.body.len()).collect();
        let (body_ids, body_mask) = pad(
            recs.iter().map(|r| r.body.as_slice()).collect(),
            body_lens.iter().copied().max().unwrap_or(0),
        );

        let ingredient_counts: Vec<usize> = recs.iter().map(|r| r.ingredients.len()).collect();
        let max_ings = ingredient_counts.iter().copied().max().unwrap_or(0);
        let max_phrase = recs
            .iter()
            .flat_map(|r| r.ingredients.iter().map(Vec::len))
            .max()
            .unwrap_or(0);
        let mut ingredient_ids = Vec::with_capacity(recs.len());
        let mut ingredient_mask = Vec::with_capacity(recs.len());
        for r in &recs {
            let mut phrases: Vec<&[TokenId]> = r.ingredients.iter().map(Vec::as_slice).collect();
            phrases.resize(max_ings, &[]);
            let (ids, mask) = pad(phrases, max_phrase);
            ingredient_ids.push(ids);
            ingredient_mask.push(mask);
        }

        Batch {
            indices,
            title_ids,
            title_mask,
            title_lens,
            ingredient_ids,
            ingredient_mask,
            ingredient_counts,
            body_ids,
            body_mask,
            body_lens,
        }
    }
}

/// Buckets records by (body length, ingredient count) so padding stays small,
/// chunks them into batches of at most `size`, then shuffles batch order.
/// Ties inside a bucket are broken by a seeded shuffle.
pub fn make_batches(corpus: &[EncodedRecipe], size: usize, seed: u64) -> Vec<Batch> {
    let size = size.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut rng);
    // Stable sort keeps the shuffled order within equal keys.
    order.sort_by_key(|&i| (corpus[i].body.len(), corpus[i].ingredients.len()));
    let mut batches: Vec<Batch> = order
        .chunks(size)
        .map(|c| Batch::assemble(corpus, c.to_vec()))
        .collect();
    batches.shuffle(&mut rng);
    batches
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(body_len: usize, ings: usize) -> EncodedRecipe {
        EncodedRecipe {
            title: vec![5, 6],
            ingredients: (0..ings).map(|i| vec![7; i + 1]).collect(),
            body: vec![9; body_len],
        }
    }

    #[test]
    fn identical_lengths_fill_batches() {
        let corpus: Vec<_> = (0..64).map(|_| rec(10, 2)).collect();
        let b = make_batches(&corpus, 32, 0);
        assert_eq!(b.len(), 2);
        assert!(b.iter().all(|x| x.len() == 32));
    }

    #[test]
    fn single_record() {
        let b = make_batches(&[rec(3, 1)], 32, 0);
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].len(), 1);
    }

    #[test]
    fn masks_mark_padding_exactly() {
        let corpus = vec![rec(2, 1), rec(5, 3), rec(4, 0)];
        let b = make_batches(&corpus, 8, 3);
        let b = &b[0];
        for (k, &i) in b.indices.iter().enumerate() {
            let r = &corpus[i];
            assert_eq!(b.body_lens[k], r.body.len());
            assert_eq!(b.body_mask[k].iter().filter(|&&m| m == 1).count(), r.body.len());
            assert_eq!(&b.body_ids[k][..r.body.len()], r.body.as_slice());
            assert!(b.body_ids[k][r.body.len()..].iter().all(|&t| t == Vocab::PAD_ID));
            assert_eq!(b.body_ids[k].len(), 5);
            for (p, mask) in b.ingredient_mask[k].iter().enumerate() {
                let real = r.ingredients.get(p).map_or(0, Vec::len);
                assert_eq!(mask.iter().map(|&m| m as usize).sum::<usize>(), real);
            }
        }
    }

    #[test]
    fn deterministic_and_covering() {
        let corpus: Vec<_> = (0..50).map(|i| rec(i % 7 + 1, i % 3)).collect();
        let a = make_batches(&corpus, 8, 11);
        let b = make_batches(&corpus, 8, 11);
        assert_eq!(a, b);
        let mut all: Vec<usize> = a.iter().flat_map(|x| x.indices.clone()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..50).collect::<Vec<_>>());
    }
}
