//! Seeded generator for scripted recipes whose sentences follow a fixed stage
//! order (prep → combine → heat → finish in the default grammar).

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::RecipeRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub name: String,
    /// Sentence templates; `{ing}`, `{ing2}` and `{n}` are filled per recipe.
    pub templates: Vec<String>,
    pub min_sentences: usize,
    pub max_sentences: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grammar {
    pub stages: Vec<Stage>,
    /// (ingredient phrase, head word used in the body).
    pub ingredients: Vec<(String, String)>,
    pub dishes: Vec<String>,
    pub min_ingredients: usize,
    pub max_ingredients: usize,
    pub numbers: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticRecipe {
    pub record: RecipeRecord,
    /// Stage index of every body sentence, in body order.
    pub stages: Vec<usize>,
}

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

impl Grammar {
    /// Four ordered cooking stages with five templates each.
    pub fn kitchen() -> Self {
        let stage = |name: &str, templates: &[&str]| Stage {
            name: name.to_string(),
            templates: strings(templates),
            min_sentences: 1,
            max_sentences: 2,
        };
        Grammar {
            stages: vec![
                stage(
                    "prep",
                    &[
                        "chop the {ing} .",
                        "wash the {ing} .",
                        "peel and dice the {ing} .",
                        "slice the {ing} thinly .",
                        "rinse the {ing} well .",
                    ],
                ),
                stage(
                    "combine",
                    &[
                        "add the {ing} to a bowl .",
                        "mix the {ing} and {ing2} .",
                        "stir in the {ing} .",
                        "combine the {ing} with the {ing2} .",
                        "whisk the {ing} until smooth .",
                    ],
                ),
                stage(
                    "heat",
                    &[
                        "bake for {n} minutes .",
                        "simmer the mixture for {n} minutes .",
                        "heat the {ing} in a pan .",
                        "boil the {ing} until tender .",
                        "fry the mixture in oil .",
                    ],
                ),
                stage(
                    "finish",
                    &[
                        "serve warm .",
                        "garnish with {ing} .",
                        "cool and serve .",
                        "top with {ing} and serve .",
                        "season to taste .",
                    ],
                ),
            ],
            ingredients: [
                ("2 cups flour", "flour"),
                ("1 onion, chopped", "onion"),
                ("3 carrots", "carrots"),
                ("butter", "butter"),
                ("1 cup milk", "milk"),
                ("2 eggs", "eggs"),
                ("cheddar cheese", "cheese"),
                ("fresh tomatoes", "tomatoes"),
                ("garlic cloves", "garlic"),
                ("potatoes", "potatoes"),
                ("chicken breasts", "chicken"),
                ("rice", "rice"),
                ("sugar", "sugar"),
                ("lemon juice", "lemon"),
                ("mushrooms", "mushrooms"),
                ("spinach", "spinach"),
            ]
            .iter()
            .map(|(p, h)| (p.to_string(), h.to_string()))
            .collect(),
            dishes: strings(&["soup", "casserole", "salad", "stew", "pie", "gratin", "skillet", "pasta"]),
            min_ingredients: 2,
            max_ingredients: 4,
            numbers: vec![5, 10, 15, 20, 30],
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> SyntheticRecipe {
        let k = rng.gen_range(self.min_ingredients..=self.max_ingredients.max(self.min_ingredients));
        let picked: Vec<&(String, String)> = self.ingredients.choose_multiple(rng, k).collect();
        let heads: Vec<&str> = picked.iter().map(|(_, h)| h.as_str()).collect();
        let dish = self.dishes.choose(rng).map_or("dish", String::as_str);
        let title = format!("{} {dish}", heads.first().copied().unwrap_or("house"));

        let mut body = Vec::new();
        let mut stages = Vec::new();
        for (si, stage) in self.stages.iter().enumerate() {
            let n = rng.gen_range(stage.min_sentences..=stage.max_sentences.max(stage.min_sentences));
            for tpl in stage.templates.choose_multiple(rng, n) {
                let ing = heads.choose(rng).copied().unwrap_or("water");
                let ing2 = heads
                    .iter()
                    .copied()
                    .filter(|h| *h != ing)
                    .collect::<Vec<_>>()
                    .choose(rng)
                    .copied()
                    .unwrap_or("water");
                let num = self.numbers.choose(rng).copied().unwrap_or(10);
                body.push(
                    tpl.replace("{ing2}", ing2)
                        .replace("{ing}", ing)
                        .replace("{n}", &num.to_string()),
                );
                stages.push(si);
            }
        }
        let phrases: Vec<&str> = picked.iter().map(|(p, _)| p.as_str()).collect();
        let record = RecipeRecord::from_text(&title, &phrases, &body.join(" "))
            .expect("grammar stages produce a nonempty body");
        SyntheticRecipe { record, stages }
    }
}

/// Generates `n_recipes` distinct recipes. Bitwise reproducible for a seed.
/// Stops early if the grammar cannot produce enough distinct recipes.
pub fn generate_synthetic_corpus(seed: u64, n_recipes: usize, grammar: &Grammar) -> Vec<SyntheticRecipe> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n_recipes);
    let mut attempts = 0usize;
    while out.len() < n_recipes && attempts < n_recipes.saturating_mul(50) + 100 {
        attempts += 1;
        let r = grammar.sample(&mut rng);
        if seen.insert(r.record.clone()) {
            out.push(r);
        }
    }
    out
}

/// Splits off the last `n_dev` recipes; records are distinct so the halves are disjoint.
pub fn split_train_dev<T: Clone>(items: &[T], n_dev: usize) -> (Vec<T>, Vec<T>) {
    let cut = items.len().saturating_sub(n_dev);
    (items[..cut].to_vec(), items[cut..].to_vec())
}
